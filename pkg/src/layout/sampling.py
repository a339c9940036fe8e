"""
Graph sampling - Sparse candidate-edge graphs over the text boxes of a page.

Three strategies:
- directional: nearest boxes left/right/above/below within overlapping bands
- knn: k nearest box centers
- beta-skeleton: lune-based proximity graph on box centers (beta=1 is Gabriel)

Every sampler is a pure deterministic function; all ties are broken by the
lower node id.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import InvalidBeta, InvalidConfig, MissingLabels
from layout.doc_model import GoldLabels, NormBox, boxes_to_array

logger = logging.getLogger(__name__)

STRATEGIES = ('directional', 'knn', 'beta')


@dataclass(frozen=True)
class SampledGraph:
    """Undirected candidate graph; edges are (i, j) with i < j, sorted."""

    n_nodes: int
    edges: Tuple[Tuple[int, int], ...]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def as_array(self) -> np.ndarray:
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(self.edges, dtype=np.int64)

    def neighbors(self) -> List[List[int]]:
        """Adjacency lists in ascending id order."""
        adj: List[List[int]] = [[] for _ in range(self.n_nodes)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        for lst in adj:
            lst.sort()
        return adj


@dataclass(frozen=True)
class DirectionalConfig:
    horizontal_k: int = 1
    vertical_k: int = 2
    band_overlap_min: float = 0.0

    def __post_init__(self):
        if self.horizontal_k < 1 or self.vertical_k < 1:
            raise InvalidConfig("directional sampler needs horizontal_k >= 1 and vertical_k >= 1")
        if not 0.0 <= self.band_overlap_min <= 1.0:
            raise InvalidConfig("band_overlap_min must lie in [0, 1]")


def canonicalize(n_nodes: int, pairs: Iterable[Tuple[int, int]]) -> SampledGraph:
    """Drop self-loops and duplicates, orient i < j, and sort."""
    edges = set()
    for i, j in pairs:
        i, j = int(i), int(j)
        if i == j:
            continue
        edges.add((i, j) if i < j else (j, i))
    return SampledGraph(n_nodes, tuple(sorted(edges)))


def _overlap(lo: np.ndarray, hi: np.ndarray, i: int) -> np.ndarray:
    return np.maximum(0.0, np.minimum(hi, hi[i]) - np.maximum(lo, lo[i]))


def sample_directional(boxes: Sequence[NormBox], cfg: Optional[DirectionalConfig] = None) -> SampledGraph:
    """
    Pick the nearest boxes in four directions for every box.

    LEFT/RIGHT candidates overlap the pivot on the y axis by more than
    band_overlap_min * min(h_i, h_j); ABOVE/BELOW candidates likewise on the
    x axis. Candidates are ranked by edge-to-edge gap, then center distance,
    then id; horizontal_k are kept per horizontal side, vertical_k per
    vertical side.

    Args:
        boxes: Normalized boxes in id order
        cfg: Sampler configuration

    Returns:
        Canonical undirected graph
    """
    cfg = cfg or DirectionalConfig()
    n = len(boxes)
    if n < 2:
        return SampledGraph(n, ())

    arr = boxes_to_array(boxes)
    xmin, ymin, xmax, ymax = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
    xc = (xmin + xmax) / 2.0
    yc = (ymin + ymax) / 2.0
    w = xmax - xmin
    h = ymax - ymin
    ids = np.arange(n)

    pairs = []
    for i in range(n):
        dist = np.hypot(xc - xc[i], yc - yc[i])
        y_band = _overlap(ymin, ymax, i) > cfg.band_overlap_min * np.minimum(h, h[i])
        x_band = _overlap(xmin, xmax, i) > cfg.band_overlap_min * np.minimum(w, w[i])
        not_self = ids != i

        directions = (
            (y_band & (xc < xc[i]), np.maximum(0.0, xmin[i] - xmax), cfg.horizontal_k),
            (y_band & (xc > xc[i]), np.maximum(0.0, xmin - xmax[i]), cfg.horizontal_k),
            (x_band & (yc < yc[i]), np.maximum(0.0, ymin[i] - ymax), cfg.vertical_k),
            (x_band & (yc > yc[i]), np.maximum(0.0, ymin - ymax[i]), cfg.vertical_k),
        )
        for mask, gap, k in directions:
            cand = ids[mask & not_self]
            if cand.size == 0:
                continue
            order = np.lexsort((cand, dist[cand], gap[cand]))
            pairs.extend((i, int(j)) for j in cand[order[:k]])

    return canonicalize(n, pairs)


def _centers(boxes: Sequence[NormBox]) -> np.ndarray:
    arr = boxes_to_array(boxes)
    return np.stack([(arr[:, 0] + arr[:, 2]) / 2.0, (arr[:, 1] + arr[:, 3]) / 2.0], axis=1)


def knn_pairs(points: np.ndarray, k: int) -> List[Tuple[int, int]]:
    """Directed (i, j) picks of the k nearest points by Euclidean distance, ties by id."""
    n = points.shape[0]
    if n < 2:
        return []
    diff = points[:, None, :] - points[None, :, :]
    d2 = np.einsum('ijk,ijk->ij', diff, diff)
    ids = np.arange(n)
    pairs = []
    for i in range(n):
        others = ids[ids != i]
        order = np.lexsort((others, d2[i, others]))
        pairs.extend((i, int(j)) for j in others[order[:k]])
    return pairs


def sample_knn(boxes: Sequence[NormBox], k: int) -> SampledGraph:
    """Connect every box to its k nearest box centers (all others when N-1 < k)."""
    if k < 1:
        raise InvalidConfig(f"knn sampler needs k >= 1, got {k}")
    return canonicalize(len(boxes), knn_pairs(_centers(boxes), k))


def sample_beta_skeleton(boxes: Sequence[NormBox], beta: float = 1.0) -> SampledGraph:
    """
    Lune-based beta-skeleton on box centers, beta in (0, 1].

    For beta = 1 an edge survives when no third center lies strictly inside
    the disk with diameter (c_i, c_j). For beta < 1 the blocking region is the
    intersection of the two disks of radius d / (2 beta) whose boundaries pass
    through both endpoints. Points on the boundary never block.
    """
    if not 0.0 < beta <= 1.0:
        raise InvalidBeta(f"beta must lie in (0, 1], got {beta}")

    pts = _centers(boxes)
    n = pts.shape[0]
    pairs = []
    for i in range(n - 1):
        for j in range(i + 1, n):
            a, b = pts[i], pts[j]
            others = np.delete(pts, [i, j], axis=0)
            if others.shape[0] == 0:
                pairs.append((i, j))
                continue
            # strictly inside the diameter disk: angle a-p-b is obtuse
            in_disk = np.einsum('ij,ij->i', others - a, others - b) < 0.0
            if beta < 1.0 and in_disk.any():
                d = b - a
                d2 = float(d @ d)
                r2 = d2 / (4.0 * beta * beta)
                offset = np.sqrt(max(r2 - d2 / 4.0, 0.0))
                normal = np.array([-d[1], d[0]]) / np.sqrt(d2)
                mid = (a + b) / 2.0
                c1 = mid + offset * normal
                c2 = mid - offset * normal
                in_lune = (np.sum((others - c1) ** 2, axis=1) < r2) & (np.sum((others - c2) ** 2, axis=1) < r2)
                blocked = (in_disk & in_lune).any()
            else:
                blocked = in_disk.any()
            if not blocked:
                pairs.append((i, j))
    return canonicalize(n, pairs)


def sample_graph(boxes: Sequence[NormBox], strategy: str = 'directional', **params) -> SampledGraph:
    """
    Dispatch to a sampling strategy.

    Args:
        boxes: Normalized boxes in id order
        strategy: 'directional', 'knn' or 'beta'
        **params: horizontal_k / vertical_k / band_overlap_min, k, or beta

    Returns:
        Canonical undirected graph
    """
    if strategy == 'directional':
        cfg = DirectionalConfig(
            horizontal_k=int(params.get('horizontal_k', 1)),
            vertical_k=int(params.get('vertical_k', 2)),
            band_overlap_min=float(params.get('band_overlap_min', 0.0)),
        )
        return sample_directional(boxes, cfg)
    if strategy == 'knn':
        return sample_knn(boxes, int(params.get('k', 6)))
    if strategy == 'beta':
        return sample_beta_skeleton(boxes, float(params.get('beta', 1.0)))
    raise InvalidConfig(f"unknown sampling strategy '{strategy}', expected one of {STRATEGIES}")


def _is_connected(members: Sequence[int], adj: Dict[int, set]) -> bool:
    if len(members) <= 1:
        return True
    allowed = set(members)
    seen = {members[0]}
    queue = deque([members[0]])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v in allowed and v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(allowed)


def sampler_recall(graph: SampledGraph, gold: Optional[GoldLabels]) -> Tuple[float, Optional[float]]:
    """
    How much of the gold structure the sampled graph can express.

    Returns:
        (group_connectivity, link_coverage): the fraction of gold groups whose
        members induce a connected subgraph, and the fraction of gold links
        with at least one member-to-member pair among the sampled edges
        (None when the page has no links)
    """
    if gold is None:
        raise MissingLabels("sampler_recall needs gold labels")

    adj: Dict[int, set] = {}
    for i, j in graph.edges:
        adj.setdefault(i, set()).add(j)
        adj.setdefault(j, set()).add(i)

    groups = [tuple(g) for g in gold.groups]
    connected = sum(1 for g in groups if _is_connected(g, adj))
    group_connectivity = connected / len(groups) if groups else 1.0

    if not gold.links:
        return group_connectivity, None

    edge_set = set(graph.edges)
    covered = 0
    for src, dst in gold.links:
        if any((min(a, b), max(a, b)) in edge_set for a in groups[src] for b in groups[dst]):
            covered += 1
    return group_connectivity, covered / len(gold.links)


def missing_group_pairs(graph: SampledGraph, gold: GoldLabels, boxes: Sequence[NormBox]) -> List[Tuple[int, int]]:
    """
    Pairs that would reconnect each disconnected gold group.

    For every group whose induced subgraph falls apart, each component after
    the first is linked to the first by its closest center pair.
    """
    adj: Dict[int, set] = {}
    for i, j in graph.edges:
        adj.setdefault(i, set()).add(j)
        adj.setdefault(j, set()).add(i)

    centers = _centers(boxes)
    missing = []
    for members in gold.groups:
        members = sorted(members)
        if _is_connected(members, adj):
            continue
        allowed = set(members)
        components = []
        unseen = list(members)
        while unseen:
            start = unseen[0]
            comp = {start}
            queue = deque([start])
            while queue:
                u = queue.popleft()
                for v in adj.get(u, ()):
                    if v in allowed and v not in comp:
                        comp.add(v)
                        queue.append(v)
            components.append(sorted(comp))
            unseen = [m for m in unseen if m not in comp]
        first = components[0]
        for comp in components[1:]:
            best = min(
                ((float(np.sum((centers[a] - centers[b]) ** 2)), a, b) for a in first for b in comp),
            )
            missing.append((best[1], best[2]))
    return missing
