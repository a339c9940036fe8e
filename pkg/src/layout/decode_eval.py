"""
Decode & evaluate - Connected components into layout instances, and scoring.

Scores:
- precision / recall / F1 for node classification (multi-class) and edge
  classification (binary, positive class)
- COCO-style mAP over IoU thresholds 0.50:0.05:0.95 with 101-point
  interpolated precision
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import LengthMismatch
from layout.doc_model import NormBox, min_bounding_rect

logger = logging.getLogger(__name__)

COCO_IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * t, 2) for t in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class LayoutInstance:
    member_ids: Tuple[int, ...]
    bbox: NormBox
    category: int
    score: float


@dataclass
class MatchResult:
    """Counts behind a precision/recall/F1 report."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    per_class: Dict[int, 'MatchResult'] = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_dict(self) -> Dict:
        out = {
            'tp': self.tp, 'fp': self.fp, 'fn': self.fn,
            'precision': self.precision, 'recall': self.recall, 'f1': self.f1,
        }
        if self.per_class:
            out['per_class'] = {str(c): m.to_dict() for c, m in sorted(self.per_class.items())}
        return out


class UnionFind:
    """Disjoint sets with path compression and union by rank."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int):
        px, py = self.find(x), self.find(y)
        if px == py:
            return
        if self.rank[px] < self.rank[py]:
            px, py = py, px
        self.parent[py] = px
        if self.rank[px] == self.rank[py]:
            self.rank[px] += 1


def connected_components(n: int, positive_edges) -> List[Tuple[int, ...]]:
    """Undirected components as sorted id tuples, ordered by smallest member."""
    uf = UnionFind(n)
    for i, j in positive_edges:
        uf.union(int(i), int(j))
    comps: Dict[int, List[int]] = {}
    for node in range(n):
        comps.setdefault(uf.find(node), []).append(node)
    return sorted((tuple(members) for members in comps.values()), key=lambda c: c[0])


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def decode_instances(components: Sequence[Sequence[int]], node_logits: np.ndarray,
                     boxes: Sequence[NormBox]) -> List[LayoutInstance]:
    """
    One layout instance per component.

    The category is the mode of the members' argmax classes (ties go to the
    lowest class index); the score is the mean probability of that category
    over the members; the box is the bounding rectangle of the members.
    """
    node_logits = np.asarray(node_logits, dtype=np.float64)
    probs = _softmax(node_logits) if node_logits.size else node_logits
    classes = probs.argmax(axis=1) if node_logits.size else np.zeros(0, dtype=np.int64)

    instances = []
    for comp in components:
        members = tuple(sorted(int(m) for m in comp))
        counts = Counter(int(classes[m]) for m in members)
        top = max(counts.values())
        category = min(c for c, k in counts.items() if k == top)
        score = float(np.mean([probs[m, category] for m in members]))
        instances.append(LayoutInstance(
            member_ids=members,
            bbox=min_bounding_rect(boxes[m] for m in members),
            category=category,
            score=score,
        ))
    return instances


def gold_instances(groups: Sequence[Sequence[int]], node_category: Sequence[int],
                   boxes: Sequence[NormBox]) -> List[Tuple[NormBox, int]]:
    """Gold (box, category) pairs of a page; a group takes its members' mode category."""
    out = []
    for members in groups:
        counts = Counter(int(node_category[m]) for m in members)
        top = max(counts.values())
        category = min(c for c, k in counts.items() if k == top)
        out.append((min_bounding_rect(boxes[m] for m in members), category))
    return out


def f1_scores(pred: Sequence[int], gold: Sequence[int], mode: str = 'node_multiclass',
              n_classes: Optional[int] = None) -> MatchResult:
    """
    Precision, recall and F1.

    Args:
        pred: Predicted labels
        gold: Gold labels, aligned with pred
        mode: 'node_multiclass' (micro over all classes plus per-class) or
              'edge_binary' (the positive class 1)
        n_classes: Number of classes for the per-class breakdown

    Returns:
        MatchResult; 0/0 precision or recall is reported as 0
    """
    pred = np.asarray(pred, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if pred.shape != gold.shape:
        raise LengthMismatch(f"{pred.shape[0]} predictions vs {gold.shape[0]} gold labels")

    if mode == 'edge_binary':
        tp = int(np.sum((pred == 1) & (gold == 1)))
        fp = int(np.sum((pred == 1) & (gold != 1)))
        fn = int(np.sum((pred != 1) & (gold == 1)))
        return MatchResult(tp, fp, fn)

    if mode != 'node_multiclass':
        raise ValueError(f"unknown F1 mode: {mode}")

    if n_classes is None:
        n_classes = int(max(pred.max(initial=-1), gold.max(initial=-1))) + 1
    per_class = {}
    for c in range(n_classes):
        per_class[c] = MatchResult(
            int(np.sum((pred == c) & (gold == c))),
            int(np.sum((pred == c) & (gold != c))),
            int(np.sum((pred != c) & (gold == c))),
        )
    result = MatchResult(
        sum(m.tp for m in per_class.values()),
        sum(m.fp for m in per_class.values()),
        sum(m.fn for m in per_class.values()),
        per_class,
    )
    return result


def iou(a: NormBox, b: NormBox) -> float:
    iw = max(0.0, min(a.xmax, b.xmax) - max(a.xmin, b.xmin))
    ih = max(0.0, min(a.ymax, b.ymax) - max(a.ymin, b.ymin))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


@dataclass
class MapReport:
    map: float
    per_class_ap: Dict[int, float]
    per_threshold_map: Dict[float, float]

    def to_dict(self) -> Dict:
        return {
            'map': self.map,
            'per_class_ap': {str(c): ap for c, ap in sorted(self.per_class_ap.items())},
            'per_threshold_map': {f"{t:.2f}": v for t, v in sorted(self.per_threshold_map.items())},
        }


def _interpolated_ap(tp_flags: np.ndarray, n_gold: int) -> float:
    if tp_flags.size == 0:
        return 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(~tp_flags)
    recall = tp / n_gold
    precision = tp / (tp + fp)
    # precision envelope, non-increasing from the right
    for k in range(precision.size - 2, -1, -1):
        precision[k] = max(precision[k], precision[k + 1])
    idx = np.searchsorted(recall, RECALL_POINTS, side='left')
    sampled = np.where(idx < precision.size, precision[np.minimum(idx, precision.size - 1)], 0.0)
    return float(sampled.mean())


def coco_map(detections: Sequence[Sequence[LayoutInstance]],
             golds: Sequence[Sequence[Tuple[NormBox, int]]],
             thresholds: Sequence[float] = COCO_IOU_THRESHOLDS) -> MapReport:
    """
    COCO-style mean average precision.

    Args:
        detections: Per page, scored instances
        golds: Per page, gold (box, category) pairs
        thresholds: IoU thresholds

    Returns:
        MapReport; classes without any gold instance are skipped
    """
    if len(detections) != len(golds):
        raise LengthMismatch(f"{len(detections)} detection pages vs {len(golds)} gold pages")

    classes = sorted({cat for page in golds for _, cat in page})
    if not classes:
        logger.warning("coco_map: no gold instances, reporting mAP 0")
        return MapReport(0.0, {}, {float(t): 0.0 for t in thresholds})

    ap_table = np.zeros((len(thresholds), len(classes)))
    for ci, cat in enumerate(classes):
        n_gold = sum(1 for page in golds for _, c in page if c == cat)
        # (score, page, index) ordering makes the greedy matching deterministic
        ranked = sorted(
            ((det.score, p, k) for p, page in enumerate(detections) for k, det in enumerate(page) if det.category == cat),
            key=lambda item: (-item[0], item[1], item[2]),
        )
        for ti, thr in enumerate(thresholds):
            used = [set() for _ in golds]
            flags = np.zeros(len(ranked), dtype=bool)
            for r, (_, p, k) in enumerate(ranked):
                det_box = detections[p][k].bbox
                best, best_iou = -1, -1.0
                for g, (gbox, gcat) in enumerate(golds[p]):
                    if gcat != cat or g in used[p]:
                        continue
                    v = iou(det_box, gbox)
                    if v >= thr and v > best_iou:
                        best, best_iou = g, v
                if best >= 0:
                    used[p].add(best)
                    flags[r] = True
            ap_table[ti, ci] = _interpolated_ap(flags, n_gold)

    per_class = {cat: float(ap_table[:, ci].mean()) for ci, cat in enumerate(classes)}
    per_threshold = {float(t): float(ap_table[ti].mean()) for ti, t in enumerate(thresholds)}
    return MapReport(float(ap_table.mean()), per_class, per_threshold)
