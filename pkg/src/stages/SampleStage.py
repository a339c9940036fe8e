"""
SampleStage - Builds the candidate graph of each page and measures how much
of the gold structure it can express.
"""

import logging
import math
import threading
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

from errors import P2GError
from layout.doc_model import Page
from layout.sampling import SampledGraph, missing_group_pairs, sample_graph, sampler_recall

logger = logging.getLogger(__name__)


def _mean(values: List[float]) -> Optional[float]:
    # exactly rounded: independent of completion order
    return math.fsum(values) / len(values) if values else None


@dataclass
class SampledPage:
    page: Page
    graph: SampledGraph
    group_connectivity: Optional[float] = None
    link_coverage: Optional[float] = None
    missing_pairs: Tuple[Tuple[int, int], ...] = ()


class SampleStage:
    """
    Graph sampling stage.

    Features:
    - Any sampling strategy with its parameters
    - Sampler recall (group connectivity, link coverage) on labeled pages
    - Missing gold pairs for rendering
    - Thread-safe counters
    """

    LOG_EVERY = 100

    def initialize(self, conf: Dict[str, Any]):
        """
        Args:
            conf: {'strategy': str, 'params': dict, 'strict': bool, 'with_missing': bool}
        """
        self.strategy = conf.get('strategy', 'directional')
        self.params = dict(conf.get('params', {}))
        self.strict = bool(conf.get('strict', False))
        self.with_missing = bool(conf.get('with_missing', False))

        self._lock = threading.Lock()
        self.processed = 0
        self.failed = 0
        self.total_edges = 0
        self.connectivity: List[float] = []
        self.coverage: List[float] = []

        logger.info(f"SampleStage initialized (strategy={self.strategy})")

    def process(self, page: Page) -> Optional[SampledPage]:
        try:
            graph = sample_graph(page.norm_boxes(), self.strategy, **self.params)
            result = SampledPage(page, graph)
            if page.labels is not None:
                result.group_connectivity, result.link_coverage = sampler_recall(graph, page.labels)
                if self.with_missing:
                    result.missing_pairs = tuple(missing_group_pairs(graph, page.labels, page.norm_boxes()))
            logger.debug(f"{page.page_id}: {graph.n_edges} edges, connectivity={result.group_connectivity}")
        except P2GError as e:
            if self.strict:
                raise
            with self._lock:
                self.failed += 1
            logger.error(f"Error sampling page {page.page_id}: {e}", exc_info=True)
            return None

        with self._lock:
            self.processed += 1
            self.total_edges += graph.n_edges
            if result.group_connectivity is not None:
                self.connectivity.append(result.group_connectivity)
            if result.link_coverage is not None:
                self.coverage.append(result.link_coverage)
            if self.processed % self.LOG_EVERY == 0:
                self._log_statistics()
        return result

    def summary(self) -> Dict[str, Any]:
        return {
            'strategy': self.strategy,
            'pages': self.processed,
            'failed': self.failed,
            'edges': self.total_edges,
            'mean_group_connectivity': _mean(self.connectivity),
            'mean_link_coverage': _mean(self.coverage),
        }

    def _log_statistics(self):
        s = self.summary()
        logger.info(
            f"SampleStage: processed {s['pages']}, failed {s['failed']}, edges {s['edges']}, "
            f"connectivity {s['mean_group_connectivity']}"
        )
