"""
InferStage - Runs the model on a sampled page and decodes layout instances.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from errors import P2GError
from layout.decode_eval import LayoutInstance, MatchResult, gold_instances
from layout.doc_model import NormBox
from models.gnn_model import ForwardOutput, LayoutGraphModel
from stages.SampleStage import SampledPage

logger = logging.getLogger(__name__)


@dataclass
class PagePrediction:
    sampled: SampledPage
    output: ForwardOutput
    instances: List[LayoutInstance]
    decisions: np.ndarray
    node_match: Optional[MatchResult] = None
    edge_match: Optional[MatchResult] = None
    gold: List[Tuple[NormBox, int]] = field(default_factory=list)

    @property
    def page(self):
        return self.sampled.page

    def to_record(self, category_names=()) -> Dict[str, Any]:
        """JSON-ready predictions of the page, boxes in pixels."""
        page = self.page
        node_pred = self.output.node_predictions()
        probs = self.output.edge_probabilities()
        record = {
            'page_id': page.page_id,
            'width': page.width_px,
            'height': page.height_px,
            'node_category': [int(c) for c in node_pred],
            'edges': [
                {'pair': [int(i), int(j)], 'prob': float(p), 'connected': bool(d)}
                for (i, j), p, d in zip(self.output.pairs, probs, self.decisions)
            ],
            'instances': [
                {
                    'member_ids': list(inst.member_ids),
                    'bbox': [inst.bbox.xmin * page.width_px, inst.bbox.ymin * page.height_px,
                             inst.bbox.xmax * page.width_px, inst.bbox.ymax * page.height_px],
                    'category': inst.category,
                    'category_name': category_names[inst.category] if inst.category < len(category_names) else None,
                    'score': inst.score,
                }
                for inst in self.instances
            ],
        }
        if self.node_match is not None:
            record['node_f1'] = self.node_match.f1
            record['edge_f1'] = self.edge_match.f1
        return record


class InferStage:
    """
    Model inference stage.

    Features:
    - Forward pass, edge decisions and connected-component decoding
    - Per-page node and edge matches plus gold instances when labels exist
    - Safe to call from several threads (parameters are read-only here)
    """

    LOG_EVERY = 100

    def initialize(self, conf: Dict[str, Any]):
        """
        Args:
            conf: {'model': LayoutGraphModel, 'strict': bool}
        """
        self.model: LayoutGraphModel = conf['model']
        self.strict = bool(conf.get('strict', False))

        self._lock = threading.Lock()
        self.processed = 0
        self.failed = 0
        self.instances_decoded = 0

        logger.info("InferStage initialized")

    def process(self, sampled: SampledPage) -> Optional[PagePrediction]:
        page = sampled.page
        try:
            prepared = self.model.prepare(page, sampled.graph)
            out = self.model.forward(prepared)
            instances, decisions = self.model.decode(out, page)
            prediction = PagePrediction(sampled, out, instances, decisions)
            if page.labels is not None:
                prediction.node_match, prediction.edge_match = self.model.score(out, prepared)
                prediction.gold = gold_instances(page.labels.groups, page.labels.node_category, page.norm_boxes())
        except P2GError as e:
            if self.strict:
                raise
            with self._lock:
                self.failed += 1
            logger.error(f"Error running inference on page {page.page_id}: {e}", exc_info=True)
            return None

        with self._lock:
            self.processed += 1
            self.instances_decoded += len(instances)
            if self.processed % self.LOG_EVERY == 0:
                self._log_statistics()
        return prediction

    def _log_statistics(self):
        logger.info(
            f"InferStage: processed {self.processed}, failed {self.failed}, "
            f"instances {self.instances_decoded}"
        )
