"""
COCO export - Detection documents for decoded layout instances.

Document fields:
    format_version  1
    images          [{"id", "page_id", "width", "height"}]
    categories      [{"id", "name"}]            ids are category index + 1
    detections      [{"id", "image_id", "category_id", "bbox": [x, y, w, h] px,
                      "score", "member_ids"}]
"""

import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

from errors import SchemaError
from layout.decode_eval import LayoutInstance
from layout.doc_model import Page

logger = logging.getLogger(__name__)

COCO_FORMAT_VERSION = 1
DETECTION_FIELDS = ('id', 'image_id', 'category_id', 'bbox', 'score', 'member_ids')


@dataclass(frozen=True)
class CocoDetection:
    id: int
    image_id: int
    category_id: int
    bbox: Tuple[float, float, float, float]
    score: float
    member_ids: Tuple[int, ...]


def to_pixel_xywh(instance: LayoutInstance, page: Page) -> List[float]:
    b = instance.bbox
    return [
        b.xmin * page.width_px,
        b.ymin * page.height_px,
        b.w * page.width_px,
        b.h * page.height_px,
    ]


def export_coco(pages: Sequence[Page], instances: Sequence[Sequence[LayoutInstance]],
                category_names: Sequence[str]) -> Dict[str, Any]:
    """
    Build a COCO-style detection document.

    Args:
        pages: Pages in image order
        instances: Decoded instances of each page
        category_names: Name of every category index

    Returns:
        JSON-ready document
    """
    images = [
        {'id': k + 1, 'page_id': page.page_id, 'width': page.width_px, 'height': page.height_px}
        for k, page in enumerate(pages)
    ]
    categories = [{'id': c + 1, 'name': name} for c, name in enumerate(category_names)]
    detections = []
    for k, (page, page_instances) in enumerate(zip(pages, instances)):
        for inst in page_instances:
            detections.append({
                'id': len(detections) + 1,
                'image_id': k + 1,
                'category_id': inst.category + 1,
                'bbox': to_pixel_xywh(inst, page),
                'score': float(inst.score),
                'member_ids': list(inst.member_ids),
            })
    return {
        'format_version': COCO_FORMAT_VERSION,
        'images': images,
        'categories': categories,
        'detections': detections,
    }


def read_coco(document: Dict[str, Any]) -> List[CocoDetection]:
    """Validate the documented fields and return the detections."""
    if not isinstance(document, dict) or document.get('format_version') != COCO_FORMAT_VERSION:
        raise SchemaError('format_version', f'expected {COCO_FORMAT_VERSION}')
    image_ids = {img.get('id') for img in document.get('images', [])}
    category_ids = {cat.get('id') for cat in document.get('categories', [])}

    out = []
    for k, det in enumerate(document.get('detections', [])):
        missing = [f for f in DETECTION_FIELDS if f not in det]
        if missing:
            raise SchemaError(f'detections[{k}].{missing[0]}', 'missing field')
        if det['image_id'] not in image_ids:
            raise SchemaError(f'detections[{k}].image_id', f"unknown image {det['image_id']}")
        if det['category_id'] not in category_ids:
            raise SchemaError(f'detections[{k}].category_id', f"unknown category {det['category_id']}")
        if len(det['bbox']) != 4:
            raise SchemaError(f'detections[{k}].bbox', 'must be [x, y, w, h]')
        out.append(CocoDetection(
            id=det['id'],
            image_id=det['image_id'],
            category_id=det['category_id'],
            bbox=tuple(float(v) for v in det['bbox']),
            score=float(det['score']),
            member_ids=tuple(det['member_ids']),
        ))
    return out


def write_coco(document: Dict[str, Any], path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(document, f, indent=2, sort_keys=True)
    logger.info(f"Wrote {len(document['detections'])} detections to {path}")
