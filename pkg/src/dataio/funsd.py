"""
FUNSD adapter - Form annotations to Pages at word or entity level.

A FUNSD annotation is {"form": [entity, ...]} where each entity carries an
id, a label (header/question/answer/other), a box, its words (each with a
text and a box) and "linking" pairs of entity ids. Link pairs are listed on
both entities they join; they are deduplicated here.

Word level: one node per word, category = its entity's label, one gold group
per entity. Entity level: one node per entity spanning its words, singleton
groups, links carried through for the linking task.
"""

import json
import logging
import math
import os
from typing import Any, Dict, List, Optional, Tuple

from errors import DataError, SchemaError
from layout.doc_model import GoldLabels, Page, TextBox

try:
    from PIL import Image
    PIL_AVAILABLE = True
except ImportError:
    PIL_AVAILABLE = False

logger = logging.getLogger(__name__)

FUNSD_CATEGORIES = ('header', 'question', 'answer', 'other')
LEVELS = ('word', 'entity')
IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.tif', '.tiff')


def _box(raw: Any, path: str) -> Tuple[float, float, float, float]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise SchemaError(path, 'must be [x0, y0, x1, y1]')
    try:
        x0, y0, x1, y1 = (float(v) for v in raw)
    except (TypeError, ValueError):
        raise SchemaError(path, f'non-numeric box {raw!r}')
    return x0, y0, x1, y1


def _image_size(image_path: Optional[str]) -> Optional[Tuple[int, int]]:
    if not image_path or not PIL_AVAILABLE or not os.path.exists(image_path):
        return None
    with Image.open(image_path) as img:
        return img.size


def funsd_adapter(document: Dict[str, Any], level: str = 'word', page_id: str = 'funsd',
                  image_path: Optional[str] = None, size: Optional[Tuple[int, int]] = None) -> Page:
    """
    Convert one FUNSD annotation into a Page.

    Args:
        document: Decoded FUNSD JSON
        level: 'word' or 'entity'
        page_id: Id given to the page
        image_path: Form image; its size becomes the page size
        size: Explicit (width, height) in pixels, overrides the image

    Returns:
        Labeled Page. Entities without usable words are skipped with a warning,
        and so are words with empty boxes.
    """
    if level not in LEVELS:
        raise DataError(f"unknown FUNSD level '{level}', expected one of {LEVELS}")
    if not isinstance(document, dict) or not isinstance(document.get('form'), list):
        raise SchemaError('form', 'FUNSD annotation must hold a "form" list')

    entities = []
    for k, entity in enumerate(document['form']):
        if not isinstance(entity, dict):
            raise SchemaError(f'form[{k}]', 'must be an object')
        label = entity.get('label')
        if label not in FUNSD_CATEGORIES:
            raise SchemaError(f'form[{k}].label', f'unknown label {label!r}')
        words = []
        for w, word in enumerate(entity.get('words') or []):
            box = _box(word.get('box'), f'form[{k}].words[{w}].box')
            if box[2] <= box[0] or box[3] <= box[1]:
                logger.warning(f"{page_id}: skipping degenerate word {w} of entity {entity.get('id')}")
                continue
            words.append((box, word.get('text')))
        if not words:
            logger.warning(f"{page_id}: skipping entity {entity.get('id')} without words")
            continue
        entities.append((entity.get('id', k), FUNSD_CATEGORIES.index(label), words, entity.get('linking') or [],
                         entity.get('text')))

    group_of_entity = {eid: g for g, (eid, _, _, _, _) in enumerate(entities)}
    links = set()
    for eid, _, _, pairs, _ in entities:
        for pair in pairs:
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise SchemaError(f'form[{eid}].linking', f'invalid pair {pair!r}')
            a, b = pair
            if a in group_of_entity and b in group_of_entity and a != b:
                links.add((group_of_entity[a], group_of_entity[b]))

    boxes: List[TextBox] = []
    categories: List[int] = []
    groups: List[Tuple[int, ...]] = []
    for _, category, words, _, entity_text in entities:
        if level == 'word':
            ids = []
            for box, text in words:
                ids.append(len(boxes))
                boxes.append(TextBox(len(boxes), box, text))
                categories.append(category)
            groups.append(tuple(ids))
        else:
            span = (
                min(b[0] for b, _ in words), min(b[1] for b, _ in words),
                max(b[2] for b, _ in words), max(b[3] for b, _ in words),
            )
            groups.append((len(boxes),))
            boxes.append(TextBox(len(boxes), span, entity_text))
            categories.append(category)

    if size is None:
        size = _image_size(image_path)
    if size is None:
        width = max((b.bbox_px[2] for b in boxes), default=1.0)
        height = max((b.bbox_px[3] for b in boxes), default=1.0)
        size = (max(1, math.ceil(width)), max(1, math.ceil(height)))

    page = Page(
        page_id=page_id,
        width_px=int(size[0]),
        height_px=int(size[1]),
        boxes=tuple(boxes),
        labels=GoldLabels(
            node_category=tuple(categories),
            groups=tuple(groups),
            links=tuple(sorted(links)),
            category_names=FUNSD_CATEGORIES,
        ),
        image_path=image_path,
    )
    page.norm_boxes()
    logger.debug(f"{page_id}: {page.n_boxes} {level} nodes, {len(groups)} groups, {len(links)} links")
    return page


def _find_image(images_dir: str, stem: str) -> Optional[str]:
    for ext in IMAGE_EXTENSIONS:
        candidate = os.path.join(images_dir, stem + ext)
        if os.path.exists(candidate):
            return candidate
    return None


def load_funsd_file(path: str, level: str = 'word') -> Page:
    """Load one annotation; the image is looked up in a sibling images/ directory."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(path, f'invalid JSON: {e}')
    stem = os.path.splitext(os.path.basename(path))[0]
    images_dir = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(path))), 'images')
    return funsd_adapter(document, level, page_id=stem, image_path=_find_image(images_dir, stem))
