"""
Pages - The on-disk PageDocument schema and corpus readers/writers.

PageDocument (JSON object):
    schema_version  1
    page_id         non-empty string
    width, height   page size in pixels (positive)
    image           optional image path (relative paths resolve against the corpus file)
    boxes           [{"id": int, "bbox": [xmin, ymin, xmax, ymax] px, "text": optional str}]
    labels          optional {"node_category": [int], "groups": [[id]],
                              "links": [[src_group, dst_group]], "category_names": [str]}

Corpora are JSONL files (one document per line), directories of *.json
documents, or FUNSD dataset directories.
"""

import glob
import json
import logging
import math
import os
from functools import partial
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

from errors import DataError, SchemaError
from layout.doc_model import GoldLabels, Page, TextBox

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CORPUS_FORMATS = ('auto', 'jsonl', 'dir', 'funsd')

# (location, loader) of one page
CorpusEntry = Tuple[str, Callable[[], Page]]


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return (isinstance(value, (int, float)) and not isinstance(value, bool)) and math.isfinite(value)


def _parse_labels(labels: Any, n_boxes: int) -> GoldLabels:
    if not isinstance(labels, dict):
        raise SchemaError('labels', 'must be an object')
    unknown = sorted(set(labels) - {'node_category', 'groups', 'links', 'category_names'})
    if unknown:
        raise SchemaError(f'labels.{unknown[0]}', 'unknown field')

    names = labels.get('category_names', [])
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise SchemaError('labels.category_names', 'must be a list of strings')

    categories = labels.get('node_category')
    if not isinstance(categories, list) or len(categories) != n_boxes:
        raise SchemaError('labels.node_category', f'must be a list with one entry per box ({n_boxes})')
    for k, c in enumerate(categories):
        if not _is_int(c) or c < 0 or (names and c >= len(names)):
            raise SchemaError(f'labels.node_category[{k}]', f'invalid category {c!r}')

    groups = labels.get('groups')
    if not isinstance(groups, list):
        raise SchemaError('labels.groups', 'must be a list of id lists')
    seen = {}
    for g, members in enumerate(groups):
        if not isinstance(members, list) or not members:
            raise SchemaError(f'labels.groups[{g}]', 'must be a non-empty list of box ids')
        for m in members:
            if not _is_int(m) or not 0 <= m < n_boxes:
                raise SchemaError(f'labels.groups[{g}]', f'unknown box id {m!r}')
            if m in seen:
                raise SchemaError(f'labels.groups[{g}]', f'box {m} already belongs to group {seen[m]}')
            seen[m] = g
    if len(seen) != n_boxes:
        missing = sorted(set(range(n_boxes)) - set(seen))
        raise SchemaError('labels.groups', f'groups must partition the box ids; missing {missing[:10]}')

    links = labels.get('links', [])
    if not isinstance(links, list):
        raise SchemaError('labels.links', 'must be a list of [src_group, dst_group] pairs')
    for k, link in enumerate(links):
        if (not isinstance(link, list) or len(link) != 2
                or not all(_is_int(v) and 0 <= v < len(groups) for v in link)):
            raise SchemaError(f'labels.links[{k}]', f'invalid link {link!r}')

    return GoldLabels(
        node_category=tuple(categories),
        groups=tuple(tuple(members) for members in groups),
        links=tuple(tuple(link) for link in links),
        category_names=tuple(names),
    )


def parse_page(document: Any, base_dir: Optional[str] = None) -> Page:
    """
    Validate a PageDocument and build a Page.

    Args:
        document: Decoded JSON object
        base_dir: Directory relative image paths resolve against

    Returns:
        Page with boxes in id order and normalized geometry checked

    Raises:
        SchemaError: with the path of the offending field
        DegenerateBox: when a box has no area inside the page
    """
    if not isinstance(document, dict):
        raise SchemaError('$', 'page document must be an object')
    if document.get('schema_version') != SCHEMA_VERSION:
        raise SchemaError('schema_version', f'expected {SCHEMA_VERSION}, got {document.get("schema_version")!r}')

    page_id = document.get('page_id')
    if not isinstance(page_id, str) or not page_id:
        raise SchemaError('page_id', 'must be a non-empty string')
    for key in ('width', 'height'):
        value = document.get(key)
        if not _is_int(value) or value <= 0:
            raise SchemaError(key, f'must be a positive integer, got {value!r}')

    image = document.get('image')
    if image is not None and not isinstance(image, str):
        raise SchemaError('image', 'must be a string path')
    if image and base_dir and not os.path.isabs(image):
        image = os.path.join(base_dir, image)

    raw_boxes = document.get('boxes')
    if not isinstance(raw_boxes, list):
        raise SchemaError('boxes', 'must be a list')

    boxes = {}
    for k, raw in enumerate(raw_boxes):
        if not isinstance(raw, dict):
            raise SchemaError(f'boxes[{k}]', 'must be an object')
        box_id = raw.get('id')
        if not _is_int(box_id):
            raise SchemaError(f'boxes[{k}].id', f'must be an integer, got {box_id!r}')
        if box_id in boxes:
            raise SchemaError(f'boxes[{k}].id', f'duplicate box id {box_id}')
        bbox = raw.get('bbox')
        if not isinstance(bbox, list) or len(bbox) != 4 or not all(_is_number(v) for v in bbox):
            raise SchemaError(f'boxes[{k}].bbox', 'must be four finite numbers [xmin, ymin, xmax, ymax]')
        text = raw.get('text')
        if text is not None and not isinstance(text, str):
            raise SchemaError(f'boxes[{k}].text', 'must be a string')
        boxes[box_id] = TextBox(box_id, tuple(bbox), text)

    if sorted(boxes) != list(range(len(boxes))):
        raise SchemaError('boxes', f'box ids must be dense 0..{len(boxes) - 1}')

    labels = None
    if document.get('labels') is not None:
        labels = _parse_labels(document['labels'], len(boxes))

    page = Page(
        page_id=page_id,
        width_px=document['width'],
        height_px=document['height'],
        boxes=tuple(boxes[i] for i in range(len(boxes))),
        labels=labels,
        image_path=image,
    )
    page.norm_boxes()
    return page


def page_to_document(page: Page) -> Dict[str, Any]:
    """Inverse of parse_page; optional fields are omitted when empty."""
    boxes = []
    for b in page.boxes:
        entry = {'id': b.id, 'bbox': list(b.bbox_px)}
        if b.text is not None:
            entry['text'] = b.text
        boxes.append(entry)

    doc: Dict[str, Any] = {
        'schema_version': SCHEMA_VERSION,
        'page_id': page.page_id,
        'width': page.width_px,
        'height': page.height_px,
    }
    if page.image_path:
        doc['image'] = page.image_path
    doc['boxes'] = boxes
    if page.labels is not None:
        labels: Dict[str, Any] = {
            'node_category': list(page.labels.node_category),
            'groups': [list(g) for g in page.labels.groups],
        }
        if page.labels.links:
            labels['links'] = [list(link) for link in page.labels.links]
        if page.labels.category_names:
            labels['category_names'] = list(page.labels.category_names)
        doc['labels'] = labels
    return doc


def dumps_document(document: Dict[str, Any]) -> str:
    return json.dumps(document, sort_keys=True, separators=(',', ':'), ensure_ascii=False)


def _read_json(path: str) -> Any:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(path, f'invalid JSON: {e}')
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}")


def _parse_jsonl_line(line: str, path: str, line_no: int, base: str) -> Page:
    try:
        document = json.loads(line)
    except json.JSONDecodeError as e:
        raise SchemaError(f'{path}:{line_no}', f'invalid JSON: {e}')
    try:
        return parse_page(document, base)
    except SchemaError as e:
        raise SchemaError(f'{path}:{line_no}:{e.path}', e.message)


def _jsonl_entries(path: str) -> Iterator[CorpusEntry]:
    base = os.path.dirname(os.path.abspath(path))
    try:
        f = open(path, 'r', encoding='utf-8')
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}")
    with f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            yield f'{path}:{line_no}', partial(_parse_jsonl_line, line, path, line_no, base)


def load_page(path: str, level: str = 'word') -> Page:
    """
    Load one page from a PageDocument or a FUNSD annotation file.

    FUNSD files are recognized by their top-level "form" list.
    """
    document = _read_json(path)
    if isinstance(document, dict) and 'form' in document:
        from dataio.funsd import load_funsd_file
        return load_funsd_file(path, level)
    return parse_page(document, os.path.dirname(os.path.abspath(path)))


def detect_format(path: str) -> str:
    if os.path.isdir(path):
        if os.path.isdir(os.path.join(path, 'annotations')):
            return 'funsd'
        return 'dir'
    if path.endswith('.jsonl'):
        return 'jsonl'
    raise DataError(f"cannot tell the corpus format of {path}; use a .jsonl file or a directory")


def corpus_entries(path: str, fmt: str = 'auto', level: str = 'word') -> Iterator[CorpusEntry]:
    """
    Lazy entries of a corpus, one per page.

    Each entry is (location, load) where load() parses that page and raises
    on invalid input, so callers choose between failing and skipping.

    Args:
        path: JSONL file, directory of *.json PageDocuments, or FUNSD root
        fmt: 'auto', 'jsonl', 'dir' or 'funsd'
        level: FUNSD node level, 'word' or 'entity'
    """
    if fmt not in CORPUS_FORMATS:
        raise DataError(f"unknown corpus format '{fmt}', expected one of {CORPUS_FORMATS}")
    if not os.path.exists(path):
        raise DataError(f"corpus not found: {path}")
    if fmt == 'auto':
        fmt = detect_format(path)

    if fmt == 'jsonl':
        yield from _jsonl_entries(path)
    elif fmt == 'funsd':
        from dataio.funsd import load_funsd_file
        files = sorted(glob.glob(os.path.join(path, 'annotations', '*.json')))
        if not files:
            raise DataError(f"no FUNSD annotations under {path}/annotations")
        for file_path in files:
            yield file_path, partial(load_funsd_file, file_path, level)
    else:
        for file_path in sorted(glob.glob(os.path.join(path, '*.json'))):
            yield file_path, partial(load_page, file_path, level)


def load_corpus(path: str, fmt: str = 'auto', level: str = 'word') -> List[Page]:
    """Every page of a corpus in file order (directories sorted by file name); the first bad page raises."""
    pages = [load() for _, load in corpus_entries(path, fmt, level)]
    logger.info(f"Loaded {len(pages)} pages from {path}")
    return pages


def save_corpus(pages_or_documents: Sequence, path: str) -> int:
    """Write pages (or PageDocument dicts) as JSONL; returns the page count."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    count = 0
    with open(path, 'w', encoding='utf-8') as f:
        for item in pages_or_documents:
            document = page_to_document(item) if isinstance(item, Page) else item
            f.write(dumps_document(document))
            f.write('\n')
            count += 1
    logger.info(f"Wrote {count} pages to {path}")
    return count


def truncate_page(page: Page, n_boxes: int) -> Page:
    """
    The sub-page of the first n_boxes boxes.

    Groups are restricted to the kept ids (empty groups dropped) and links
    between surviving groups are kept.
    """
    n = min(n_boxes, page.n_boxes)
    labels = None
    if page.labels is not None:
        kept_groups = []
        new_index = {}
        for g, members in enumerate(page.labels.groups):
            kept = tuple(m for m in members if m < n)
            if kept:
                new_index[g] = len(kept_groups)
                kept_groups.append(kept)
        links = tuple(
            (new_index[a], new_index[b]) for a, b in page.labels.links if a in new_index and b in new_index
        )
        labels = GoldLabels(
            node_category=page.labels.node_category[:n],
            groups=tuple(kept_groups),
            links=links,
            category_names=page.labels.category_names,
        )
    return Page(
        page_id=page.page_id,
        width_px=page.width_px,
        height_px=page.height_px,
        boxes=page.boxes[:n],
        labels=labels,
        image_path=page.image_path,
    )


def category_count(pages: Sequence[Page]) -> int:
    """Number of node categories a labeled corpus uses (names win over observed indices)."""
    count = 0
    for page in pages:
        if page.labels is None:
            continue
        count = max(count, len(page.labels.category_names),
                    max(page.labels.node_category, default=-1) + 1)
    return count


def category_names(pages: Sequence[Page]) -> List[str]:
    for page in pages:
        if page.labels is not None and page.labels.category_names:
            return list(page.labels.category_names)
    return [str(c) for c in range(category_count(pages))]
