"""
Synthetic corpus - Deterministic document pages with full gold labels.

Pages carry a centered title, one or two columns of section headers, text
paragraphs and bulleted lists, and a page footer. Some paragraphs are
right-aligned with ragged left edges, so lines only share their right ends.

Geometry is constructed so that the default directional sampler connects
every gold group:
- words of a line overlap vertically and sit 8 px apart (jitter <= 2 px)
- consecutive lines of a block share an aligned edge (left, right or indent)
  and are at least 2 px apart after jitter
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Tuple

import numpy as np

from errors import InvalidConfig

logger = logging.getLogger(__name__)

CATEGORIES = ('title', 'text', 'list', 'page-footer', 'section-header')

LINE_HEIGHT = {'title': 36.0, 'section-header': 22.0, 'text': 16.0, 'list': 13.0, 'page-footer': 12.0}
LINE_GAP = 6.0
WORD_GAP = 8.0
BLOCK_GAP = 24.0
COLUMN_GAP = 40.0
BULLET_SIZE = 7.0
LIST_INDENT = 20.0
MIN_WORD_PITCH = 60.0

VOCAB = (
    'layout', 'graph', 'page', 'region', 'column', 'figure', 'table', 'caption', 'section',
    'result', 'method', 'model', 'node', 'edge', 'value', 'form', 'entry', 'total', 'date',
    'name', 'report', 'summary', 'analysis', 'design', 'data', 'sample', 'index', 'note',
)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    pages: int = 20
    eval_pages: int = 10
    columns: Tuple[int, ...] = (1, 2)
    paragraphs_per_column: Tuple[int, int] = (3, 5)
    lines_per_paragraph: Tuple[int, int] = (2, 5)
    words_per_line: Tuple[int, int] = (3, 7)
    list_items: Tuple[int, int] = (2, 4)
    categories: Tuple[str, ...] = CATEGORIES
    jitter_px: float = 1.5
    right_aligned_prob: float = 0.25
    list_prob: float = 0.25
    header_prob: float = 0.3
    width_px: int = 1000
    height_px: int = 1294
    margin_px: int = 60

    def __post_init__(self):
        for name in ('columns', 'paragraphs_per_column', 'lines_per_paragraph', 'words_per_line', 'list_items',
                     'categories'):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.pages < 0 or self.eval_pages < 0:
            raise InvalidConfig("synth.pages and synth.eval_pages must be >= 0")
        if not self.columns or any(c not in (1, 2) for c in self.columns):
            raise InvalidConfig("synth.columns must list column counts from {1, 2}")
        for name in ('paragraphs_per_column', 'lines_per_paragraph', 'words_per_line', 'list_items'):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise InvalidConfig(f"synth.{name} must be a positive range [lo, hi], got {(lo, hi)}")
        if sorted(self.categories) != sorted(CATEGORIES):
            raise InvalidConfig(f"synth.categories must be an ordering of {CATEGORIES}")
        if not 0.0 <= self.jitter_px <= 2.0:
            raise InvalidConfig("synth.jitter_px must lie in [0, 2] to keep lines apart")
        for name in ('right_aligned_prob', 'list_prob', 'header_prob'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"synth.{name} must lie in [0, 1]")
        if self.list_prob + self.header_prob > 1.0:
            raise InvalidConfig("synth.list_prob + synth.header_prob must not exceed 1")
        if self.margin_px < 10 or self.width_px < 400 + 2 * self.margin_px or self.height_px < 400 + 2 * self.margin_px:
            raise InvalidConfig("synth page is too small for its margins")

    def to_dict(self) -> Dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SynthConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidConfig(f"unknown synth config key(s): {', '.join('synth.' + k for k in unknown)}")
        return cls(**data)


class _PageBuilder:
    """Accumulates boxes and labels of one page."""

    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.boxes: List[Dict[str, Any]] = []
        self.categories: List[int] = []
        self.groups: List[List[int]] = []

    def _add_box(self, x0: float, y0: float, x1: float, y1: float, text: str, category: str) -> int:
        j = self.cfg.jitter_px
        dx, dy = self.rng.uniform(-j, j, size=2) if j > 0 else (0.0, 0.0)
        box_id = len(self.boxes)
        self.boxes.append({
            'id': box_id,
            'bbox': [round(float(x0 + dx), 2), round(float(y0 + dy), 2),
                     round(float(x1 + dx), 2), round(float(y1 + dy), 2)],
            'text': text,
        })
        self.categories.append(self.cfg.categories.index(category))
        return box_id

    def words(self, x_start: float, line_w: float, y: float, category: str) -> List[int]:
        """Lay out one line of words spanning [x_start, x_start + line_w]."""
        lo, hi = self.cfg.words_per_line
        n = int(self.rng.integers(lo, hi + 1))
        n = max(1, min(n, int((line_w + WORD_GAP) // MIN_WORD_PITCH)))
        h = LINE_HEIGHT[category]
        shares = self.rng.uniform(0.6, 1.4, size=n)
        widths = (line_w - WORD_GAP * (n - 1)) * shares / shares.sum()
        ids = []
        x = x_start
        for w in widths:
            text = VOCAB[int(self.rng.integers(len(VOCAB)))]
            ids.append(self._add_box(x, y, x + w, y + h, text, category))
            x += w + WORD_GAP
        return ids

    def group(self, ids: List[int]):
        if ids:
            self.groups.append(ids)


def _block_height(n_lines: int, category: str) -> float:
    return n_lines * LINE_HEIGHT[category] + (n_lines - 1) * LINE_GAP


def _generate_page(cfg: SynthConfig, stream: int, index: int) -> Dict[str, Any]:
    rng = np.random.default_rng([cfg.seed, stream, index])
    page = _PageBuilder(cfg, rng)
    W, H, M = float(cfg.width_px), float(cfg.height_px), float(cfg.margin_px)
    text_w = W - 2 * M

    # title, centered, one or two lines
    y = M
    title_ids = []
    for _ in range(int(rng.integers(1, 3))):
        line_w = text_w * rng.uniform(0.4, 0.7)
        title_ids += page.words((W - line_w) / 2.0, line_w, y, 'title')
        y += LINE_HEIGHT['title'] + LINE_GAP + 2.0
    page.group(title_ids)
    y += BLOCK_GAP

    footer_y = H - M - LINE_HEIGHT['page-footer']
    limit = footer_y - 2 * BLOCK_GAP

    n_cols = int(rng.choice(cfg.columns))
    col_w = (text_w - (n_cols - 1) * COLUMN_GAP) / n_cols
    for c in range(n_cols):
        x_left = M + c * (col_w + COLUMN_GAP)
        y_col = y
        lo, hi = cfg.paragraphs_per_column
        for _ in range(int(rng.integers(lo, hi + 1))):
            r = rng.random()
            if r < cfg.header_prob:
                if y_col + _block_height(1, 'section-header') > limit:
                    break
                line_w = col_w * rng.uniform(0.3, 0.7)
                page.group(page.words(x_left, line_w, y_col, 'section-header'))
                y_col += _block_height(1, 'section-header') + BLOCK_GAP
            elif r < cfg.header_prob + cfg.list_prob:
                y_next = _emit_list(page, cfg, rng, x_left, col_w, y_col, limit)
                if y_next is None:
                    break
                y_col = y_next + BLOCK_GAP
            else:
                y_next = _emit_paragraph(page, cfg, rng, x_left, col_w, y_col, limit)
                if y_next is None:
                    break
                y_col = y_next + BLOCK_GAP

    footer_w = float(rng.uniform(60.0, 160.0))
    page.group(page.words((W - footer_w) / 2.0, footer_w, footer_y, 'page-footer'))

    return {
        'schema_version': 1,
        'page_id': f'synth-{cfg.seed}-{SPLITS[stream]}-{index:05d}',
        'width': cfg.width_px,
        'height': cfg.height_px,
        'boxes': page.boxes,
        'labels': {
            'node_category': page.categories,
            'groups': page.groups,
            'category_names': list(cfg.categories),
        },
    }


def _emit_paragraph(page: _PageBuilder, cfg: SynthConfig, rng: np.random.Generator,
                    x_left: float, col_w: float, y: float, limit: float):
    lo, hi = cfg.lines_per_paragraph
    n_lines = int(rng.integers(lo, hi + 1))
    if y + _block_height(n_lines, 'text') > limit:
        return None
    right_aligned = rng.random() < cfg.right_aligned_prob
    ids = []
    for line in range(n_lines):
        last = line == n_lines - 1
        if right_aligned:
            line_w = col_w * rng.uniform(0.45, 0.95)
            x_start = x_left + col_w - line_w
        else:
            line_w = col_w * (rng.uniform(0.3, 0.9) if last else 1.0)
            x_start = x_left
        ids += page.words(x_start, line_w, y, 'text')
        y += LINE_HEIGHT['text'] + (0.0 if last else LINE_GAP)
    page.group(ids)
    return y


def _emit_list(page: _PageBuilder, cfg: SynthConfig, rng: np.random.Generator,
               x_left: float, col_w: float, y: float, limit: float):
    lo, hi = cfg.list_items
    n_items = int(rng.integers(lo, hi + 1))
    item_lines = [int(rng.integers(1, 3)) for _ in range(n_items)]
    if y + _block_height(sum(item_lines), 'list') > limit:
        return None
    h = LINE_HEIGHT['list']
    inner_w = col_w - LIST_INDENT
    ids = []
    for k, n_lines in enumerate(item_lines):
        for line in range(n_lines):
            if line == 0:
                top = y + (h - BULLET_SIZE) / 2.0
                ids.append(page._add_box(x_left, top, x_left + BULLET_SIZE, top + BULLET_SIZE, '•', 'list'))
            wrapped = line < n_lines - 1
            line_w = inner_w * (1.0 if wrapped else rng.uniform(0.35, 0.9))
            ids += page.words(x_left + LIST_INDENT, line_w, y, 'list')
            last = k == n_items - 1 and line == n_lines - 1
            y += h + (0.0 if last else LINE_GAP)
    page.group(ids)
    return y


SPLITS = ('train', 'eval')


def synth_generate(cfg: SynthConfig, split: str = 'train') -> List[Dict[str, Any]]:
    """
    Generate the PageDocuments of one split.

    The train split holds cfg.pages pages and the eval split cfg.eval_pages.
    Page i of a split draws from its own generator seeded with
    (seed, split index, i), so splits never share a page and a page does not
    depend on how many pages come before it.
    """
    if split not in SPLITS:
        raise InvalidConfig(f"unknown synth split '{split}', expected one of {SPLITS}")
    stream = SPLITS.index(split)
    count = cfg.pages if split == 'train' else cfg.eval_pages
    documents = [_generate_page(cfg, stream, index) for index in range(count)]
    n_boxes = sum(len(d['boxes']) for d in documents)
    logger.info(f"Generated {len(documents)} synthetic {split} pages ({n_boxes} boxes, seed={cfg.seed})")
    return documents
