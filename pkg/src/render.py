"""
Render - SVG drawings of sampled graphs and predictions.

Category palette (index -> color), stable across runs:
    0 green, 1 red, 2 yellow, 3 blue, 4 purple, 5 brown, 6 pink, 7 gray

Sampled graphs: boxes outlined in their gold category color, candidate
edges solid, missing gold pairs dashed red.
Predictions: instance rectangles in their predicted category color,
connected edges solid green, rejected edges dotted gray.
"""

import logging
import os
from typing import Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from layout.decode_eval import LayoutInstance
from layout.doc_model import NormBox, Page
from layout.sampling import SampledGraph

logger = logging.getLogger(__name__)

PALETTE = ('#2ca02c', '#d62728', '#ffbf00', '#1f77b4', '#9467bd', '#8c564b', '#e377c2', '#7f7f7f')
NEUTRAL = '#555555'


def category_color(category: Optional[int]) -> str:
    if category is None or category < 0:
        return NEUTRAL
    return PALETTE[category % len(PALETTE)]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _header(page: Page) -> list:
    w, h = page.width_px, page.height_px
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<title>{escape(page.page_id)}</title>',
        f'<rect class="page" x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>',
    ]


def _rect(b: NormBox, page: Page, css: str, stroke: str, fill: str = 'none', text: Optional[str] = None,
          width: float = 1.0) -> str:
    x, y = b.xmin * page.width_px, b.ymin * page.height_px
    w, h = b.w * page.width_px, b.h * page.height_px
    body = f'<title>{escape(text)}</title>' if text else ''
    return (
        f'<rect class="{css}" x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
        f'stroke="{stroke}" stroke-width="{width}" fill="{fill}" fill-opacity="0.25">{body}</rect>'
    )


def _line(a: NormBox, b: NormBox, page: Page, css: str, stroke: str, dash: Optional[str] = None) -> str:
    x1, y1 = a.xctr * page.width_px, a.yctr * page.height_px
    x2, y2 = b.xctr * page.width_px, b.yctr * page.height_px
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ''
    return (
        f'<line class="{css}" x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
        f'stroke="{stroke}" stroke-width="1"{dash_attr}/>'
    )


def render_sampled_graph(page: Page, graph: SampledGraph,
                         missing_pairs: Sequence[Tuple[int, int]] = ()) -> str:
    """SVG of the page boxes, the candidate edges and the missing gold pairs."""
    boxes = page.norm_boxes()
    categories = page.labels.node_category if page.labels is not None else None
    parts = _header(page)
    for box in page.boxes:
        color = category_color(categories[box.id] if categories else None)
        parts.append(_rect(boxes[box.id], page, 'box', color, text=box.text))
    for i, j in graph.edges:
        parts.append(_line(boxes[i], boxes[j], page, 'edge', '#1f77b4'))
    for i, j in missing_pairs:
        parts.append(_line(boxes[i], boxes[j], page, 'missing', '#d62728', dash='6,4'))
    parts.append('</svg>')
    return '\n'.join(parts) + '\n'


def render_prediction(page: Page, instances: Sequence[LayoutInstance], pairs: np.ndarray,
                      decisions: np.ndarray, category_names: Sequence[str] = ()) -> str:
    """SVG of decoded instances over their boxes, with accepted and rejected edges."""
    boxes = page.norm_boxes()
    owner = {}
    for inst in instances:
        for m in inst.member_ids:
            owner[m] = inst.category

    parts = _header(page)
    for box in page.boxes:
        parts.append(_rect(boxes[box.id], page, 'box', category_color(owner.get(box.id)),
                           fill=category_color(owner.get(box.id)), text=box.text))
    for (i, j), d in zip(np.asarray(pairs).reshape(-1, 2), decisions):
        if d:
            parts.append(_line(boxes[i], boxes[j], page, 'edge-connected', '#2ca02c'))
        else:
            parts.append(_line(boxes[i], boxes[j], page, 'edge-rejected', '#7f7f7f', dash='2,3'))
    for inst in instances:
        name = category_names[inst.category] if inst.category < len(category_names) else str(inst.category)
        parts.append(_rect(inst.bbox, page, 'instance', category_color(inst.category),
                           text=f'{name} {inst.score:.3f}', width=2.0))
    parts.append('</svg>')
    return '\n'.join(parts) + '\n'


def write_svg(svg: str, path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(svg)
    logger.info(f"Wrote {path}")
