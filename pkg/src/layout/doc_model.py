"""
Document model - Pages, text boxes, gold labels and the box geometry.

All internal geometry works on normalized coordinates (fractions of the page
size); pixel coordinates only exist at the I/O boundary.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import DegenerateBox, EmptySet

logger = logging.getLogger(__name__)

BOX_INFO_MODES = ('four', 'eight')


@dataclass(frozen=True)
class TextBox:
    """One OCR box. `text` is carried for display only and never fed to the model."""

    id: int
    bbox_px: Tuple[float, float, float, float]
    text: Optional[str] = None


@dataclass(frozen=True)
class NormBox:
    """Axis-aligned box in normalized page coordinates."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def w(self) -> float:
        return self.xmax - self.xmin

    @property
    def h(self) -> float:
        return self.ymax - self.ymin

    @property
    def xctr(self) -> float:
        return (self.xmin + self.xmax) / 2.0

    @property
    def yctr(self) -> float:
        return (self.ymin + self.ymax) / 2.0

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


@dataclass(frozen=True)
class GoldLabels:
    """
    Gold annotation of a page.

    Attributes:
        node_category: Category index per box
        groups: Partition of box ids into layout instances
        links: Directed (src_group, dst_group) pairs for entity linking
        category_names: Names of the category indices
    """

    node_category: Tuple[int, ...]
    groups: Tuple[Tuple[int, ...], ...]
    links: Tuple[Tuple[int, int], ...] = ()
    category_names: Tuple[str, ...] = ()

    def group_of(self) -> List[int]:
        """Return the group index of every box id."""
        owner = [-1] * len(self.node_category)
        for g, members in enumerate(self.groups):
            for member in members:
                owner[member] = g
        return owner


@dataclass(frozen=True)
class Page:
    """A document page: size in pixels, its text boxes and optional labels."""

    page_id: str
    width_px: int
    height_px: int
    boxes: Tuple[TextBox, ...]
    labels: Optional[GoldLabels] = None
    image_path: Optional[str] = None
    _norm: Tuple[NormBox, ...] = field(default=(), repr=False, compare=False)

    @property
    def n_boxes(self) -> int:
        return len(self.boxes)

    def norm_boxes(self) -> Tuple[NormBox, ...]:
        """Normalized boxes in id order (computed once per page)."""
        if len(self._norm) != len(self.boxes):
            object.__setattr__(self, '_norm', tuple(normalize_box(b, self) for b in self.boxes))
        return self._norm


def normalize_box(box: TextBox, page: Page) -> NormBox:
    """
    Clamp a pixel box to the page and divide by the page size.

    Args:
        box: Text box in pixel coordinates
        page: Page the box belongs to

    Returns:
        NormBox with 0 <= xmin < xmax <= 1 and 0 <= ymin < ymax <= 1

    Raises:
        DegenerateBox: if the clamped box has zero width or height
    """
    if page.width_px <= 0 or page.height_px <= 0:
        raise DegenerateBox(f"page {page.page_id} has non-positive size {page.width_px}x{page.height_px}")

    xmin, ymin, xmax, ymax = (float(v) for v in box.bbox_px)
    cxmin = min(max(xmin, 0.0), page.width_px)
    cxmax = min(max(xmax, 0.0), page.width_px)
    cymin = min(max(ymin, 0.0), page.height_px)
    cymax = min(max(ymax, 0.0), page.height_px)

    if (cxmin, cymin, cxmax, cymax) != (xmin, ymin, xmax, ymax):
        logger.debug(f"Clamped box {box.id} on page {page.page_id} to the page bounds")

    if cxmin >= cxmax or cymin >= cymax:
        raise DegenerateBox(f"box {box.id} is degenerate: {box.bbox_px}")

    return NormBox(
        cxmin / page.width_px,
        cymin / page.height_px,
        cxmax / page.width_px,
        cymax / page.height_px,
    )


def layout_vector(b: NormBox, mode: str = 'eight') -> np.ndarray:
    """
    Layout descriptor of a box.

    eight -> (xmin, ymin, xmax, ymax, xctr, yctr, w, h)
    four  -> (xmin, ymin, w, h)
    """
    if mode == 'eight':
        return np.array([b.xmin, b.ymin, b.xmax, b.ymax, b.xctr, b.yctr, b.w, b.h], dtype=np.float64)
    if mode == 'four':
        return np.array([b.xmin, b.ymin, b.w, b.h], dtype=np.float64)
    raise ValueError(f"unknown box info mode: {mode}")


def layout_width(mode: str) -> int:
    return 8 if mode == 'eight' else 4


def min_bounding_rect(boxes: Iterable[NormBox]) -> NormBox:
    """Componentwise (min xmin, min ymin, max xmax, max ymax) of a nonempty set."""
    boxes = list(boxes)
    if not boxes:
        raise EmptySet("min_bounding_rect of an empty set")
    return NormBox(
        min(b.xmin for b in boxes),
        min(b.ymin for b in boxes),
        max(b.xmax for b in boxes),
        max(b.ymax for b in boxes),
    )


def interval_overlap_1d(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    """Length of the intersection of two closed intervals (0 when disjoint)."""
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))


def boxes_to_array(boxes: Sequence[NormBox]) -> np.ndarray:
    """Stack boxes into an [N, 4] array of (xmin, ymin, xmax, ymax)."""
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64)
