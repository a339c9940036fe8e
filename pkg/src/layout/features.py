"""
Features - Node inputs (layout + pooled image features) and edge inputs.

Edge inputs concatenate, in this order and only when enabled:
F_pair (both node embeddings), F_rope (sinusoidal reading-order code),
F_rel (relationship-proposal deltas, 18 values), polar (distance, angle) and
node-class (node logits of both endpoints; added by the model).
"""

import logging
import math
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from cachetools import LRUCache

from errors import (
    AllPartsDisabled,
    DegenerateBox,
    EmptyFeatureMap,
    InvalidConfig,
    OddDim,
    ShapeMismatch,
)
from layout.doc_model import NormBox, Page, boxes_to_array, min_bounding_rect

try:
    from PIL import Image, ImageDraw
    PIL_AVAILABLE = True
except ImportError:
    PIL_AVAILABLE = False
    logging.warning("Pillow not available, RawPixelProvider disabled")

logger = logging.getLogger(__name__)

REL_DIM = 18
POLAR_DIM = 2


@dataclass(frozen=True)
class EdgeFeatureConfig:
    use_pair: bool = True
    use_rope: bool = True
    use_rel: bool = True
    rope_dim: int = 32
    use_polar: bool = False
    use_node_class: bool = False

    def __post_init__(self):
        if not (self.use_pair or self.use_rope or self.use_rel):
            raise AllPartsDisabled("enable at least one of F_pair, F_rope, F_rel")
        if self.rope_dim <= 0 or self.rope_dim % 2:
            raise OddDim(f"rope_dim must be a positive even integer, got {self.rope_dim}")

    def constant_dim(self) -> int:
        """Width of the parts that do not depend on learned embeddings."""
        width = 0
        if self.use_rope:
            width += self.rope_dim
        if self.use_rel:
            width += REL_DIM
        if self.use_polar:
            width += POLAR_DIM
        return width


# Relationship-proposal features

def rel_delta(S: NormBox, O: NormBox) -> np.ndarray:
    """
    Six deltas between a subject box S and an object box O.

    (t_x^SO, t_y^SO, t_w^SO, t_h^SO, t_x^OS, t_y^OS) from the centers,
    widths and heights of both boxes.
    """
    if S.w <= 0 or S.h <= 0 or O.w <= 0 or O.h <= 0:
        raise DegenerateBox(f"rel_delta needs positive sizes, got {S} and {O}")
    return np.array([
        (S.xctr - O.xctr) / S.w,
        (S.yctr - O.yctr) / S.h,
        math.log(S.w / O.w),
        math.log(S.h / O.h),
        (O.xctr - S.xctr) / O.w,
        (O.yctr - S.yctr) / O.h,
    ], dtype=np.float64)


def rel_feature(S: NormBox, O: NormBox) -> np.ndarray:
    """Delta(S, O) || Delta(S, R) || Delta(O, R) with R the bounding rectangle of S and O."""
    R = min_bounding_rect((S, O))
    return np.concatenate([rel_delta(S, O), rel_delta(S, R), rel_delta(O, R)])


def _delta_batch(s: np.ndarray, o: np.ndarray) -> np.ndarray:
    sw, sh = s[:, 2] - s[:, 0], s[:, 3] - s[:, 1]
    ow, oh = o[:, 2] - o[:, 0], o[:, 3] - o[:, 1]
    sx, sy = (s[:, 0] + s[:, 2]) / 2.0, (s[:, 1] + s[:, 3]) / 2.0
    ox, oy = (o[:, 0] + o[:, 2]) / 2.0, (o[:, 1] + o[:, 3]) / 2.0
    return np.stack([
        (sx - ox) / sw,
        (sy - oy) / sh,
        np.log(sw / ow),
        np.log(sh / oh),
        (ox - sx) / ow,
        (oy - sy) / oh,
    ], axis=1)


def rel_features_batch(boxes: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """rel_feature for many ordered pairs at once; boxes is an [N, 4] array."""
    s = boxes[src]
    o = boxes[dst]
    r = np.stack([
        np.minimum(s[:, 0], o[:, 0]),
        np.minimum(s[:, 1], o[:, 1]),
        np.maximum(s[:, 2], o[:, 2]),
        np.maximum(s[:, 3], o[:, 3]),
    ], axis=1)
    return np.concatenate([_delta_batch(s, o), _delta_batch(s, r), _delta_batch(o, r)], axis=1)


def polar_features_batch(boxes: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """(distance, angle) of the center offset from src to dst."""
    cx = (boxes[:, 0] + boxes[:, 2]) / 2.0
    cy = (boxes[:, 1] + boxes[:, 3]) / 2.0
    dx = cx[dst] - cx[src]
    dy = cy[dst] - cy[src]
    return np.stack([np.hypot(dx, dy), np.arctan2(dy, dx)], axis=1)


# Reading order

def reading_order_codes(pivot: int, neighbors: Sequence[int], boxes: Sequence[NormBox]) -> Dict[int, int]:
    """
    Rank the sampled neighbors of a pivot in reading order.

    Neighbors are sorted by (yctr, xctr, id) and numbered 0..m-1.

    Returns:
        Mapping neighbor id -> code
    """
    ordered = sorted(neighbors, key=lambda j: (boxes[j].yctr, boxes[j].xctr, j))
    return {j: code for code, j in enumerate(ordered)}


def sinusoidal_encode(index: int, dim: int) -> np.ndarray:
    """Transformer-style sinusoidal encoding of a non-negative integer index."""
    if dim <= 0 or dim % 2:
        raise OddDim(f"encoding dimension must be a positive even integer, got {dim}")
    return sinusoidal_table(np.array([index]), dim)[0]


def sinusoidal_table(indices: np.ndarray, dim: int) -> np.ndarray:
    if dim <= 0 or dim % 2:
        raise OddDim(f"encoding dimension must be a positive even integer, got {dim}")
    t = np.arange(dim // 2, dtype=np.float64)
    freq = np.power(10000.0, 2.0 * t / dim)
    angles = np.asarray(indices, dtype=np.float64)[:, None] / freq[None, :]
    out = np.empty((angles.shape[0], dim), dtype=np.float64)
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


# Image features

def roi_align(feature_map: np.ndarray, box: NormBox, out: int = 3, sampling_ratio: int = 2) -> np.ndarray:
    """
    Pool a [C, H, W] feature map over a normalized box without rounding.

    Each of the out x out bins averages sampling_ratio^2 bilinear samples at
    regularly spaced points; samples outside the map clamp to the border.

    Returns:
        [out, out, C] array
    """
    return roi_align_batch(feature_map, boxes_to_array([box]), out, sampling_ratio)[0]


def roi_align_batch(feature_map: np.ndarray, boxes: np.ndarray, out: int = 3, sampling_ratio: int = 2) -> np.ndarray:
    """roi_align for an [N, 4] array of normalized boxes; returns [N, out, out, C]."""
    if feature_map is None or feature_map.ndim != 3 or 0 in feature_map.shape:
        raise EmptyFeatureMap("roi_align needs a nonempty [C, H, W] feature map")
    if out < 1 or sampling_ratio < 1:
        raise InvalidConfig("roi_align needs out >= 1 and sampling_ratio >= 1")

    C, H, W = feature_map.shape
    n = boxes.shape[0]
    if n == 0:
        return np.zeros((0, out, out, C), dtype=np.float64)

    # half-pixel centers: pixel k covers [k, k+1) and its value sits at k + 0.5
    x0 = boxes[:, 0] * W - 0.5
    y0 = boxes[:, 1] * H - 0.5
    bin_w = (boxes[:, 2] - boxes[:, 0]) * W / out
    bin_h = (boxes[:, 3] - boxes[:, 1]) * H / out

    steps = (np.arange(out)[:, None] + (np.arange(sampling_ratio)[None, :] + 0.5) / sampling_ratio).ravel()
    xs = np.clip(x0[:, None] + bin_w[:, None] * steps[None, :], 0.0, W - 1)
    ys = np.clip(y0[:, None] + bin_h[:, None] * steps[None, :], 0.0, H - 1)

    x_lo = np.floor(xs).astype(np.int64)
    y_lo = np.floor(ys).astype(np.int64)
    x_hi = np.minimum(x_lo + 1, W - 1)
    y_hi = np.minimum(y_lo + 1, H - 1)
    fx = xs - x_lo
    fy = ys - y_lo

    fmap = np.moveaxis(np.asarray(feature_map, dtype=np.float64), 0, -1)  # [H, W, C]
    # [n, S_y, S_x, C] with S = out * sampling_ratio
    yl, yh = y_lo[:, :, None], y_hi[:, :, None]
    xl, xh = x_lo[:, None, :], x_hi[:, None, :]
    wy = fy[:, :, None, None]
    wx = fx[:, None, :, None]
    samples = (
        fmap[yl, xl] * (1 - wy) * (1 - wx)
        + fmap[yl, xh] * (1 - wy) * wx
        + fmap[yh, xl] * wy * (1 - wx)
        + fmap[yh, xh] * wy * wx
    )
    samples = samples.reshape(n, out, sampling_ratio, out, sampling_ratio, C)
    return samples.mean(axis=(2, 4))


class ImageFeatureProvider:
    """Yields a [C, H, W] feature map over normalized page coordinates."""

    channels = 0

    def feature_map(self, page: Page) -> Optional[np.ndarray]:
        raise NotImplementedError


class NullProvider(ImageFeatureProvider):
    """No image features; node inputs are the layout vector alone."""

    channels = 0

    def feature_map(self, page: Page) -> Optional[np.ndarray]:
        return None


class RawPixelProvider(ImageFeatureProvider):
    """
    Downsampled page pixels as the feature map.

    Features:
    - Loads the page image (any raster format Pillow reads) and resizes it
      bilinearly to size x size, grayscale (L) or RGB
    - Pages without an image are rasterized from their boxes
    - Thread-safe LRU cache keyed by page id, size, image path and boxes
    """

    def __init__(self, size: int = 112, mode: str = 'L', cache_size: int = 512):
        if not PIL_AVAILABLE:
            raise InvalidConfig("RawPixelProvider requires Pillow")
        if mode not in ('L', 'RGB'):
            raise InvalidConfig(f"image mode must be 'L' or 'RGB', got {mode}")
        if size < 1:
            raise InvalidConfig(f"image size must be positive, got {size}")
        self.size = size
        self.mode = mode
        self.channels = 1 if mode == 'L' else 3
        self._cache = LRUCache(maxsize=cache_size)
        self._lock = threading.Lock()

    def feature_map(self, page: Page) -> np.ndarray:
        key = self._key(page)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached

        if page.image_path:
            with Image.open(page.image_path) as img:
                image = img.convert(self.mode).resize((self.size, self.size), Image.BILINEAR)
        else:
            image = self._rasterize(page)

        arr = np.asarray(image, dtype=np.float64) / 255.0
        fmap = arr[None, :, :] if arr.ndim == 2 else np.moveaxis(arr, -1, 0)
        fmap = np.ascontiguousarray(fmap)

        with self._lock:
            self._cache[key] = fmap
        return fmap

    @staticmethod
    def _key(page: Page):
        # page ids repeat across corpora; the key covers what the map is drawn from
        return (page.page_id, page.image_path, page.width_px, page.height_px,
                tuple(b.bbox_px for b in page.boxes))

    def _rasterize(self, page: Page) -> 'Image.Image':
        """Dark box rectangles on a white canvas."""
        background = 255 if self.mode == 'L' else (255, 255, 255)
        ink = 0 if self.mode == 'L' else (0, 0, 0)
        image = Image.new(self.mode, (self.size, self.size), background)
        draw = ImageDraw.Draw(image)
        for b in page.norm_boxes():
            draw.rectangle(
                [b.xmin * self.size, b.ymin * self.size, b.xmax * self.size, b.ymax * self.size],
                fill=ink,
            )
        return image


def build_provider(name: str, size: int = 112, mode: str = 'L') -> ImageFeatureProvider:
    if name == 'null':
        return NullProvider()
    if name == 'raw':
        return RawPixelProvider(size=size, mode=mode)
    raise InvalidConfig(f"unknown image provider '{name}', expected 'null' or 'raw'")


# Assembly

def assemble_node_input(layout_vec: np.ndarray, image_feat: Optional[np.ndarray], expected_dim: Optional[int] = None) -> np.ndarray:
    """
    Concatenate the flattened ROIAlign output and the layout vector.

    Raises:
        ShapeMismatch: if expected_dim is given and the result differs
    """
    image_part = np.zeros(0) if image_feat is None else np.asarray(image_feat, dtype=np.float64).ravel()
    vec = np.concatenate([image_part, np.asarray(layout_vec, dtype=np.float64)])
    if expected_dim is not None and vec.shape[0] != expected_dim:
        raise ShapeMismatch(f"node input has {vec.shape[0]} values, model expects {expected_dim}")
    return vec


def assemble_edge_input(emb_i: np.ndarray, emb_j: np.ndarray, code_ij: int, rel: np.ndarray,
                        cfg: EdgeFeatureConfig, polar: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Edge input for one ordered pair in the fixed part order.

    Args:
        emb_i, emb_j: Node embeddings of the same length
        code_ij: Reading-order code of j among the neighbors of i
        rel: 18-value relationship feature
        cfg: Enabled parts
        polar: (distance, angle), required when cfg.use_polar

    Returns:
        Concatenated edge input
    """
    emb_i = np.asarray(emb_i, dtype=np.float64)
    emb_j = np.asarray(emb_j, dtype=np.float64)
    if emb_i.shape != emb_j.shape:
        raise ShapeMismatch(f"edge endpoints have embeddings {emb_i.shape} and {emb_j.shape}")
    if np.asarray(rel).shape != (REL_DIM,):
        raise ShapeMismatch(f"relationship feature must have {REL_DIM} values")

    parts: List[np.ndarray] = []
    if cfg.use_pair:
        parts.extend([emb_i, emb_j])
    if cfg.use_rope:
        parts.append(sinusoidal_encode(code_ij, cfg.rope_dim))
    if cfg.use_rel:
        parts.append(np.asarray(rel, dtype=np.float64))
    if cfg.use_polar:
        if polar is None:
            raise ShapeMismatch("polar feature requested but not supplied")
        parts.append(np.asarray(polar, dtype=np.float64))
    return np.concatenate(parts)
