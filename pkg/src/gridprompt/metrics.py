"""Scoring: palette rounding, IOU variants, and detection post-processing."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, GeometryError, NoDetectionError
from .imageops import Image, check_image

# rounding palette for the color-aware metric (order fixes tie-breaking)
COLOR_AWARE_PALETTE = (
    (0.0, 0.0, 0.0),  # black
    (1.0, 1.0, 1.0),  # white
    (0.0, 0.0, 1.0),  # blue
    (0.0, 1.0, 0.0),  # green
)


class Box(NamedTuple):
    top: int
    left: int
    height: int
    width: int


def round_to_palette(image: Image, palette) -> Image:
    """Snap each pixel to the palette color with smallest squared RGB distance.

    Ties go to the earliest palette entry.
    """
    check_image(image)
    pal = np.asarray(palette, dtype=np.float32)
    if pal.ndim != 2 or pal.shape[0] == 0 or pal.shape[1] != 3:
        raise ConfigurationError(f"palette must be a nonempty list of RGB colors, got {palette!r}")
    diff = image[:, :, None, :] - pal[None, None, :, :]
    dist = np.einsum("hwpc,hwpc->hwp", diff, diff)
    idx = np.argmin(dist, axis=2)
    return pal[idx]


def miou_binary(pred: np.ndarray, gt: np.ndarray) -> float:
    """Foreground intersection-over-union; two empty masks score 1.0."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise GeometryError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(pred & gt) / union)


def color_aware_miou(pred: Image, gt_region: np.ndarray, target_color) -> float:
    """IOU after rounding `pred` to {black, white, blue, green}.

    Predicted foreground = pixels that round to the ground-truth shape color.
    """
    target = tuple(np.asarray(target_color, dtype=np.float32).tolist())
    if target not in {tuple(c) for c in COLOR_AWARE_PALETTE}:
        raise ConfigurationError(f"target color {target} is not in the rounding palette")
    rounded = round_to_palette(pred, COLOR_AWARE_PALETTE)
    fg = np.all(rounded == np.asarray(target, dtype=np.float32), axis=2)
    return miou_binary(fg, gt_region)


_CROSS = ndimage.generate_binary_structure(2, 1)   # 3x3 cross for opening
_EIGHT = ndimage.generate_binary_structure(2, 2)   # 8-connectivity for labeling


def largest_component_bbox(mask: np.ndarray) -> Box:
    """Tight box of the largest 8-connected component after one 3x3-cross opening.

    Area ties resolve to the component whose first pixel comes earliest in
    row-major order. Raises NoDetectionError when nothing survives.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise GeometryError(f"mask must be 2-D, got shape {mask.shape}")
    opened = ndimage.binary_opening(mask, structure=_CROSS)
    labels, count = ndimage.label(opened, structure=_EIGHT)
    if count == 0:
        raise NoDetectionError("no foreground component after opening")
    areas = np.bincount(labels.ravel())[1:]
    best_area = areas.max()
    tied = np.flatnonzero(areas == best_area) + 1
    if len(tied) == 1:
        pick = tied[0]
    else:
        flat = labels.ravel()
        pick = min(tied, key=lambda lab: int(np.argmax(flat == lab)))
    ys, xs = np.nonzero(labels == pick)
    top, left = int(ys.min()), int(xs.min())
    return Box(top, left, int(ys.max()) - top + 1, int(xs.max()) - left + 1)


def bbox_iou(a: Box, b: Box) -> float:
    """Intersection-over-union of two axis-aligned rectangles."""
    a, b = Box(*a), Box(*b)
    if a.height <= 0 or a.width <= 0 or b.height <= 0 or b.width <= 0:
        raise ConfigurationError("boxes must have positive dims")
    top = max(a.top, b.top)
    left = max(a.left, b.left)
    bottom = min(a.top + a.height, b.top + b.height)
    right = min(a.left + a.width, b.left + b.width)
    inter = max(0, bottom - top) * max(0, right - left)
    union = a.height * a.width + b.height * b.width - inter
    return float(inter / union)


def mse(pred: Image, gt: Image) -> float:
    check_image(pred)
    check_image(gt)
    if pred.shape != gt.shape:
        raise GeometryError(f"image shapes differ: {pred.shape} vs {gt.shape}")
    d = pred.astype(np.float64) - gt.astype(np.float64)
    return float(np.mean(d * d))
