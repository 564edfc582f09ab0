"""Array-image helpers: validation, bilinear resize, uint8/PNG bridges.

Images are float32 numpy arrays of shape (H, W, 3) with values in [0, 1].
"""
from __future__ import annotations

import io

import numpy as np
from PIL import Image as PILImage

from .errors import GeometryError

Image = np.ndarray


def check_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise GeometryError(f"{name} must be an (H, W, 3) array, got {getattr(img, 'shape', None)}")
    if img.shape[0] <= 0 or img.shape[1] <= 0:
        raise GeometryError(f"{name} has empty spatial dims {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1], got range [{img.min()}, {img.max()}]")
    return img


def as_float_image(img: np.ndarray) -> Image:
    """Coerce to float32 without rescaling; validates range."""
    out = np.asarray(img, dtype=np.float32)
    check_image(out)
    return out


def _resize_axis(img: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    """1-D linear resample along `axis` (half-pixel centers, edges clamped)."""
    in_len = img.shape[axis]
    if in_len == out_len:
        return img
    # source coordinate of each output pixel center
    src = (np.arange(out_len, dtype=np.float64) + 0.5) * (in_len / out_len) - 0.5
    lo = np.floor(src).astype(np.int64)
    frac = (src - lo).astype(np.float32)
    lo_c = np.clip(lo, 0, in_len - 1)
    hi_c = np.clip(lo + 1, 0, in_len - 1)
    a = np.take(img, lo_c, axis=axis)
    b = np.take(img, hi_c, axis=axis)
    shape = [1] * img.ndim
    shape[axis] = out_len
    w = frac.reshape(shape)
    return a * (1.0 - w) + b * w


def resize_bilinear(img: Image, height: int, width: int) -> Image:
    """Separable bilinear resize to (height, width). Same-size input is copied."""
    check_image(img)
    if height <= 0 or width <= 0:
        raise GeometryError(f"target size must be positive, got ({height}, {width})")
    if img.shape[0] == height and img.shape[1] == width:
        return img.astype(np.float32, copy=True)
    out = _resize_axis(img.astype(np.float32), height, axis=0)
    out = _resize_axis(out, width, axis=1)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def to_uint8(img: Image) -> np.ndarray:
    check_image(img)
    return np.round(np.asarray(img, dtype=np.float64) * 255.0).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> Image:
    return (np.asarray(arr, dtype=np.float32) / 255.0).astype(np.float32)


def write_png(path, img: Image) -> None:
    PILImage.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")


def read_png(path) -> Image:
    with PILImage.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def encode_png_bytes(img: Image) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(to_uint8(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png_bytes(data: bytes) -> Image:
    with PILImage.open(io.BytesIO(data)) as im:
        return from_uint8(np.asarray(im.convert("RGB")))
