"""Image primitives: loading, filtering, differentiation, sampling, warping.

Images are plain float64 numpy arrays in the nominal range [0, 1]:
``(H, W)`` for single-channel, ``(H, W, 3)`` for color. The coordinate
convention is top-left origin, x to the right (second axis), y down
(first axis); points are ``(x, y)`` pairs. High-pass outputs may be
negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ImageIOError, ParameterError

__all__ = [
    "GradientPair",
    "WarpField",
    "load_image",
    "save_image",
    "to_u8",
    "to_grayscale",
    "gaussian_kernel",
    "gaussian_blur",
    "high_pass",
    "gradient",
    "sample_bilinear",
    "warp_image",
]


class GradientPair(NamedTuple):
    """Per-pixel image derivatives along x (columns) and y (rows)."""

    gx: np.ndarray
    gy: np.ndarray


@dataclass
class WarpField:
    """Dense per-pixel displacement field.

    ``dx``/``dy`` are ``(H, W)`` float64 arrays; a warped image reads its
    value at ``(x + dx[y, x], y + dy[y, x])`` (backward warping, field
    anchored at the destination pixel).
    """

    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        self.dx = np.asarray(self.dx, dtype=np.float64)
        self.dy = np.asarray(self.dy, dtype=np.float64)
        if self.dx.ndim != 2 or self.dx.shape != self.dy.shape:
            raise ParameterError(
                f"warp field planes must be matching 2-D arrays, "
                f"got {self.dx.shape} and {self.dy.shape}"
            )

    @classmethod
    def zeros(cls, height: int, width: int) -> "WarpField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.dx.shape

    @property
    def height(self) -> int:
        return self.dx.shape[0]

    @property
    def width(self) -> int:
        return self.dx.shape[1]

    def copy(self) -> "WarpField":
        return WarpField(self.dx.copy(), self.dy.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.dx).all() and np.isfinite(self.dy).all())


def _require_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] in (1, 3):
        return img
    raise ParameterError(f"{name} must be (H, W) or (H, W, 1|3), got shape {img.shape}")


def load_image(path) -> np.ndarray:
    """Decode an 8-bit PNG or JPEG into a float64 array in [0, 1].

    Grayscale files give ``(H, W)``; everything else is converted to RGB
    ``(H, W, 3)``. Values are mapped by v / 255.
    """
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise ImageIOError(f"unsupported image format {im.format!r}: {path}")
            if im.mode in ("I", "I;16", "F"):
                raise ImageIOError(f"unsupported sample depth {im.mode!r}: {path}")
            if im.mode != "L":
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64)
    except ImageIOError:
        raise
    except (OSError, ValueError) as exc:
        raise ImageIOError(f"cannot read image {path}: {exc}") from exc
    return arr / 255.0


def to_u8(img: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and quantize to uint8 (round half to even)."""
    img = _require_image(img)
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img: np.ndarray, path, jpeg_quality: int = 95) -> None:
    """Encode to PNG or JPEG depending on the file extension."""
    u8 = to_u8(img)
    if u8.ndim == 3 and u8.shape[2] == 1:
        u8 = u8[:, :, 0]
    pim = Image.fromarray(u8)
    suffix = str(path).lower()
    try:
        if suffix.endswith(".png"):
            pim.save(path, format="PNG")
        elif suffix.endswith((".jpg", ".jpeg")):
            pim.save(path, format="JPEG", quality=jpeg_quality, subsampling=2)
        else:
            raise ImageIOError(f"unsupported output extension: {path}")
    except OSError as exc:
        raise ImageIOError(f"cannot write image {path}: {exc}") from exc


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Reduce to one channel via luminance 0.299 R + 0.587 G + 0.114 B."""
    img = _require_image(img)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[:, :, 0]
    return img[:, :, 0] * 0.299 + img[:, :, 1] * 0.587 + img[:, :, 2] * 0.114


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled 1-D Gaussian, radius ceil(3*sigma), normalized to sum 1."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge-clamp border handling."""
    img = np.asarray(_require_image(img), dtype=np.float64)
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(img, k, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k, axis=1, mode="nearest")
    return out


def high_pass(img: np.ndarray, sigma: float) -> np.ndarray:
    """Remove low spatial frequencies: img minus its Gaussian blur."""
    return np.asarray(img, dtype=np.float64) - gaussian_blur(img, sigma)


def gradient(img: np.ndarray) -> GradientPair:
    """Central-difference derivatives, one-sided at the borders."""
    img = _require_image(img)
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ParameterError(f"gradient needs at least 2x2 pixels, got {img.shape}")
    gy = np.gradient(img, axis=0)
    gx = np.gradient(img, axis=1)
    return GradientPair(gx=gx, gy=gy)


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``img`` at real coordinates with clamping; vectorized core."""
    h, w = img.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    v00 = img[y0, x0]
    v10 = img[y0, x1]
    v01 = img[y1, x0]
    v11 = img[y1, x1]
    return (
        v00 * ((1.0 - fx) * (1.0 - fy))
        + v10 * (fx * (1.0 - fy))
        + v01 * ((1.0 - fx) * fy)
        + v11 * (fx * fy)
    )


def sample_bilinear(img: np.ndarray, x, y):
    """Bilinear sample at real pixel coordinates (x, y).

    Coordinates outside the valid rectangle are clamped to it first.
    Accepts scalars or arrays; returns per-channel values.
    """
    img = np.asarray(_require_image(img), dtype=np.float64)
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    out = _bilinear(img, xs, ys)
    if np.isscalar(x) and np.isscalar(y):
        return float(out) if img.ndim == 2 else out
    return out


def warp_image(img: np.ndarray, field: WarpField) -> np.ndarray:
    """Backward-warp: output(p) = img(p + field(p)), sampled bilinearly."""
    img = np.asarray(_require_image(img), dtype=np.float64)
    if field.shape != img.shape[:2]:
        raise ParameterError(
            f"warp field shape {field.shape} does not match image {img.shape[:2]}"
        )
    h, w = field.shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return _bilinear(img, xx + field.dx, yy + field.dy)
