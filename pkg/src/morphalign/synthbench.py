"""Synthetic pairs with known ground truth, plus alignment scoring.

The shapes model the structures whose misalignment produces ghosting in
blended portraits: a filled disk, a thin ring (iris border), a small
bright dot (specular highlight), and an arc (nostril rim). Generation
is purely deterministic in (kind, size, offset, noise_sigma, seed).

Displacement convention: ``img2(p) = img1(p + offset)`` — the offset is
the sampling displacement that maps image-2 coordinates onto image 1,
matching the backward-warp convention used everywhere else. (The
rendered shape therefore appears shifted by ``-offset`` in img2.) The
ground-truth field split is ``w1 = +alpha * offset`` and
``w2 = -(1 - alpha) * offset``: warping img1 by w1 and img2 by w2 then
lands both shapes at the same place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ParameterError
from .imagecore import gaussian_blur, high_pass, to_grayscale
from .pwalign import AlignParams, AlignResult, data_energy, WarpField

__all__ = [
    "SHAPE_KINDS",
    "SyntheticPair",
    "EndpointError",
    "make_pair",
    "endpoint_error",
    "residual_reduction",
    "make_portrait",
]

SHAPE_KINDS = ("disk", "ring", "dot", "arc")

_BACKGROUND = 0.0
_AMPLITUDE = 0.8


@dataclass
class SyntheticPair:
    """A generated image pair with its ground-truth displacement.

    ``support`` marks the pixels of img1's noiseless shape with
    indicator value > 0.5; alignment error is scored there.
    """

    img1: np.ndarray
    img2: np.ndarray
    offset: tuple
    kind: str
    noise_sigma: float
    seed: int
    support: np.ndarray

    @property
    def size(self) -> tuple:
        return (self.img1.shape[1], self.img1.shape[0])


class EndpointError(NamedTuple):
    mean: float
    max: float


def _shape_field(kind: str, xx: np.ndarray, yy: np.ndarray, cx: float, cy: float, scale: float) -> np.ndarray:
    """Anti-aliased shape indicator in [0, 1] at pixel centers (xx, yy)."""
    dist = np.hypot(xx - cx, yy - cy)
    if kind == "disk":
        r = 0.22 * scale
        return np.clip(r + 0.5 - dist, 0.0, 1.0)
    if kind == "ring":
        r = 0.28 * scale
        half = 1.5
        return np.clip(half + 0.5 - np.abs(dist - r), 0.0, 1.0)
    if kind == "dot":
        r = 2.5
        return np.clip(r + 0.5 - dist, 0.0, 1.0)
    if kind == "arc":
        r = 0.30 * scale
        half = 1.5
        radial = np.clip(half + 0.5 - np.abs(dist - r), 0.0, 1.0)
        # lower arc, like a nostril rim: angles within [35, 145] degrees
        # (y grows downward, so this is the lower half)
        ang = np.degrees(np.arctan2(yy - cy, xx - cx))
        angular = np.clip((55.0 - np.abs(ang - 90.0)) / 8.0, 0.0, 1.0)
        return radial * angular
    raise ParameterError(f"unknown shape kind {kind!r}; expected one of {SHAPE_KINDS}")


def make_pair(
    kind: str,
    size,
    offset,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> SyntheticPair:
    """Generate a shape pair displaced by a known constant offset.

    ``size`` is a single side length or (width, height); both sides
    must be >= 32. ``offset = (dx, dy)`` with |offset| <= 10 px. With
    ``noise_sigma > 0``, i.i.d. Gaussian pixel noise (seeded) is added
    to both images independently.
    """
    if kind not in SHAPE_KINDS:
        raise ParameterError(f"unknown shape kind {kind!r}; expected one of {SHAPE_KINDS}")
    if np.isscalar(size):
        size = (int(size), int(size))
    w, h = int(size[0]), int(size[1])
    if w < 32 or h < 32:
        raise ParameterError(f"size must be at least 32x32, got {w}x{h}")
    dx, dy = float(offset[0]), float(offset[1])
    if math.hypot(dx, dy) > 10.0:
        raise ParameterError(f"|offset| must be <= 10 px, got {offset}")
    if noise_sigma < 0:
        raise ParameterError(f"noise_sigma must be >= 0, got {noise_sigma}")

    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    scale = min(w, h)
    shape1 = _shape_field(kind, xx, yy, cx, cy, scale)
    # img2 samples img1 at +offset, so its shape sits at center - offset
    shape2 = _shape_field(kind, xx, yy, cx - dx, cy - dy, scale)
    support = shape1 > 0.5

    img1 = _BACKGROUND + _AMPLITUDE * shape1
    img2 = _BACKGROUND + _AMPLITUDE * shape2
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        img1 = img1 + noise_sigma * rng.standard_normal((h, w))
        img2 = img2 + noise_sigma * rng.standard_normal((h, w))
    img1 = np.clip(img1, 0.0, 1.0)
    img2 = np.clip(img2, 0.0, 1.0)
    return SyntheticPair(
        img1=img1,
        img2=img2,
        offset=(dx, dy),
        kind=kind,
        noise_sigma=float(noise_sigma),
        seed=int(seed),
        support=support,
    )


def endpoint_error(result: AlignResult, pair: SyntheticPair, alpha: float = 0.5) -> EndpointError:
    """Distance between recovered and ground-truth displacements.

    Ground truth splits the pair's offset oppositely between the two
    fields: w1 = +alpha * offset, w2 = -(1 - alpha) * offset. Errors of
    both fields are pooled over the shape-support pixels; returns
    (mean, max) in pixels.
    """
    if result.w1.shape != pair.img1.shape:
        raise ParameterError(
            f"result fields {result.w1.shape} do not match pair images "
            f"{pair.img1.shape}"
        )
    dx, dy = pair.offset
    gt1 = (alpha * dx, alpha * dy)
    gt2 = (-(1.0 - alpha) * dx, -(1.0 - alpha) * dy)
    e1 = np.hypot(result.w1.dx - gt1[0], result.w1.dy - gt1[1])[pair.support]
    e2 = np.hypot(result.w2.dx - gt2[0], result.w2.dy - gt2[1])[pair.support]
    errors = np.concatenate([e1, e2])
    if errors.size == 0:
        raise ParameterError("pair has empty shape support")
    return EndpointError(mean=float(errors.mean()), max=float(errors.max()))


def residual_reduction(pair: SyntheticPair, result: AlignResult, params: Optional[AlignParams] = None) -> float:
    """Data-energy ratio after/before alignment on the high-pass pair.

    1.0 means no improvement; identical inputs (zero before-energy) are
    rejected since the ratio is undefined.
    """
    if params is None:
        params = AlignParams()
    h1 = high_pass(to_grayscale(pair.img1), params.hp_sigma)
    h2 = high_pass(to_grayscale(pair.img2), params.hp_sigma)
    height, width = h1.shape
    zero = WarpField.zeros(height, width)
    before = data_energy(h1, h2, zero, zero, roi=params.roi)
    if before == 0.0:
        raise ParameterError("identical inputs: residual reduction is undefined")
    after = data_energy(h1, h2, result.w1, result.w2, roi=params.roi)
    return after / before


# ---------------------------------------------------------------------------
# portrait-scale fixture


def make_portrait(seed: int, size=(700, 900), eye_distance: float = 120.0):
    """Render a schematic textured portrait with landmark annotations.

    Returns ``(image, landmarks)``: an (H, W, 3) float image and a
    (14, 2) landmark array whose first two rows are the left and right
    eye centers. Per-seed jitter moves every facial feature slightly,
    so two different seeds act as two "subjects" of a morph pair. The
    texture is rich enough for realistic JPEG sizing experiments.
    """
    w, h = int(size[0]), int(size[1])
    rng = np.random.default_rng(seed)
    j = lambda s: rng.normal(0.0, s)

    cx = w / 2.0 + j(4.0)
    eye_y = h * 0.44 + j(5.0)
    half_eye = eye_distance / 2.0
    eye_l = np.array([cx - half_eye, eye_y])
    eye_r = np.array([cx + half_eye, eye_y])
    face_rx = eye_distance * 1.05 + j(3.0)
    face_ry = eye_distance * 1.45 + j(4.0)
    face_cy = eye_y + face_ry * 0.25
    nose = np.array([cx + j(2.0), eye_y + eye_distance * 0.55 + j(3.0)])
    mouth_y = eye_y + eye_distance * 0.95 + j(3.0)

    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")

    # background: soft diagonal gradient + coarse cloudy texture
    img = np.zeros((h, w, 3))
    grad = 0.35 + 0.25 * (xx / w) + 0.15 * (yy / h)
    cloud = gaussian_blur(rng.standard_normal((h, w)), 12.0)
    cloud = cloud / (np.abs(cloud).max() + 1e-12)
    base = grad + 0.08 * cloud
    img[:, :, 0] = base * 0.9
    img[:, :, 1] = base * 0.95
    img[:, :, 2] = base * 1.05

    def paint(mask, color, soft=1.0):
        m = np.clip(mask / soft, 0.0, 1.0)[:, :, None]
        img[:] = (1.0 - m) * img + m * np.asarray(color)[None, None, :]

    # head
    ell = 1.0 - np.sqrt(((xx - cx) / face_rx) ** 2 + ((yy - face_cy) / face_ry) ** 2)
    paint(ell * face_rx, [0.85, 0.68, 0.55], soft=2.0)
    # hair cap
    hair = 1.0 - np.sqrt(((xx - cx) / (face_rx * 1.15)) ** 2 + ((yy - (face_cy - face_ry * 0.75)) / (face_ry * 0.55)) ** 2)
    paint(np.where(yy < eye_y - eye_distance * 0.35, hair * face_rx, -1.0), [0.25, 0.18, 0.12], soft=2.0)

    r_eye = eye_distance * 0.11
    for ex, ey in (eye_l, eye_r):
        d = np.hypot(xx - ex, yy - ey)
        paint(r_eye * 1.8 - d, [0.95, 0.94, 0.92], soft=1.5)  # sclera
        paint(r_eye - d, [0.35, 0.22, 0.12], soft=1.0)  # iris
        ring = 1.2 - np.abs(d - r_eye)
        paint(ring, [0.12, 0.08, 0.05], soft=1.0)  # iris rim
        paint(r_eye * 0.4 - d, [0.05, 0.05, 0.06], soft=0.8)  # pupil
        glint = 1.2 - np.hypot(xx - (ex + r_eye * 0.35), yy - (ey - r_eye * 0.35))
        paint(glint, [1.0, 1.0, 1.0], soft=0.8)  # specular dot

    # brows
    for ex, ey in (eye_l, eye_r):
        brow = 2.0 - np.abs(yy - (ey - eye_distance * 0.22) - 0.08 * (xx - ex)) - np.where(np.abs(xx - ex) < r_eye * 2.2, 0.0, 1e9)
        paint(brow, [0.3, 0.22, 0.15], soft=1.5)

    # nose: two nostril arcs
    for s in (-1.0, 1.0):
        nx = nose[0] + s * eye_distance * 0.13
        d = np.hypot(xx - nx, yy - nose[1])
        arc = 1.3 - np.abs(d - eye_distance * 0.07)
        arc = np.where(yy > nose[1], arc, -1.0)
        paint(arc, [0.45, 0.3, 0.24], soft=1.0)

    # mouth
    mouth = 1.0 - np.sqrt(((xx - cx) / (eye_distance * 0.42)) ** 2 + ((yy - mouth_y) / (eye_distance * 0.13)) ** 2)
    paint(mouth * eye_distance * 0.42, [0.62, 0.3, 0.3], soft=2.0)

    # skin + global fine texture so JPEG sizes behave like photographs
    fine = gaussian_blur(rng.standard_normal((h, w)), 1.2)
    fine = fine / (np.abs(fine).max() + 1e-12)
    img += 0.035 * fine[:, :, None]
    img = np.clip(img, 0.0, 1.0)

    lm = np.array(
        [
            eye_l,                                              # 0 left eye center
            eye_r,                                              # 1 right eye center
            [eye_l[0] - r_eye * 1.6, eye_l[1]],                 # 2 left eye outer
            [eye_l[0] + r_eye * 1.6, eye_l[1]],                 # 3 left eye inner
            [eye_r[0] - r_eye * 1.6, eye_r[1]],                 # 4 right eye inner
            [eye_r[0] + r_eye * 1.6, eye_r[1]],                 # 5 right eye outer
            nose,                                               # 6 nose tip
            [nose[0] - eye_distance * 0.13, nose[1]],           # 7 left nostril
            [nose[0] + eye_distance * 0.13, nose[1]],           # 8 right nostril
            [cx - eye_distance * 0.42, mouth_y],                # 9 mouth left
            [cx + eye_distance * 0.42, mouth_y],                # 10 mouth right
            [cx, mouth_y + eye_distance * 0.18],                # 11 lower lip
            [cx, face_cy + face_ry * 0.98],                     # 12 chin
            [cx, eye_y - eye_distance * 0.45],                  # 13 forehead
        ]
    )
    return img, lm
