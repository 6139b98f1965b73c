"""Blending and background compositing for aligned portrait pairs.

The morph itself is a plain additive blend of the two aligned images.
Compositing then copies the morphed face into one donor background with
a frequency split: low spatial frequencies transition smoothly through
a feathered mask (no visible seam), high frequencies switch with a
sharp binary mask (no ghosted double structure along the seam).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import ParameterError
from .imagecore import gaussian_blur

__all__ = [
    "additive_blend",
    "face_mask_from_landmarks",
    "background_composite",
]


def additive_blend(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """Per-sample blend (1-alpha)*a + alpha*b.

    Computed as a + alpha*(b - a) so equal inputs pass through exactly;
    the alpha endpoints return exact copies.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"image shapes differ: {a.shape} vs {b.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 0.0:
        return a.copy()
    if alpha == 1.0:
        return b.copy()
    return a + alpha * (b - a)


def face_mask_from_landmarks(
    lm: np.ndarray, size, feather_sigma: float, outline_indices=None
):
    """Binary and feathered masks of the landmark convex hull.

    ``size`` is (width, height). ``outline_indices`` selects the subset
    of landmarks forming the face outline; default is all of them. The
    binary mask is 1.0 at pixel centers inside (or on) the hull; the
    feathered mask is its Gaussian blur, clamped to [0, 1].
    """
    lm = np.asarray(lm, dtype=np.float64)
    if lm.ndim != 2 or lm.shape[1] != 2 or lm.shape[0] < 3:
        raise ParameterError(f"need an (N>=3, 2) landmark array, got {lm.shape}")
    pts = lm if outline_indices is None else lm[list(outline_indices)]
    if len(pts) < 3:
        raise ParameterError("face outline needs at least 3 landmarks")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise ParameterError(f"degenerate face outline (collinear?): {exc}") from exc

    w, h = int(size[0]), int(size[1])
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    inside = np.ones((h, w), dtype=bool)
    # hull.equations: rows (nx, ny, offset) with nx*x + ny*y + offset <= 0 inside
    for nx, ny, off in hull.equations:
        inside &= nx * xx + ny * yy + off <= 1e-9
    binary = inside.astype(np.float64)
    feathered = np.clip(gaussian_blur(binary, feather_sigma), 0.0, 1.0)
    return binary, feathered


def background_composite(
    morph: np.ndarray,
    donor: np.ndarray,
    binary_mask: np.ndarray,
    feathered_mask: np.ndarray,
    split_sigma: float = 8.0,
) -> np.ndarray:
    """Frequency-split insertion of the morphed face into a donor image.

    Both images split into low = gaussian_blur(img, split_sigma) and
    high = img - low. The output recombines
    feathered*low(morph) + (1-feathered)*low(donor)
    + binary*high(morph) + (1-binary)*high(donor).
    Values are not clamped here; quantization happens only at encode.
    """
    morph = np.asarray(morph, dtype=np.float64)
    donor = np.asarray(donor, dtype=np.float64)
    if morph.shape != donor.shape:
        raise ParameterError(f"image shapes differ: {morph.shape} vs {donor.shape}")
    binary_mask = np.asarray(binary_mask, dtype=np.float64)
    feathered_mask = np.asarray(feathered_mask, dtype=np.float64)
    if binary_mask.shape != morph.shape[:2] or feathered_mask.shape != morph.shape[:2]:
        raise ParameterError(
            f"mask shapes {binary_mask.shape}/{feathered_mask.shape} do not match "
            f"image {morph.shape[:2]}"
        )
    fb = binary_mask
    ff = feathered_mask
    if morph.ndim == 3:
        fb = fb[:, :, None]
        ff = ff[:, :, None]

    low_m = gaussian_blur(morph, split_sigma)
    low_d = gaussian_blur(donor, split_sigma)
    high_m = morph - low_m
    high_d = donor - low_d
    return (ff * low_m + (1.0 - ff) * low_d) + (fb * high_m + (1.0 - fb) * high_d)
