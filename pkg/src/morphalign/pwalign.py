"""Dense pixel-wise alignment of two pre-aligned images.

Estimates two displacement fields w1, w2 — one per image — that bring
the high-pass-filtered versions of both inputs into structural
agreement. The cost being minimized is

    E(w1, w2) = sum_p |h1(p + w1(p)) - h2(p + w2(p))|^2
                + lam * (smoothness(w1) + smoothness(w2)
                         + border(w1) + border(w2))

where the smoothness term penalizes displacement differences between
4-neighbors and the border term pins displacements to zero on the
image (or ROI) perimeter. Minimization is Gauss-Newton: each iteration
linearizes the data term around the current warped images and solves
the resulting normal equations with matrix-free MINRES; a step-halving
line search guarantees the energy trace never increases.

Everything is arranged so that aligning (img2, img1) returns the two
fields of (img1, img2) exactly exchanged, bit for bit: the energy is
symmetric under the exchange, and all floating-point summation orders
here (and inside the solver, via its ``inner`` hook) are invariant
under swapping the two field blocks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError, NumericalBreakdownError, ParameterError
from .imagecore import (
    WarpField,
    gradient,
    high_pass,
    save_image,
    to_grayscale,
    warp_image,
)
from .minres import MinresResult, minres_solve

__all__ = [
    "WarpField",
    "AlignParams",
    "AlignResult",
    "NormalOperator",
    "data_energy",
    "smoothness_energy",
    "border_energy",
    "total_energy",
    "gauss_newton_align",
    "save_warp_field",
    "load_warp_field",
    "warp_field_to_color",
    "save_warp_visualization",
]


@dataclass
class AlignParams:
    """Tuning knobs for the pixel-wise alignment stage.

    lam: weight of the smoothness + border regularizers (>= 0)
    gn_max_iters: Gauss-Newton iteration cap
    gn_energy_tol: stop once the relative energy decrease falls below this
    minres_tol / minres_max_iters: inner linear-solver controls
    hp_sigma: Gaussian sigma of the high-pass prefilter (px)
    step_halvings_max: line-search halvings before giving up on a step
    roi: optional (x, y, width, height) rectangle; pixels outside keep
        zero displacement and contribute no data term
    """

    lam: float = 0.05
    gn_max_iters: int = 20
    gn_energy_tol: float = 1e-4
    minres_tol: float = 1e-6
    minres_max_iters: int = 2000
    hp_sigma: float = 2.0
    step_halvings_max: int = 10
    roi: Optional[tuple] = None

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError(f"lam must be >= 0, got {self.lam}")
        if self.gn_max_iters < 1 or self.minres_max_iters < 1:
            raise ParameterError("iteration counts must be >= 1")
        if self.gn_energy_tol <= 0 or self.minres_tol <= 0:
            raise ParameterError("tolerances must be > 0")
        if self.hp_sigma <= 0:
            raise ParameterError(f"hp_sigma must be > 0, got {self.hp_sigma}")
        if self.step_halvings_max < 0:
            raise ParameterError("step_halvings_max must be >= 0")
        if self.roi is not None:
            self.roi = tuple(int(v) for v in self.roi)
            if len(self.roi) != 4 or self.roi[2] < 1 or self.roi[3] < 1:
                raise ParameterError(f"roi must be (x, y, w>=1, h>=1), got {self.roi}")


@dataclass
class AlignResult:
    """Outcome of gauss_newton_align.

    energy_trace holds the total energy after each *accepted* iteration
    and is nonincreasing by construction; initial_energy is the energy
    of the zero fields before the first step.
    """

    w1: WarpField
    w2: WarpField
    energy_trace: list = dataclass_field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0
    initial_energy: float = 0.0

    @property
    def final_energy(self) -> float:
        return self.energy_trace[-1] if self.energy_trace else self.initial_energy


def _check_roi(roi, width: int, height: int) -> tuple:
    if roi is None:
        return (0, 0, width, height)
    x, y, w, h = (int(v) for v in roi)
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > width or y + h > height:
        raise ParameterError(
            f"roi {roi} does not fit inside a {width}x{height} image"
        )
    return (x, y, w, h)


def _border_mask(height: int, width: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    mask[0, :] = True
    mask[-1, :] = True
    mask[:, 0] = True
    mask[:, -1] = True
    return mask


# ---------------------------------------------------------------------------
# energies


def data_energy(
    h1: np.ndarray, h2: np.ndarray, w1: WarpField, w2: WarpField, roi=None
) -> float:
    """Sum of squared differences between the two warped images.

    Each image is sampled at p + w(p) (bilinear, clamped); the sum runs
    over the ROI when one is given, else over all pixels.
    """
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape or h1.ndim != 2:
        raise ParameterError(
            f"need matching single-channel images, got {h1.shape} vs {h2.shape}"
        )
    d = warp_image(h1, w1) - warp_image(h2, w2)
    x, y, rw, rh = _check_roi(roi, h1.shape[1], h1.shape[0])
    dd = d[y : y + rh, x : x + rw].ravel()
    return float(np.dot(dd, dd))


def smoothness_energy(w: WarpField) -> float:
    """Squared displacement differences over right- and below-neighbor pairs."""
    ddx_r = w.dx[:, :-1] - w.dx[:, 1:]
    ddy_r = w.dy[:, :-1] - w.dy[:, 1:]
    ddx_d = w.dx[:-1, :] - w.dx[1:, :]
    ddy_d = w.dy[:-1, :] - w.dy[1:, :]
    total = 0.0
    for d in (ddx_r, ddy_r, ddx_d, ddy_d):
        dd = d.ravel()
        total += float(np.dot(dd, dd))
    return total


def border_energy(w: WarpField, roi=None) -> float:
    """Squared displacement magnitudes on the image (or ROI) perimeter."""
    x, y, rw, rh = _check_roi(roi, w.width, w.height)
    mask = _border_mask(rh, rw)
    bx = w.dx[y : y + rh, x : x + rw][mask]
    by = w.dy[y : y + rh, x : x + rw][mask]
    return float(np.dot(bx, bx)) + float(np.dot(by, by))


def _crop_field(w: WarpField, rect) -> WarpField:
    x, y, rw, rh = rect
    return WarpField(w.dx[y : y + rh, x : x + rw], w.dy[y : y + rh, x : x + rw])


def total_energy(
    h1: np.ndarray, h2: np.ndarray, w1: WarpField, w2: WarpField, params: AlignParams
) -> float:
    """data + lam * (smoothness(w1) + smoothness(w2) + border(w1) + border(w2)).

    With an ROI set, the regularizers act on the ROI subgrid (neighbor
    pairs inside it, border on its perimeter), matching the solver.

    The summation order is exchange-invariant: swapping (h1, w1) with
    (h2, w2) reproduces the same float bit for bit.
    """
    rect = _check_roi(params.roi, np.asarray(h1).shape[1], np.asarray(h1).shape[0])
    data = data_energy(h1, h2, w1, w2, roi=params.roi)
    w1c = _crop_field(w1, rect)
    w2c = _crop_field(w2, rect)
    reg = (smoothness_energy(w1c) + smoothness_energy(w2c)) + (
        border_energy(w1c) + border_energy(w2c)
    )
    return data + params.lam * reg


# ---------------------------------------------------------------------------
# the linearized least-squares operator


class NormalOperator:
    """Matrix-free stacked system for one Gauss-Newton linearization.

    The underlying least-squares matrix A maps the stacked increment
    x = [w1x, w1y, w2x, w2y] (each plane ROI-flattened, length n) to

        [ G1x*w1x + G1y*w1y - G2x*w2x - G2y*w2y ]   (n data rows)
        [ P w1x ; P w1y ; P w2x ; P w2y ]           (4m regularizer rows)

    with per-pixel gradient diagonals G and P emitting
    sqrt(lam) * (value(left/upper) - value(right/lower)) per neighbor
    pair plus sqrt(lam) * value(p) per perimeter pixel. The normal-
    equations operator x -> At(A(x)) is what the solver iterates with.
    """

    def __init__(self, g1x, g1y, g2x, g2y, lam: float, roi=None):
        grads = [np.asarray(g, dtype=np.float64) for g in (g1x, g1y, g2x, g2y)]
        shape = grads[0].shape
        if any(g.shape != shape for g in grads) or len(shape) != 2:
            raise ParameterError("gradient planes must share one 2-D shape")
        if lam < 0:
            raise ParameterError(f"lam must be >= 0, got {lam}")
        self.height, self.width = shape
        self.roi = _check_roi(roi, self.width, self.height)
        x, y, rw, rh = self.roi
        sl = (slice(y, y + rh), slice(x, x + rw))
        self.g1x, self.g1y, self.g2x, self.g2y = (g[sl].copy() for g in grads)
        self.lam = float(lam)
        self._sqrt_lam = float(np.sqrt(lam))
        self.roi_height = rh
        self.roi_width = rw
        self.n_pixels = rh * rw
        self._n_right = rh * (rw - 1)
        self._n_down = (rh - 1) * rw
        self._bmask = _border_mask(rh, rw)
        self._n_border = int(self._bmask.sum())
        self.n_p_rows = self._n_right + self._n_down + self._n_border

    @property
    def n_unknowns(self) -> int:
        return 4 * self.n_pixels

    @property
    def n_rows(self) -> int:
        return self.n_pixels + 4 * self.n_p_rows

    def _split_fields(self, x: np.ndarray):
        n = self.n_pixels
        shape = (self.roi_height, self.roi_width)
        return (
            x[0:n].reshape(shape),
            x[n : 2 * n].reshape(shape),
            x[2 * n : 3 * n].reshape(shape),
            x[3 * n :].reshape(shape),
        )

    def _p_apply(self, f: np.ndarray) -> np.ndarray:
        s = self._sqrt_lam
        right = s * (f[:, :-1] - f[:, 1:])
        down = s * (f[:-1, :] - f[1:, :])
        border = s * f[self._bmask]
        return np.concatenate([right.ravel(), down.ravel(), border])

    def _p_adjoint(self, y: np.ndarray) -> np.ndarray:
        s = self._sqrt_lam
        rh, rw = self.roi_height, self.roi_width
        right = y[: self._n_right].reshape(rh, rw - 1)
        down = y[self._n_right : self._n_right + self._n_down].reshape(rh - 1, rw)
        border = y[self._n_right + self._n_down :]
        out = np.zeros((rh, rw))
        out[:, :-1] += s * right
        out[:, 1:] -= s * right
        out[:-1, :] += s * down
        out[1:, :] -= s * down
        out[self._bmask] += s * border
        return out

    def apply_A(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != self.n_unknowns:
            raise ParameterError(
                f"expected vector of length {self.n_unknowns}, got {x.size}"
            )
        x1x, x1y, x2x, x2y = self._split_fields(x)
        top = (self.g1x * x1x + self.g1y * x1y) - (self.g2x * x2x + self.g2y * x2y)
        return np.concatenate(
            [
                top.ravel(),
                self._p_apply(x1x),
                self._p_apply(x1y),
                self._p_apply(x2x),
                self._p_apply(x2y),
            ]
        )

    def apply_At(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.size != self.n_rows:
            raise ParameterError(
                f"expected vector of length {self.n_rows}, got {y.size}"
            )
        n, m = self.n_pixels, self.n_p_rows
        t = y[:n].reshape(self.roi_height, self.roi_width)
        nt = -t
        out1x = self.g1x * t + self._p_adjoint(y[n : n + m])
        out1y = self.g1y * t + self._p_adjoint(y[n + m : n + 2 * m])
        out2x = self.g2x * nt + self._p_adjoint(y[n + 2 * m : n + 3 * m])
        out2y = self.g2y * nt + self._p_adjoint(y[n + 3 * m :])
        return np.concatenate(
            [out1x.ravel(), out1y.ravel(), out2x.ravel(), out2y.ravel()]
        )

    def normal(self, x: np.ndarray) -> np.ndarray:
        """x -> At(A(x)); symmetric positive semidefinite."""
        return self.apply_At(self.apply_A(x))

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Dot product summed per field pair, invariant under block swap."""
        h = 2 * self.n_pixels
        return float(np.dot(u[:h], v[:h])) + float(np.dot(u[h:], v[h:]))

    def rhs(self, residual: np.ndarray) -> np.ndarray:
        """At([residual; 0]) for a per-pixel data residual over the ROI."""
        residual = np.asarray(residual, dtype=np.float64).ravel()
        if residual.size != self.n_pixels:
            raise ParameterError(
                f"expected residual of length {self.n_pixels}, got {residual.size}"
            )
        stacked = np.concatenate([residual, np.zeros(4 * self.n_p_rows)])
        return self.apply_At(stacked)


# ---------------------------------------------------------------------------
# Gauss-Newton driver


def _embed(full_shape, rect, plane: np.ndarray) -> np.ndarray:
    x, y, rw, rh = rect
    out = np.zeros(full_shape)
    out[y : y + rh, x : x + rw] = plane
    return out


def gauss_newton_align(
    img1: np.ndarray, img2: np.ndarray, params: Optional[AlignParams] = None
) -> AlignResult:
    """Jointly estimate displacement fields aligning two pre-aligned images.

    Each accepted iteration: warp the high-pass images by the current
    fields (always resampling from the originals), linearize the data
    term at the warped images' gradients, solve the normal equations
    with MINRES, then add the scaled increment — halving the step until
    the total energy strictly decreases. Identical inputs are a fixed
    point and return exactly zero fields.
    """
    if params is None:
        params = AlignParams()
    img1 = to_grayscale(np.asarray(img1, dtype=np.float64))
    img2 = to_grayscale(np.asarray(img2, dtype=np.float64))
    if img1.shape != img2.shape:
        raise ParameterError(f"image shapes differ: {img1.shape} vs {img2.shape}")
    height, width = img1.shape
    rect = _check_roi(params.roi, width, height)

    h1 = high_pass(img1, params.hp_sigma)
    h2 = high_pass(img2, params.hp_sigma)
    w1 = WarpField.zeros(height, width)
    w2 = WarpField.zeros(height, width)

    energy = total_energy(h1, h2, w1, w2, params)
    initial_energy = energy
    trace: list = []
    converged = False
    x, y, rw, rh = rect
    sl = (slice(y, y + rh), slice(x, x + rw))
    n = rw * rh

    for _ in range(params.gn_max_iters):
        h1w = warp_image(h1, w1)
        h2w = warp_image(h2, w2)
        g1 = gradient(h1w)
        g2 = gradient(h2w)
        op = NormalOperator(g1.gx, g1.gy, g2.gx, g2.gy, params.lam, roi=params.roi)
        residual = (h2w - h1w)[sl]
        rhs = op.rhs(residual)
        if not rhs.any():
            converged = True  # exact fixed point (e.g. identical inputs)
            break

        sol: MinresResult = minres_solve(
            op.normal,
            rhs,
            tol=params.minres_tol,
            max_iters=params.minres_max_iters,
            inner=op.inner,
        )
        delta = sol.x
        if not delta.any():
            converged = True
            break
        d1x = _embed(img1.shape, rect, delta[0:n].reshape(rh, rw))
        d1y = _embed(img1.shape, rect, delta[n : 2 * n].reshape(rh, rw))
        d2x = _embed(img1.shape, rect, delta[2 * n : 3 * n].reshape(rh, rw))
        d2y = _embed(img1.shape, rect, delta[3 * n :].reshape(rh, rw))

        step = 1.0
        accepted = False
        for _ in range(params.step_halvings_max + 1):
            c1 = WarpField(w1.dx + step * d1x, w1.dy + step * d1y)
            c2 = WarpField(w2.dx + step * d2x, w2.dy + step * d2y)
            candidate_energy = total_energy(h1, h2, c1, c2, params)
            if candidate_energy < energy:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = len(trace) > 0  # stuck at the first step: not converged
            break

        w1, w2 = c1, c2
        previous = energy
        energy = candidate_energy
        trace.append(energy)
        if previous > 0 and (previous - energy) / previous < params.gn_energy_tol:
            converged = True
            break
    else:
        converged = True  # ran the full budget with monotone progress

    if not (w1.is_finite() and w2.is_finite()):
        raise NumericalBreakdownError(
            "displacement fields became non-finite", len(trace)
        )
    return AlignResult(
        w1=w1,
        w2=w2,
        energy_trace=trace,
        converged=converged,
        iterations_used=len(trace),
        initial_energy=initial_energy,
    )


# ---------------------------------------------------------------------------
# warp-field dumps


_WARP_MAGIC = b"PWWF"


def save_warp_field(field: WarpField, path) -> None:
    """Binary dump: 16-byte header (magic, width, height, reserved) then
    the dx and dy planes as little-endian float32, row-major."""
    h, w = field.shape
    with open(path, "wb") as fh:
        fh.write(_WARP_MAGIC)
        fh.write(struct.pack("<III", w, h, 0))
        fh.write(np.ascontiguousarray(field.dx, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(field.dy, dtype="<f4").tobytes())


def load_warp_field(path) -> WarpField:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != _WARP_MAGIC:
        raise FormatError(f"{path}: not a warp-field dump (bad header)")
    w, h, _reserved = struct.unpack("<III", data[4:16])
    plane_bytes = 4 * w * h
    if len(data) != 16 + 2 * plane_bytes:
        raise FormatError(
            f"{path}: expected {16 + 2 * plane_bytes} bytes for {w}x{h}, "
            f"got {len(data)}"
        )
    dx = np.frombuffer(data, dtype="<f4", count=w * h, offset=16)
    dy = np.frombuffer(data, dtype="<f4", count=w * h, offset=16 + plane_bytes)
    return WarpField(
        dx.reshape(h, w).astype(np.float64), dy.reshape(h, w).astype(np.float64)
    )


def warp_field_to_color(field: WarpField, max_magnitude: Optional[float] = None) -> np.ndarray:
    """False-color rendering: hue encodes direction, brightness magnitude."""
    mag = np.hypot(field.dx, field.dy)
    if max_magnitude is None:
        max_magnitude = float(mag.max())
    if max_magnitude <= 0:
        return np.zeros((*field.shape, 3))
    value = np.clip(mag / max_magnitude, 0.0, 1.0)
    hue = (np.arctan2(field.dy, field.dx) / (2.0 * np.pi)) % 1.0
    # hsv -> rgb with saturation 1
    k = hue * 6.0
    i = np.floor(k).astype(int) % 6
    f = k - np.floor(k)
    q = value * (1.0 - f)
    t = value * f
    zeros = np.zeros_like(value)
    lut = np.stack(
        [
            np.stack([value, t, zeros], axis=-1),
            np.stack([q, value, zeros], axis=-1),
            np.stack([zeros, value, t], axis=-1),
            np.stack([zeros, q, value], axis=-1),
            np.stack([t, zeros, value], axis=-1),
            np.stack([value, zeros, q], axis=-1),
        ]
    )
    return np.take_along_axis(lut, i[None, ..., None], axis=0)[0]


def save_warp_visualization(field: WarpField, path, max_magnitude=None) -> None:
    save_image(warp_field_to_color(field, max_magnitude), path)
