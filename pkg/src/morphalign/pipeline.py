"""End-to-end portrait morphing jobs: validate, crop, morph, composite, encode.

A job takes two portrait photos with landmark files and produces one
morphed image. Batches of jobs are described by a CSV manifest and run
on a bounded thread pool; results are reported as an output manifest
with one row per job in input order, errors captured per row.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .blend import additive_blend, background_composite, face_mask_from_landmarks
from .errors import (
    FormatError,
    GeometryError,
    ImageIOError,
    MorphAlignError,
    NumericalBreakdownError,
    ParameterError,
    SizeRangeError,
)
from .imagecore import load_image, sample_bilinear, save_image, to_u8, warp_image
from .landmarkmorph import average_landmarks, load_landmarks, piecewise_affine_warp, triangulate
from .pwalign import AlignParams, gauss_newton_align, save_warp_field, save_warp_visualization

__all__ = [
    "OUT_WIDTH",
    "OUT_HEIGHT",
    "MIN_EYE_DISTANCE",
    "GeometryReport",
    "MorphJob",
    "ManifestRow",
    "validate_geometry",
    "crop_resize_portrait",
    "jpeg_compress_to_target",
    "read_manifest",
    "write_manifest",
    "load_config",
    "align_params_from_config",
    "execute_job",
    "run_job",
    "run_batch",
]

logger = logging.getLogger(__name__)

# Output raster and framing constants (portrait orientation).
OUT_WIDTH = 431
OUT_HEIGHT = 513
MIN_EYE_DISTANCE = 90.0
EYE_ROW_FRACTION = 0.45     # eye line sits 45% down the crop
CROP_HEIGHT_FACTOR = 4.5    # crop height = 4.5 x inter-eye distance
MAX_OVERSHOOT_FRACTION = 0.10
KILOBYTE = 1024

MANIFEST_IN_COLUMNS = (
    "job_id",
    "image_a",
    "image_b",
    "landmarks_a",
    "landmarks_b",
    "method",
    "alpha",
    "output",
)
MANIFEST_OUT_COLUMNS = MANIFEST_IN_COLUMNS + (
    "initial_energy",
    "final_energy",
    "iterations",
    "output_bytes",
    "status",
)

METHODS = ("pw", "simple")


# --------------------------------------------------------------------------
# geometry checks and portrait framing
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeometryReport:
    """Outcome of portrait geometry validation."""

    ok: bool
    eye_distance: float
    reasons: tuple = ()


def validate_geometry(img: np.ndarray, lm: np.ndarray, eye_indices=(0, 1)) -> GeometryReport:
    """Check that a portrait is usable: eyes far enough apart, landmarks in frame.

    Returns a report rather than raising, so callers can decide how to
    surface rejections. Malformed arguments still raise ParameterError.
    """
    lm = np.asarray(lm, dtype=np.float64)
    if lm.ndim != 2 or lm.shape[1] != 2:
        raise ParameterError(f"landmarks must be (N, 2), got {lm.shape}")
    i, j = int(eye_indices[0]), int(eye_indices[1])
    if i == j or not (0 <= i < len(lm)) or not (0 <= j < len(lm)):
        raise ParameterError(f"eye indices {eye_indices} invalid for {len(lm)} landmarks")
    h, w = img.shape[:2]

    reasons = []
    dist = float(np.hypot(*(lm[j] - lm[i])))
    if dist < MIN_EYE_DISTANCE:
        reasons.append(f"inter-eye distance {dist:.1f}px below minimum {MIN_EYE_DISTANCE:.0f}px")
    if np.any(lm[:, 0] < 0) or np.any(lm[:, 0] > w - 1) or np.any(lm[:, 1] < 0) or np.any(lm[:, 1] > h - 1):
        reasons.append("landmarks outside image bounds")
    return GeometryReport(ok=not reasons, eye_distance=dist, reasons=tuple(reasons))


def crop_resize_portrait(img: np.ndarray, lm: np.ndarray, eye_indices=(0, 1)):
    """Frame a portrait to the standard 431x513 raster.

    The crop height is 4.5x the inter-eye distance with the eye line 45%
    down from the top and the eye midpoint horizontally centered; the
    aspect ratio matches the output raster. Crops may run slightly off
    the source (edge-clamped sampling) but more than 10% overshoot on
    any side raises GeometryError. Returns the resized image and the
    landmarks mapped into output coordinates.
    """
    lm = np.asarray(lm, dtype=np.float64)
    i, j = int(eye_indices[0]), int(eye_indices[1])
    h, w = img.shape[:2]

    eye_mid = 0.5 * (lm[i] + lm[j])
    dist = float(np.hypot(*(lm[j] - lm[i])))
    if dist <= 0.0:
        raise GeometryError("eye landmarks coincide")
    crop_h = CROP_HEIGHT_FACTOR * dist
    crop_w = crop_h * (OUT_WIDTH / OUT_HEIGHT)

    # Crop box in continuous coordinates where pixel k spans [k, k+1).
    x0 = (eye_mid[0] + 0.5) - 0.5 * crop_w
    y0 = (eye_mid[1] + 0.5) - EYE_ROW_FRACTION * crop_h

    overshoots = (
        ("left", max(0.0, -x0), crop_w),
        ("right", max(0.0, x0 + crop_w - w), crop_w),
        ("top", max(0.0, -y0), crop_h),
        ("bottom", max(0.0, y0 + crop_h - h), crop_h),
    )
    for side, over, extent in overshoots:
        if over > MAX_OVERSHOOT_FRACTION * extent:
            raise GeometryError(
                f"crop exceeds source by {over:.1f}px on the {side} "
                f"(limit {MAX_OVERSHOOT_FRACTION * extent:.1f}px)"
            )

    sx = crop_w / OUT_WIDTH
    sy = crop_h / OUT_HEIGHT
    u = np.arange(OUT_WIDTH, dtype=np.float64)
    v = np.arange(OUT_HEIGHT, dtype=np.float64)
    src_x = x0 + (u + 0.5) * sx - 0.5
    src_y = y0 + (v + 0.5) * sy - 0.5
    gx, gy = np.meshgrid(src_x, src_y)
    out = sample_bilinear(img, gx, gy)

    lm_out = np.empty_like(lm)
    lm_out[:, 0] = (lm[:, 0] + 0.5 - x0) / sx - 0.5
    lm_out[:, 1] = (lm[:, 1] + 0.5 - y0) / sy - 0.5
    return out, lm_out


# --------------------------------------------------------------------------
# size-targeted JPEG encoding
# --------------------------------------------------------------------------

def _encode_jpeg(img: np.ndarray, quality: int) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_u8(img)).save(buf, format="JPEG", quality=quality, subsampling=2)
    return buf.getvalue()


def jpeg_compress_to_target(img: np.ndarray, min_kb: float, max_kb: float) -> bytes:
    """Encode to JPEG within a file-size window of [min_kb, max_kb] kilobytes.

    Binary search over integer quality 1..100 (4:2:0 subsampling) for the
    largest quality whose encoded size stays at or below the ceiling.
    Raises SizeRangeError, reporting the achievable extremes, when no
    quality lands inside the window.
    """
    if not (0 < min_kb < max_kb):
        raise ParameterError(f"need 0 < min_kb < max_kb, got {min_kb}:{max_kb}")
    min_bytes = int(min_kb * KILOBYTE)
    max_bytes = int(max_kb * KILOBYTE)

    lo, hi = 1, 100
    best = None
    while lo <= hi:
        q = (lo + hi) // 2
        if len(_encode_jpeg(img, q)) <= max_bytes:
            best = q
            lo = q + 1
        else:
            hi = q - 1

    data = _encode_jpeg(img, best) if best is not None else None
    if data is None or len(data) < min_bytes:
        lo_size = len(_encode_jpeg(img, 1))
        hi_size = len(_encode_jpeg(img, 100))
        raise SizeRangeError(
            f"no JPEG quality reaches [{min_bytes}, {max_bytes}] bytes: "
            f"quality 1 gives {lo_size} bytes, quality 100 gives {hi_size} bytes"
        )
    return data


# --------------------------------------------------------------------------
# jobs and manifests
# --------------------------------------------------------------------------

@dataclass
class MorphJob:
    """One morphing work item: two portraits in, one composite out."""

    job_id: str
    image_a: str
    image_b: str
    landmarks_a: str
    landmarks_b: str
    output: str
    method: str = "pw"
    alpha: float = 0.5
    align_params: AlignParams = field(default_factory=AlignParams)
    eye_indices: tuple = (0, 1)
    jpeg_target: Optional[tuple] = None     # (min_kb, max_kb)
    split_sigma: float = 8.0
    feather_sigma: float = 8.0
    dump_warps: Optional[str] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.jpeg_target is not None:
            lo, hi = self.jpeg_target
            if not (0 < lo < hi):
                raise ParameterError(f"jpeg target needs 0 < min < max, got {lo}:{hi}")
        if self.split_sigma <= 0 or self.feather_sigma <= 0:
            raise ParameterError("split_sigma and feather_sigma must be positive")


@dataclass
class ManifestRow:
    """Result record for one job, as written to the output manifest."""

    job_id: str
    image_a: str
    image_b: str
    landmarks_a: str
    landmarks_b: str
    method: str
    alpha: float
    output: str
    initial_energy: Optional[float] = None
    final_energy: Optional[float] = None
    iterations: int = 0
    output_bytes: Optional[int] = None
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def as_csv_row(self):
        def fmt(v):
            return "" if v is None else (repr(v) if isinstance(v, float) else str(v))

        return [fmt(getattr(self, col)) for col in MANIFEST_OUT_COLUMNS]


def _row_for(job: MorphJob) -> ManifestRow:
    return ManifestRow(
        job_id=job.job_id,
        image_a=job.image_a,
        image_b=job.image_b,
        landmarks_a=job.landmarks_a,
        landmarks_b=job.landmarks_b,
        method=job.method,
        alpha=job.alpha,
        output=job.output,
    )


def read_manifest(path: str, **job_defaults) -> list:
    """Parse a CSV job manifest into MorphJob items.

    The header row must name all of job_id, image_a, image_b,
    landmarks_a, landmarks_b, method, alpha, output (extra columns are
    ignored). Any malformed row fails the whole parse with FormatError,
    before any job runs. Keyword arguments (align_params, jpeg_target,
    split_sigma, feather_sigma, eye_indices) apply to every job.
    """
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None:
                raise FormatError(f"{path}: empty manifest (missing header row)")
            missing = [c for c in MANIFEST_IN_COLUMNS if c not in reader.fieldnames]
            if missing:
                raise FormatError(f"{path}: manifest header missing columns {missing}")
            jobs = []
            for n, rec in enumerate(reader, start=2):
                try:
                    fields = {c: (rec[c] or "").strip() for c in MANIFEST_IN_COLUMNS}
                    if any(not fields[c] for c in MANIFEST_IN_COLUMNS):
                        raise ParameterError("empty field")
                    jobs.append(
                        MorphJob(
                            job_id=fields["job_id"],
                            image_a=fields["image_a"],
                            image_b=fields["image_b"],
                            landmarks_a=fields["landmarks_a"],
                            landmarks_b=fields["landmarks_b"],
                            output=fields["output"],
                            method=fields["method"],
                            alpha=float(fields["alpha"]),
                            **job_defaults,
                        )
                    )
                except (ParameterError, ValueError) as exc:
                    raise FormatError(f"{path} line {n}: {exc}") from exc
    except OSError as exc:
        raise ImageIOError(f"cannot read manifest {path}: {exc}") from exc
    return jobs


def write_manifest(rows: Sequence[ManifestRow], path: str) -> None:
    """Write result rows as CSV with a fixed header and newline discipline."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_OUT_COLUMNS)
        for row in rows:
            writer.writerow(row.as_csv_row())


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

_ALIGN_CONFIG_KEYS = {
    "lambda": ("lam", float),
    "hp_sigma": ("hp_sigma", float),
    "gn_max_iters": ("gn_max_iters", int),
    "gn_energy_tol": ("gn_energy_tol", float),
    "minres_tol": ("minres_tol", float),
    "minres_max_iters": ("minres_max_iters", int),
    "step_halvings_max": ("step_halvings_max", int),
}
_PIPELINE_CONFIG_KEYS = {
    "alpha": float,
    "method": str,
    "split_sigma": float,
    "feather_sigma": float,
    "jpeg_min_kb": float,
    "jpeg_max_kb": float,
}
CONFIG_KEYS = tuple(sorted(set(_ALIGN_CONFIG_KEYS) | set(_PIPELINE_CONFIG_KEYS)))


def load_config(path: str) -> dict:
    """Read a flat key=value config file ('#' comments, blank lines ok)."""
    cfg = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            for n, raw in enumerate(f, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise FormatError(f"{path} line {n}: expected key=value, got {line!r}")
                key, _, value = line.partition("=")
                key = key.strip().lower()
                if key not in CONFIG_KEYS:
                    raise FormatError(f"{path} line {n}: unknown key {key!r}")
                cfg[key] = value.strip()
    except OSError as exc:
        raise ImageIOError(f"cannot read config {path}: {exc}") from exc
    return cfg


def align_params_from_config(cfg: dict, **overrides) -> AlignParams:
    """Build AlignParams from defaults, a config dict, then explicit overrides."""
    kwargs = {}
    for key, (attr, conv) in _ALIGN_CONFIG_KEYS.items():
        if key in cfg:
            try:
                kwargs[attr] = conv(cfg[key])
            except ValueError as exc:
                raise FormatError(f"config key {key}: {exc}") from exc
    for attr, value in overrides.items():
        if value is not None:
            kwargs[attr] = value
    return AlignParams(**kwargs)


# --------------------------------------------------------------------------
# job execution
# --------------------------------------------------------------------------

def _classify_failure(exc: BaseException) -> str:
    if isinstance(exc, NumericalBreakdownError):
        return "numerical"
    if isinstance(exc, SizeRangeError):
        return "size"
    if isinstance(exc, GeometryError):
        return "geometry"
    if isinstance(exc, FormatError):
        return "format"
    if isinstance(exc, ParameterError):
        return "parameter"
    if isinstance(exc, (ImageIOError, OSError)):
        return "io"
    return "error"


def execute_job(job: MorphJob) -> ManifestRow:
    """Run one morph job to completion, raising on any failure.

    Stage order: load inputs, validate geometry, crop both portraits to
    the output raster, average landmarks, piecewise-affine warp both
    onto the average, optional pixel-wise alignment (method 'pw'), blend,
    composite into the first input's background, encode.
    """
    row = _row_for(job)

    img_a = load_image(job.image_a)
    img_b = load_image(job.image_b)
    lm_a = load_landmarks(job.landmarks_a)
    lm_b = load_landmarks(job.landmarks_b)
    if lm_a.shape != lm_b.shape:
        raise GeometryError(f"landmark counts differ: {lm_a.shape[0]} vs {lm_b.shape[0]}")

    for name, img, lm in (("image_a", img_a, lm_a), ("image_b", img_b, lm_b)):
        report = validate_geometry(img, lm, job.eye_indices)
        if not report.ok:
            raise GeometryError(f"{name}: " + "; ".join(report.reasons))

    img_a, lm_a = crop_resize_portrait(img_a, lm_a, job.eye_indices)
    img_b, lm_b = crop_resize_portrait(img_b, lm_b, job.eye_indices)

    avg = average_landmarks(lm_a, lm_b, job.alpha)
    size = (OUT_WIDTH, OUT_HEIGHT)
    tri = triangulate(avg, size)
    pre_a = piecewise_affine_warp(img_a, lm_a, avg, tri)
    pre_b = piecewise_affine_warp(img_b, lm_b, avg, tri)

    if job.method == "pw":
        result = gauss_newton_align(pre_a, pre_b, job.align_params)
        aligned_a = warp_image(pre_a, result.w1)
        aligned_b = warp_image(pre_b, result.w2)
        row.initial_energy = result.initial_energy
        row.final_energy = result.final_energy
        row.iterations = result.iterations_used
        if job.dump_warps:
            os.makedirs(job.dump_warps, exist_ok=True)
            for tag, field_ in (("w1", result.w1), ("w2", result.w2)):
                base = os.path.join(job.dump_warps, f"{job.job_id}_{tag}")
                save_warp_field(field_, base + ".pwwf")
                save_warp_visualization(field_, base + ".png")
    else:
        aligned_a, aligned_b = pre_a, pre_b

    morph = additive_blend(aligned_a, aligned_b, job.alpha)
    binary, feathered = face_mask_from_landmarks(avg, size, job.feather_sigma)
    composite = background_composite(morph, aligned_a, binary, feathered, job.split_sigma)

    out_dir = os.path.dirname(os.path.abspath(job.output))
    os.makedirs(out_dir, exist_ok=True)
    if job.jpeg_target is not None:
        data = jpeg_compress_to_target(composite, *job.jpeg_target)
        with open(job.output, "wb") as f:
            f.write(data)
        row.output_bytes = len(data)
    else:
        save_image(composite, job.output)
        row.output_bytes = os.path.getsize(job.output)
    return row


def run_job(job: MorphJob) -> ManifestRow:
    """Run one job, capturing any failure into the row's status field."""
    try:
        return execute_job(job)
    except Exception as exc:
        reason = _classify_failure(exc)
        logger.warning("job %s failed (%s): %s", job.job_id, reason, exc)
        row = _row_for(job)
        row.status = f"failed:{reason}"
        return row


def run_batch(jobs: Sequence[MorphJob], parallelism: int = 1, strict: bool = False) -> list:
    """Run jobs on a bounded worker pool; rows come back in input order.

    MORPHALIGN_THREADS, when set, caps the worker count. With strict=True
    the first failed row aborts the batch by raising MorphAlignError;
    otherwise failures stay isolated in their rows.
    """
    if parallelism < 1:
        raise ParameterError(f"parallelism must be >= 1, got {parallelism}")
    cap = os.environ.get("MORPHALIGN_THREADS")
    if cap:
        try:
            parallelism = max(1, min(parallelism, int(cap)))
        except ValueError as exc:
            raise ParameterError(f"MORPHALIGN_THREADS={cap!r} is not an integer") from exc

    jobs = list(jobs)
    if parallelism == 1 or len(jobs) <= 1:
        rows = []
        for job in jobs:
            row = run_job(job)
            if strict and not row.ok:
                raise MorphAlignError(f"job {row.job_id} {row.status}")
            rows.append(row)
        return rows

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        rows = list(pool.map(run_job, jobs))
    if strict:
        for row in rows:
            if not row.ok:
                raise MorphAlignError(f"job {row.job_id} {row.status}")
    return rows
