"""Ghosting-free face morphing: landmark warping plus pixel-wise alignment.

The pipeline averages landmark geometry, warps both portraits onto it,
then removes residual misalignment with a symmetric dense warp-field
estimate (Gauss-Newton over a regularized brightness-matching energy,
normal equations solved matrix-free with MINRES) before blending and
frequency-split background compositing.
"""

from .errors import (
    FormatError,
    GeometryError,
    ImageIOError,
    MorphAlignError,
    NumericalBreakdownError,
    ParameterError,
    SizeRangeError,
)
from .imagecore import (
    WarpField,
    gaussian_blur,
    gradient,
    high_pass,
    load_image,
    sample_bilinear,
    save_image,
    to_grayscale,
    to_u8,
    warp_image,
)
from .landmarkmorph import (
    Triangulation,
    average_landmarks,
    frame_anchors,
    load_landmarks,
    piecewise_affine_warp,
    save_triangulation,
    triangulate,
)
from .minres import MinresResult, minres_solve
from .pwalign import (
    AlignParams,
    AlignResult,
    NormalOperator,
    data_energy,
    gauss_newton_align,
    load_warp_field,
    save_warp_field,
    save_warp_visualization,
    smoothness_energy,
    total_energy,
    warp_field_to_color,
)
from .blend import additive_blend, background_composite, face_mask_from_landmarks
from .pipeline import (
    GeometryReport,
    ManifestRow,
    MorphJob,
    crop_resize_portrait,
    execute_job,
    jpeg_compress_to_target,
    read_manifest,
    run_batch,
    run_job,
    validate_geometry,
    write_manifest,
)
from .synthbench import (
    SHAPE_KINDS,
    SyntheticPair,
    endpoint_error,
    make_pair,
    make_portrait,
    residual_reduction,
)

__version__ = "0.1.0"
