"""Key-point pre-alignment: landmark files, triangulation, piecewise-affine warp.

Landmark sets are plain ``(N, 2)`` float64 arrays with columns ``(x, y)``
in pixel coordinates. Both images of a pair must use the same landmark
ordering; no particular detector or schema is assumed.

Warping both inputs onto the alpha-averaged landmark geometry leaves only
small residual misalignments, which is the operating regime the dense
pixel-wise alignment stage is designed for.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .errors import FormatError, GeometryError, ParameterError
from .imagecore import sample_bilinear

__all__ = [
    "Triangulation",
    "load_landmarks",
    "average_landmarks",
    "frame_anchors",
    "triangulate",
    "save_triangulation",
    "piecewise_affine_warp",
]


@dataclass
class Triangulation:
    """Triangle mesh over landmark vertices (plus optional frame anchors).

    ``vertices`` is ``(M, 2)`` float64 — the landmarks in their original
    order, followed by any frame anchors. ``triangles`` is ``(T, 3)`` of
    vertex indices, each triple sorted ascending and the list sorted
    lexicographically, so equal inputs always produce byte-equal meshes.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)


def load_landmarks(path, image_size=None) -> np.ndarray:
    """Read landmarks from a text file: one "x y" pair per line.

    Lines whose first non-blank character is '#' are comments; blank
    lines are ignored. With ``image_size=(width, height)`` every point is
    additionally required to lie inside the pixel grid.
    """
    points = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FormatError(
                    f"{path}: line {lineno}: expected 'x y', got {line!r}"
                )
            try:
                points.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise FormatError(
                    f"{path}: line {lineno}: non-numeric coordinate in {line!r}"
                ) from None
    if len(points) < 3:
        raise FormatError(f"{path}: need at least 3 landmarks, found {len(points)}")
    pts = np.asarray(points, dtype=np.float64)
    if not np.isfinite(pts).all():
        raise FormatError(f"{path}: landmarks contain non-finite coordinates")
    if image_size is not None:
        w, h = image_size
        bad = np.nonzero(
            (pts[:, 0] < 0) | (pts[:, 0] > w - 1) | (pts[:, 1] < 0) | (pts[:, 1] > h - 1)
        )[0]
        if bad.size:
            raise GeometryError(
                f"{path}: landmark {bad[0]} at {tuple(pts[bad[0]])} lies outside "
                f"a {w}x{h} image"
            )
    return pts


def average_landmarks(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """Pointwise blend (1-alpha)*a + alpha*b; exact copies at the endpoints."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"landmark counts differ: {a.shape} vs {b.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 0.0:
        return a.copy()
    if alpha == 1.0:
        return b.copy()
    return (1.0 - alpha) * a + alpha * b


def frame_anchors(width: int, height: int) -> np.ndarray:
    """Eight fixed points on the pixel-grid frame: corners + edge midpoints."""
    r = width - 1.0
    b = height - 1.0
    return np.array(
        [
            [0.0, 0.0],
            [r, 0.0],
            [0.0, b],
            [r, b],
            [r / 2.0, 0.0],
            [r / 2.0, b],
            [0.0, b / 2.0],
            [r, b / 2.0],
        ]
    )


def _incircle_det(pa, pb, pc, pd) -> float:
    """Signed incircle predicate: 0 when the four points are cocircular."""
    rows = []
    for p in (pa, pb, pc):
        dx = p[0] - pd[0]
        dy = p[1] - pd[1]
        rows.append([dx, dy, dx * dx + dy * dy])
    return float(np.linalg.det(np.array(rows)))


def _cross(o, a, b) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def _normalize_ties(vertices: np.ndarray, triangles: list) -> list:
    """Resolve cocircular Delaunay ties toward the lex-smallest diagonal.

    Four cocircular vertices admit two equally valid diagonals; the
    upstream triangulator picks one arbitrarily. For deterministic,
    input-order-independent meshes we flip every tied interior edge to
    the diagonal with the lexicographically smaller (sorted) index pair.
    Each flip strictly decreases a diagonal in lex order, so the pass
    terminates.
    """
    tris = [tuple(sorted(map(int, t))) for t in triangles]
    max_passes = 3 * len(tris) + 10
    for _ in range(max_passes):
        edge_users = {}
        for ti, t in enumerate(tris):
            for e in ((t[0], t[1]), (t[0], t[2]), (t[1], t[2])):
                other = (set(t) - set(e)).pop()
                edge_users.setdefault(e, []).append((ti, other))
        flipped = False
        for e, users in sorted(edge_users.items()):
            if len(users) != 2:
                continue
            (ta, ka), (tb, kb) = users
            alt = tuple(sorted((ka, kb)))
            if alt >= e:
                continue
            p0, p1 = vertices[e[0]], vertices[e[1]]
            q0, q1 = vertices[ka], vertices[kb]
            # the flip is only geometrically valid if the quad is convex:
            # the candidate diagonal must properly cross the current one
            if _cross(p0, p1, q0) * _cross(p0, p1, q1) >= 0:
                continue
            if _cross(q0, q1, p0) * _cross(q0, q1, p1) >= 0:
                continue
            span = max(
                np.linalg.norm(vertices[i] - vertices[j])
                for i in (*e, *alt)
                for j in (*e, *alt)
                if i != j
            )
            det = _incircle_det(p0, q0, p1, q1)
            if abs(det) > 1e-9 * span**4:
                continue  # a genuine Delaunay edge, not a tie
            tris[ta] = tuple(sorted((alt[0], alt[1], e[0])))
            tris[tb] = tuple(sorted((alt[0], alt[1], e[1])))
            flipped = True
            break
        if not flipped:
            break
    return tris


def triangulate(points: np.ndarray, image_size, include_anchors: bool = True) -> Triangulation:
    """Delaunay-triangulate landmarks plus the 8 frame anchors.

    With anchors the mesh covers the whole pixel rectangle, so the
    background deforms smoothly along with the face. ``include_anchors=
    False`` triangulates the bare landmarks (used by small geometric
    tests). Output is canonicalized: cocircular ties resolved toward the
    lex-smallest diagonal, triangle triples sorted.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ParameterError(f"need an (N>=3, 2) landmark array, got {pts.shape}")
    if include_anchors:
        w, h = image_size
        vertices = np.vstack([pts, frame_anchors(w, h)])
    else:
        vertices = pts.copy()
    uniq = np.unique(vertices, axis=0)
    if len(uniq) != len(vertices):
        raise ParameterError("duplicate vertices in triangulation input")
    try:
        dela = Delaunay(vertices)
    except QhullError as exc:
        raise ParameterError(f"degenerate landmark configuration: {exc}") from exc

    # drop any zero-area slivers the triangulator may emit
    keep = []
    for t in dela.simplices:
        a, b, c = vertices[t[0]], vertices[t[1]], vertices[t[2]]
        if _cross(a, b, c) != 0.0:
            keep.append(t)
    tris = _normalize_ties(vertices, keep)
    tris = sorted(set(tris))
    return Triangulation(vertices=vertices, triangles=np.array(tris, dtype=np.intp))


def save_triangulation(tri: Triangulation, path) -> None:
    """Write one "i j k" vertex-index triple per line (debug dump)."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in tri.triangles:
            fh.write(f"{t[0]} {t[1]} {t[2]}\n")


def piecewise_affine_warp(
    img: np.ndarray, src: np.ndarray, dst: np.ndarray, tri: Triangulation
) -> np.ndarray:
    """Warp ``img`` so content at ``src`` landmarks appears at ``dst``.

    ``tri`` must be built over ``dst`` (its first N vertices equal to
    dst); frame anchors map to themselves. Each output pixel finds its
    containing dst-triangle — on shared edges the lowest-index triangle
    wins — converts to barycentric coordinates, evaluates the same
    weights over the src triangle, and samples the input bilinearly.
    Pixels not covered by any triangle pass through unchanged.
    """
    img = np.asarray(img, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ParameterError(
            f"src/dst landmark shapes must match as (N, 2), got {src.shape} vs {dst.shape}"
        )
    n = len(dst)
    verts = tri.vertices
    if len(verts) < n or not np.array_equal(verts[:n], dst):
        raise ParameterError("triangulation was not built over the dst landmarks")
    src_verts = np.vstack([src, verts[n:]])  # anchors are fixed points

    h, w = img.shape[:2]
    yy, xx = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    map_x = xx.copy()
    map_y = yy.copy()
    claimed = np.zeros((h, w), dtype=bool)
    tol = 1e-9

    for t in tri.triangles:
        d0, d1, d2 = verts[t[0]], verts[t[1]], verts[t[2]]
        s0, s1, s2 = src_verts[t[0]], src_verts[t[1]], src_verts[t[2]]
        x0 = max(0, int(np.ceil(min(d0[0], d1[0], d2[0]) - tol)))
        x1 = min(w - 1, int(np.floor(max(d0[0], d1[0], d2[0]) + tol)))
        y0 = max(0, int(np.ceil(min(d0[1], d1[1], d2[1]) - tol)))
        y1 = min(h - 1, int(np.floor(max(d0[1], d1[1], d2[1]) + tol)))
        if x1 < x0 or y1 < y0:
            continue
        det = (d1[0] - d0[0]) * (d2[1] - d0[1]) - (d2[0] - d0[0]) * (d1[1] - d0[1])
        if det == 0.0:
            continue
        qx = xx[y0 : y1 + 1, x0 : x1 + 1] - d0[0]
        qy = yy[y0 : y1 + 1, x0 : x1 + 1] - d0[1]
        l1 = (qx * (d2[1] - d0[1]) - qy * (d2[0] - d0[0])) / det
        l2 = (qy * (d1[0] - d0[0]) - qx * (d1[1] - d0[1])) / det
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol)
        inside &= ~claimed[y0 : y1 + 1, x0 : x1 + 1]
        if not inside.any():
            continue
        sx = l0 * s0[0] + l1 * s1[0] + l2 * s2[0]
        sy = l0 * s0[1] + l1 * s1[1] + l2 * s2[1]
        sub_x = map_x[y0 : y1 + 1, x0 : x1 + 1]
        sub_y = map_y[y0 : y1 + 1, x0 : x1 + 1]
        sub_x[inside] = sx[inside]
        sub_y[inside] = sy[inside]
        claimed[y0 : y1 + 1, x0 : x1 + 1] |= inside

    return sample_bilinear(img, map_x, map_y)
