import numpy as np
import pytest

from morphalign.errors import ParameterError
from morphalign.imagecore import WarpField, high_pass
from morphalign.pwalign import AlignParams, AlignResult, data_energy, gauss_newton_align
from morphalign.synthbench import (
    SHAPE_KINDS,
    endpoint_error,
    make_pair,
    make_portrait,
    residual_reduction,
)


# ---------------------------------------------------------------------------
# pair generation


def test_zero_offset_noiseless_images_identical():
    pair = make_pair("disk", 48, (0, 0))
    np.testing.assert_array_equal(pair.img1, pair.img2)


def test_generation_is_deterministic():
    a = make_pair("ring", 64, (2, 1), noise_sigma=0.01, seed=42)
    b = make_pair("ring", 64, (2, 1), noise_sigma=0.01, seed=42)
    assert a.img1.tobytes() == b.img1.tobytes()
    assert a.img2.tobytes() == b.img2.tobytes()
    np.testing.assert_array_equal(a.support, b.support)


def test_different_seeds_differ():
    a = make_pair("disk", 48, (1, 0), noise_sigma=0.01, seed=1)
    b = make_pair("disk", 48, (1, 0), noise_sigma=0.01, seed=2)
    assert a.img1.tobytes() != b.img1.tobytes()


def test_centroid_displacement_follows_sampling_convention():
    # offset is a sampling displacement: img2(p) = img1(p + offset), so the
    # rendered shape's centroid moves by -offset
    pair = make_pair("disk", 64, (3, 0))
    xx = np.arange(64, dtype=np.float64)
    cx1 = float((pair.img1.sum(axis=0) * xx).sum() / pair.img1.sum())
    cx2 = float((pair.img2.sum(axis=0) * xx).sum() / pair.img2.sum())
    assert cx2 - cx1 == pytest.approx(-3.0, abs=0.1)


def test_sampling_identity_holds():
    # direct check of img2(p) == img1(p + offset) away from borders
    pair = make_pair("ring", 64, (2, -1))
    np.testing.assert_allclose(
        pair.img2[5:-5, 5:-5], pair.img1[5 - 1 : -5 - 1, 5 + 2 : -5 + 2], atol=1e-12
    )


def test_all_kinds_render_nonempty_support():
    for kind in SHAPE_KINDS:
        pair = make_pair(kind, 64, (1, 1))
        assert pair.support.any(), kind
        assert pair.img1.min() >= 0.0 and pair.img1.max() <= 1.0
        assert pair.kind == kind


def test_rectangular_size():
    pair = make_pair("disk", (48, 72), (0, 1))
    assert pair.img1.shape == (72, 48)
    assert pair.size == (48, 72)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        make_pair("blob", 64, (0, 0))
    with pytest.raises(ParameterError):
        make_pair("disk", 16, (0, 0))
    with pytest.raises(ParameterError):
        make_pair("disk", 64, (8, 8))  # |offset| > 10
    with pytest.raises(ParameterError):
        make_pair("disk", 64, (0, 0), noise_sigma=-0.1)


# ---------------------------------------------------------------------------
# endpoint error


def _zero_result(pair) -> AlignResult:
    h, w = pair.img1.shape
    return AlignResult(w1=WarpField.zeros(h, w), w2=WarpField.zeros(h, w))


def test_endpoint_error_zero_fields_on_offset_two():
    pair = make_pair("disk", 64, (2, 0))
    err = endpoint_error(_zero_result(pair), pair, alpha=0.5)
    assert err.mean == pytest.approx(1.0, abs=1e-12)
    assert err.max == pytest.approx(1.0, abs=1e-12)


def test_endpoint_error_perfect_fields():
    pair = make_pair("ring", 64, (2, 2))
    h, w = pair.img1.shape
    result = AlignResult(
        w1=WarpField(np.full((h, w), 1.0), np.full((h, w), 1.0)),
        w2=WarpField(np.full((h, w), -1.0), np.full((h, w), -1.0)),
    )
    err = endpoint_error(result, pair, alpha=0.5)
    assert err.mean == 0.0 and err.max == 0.0


def test_endpoint_error_alpha_weighting():
    pair = make_pair("disk", 64, (4, 0))
    h, w = pair.img1.shape
    result = AlignResult(
        w1=WarpField(np.full((h, w), 1.0), np.zeros((h, w))),
        w2=WarpField(np.full((h, w), -3.0), np.zeros((h, w))),
    )
    err = endpoint_error(result, pair, alpha=0.25)
    assert err.mean == 0.0  # gt: w1 = +1, w2 = -3


def test_endpoint_error_matches_loop_oracle():
    rng = np.random.default_rng(401)
    pair = make_pair("disk", 48, (1, 2))
    h, w = pair.img1.shape
    result = AlignResult(
        w1=WarpField(rng.normal(size=(h, w)), rng.normal(size=(h, w))),
        w2=WarpField(rng.normal(size=(h, w)), rng.normal(size=(h, w))),
    )
    alpha = 0.5
    errs = []
    for wf, sign in ((result.w1, alpha), (result.w2, -(1 - alpha))):
        for y in range(h):
            for x in range(w):
                if pair.support[y, x]:
                    errs.append(
                        np.hypot(
                            wf.dx[y, x] - sign * pair.offset[0],
                            wf.dy[y, x] - sign * pair.offset[1],
                        )
                    )
    got = endpoint_error(result, pair, alpha=alpha)
    assert got.mean == pytest.approx(np.mean(errs), rel=1e-12)
    assert got.max == pytest.approx(np.max(errs), rel=1e-12)


def test_endpoint_error_shape_mismatch():
    pair = make_pair("disk", 64, (1, 0))
    bad = AlignResult(w1=WarpField.zeros(32, 32), w2=WarpField.zeros(32, 32))
    with pytest.raises(ParameterError):
        endpoint_error(bad, pair)


# ---------------------------------------------------------------------------
# residual reduction


def test_residual_reduction_identical_pair_rejected():
    pair = make_pair("disk", 48, (0, 0))
    with pytest.raises(ParameterError):
        residual_reduction(pair, _zero_result(pair))


def test_residual_reduction_zero_fields_is_one():
    pair = make_pair("disk", 48, (2, 0))
    assert residual_reduction(pair, _zero_result(pair)) == 1.0


def test_residual_reduction_after_alignment_is_small():
    pair = make_pair("disk", 64, (2, 0))
    params = AlignParams()
    res = gauss_newton_align(pair.img1, pair.img2, params)
    assert residual_reduction(pair, res, params) <= 0.3


def test_alignment_recovers_symmetric_split():
    # independent oracle: over constant opposite shifts w1=+s, w2=-s, the
    # data energy of the high-pass pair is minimized near s = offset/2
    pair = make_pair("disk", 64, (2, 0))
    h1 = high_pass(pair.img1, 2.0)
    h2 = high_pass(pair.img2, 2.0)
    hgt, wdt = h1.shape
    best, best_e = None, np.inf
    for sx in np.arange(-2.0, 2.01, 0.25):
        for sy in np.arange(-1.0, 1.01, 0.25):
            w1 = WarpField(np.full((hgt, wdt), sx), np.full((hgt, wdt), sy))
            w2 = WarpField(np.full((hgt, wdt), -sx), np.full((hgt, wdt), -sy))
            e = data_energy(h1, h2, w1, w2)
            if e < best_e:
                best, best_e = (sx, sy), e
    assert best == (1.0, 0.0)

    # and the estimator lands near that optimum on the shape support
    res = gauss_newton_align(pair.img1, pair.img2, AlignParams())
    assert abs(res.w1.dx[pair.support].mean() - 1.0) < 0.5
    assert abs(res.w2.dx[pair.support].mean() + 1.0) < 0.5


def test_zero_offset_noisy_pair_stays_nearly_still():
    pair = make_pair("ring", 48, (0, 0), noise_sigma=0.01, seed=7)
    res = gauss_newton_align(
        pair.img1, pair.img2, AlignParams(gn_max_iters=8, minres_max_iters=300)
    )
    for plane in (res.w1.dx, res.w1.dy, res.w2.dx, res.w2.dy):
        assert np.max(np.abs(plane)) < 0.5  # noise-level jitter only


# ---------------------------------------------------------------------------
# portrait fixture


def test_portrait_shape_and_range():
    img, lm = make_portrait(seed=3)
    assert img.shape == (900, 700, 3)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert lm.shape == (14, 2)


def test_portrait_eye_distance_exact():
    img, lm = make_portrait(seed=5, eye_distance=120.0)
    assert np.linalg.norm(lm[1] - lm[0]) == pytest.approx(120.0, abs=1e-9)


def test_portrait_landmarks_inside_image():
    for seed in (1, 2, 3):
        img, lm = make_portrait(seed=seed)
        h, w = img.shape[:2]
        assert (lm[:, 0] >= 0).all() and (lm[:, 0] <= w - 1).all()
        assert (lm[:, 1] >= 0).all() and (lm[:, 1] <= h - 1).all()


def test_portrait_deterministic_per_seed():
    a_img, a_lm = make_portrait(seed=11)
    b_img, b_lm = make_portrait(seed=11)
    assert a_img.tobytes() == b_img.tobytes()
    np.testing.assert_array_equal(a_lm, b_lm)
    c_img, _ = make_portrait(seed=12)
    assert a_img.tobytes() != c_img.tobytes()
