import math

import numpy as np
import pytest

from morphalign.errors import NumericalBreakdownError, ParameterError
from morphalign.minres import minres_solve


def _matrix_op(m):
    return lambda x: m @ x


def test_identity_solves_in_one_iteration():
    rng = np.random.default_rng(101)
    b = rng.normal(size=12)
    res = minres_solve(lambda x: x, b)
    assert res.iterations == 1
    assert res.converged
    np.testing.assert_allclose(res.x, b, atol=1e-12)


def test_diagonal_system_matches_direct_solution():
    d = np.array([1.0, 2.0, 3.0])
    res = minres_solve(lambda x: d * x, np.ones(3), tol=1e-10)
    np.testing.assert_allclose(res.x, [1.0, 0.5, 1.0 / 3.0], atol=1e-8)
    assert res.converged
    assert res.rel_residual <= 1e-8


def test_random_spd_matches_numpy_solve():
    rng = np.random.default_rng(102)
    for n in (5, 17, 40):
        m = rng.normal(size=(n, n))
        a = m.T @ m + np.eye(n)  # SPD
        b = rng.normal(size=n)
        res = minres_solve(_matrix_op(a), b, tol=1e-12, max_iters=10 * n)
        expect = np.linalg.solve(a, b)
        np.testing.assert_allclose(res.x, expect, rtol=1e-7, atol=1e-9)
        assert res.converged


def test_symmetric_indefinite_system():
    # MINRES only needs symmetry, not definiteness
    rng = np.random.default_rng(103)
    m = rng.normal(size=(10, 10))
    a = (m + m.T) / 2
    a += np.eye(10) * 0.1  # keep it nonsingular, eigenvalues of both signs
    assert np.min(np.linalg.eigvalsh(a)) < 0 < np.max(np.linalg.eigvalsh(a))
    b = rng.normal(size=10)
    res = minres_solve(_matrix_op(a), b, tol=1e-11, max_iters=200)
    np.testing.assert_allclose(res.x, np.linalg.solve(a, b), rtol=1e-6, atol=1e-8)


def test_singular_consistent_system_converges():
    d = np.array([1.0, 1.0, 0.0])
    b = np.array([1.0, 2.0, 0.0])  # in the range of diag(d)
    res = minres_solve(lambda x: d * x, b, tol=1e-10)
    assert res.converged
    np.testing.assert_allclose(d * res.x, b, atol=1e-9)


def test_zero_rhs_returns_zero_without_iterating():
    res = minres_solve(lambda x: x, np.zeros(7))
    assert res.iterations == 0
    assert res.converged
    assert res.rel_residual == 0.0
    np.testing.assert_array_equal(res.x, np.zeros(7))


def test_zero_operator_reports_no_convergence():
    b = np.ones(4)
    res = minres_solve(lambda x: np.zeros_like(x), b, tol=1e-8, max_iters=50)
    assert not res.converged
    assert res.rel_residual == pytest.approx(1.0, abs=1e-12)


def test_iteration_cap_respected():
    rng = np.random.default_rng(104)
    m = rng.normal(size=(60, 60))
    a = m.T @ m + 1e-6 * np.eye(60)  # ill-conditioned, needs many iterations
    b = rng.normal(size=60)
    res = minres_solve(_matrix_op(a), b, tol=1e-14, max_iters=3)
    assert res.iterations == 3
    assert not res.converged


def test_residual_norm_never_increases():
    rng = np.random.default_rng(105)
    m = rng.normal(size=(30, 30))
    a = m.T @ m  # PSD (possibly near-singular)
    b = a @ rng.normal(size=30)  # consistent
    norms = []
    minres_solve(
        _matrix_op(a),
        b,
        tol=1e-13,
        max_iters=120,
        callback=lambda x: norms.append(np.linalg.norm(b - a @ x)),
    )
    assert len(norms) > 3
    scale = norms[0]
    for prev, cur in zip(norms, norms[1:]):
        assert cur <= prev + 1e-10 * scale


def test_breakdown_reports_iteration():
    def bad_op(x):
        out = x.copy()
        out[0] = np.nan
        return out

    with pytest.raises(NumericalBreakdownError) as exc:
        minres_solve(bad_op, np.ones(5))
    assert exc.value.iteration == 1


def test_breakdown_on_overflowing_operator():
    calls = [0]

    def exploding(x):
        calls[0] += 1
        if calls[0] >= 3:
            return x * np.inf
        return 2.0 * x + np.arange(x.size) * x

    with pytest.raises(NumericalBreakdownError) as exc, np.errstate(invalid="ignore"):
        minres_solve(exploding, np.ones(6), tol=1e-14)
    assert exc.value.iteration >= 1


def test_nonfinite_rhs_rejected():
    with pytest.raises(ParameterError):
        minres_solve(lambda x: x, np.array([1.0, np.nan]))
    with pytest.raises(ParameterError):
        minres_solve(lambda x: x, np.array([1.0, np.inf]))


def test_operator_length_mismatch_rejected():
    with pytest.raises(ParameterError):
        minres_solve(lambda x: x[:-1], np.ones(5))


def test_negative_tol_rejected():
    with pytest.raises(ParameterError):
        minres_solve(lambda x: x, np.ones(3), tol=-1e-6)


def test_custom_inner_product_gives_same_solution():
    rng = np.random.default_rng(106)
    m = rng.normal(size=(8, 8))
    a = m.T @ m + np.eye(8)
    b = rng.normal(size=8)

    def split_inner(u, v):
        return float(np.dot(u[:4], v[:4])) + float(np.dot(u[4:], v[4:]))

    res_plain = minres_solve(_matrix_op(a), b, tol=1e-12)
    res_split = minres_solve(_matrix_op(a), b, tol=1e-12, inner=split_inner)
    np.testing.assert_allclose(res_split.x, res_plain.x, atol=1e-9)


def test_reported_residual_is_recomputed_truth():
    rng = np.random.default_rng(107)
    m = rng.normal(size=(15, 15))
    a = m.T @ m + np.eye(15)
    b = rng.normal(size=15)
    res = minres_solve(_matrix_op(a), b, tol=1e-9, max_iters=500)
    true_rel = np.linalg.norm(b - a @ res.x) / np.linalg.norm(b)
    assert res.rel_residual == pytest.approx(true_rel, rel=1e-9, abs=1e-15)
    assert math.isfinite(res.rel_residual)
