"""Matrix-free MINRES for self-adjoint linear systems.

Implementation of the method of Paige & Saunders (1975): a symmetric
Lanczos recurrence combined with a Givens-rotation QR factorization of
the growing tridiagonal system. The operator is only ever applied to
vectors, never materialized, which is what makes the pixel-wise
alignment solves tractable (the normal matrix there is N x N with
N = 4 * width * height).

The ``inner`` hook exists because callers may need to fix the exact
floating-point summation order of every dot product; MINRES run with a
block-invariant inner product produces bit-identical iterates when the
problem is presented with its blocks permuted.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import NumericalBreakdownError, ParameterError

__all__ = ["MinresResult", "minres_solve"]


class MinresResult(NamedTuple):
    """Solver outcome.

    x: solution vector
    rel_residual: true relative residual ||rhs - op(x)|| / ||rhs||,
        recomputed once from the final iterate
    iterations: number of Lanczos/QR steps performed
    converged: whether the tolerance test triggered (rather than the
        iteration cap)
    """

    x: np.ndarray
    rel_residual: float
    iterations: int
    converged: bool


def _plain_inner(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.dot(u, v))


def _apply_quiet(op, v):
    """Apply the operator with overflow warnings muted.

    Non-finite products are detected right after and reported by
    exception, so numpy's intermediate warnings are just noise.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return op(v)


def minres_solve(
    op: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    tol: float = 1e-6,
    max_iters: int = 2000,
    inner: Optional[Callable[[np.ndarray, np.ndarray], float]] = None,
    callback: Optional[Callable[[np.ndarray], None]] = None,
) -> MinresResult:
    """Minimize ||op(x) - rhs|| over growing Krylov subspaces.

    ``op`` must be self-adjoint with respect to ``inner`` (a property of
    the caller's operator; it is not verified per call). Iteration stops
    once the recurrence's residual-norm estimate falls to tol * ||rhs||
    or after ``max_iters`` steps, whichever is first. ``callback``, when
    given, receives the current iterate after every step.
    """
    b = np.asarray(rhs, dtype=np.float64).ravel()
    if not np.isfinite(b).all():
        raise ParameterError("rhs contains non-finite values")
    if tol < 0:
        raise ParameterError(f"tol must be nonnegative, got {tol}")
    dot = inner if inner is not None else _plain_inner

    x = np.zeros_like(b)
    beta1 = math.sqrt(dot(b, b))
    if beta1 == 0.0:
        return MinresResult(x, 0.0, 0, True)

    # Lanczos state: y holds beta_k * v_k, r1/r2 the two previous ones.
    y = b.copy()
    r1 = b.copy()
    r2 = b.copy()
    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1  # current residual-norm estimate, nonincreasing
    cs = -1.0
    sn = 0.0
    w = np.zeros_like(b)
    w2 = np.zeros_like(b)

    itn = 0
    converged = False
    while itn < int(max_iters):
        itn += 1

        v = y / beta
        # copy: the operator may return one of its inputs (e.g. identity),
        # and y is updated in place below
        y = np.array(_apply_quiet(op, v), dtype=np.float64).ravel()
        if y.shape != b.shape:
            raise ParameterError(
                f"operator returned length {y.size}, expected {b.size}"
            )
        with np.errstate(over="ignore", invalid="ignore"):
            if itn >= 2:
                y -= (beta / oldb) * r1
            alfa = dot(v, y)
            y -= (alfa / beta) * r2
        r1 = r2
        r2 = y
        oldb = beta
        with np.errstate(over="ignore", invalid="ignore"):
            beta_sq = dot(y, y)
        if not (math.isfinite(alfa) and math.isfinite(beta_sq)) or beta_sq < 0:
            raise NumericalBreakdownError(
                f"non-finite Lanczos coefficients at iteration {itn}", itn
            )
        beta = math.sqrt(beta_sq)

        # Fold the new tridiagonal column through the previous rotation,
        # then build the rotation that annihilates the subdiagonal.
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = math.hypot(gbar, beta)
        if gamma == 0.0:
            # Krylov subspace exhausted with nothing left to rotate;
            # the current iterate is already optimal in it.
            converged = phibar <= tol * beta1
            break
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        if not math.isfinite(phibar):
            raise NumericalBreakdownError(
                f"residual estimate became non-finite at iteration {itn}", itn
            )

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w

        if callback is not None:
            callback(x)

        if phibar <= tol * beta1:
            converged = True
            break
        if beta == 0.0:
            converged = True
            break

    if not np.isfinite(x).all():
        raise NumericalBreakdownError(
            f"solution became non-finite at iteration {itn}", itn
        )
    residual = b - np.asarray(op(x), dtype=np.float64).ravel()
    rel_residual = math.sqrt(dot(residual, residual)) / beta1
    return MinresResult(x, rel_residual, itn, converged)
