"""Penalised trend filters: HP smoothing, boosted HP with BIC stopping, l1 trend filtering.

All three share the difference operator ``D`` of a given order, a
``(n - order) x n`` banded matrix whose rows hold the signed binomial stencil
(``(1, -2, 1)`` for order 2). Linear systems of the form ``W + lam * D'D`` are
symmetric positive definite and banded, and are solved with a banded Cholesky
factorisation.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.linalg import cho_solve_banded, cholesky_banded, eigvals_banded, solveh_banded
from scipy.sparse.linalg import MatrixRankWarning, spsolve
from scipy.special import comb

from .errors import DataError, SeriesTooShortError
from .series import TimeSeries, as_values

logger = logging.getLogger(__name__)

ArrayOrSeries = Union[TimeSeries, Sequence[float], np.ndarray]

SSR_FLOOR = 1e-300


def difference_stencil(order: int) -> np.ndarray:
    """Signed binomial coefficients of the ``order``-th forward difference."""
    k = np.arange(order + 1)
    return (-1.0) ** (order - k) * comb(order, k, exact=False)


def difference_matrix(n: int, order: int = 2) -> sparse.csr_matrix:
    """Sparse ``(n - order) x n`` difference operator."""
    order = int(order)
    if order < 1:
        raise DataError(f"difference order must be >= 1, got {order}")
    if n <= order:
        raise SeriesTooShortError(f"need more than {order} observations, got {n}")
    st = difference_stencil(order)
    m = n - order
    return sparse.diags([np.full(m, c) for c in st], offsets=list(range(order + 1)), shape=(m, n), format="csr")


def penalty_banded(n: int, order: int, lam: float, diag: Optional[np.ndarray] = None) -> np.ndarray:
    """Upper banded storage of ``diag(diag) + lam * D'D`` (``diag`` defaults to ones)."""
    D = difference_matrix(n, order)
    G = (D.T @ D).tocsr()
    ab = np.zeros((order + 1, n))
    for k in range(order + 1):
        ab[order - k, k:] = lam * G.diagonal(k)
    ab[order] += 1.0 if diag is None else diag
    return ab


# --------------------------------------------------------------------------- HP


def hp_smooth(y: ArrayOrSeries, lam: float) -> np.ndarray:
    """Hodrick-Prescott trend: solve ``(I + lam D'D) x = y`` with second differences."""
    x = as_values(y)
    if x.size < 3:
        raise SeriesTooShortError(f"HP smoothing needs at least 3 observations, got {x.size}")
    if not lam > 0:
        raise DataError(f"lambda must be positive, got {lam}")
    return solveh_banded(penalty_banded(x.size, 2, lam), x)


@dataclass(frozen=True, eq=False)
class BoostedHpResult:
    trend: np.ndarray
    m_stop: int
    bic_path: np.ndarray
    lam: float


def boosted_hp(y: ArrayOrSeries, lam: float, max_iter: int = 100, early_stopping: bool = True) -> BoostedHpResult:
    """Iterated HP smoothing of residuals, ``f_m = f_{m-1} + S (y - f_{m-1})``.

    With ``early_stopping`` the loop ends at the first ``m`` whose BIC exceeds
    that of ``m - 1`` and returns ``f_{m-1}``. The criterion is
    ``ln(SSR_m / n) + tr(B_m) ln(n) / n`` with ``B_m = I - (I - S)^m``; the
    trace comes from the eigenvalues of the banded penalty ``D'D``, since
    ``S`` has eigenvalues ``1 / (1 + lam * mu)``.
    """
    x = as_values(y)
    n = x.size
    if n < 3:
        raise SeriesTooShortError(f"HP smoothing needs at least 3 observations, got {n}")
    if not lam > 0:
        raise DataError(f"lambda must be positive, got {lam}")
    max_iter = int(max_iter)
    if max_iter < 1:
        raise DataError(f"max_iter must be >= 1, got {max_iter}")

    ab = penalty_banded(n, 2, lam)
    cb = cholesky_banded(ab)
    pen = ab.copy()
    pen[-1] -= 1.0
    mu = np.clip(eigvals_banded(pen / lam), 0.0, None)
    one_minus_s = (lam * mu) / (1.0 + lam * mu)

    # residuals within the banded solve's rounding error (||I + lam D'D|| <= 1 + 16 lam) count as an exact fit
    floor = max(SSR_FLOOR, (np.finfo(float).eps * (1.0 + 16.0 * lam) * float(np.linalg.norm(x))) ** 2)
    f = np.zeros(n)
    bic, fits = [], []
    for m in range(1, max_iter + 1):
        f = f + cho_solve_banded((cb, False), x - f)
        ssr = max(float(np.sum((x - f) ** 2)), floor)
        trace = float(np.sum(1.0 - one_minus_s ** m))
        bic.append(np.log(ssr / n) + trace * np.log(n) / n)
        fits.append(f)
        if early_stopping and m > 1 and bic[-1] > bic[-2]:
            return BoostedHpResult(fits[-2], m - 1, np.array(bic), lam)
    return BoostedHpResult(f, max_iter, np.array(bic), lam)


# ------------------------------------------------------------------- l1 trend


def soft_threshold(v: np.ndarray, kappa: float) -> np.ndarray:
    """``sign(v) * max(|v| - kappa, 0)`` elementwise."""
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


@dataclass(frozen=True, eq=False)
class L1TrendResult:
    """Solution of ``min 0.5 ||y - x||^2 + lam ||D x||_1``.

    ``primal_residual``/``dual_residual`` are the ADMM residual norms at
    exit. ``polished`` is true when the active-set refinement produced a
    point satisfying the optimality conditions exactly (up to rounding);
    ``converged`` is true if either the residual test or the polish succeeded.
    """

    trend: np.ndarray
    lam: float
    diff_order: int
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    polished: bool
    objective_path: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


def l1_objective(y: np.ndarray, x: np.ndarray, lam: float, diff_order: int,
                 weights: Optional[np.ndarray] = None) -> float:
    r = y - x
    fit = 0.5 * float(r @ r) if weights is None else 0.5 * float(weights @ (r * r))
    return fit + lam * float(np.abs(difference_matrix(x.size, diff_order) @ x).sum())


def _solve_on_support(y: np.ndarray, active: np.ndarray, sgn: np.ndarray, lam: float,
                      D: sparse.csr_matrix, w: np.ndarray):
    """Optimality system with ``D x`` free on ``active`` (multiplier fixed at ``lam * sgn``) and zero elsewhere."""
    DA, DI = D[active], D[~active]
    n, ni = y.size, DI.shape[0]
    rhs_x = w * y - lam * (DA.T @ sgn)
    try:
        with np.errstate(all="raise"), warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            if ni:
                K = sparse.bmat([[sparse.diags(w), DI.T], [DI, None]], format="csc")
                sol = spsolve(K, np.concatenate([rhs_x, np.zeros(ni)]))
            else:
                sol = rhs_x / w
    except (RuntimeError, FloatingPointError, ZeroDivisionError, MatrixRankWarning):
        return None
    if not np.all(np.isfinite(sol)):
        return None
    return sol[:n], sol[n:]


def _polish(y: np.ndarray, z: np.ndarray, lam: float, D: sparse.csr_matrix,
            w: np.ndarray, full_rounds: int = 10) -> Optional[np.ndarray]:
    """Active-set refinement started from the support and signs of ``z``.

    Each round solves the optimality system for the current support and
    checks the two ways it can be wrong: a multiplier off the support that
    exceeds ``lam``, or a difference on the support with the wrong sign. The
    first ``full_rounds`` rounds move every violator at once (fast when the
    start is close); after that only the worst violator moves per round,
    which does not oscillate. Returns ``None`` when no consistent support is
    reached within ``2 * len(z) + full_rounds`` rounds.
    """
    m = D.shape[0]
    sgn = np.sign(z)
    seen = set()
    for rnd in range(2 * m + full_rounds):
        key = sgn.tobytes()
        if key in seen and rnd < full_rounds:
            rnd = full_rounds
        seen.add(key)
        active = sgn != 0
        solved = _solve_on_support(y, active, sgn[active], lam, D, w)
        if solved is None:
            return None
        x, u_inactive = solved
        Dx = D @ x
        u = np.zeros(m)
        u[~active] = u_inactive
        over = np.where(active, -np.inf, np.abs(u) / max(lam, 1e-300) - 1.0)
        wrong = np.where(active, -sgn * Dx / max(1.0, float(np.abs(Dx).max())), -np.inf)
        grow, shrink = over > 1e-9, wrong > 1e-9
        if not grow.any() and not shrink.any():
            return x
        if rnd < full_rounds:
            sgn = np.where(grow, np.sign(u), np.where(shrink, 0.0, sgn))
        elif over.max() >= wrong.max():
            i = int(np.argmax(over))
            sgn[i] = np.sign(u[i])
        else:
            sgn[int(np.argmax(wrong))] = 0.0
    return None


def l1_trend_filter(y: ArrayOrSeries, lam: float, diff_order: int = 4, *, rho: float = 1.0,
                    tol: float = 1e-8, max_iter: int = 20000, weights: Optional[np.ndarray] = None,
                    polish: bool = True, track_objective: bool = False) -> L1TrendResult:
    """l1 trend filter solved by ADMM on the split ``z = D x``.

    Each iteration does a banded Cholesky solve in ``x``, soft-thresholding
    in ``z`` and a scaled dual update; ``rho`` is rebalanced when the primal
    and dual residuals drift apart by more than a factor 10. Iteration stops
    once both residual norms fall below ``tol * max(1, ||y||)``.

    Parameters
    ----------
    weights : array, optional
        Nonnegative per-observation weights in the fit term; zero drops an
        observation (used for hold-out cross-validation).
    polish : bool
        Refine the ADMM point by solving the optimality system on the
        detected support of ``D x``.
    """
    yv = as_values(y)
    n = yv.size
    diff_order = int(diff_order)
    if n <= diff_order:
        raise SeriesTooShortError(f"need more than {diff_order} observations, got {n}")
    if not lam >= 0:
        raise DataError(f"lambda must be nonnegative, got {lam}")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0):
        raise DataError("weights must be a nonnegative vector matching y")

    D = difference_matrix(n, diff_order)
    DT = D.T.tocsr()
    G = (DT @ D).tocsr()
    G_band = np.zeros((diff_order + 1, n))
    for k in range(diff_order + 1):
        G_band[diff_order - k, k:] = G.diagonal(k)

    def factor(r: float) -> np.ndarray:
        ab = r * G_band
        ab[-1] += w
        return cholesky_banded(ab)

    wy = w * yv
    x = yv.copy()
    z = D @ x
    u = np.zeros_like(z)
    cb = factor(rho)
    eps = tol * max(1.0, float(np.linalg.norm(yv)))
    r_norm = s_norm = np.inf
    objective = []
    it = 0
    for it in range(1, int(max_iter) + 1):
        x = cho_solve_banded((cb, False), wy + rho * (DT @ (z - u)))
        Dx = D @ x
        z_old = z
        z = soft_threshold(Dx + u, lam / rho)
        u = u + Dx - z
        r_norm = float(np.linalg.norm(Dx - z))
        s_norm = float(rho * np.linalg.norm(DT @ (z - z_old)))
        if track_objective:
            objective.append(l1_objective(yv, x, lam, diff_order, None if weights is None else w))
        if r_norm <= eps and s_norm <= eps:
            break
        if it % 10 == 0:
            if r_norm > 10.0 * s_norm:
                rho *= 2.0
                u /= 2.0
                cb = factor(rho)
            elif s_norm > 10.0 * r_norm:
                rho /= 2.0
                u *= 2.0
                cb = factor(rho)
    admm_ok = r_norm <= eps and s_norm <= eps

    polished = False
    if polish:
        z_support = soft_threshold(D @ x + u, lam / rho)
        xp = _polish(yv, z_support, lam, D, w)
        if xp is None and not np.array_equal(z_support != 0, z != 0):
            xp = _polish(yv, z, lam, D, w)
        if xp is not None:
            wts = None if weights is None else w
            f_admm = l1_objective(yv, x, lam, diff_order, wts)
            if l1_objective(yv, xp, lam, diff_order, wts) <= f_admm + 1e-10 * max(1.0, abs(f_admm)):
                x, polished = xp, True
    if not (admm_ok or polished):
        logger.warning("l1 trend filter did not converge: lam=%g, primal=%.3g, dual=%.3g after %d iterations",
                       lam, r_norm, s_norm, it)
    return L1TrendResult(x, float(lam), diff_order, it, r_norm, s_norm, admm_ok or polished, polished,
                         np.asarray(objective))


class Certificate(NamedTuple):
    u: np.ndarray
    max_abs_u: float
    residual: float


def kkt_certificate(y: ArrayOrSeries, trend: np.ndarray, diff_order: int) -> Certificate:
    """Dual vector ``u`` solving ``D'u = y - trend`` in the least-squares sense.

    ``trend`` is optimal for penalty ``lam`` iff the residual is ~0,
    ``max_abs_u <= lam`` and ``u`` agrees in sign with ``D trend`` where that is nonzero.
    """
    yv = as_values(y)
    D = difference_matrix(yv.size, diff_order)
    r = yv - np.asarray(trend, dtype=float)
    # dense least squares on D' itself; the normal equations would square its conditioning
    u = np.linalg.lstsq(D.T.toarray(), r, rcond=None)[0]
    return Certificate(u, float(np.abs(u).max()) if u.size else 0.0, float(np.linalg.norm(D.T @ u - r)))


def cv_scores(y: ArrayOrSeries, diff_order: int, grid: Sequence[float], fold: int = 5) -> np.ndarray:
    """Hold-out MSE per penalty: every ``fold``-th point is held out and predicted
    by linear interpolation of the trend fitted (with zero weight) at the others."""
    yv = as_values(y)
    n = yv.size
    held = (np.arange(n) % fold) == fold - 1
    kept = np.flatnonzero(~held)
    out = np.empty(len(grid))
    for i, lam in enumerate(grid):
        fit = l1_trend_filter(yv, float(lam), diff_order, weights=(~held).astype(float))
        pred = np.interp(np.flatnonzero(held), kept, fit.trend[kept])
        out[i] = float(np.mean((yv[held] - pred) ** 2))
    return out


def select_lambda_cv(y: ArrayOrSeries, diff_order: int = 4, grid: Optional[Sequence[float]] = None) -> float:
    """Grid penalty with the lowest hold-out MSE; near-ties go to the larger (smoother) penalty."""
    yv = as_values(y)
    if grid is None:
        grid = default_lambda_grid()
    grid = [float(g) for g in grid]
    if not grid:
        raise DataError("lambda grid is empty")
    if any(not g > 0 for g in grid):
        raise DataError("lambda grid must contain positive values")
    if yv.size < 20:
        raise SeriesTooShortError(f"cross-validation needs at least 20 observations, got {yv.size}")
    scores = cv_scores(yv, diff_order, grid)
    best = scores.min()
    tie = 1e-9 * best + 1e-12 * max(float(np.mean(yv ** 2)), 1e-300)
    candidates = [g for g, s in zip(grid, scores) if s <= best + tie]
    return max(candidates)


def default_lambda_grid() -> np.ndarray:
    return np.logspace(-2, 4, 13)
