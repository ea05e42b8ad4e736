"""Generalized low-dimensional projection debiasing.

Builds per-coordinate score vectors from node-wise lasso residuals, selects
the penalty by the two-step bias/variance rule over a finite grid, and
applies the bias correction to the initial penalized fit. The standardized
statistics M_j = beta_check_j / tau_j feed every test downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateCoordinateError, InvalidInputError
from .model import Dataset, LinkFunction, eval_link
from .solvers import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    LassoFit,
    _geometric_grid,
    _check_columns_nonzero,
    fit_logistic_lasso,
)

# Working weights below this floor are clamped before inversion; extreme
# linear predictors otherwise overflow the score vector.
WEIGHT_FLOOR = 1e-10
_DEGENERATE_REL = 1e-12


@dataclass(frozen=True)
class ScorePack:
    """Score vector for one coordinate with its selected penalty and scales."""

    j: int
    v: np.ndarray
    lambda_j: float
    tau_j: float
    zeta_j: float
    zeta_star: float

    def __post_init__(self):
        if not (np.isfinite(self.tau_j) and self.tau_j > 0):
            raise InvalidInputError(f"tau must be positive and finite, got {self.tau_j}")
        if not np.all(np.isfinite(self.v)):
            raise InvalidInputError("score vector contains non-finite entries")


@dataclass(frozen=True)
class DebiasedFit:
    """Debiased coefficients, their scales, and standardized statistics."""

    beta_check: np.ndarray
    tau: np.ndarray
    m_stats: np.ndarray
    beta_init: np.ndarray
    weights: np.ndarray


def weighted_inner(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> float:
    """<a,b>_n = sum_i w_i a_i b_i."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if not (a.shape == b.shape == weights.shape) or a.ndim != 1:
        raise InvalidInputError(
            f"length mismatch: {a.shape}, {b.shape}, {weights.shape}"
        )
    if not np.all(weights > 0):
        raise InvalidInputError("weights must be positive")
    return float(np.sum(weights * a * b))


def weighted_norm(a: np.ndarray, weights: np.ndarray) -> float:
    """Induced norm ||a||_n = sqrt(<a,a>_n)."""
    return math.sqrt(weighted_inner(a, a, weights))


def default_zeta_star(p: int) -> float:
    return math.sqrt(2.0 * math.log(p)) if p > 1 else 0.0


def _validate_weights(weights: np.ndarray, n: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise InvalidInputError(f"weights have shape {weights.shape}, expected ({n},)")
    if not np.all(np.isfinite(weights)) or not np.all(weights > 0):
        raise InvalidInputError("weights must be positive and finite")
    return weights


def identity_score_pack(data: Dataset, j: int, weights: np.ndarray) -> ScorePack:
    """Score vector under known identity precision: v_j = W^{-1} x_j.

    Also serves the p = 1 case, where the node-wise regression is bypassed
    and the bias proxy is vacuously zero.
    """
    weights = _validate_weights(weights, data.n)
    xj = data.column(j)
    v = xj / np.maximum(weights, WEIGHT_FLOOR)
    vnorm = weighted_norm(v, weights)
    inner = weighted_inner(v, xj, weights)
    xj_norm = float(np.linalg.norm(xj))
    if abs(inner) < _DEGENERATE_REL * vnorm * xj_norm:
        raise DegenerateCoordinateError(
            j, f"score vector for coordinate {j} is orthogonal to its column"
        )
    if data.p == 1:
        zeta = 0.0
    else:
        cross = _kernels.matvec_t(data.X, weights * v)
        cross[j] = 0.0
        zeta = float(np.max(np.abs(cross))) / vnorm
    return ScorePack(
        j=j,
        v=v,
        lambda_j=0.0,
        tau_j=vnorm / abs(inner),
        zeta_j=zeta,
        zeta_star=math.inf,
    )


def select_score_vector(
    data: Dataset,
    j: int,
    weights: np.ndarray,
    grid: Sequence[float],
    kappa0: float = 0.0,
    kappa1: float = 0.5,
    zeta_star: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    gram: Optional[np.ndarray] = None,
) -> ScorePack:
    """Two-step score-vector selection over a finite penalty grid.

    Step 1 finds the largest penalty whose bias proxy zeta_j passes the
    bound (resetting the bound to (1+kappa1)*min zeta if nothing passes) and
    records the noise scale tau* there. Step 2 returns the smallest penalty
    whose tau is within (1+kappa0) of tau*. Ties prefer the larger penalty.

    Parameters
    ----------
    weights : positive working weights fdot(u_hat) of length n.
    grid : candidate penalties; scanned in descending order.
    zeta_star : Step-1 bound; defaults to sqrt(2 log p).
    gram : optional precomputed X'X/n, shared across coordinates.
    """
    if not 0 <= j < data.p:
        raise InvalidInputError(f"column index {j} outside [0, {data.p})")
    weights = _validate_weights(weights, data.n)
    if not 0.0 <= kappa0 <= 1.0:
        raise InvalidInputError("kappa0 must lie in [0, 1]")
    if not 0.0 < kappa1 <= 1.0:
        raise InvalidInputError("kappa1 must lie in (0, 1]")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InvalidInputError("penalty grid is empty")
    if not np.all(np.isfinite(grid)) or not np.all(grid >= 0):
        raise InvalidInputError("penalty grid must be finite and nonnegative")
    if data.p == 1:
        return identity_score_pack(data, j, weights)

    grid = np.sort(grid)[::-1].copy()
    bound = default_zeta_star(data.p) if zeta_star is None else float(zeta_star)
    if gram is None:
        gram = _kernels.gram(np.ascontiguousarray(data.X.T))
    gamma_path, vnorm, inner, zmax, sweeps, _ = _kernels.nodewise_scan(
        data.X,
        np.ascontiguousarray(data.X.T),
        gram,
        j,
        grid,
        weights,
        WEIGHT_FLOOR,
        tol,
        max_iter,
    )
    xj = data.column(j)
    xj_norm = float(np.linalg.norm(xj))
    usable = np.abs(inner) >= _DEGENERATE_REL * vnorm * xj_norm
    if not np.any(usable):
        raise DegenerateCoordinateError(
            j,
            f"score vector for coordinate {j} degenerate at every grid penalty",
        )
    tau = np.where(usable, vnorm / np.abs(inner), np.inf)
    zeta = np.where(usable, zmax / vnorm, np.inf)

    # Step 1 (grid is descending, so "first index" = "largest penalty")
    if not np.any(zeta <= bound):
        bound = (1.0 + kappa1) * float(np.min(zeta[usable]))
    step1 = int(np.flatnonzero(zeta <= bound)[0])
    tau_star = tau[step1]
    # Step 2: smallest penalty with tau within the (1+kappa0) inflation cap
    step2 = int(np.flatnonzero(tau <= (1.0 + kappa0) * tau_star)[-1])

    gamma = gamma_path[step2]
    eta = xj - _kernels.matvec(data.X, gamma) if np.any(gamma) else xj.copy()
    v = eta / np.maximum(weights, WEIGHT_FLOOR)
    return ScorePack(
        j=j,
        v=v,
        lambda_j=float(grid[step2]),
        tau_j=float(tau[step2]),
        zeta_j=float(zeta[step2]),
        zeta_star=bound,
    )


def debias(
    data: Dataset,
    beta_init: np.ndarray,
    scores: Sequence[ScorePack],
    link: Optional[LinkFunction] = None,
) -> DebiasedFit:
    """Bias-corrected estimator from an initial fit and score vectors.

    beta_check_j = beta_init_j + v_j'(y - f(u)) / sum_i v_ij fdot(u_i) X_ij
    with u = X beta_init, followed by M_j = beta_check_j / tau_j.
    """
    if link is None:
        link = LinkFunction.logistic()
    beta_init = np.asarray(beta_init, dtype=float)
    if beta_init.shape != (data.p,):
        raise InvalidInputError(
            f"beta_init has shape {beta_init.shape}, expected ({data.p},)"
        )
    by_coord = {pack.j: pack for pack in scores}
    if sorted(by_coord) != list(range(data.p)) or len(scores) != data.p:
        raise InvalidInputError("scores must cover every coordinate exactly once")
    u = _kernels.matvec(data.X, beta_init)
    f, fdot = eval_link(link, u)
    resid = data.y - f
    beta_check = np.empty(data.p)
    tau = np.empty(data.p)
    for jj in range(data.p):
        pack = by_coord[jj]
        if pack.v.shape != (data.n,):
            raise InvalidInputError(
                f"score vector for coordinate {jj} has wrong length"
            )
        denom = weighted_inner(pack.v, data.column(jj), fdot)
        if abs(denom) <= 1e-12:
            raise DegenerateCoordinateError(
                jj, f"debias denominator for coordinate {jj} within 1e-12 of zero"
            )
        beta_check[jj] = beta_init[jj] + float(np.sum(pack.v * resid)) / denom
        tau[jj] = pack.tau_j
    return DebiasedFit(
        beta_check=beta_check,
        tau=tau,
        m_stats=beta_check / tau,
        beta_init=beta_init,
        weights=fdot,
    )


@dataclass(frozen=True)
class PipelineResult:
    """Everything produced by one fit -> score -> debias pass."""

    debiased: DebiasedFit
    scores: tuple
    lasso: LassoFit
    knobs: dict = field(default_factory=dict)


def fit_and_debias(
    data: Dataset,
    link: Optional[LinkFunction] = None,
    lambda_: Optional[float] = None,
    lambda_const: float = 1.0,
    grid_size: int = 50,
    grid_ratio: float = 1e-3,
    kappa0: float = 0.0,
    kappa1: float = 0.5,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    sample_split: bool = False,
    omega_identity: bool = False,
) -> PipelineResult:
    """Full debiasing pipeline on one dataset.

    The initial penalty defaults to lambda_const * sqrt(log p / n). With
    sample_split the initial fit uses the first half of the rows and the
    score/debias stage the second half; by default all rows serve both
    stages. omega_identity applies the known-identity-precision shortcut
    and skips node-wise fitting entirely.
    """
    if link is None:
        link = LinkFunction.logistic()
    if sample_split:
        d_fit, d_deb = data.split_half()
    else:
        d_fit = d_deb = data
    _check_columns_nonzero(d_deb.X)
    lam = (
        float(lambda_)
        if lambda_ is not None
        else lambda_const * math.sqrt(math.log(data.p) / d_fit.n)
    )
    lasso = fit_logistic_lasso(d_fit, lam, link, tol, max_iter)
    u = _kernels.matvec(d_deb.X, lasso.beta_hat)
    _, w = eval_link(link, u)

    packs = []
    if omega_identity or data.p == 1:
        for j in range(data.p):
            packs.append(identity_score_pack(d_deb, j, w))
    else:
        gram = _kernels.gram(np.ascontiguousarray(d_deb.X.T))
        for j in range(data.p):
            lam_max = float(np.max(np.abs(np.delete(gram[:, j], j))))
            if lam_max <= 0.0:
                lam_max = 1e-12 * float(np.max(np.diag(gram)))
            grid = _geometric_grid(lam_max, grid_size, grid_ratio)
            packs.append(
                select_score_vector(
                    d_deb,
                    j,
                    w,
                    grid,
                    kappa0=kappa0,
                    kappa1=kappa1,
                    tol=tol,
                    max_iter=max_iter,
                    gram=gram,
                )
            )
    debiased = debias(d_deb, lasso.beta_hat, packs, link)
    knobs = {
        "lambda": lam,
        "lambda_const": lambda_const,
        "grid_size": grid_size,
        "grid_ratio": grid_ratio,
        "kappa0": kappa0,
        "kappa1": kappa1,
        "tol": tol,
        "max_iter": max_iter,
        "sample_split": sample_split,
        "omega_identity": omega_identity,
        "link": link.kind,
    }
    return PipelineResult(
        debiased=debiased, scores=tuple(packs), lasso=lasso, knobs=knobs
    )
