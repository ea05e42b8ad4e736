"""L1-penalized solvers: logistic lasso and linear node-wise lasso.

Both use cyclic coordinate descent; the logistic problem wraps the
coordinate sweeps in an IRLS outer loop with a step-halving safeguard so
the penalized objective is non-increasing. Convergence is always declared
on the exact KKT residual of the convex program, never on parameter drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import InvalidInputError
from .model import Dataset, LinkFunction, eval_link, irls_weights, logistic_loss_grad

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10_000
_IRLS_WEIGHT_FLOOR = 1e-10


@dataclass(frozen=True)
class LassoFit:
    """Solution of an L1-penalized fit with solver diagnostics."""

    beta_hat: np.ndarray
    lambda_: float
    iterations: int
    kkt_residual: float
    converged: bool
    objective_path: tuple = ()


@dataclass(frozen=True)
class NodewiseFit:
    """Node-wise regression of column j on the remaining columns."""

    gamma_hat: np.ndarray
    residual: np.ndarray
    lambda_: float
    kkt_residual: float = 0.0
    iterations: int = 0


def kkt_residual_l1(gradient: np.ndarray, beta: np.ndarray, lam: float) -> float:
    """Max-norm violation of the subgradient conditions of an L1 program."""
    active = beta != 0.0
    worst = 0.0
    if np.any(active):
        worst = float(
            np.max(np.abs(gradient[active] + lam * np.sign(beta[active])))
        )
    if np.any(~active):
        slack = float(np.max(np.abs(gradient[~active]))) - lam
        worst = max(worst, max(slack, 0.0))
    return worst


def _validate_lambda(lam) -> float:
    lam = float(lam)
    if not math.isfinite(lam) or lam < 0.0:
        raise InvalidInputError(f"penalty level must be finite and >= 0, got {lam}")
    return lam


def fit_logistic_lasso(
    data: Dataset,
    lambda_: float,
    link: Optional[LinkFunction] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> LassoFit:
    """Penalized likelihood fit: min (1/n) sum_i nll_i(beta) + lambda*||beta||_1.

    IRLS outer loop with coordinate-wise soft-thresholding inner loop.
    `max_iter` caps total coordinate sweeps. Non-convergence is reported via
    converged=False rather than raised.
    """
    lam = _validate_lambda(lambda_)
    if link is None:
        link = LinkFunction.logistic()
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    X = data.X
    XT = np.ascontiguousarray(X.T)
    beta = np.zeros(data.p)

    def penalized_objective(b):
        return logistic_loss_grad(data, b, link).objective + lam * float(
            np.sum(np.abs(b))
        )

    objective_path = [penalized_objective(beta)]
    loss = logistic_loss_grad(data, beta, link)
    kkt = kkt_residual_l1(loss.gradient, beta, lam)
    sweeps_total = 0
    converged = kkt <= tol
    inner_tol = 0.1 * tol

    while not converged and sweeps_total < max_iter:
        u = _kernels.matvec(X, beta)
        f, fdot = eval_link(link, u)
        w = np.maximum(irls_weights(link, u), _IRLS_WEIGHT_FLOOR)
        z = u + (data.y - f) / np.maximum(fdot, _IRLS_WEIGHT_FLOOR)
        proposal = beta.copy()
        sw, _ = _kernels.wls_cd(
            XT, z, w, lam, proposal, inner_tol, max_iter - sweeps_total
        )
        sweeps_total += int(sw)
        if np.array_equal(proposal, beta):
            break
        # The IRLS step is a descent direction for the penalized objective;
        # halve toward the previous iterate until it actually descends.
        step = proposal
        obj_new = penalized_objective(step)
        halvings = 0
        while obj_new > objective_path[-1] + 1e-12 and halvings < 50:
            step = 0.5 * (step + beta)
            obj_new = penalized_objective(step)
            halvings += 1
        if obj_new > objective_path[-1] + 1e-12:
            break
        beta = step
        objective_path.append(obj_new)
        loss = logistic_loss_grad(data, beta, link)
        kkt = kkt_residual_l1(loss.gradient, beta, lam)
        converged = kkt <= tol

    return LassoFit(
        beta_hat=beta,
        lambda_=lam,
        iterations=sweeps_total,
        kkt_residual=kkt,
        converged=converged,
        objective_path=tuple(objective_path),
    )


def fit_nodewise_lasso(
    data: Dataset,
    j: int,
    lambda_: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    gram: Optional[np.ndarray] = None,
) -> NodewiseFit:
    """Lasso of column j on the remaining columns (coordinates 0-based).

    For p = 1 the regression is bypassed: gamma is empty and the residual is
    the column itself.
    """
    lam = _validate_lambda(lambda_)
    if not 0 <= j < data.p:
        raise InvalidInputError(f"column index {j} outside [0, {data.p})")
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    xj = data.column(j)
    if data.p == 1:
        return NodewiseFit(
            gamma_hat=np.empty(0), residual=xj.copy(), lambda_=lam
        )
    if gram is None:
        gram = _kernels.gram(np.ascontiguousarray(data.X.T))
    b = np.zeros(data.p)
    sweeps, kkt, _ = _kernels.gram_cd(
        gram, np.ascontiguousarray(gram[:, j]), lam, b, j, tol, max_iter
    )
    mask = np.arange(data.p) != j
    gamma = b[mask]
    residual = xj - data.X[:, mask] @ gamma
    return NodewiseFit(
        gamma_hat=gamma,
        residual=residual,
        lambda_=lam,
        kkt_residual=float(kkt),
        iterations=int(sweeps),
    )


def _geometric_grid(lam_max: float, grid_size: int, ratio: float) -> np.ndarray:
    return np.geomspace(lam_max, ratio * lam_max, grid_size)


def _check_columns_nonzero(X: np.ndarray):
    norms = np.einsum("ij,ij->j", X, X)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise InvalidInputError(f"column {int(zero[0])} of X is identically zero")


def lambda_path(
    data: Dataset,
    j: Optional[int] = None,
    grid_size: int = 50,
    ratio: float = 1e-3,
) -> np.ndarray:
    """Log-spaced descending penalty grid from lambda_max to ratio*lambda_max.

    lambda_max is the smallest penalty with an all-zero solution, from the
    KKT bound: max_k |x_k' x_j| / n for the node-wise problem of column j,
    or ||X'(y - 1/2)||_inf / n for the whole logistic model (j=None).
    """
    if grid_size < 2:
        raise InvalidInputError("grid_size must be at least 2")
    if not 0.0 < ratio < 1.0:
        raise InvalidInputError("ratio must lie in (0, 1)")
    _check_columns_nonzero(data.X)
    if j is None:
        lam_max = float(np.max(np.abs(data.X.T @ (data.y - 0.5)))) / data.n
    else:
        if not 0 <= j < data.p:
            raise InvalidInputError(f"column index {j} outside [0, {data.p})")
        if data.p == 1:
            raise InvalidInputError(
                "node-wise path undefined for p = 1 (regression is bypassed)"
            )
        xj = data.column(j)
        others = data.X[:, np.arange(data.p) != j]
        lam_max = float(np.max(np.abs(others.T @ xj))) / data.n
    if lam_max <= 0.0:
        # exactly orthogonal columns (or a symmetric response): any positive
        # penalty yields the zero solution, so pin a tiny scale-aware grid
        lam_max = 1e-12 * float(np.max(np.einsum("ij,ij->j", data.X, data.X))) / data.n
    return _geometric_grid(lam_max, grid_size, ratio)
