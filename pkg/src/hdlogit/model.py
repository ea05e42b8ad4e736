"""Data container, link functions, and the logistic likelihood.

The regression model is y_i ~ Bernoulli(f(beta' X_i)) with no intercept;
users must center or augment their design externally. The default link is
the logistic sigmoid; probit, generalized-logistic and affine-tanh members
are provided for the single-index extension but everything downstream
defaults to logistic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import log_ndtr, ndtr

from .errors import InvalidInputError

# Smallest/largest representable probabilities inside the open interval (0,1).
_P_LO = np.nextafter(0.0, 1.0)
_P_HI = np.nextafter(1.0, 0.0)
_FDOT_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class Dataset:
    """An n x p design matrix with a binary response vector.

    Arrays are copied and frozen at construction; instances are safe to
    share across workers.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise InvalidInputError(f"X must be 2-dimensional, got ndim={X.ndim}")
        if y.ndim != 1:
            raise InvalidInputError(f"y must be 1-dimensional, got ndim={y.ndim}")
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if X.shape[0] < 2:
            raise InvalidInputError("need at least 2 samples")
        if X.shape[1] < 1:
            raise InvalidInputError("need at least 1 covariate")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("X contains non-finite entries")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise InvalidInputError("y entries must be exactly 0 or 1")
        X = X.copy()
        y = y.copy()
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.X[:, j]

    def split_half(self) -> tuple["Dataset", "Dataset"]:
        """First-half / second-half split used by the sample-splitting mode."""
        m = self.n // 2
        if m < 2 or self.n - m < 2:
            raise InvalidInputError(f"n={self.n} too small to split into halves")
        return Dataset(self.X[:m], self.y[:m]), Dataset(self.X[m:], self.y[m:])


@dataclass(frozen=True)
class LinkFunction:
    """A monotone map from the linear predictor to a probability in (0,1).

    Members: logistic (default), probit, generalized-logistic(alpha),
    affine-tanh(a, b). Every member satisfies 0 < f(u) < 1 and fdot(u) > 0
    for finite u, up to floating-point clamping at the interval boundary.
    """

    kind: str = "logistic"
    alpha: float = 1.0
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("logistic", "probit", "generalized_logistic", "affine_tanh"):
            raise InvalidInputError(f"unknown link kind {self.kind!r}")
        if self.kind == "generalized_logistic" and not self.alpha > 0:
            raise InvalidInputError("generalized-logistic exponent must be positive")
        if self.kind == "affine_tanh" and not self.a > 0:
            raise InvalidInputError("affine-tanh slope must be positive")

    @staticmethod
    def logistic() -> "LinkFunction":
        return LinkFunction("logistic")

    @staticmethod
    def probit() -> "LinkFunction":
        return LinkFunction("probit")

    @staticmethod
    def generalized_logistic(alpha: float) -> "LinkFunction":
        return LinkFunction("generalized_logistic", alpha=alpha)

    @staticmethod
    def affine_tanh(a: float, b: float) -> "LinkFunction":
        return LinkFunction("affine_tanh", a=a, b=b)

    @staticmethod
    def from_name(name: str) -> "LinkFunction":
        """Parameter-free members by name, as accepted on CLI/config surfaces."""
        if name in ("logistic", "probit"):
            return LinkFunction(name)
        raise InvalidInputError(f"unsupported link {name!r}")

    @property
    def is_logistic(self) -> bool:
        return self.kind == "logistic"


def _softplus(u: np.ndarray) -> np.ndarray:
    # log(1 + e^u) = max(u, 0) + log1p(e^{-|u|}); stable for |u| up to 700+
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


def eval_link(link: LinkFunction, u):
    """Evaluate (f(u), fdot(u)) for scalar or array u.

    Stable for |u| up to 700: no overflow, and f is clamped into the open
    interval (0,1) at the float boundary. Raises on non-finite input.
    """
    u_arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u_arr)):
        raise InvalidInputError("link argument must be finite")
    scalar = u_arr.ndim == 0
    u_arr = np.atleast_1d(u_arr)

    if link.kind == "logistic":
        # f = e^u/(1+e^u) via exp(-softplus(-u)); fdot = e^{-|u|}/(1+e^{-|u|})^2
        f = np.exp(-_softplus(-u_arr))
        e = np.exp(-np.abs(u_arr))
        fdot = e / (1.0 + e) ** 2
    elif link.kind == "probit":
        f = ndtr(u_arr)
        fdot = np.exp(-0.5 * u_arr**2) / np.sqrt(2.0 * np.pi)
    elif link.kind == "generalized_logistic":
        # f = (1+e^{-u})^{-alpha}; fdot = alpha * f * sigma(-u)
        log_f = -link.alpha * _softplus(-u_arr)
        f = np.exp(log_f)
        fdot = link.alpha * np.exp(log_f - _softplus(u_arr))
    else:  # affine_tanh
        t = link.a * u_arr + link.b
        f = 0.5 * np.tanh(t) + 0.5
        fdot = 0.5 * link.a / np.cosh(np.minimum(np.abs(t), 350.0)) ** 2

    f = np.clip(f, _P_LO, _P_HI)
    fdot = np.maximum(fdot, _FDOT_FLOOR)
    if scalar:
        return float(f[0]), float(fdot[0])
    return f, fdot


def _log_one_minus_f(link: LinkFunction, u: np.ndarray) -> np.ndarray:
    if link.kind == "logistic":
        return -_softplus(u)
    if link.kind == "probit":
        return log_ndtr(-u)
    if link.kind == "generalized_logistic":
        f, _ = eval_link(link, u)
        return np.log1p(-np.minimum(f, _P_HI))
    t = link.a * u + link.b
    return np.log(np.clip(0.5 - 0.5 * np.tanh(t), _P_LO, None))


def _log_f(link: LinkFunction, u: np.ndarray) -> np.ndarray:
    if link.kind == "logistic":
        return -_softplus(-u)
    if link.kind == "probit":
        return log_ndtr(u)
    if link.kind == "generalized_logistic":
        return -link.alpha * _softplus(-u)
    t = link.a * u + link.b
    return np.log(np.clip(0.5 + 0.5 * np.tanh(t), _P_LO, None))


@dataclass(frozen=True)
class LossState:
    """Negative log-likelihood value and gradient at a coefficient vector."""

    beta: np.ndarray
    objective: float
    gradient: np.ndarray


def logistic_loss_grad(
    data: Dataset, beta: np.ndarray, link: Optional[LinkFunction] = None
) -> LossState:
    """Average Bernoulli negative log-likelihood and its gradient.

    For the logistic link the objective equals
    (1/n) sum_i [-y_i beta'X_i + log(1 + exp(beta'X_i))] and the gradient
    equals (1/n) sum_i (f(beta'X_i) - y_i) X_i.
    """
    from . import _kernels

    if link is None:
        link = LinkFunction.logistic()
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.p,):
        raise InvalidInputError(
            f"beta has shape {beta.shape}, expected ({data.p},)"
        )
    u = _kernels.matvec(data.X, beta)
    objective = -float(
        np.mean(data.y * _log_f(link, u) + (1.0 - data.y) * _log_one_minus_f(link, u))
    )
    f, fdot = eval_link(link, u)
    if link.is_logistic:
        resid = f - data.y
    else:
        resid = (f - data.y) * fdot / (f * (1.0 - f))
    gradient = _kernels.matvec_t(data.X, resid) / data.n
    return LossState(beta=beta, objective=objective, gradient=gradient)


def irls_weights(link: LinkFunction, u: np.ndarray) -> np.ndarray:
    """Fisher-scoring working weights fdot^2 / (f(1-f)); equals fdot for logistic."""
    f, fdot = eval_link(link, u)
    if link.is_logistic:
        return fdot
    return fdot**2 / (f * (1.0 - f))
