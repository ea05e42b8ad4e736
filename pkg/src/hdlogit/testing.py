"""Global and multiple testing on the standardized statistics.

The global test compares max_j M_j^2 against the Gumbel-calibrated
threshold 2 log p - log log p + q_alpha. Multiple testing thresholds the
|M_j| using the normal tail G(t) = 2 - 2*Phi(t): the FDR rule searches
Eq-style for the exact infimum below b_p = sqrt(2 log p - 2 log log p),
the FDV rule inverts G directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, ndtri

from .debias import DebiasedFit
from .errors import InvalidInputError, UnsupportedDimensionError

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2 = math.sqrt(2.0)


def normal_tail(t: float) -> float:
    """Two-sided standard normal tail G(t) = 2 - 2*Phi(t) = erfc(t/sqrt(2))."""
    return float(erfc(t / _SQRT_2))


def normal_tail_inv(q: float) -> float:
    """Inverse of the two-sided tail: t with G(t) = q, for q in (0, 1]."""
    if not 0.0 < q <= 1.0:
        raise InvalidInputError(f"tail probability must lie in (0, 1], got {q}")
    if q == 1.0:
        return 0.0
    return float(ndtri(1.0 - q / 2.0))


def gumbel_quantile(alpha: float) -> float:
    """q_alpha = -log(pi) - 2 log log (1-alpha)^{-1}.

    Satisfies exp(-exp(-q/2)/sqrt(pi)) = 1 - alpha, the type-I extreme value
    law of the maximum squared statistic.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    return -math.log(math.pi) - 2.0 * math.log(math.log(1.0 / (1.0 - alpha)))


def gumbel_pvalue(statistic: float, p: int) -> float:
    """Limit-law p-value of the max-squared statistic at dimension p."""
    x = statistic - 2.0 * math.log(p) + math.log(math.log(p))
    pv = 1.0 - math.exp(-math.exp(-x / 2.0) / _SQRT_PI)
    return min(max(pv, 0.0), 1.0)


@dataclass(frozen=True)
class GlobalTestResult:
    statistic: float
    threshold: float
    q_alpha: float
    alpha: float
    p: int
    p_value: float
    reject: bool


@dataclass(frozen=True)
class MultipleTestResult:
    threshold: float
    rejected: np.ndarray
    target: float
    mode: str
    fallback_used: bool


def _validate_stats(m_stats, min_p: int = 3) -> np.ndarray:
    m = np.asarray(m_stats, dtype=float)
    if m.ndim != 1:
        raise InvalidInputError("statistics must form a 1-d vector")
    if m.size < min_p:
        raise UnsupportedDimensionError(
            f"need at least {min_p} coordinates for the asymptotic "
            f"calibration, got {m.size}"
        )
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("statistics contain non-finite entries")
    return m


def global_test(m_stats, alpha: float) -> GlobalTestResult:
    """Level-alpha test of the global null from standardized statistics."""
    m = _validate_stats(m_stats)
    p = m.size
    q = gumbel_quantile(alpha)
    statistic = float(np.max(m**2))
    threshold = 2.0 * math.log(p) - math.log(math.log(p)) + q
    return GlobalTestResult(
        statistic=statistic,
        threshold=threshold,
        q_alpha=q,
        alpha=alpha,
        p=p,
        p_value=gumbel_pvalue(statistic, p),
        reject=bool(statistic >= threshold),
    )


def group_global_test(m_stats, group, alpha: float) -> GlobalTestResult:
    """Global test restricted to an index set, with p replaced by |group|."""
    m = np.asarray(m_stats, dtype=float)
    idx = np.asarray(list(group), dtype=int)
    if idx.size < 3:
        raise UnsupportedDimensionError(
            f"group must contain at least 3 coordinates, got {idx.size}"
        )
    if len(set(idx.tolist())) != idx.size:
        raise InvalidInputError("group contains duplicate indices")
    if np.any(idx < 0) or np.any(idx >= m.size):
        raise InvalidInputError("group index outside [0, p)")
    return global_test(m[idx], alpha)


def lmt_fdr(m_stats, alpha: float) -> MultipleTestResult:
    """FDR-controlling threshold: exact infimum of the normal-tail criterion.

    Searches t in [0, b_p] for the smallest value with
    p*G(t)/max(R(t),1) <= alpha where R(t) counts |M_j| >= t. The count is
    constant between order statistics of |M_j| while G decreases
    continuously, so the infimum is resolved segment by segment in closed
    form. If no t qualifies the fallback threshold sqrt(2 log p) is used.
    """
    m = _validate_stats(m_stats)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    p = m.size
    absm = np.abs(m)
    b_p = math.sqrt(2.0 * math.log(p) - 2.0 * math.log(math.log(p)))

    uppers = sorted(set(absm[absm <= b_p].tolist()))
    if not uppers or uppers[-1] < b_p:
        uppers.append(b_p)
    threshold = None
    lo = 0.0
    for hi in uppers:
        r = int(np.count_nonzero(absm >= hi))
        q = alpha * max(r, 1) / p
        t_star = normal_tail_inv(min(q, 1.0))
        if t_star <= hi:
            threshold = max(t_star, lo)
            break
        lo = hi
    fallback = threshold is None
    if fallback:
        threshold = math.sqrt(2.0 * math.log(p))
    return MultipleTestResult(
        threshold=float(threshold),
        rejected=np.flatnonzero(absm >= threshold),
        target=alpha,
        mode="FDR",
        fallback_used=fallback,
    )


def lmt_fdv(m_stats, r: float) -> MultipleTestResult:
    """FDV/FWER-controlling threshold G^{-1}(r/p) for a tolerated count r."""
    m = _validate_stats(m_stats, min_p=1)
    p = m.size
    if not 0.0 < r < p:
        raise InvalidInputError(f"tolerated count must lie in (0, p={p}), got {r}")
    threshold = normal_tail_inv(r / p)
    return MultipleTestResult(
        threshold=threshold,
        rejected=np.flatnonzero(np.abs(m) >= threshold),
        target=float(r),
        mode="FDV",
        fallback_used=False,
    )


def two_sample_stats(fit1: DebiasedFit, fit2: DebiasedFit) -> np.ndarray:
    """T_j = (M_j^(1) - M_j^(2)) / sqrt(2) from two debiased fits."""
    if fit1.m_stats.shape != fit2.m_stats.shape:
        raise InvalidInputError(
            f"dimension mismatch: {fit1.m_stats.shape} vs {fit2.m_stats.shape}"
        )
    return (fit1.m_stats - fit2.m_stats) / _SQRT_2


def two_sample_global(t_stats, alpha: float) -> GlobalTestResult:
    """Global test of equality of two coefficient vectors."""
    return global_test(t_stats, alpha)


def two_sample_lmt(t_stats, alpha: float) -> MultipleTestResult:
    """Two-sample FDR procedure on the T statistics."""
    return lmt_fdr(t_stats, alpha)


def separation_radius(n: int, p: int, k: int, alpha: float, delta: float) -> float:
    """Closed-form detection-boundary radius for the global test.

    sqrt((1/n) log(1 + p*log(eta^2+1)/k^2)) with eta = 1 - alpha - delta.
    The source derivation carries a 1/(6n) constant in its proof; the
    stated 1/n form is implemented here (see README notes).
    """
    if n < 1 or p < 1 or k < 1:
        raise InvalidInputError("n, p, k must be positive integers")
    if not (alpha > 0 and delta > 0 and alpha + delta < 1):
        raise InvalidInputError(
            f"need alpha, delta > 0 with alpha + delta < 1, got {alpha}, {delta}"
        )
    eta = 1.0 - alpha - delta
    return math.sqrt(math.log1p(p * math.log1p(eta**2) / k**2) / n)
