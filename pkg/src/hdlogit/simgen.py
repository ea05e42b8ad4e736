"""Synthetic data generation for the simulation studies.

Covariance builders (block-equicorrelated, blockwise Toeplitz, identity,
custom), sparse +/-rho coefficient vectors, and Gaussian / truncated /
bounded designs with Bernoulli responses. All randomness flows through
splittable counter-based streams keyed by (master seed, replication index,
stream label) so generation is reproducible under any parallel schedule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels
from .errors import GenerationError, InvalidInputError
from .model import Dataset, LinkFunction, eval_link

_REJECTION_CAP = 1_000_000


def _encode_label(label) -> tuple:
    if isinstance(label, (bool, float)):
        raise InvalidInputError(f"stream labels must be ints or strings, got {label!r}")
    if isinstance(label, (int, np.integer)):
        v = int(label)
        if v < 0:
            raise InvalidInputError("integer stream labels must be nonnegative")
        return (0, v & 0xFFFFFFFF, v >> 32)
    if isinstance(label, str):
        data = label.encode("utf-8")
        return (1, len(data), *data)
    raise InvalidInputError(f"stream labels must be ints or strings, got {label!r}")


def substream(seed: int, *labels) -> np.random.Generator:
    """Independent generator keyed by (seed, labels); order-insensitive use."""
    key = tuple(x for lab in labels for x in _encode_label(lab))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


@dataclass(frozen=True)
class CovarianceSpec:
    """Recipe for a p x p positive-definite covariance matrix."""

    kind: str
    p: int
    value: float = 0.0
    num_blocks: int = 10
    scale: float = 1.0
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("block", "toeplitz_block", "identity", "custom"):
            raise InvalidInputError(f"unknown covariance kind {self.kind!r}")
        if self.p < 1:
            raise InvalidInputError("dimension must be positive")
        if self.kind in ("block", "toeplitz_block"):
            if self.num_blocks < 1 or self.p % self.num_blocks != 0:
                raise InvalidInputError(
                    f"p={self.p} not divisible into {self.num_blocks} equal blocks"
                )
        if self.kind == "custom":
            if self.matrix is None:
                raise InvalidInputError("custom covariance requires a matrix")
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (self.p, self.p):
                raise InvalidInputError(
                    f"custom matrix has shape {m.shape}, expected ({self.p}, {self.p})"
                )
            object.__setattr__(self, "matrix", m)

    @staticmethod
    def block(p: int, value: float, num_blocks: int = 10) -> "CovarianceSpec":
        return CovarianceSpec("block", p, value=value, num_blocks=num_blocks)

    @staticmethod
    def toeplitz_block(p: int, num_blocks: int = 10, scale: float = 1.0) -> "CovarianceSpec":
        return CovarianceSpec("toeplitz_block", p, num_blocks=num_blocks, scale=scale)

    @staticmethod
    def identity(p: int) -> "CovarianceSpec":
        return CovarianceSpec("identity", p)

    @staticmethod
    def custom(matrix) -> "CovarianceSpec":
        m = np.asarray(matrix, dtype=float)
        return CovarianceSpec("custom", m.shape[0], matrix=m)


def build_covariance(spec: CovarianceSpec) -> np.ndarray:
    """Realize the covariance matrix; raises if not positive definite."""
    p = spec.p
    if spec.kind == "identity":
        sigma = np.eye(p)
    elif spec.kind == "block":
        m = p // spec.num_blocks
        block = np.full((m, m), spec.value)
        np.fill_diagonal(block, 1.0)
        sigma = np.zeros((p, p))
        for b in range(spec.num_blocks):
            sigma[b * m : (b + 1) * m, b * m : (b + 1) * m] = block
    elif spec.kind == "toeplitz_block":
        m = p // spec.num_blocks
        block = np.eye(m)
        if m > 1:
            for d in range(1, m):
                off = (m - 1 - d) / (10.0 * (m - 1))
                for i in range(m - d):
                    block[i, i + d] = off
                    block[i + d, i] = off
        sigma = np.zeros((p, p))
        for b in range(spec.num_blocks):
            sigma[b * m : (b + 1) * m, b * m : (b + 1) * m] = block
        sigma *= spec.scale
    else:
        sigma = spec.matrix.copy()
        if not np.array_equal(sigma, sigma.T):
            raise InvalidInputError("custom covariance must be symmetric")
    _, ok = _kernels.cholesky_lower(sigma)
    if not ok:
        raise InvalidInputError(f"{spec.kind} covariance is not positive definite")
    return sigma


@dataclass(frozen=True)
class CoefficientSpec:
    """Sparse coefficient vector: k entries of magnitude rho, signs split evenly."""

    p: int
    k: int
    rho: float = 0.0
    support: Union[str, tuple] = "random"

    def __post_init__(self):
        if self.k < 0 or self.p < 1:
            raise InvalidInputError("need k >= 0 and p >= 1")
        if self.k > self.p:
            raise InvalidInputError(f"sparsity k={self.k} exceeds dimension p={self.p}")
        if isinstance(self.support, str):
            if self.support != "random":
                raise InvalidInputError("support rule must be 'random' or fixed indices")
        else:
            idx = tuple(int(i) for i in self.support)
            if len(idx) != self.k:
                raise InvalidInputError(
                    f"fixed support has {len(idx)} indices but k={self.k}"
                )
            if len(set(idx)) != len(idx) or any(i < 0 or i >= self.p for i in idx):
                raise InvalidInputError("fixed support indices invalid")
            object.__setattr__(self, "support", idx)


def gen_coefficients(spec: CoefficientSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw the coefficient vector; odd k gets the extra positive sign."""
    beta = np.zeros(spec.p)
    if spec.k == 0:
        return beta
    if spec.support == "random":
        support = rng.choice(spec.p, size=spec.k, replace=False)
    else:
        support = np.asarray(spec.support, dtype=int)
    n_pos = (spec.k + 1) // 2
    signs = np.concatenate([np.ones(n_pos), -np.ones(spec.k - n_pos)])
    signs = rng.permutation(signs)
    beta[support] = spec.rho * signs
    return beta


@dataclass(frozen=True)
class DesignSpec:
    """Design distribution: covariance plus sampling mode and sample count."""

    covariance: CovarianceSpec
    n: int
    mode: str = "gaussian"
    bound: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("gaussian", "truncated", "bounded"):
            raise InvalidInputError(f"unknown design mode {self.mode!r}")
        if self.n < 2:
            raise InvalidInputError("need at least 2 samples")
        if self.mode in ("truncated", "bounded"):
            if self.bound is None or not self.bound > 0:
                raise InvalidInputError(f"{self.mode} mode requires a positive bound")

    @property
    def p(self) -> int:
        return self.covariance.p


def _accept_rows(
    spec: DesignSpec, beta: np.ndarray, rng: np.random.Generator, chol: np.ndarray
) -> np.ndarray:
    """Rejection-sample rows until n pass the mode's acceptance test."""
    n, p = spec.n, spec.p
    kept = []
    accepted = 0
    draws_since_accept = 0
    total = 0
    while accepted < n:
        batch = n - accepted
        Z = rng.standard_normal((batch, p))
        rows = _kernels.matmul_bt(Z, chol)
        if spec.mode == "truncated":
            ok = np.abs(_kernels.matvec(rows, beta)) < spec.bound
        else:
            ok = np.max(np.abs(rows), axis=1) <= spec.bound
        got = int(np.count_nonzero(ok))
        total += batch
        if got:
            kept.append(rows[ok])
            accepted += got
            draws_since_accept = 0
        else:
            draws_since_accept += batch
            if draws_since_accept > _REJECTION_CAP:
                raise GenerationError(
                    f"rejection sampling stalled: acceptance estimate "
                    f"{accepted / total:.2e} after {total} draws"
                )
    return np.vstack(kept)


def gen_design(
    spec: DesignSpec,
    beta: np.ndarray,
    rng: np.random.Generator,
    link: Optional[LinkFunction] = None,
) -> Dataset:
    """Draw a Dataset: i.i.d. rows from the design law, y ~ Bernoulli(f(X beta))."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (spec.p,):
        raise InvalidInputError(
            f"beta has shape {beta.shape}, expected ({spec.p},)"
        )
    if link is None:
        link = LinkFunction.logistic()
    sigma = build_covariance(spec.covariance)
    chol, ok = _kernels.cholesky_lower(sigma)
    if not ok:
        raise InvalidInputError("covariance is not positive definite")
    if spec.mode == "gaussian":
        Z = rng.standard_normal((spec.n, spec.p))
        X = _kernels.matmul_bt(Z, chol)
    else:
        X = _accept_rows(spec, beta, rng, chol)
    u = _kernels.matvec(X, beta)
    pi, _ = eval_link(link, u)
    y = (rng.random(spec.n) < pi).astype(float)
    return Dataset(X, y)


def gen_two_sample(
    spec1: DesignSpec,
    spec2: DesignSpec,
    beta1: np.ndarray,
    beta2: np.ndarray,
    rng,
    link: Optional[LinkFunction] = None,
) -> tuple:
    """Two independent draws of equal dimension.

    `rng` may be a pair of generators (one per sample, e.g. two labeled
    substreams) or a single generator, which is split into two children.
    """
    if spec1.p != spec2.p:
        raise InvalidInputError(f"dimension mismatch: p={spec1.p} vs p={spec2.p}")
    beta1 = np.asarray(beta1, dtype=float)
    beta2 = np.asarray(beta2, dtype=float)
    if beta1.shape != beta2.shape:
        raise InvalidInputError("coefficient vectors must have equal length")
    if isinstance(rng, (tuple, list)):
        if len(rng) != 2:
            raise InvalidInputError("rng pair must contain exactly two generators")
        rng1, rng2 = rng
    else:
        rng1, rng2 = rng.spawn(2)
    return (
        gen_design(spec1, beta1, rng1, link),
        gen_design(spec2, beta2, rng2, link),
    )
