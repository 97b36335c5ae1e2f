"""Dirichlet-multinomial machinery: marginals, posteriors, aggregation, tables.

All likelihoods here are sequence-level: the probability of an ordered sample
``x_1..x_n`` whose sufficient statistics are the counts. No multinomial
coefficient enters ``dm_log_marginal``; ratios of marginals (Gibbs updates)
therefore never have to cancel one.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import ConstraintViolation, DimensionMismatch, DomainError
from .special_functions import digamma, log_rising_factorial, shared_stirling_table

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-12


def make_rng(seed: int | None) -> np.random.Generator:
    """Random source used by every sampler; pass an explicit seed for reproducible runs."""
    return np.random.default_rng(seed)


def _frozen(arr: NDArray) -> NDArray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DirichletParams:
    """Strictly positive pseudo-counts ``alpha_1..alpha_K`` of a Dirichlet distribution.

    Attributes:
        alpha (NDArray[float64]):
            Read-only parameter vector.
            - K >= 1, otherwise ``DimensionMismatch``.
            - finite and > 0, otherwise ``DomainError``.

    Methods:
        dim -> int:
            K.
        total -> float:
            ``A = sum_k alpha_k``, the concentration.

    Notes:
        Equality is identity; compare ``alpha`` arrays instead.
    """
    alpha: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.array(self.alpha, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise DimensionMismatch(f"Dirichlet parameters must be a non-empty vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise DomainError(f"Dirichlet parameters must be finite and > 0, got {arr.tolist()}")
        object.__setattr__(self, 'alpha', _frozen(arr))

    @property
    def dim(self) -> int:
        return int(self.alpha.size)

    @property
    def total(self) -> float:
        return float(self.alpha.sum())


@dataclass(frozen=True, eq=False)
class CountVector:
    """Observed category counts ``n_1..n_K`` of one group."""
    counts: NDArray[np.int64]

    def __post_init__(self) -> None:
        raw = np.asarray(self.counts)
        if raw.ndim != 1 or raw.size < 1:
            raise DimensionMismatch(f"Counts must be a non-empty vector, got shape {raw.shape}")
        if raw.dtype.kind not in 'iuf':
            raise DomainError(f"Counts must be integers, got dtype {raw.dtype}")
        if raw.dtype.kind == 'f' and (not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw))):
            raise DomainError(f"Counts must be integers, got {raw.tolist()}")
        arr = np.array(raw, dtype=np.int64)
        if np.any(arr < 0):
            raise DomainError(f"Counts must be nonnegative, got {arr.tolist()}")
        object.__setattr__(self, 'counts', _frozen(arr))

    @property
    def dim(self) -> int:
        return int(self.counts.size)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True, eq=False)
class SimplexVector:
    """A probability vector ``theta_1..theta_K``."""
    theta: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.array(self.theta, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise DimensionMismatch(f"Simplex vector must be non-empty, got shape {arr.shape}")
        if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
            raise DomainError(f"Simplex components must be finite and >= 0, got {arr.tolist()}")
        if abs(arr.sum() - 1.0) > SIMPLEX_TOLERANCE:
            raise ConstraintViolation(f"Simplex components must sum to 1, got {arr.sum()!r}")
        object.__setattr__(self, 'theta', _frozen(arr))

    @property
    def dim(self) -> int:
        return int(self.theta.size)


def _check_dims(prior: DirichletParams, data: CountVector) -> None:
    if prior.dim != data.dim:
        raise DimensionMismatch(f"Prior has {prior.dim} categories, counts have {data.dim}")


def _check_concentration(alpha: float) -> None:
    if not (math.isfinite(alpha) and alpha > 0.0):
        raise DomainError(f"Concentration must be finite and > 0, got {alpha!r}")


def _check_draws(n: int) -> None:
    if int(n) != n or n < 0:
        raise DomainError(f"Number of draws must be a nonnegative integer, got {n!r}")


def dm_log_marginal(prior: DirichletParams, data: CountVector) -> float:
    """ln p(n | alpha) with theta integrated out.

    ``lnG(A) - lnG(A + n) + sum_k [lnG(alpha_k + n_k) - lnG(alpha_k)]`` where
    ``A = sum_k alpha_k``.

    Raises:
        DimensionMismatch: If prior and counts disagree in K.
    """
    _check_dims(prior, data)
    per_category = np.asarray(log_rising_factorial(prior.alpha, data.counts))
    return float(per_category.sum() - log_rising_factorial(prior.total, data.total))


def dm_posterior(prior: DirichletParams, data: CountVector) -> DirichletParams:
    """Conjugate update: ``Dir(alpha_1 + n_1, ..., alpha_K + n_K)``."""
    _check_dims(prior, data)
    return DirichletParams(prior.alpha + data.counts)


def aggregate(params: DirichletParams, partition: Sequence[Iterable[int]]) -> DirichletParams:
    """Sum the parameters over the blocks of a partition of the category indices.

    Indices are zero-based. If ``theta ~ Dir(alpha)`` then the block sums of
    ``theta`` follow ``Dir`` with the block sums of ``alpha``.

    Raises:
        ConstraintViolation: If the blocks miss or repeat an index, or name one out of range.
    """
    blocks = [list(block) for block in partition]
    seen = [index for block in blocks for index in block]
    if sorted(seen) != list(range(params.dim)) or any(not block for block in blocks):
        raise ConstraintViolation(
            f"Partition {blocks} does not cover indices 0..{params.dim - 1} exactly once"
        )
    return DirichletParams([float(params.alpha[block].sum()) for block in blocks])


def sample_dirichlet(params: DirichletParams, rng: np.random.Generator) -> SimplexVector:
    """One draw ``theta ~ Dir(alpha)``."""
    theta = rng.dirichlet(params.alpha)
    return SimplexVector(theta / theta.sum())


def table_count_log_pmf(alpha: float, n: int, m: int) -> float:
    """ln p(m | n, alpha) of the number of tables after ``n`` customers.

    ``ln s(n, m) + m ln(alpha) - ln(Gamma(alpha + n) / Gamma(alpha))``, with
    ``p(0 | 0, alpha) = 1``.

    Raises:
        DomainError: If ``alpha <= 0`` or ``n`` is not a nonnegative integer.
        ConstraintViolation: If ``m > n`` or ``m < 0``.
    """
    _check_concentration(alpha)
    _check_draws(n)
    if m < 0 or m > n:
        raise ConstraintViolation(f"Table count must satisfy 0 <= m <= n, got m={m}, n={n}")
    if n == 0:
        return 0.0
    log_s = shared_stirling_table(n).log_stirling(n, m)
    if log_s == -math.inf:
        return -math.inf
    return log_s + m * math.log(alpha) - log_rising_factorial(alpha, n)


def table_count_pmf(alpha: float, n: int) -> NDArray[np.float64]:
    """The full table-count distribution ``p(m | n, alpha)`` for ``m = 0..n``.

    Steps performed:
        - Read row ``n`` of the shared log Stirling table, growing it if needed.
        - Add ``m ln(alpha)`` and subtract ``ln(Gamma(alpha + n) / Gamma(alpha))``.
        - Exponentiate.

    Returns:
        A float vector of length ``n + 1``; ``[1.0]`` when ``n == 0``.

    Raises:
        DomainError: If ``alpha <= 0`` or ``n`` is not a nonnegative integer.
        CapacityError: If ``n`` is above the configured Stirling cap.

    Notes:
        Entry 0 is exactly zero for ``n > 0``. For very large ``n`` prefer
        ``sample_table_count_crt``, which needs no table.
    """
    _check_concentration(alpha)
    _check_draws(n)
    if n == 0:
        return np.ones(1)
    row = shared_stirling_table(n).row(n)
    log_p = row + np.arange(n + 1) * math.log(alpha) - log_rising_factorial(alpha, n)
    return np.exp(log_p)


def expected_tables(alpha: float, n: int) -> float:
    """E[m | n, alpha] = alpha (Psi(alpha + n) - Psi(alpha)); zero when ``n == 0``."""
    _check_concentration(alpha)
    _check_draws(n)
    if n == 0:
        return 0.0
    return float(alpha * (digamma(alpha + n) - digamma(alpha)))


def sample_table_count_crt(
    alpha: float, n: int, rng: np.random.Generator, size: int | None = None
) -> int | NDArray[np.int64]:
    """Draw table counts as a sum of independent Bernoulli(alpha / (alpha + i)), i = 0..n-1.

    Needs no Stirling table, so it works for any ``n``.

    Args:
        alpha: Concentration, > 0.
        n: Number of customers, a nonnegative integer.
        rng: Random source, see ``make_rng``.
        size: Number of independent draws; ``None`` for a single int.

    Raises:
        DomainError: If ``alpha <= 0`` or ``n`` is not a nonnegative integer.
    """
    _check_concentration(alpha)
    _check_draws(n)
    n = int(n)
    shape = () if size is None else (size,)
    if n == 0:
        return 0 if size is None else np.zeros(shape, dtype=np.int64)
    new_table = alpha / (alpha + np.arange(n))
    draws = (rng.random(shape + (n,)) < new_table).sum(axis=-1)
    return int(draws) if size is None else draws.astype(np.int64)


def sample_table_count_inverse_cdf(
    alpha: float, n: int, rng: np.random.Generator, size: int | None = None
) -> int | NDArray[np.int64]:
    """Draw table counts by inverting the Stirling-number pmf (``n`` within the table cap)."""
    pmf = table_count_pmf(alpha, n)
    draws = rng.choice(pmf.size, size=size, p=pmf / pmf.sum())
    return int(draws) if size is None else np.asarray(draws, dtype=np.int64)


def as_counts(values: ArrayLike | CountVector) -> CountVector:
    return values if isinstance(values, CountVector) else CountVector(values)
