"""Multi-Dirichlet priors and their auxiliary variables.

A Multi-Dirichlet (MD) prior draws ``theta ~ Dir(sum_j alpha_j1, ..., sum_j alpha_jK)``
from J parent parameter vectors. Observed counts ``n_k`` are attributed to the
parents through parent counts ``n'_jk`` (column sums ``n_k``) and summarised by
parent table counts ``m'_jk``. The parent-level probabilities ``theta'`` are
never materialised: everything works in the collapsed regime, on counts.

A finite MD process with truncation level K is just an ``MDPrior`` with K
categories; all equations hold unchanged.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .dirichlet_core import (
    CountVector,
    DirichletParams,
    _frozen,
    dm_log_marginal,
)
from .exceptions import ConstraintViolation, DimensionMismatch, DomainError
from .special_functions import (
    digamma,
    log_multinomial_coefficient,
    log_rising_factorial,
    shared_stirling_table,
)

logger = logging.getLogger(__name__)


def _integer_matrix(values: ArrayLike, what: str) -> NDArray[np.int64]:
    raw = np.asarray(values)
    if raw.ndim != 2 or raw.size == 0:
        raise DimensionMismatch(f"{what} must be a non-empty J x K matrix, got shape {raw.shape}")
    if raw.dtype.kind not in 'iuf' or (raw.dtype.kind == 'f' and np.any(raw != np.round(raw))):
        raise DomainError(f"{what} must hold integers")
    arr = np.array(raw, dtype=np.int64)
    if np.any(arr < 0):
        raise DomainError(f"{what} must be nonnegative")
    return _frozen(arr)


@dataclass(frozen=True, eq=False)
class MDPrior:
    """J x K matrix of strictly positive parent parameters ``alpha_jk``.

    Row ``j`` is the parent vector ``alpha_j``; column ``k`` holds the parent
    contributions to category ``k``.

    Attributes:
        parents (NDArray[float64]):
            Read-only copy of the matrix. Validated on construction:
            - J >= 1 and K >= 1, otherwise ``DimensionMismatch``.
            - every entry finite and > 0, otherwise ``DomainError``.

    Methods:
        n_parents, n_categories -> int:
            J and K.
        column_sums -> NDArray[float64]:
            ``sum_j alpha_jk``, the parameters of the collapsed Dirichlet.
        restrict(rows) -> MDPrior:
            The prior of a group that draws on some of the parents only.

        Example:
            md = MDPrior([[0.5, 0.5], [1.0, 2.0]])
            md.column_sums
            array([1.5, 2.5])

    Notes:
        - Equality is identity (``eq=False``); compare ``parents`` arrays instead.
        - Instances are immutable, so a group prior can be cached and shared.
    """
    parents: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.array(self.parents, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"MD prior must be a J x K matrix with J, K >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise DomainError("Every parent parameter alpha_jk must be finite and > 0")
        object.__setattr__(self, 'parents', _frozen(arr))

    @property
    def n_parents(self) -> int:
        return int(self.parents.shape[0])

    @property
    def n_categories(self) -> int:
        return int(self.parents.shape[1])

    @property
    def column_sums(self) -> NDArray[np.float64]:
        """``sum_j alpha_jk`` for every category."""
        return self.parents.sum(axis=0)

    def restrict(self, rows: ArrayLike) -> MDPrior:
        """The MD prior made of a subset of the parent rows."""
        return MDPrior(self.parents[np.asarray(rows, dtype=int)])


@dataclass(frozen=True, eq=False)
class ParentCounts:
    """Split ``n'_jk`` of the observed counts over the parents."""
    counts: NDArray[np.int64]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'counts', _integer_matrix(self.counts, 'Parent counts'))

    def check_against(self, data: CountVector) -> None:
        """Raise ``ConstraintViolation`` unless ``sum_j n'_jk == n_k`` for every k."""
        if self.counts.shape[1] != data.dim:
            raise DimensionMismatch(f"Split has {self.counts.shape[1]} categories, counts have {data.dim}")
        if not np.array_equal(self.counts.sum(axis=0), data.counts):
            raise ConstraintViolation(
                f"Parent counts sum to {self.counts.sum(axis=0).tolist()}, expected {data.counts.tolist()}"
            )


@dataclass(frozen=True, eq=False)
class ParentTables:
    """Parent table counts ``m'_jk``; ``totals`` gives ``m_k = sum_j m'_jk``."""
    tables: NDArray[np.int64]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'tables', _integer_matrix(self.tables, 'Parent tables'))

    @property
    def totals(self) -> NDArray[np.int64]:
        return self.tables.sum(axis=0)

    def check_against(self, split: ParentCounts) -> None:
        """Raise ``ConstraintViolation`` unless ``0 <= m' <= n'`` and ``m' == 0`` iff ``n' == 0``."""
        if self.tables.shape != split.counts.shape:
            raise DimensionMismatch(f"Tables have shape {self.tables.shape}, split has {split.counts.shape}")
        if np.any(self.tables > split.counts):
            raise ConstraintViolation("Parent tables exceed parent counts")
        if not np.array_equal(self.tables == 0, split.counts == 0):
            raise ConstraintViolation("A parent cell has tables without customers or customers without tables")


def _check_dims(md: MDPrior, data: CountVector) -> None:
    if md.n_categories != data.dim:
        raise DimensionMismatch(f"MD prior has {md.n_categories} categories, counts have {data.dim}")


def collapse(md: MDPrior) -> DirichletParams:
    """The Dirichlet parameters ``sum_j alpha_jk`` seen by the observations."""
    return DirichletParams(md.column_sums)


def md_log_marginal(md: MDPrior, data: CountVector) -> float:
    """ln p(n | alpha_1..alpha_J) of one observed sequence with category counts ``n``.

    Args:
        md: The MD prior.
        data: Observed counts, one entry per category.

    Raises:
        DimensionMismatch: If ``data`` does not have K entries.

    Notes:
        - Depends on the parents only through ``collapse(md)``, so splitting a
          parent into two halves leaves it unchanged.
        - Sequence level: no multinomial coefficient is included.
    """
    _check_dims(md, data)
    return dm_log_marginal(collapse(md), data)


def parent_counts_log_pmf(md: MDPrior, data: CountVector, split: ParentCounts) -> float:
    """ln p(n' | n, alpha): a product over categories of Dirichlet-multinomial pmfs.

    Category ``k`` contributes the pmf of splitting ``n_k`` draws over J parts
    with parameters ``alpha_1k..alpha_Jk``, multinomial coefficient included.

    Raises:
        ConstraintViolation: If the split does not reproduce the counts column-wise.
    """
    _check_dims(md, data)
    split.check_against(data)
    coefficient = sum(log_multinomial_coefficient(column) for column in split.counts.T)
    parts = np.sum(log_rising_factorial(md.parents, split.counts))
    normalizer = np.sum(log_rising_factorial(md.column_sums, data.counts))
    return float(coefficient + parts - normalizer)


def md_log_joint_with_parent_counts(md: MDPrior, data: CountVector, split: ParentCounts) -> float:
    """ln p(n, n' | alpha): the disaggregated joint, i.e. conditional plus marginal."""
    return parent_counts_log_pmf(md, data, split) + md_log_marginal(md, data)


def expected_parent_counts(md: MDPrior, data: CountVector) -> NDArray[np.float64]:
    """E[n'_jk] = alpha_jk / (sum_j' alpha_j'k) * n_k."""
    _check_dims(md, data)
    return md.parents / md.column_sums * data.counts


def summed_table_joint_log(md: MDPrior, data: CountVector, tables: ArrayLike) -> float:
    """ln p(n, m | alpha) with per-category table counts on the collapsed parameters.

    ``-ln(Gamma(A + n) / Gamma(A)) + sum_k [ln s(n_k, m_k) + m_k ln(sum_j alpha_jk)]``
    with ``A`` the total of all parent parameters. Summing over ``m`` gives
    ``md_log_marginal``.

    Raises:
        ConstraintViolation: If some ``m_k`` lies outside ``0..n_k``.
    """
    _check_dims(md, data)
    m = np.asarray(tables, dtype=np.int64)
    if m.shape != data.counts.shape:
        raise DimensionMismatch(f"Table counts have shape {m.shape}, expected {data.counts.shape}")
    if np.any(m < 0) or np.any(m > data.counts):
        raise ConstraintViolation(f"Table counts {m.tolist()} must lie in 0..{data.counts.tolist()}")
    collapsed = md.column_sums
    stirling = shared_stirling_table(int(data.counts.max()))
    total = -log_rising_factorial(float(collapsed.sum()), data.total)
    for n_k, m_k, alpha_k in zip(data.counts, m, collapsed):
        log_s = stirling.log_stirling(int(n_k), int(m_k))
        if log_s == -math.inf:
            return -math.inf
        total += log_s + m_k * math.log(alpha_k)
    return float(total)


def parent_tables_joint_log(
    md: MDPrior, data: CountVector, split: ParentCounts, tables: ParentTables
) -> float:
    """ln p(n, n', m' | alpha), in which no sum of parent parameters is exponentiated.

    ``-ln(Gamma(A + n) / Gamma(A)) + sum_k [ln C(n_k; n'_1k..n'_Jk)
    + sum_j (ln s(n'_jk, m'_jk) + m'_jk ln alpha_jk)]``.

    Raises:
        ConstraintViolation: If the split or the tables break their invariants.
    """
    _check_dims(md, data)
    split.check_against(data)
    tables.check_against(split)
    stirling = shared_stirling_table(int(split.counts.max()))
    total = -log_rising_factorial(float(md.parents.sum()), data.total)
    total += sum(log_multinomial_coefficient(column) for column in split.counts.T)
    for n_jk, m_jk, alpha_jk in zip(split.counts.ravel(), tables.tables.ravel(), md.parents.ravel()):
        if n_jk == 0:
            continue
        total += stirling.log_stirling(int(n_jk), int(m_jk)) + m_jk * math.log(alpha_jk)
    return float(total)


def expected_parent_tables(md: MDPrior, data: CountVector) -> NDArray[np.float64]:
    """E[m'_jk] = alpha_jk (Psi(alpha_k + n_k) - Psi(alpha_k)) with ``alpha_k = sum_j alpha_jk``.

    Steps performed:
        - Collapse the prior to ``alpha_k``.
        - Take the digamma increment per category; zero where ``n_k == 0``.
        - Scale by each parent's share ``alpha_jk``.

    Returns:
        A J x K float matrix. Column ``k`` sums to ``expected_tables(alpha_k, n_k)``.

    Raises:
        DimensionMismatch: If ``data`` does not have K entries.
    """
    _check_dims(md, data)
    collapsed = md.column_sums
    increments = np.where(
        data.counts == 0,
        0.0,
        np.asarray(digamma(collapsed + data.counts)) - np.asarray(digamma(collapsed)),
    )
    return md.parents * increments


def _pick(cumulative: NDArray[np.float64], u: float) -> int:
    index = int(np.searchsorted(cumulative, u, side='right'))
    return min(index, cumulative.size - 1)


def sample_parent_counts(md: MDPrior, data: CountVector, rng: np.random.Generator) -> ParentCounts:
    """Draw ``n' ~ p(n' | n, alpha)`` with one J-colour Polya urn per category.

    Category ``k``'s urn starts with weights ``alpha_1k..alpha_Jk``; each of the
    ``n_k`` draws picks a colour proportionally to its weight and adds one to it.
    """
    _check_dims(md, data)
    counts = np.zeros((md.n_parents, md.n_categories), dtype=np.int64)
    for k, n_k in enumerate(data.counts):
        weights = md.parents[:, k].copy()
        for _ in range(int(n_k)):
            cumulative = np.cumsum(weights)
            j = _pick(cumulative, rng.random() * cumulative[-1])
            weights[j] += 1.0
            counts[j, k] += 1
    return ParentCounts(counts)


def sample_parent_tables(
    md: MDPrior, data: CountVector, rng: np.random.Generator
) -> tuple[ParentCounts, ParentTables]:
    """Joint draw of ``(n', m')`` from a parent-labelled Chinese restaurant per category.

    Customer ``i`` (zero-based) of category ``k`` opens a new table with
    probability ``alpha_k / (alpha_k + i)``, where ``alpha_k = sum_j alpha_jk``;
    the new table is served by parent ``j`` with probability
    ``alpha_jk / alpha_k``. Otherwise the customer joins an existing table
    proportionally to its size, i.e. parent ``j`` with probability ``n'_jk / i``.

    Steps performed:
        - Seat the ``n_k`` customers of every category one at a time.
        - Count customers per parent in ``n'`` and opened tables in ``m'``.

    Returns:
        ``(ParentCounts, ParentTables)``; the split reproduces ``data`` column-wise
        and ``m'_jk > 0`` exactly where ``n'_jk > 0``.

    Notes:
        Marginally ``n'`` follows ``p(n' | n, alpha)`` and ``m'`` has mean
        ``expected_parent_tables(md, data)``.
    """
    _check_dims(md, data)
    counts = np.zeros((md.n_parents, md.n_categories), dtype=np.int64)
    tables = np.zeros_like(counts)
    for k, n_k in enumerate(data.counts):
        column = md.parents[:, k]
        concentration = float(column.sum())
        base = np.cumsum(column)
        for i in range(int(n_k)):
            if rng.random() * (concentration + i) < concentration:
                j = _pick(base, rng.random() * concentration)
                tables[j, k] += 1
            else:
                j = _pick(np.cumsum(counts[:, k]), rng.random() * i)
            counts[j, k] += 1
    return ParentCounts(counts), ParentTables(tables)
