"""Brute-force and Monte Carlo ground truth for the closed forms.

The enumeration code here shares nothing with ``multi_dirichlet`` except the
special functions: configuration weights are rebuilt from explicit gamma
ratios, multinomial coefficients and Stirling numbers, so a bug in a closed
form cannot validate itself. ``run_verification`` bundles every check into a
report; the ``verify`` management command is a thin wrapper around it.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable, Iterator
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray

from .conf import get_setting
from .dirichlet_core import CountVector, expected_tables, make_rng
from .exceptions import BudgetExceeded, ConstraintViolation, DimensionMismatch, DomainError
from .multi_dirichlet import (
    MDPrior,
    ParentCounts,
    expected_parent_counts,
    expected_parent_tables,
    md_log_marginal,
    parent_counts_log_pmf,
)
from .special_functions import build_stirling_table, log_gamma, log_rising_factorial, log_sum_exp

logger = logging.getLogger(__name__)

# Every urn cell must lie within this many standard errors of its closed form.
URN_Z_TOLERANCE = 3.0

# Draws per requested case before random_cases stops looking.
MAX_CASE_ATTEMPTS_PER_CASE = 1000


@dataclass(frozen=True)
class EnumerationBudget:
    """Caps on exhaustive enumeration.

    Attributes:
        max_total_count (int): Largest ``sum_k n_k`` accepted.
        max_parents (int): Largest J accepted.
        max_categories (int): Largest K accepted.
        ceiling (int): Largest number of parent-count splits accepted.
    """
    max_total_count: int = field(default_factory=lambda: get_setting('ENUMERATION_MAX_TOTAL_COUNT'))
    max_parents: int = field(default_factory=lambda: get_setting('ENUMERATION_MAX_PARENTS'))
    max_categories: int = field(default_factory=lambda: get_setting('ENUMERATION_MAX_CATEGORIES'))
    ceiling: int = field(default_factory=lambda: get_setting('ENUMERATION_CEILING'))

    def __post_init__(self) -> None:
        if min(self.max_total_count, self.max_parents, self.max_categories, self.ceiling) < 0:
            raise DomainError(f"Enumeration budget fields must be nonnegative: {self}")

    @staticmethod
    def split_count(data: CountVector, n_parents: int) -> int:
        """Number of J x K matrices whose columns sum to ``n``: prod_k C(n_k + J - 1, J - 1)."""
        return math.prod(math.comb(int(n_k) + n_parents - 1, n_parents - 1) for n_k in data.counts)

    def check(self, data: CountVector, n_parents: int) -> None:
        """Raise ``BudgetExceeded`` if enumerating splits of ``data`` over J parents is too large."""
        problems = []
        if data.total > self.max_total_count:
            problems.append(f"total count {data.total} > {self.max_total_count}")
        if n_parents > self.max_parents:
            problems.append(f"J={n_parents} > {self.max_parents}")
        if data.dim > self.max_categories:
            problems.append(f"K={data.dim} > {self.max_categories}")
        if not problems and self.split_count(data, n_parents) > self.ceiling:
            problems.append(f"{self.split_count(data, n_parents)} splits > ceiling {self.ceiling}")
        if problems:
            logger.warning("Enumeration refused: %s", '; '.join(problems))
            raise BudgetExceeded("Enumeration budget exceeded: " + '; '.join(problems))

    def to_dict(self) -> dict[str, int]:
        return asdict(self)


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """Every way to write ``total`` as an ordered sum of ``parts`` nonnegative integers.

    Odometer iteration in decreasing lexicographic order; only the current
    composition is held in memory.
    """
    if parts < 1:
        raise DomainError(f"Need at least one part, got {parts}")
    current = [total] + [0] * (parts - 1)
    while True:
        yield tuple(current)
        i = parts - 2
        while i >= 0 and current[i] == 0:
            i -= 1
        if i < 0:
            return
        current[i] -= 1
        tail = current[parts - 1]
        current[parts - 1] = 0
        current[i + 1] = tail + 1


def _column_product(columns: list[tuple[int, int]], n_parents: int) -> Iterator[list[tuple[int, ...]]]:
    if not columns:
        yield []
        return
    (_, n_k), rest = columns[0], columns[1:]
    for head in compositions(n_k, n_parents):
        for tail in _column_product(rest, n_parents):
            yield [head] + tail


def enumerate_parent_count_compositions(
    data: CountVector, n_parents: int, budget: EnumerationBudget | None = None
) -> Iterator[ParentCounts]:
    """Stream every split ``n'`` (J x K, column sums ``n``) exactly once.

    Raises:
        BudgetExceeded: Immediately, if the enumeration is over budget.
    """
    if n_parents < 1:
        raise DomainError(f"Need at least one parent, got {n_parents}")
    (budget or EnumerationBudget()).check(data, n_parents)
    columns = list(enumerate(int(n_k) for n_k in data.counts))

    def splits() -> Iterator[ParentCounts]:
        for column_list in _column_product(columns, n_parents):
            yield ParentCounts(np.array(column_list, dtype=np.int64).T)

    return splits()


@dataclass(frozen=True)
class _Configurations:
    log_weights: NDArray[np.float64]
    parent_counts: NDArray[np.int64]
    parent_tables: NDArray[np.int64]


def _enumerate_configurations(md: MDPrior, data: CountVector, budget: EnumerationBudget | None) -> _Configurations:
    """All (n', m') configurations with their joint log weights ln p(n, n', m' | alpha)."""
    n_parents, n_categories = md.parents.shape
    if n_categories != data.dim:
        raise DimensionMismatch(f"MD prior has {n_categories} categories, counts have {data.dim}")
    budget = budget or EnumerationBudget()
    budget.check(data, n_parents)
    stirling = build_stirling_table(int(data.counts.max()))
    log_alpha = np.log(md.parents).ravel()
    grand_total = float(md.parents.sum())
    head = float(log_gamma(grand_total) - log_gamma(grand_total + data.total))
    head += float(np.sum(log_gamma(data.counts + 1.0)))

    log_weights, counts, tables = [], [], []
    for split in enumerate_parent_count_compositions(data, n_parents, budget):
        flat = split.counts.ravel()
        base = head - float(np.sum(log_gamma(flat + 1.0)))
        cells = np.flatnonzero(flat)
        configurations = list(itertools.product(*(range(1, int(flat[c]) + 1) for c in cells)))
        m_values = np.array(configurations, dtype=np.int64).reshape(len(configurations), cells.size)
        weights = np.full(len(configurations), base)
        for column, cell in enumerate(cells):
            row = stirling.row(int(flat[cell]))
            weights += row[m_values[:, column]] + m_values[:, column] * log_alpha[cell]
        config_tables = np.zeros((len(configurations), flat.size), dtype=np.int64)
        config_tables[:, cells] = m_values
        log_weights.append(weights)
        counts.append(np.broadcast_to(flat, config_tables.shape))
        tables.append(config_tables)

    shape = (-1, n_parents, n_categories)
    return _Configurations(
        log_weights=np.concatenate(log_weights),
        parent_counts=np.concatenate(counts).reshape(shape),
        parent_tables=np.concatenate(tables).reshape(shape),
    )


def brute_force_marginal(md: MDPrior, data: CountVector, budget: EnumerationBudget | None = None) -> float:
    """ln p(n | alpha) as the log-sum over every (n', m') configuration."""
    return log_sum_exp(_enumerate_configurations(md, data, budget).log_weights)


@dataclass(frozen=True)
class BruteForceExpectations:
    """Exact expectations by enumeration: E[n'] (J x K), E[m'] (J x K) and E[m] (K)."""
    parent_counts: NDArray[np.float64]
    parent_tables: NDArray[np.float64]
    tables: NDArray[np.float64]


def brute_force_expectations(
    md: MDPrior, data: CountVector, budget: EnumerationBudget | None = None
) -> BruteForceExpectations:
    """Probability-weighted averages of n', m' and m over every configuration."""
    configurations = _enumerate_configurations(md, data, budget)
    weights = np.exp(configurations.log_weights - log_sum_exp(configurations.log_weights))
    parent_counts = np.tensordot(weights, configurations.parent_counts, axes=1)
    parent_tables = np.tensordot(weights, configurations.parent_tables, axes=1)
    return BruteForceExpectations(parent_counts, parent_tables, parent_tables.sum(axis=0))


@dataclass(frozen=True)
class UrnStatistics:
    """Per-cell empirical means and standard errors of a repeated urn simulation."""
    reps: int
    parent_counts_mean: NDArray[np.float64]
    parent_counts_se: NDArray[np.float64]
    parent_tables_mean: NDArray[np.float64]
    parent_tables_se: NDArray[np.float64]
    tables_mean: NDArray[np.float64]
    tables_se: NDArray[np.float64]


def _summarise(samples: NDArray) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    reps = samples.shape[0]
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / math.sqrt(reps)


def _first_above(cumulative: NDArray, threshold: NDArray) -> NDArray[np.int64]:
    """Row-wise index of the first cumulative entry strictly above ``threshold``."""
    index = (threshold[:, None] < cumulative).argmax(axis=1)
    return np.minimum(index, cumulative.shape[1] - 1)


def urn_simulate(
    md: MDPrior,
    n_draws: int | None,
    reps: int,
    rng: np.random.Generator,
    condition: CountVector | None = None,
) -> UrnStatistics:
    """Run the parent-labelled Polya urn ``reps`` times and summarise n', m' and m.

    Without ``condition`` every draw picks a cell (j, k) from the whole urn: a
    fresh ball (new table) with weight ``alpha_jk`` or a copy of an earlier ball
    in that cell. With ``condition`` the category counts are fixed and each
    category runs its own urn over the J parents. All repetitions advance
    together as numpy arrays.

    Raises:
        DomainError: If ``reps < 100``.
        ConstraintViolation: If ``n_draws`` disagrees with ``condition``.
    """
    if reps < 100:
        raise DomainError(f"Urn simulation needs at least 100 repetitions, got {reps}")
    if condition is not None and n_draws is not None and n_draws != condition.total:
        raise ConstraintViolation(f"n_draws={n_draws} but the conditioning counts total {condition.total}")
    n_parents, n_categories = md.parents.shape
    rows = np.arange(reps)
    counts = np.zeros((reps, n_parents * n_categories), dtype=np.int64)
    tables = np.zeros_like(counts)

    if condition is None:
        base = np.cumsum(md.parents.ravel())
        concentration = float(base[-1])
        for i in range(int(n_draws or 0)):
            u = rng.random(reps) * (concentration + i)
            fresh = u < concentration
            cell = np.where(
                fresh,
                np.minimum(np.searchsorted(base, u, side='right'), base.size - 1),
                _first_above(np.cumsum(counts, axis=1), u - concentration),
            )
            counts[rows, cell] += 1
            tables[rows[fresh], cell[fresh]] += 1
    else:
        for k, n_k in enumerate(condition.counts):
            column = md.parents[:, k]
            concentration = float(column.sum())
            base = np.cumsum(column)
            cells = np.arange(n_parents) * n_categories + k
            for i in range(int(n_k)):
                fresh = rng.random(reps) * (concentration + i) < concentration
                u = rng.random(reps)
                parent = np.minimum(np.searchsorted(base, u * concentration, side='right'), n_parents - 1)
                if i > 0:
                    joined = _first_above(np.cumsum(counts[:, cells], axis=1), u * i)
                    parent = np.where(fresh, parent, joined)
                counts[rows, cells[parent]] += 1
                tables[rows[fresh], cells[parent[fresh]]] += 1

    shape = (reps, n_parents, n_categories)
    counts_mean, counts_se = _summarise(counts.reshape(shape))
    tables_mean, tables_se = _summarise(tables.reshape(shape))
    totals_mean, totals_se = _summarise(tables.reshape(shape).sum(axis=1))
    return UrnStatistics(reps, counts_mean, counts_se, tables_mean, tables_se, totals_mean, totals_se)


# ======== verification suite ========

@dataclass
class Check:
    """Outcome of one verification check."""
    name: str
    cases: int
    max_error: float
    tolerance: float
    note: str = ''

    def __post_init__(self) -> None:
        # numpy scalars would leak into the JSON report.
        self.cases = int(self.cases)
        self.max_error = float(self.max_error)
        self.tolerance = float(self.tolerance)

    @property
    def passed(self) -> bool:
        return bool(self.cases == 0 or self.max_error <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'cases': self.cases,
            'max_error': self.max_error,
            'tolerance': self.tolerance,
            'passed': self.passed,
            'note': self.note or ('no cases within budget' if self.cases == 0 else ''),
        }


@dataclass
class VerificationReport:
    budget: EnumerationBudget
    seed: int
    n_cases: int
    urn_reps: int
    table_perturbation: float = 0.0
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(all(check.passed for check in self.checks))

    def to_dict(self) -> dict:
        return {
            'config': {
                'budget': self.budget.to_dict(),
                'seed': self.seed,
                'cases': self.n_cases,
                'urn_reps': self.urn_reps,
                'table_perturbation': self.table_perturbation,
            },
            'checks': [check.to_dict() for check in self.checks],
            'passed': self.passed,
        }


TableFormula = Callable[[MDPrior, CountVector], NDArray[np.float64]]

STIRLING_ALPHAS = (0.1, 0.5, 1.0, 2.0, 10.0)


def _check_stirling_identity() -> Check:
    table = build_stirling_table(20)
    worst = 0.0
    for alpha in STIRLING_ALPHAS:
        for n in range(1, 21):
            lhs = log_sum_exp(table.row(n) + np.arange(n + 1) * math.log(alpha))
            rhs = float(log_rising_factorial(alpha, n))
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return Check('stirling_identity', len(STIRLING_ALPHAS) * 20, worst, 1e-8)


def _check_stirling_row_sums() -> Check:
    table = build_stirling_table(50)
    worst = max(abs(log_sum_exp(table.row(n)) - float(log_gamma(n + 1.0))) for n in range(1, 51))
    return Check('stirling_row_sums', 50, worst, 1e-9)


def _grid_counts(n_categories: int, max_total: int) -> Iterator[CountVector]:
    for total in range(1, max_total + 1):
        for counts in compositions(total, n_categories):
            yield CountVector(counts)


def _check_disaggregation(budget: EnumerationBudget, rng: np.random.Generator) -> Check:
    worst, cases = 0.0, 0
    max_total = min(6, budget.max_total_count)
    for n_parents in range(1, min(3, budget.max_parents) + 1):
        for n_categories in range(1, min(3, budget.max_categories) + 1):
            md = MDPrior(rng.uniform(0.2, 3.0, size=(n_parents, n_categories)))
            for data in _grid_counts(n_categories, max_total):
                total = log_sum_exp(
                    parent_counts_log_pmf(md, data, split)
                    for split in enumerate_parent_count_compositions(data, n_parents, budget)
                )
                worst = max(worst, abs(math.exp(total) - 1.0))
                cases += 1
    return Check('disaggregation_normalization', cases, worst, 1e-10)


def random_cases(budget: EnumerationBudget, rng: np.random.Generator, n_cases: int) -> list[tuple[MDPrior, CountVector]]:
    """Seeded small (MD prior, counts) cases inside the budget.

    Draws J, K and the total uniformly within the caps and keeps the draws
    whose split count fits under the ceiling.

    Notes:
        - Returns no cases when the budget admits no counts or no splits.
        - Gives up after ``MAX_CASE_ATTEMPTS_PER_CASE * n_cases`` draws and
          returns what it has; the resulting check reports the smaller count.
    """
    if min(budget.max_total_count, budget.max_parents, budget.max_categories, budget.ceiling) < 1:
        return []
    cases = []
    for _ in range(MAX_CASE_ATTEMPTS_PER_CASE * n_cases):
        if len(cases) >= n_cases:
            break
        n_parents = int(rng.integers(1, budget.max_parents + 1))
        n_categories = int(rng.integers(1, budget.max_categories + 1))
        total = int(rng.integers(1, budget.max_total_count + 1))
        data = CountVector(rng.multinomial(total, np.full(n_categories, 1.0 / n_categories)))
        if budget.split_count(data, n_parents) > budget.ceiling:
            continue
        cases.append((MDPrior(rng.uniform(0.2, 3.0, size=(n_parents, n_categories))), data))
    if len(cases) < n_cases:
        logger.warning("Only %d of %d random cases fit under the split ceiling %d", len(cases), n_cases, budget.ceiling)
    return cases


def _check_enumeration(
    cases: list[tuple[MDPrior, CountVector]], budget: EnumerationBudget, table_formula: TableFormula
) -> tuple[Check, Check]:
    marginal_error, expectation_error = 0.0, 0.0
    for md, data in cases:
        configurations = _enumerate_configurations(md, data, budget)
        log_z = log_sum_exp(configurations.log_weights)
        marginal_error = max(marginal_error, abs(log_z - md_log_marginal(md, data)))

        weights = np.exp(configurations.log_weights - log_z)
        exact_counts = np.tensordot(weights, configurations.parent_counts, axes=1)
        exact_tables = np.tensordot(weights, configurations.parent_tables, axes=1)
        collapsed = md.column_sums
        closed_totals = np.array([expected_tables(float(a), int(n)) for a, n in zip(collapsed, data.counts)])
        expectation_error = max(
            expectation_error,
            float(np.max(np.abs(exact_counts - expected_parent_counts(md, data)))),
            float(np.max(np.abs(exact_tables - table_formula(md, data)))),
            float(np.max(np.abs(exact_tables.sum(axis=0) - closed_totals))),
        )
    return (
        Check('marginalization_chain', len(cases), marginal_error, 1e-9),
        Check('expectation_closed_forms', len(cases), expectation_error, 1e-9),
    )


URN_CONFIGURATIONS = (
    ('two_by_two', [[0.7, 0.7], [0.7, 0.7]], [5, 3]),
    ('single_column', [[1.0], [3.0]], [8]),
)


def _check_urn(
    budget: EnumerationBudget, rng: np.random.Generator, reps: int, table_formula: TableFormula
) -> Check:
    z_scores: list[float] = []
    cases = 0
    for _, parents, counts in URN_CONFIGURATIONS:
        md, data = MDPrior(parents), CountVector(counts)
        if data.total > budget.max_total_count or md.n_parents > budget.max_parents or data.dim > budget.max_categories:
            continue
        stats = urn_simulate(md, data.total, reps, rng, condition=data)
        expected = (
            (stats.parent_counts_mean, stats.parent_counts_se, expected_parent_counts(md, data)),
            (stats.parent_tables_mean, stats.parent_tables_se, table_formula(md, data)),
            (stats.tables_mean, stats.tables_se,
             np.array([expected_tables(float(a), int(n)) for a, n in zip(md.column_sums, data.counts)])),
        )
        for mean, se, closed in expected:
            for m, s, c in zip(mean.ravel(), se.ravel(), np.ravel(closed)):
                if s > 0:
                    z_scores.append(abs(m - c) / s)
                else:
                    z_scores.append(0.0 if abs(m - c) <= 1e-12 else math.inf)
        cases += 1
    return Check(
        'urn_statistics',
        cases,
        float(max(z_scores, default=0.0)),
        URN_Z_TOLERANCE,
        note=f'{len(z_scores)} cells, {reps} repetitions' if cases else '',
    )


def run_verification(
    budget: EnumerationBudget | None = None,
    seed: int | None = None,
    n_cases: int | None = None,
    urn_reps: int | None = None,
    table_perturbation: float = 0.0,
) -> VerificationReport:
    """Run the whole oracle suite and collect the checks.

    Steps performed:
        - Check the Stirling table against the rising-factorial identity and its row sums.
        - Check that ``p(n' | n, alpha)`` sums to one over every enumerated split.
        - Compare the closed-form marginal and expectations with exhaustive
          enumeration on a seeded random grid.
        - Compare the closed forms with urn simulations, cell by cell, within
          ``URN_Z_TOLERANCE`` standard errors.

    Args:
        budget: Enumeration caps; defaults come from settings.
        seed: Seed for the randomized grid and the urn runs.
        n_cases: Size of the randomized enumeration grid.
        urn_reps: Repetitions per urn configuration.
        table_perturbation: Added to the parent-table closed form before
            comparison. Nonzero only as a negative control.

    Returns:
        A ``VerificationReport``; ``to_dict()`` is ready for strict JSON.

    Notes:
        The run is reproducible for a fixed seed and budget. Checks never raise
        on a mismatch; inspect ``report.passed``.
    """
    budget = budget or EnumerationBudget()
    seed = get_setting('VERIFY_SEED') if seed is None else seed
    n_cases = get_setting('VERIFY_CASES') if n_cases is None else n_cases
    urn_reps = get_setting('VERIFY_URN_REPS') if urn_reps is None else urn_reps
    rng = make_rng(seed)

    def table_formula(md: MDPrior, data: CountVector) -> NDArray[np.float64]:
        return expected_parent_tables(md, data) + table_perturbation

    report = VerificationReport(
        budget=budget, seed=seed, n_cases=n_cases, urn_reps=urn_reps, table_perturbation=table_perturbation
    )
    report.checks.append(_check_stirling_identity())
    report.checks.append(_check_stirling_row_sums())
    report.checks.append(_check_disaggregation(budget, rng))
    report.checks.extend(_check_enumeration(random_cases(budget, rng, n_cases), budget, table_formula))
    report.checks.append(_check_urn(budget, rng, urn_reps, table_formula))
    for check in report.checks:
        logger.info(
            "check %s: %s (cases=%d, max_error=%.3g, tolerance=%.3g)",
            check.name, 'ok' if check.passed else 'FAILED', check.cases, check.max_error, check.tolerance,
        )
    return report
