"""Hierarchical Multi-Dirichlet model and its collapsed inference.

D groups of counts share J parent priors. Parent ``j`` is factorised into a
mean ``beta_j`` on the simplex and a precision ``b_j``, so that
``alpha_jk = b_j * beta_jk``. Group ``d`` draws
``theta_d ~ Dir(sum_j alpha_jk)`` over its active parents and then its counts.

One sweep updates, in this order:

1. parent tables ``m'_djk`` (expected, or sampled from the parent-labelled
   Chinese restaurant) and their totals ``T_jk = sum_d m'_djk``;
2. the per-group scale auxiliaries ``w_d ~ Beta(c_d, n_d)`` with
   ``c_d = sum_j b_j``, which turn ``Gamma(c_d) / Gamma(c_d + n_d)`` into a
   term linear in the precisions;
3. precisions ``b_j ~ Gamma(a_j + sum_k T_jk, r_j - sum_d ln w_d)``;
4. means ``beta_j ~ Dir(gamma_j + T_j)``.

The ``expectation`` scheme replaces every draw by its expectation (for ``w_d``
the geometric mean ``exp(Psi(c_d) - Psi(c_d + n_d))``) and consumes no
randomness; the ``gibbs`` scheme samples everything.
"""
from __future__ import annotations

import dataclasses
import enum
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from priors.dirichlet_core import CountVector, SimplexVector
from priors.exceptions import DimensionMismatch, DomainError
from priors.multi_dirichlet import (
    MDPrior,
    expected_parent_counts,
    expected_parent_tables,
    md_log_marginal,
    sample_parent_tables,
)
from priors.special_functions import digamma

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


class Scheme(str, enum.Enum):
    GIBBS = 'gibbs'
    EXPECTATION = 'expectation'


class UpdateMode(str, enum.Enum):
    SAMPLE = 'sample'
    EXPECTATION = 'expectation'


@dataclass(frozen=True, eq=False)
class ParentSpec:
    """One parent prior in mean/precision form, with its hyperpriors.

    Attributes:
        mean (SimplexVector): beta_j, strictly positive components.
        precision (float): b_j > 0.
        mean_hyper (numpy.ndarray): gamma_j, Dirichlet hyperprior on beta_j.
        precision_shape (float): a_j, Gamma hyperprior shape.
        precision_rate (float): r_j, Gamma hyperprior rate.
    """
    mean: SimplexVector
    precision: float
    mean_hyper: NDArray[np.float64]
    precision_shape: float = 1.0
    precision_rate: float = 1.0

    def __post_init__(self) -> None:
        mean = self.mean if isinstance(self.mean, SimplexVector) else SimplexVector(self.mean)
        hyper = np.array(self.mean_hyper, dtype=float)
        hyper.flags.writeable = False
        if hyper.shape != mean.theta.shape:
            raise DimensionMismatch(f"Mean has {mean.dim} components, hyperprior has shape {hyper.shape}")
        if np.any(mean.theta <= 0.0):
            raise DomainError("Parent means must be strictly positive so that alpha_jk > 0")
        if np.any(hyper <= 0.0) or not np.all(np.isfinite(hyper)):
            raise DomainError("Mean hyperparameters must be finite and > 0")
        for name in ('precision', 'precision_shape', 'precision_rate'):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0.0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'mean_hyper', hyper)
        object.__setattr__(self, 'precision', float(self.precision))

    @classmethod
    def from_hyperpriors(cls, mean_hyper: ArrayLike, precision_shape: float = 1.0,
                         precision_rate: float = 1.0) -> ParentSpec:
        """Parent placed at its prior means: beta = gamma / sum(gamma), b = a / r."""
        hyper = np.asarray(mean_hyper, dtype=float)
        return cls(
            mean=SimplexVector(hyper / hyper.sum()),
            precision=precision_shape / precision_rate,
            mean_hyper=hyper,
            precision_shape=precision_shape,
            precision_rate=precision_rate,
        )

    @property
    def alpha(self) -> NDArray[np.float64]:
        return self.precision * self.mean.theta

    def replace(self, **changes) -> ParentSpec:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class GroupData:
    """Counts of one group and the parents it draws on (``None`` means all of them)."""
    group_id: str
    counts: CountVector
    parents: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.counts, CountVector):
            object.__setattr__(self, 'counts', CountVector(self.counts))
        if self.parents is not None:
            object.__setattr__(self, 'parents', tuple(int(j) for j in self.parents))


@dataclass
class ModelState:
    """Everything inference needs: parents, groups, auxiliaries and the trace.

    Auxiliary arrays are indexed ``[d, j, k]``; parents inactive in a group keep
    zeros there. ``scale_aux`` holds ``w_d`` and is NaN for empty groups.
    """
    parents: list[ParentSpec]
    groups: list[GroupData]
    recompute_interval: int = 1
    parent_counts: NDArray[np.float64] = field(init=False)
    parent_tables: NDArray[np.float64] = field(init=False)
    table_totals: NDArray[np.float64] = field(init=False)
    scale_aux: NDArray[np.float64] = field(init=False)
    iteration: int = 0
    log_joint_trace: list[float] = field(default_factory=list)
    _memberships: list[NDArray[np.int64]] = field(init=False, repr=False)
    _group_priors: list[MDPrior | None] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.parents:
            raise DomainError("A model needs at least one parent")
        if self.recompute_interval < 1:
            raise DomainError(f"recompute_interval must be >= 1, got {self.recompute_interval}")
        n_categories = self.parents[0].mean.dim
        if any(parent.mean.dim != n_categories for parent in self.parents):
            raise DimensionMismatch("All parents must have the same number of categories")
        self._memberships = []
        for group in self.groups:
            if group.counts.dim != n_categories:
                raise DimensionMismatch(
                    f"Group {group.group_id} has {group.counts.dim} categories, parents have {n_categories}"
                )
            rows = np.arange(self.n_parents) if group.parents is None else np.asarray(group.parents, dtype=np.int64)
            if rows.size == 0 or len(set(rows.tolist())) != rows.size or rows.min() < 0 or rows.max() >= self.n_parents:
                raise DomainError(f"Group {group.group_id} names invalid parents {group.parents}")
            self._memberships.append(rows)
        shape = (self.n_groups, self.n_parents, n_categories)
        self.parent_counts = np.zeros(shape)
        self.parent_tables = np.zeros(shape)
        self.table_totals = np.zeros(shape[1:])
        self.scale_aux = np.full(self.n_groups, np.nan)
        self.refresh_group_priors()

    @property
    def n_parents(self) -> int:
        return len(self.parents)

    @property
    def n_categories(self) -> int:
        return self.parents[0].mean.dim

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def members(self, d: int) -> NDArray[np.int64]:
        """Indices of the parents active in group ``d``."""
        return self._memberships[d]

    def md_prior(self, rows: ArrayLike | None = None) -> MDPrior:
        """MD prior of the current parents, optionally restricted to some rows."""
        alpha = np.stack([parent.alpha for parent in self.parents])
        return MDPrior(alpha if rows is None else alpha[np.asarray(rows)])

    def refresh_group_priors(self) -> None:
        """Recompute every group's collapsed parent parameters from the current parents."""
        self._group_priors = [self.md_prior(rows) for rows in self._memberships]

    def group_prior(self, d: int) -> MDPrior:
        """Group ``d``'s MD prior as of the last refresh."""
        return self._group_priors[d]


@dataclass(frozen=True)
class SyntheticTruth:
    """Ground truth behind ``synthesize``."""
    means: NDArray[np.float64]
    precisions: NDArray[np.float64]
    alpha: NDArray[np.float64]
    thetas: NDArray[np.float64]


def synthesize(
    parents: Sequence[ParentSpec],
    n_groups: int,
    n_per_group: int,
    rng: np.random.Generator,
    memberships: Sequence[Sequence[int] | None] | None = None,
) -> tuple[list[GroupData], SyntheticTruth]:
    """Draw groups from the generative model.

    For every group ``theta_d ~ Dir(sum over active parents of alpha_j)`` and the
    counts are ``n_per_group`` categorical draws from ``theta_d``.

    Raises:
        DomainError: If ``n_groups < 1`` or ``n_per_group < 0``.
    """
    if n_groups < 1 or n_per_group < 0:
        raise DomainError(f"Need n_groups >= 1 and n_per_group >= 0, got {n_groups}, {n_per_group}")
    if memberships is not None and len(memberships) != n_groups:
        raise DimensionMismatch(f"{len(memberships)} memberships for {n_groups} groups")
    alpha = np.stack([parent.alpha for parent in parents])
    groups, thetas = [], []
    for d in range(n_groups):
        rows = None if memberships is None else memberships[d]
        collapsed = alpha.sum(axis=0) if rows is None else alpha[list(rows)].sum(axis=0)
        theta = rng.dirichlet(collapsed)
        theta /= theta.sum()
        counts = rng.multinomial(n_per_group, theta)
        groups.append(GroupData(group_id=f'g{d}', counts=CountVector(counts),
                                parents=None if rows is None else tuple(rows)))
        thetas.append(theta)
    truth = SyntheticTruth(
        means=np.stack([parent.mean.theta for parent in parents]),
        precisions=np.array([parent.precision for parent in parents]),
        alpha=alpha,
        thetas=np.stack(thetas),
    )
    return groups, truth


def _store_aux(state: ModelState, counts: NDArray, tables: NDArray) -> NDArray[np.float64]:
    state.parent_counts = counts
    state.parent_tables = tables
    # Fixed group order, so totals are reproducible bit for bit.
    totals = np.zeros((state.n_parents, state.n_categories))
    for d in range(state.n_groups):
        totals += tables[d]
    state.table_totals = totals
    return totals


def accumulate_expected_tables(state: ModelState) -> NDArray[np.float64]:
    """Fill the auxiliaries with their closed-form expectations and return ``T_jk``."""
    counts = np.zeros_like(state.parent_counts)
    tables = np.zeros_like(state.parent_tables)
    for d, group in enumerate(state.groups):
        rows, md = state.members(d), state.group_prior(d)
        counts[d, rows] = expected_parent_counts(md, group.counts)
        tables[d, rows] = expected_parent_tables(md, group.counts)
    return _store_aux(state, counts, tables)


def sample_tables_sweep(state: ModelState, rng: np.random.Generator) -> NDArray[np.float64]:
    """Fill the auxiliaries with one joint draw of ``(n', m')`` per group and return ``T_jk``."""
    counts = np.zeros_like(state.parent_counts)
    tables = np.zeros_like(state.parent_tables)
    for d, group in enumerate(state.groups):
        rows = state.members(d)
        split, drawn = sample_parent_tables(state.group_prior(d), group.counts, rng)
        counts[d, rows] = split.counts
        tables[d, rows] = drawn.tables
    return _store_aux(state, counts, tables)


def _mean_posterior(state: ModelState, j: int) -> NDArray[np.float64]:
    return state.parents[j].mean_hyper + state.table_totals[j]


def collapsed_mean_predictive(state: ModelState, j: int, k: int) -> float:
    """Predictive weight of category ``k`` under parent ``j`` with its mean integrated out.

    ``(gamma_jk + T_jk) / sum_k' (gamma_jk' + T_jk')``.
    """
    posterior = _mean_posterior(state, j)
    return float(posterior[k] / posterior.sum())


def update_parent_means(
    state: ModelState, rng: np.random.Generator | None, mode: UpdateMode
) -> list[ParentSpec]:
    """Draw (or set to the posterior mean) ``beta_j`` from ``Dir(gamma_j + T_j)``."""
    updated = []
    for j, parent in enumerate(state.parents):
        posterior = _mean_posterior(state, j)
        if mode is UpdateMode.SAMPLE:
            # Floor underflowed components so that alpha_jk stays > 0.
            draw = np.maximum(rng.dirichlet(posterior), _TINY)
            mean = draw / draw.sum()
        else:
            mean = posterior / posterior.sum()
        updated.append(parent.replace(mean=SimplexVector(mean)))
    state.parents = updated
    return updated


def _group_concentrations(state: ModelState) -> NDArray[np.float64]:
    precisions = np.array([parent.precision for parent in state.parents])
    return np.array([precisions[state.members(d)].sum() for d in range(state.n_groups)])


def sample_group_scale_aux(
    state: ModelState, rng: np.random.Generator | None, mode: UpdateMode = UpdateMode.SAMPLE
) -> NDArray[np.float64]:
    """Draw ``w_d ~ Beta(c_d, n_d)`` per non-empty group; empty groups get NaN.

    Integrating ``w`` out of ``w^(c-1) (1-w)^(n-1)`` gives back
    ``Gamma(c) Gamma(n) / Gamma(c + n)``. In expectation mode ``w_d`` is set to
    ``exp(E[ln w_d]) = exp(Psi(c_d) - Psi(c_d + n_d))``.
    """
    concentrations = _group_concentrations(state)
    scale = np.full(state.n_groups, np.nan)
    for d, group in enumerate(state.groups):
        n_d = group.counts.total
        if n_d == 0:
            continue
        c_d = concentrations[d]
        if mode is UpdateMode.SAMPLE:
            w = rng.beta(c_d, n_d)
        else:
            w = np.exp(digamma(c_d) - digamma(c_d + n_d))
        # Keep w inside the open unit interval.
        scale[d] = min(max(w, _TINY), np.nextafter(1.0, 0.0))
    state.scale_aux = scale
    return scale


def update_parent_precisions(
    state: ModelState, rng: np.random.Generator | None, mode: UpdateMode
) -> list[ParentSpec]:
    """Draw (or set to the mean) ``b_j ~ Gamma(a_j + sum_k T_jk, r_j - sum_d ln w_d)``.

    Only groups in which parent ``j`` is active contribute to its rate.
    """
    log_w = np.log(state.scale_aux)
    updated = []
    for j, parent in enumerate(state.parents):
        shape = parent.precision_shape + float(state.table_totals[j].sum())
        rate = parent.precision_rate
        for d in range(state.n_groups):
            if not np.isnan(log_w[d]) and j in state.members(d):
                rate -= log_w[d]
        if mode is UpdateMode.SAMPLE:
            precision = max(float(rng.gamma(shape, 1.0 / rate)), _TINY)
        else:
            precision = shape / rate
        updated.append(parent.replace(precision=precision))
    state.parents = updated
    return updated


def log_joint(state: ModelState) -> float:
    """Sum of group marginals under the current parents plus the hyperprior log densities."""
    total = 0.0
    for d, group in enumerate(state.groups):
        total += md_log_marginal(state.md_prior(state.members(d)), group.counts)
    for parent in state.parents:
        total += float(stats.dirichlet.logpdf(parent.mean.theta, parent.mean_hyper))
        total += float(stats.gamma.logpdf(parent.precision, parent.precision_shape,
                                          scale=1.0 / parent.precision_rate))
    return total


def sweep(state: ModelState, rng: np.random.Generator | None, scheme: Scheme) -> ModelState:
    """One full update: tables, scale auxiliaries, precisions, means.

    Group priors are recomputed every ``recompute_interval`` sweeps, at the
    start of the sweep.
    """
    scheme = Scheme(scheme)
    if state.iteration % state.recompute_interval == 0:
        state.refresh_group_priors()
    if scheme is Scheme.GIBBS:
        mode = UpdateMode.SAMPLE
        sample_tables_sweep(state, rng)
    else:
        mode = UpdateMode.EXPECTATION
        accumulate_expected_tables(state)
    sample_group_scale_aux(state, rng, mode)
    update_parent_precisions(state, rng, mode)
    update_parent_means(state, rng, mode)
    state.iteration += 1
    state.log_joint_trace.append(log_joint(state))
    logger.debug("sweep %d (%s): log joint %.6f", state.iteration, scheme.value, state.log_joint_trace[-1])
    return state


@dataclass(frozen=True)
class FitSummary:
    """Parent estimates after a run: averages over post-burn-in Gibbs sweeps, or the final state."""
    means: NDArray[np.float64]
    precisions: NDArray[np.float64]
    averaged_sweeps: int


def run_sweeps(
    state: ModelState,
    sweeps: int,
    scheme: Scheme,
    rng: np.random.Generator | None = None,
    burn_in: int = 0,
) -> FitSummary:
    """Run ``sweeps`` sweeps and summarise the parents."""
    scheme = Scheme(scheme)
    if scheme is Scheme.GIBBS and rng is None:
        raise DomainError("The gibbs scheme needs a random generator")
    mean_sum = np.zeros((state.n_parents, state.n_categories))
    precision_sum = np.zeros(state.n_parents)
    kept = 0
    for step in range(sweeps):
        sweep(state, rng, scheme)
        if scheme is Scheme.GIBBS and step >= burn_in:
            mean_sum += np.stack([parent.mean.theta for parent in state.parents])
            precision_sum += [parent.precision for parent in state.parents]
            kept += 1
    logger.info("Finished %d %s sweeps over %d groups", sweeps, scheme.value, state.n_groups)
    if kept == 0:
        return FitSummary(
            means=np.stack([parent.mean.theta for parent in state.parents]),
            precisions=np.array([parent.precision for parent in state.parents]),
            averaged_sweeps=0,
        )
    means = mean_sum / kept
    return FitSummary(means=means / means.sum(axis=1, keepdims=True),
                      precisions=precision_sum / kept, averaged_sweeps=kept)
