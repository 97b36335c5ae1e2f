"""Run configuration: a JSON document validated by a Django form.

Every field has a default except the dimensions, and ``seed`` when the scheme
is ``gibbs``. Command-line flags override the JSON fields before validation.
"""
from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
from django import forms
from numpy.typing import NDArray

from priors.dirichlet_core import SimplexVector
from priors.exceptions import MDAuxError

from .hierarchy import ParentSpec, Scheme

logger = logging.getLogger(__name__)

MAX_SEED = 2 ** 64 - 1

DEFAULT_SWEEPS = 200
DEFAULT_N_PER_GROUP = 100


class InvalidConfig(MDAuxError):
    """A run configuration is missing fields or holds values the model cannot use."""


class RunConfigForm(forms.Form):
    """Validates the fields of a run configuration.

    Hyperparameters may be given as a scalar shared by every parent and
    category, per category (``mean_hyper`` as a K-vector), per parent
    (``precision_shape``/``precision_rate`` as J-vectors) or in full
    (``mean_hyper`` as a J x K matrix). ``clean`` broadcasts them and stores the
    arrays under ``cleaned_data``.
    """
    n_parents = forms.IntegerField(min_value=1)
    n_categories = forms.IntegerField(min_value=1)
    n_groups = forms.IntegerField(min_value=1, required=False)
    n_per_group = forms.IntegerField(min_value=0, required=False)
    mean_hyper = forms.JSONField(required=False)
    precision_shape = forms.JSONField(required=False)
    precision_rate = forms.JSONField(required=False)
    scheme = forms.ChoiceField(choices=[(scheme.value, scheme.value) for scheme in Scheme], required=False)
    sweeps = forms.IntegerField(min_value=0, required=False)
    burn_in = forms.IntegerField(min_value=0, required=False)
    seed = forms.IntegerField(min_value=0, max_value=MAX_SEED, required=False)
    recompute_interval = forms.IntegerField(min_value=1, required=False)
    data = forms.CharField(required=False)
    out = forms.CharField(required=False)
    truth = forms.CharField(required=False)
    true_means = forms.JSONField(required=False)
    true_precisions = forms.JSONField(required=False)
    memberships = forms.JSONField(required=False)

    def _broadcast(self, name: str, value: Any, default: float, shape: tuple[int, ...]) -> NDArray | None:
        try:
            arr = np.asarray(default if value is None else value, dtype=float)
        except (TypeError, ValueError):
            self.add_error(name, "Expected a number or a (nested) list of numbers")
            return None
        try:
            arr = np.broadcast_to(arr, shape).copy()
        except ValueError:
            self.add_error(name, f"Expected a scalar or shape {shape}, got shape {arr.shape}")
            return None
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            self.add_error(name, "Values must be finite and > 0")
            return None
        return arr

    def clean(self) -> dict[str, Any]:
        cleaned = super().clean()
        n_parents, n_categories = cleaned.get('n_parents'), cleaned.get('n_categories')
        if n_parents is None or n_categories is None:
            return cleaned

        cleaned['scheme'] = cleaned.get('scheme') or Scheme.EXPECTATION.value
        if cleaned['scheme'] == Scheme.GIBBS.value and cleaned.get('seed') is None:
            self.add_error('seed', "A seed is mandatory for the gibbs scheme")

        cleaned['mean_hyper'] = self._broadcast('mean_hyper', cleaned.get('mean_hyper'), 1.0,
                                                (n_parents, n_categories))
        cleaned['precision_shape'] = self._broadcast('precision_shape', cleaned.get('precision_shape'), 1.0,
                                                     (n_parents,))
        cleaned['precision_rate'] = self._broadcast('precision_rate', cleaned.get('precision_rate'), 1.0,
                                                    (n_parents,))

        true_means = cleaned.get('true_means')
        if true_means is not None:
            try:
                arr = np.asarray(true_means, dtype=float)
            except (TypeError, ValueError):
                arr = np.empty(0)
            if arr.shape != (n_parents, n_categories):
                self.add_error('true_means', f"Expected shape {(n_parents, n_categories)}, got {arr.shape}")
            elif np.any(arr <= 0.0) or np.any(np.abs(arr.sum(axis=1) - 1.0) > 1e-9):
                self.add_error('true_means', "Rows must be strictly positive and sum to 1")
            else:
                cleaned['true_means'] = arr / arr.sum(axis=1, keepdims=True)
        true_precisions = cleaned.get('true_precisions')
        if true_precisions is not None:
            cleaned['true_precisions'] = self._broadcast('true_precisions', true_precisions, 1.0, (n_parents,))

        memberships = cleaned.get('memberships')
        if memberships is not None:
            cleaned['memberships'] = self._clean_memberships(memberships, n_parents, cleaned.get('n_groups'))
        return cleaned

    def _clean_memberships(self, memberships: Any, n_parents: int, n_groups: int | None) -> tuple | None:
        if not isinstance(memberships, list):
            self.add_error('memberships', "Expected a list with one entry per group")
            return None
        if n_groups is not None and len(memberships) != n_groups:
            self.add_error('memberships', f"Expected {n_groups} entries, got {len(memberships)}")
            return None
        cleaned = []
        for entry in memberships:
            if entry is None:
                cleaned.append(None)
                continue
            if (not isinstance(entry, list) or not entry
                    or any(not isinstance(j, int) or isinstance(j, bool) or not 0 <= j < n_parents for j in entry)
                    or len(set(entry)) != len(entry)):
                self.add_error('memberships', f"Invalid parent list {entry!r}")
                return None
            cleaned.append(tuple(entry))
        return tuple(cleaned)


@dataclass(frozen=True, eq=False)
class RunConfig:
    """A validated run configuration."""
    n_parents: int
    n_categories: int
    mean_hyper: NDArray[np.float64]
    precision_shape: NDArray[np.float64]
    precision_rate: NDArray[np.float64]
    scheme: Scheme = Scheme.EXPECTATION
    sweeps: int = DEFAULT_SWEEPS
    burn_in: int = 0
    seed: int | None = None
    recompute_interval: int = 1
    n_groups: int | None = None
    n_per_group: int = DEFAULT_N_PER_GROUP
    data: str = ''
    out: str = ''
    truth: str = ''
    true_means: NDArray[np.float64] | None = None
    true_precisions: NDArray[np.float64] | None = None
    memberships: tuple[tuple[int, ...] | None, ...] | None = None

    def prior_parents(self) -> list[ParentSpec]:
        """Parents placed at their prior means, the starting point of every fit."""
        return [
            ParentSpec.from_hyperpriors(self.mean_hyper[j], self.precision_shape[j], self.precision_rate[j])
            for j in range(self.n_parents)
        ]

    def true_parents(self, rng: np.random.Generator) -> list[ParentSpec]:
        """Ground-truth parents for simulation.

        Uses ``true_means`` / ``true_precisions`` when given and otherwise draws
        them from the hyperpriors.
        """
        parents = []
        for j in range(self.n_parents):
            if self.true_means is not None:
                mean = self.true_means[j]
            else:
                mean = np.maximum(rng.dirichlet(self.mean_hyper[j]), np.finfo(float).tiny)
            if self.true_precisions is not None:
                precision = float(self.true_precisions[j])
            else:
                precision = float(rng.gamma(self.precision_shape[j], 1.0 / self.precision_rate[j]))
            parents.append(ParentSpec(
                mean=SimplexVector(mean / mean.sum()),
                precision=precision,
                mean_hyper=self.mean_hyper[j],
                precision_shape=float(self.precision_shape[j]),
                precision_rate=float(self.precision_rate[j]),
            ))
        return parents

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready form, embedded in every report."""
        payload = asdict(self)
        payload['scheme'] = self.scheme.value
        for name, value in payload.items():
            if isinstance(value, np.ndarray):
                payload[name] = value.tolist()
        if self.memberships is not None:
            payload['memberships'] = [None if rows is None else list(rows) for rows in self.memberships]
        return payload


def parse_run_config(document: Mapping[str, Any], **overrides: Any) -> RunConfig:
    """Validate a configuration mapping, with non-``None`` overrides taking precedence.

    Raises:
        InvalidConfig: On unknown fields or any validation error.
    """
    if not isinstance(document, Mapping):
        raise InvalidConfig("The configuration must be a JSON object")
    merged = dict(document)
    merged.update({name: value for name, value in overrides.items() if value is not None})
    unknown = sorted(set(merged) - set(RunConfigForm.base_fields))
    if unknown:
        raise InvalidConfig(f"Unknown configuration fields: {', '.join(unknown)}")

    # JSONField expects serialised text, like the body of a form post.
    data = {
        name: json.dumps(value) if isinstance(RunConfigForm.base_fields[name], forms.JSONField) else value
        for name, value in merged.items()
    }
    form = RunConfigForm(data=data)
    if not form.is_valid():
        errors = '; '.join(
            f"{field}: {' '.join(messages)}" for field, messages in sorted(form.errors.items())
        )
        logger.warning("Rejected run configuration: %s", errors)
        raise InvalidConfig(f"Invalid configuration: {errors}")

    cleaned = form.cleaned_data
    return RunConfig(
        n_parents=cleaned['n_parents'],
        n_categories=cleaned['n_categories'],
        mean_hyper=cleaned['mean_hyper'],
        precision_shape=cleaned['precision_shape'],
        precision_rate=cleaned['precision_rate'],
        scheme=Scheme(cleaned['scheme']),
        sweeps=DEFAULT_SWEEPS if cleaned.get('sweeps') is None else cleaned['sweeps'],
        burn_in=cleaned.get('burn_in') or 0,
        seed=cleaned.get('seed'),
        recompute_interval=cleaned.get('recompute_interval') or 1,
        n_groups=cleaned.get('n_groups'),
        n_per_group=DEFAULT_N_PER_GROUP if cleaned.get('n_per_group') is None else cleaned['n_per_group'],
        data=cleaned.get('data') or '',
        out=cleaned.get('out') or '',
        truth=cleaned.get('truth') or '',
        true_means=cleaned.get('true_means'),
        true_precisions=cleaned.get('true_precisions'),
        memberships=cleaned.get('memberships'),
    )


def load_run_config(path: str | Path | None, **overrides: Any) -> RunConfig:
    """Read a JSON configuration file (or none at all) and validate it.

    Raises:
        InvalidConfig: If the file cannot be read, is not valid JSON, or fails validation.
    """
    document: dict[str, Any] = {}
    if path:
        try:
            text = Path(path).read_text(encoding='utf-8')
        except OSError as exc:
            raise InvalidConfig(f"Cannot read configuration {path}: {exc.strerror}") from exc
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(
                f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    return parse_run_config(document, **overrides)
