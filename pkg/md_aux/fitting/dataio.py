"""Readers and writers for counts files, parent-parameter files and JSON reports.

Counts files are UTF-8 CSV: one row per group, K nonnegative integer columns,
optionally preceded by a header row. Parent-parameter files are CSV with J rows
of K positive decimals. Fields may be double-quoted. Parse errors name the
offending line and column (both 1-based; the column is the character position
where the field starts).
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from md_aux import __version__
from priors.dirichlet_core import CountVector, expected_tables
from priors.exceptions import DimensionMismatch, MDAuxError
from priors.multi_dirichlet import MDPrior, expected_parent_counts, expected_parent_tables

from .config import RunConfig
from .hierarchy import FitSummary, GroupData, ModelState, SyntheticTruth

logger = logging.getLogger(__name__)


class InputParseError(MDAuxError):
    """An input file could not be parsed; carries the 1-based position."""

    def __init__(self, source: str, line: int, column: int, message: str) -> None:
        self.source = source
        self.line = line
        self.column = column
        super().__init__(f"{source}: line {line}, column {column}: {message}")


def _fields(text: str) -> list[tuple[int, str]]:
    """Split a CSV row into ``(column, stripped field)`` pairs; fields may be double-quoted.

    Raises:
        csv.Error: On an unterminated quote.
    """
    values = next(csv.reader([text], strict=True, skipinitialspace=True), [])
    starts, quoted = [0], False
    for position, char in enumerate(text):
        if char == '"':
            quoted = not quoted
        elif char == ',' and not quoted:
            starts.append(position + 1)
    fields = []
    for value, start in zip(values, starts):
        rest = text[start:]
        fields.append((start + 1 + len(rest) - len(rest.lstrip()), value.strip()))
    return fields


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _rows(lines: Iterable[str], source: str) -> list[tuple[int, list[tuple[int, str]]]]:
    """Non-blank rows with their line numbers, header dropped, widths checked."""
    rows = []
    width = None
    for number, text in enumerate(lines, start=1):
        text = text.rstrip('\r\n')
        if number == 1:
            text = text.lstrip('\ufeff')
        if not text.strip():
            continue
        try:
            fields = _fields(text)
        except csv.Error as exc:
            raise InputParseError(source, number, 1, f"malformed CSV row ({exc})") from None
        if not rows and width is None and not any(_is_number(value) for _, value in fields):
            width = len(fields)
            continue
        if width is None:
            width = len(fields)
        if len(fields) != width:
            column = fields[width][0] if len(fields) > width else len(text) + 1
            raise InputParseError(source, number, column, f"expected {width} fields, found {len(fields)}")
        rows.append((number, fields))
    return rows


def parse_counts(lines: Iterable[str], source: str = '<counts>') -> list[CountVector]:
    """Parse counts rows.

    Raises:
        InputParseError: On a non-integer or negative field, or a ragged row.
    """
    vectors = []
    for number, fields in _rows(lines, source):
        values = []
        for column, value in fields:
            try:
                count = int(value)
            except ValueError:
                raise InputParseError(source, number, column, f"expected an integer, found {value!r}") from None
            if count < 0:
                raise InputParseError(source, number, column, f"counts must be nonnegative, found {count}")
            values.append(count)
        vectors.append(CountVector(np.array(values, dtype=np.int64)))
    return vectors


def parse_parent_matrix(lines: Iterable[str], source: str = '<alpha>') -> NDArray[np.float64]:
    """Parse a J x K matrix of positive decimals.

    Raises:
        InputParseError: On a non-numeric or non-positive field, a ragged row, or no rows at all.
    """
    matrix = []
    for number, fields in _rows(lines, source):
        row = []
        for column, value in fields:
            try:
                entry = float(value)
            except ValueError:
                raise InputParseError(source, number, column, f"expected a number, found {value!r}") from None
            if not (math.isfinite(entry) and entry > 0.0):
                raise InputParseError(source, number, column, f"parameters must be finite and > 0, found {value}")
            row.append(entry)
        matrix.append(row)
    if not matrix:
        raise InputParseError(source, 1, 1, "no parameter rows")
    return np.array(matrix, dtype=float)


def _read_lines(path: str | Path) -> list[str]:
    try:
        return Path(path).read_text(encoding='utf-8').splitlines()
    except UnicodeDecodeError as exc:
        raise InputParseError(str(path), 1, 1, "file is not valid UTF-8") from exc
    except OSError as exc:
        raise InputParseError(str(path), 1, 1, f"cannot read file ({exc.strerror})") from exc


def read_counts_csv(path: str | Path, memberships: Sequence[Sequence[int] | None] | None = None) -> list[GroupData]:
    """Read a counts file into groups ``g0, g1, ...``, attaching memberships when given."""
    vectors = parse_counts(_read_lines(path), str(path))
    if memberships is not None and len(memberships) != len(vectors):
        raise DimensionMismatch(f"{len(memberships)} memberships for {len(vectors)} groups in {path}")
    logger.info("Read %d groups from %s", len(vectors), path)
    return [
        GroupData(group_id=f'g{d}', counts=counts,
                  parents=None if memberships is None or memberships[d] is None else tuple(memberships[d]))
        for d, counts in enumerate(vectors)
    ]


def read_parent_matrix(path: str | Path) -> NDArray[np.float64]:
    return parse_parent_matrix(_read_lines(path), str(path))


def write_counts_csv(path: str | Path, groups: Sequence[GroupData]) -> None:
    n_categories = groups[0].counts.dim if groups else 0
    lines = [','.join(f'category_{k + 1}' for k in range(n_categories))]
    lines.extend(','.join(str(int(c)) for c in group.counts.counts) for group in groups)
    Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')


def dumps(payload: dict[str, Any]) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + '\n'


def write_json(path: str | Path, payload: dict[str, Any]) -> None:
    Path(path).write_text(dumps(payload), encoding='utf-8')


def _means(parents) -> list[list[float]]:
    return [parent.mean.theta.tolist() for parent in parents]


def build_fit_report(config: RunConfig, state: ModelState, summary: FitSummary) -> dict[str, Any]:
    """The ``fit`` report: configuration, parent estimates, trace and auxiliary totals."""
    return {
        'config': config.to_dict(),
        'seed': config.seed,
        'version': __version__,
        'parents': {
            'means': summary.means.tolist(),
            'precisions': summary.precisions.tolist(),
            'averaged_sweeps': summary.averaged_sweeps,
            'final': {
                'means': _means(state.parents),
                'precisions': [parent.precision for parent in state.parents],
            },
        },
        'log_joint_trace': list(state.log_joint_trace),
        'aux_totals': {
            'table_totals': state.table_totals.tolist(),
            'groups': [
                {
                    'group_id': group.group_id,
                    'parents': state.members(d).tolist(),
                    'parent_counts': state.parent_counts[d, state.members(d)].tolist(),
                    'parent_tables': state.parent_tables[d, state.members(d)].tolist(),
                }
                for d, group in enumerate(state.groups)
            ],
        },
    }


def build_truth_report(config: RunConfig, parents, truth: SyntheticTruth) -> dict[str, Any]:
    """The ground truth written by ``simulate``."""
    return {
        'config': config.to_dict(),
        'seed': config.seed,
        'version': __version__,
        'parents': {
            'means': _means(parents),
            'precisions': [parent.precision for parent in parents],
        },
        'alpha': truth.alpha.tolist(),
        'thetas': truth.thetas.tolist(),
    }


def build_expect_report(md: MDPrior, counts: CountVector, config: dict[str, Any] | None = None) -> dict[str, Any]:
    """Closed-form expectations of parent counts, parent tables and tables per category.

    ``config`` records the inputs as given on the command line. The report is
    deterministic, so its seed is always null.
    """
    return {
        'config': dict(config or {}),
        'seed': None,
        'version': __version__,
        'alpha': md.parents.tolist(),
        'counts': counts.counts.tolist(),
        'expected_parent_counts': expected_parent_counts(md, counts).tolist(),
        'expected_parent_tables': expected_parent_tables(md, counts).tolist(),
        'expected_tables': [
            expected_tables(float(alpha), int(n)) for alpha, n in zip(md.column_sums, counts.counts)
        ],
    }
