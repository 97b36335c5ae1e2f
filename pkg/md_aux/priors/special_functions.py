"""Log-space special functions: log-gamma, digamma and Stirling numbers.

Every formula of the library is evaluated in log space on top of this module.
Stirling numbers of the first kind are addressed as ``log_stirling(n, m)`` with
``n`` the number of draws (customers) first and ``m`` the number of tables
second. Some texts write the same quantity as ``s(m, n)``; the order used here
is the one of the triangle recurrence ``s(n+1, m) = n*s(n, m) + s(n, m-1)``.
"""
from __future__ import annotations

import logging
import math
import threading
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .conf import get_setting
from .exceptions import CapacityError, DomainError, EmptyInput

logger = logging.getLogger(__name__)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Arguments are shifted upwards until they reach these thresholds, then the
# asymptotic series below take over.
_LOG_GAMMA_THRESHOLD = 7.0
_DIGAMMA_THRESHOLD = 6.0

# B_{2k} / (2k (2k - 1)) for k = 1..7
_LOG_GAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)

# B_{2k} / (2k) for k = 1..7
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def _positive_array(x: ArrayLike, func: str) -> NDArray[np.float64]:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"{func} is defined for finite x > 0, got {x!r}")
    return arr


def _unwrap(result: NDArray[np.float64]) -> float | NDArray[np.float64]:
    return float(result) if result.ndim == 0 else result


def _horner(coefficients: tuple[float, ...], t: NDArray[np.float64]) -> NDArray[np.float64]:
    """Evaluate sum_i coefficients[i] * t**(i+1)."""
    acc = np.zeros_like(t)
    for c in reversed(coefficients):
        acc = (acc + c) * t
    return acc


def log_gamma(x: ArrayLike) -> float | NDArray[np.float64]:
    """Natural logarithm of the gamma function for x > 0.

    Arguments below a threshold are shifted upwards with
    ``lnG(x) = lnG(x + 1) - ln(x)`` and the Stirling series is evaluated at the
    shifted point. Works elementwise on arrays; scalars come back as ``float``.

    Raises:
        DomainError: If any element is non-finite or not strictly positive.

    Example:
        >>> log_gamma(5.0)  # ln(4!)
        3.1780538303479458
    """
    arr = _positive_array(x, 'log_gamma')
    z = arr.copy()
    product = np.ones_like(z)
    small = z < _LOG_GAMMA_THRESHOLD
    while np.any(small):
        product = np.where(small, product * z, product)
        z = np.where(small, z + 1.0, z)
        small = z < _LOG_GAMMA_THRESHOLD
    inv = 1.0 / z
    series = _horner(_LOG_GAMMA_SERIES, inv * inv) * z
    result = (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series - np.log(product)
    # Gamma(1) = Gamma(2) = 1 exactly.
    result = np.where((arr == 1.0) | (arr == 2.0), 0.0, result)
    return _unwrap(result)


def digamma(x: ArrayLike) -> float | NDArray[np.float64]:
    """Digamma function, the derivative of ``log_gamma``, for x > 0.

    Uses ``Psi(x) = Psi(x + 1) - 1/x`` to shift the argument above a threshold,
    then the asymptotic expansion ``ln z - 1/(2z) - sum B_2k / (2k z^2k)``.

    Raises:
        DomainError: If any element is non-finite or not strictly positive.
    """
    arr = _positive_array(x, 'digamma')
    z = arr.copy()
    shift = np.zeros_like(z)
    small = z < _DIGAMMA_THRESHOLD
    while np.any(small):
        shift = np.where(small, shift + 1.0 / z, shift)
        z = np.where(small, z + 1.0, z)
        small = z < _DIGAMMA_THRESHOLD
    inv = 1.0 / z
    result = np.log(z) - 0.5 * inv - _horner(_DIGAMMA_SERIES, inv * inv) - shift
    return _unwrap(result)


def log_rising_factorial(alpha: ArrayLike, n: ArrayLike) -> float | NDArray[np.float64]:
    """ln(Gamma(alpha + n) / Gamma(alpha)), exactly 0 where n == 0."""
    alpha_arr = np.asarray(alpha, dtype=float)
    n_arr = np.asarray(n, dtype=float)
    alpha_arr, n_arr = np.broadcast_arrays(alpha_arr, n_arr)
    diff = np.asarray(log_gamma(alpha_arr + n_arr)) - np.asarray(log_gamma(alpha_arr))
    return _unwrap(np.where(n_arr == 0, 0.0, diff))


def log_multinomial_coefficient(counts: ArrayLike) -> float:
    """ln( n! / prod_i n_i! ) for a vector of nonnegative integer counts."""
    arr = np.asarray(counts, dtype=float).ravel()
    if arr.size == 0:
        return 0.0
    total = float(arr.sum())
    return float(log_gamma(total + 1.0) - np.sum(log_gamma(arr + 1.0)))


def log_sum_exp(values: Iterable[float] | ArrayLike) -> float:
    """Numerically stable ln(sum(exp(v))).

    An all ``-inf`` input gives exactly ``-inf``.

    Raises:
        EmptyInput: If ``values`` is empty.
    """
    if not isinstance(values, np.ndarray):
        values = list(values)
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise EmptyInput("log_sum_exp needs at least one value")
    if np.all(arr == -np.inf):
        return -math.inf
    return float(logsumexp(arr))


def _row_offset(n: int) -> int:
    return n * (n + 1) // 2


@dataclass(frozen=True)
class StirlingTable:
    """Triangle of log unsigned Stirling numbers of the first kind.

    ``entries`` stores row ``n`` (``0 <= m <= n``) contiguously starting at
    ``n (n + 1) / 2``. The array is read-only, so a table can be shared between
    threads without coordination. ``log 0`` is stored as ``-inf``.

    Attributes:
        n_max (int): Largest row held by the table.
        entries (numpy.ndarray): Flat triangular storage of ``ln s(n, m)``.
    """
    n_max: int
    entries: NDArray[np.float64] = field(repr=False)

    def _check_row(self, n: int) -> None:
        if n < 0:
            raise DomainError(f"Stirling row must be nonnegative, got {n}")
        if n > self.n_max:
            raise CapacityError(f"Stirling table holds rows up to {self.n_max}, requested {n}")

    def log_stirling(self, n: int, m: int) -> float:
        """ln s(n, m); ``-inf`` when ``m > n`` or ``m < 0`` (the number is zero)."""
        self._check_row(n)
        if m < 0 or m > n:
            return -math.inf
        return float(self.entries[_row_offset(n) + m])

    def row(self, n: int) -> NDArray[np.float64]:
        """Read-only view of ``ln s(n, m)`` for ``m = 0..n``."""
        self._check_row(n)
        start = _row_offset(n)
        return self.entries[start:start + n + 1]


def build_stirling_table(n_max: int) -> StirlingTable:
    """Build the log Stirling triangle up to row ``n_max``.

    Each row comes from the previous one through the recurrence
    ``s(n+1, m) = n s(n, m) + s(n, m-1)`` evaluated with ``logaddexp``.

    Steps performed:
        - Refuse sizes above the ``STIRLING_CAP`` setting.
        - Fill the rows one by one in log space, ``s(0, 0) = 1``.
        - Freeze the flat entry array.

    Notes:
        - Entries that are exactly zero (``m = 0 < n``) are stored as ``-inf``.
        - Rows are packed into one flat array; use ``row`` or ``log_stirling``.

    Raises:
        DomainError: If ``n_max`` is negative.
        CapacityError: If ``n_max`` exceeds the ``STIRLING_CAP`` setting.
    """
    if n_max < 0:
        raise DomainError(f"n_max must be nonnegative, got {n_max}")
    cap = get_setting('STIRLING_CAP')
    if n_max > cap:
        logger.warning("Refusing Stirling table of size %d (cap %d)", n_max, cap)
        raise CapacityError(f"n_max={n_max} exceeds the Stirling table cap {cap}")

    entries = np.full(_row_offset(n_max + 1), -np.inf)
    entries[0] = 0.0
    previous = entries[0:1].copy()
    for n in range(n_max):
        current = np.full(n + 2, -np.inf)
        if n > 0:
            current[:n + 1] = math.log(n) + previous
        current[1:] = np.logaddexp(current[1:], previous)
        start = _row_offset(n + 1)
        entries[start:start + n + 2] = current
        previous = current
    entries.flags.writeable = False
    logger.debug("Built Stirling table up to n=%d", n_max)
    return StirlingTable(n_max=n_max, entries=entries)


_shared_lock = threading.Lock()
_shared_table: StirlingTable | None = None


def shared_stirling_table(n_required: int) -> StirlingTable:
    """Return a process-wide table that covers row ``n_required``.

    The shared table is rebuilt with at least double the size whenever a larger
    row is requested, never beyond the configured cap.

    Raises:
        CapacityError: If ``n_required`` exceeds the ``STIRLING_CAP`` setting.

    Notes:
        Safe to call from several threads; readers never see a partially built table.
    """
    global _shared_table
    table = _shared_table
    if table is not None and table.n_max >= n_required:
        return table
    with _shared_lock:
        table = _shared_table
        if table is not None and table.n_max >= n_required:
            return table
        cap = get_setting('STIRLING_CAP')
        if n_required > cap:
            raise CapacityError(f"Row {n_required} exceeds the Stirling table cap {cap}")
        current = table.n_max if table is not None else 0
        _shared_table = build_stirling_table(min(cap, max(n_required, 64, 2 * current)))
        return _shared_table


def log_stirling(n: int, m: int) -> float:
    """ln s(n, m) from the shared table."""
    return shared_stirling_table(n).log_stirling(n, m)
