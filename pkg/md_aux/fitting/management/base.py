"""Exit-code contract shared by the ``fit``, ``expect``, ``simulate`` and ``verify`` commands."""
from __future__ import annotations

import logging
from collections.abc import Iterator
from contextlib import contextmanager

from django.core.management import CommandError

from priors.exceptions import DimensionMismatch, MDAuxError

from ..config import InvalidConfig
from ..dataio import InputParseError

logger = logging.getLogger(__name__)

EXIT_CHECK_FAILED = 1
EXIT_PARSE_ERROR = 2
EXIT_DIMENSION_MISMATCH = 3
EXIT_INVALID_CONFIG = 4


@contextmanager
def exit_codes(command: str) -> Iterator[None]:
    """Translate library errors raised inside the block into ``CommandError`` exit codes.

    Any other library error means the configuration asked for something the
    model cannot do, so it maps to the invalid-config code.
    """
    try:
        yield
    except InputParseError as exc:
        raise _fail(command, exc, EXIT_PARSE_ERROR) from exc
    except DimensionMismatch as exc:
        raise _fail(command, exc, EXIT_DIMENSION_MISMATCH) from exc
    except (InvalidConfig, MDAuxError) as exc:
        raise _fail(command, exc, EXIT_INVALID_CONFIG) from exc


def _fail(command: str, exc: Exception, code: int) -> CommandError:
    logger.warning("%s failed with exit code %d: %s", command, code, exc)
    return CommandError(str(exc), returncode=code)
