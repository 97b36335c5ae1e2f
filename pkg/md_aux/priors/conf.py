"""Library settings with defaults.

Projects override any of these through the ``MD_AUX`` dict in their Django
settings module, e.g.::

    MD_AUX = {'STIRLING_CAP': 20_000}

The library stays importable without a configured settings module; in that
case the defaults below apply.
"""
from __future__ import annotations

from typing import Any

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

DEFAULTS: dict[str, Any] = {
    'STIRLING_CAP': 10_000,
    'ENUMERATION_MAX_TOTAL_COUNT': 8,
    'ENUMERATION_MAX_PARENTS': 3,
    'ENUMERATION_MAX_CATEGORIES': 3,
    'ENUMERATION_CEILING': 10_000_000,
    'VERIFY_SEED': 20240501,
    'VERIFY_CASES': 50,
    'VERIFY_URN_REPS': 100_000,
}


def get_setting(name: str) -> Any:
    """Return ``MD_AUX[name]`` from the project settings, or the built-in default.

    Raises:
        KeyError: If ``name`` is not a known library setting.
    """
    if name not in DEFAULTS:
        raise KeyError(f"Unknown md_aux setting: {name}")
    try:
        overrides = getattr(settings, 'MD_AUX', {})
    except ImproperlyConfigured:
        overrides = {}
    return overrides.get(name, DEFAULTS[name])
