"""Pytest wiring: configure Django the way ``manage.py test`` does."""
import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent / 'md_aux'))
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'md_aux.settings')

import django  # noqa: E402

django.setup()


@pytest.fixture(scope='session', autouse=True)
def _django_test_environment():
    """Create the test database and environment for the whole session."""
    from django.test.utils import (
        setup_databases, setup_test_environment,
        teardown_databases, teardown_test_environment,
    )
    setup_test_environment()
    old_config = setup_databases(verbosity=0, interactive=False)
    yield
    teardown_databases(old_config, verbosity=0)
    teardown_test_environment()
