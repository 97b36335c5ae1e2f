#!/usr/bin/env python
"""Command-line entry point: ``python manage.py fit|expect|simulate|verify|test``."""
import os
import sys


def main():
    """Configure the md_aux settings module and dispatch the management command."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'md_aux.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Django is not importable. Install the packages from requirements.txt "
            "into the active virtual environment first."
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
