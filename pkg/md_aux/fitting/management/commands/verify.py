import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from md_aux import __version__
from priors.conf import get_setting
from priors.oracle import EnumerationBudget, run_verification

from ...config import InvalidConfig
from ...dataio import dumps, write_json
from ..base import EXIT_CHECK_FAILED, exit_codes

logger = logging.getLogger(__name__)

FAULT_PERTURBATION = 1e-3

BUDGET_FLAGS = (
    ('max_total_count', 'ENUMERATION_MAX_TOTAL_COUNT'),
    ('max_parents', 'ENUMERATION_MAX_PARENTS'),
    ('max_categories', 'ENUMERATION_MAX_CATEGORIES'),
)


class Command(BaseCommand):
    help = ("Run the oracle suite: Stirling identities, split normalisation, brute-force marginals "
            "and expectations, urn statistics. Exits with 1 if any check fails.")

    def add_arguments(self, parser):
        parser.add_argument('--max-total-count', type=int, dest='max_total_count')
        parser.add_argument('--max-parents', type=int, dest='max_parents')
        parser.add_argument('--max-categories', type=int, dest='max_categories')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--out', help="Write the report here instead of stdout")
        parser.add_argument('--fault-inject', action='store_true', dest='fault_inject',
                            help="Perturb the parent-table closed form (needs DEBUG)")

    def handle(self, *args, **options):
        with exit_codes('verify'):
            budget = self._budget(options)
            if options.get('fault_inject') and not settings.DEBUG:
                raise InvalidConfig("--fault-inject is only available with MD_AUX_DEBUG enabled")
            perturbation = FAULT_PERTURBATION if options.get('fault_inject') else 0.0
            if options.get('seed') is not None and options['seed'] < 0:
                raise InvalidConfig(f"--seed must be nonnegative, got {options['seed']}")
            report = run_verification(budget=budget, seed=options.get('seed'), table_perturbation=perturbation)

        payload = report.to_dict()
        payload['version'] = __version__
        if options.get('out'):
            write_json(options['out'], payload)
        else:
            self.stdout.write(dumps(payload), ending='')

        if not report.passed:
            failed = ', '.join(check.name for check in report.checks if not check.passed)
            raise CommandError(f"Verification failed: {failed}", returncode=EXIT_CHECK_FAILED)

    @staticmethod
    def _budget(options) -> EnumerationBudget:
        limits = {}
        for option, setting in BUDGET_FLAGS:
            cap = get_setting(setting)
            value = options.get(option)
            if value is None:
                value = cap
            if not 0 <= value <= cap:
                raise InvalidConfig(f"--{option.replace('_', '-')} must lie in 0..{cap}, got {value}")
            limits[option] = value
        return EnumerationBudget(**limits)
