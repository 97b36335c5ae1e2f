import logging

from django.core.management.base import BaseCommand

from priors.dirichlet_core import make_rng
from priors.exceptions import DimensionMismatch

from ...config import InvalidConfig, load_run_config
from ...dataio import build_fit_report, read_counts_csv, write_json
from ...hierarchy import ModelState, Scheme, run_sweeps
from ...models import FitRun
from ..base import exit_codes

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Fit the hierarchical Multi-Dirichlet model to a counts file and write a JSON report."

    def add_arguments(self, parser):
        parser.add_argument('--config', help="JSON run configuration")
        parser.add_argument('--data', help="Counts CSV, one row per group")
        parser.add_argument('--out', help="Report path")
        parser.add_argument('--seed', type=int)
        parser.add_argument('--sweeps', type=int)
        parser.add_argument('--burn-in', type=int, dest='burn_in')
        parser.add_argument('--scheme', choices=[scheme.value for scheme in Scheme])
        parser.add_argument('--record', action='store_true', help="Archive the report as a FitRun")

    def handle(self, *args, **options):
        with exit_codes('fit'):
            config = load_run_config(
                options.get('config'),
                data=options.get('data'),
                out=options.get('out'),
                seed=options.get('seed'),
                sweeps=options.get('sweeps'),
                burn_in=options.get('burn_in'),
                scheme=options.get('scheme'),
            )
            if not config.data or not config.out:
                raise InvalidConfig("fit needs a counts file and an output path (--data, --out)")
            logger.info("fit: %s scheme, %d sweeps, data %s", config.scheme.value, config.sweeps, config.data)

            groups = read_counts_csv(config.data, config.memberships)
            if config.n_groups is not None and config.n_groups != len(groups):
                raise DimensionMismatch(f"Configuration expects {config.n_groups} groups, {config.data} has {len(groups)}")
            state = ModelState(config.prior_parents(), groups, recompute_interval=config.recompute_interval)
            rng = make_rng(config.seed) if config.scheme is Scheme.GIBBS else None
            summary = run_sweeps(state, config.sweeps, config.scheme, rng, burn_in=config.burn_in)

            report = build_fit_report(config, state, summary)
            write_json(config.out, report)
            logger.info("fit: report written to %s", config.out)
            if options.get('record'):
                run = FitRun.objects.record(report)
                logger.info("fit: archived as FitRun %s", run.pk)
