import logging

from django.core.management.base import BaseCommand

from priors.dirichlet_core import make_rng

from ...config import InvalidConfig, load_run_config
from ...dataio import build_truth_report, write_counts_csv, write_json
from ...hierarchy import synthesize
from ..base import exit_codes

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Draw synthetic group counts from the generative model and write them with the ground truth."

    def add_arguments(self, parser):
        parser.add_argument('--config', help="JSON run configuration")
        parser.add_argument('--out', help="Counts CSV to write")
        parser.add_argument('--truth', help="Ground-truth JSON to write")
        parser.add_argument('--seed', type=int)

    def handle(self, *args, **options):
        with exit_codes('simulate'):
            config = load_run_config(
                options.get('config'), out=options.get('out'), truth=options.get('truth'), seed=options.get('seed'),
            )
            missing = [name for name, value in (('seed', config.seed), ('n_groups', config.n_groups),
                                                ('out', config.out), ('truth', config.truth)) if value in (None, '')]
            if missing:
                raise InvalidConfig(f"simulate needs: {', '.join(missing)}")

            rng = make_rng(config.seed)
            parents = config.true_parents(rng)
            groups, truth = synthesize(parents, config.n_groups, config.n_per_group, rng, config.memberships)
            write_counts_csv(config.out, groups)
            write_json(config.truth, build_truth_report(config, parents, truth))
            logger.info("simulate: %d groups written to %s, truth to %s", len(groups), config.out, config.truth)
