import logging

from django.core.management.base import BaseCommand

from priors.exceptions import DimensionMismatch
from priors.multi_dirichlet import MDPrior

from ...dataio import InputParseError, build_expect_report, dumps, parse_counts, read_parent_matrix, write_json
from ..base import exit_codes

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = ("Print the closed-form expectations of parent counts, parent tables and tables "
            "for one count vector under an MD prior.")

    def add_arguments(self, parser):
        parser.add_argument('--alpha', required=True, help="CSV with J rows of K positive parameters")
        parser.add_argument('--counts', required=True, help="Comma-separated K counts, e.g. 5,3")
        parser.add_argument('--out', help="Write the report here instead of stdout")

    def handle(self, *args, **options):
        with exit_codes('expect'):
            parents = read_parent_matrix(options['alpha'])
            rows = parse_counts([options['counts']], source='--counts')
            if len(rows) != 1:
                raise InputParseError('--counts', 1, 1, "expected exactly one count vector")
            counts = rows[0]
            if parents.shape[1] != counts.dim:
                raise DimensionMismatch(f"alpha has {parents.shape[1]} columns, counts have {counts.dim} entries")
            config = {'alpha': options['alpha'], 'counts': options['counts']}
            report = build_expect_report(MDPrior(parents), counts, config)
            if options.get('out'):
                write_json(options['out'], report)
            else:
                self.stdout.write(dumps(report), ending='')
