import json
import math

import numpy as np
from django.test import SimpleTestCase, override_settings

from priors.dirichlet_core import CountVector, expected_tables, make_rng
from priors.exceptions import BudgetExceeded, DimensionMismatch, DomainError
from priors.multi_dirichlet import MDPrior, expected_parent_counts, expected_parent_tables, md_log_marginal
from priors.oracle import (
    URN_Z_TOLERANCE,
    EnumerationBudget,
    brute_force_expectations,
    brute_force_marginal,
    compositions,
    enumerate_parent_count_compositions,
    random_cases,
    run_verification,
    urn_simulate,
)


# ======== test_enumeration =======
class EnumerationTests(SimpleTestCase):
    """Test cases for the exhaustive enumeration oracle.

    Steps performed:
        - Count compositions and splits against stars-and-bars.
        - Check that every split is produced exactly once.
        - Compare brute-force marginals and expectations with the closed forms.
        - Verify that over-budget requests are refused before any work.
    """
    def test_compositions(self):
        self.assertEqual(list(compositions(2, 2)), [(2, 0), (1, 1), (0, 2)])
        self.assertEqual(len(list(compositions(5, 3))), math.comb(7, 2))
        self.assertEqual(list(compositions(0, 3)), [(0, 0, 0)])

    def test_split_examples(self):
        splits = [s.counts.tolist() for s in enumerate_parent_count_compositions(CountVector([1]), 2)]
        self.assertCountEqual(splits, [[[1], [0]], [[0], [1]]])
        self.assertEqual(len(list(enumerate_parent_count_compositions(CountVector([2]), 2))), 3)
        self.assertEqual(len(list(enumerate_parent_count_compositions(CountVector([2, 1]), 2))), 6)

    def test_splits_are_distinct_and_valid(self):
        data = CountVector([3, 0, 2])
        splits = list(enumerate_parent_count_compositions(data, 3))
        self.assertEqual(len(splits), EnumerationBudget.split_count(data, 3))
        self.assertEqual(len({s.counts.tobytes() for s in splits}), len(splits))
        for split in splits:
            split.check_against(data)

    def test_budget_refusal_is_eager(self):
        budget = EnumerationBudget(max_total_count=3, max_parents=3, max_categories=3, ceiling=1000)
        with self.assertRaises(BudgetExceeded):
            enumerate_parent_count_compositions(CountVector([2, 2]), 2, budget)
        with self.assertRaises(BudgetExceeded):
            brute_force_marginal(MDPrior(np.ones((4, 1))), CountVector([1]), budget)
        tight = EnumerationBudget(max_total_count=8, max_parents=3, max_categories=3, ceiling=5)
        with self.assertRaises(BudgetExceeded):
            enumerate_parent_count_compositions(CountVector([2, 1]), 2, tight)

    @override_settings(MD_AUX={'ENUMERATION_MAX_TOTAL_COUNT': 2})
    def test_budget_defaults_from_settings(self):
        self.assertEqual(EnumerationBudget().max_total_count, 2)
        with self.assertRaises(BudgetExceeded):
            enumerate_parent_count_compositions(CountVector([3]), 1)

    def test_negative_budget(self):
        with self.assertRaises(DomainError):
            EnumerationBudget(max_total_count=-1)

    def test_brute_force_marginal(self):
        rng = make_rng(21)
        for counts in ([2, 1], [3, 0, 1], [4]):
            md = MDPrior(rng.uniform(0.2, 3.0, size=(2, len(counts))))
            data = CountVector(counts)
            self.assertLessEqual(abs(brute_force_marginal(md, data) - md_log_marginal(md, data)), 1e-9)

    def test_brute_force_expectations(self):
        md, data = MDPrior([[1.0], [3.0]]), CountVector([8])
        exact = brute_force_expectations(md, data)
        np.testing.assert_allclose(exact.parent_counts, [[2.0], [6.0]], atol=1e-9)
        np.testing.assert_allclose(exact.parent_tables, expected_parent_tables(md, data), atol=1e-9)
        np.testing.assert_allclose(exact.tables, [expected_tables(4.0, 8)], atol=1e-9)

        md, data = MDPrior([[0.7, 1.9], [1.2, 0.3], [0.5, 0.8]]), CountVector([2, 3])
        exact = brute_force_expectations(md, data)
        np.testing.assert_allclose(exact.parent_counts, expected_parent_counts(md, data), atol=1e-9)
        np.testing.assert_allclose(exact.parent_tables, expected_parent_tables(md, data), atol=1e-9)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            brute_force_marginal(MDPrior([[1.0, 1.0]]), CountVector([1]))

    def test_random_cases_respect_ceiling(self):
        """Target: random cases stop at a zero ceiling and stay under a tight one."""
        zero = EnumerationBudget(max_total_count=8, max_parents=3, max_categories=3, ceiling=0)
        self.assertEqual(random_cases(zero, make_rng(26), 5), [])
        tight = EnumerationBudget(max_total_count=8, max_parents=3, max_categories=3, ceiling=1)
        cases = random_cases(tight, make_rng(27), 5)
        self.assertEqual(len(cases), 5)
        for md, data in cases:
            self.assertLessEqual(EnumerationBudget.split_count(data, md.n_parents), 1)


# ======== test_urn =======
class UrnSimulationTests(SimpleTestCase):
    """Test cases for the vectorised Polya urn.

    Notes:
        Means are compared with the closed forms cell by cell, within three
        standard errors.
    """
    def assert_agrees(self, mean, se, closed):
        mean, se, closed = np.ravel(mean), np.ravel(se), np.ravel(closed)
        for m, s, c in zip(mean, se, closed):
            if s == 0.0:
                self.assertAlmostEqual(m, c, places=12)
            else:
                self.assertLessEqual(abs(m - c) / s, URN_Z_TOLERANCE)

    def test_conditioned_urn_matches_closed_forms(self):
        md, data = MDPrior([[0.7, 0.7], [0.7, 0.7]]), CountVector([5, 3])
        stats = urn_simulate(md, data.total, 100_000, make_rng(22), condition=data)
        self.assertEqual(stats.reps, 100_000)
        self.assert_agrees(stats.parent_counts_mean, stats.parent_counts_se, expected_parent_counts(md, data))
        self.assert_agrees(stats.parent_tables_mean, stats.parent_tables_se, expected_parent_tables(md, data))
        self.assert_agrees(stats.tables_mean, stats.tables_se, [expected_tables(1.4, 5), expected_tables(1.4, 3)])

    def test_single_column_configuration(self):
        md, data = MDPrior([[1.0], [3.0]]), CountVector([8])
        stats = urn_simulate(md, None, 100_000, make_rng(23), condition=data)
        self.assert_agrees(stats.parent_counts_mean, stats.parent_counts_se, [[2.0], [6.0]])
        self.assert_agrees(stats.parent_tables_mean, stats.parent_tables_se, expected_parent_tables(md, data))

    def test_unconditioned_urn_category_means(self):
        """Target: without conditioning, category k receives A_k / A of the draws on average."""
        md = MDPrior([[0.5, 1.5], [1.0, 1.0]])
        stats = urn_simulate(md, 6, 50_000, make_rng(24))
        category_counts = stats.parent_counts_mean.sum(axis=0)
        np.testing.assert_allclose(category_counts.sum(), 6.0)
        expected = 6.0 * md.column_sums / md.column_sums.sum()
        # Each category mean is a sum of parent means, so its SE is at most the sum of theirs.
        se = stats.parent_counts_se.sum(axis=0)
        self.assertTrue(np.all(np.abs(category_counts - expected) <= URN_Z_TOLERANCE * se))

    def test_reps_floor(self):
        with self.assertRaises(DomainError):
            urn_simulate(MDPrior([[1.0]]), 2, 99, make_rng(25))


# ======== test_verification =======
class VerificationSuiteTests(SimpleTestCase):
    """Test cases for ``run_verification``.

    Steps performed:
        - Run a reduced suite and check that every check passes.
        - Run the suite with a zero budget and check the vacuous pass.
        - Run the suite with a perturbed closed form and check that it fails.
        - Verify that the report serialises as strict JSON.
    """
    def test_report_is_json_ready(self):
        """Target: the report holds builtin Python types only, so it serialises as strict JSON."""
        payload = run_verification(seed=3, n_cases=5, urn_reps=1000).to_dict()
        self.assertIs(type(payload['passed']), bool)
        for check in payload['checks']:
            self.assertIs(type(check['passed']), bool)
            self.assertIs(type(check['max_error']), float)
            self.assertIs(type(check['tolerance']), float)
            self.assertIs(type(check['cases']), int)
        self.assertEqual(json.loads(json.dumps(payload, allow_nan=False)), payload)

    def test_urn_check_uses_three_standard_errors(self):
        urn = run_verification(seed=3, n_cases=5, urn_reps=1000).checks[-1]
        self.assertEqual(urn.name, 'urn_statistics')
        self.assertEqual(urn.tolerance, 3.0)

    def test_reduced_suite_passes(self):
        report = run_verification(seed=3, n_cases=10, urn_reps=20_000)
        self.assertTrue(report.passed, [check.to_dict() for check in report.checks if not check.passed])
        names = [check.name for check in report.checks]
        self.assertEqual(names, [
            'stirling_identity',
            'stirling_row_sums',
            'disaggregation_normalization',
            'marginalization_chain',
            'expectation_closed_forms',
            'urn_statistics',
        ])
        payload = report.to_dict()
        self.assertEqual(set(payload), {'config', 'checks', 'passed'})
        self.assertEqual(payload['config']['seed'], 3)

    def test_zero_budget_is_vacuous(self):
        budget = EnumerationBudget(max_total_count=0, max_parents=3, max_categories=3)
        report = run_verification(budget=budget, seed=1, n_cases=5, urn_reps=1000)
        self.assertTrue(report.passed)
        by_name = {check.name: check for check in report.checks}
        for name in ('marginalization_chain', 'expectation_closed_forms', 'urn_statistics'):
            self.assertEqual(by_name[name].cases, 0)
            self.assertEqual(by_name[name].to_dict()['note'], 'no cases within budget')

    def test_perturbed_closed_form_fails(self):
        report = run_verification(seed=3, n_cases=5, urn_reps=1000, table_perturbation=1e-3)
        self.assertFalse(report.passed)
        failed = {check.name for check in report.checks if not check.passed}
        self.assertIn('expectation_closed_forms', failed)

    def test_identical_runs_agree(self):
        first = run_verification(seed=9, n_cases=5, urn_reps=1000).to_dict()
        second = run_verification(seed=9, n_cases=5, urn_reps=1000).to_dict()
        self.assertEqual(first, second)
