"""Test quantile regression."""

import itertools
import os
import unittest
import unittest.mock

import numpy as np
import pandas as pd
from parameterized import parameterized

import ev1test

logger = ev1test.config.get_logger(__name__)
test_data_path = os.path.join(os.path.dirname(os.path.normpath(__file__)), 'data')


def get_test_dataset() -> ev1test.data_interface.Dataset:

    return ev1test.data_interface.load_dataset(
        os.path.join(test_data_path, 'survey.csv'),
        os.path.join(test_data_path, 'schema.json')
    )


def get_brute_force_objective(
        regressors: np.ndarray,
        outcomes: np.ndarray,
        tau: float
) -> float:
    """Obtain the minimal check loss by enumerating the exact fits through all subsets of `p` observations."""

    objectives = []
    for rows in itertools.combinations(range(len(outcomes)), regressors.shape[1]):
        rows = list(rows)
        if abs(np.linalg.det(regressors[rows, :])) < 1e-12:
            continue
        beta = np.linalg.solve(regressors[rows, :], outcomes[rows])
        objectives.append(ev1test.quantile_regression.get_check_loss(outcomes - regressors @ beta, tau))

    return min(objectives)


class TestQuantileRegression(unittest.TestCase):

    def test_fit_qr_median(self):
        # Define expected result.
        outcomes = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0])
        expected = np.median(outcomes)

        # Get actual result.
        ev1test.utils.log_time("test_fit_qr_median", log_level='info', logger_object=logger)
        actual = ev1test.quantile_regression.fit_qr(np.ones((len(outcomes), 1)), outcomes, 0.5)
        ev1test.utils.log_time("test_fit_qr_median", log_level='info', logger_object=logger)

        # Compare expected and actual.
        self.assertAlmostEqual(actual.beta[0], expected, places=9)
        self.assertTrue(actual.converged)

    @parameterized.expand([
        ('tau_0.25', 0.25),
        ('tau_0.5', 0.5),
        ('tau_0.9', 0.9),
    ])
    def test_fit_qr_brute_force(self, name, tau):
        # Obtain test data.
        random_generator = np.random.default_rng(7)
        regressors = np.column_stack([np.ones(50), random_generator.normal(size=50)])
        outcomes = 1.0 + 2.0 * regressors[:, 1] + random_generator.standard_t(3, size=50)

        # Define expected result.
        expected = get_brute_force_objective(regressors, outcomes, tau)

        # Get actual result.
        ev1test.utils.log_time(f"test_fit_qr_brute_force_{name}", log_level='info', logger_object=logger)
        actual = ev1test.quantile_regression.fit_qr(regressors, outcomes, tau)
        ev1test.utils.log_time(f"test_fit_qr_brute_force_{name}", log_level='info', logger_object=logger)

        # Compare expected and actual.
        self.assertAlmostEqual(actual.objective, expected, delta=1e-6)

    def test_fit_qr_cvxpy(self):
        # Obtain test data.
        random_generator = np.random.default_rng(11)
        regressors = np.column_stack([np.ones(40), random_generator.uniform(-1.0, 1.0, size=(40, 2))])
        outcomes = regressors @ np.array([0.5, 1.0, -1.0]) + random_generator.logistic(size=40)

        # Get actual result.
        expected = ev1test.quantile_regression.fit_qr(regressors, outcomes, 0.3)
        with unittest.mock.patch.dict(
                ev1test.config.config['optimization'], dict(solver_interface='cvxpy', solver_name=None)
        ):
            actual = ev1test.quantile_regression.fit_qr(regressors, outcomes, 0.3)

        # Compare expected and actual.
        self.assertAlmostEqual(actual.objective, expected.objective, delta=1e-4 * max(1.0, expected.objective))

    def test_fit_qr_rank_deficient(self):
        regressors = np.column_stack([np.ones(10), np.arange(10.0), 2.0 * np.arange(10.0)])
        with self.assertRaisesRegex(ValueError, "collinear column.*hours"):
            ev1test.quantile_regression.fit_qr(
                regressors, np.arange(10.0), 0.5, ['intercept', 'numeraire', 'hours']
            )

    def test_fit_qr_degenerate_outcomes(self):
        # Get actual result.
        regressors = np.column_stack([np.ones(6), np.arange(6.0)])
        actual = ev1test.quantile_regression.fit_qr(regressors, np.full(6, 0.3), 0.75)

        # Compare expected and actual.
        np.testing.assert_array_equal(actual.beta, [0.3, 0.0])
        self.assertEqual(actual.objective, 0.0)

    def test_fit_qr_degenerate_outcomes_without_intercept(self):
        # Obtain test data.
        regressors = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]])

        # Get actual result.
        actual = ev1test.quantile_regression.fit_qr(regressors, np.ones(3), 0.5)

        # Compare expected and actual.
        # - Optimum (0.5, 1.0) has check loss 0.25; the intercept fit (1.0, 0.0) would have 1.0.
        np.testing.assert_allclose(actual.beta, [0.5, 1.0], atol=1e-6)
        self.assertAlmostEqual(actual.objective, 0.25, delta=1e-6)
        self.assertTrue(actual.converged)

    def test_fit_qr_grid(self):
        # Obtain test data.
        dataset = get_test_dataset()
        design = ev1test.data_interface.build_design(dataset)
        outcomes = ev1test.quantile_regression.transform_outcome(dataset.get_probabilities())

        # Get actual result.
        ev1test.utils.log_time("test_fit_qr_grid", log_level='info', logger_object=logger)
        grid = ev1test.quantile_regression.fit_qr_grid(design, outcomes, [0.1, 0.5, 0.9])
        ev1test.utils.log_time("test_fit_qr_grid", log_level='info', logger_object=logger)

        # Compare expected and actual.
        self.assertEqual(grid.coefs.shape, (3, 3))
        self.assertEqual(grid.columns, ['intercept', 'numeraire', 'hours'])
        self.assertTrue(np.all(grid.converged))
        with self.assertRaises(ValueError):
            ev1test.quantile_regression.fit_qr_grid(design, outcomes, [0.5, 0.1])

    def test_interpolate_coefs(self):
        # Get actual result.
        grid = ev1test.quantile_regression.CoefficientGrid(
            [0.1, 0.5, 0.9], [[0.0, 1.0], [1.0, 1.0], [3.0, 2.0]], ['intercept', 'numeraire']
        )

        # Compare expected and actual.
        np.testing.assert_allclose(ev1test.quantile_regression.interpolate_coefs(grid, 0.3), [0.5, 1.0])
        np.testing.assert_allclose(ev1test.quantile_regression.interpolate_coefs(grid, 0.7), [2.0, 1.5])
        np.testing.assert_allclose(ev1test.quantile_regression.interpolate_coefs(grid, 0.01), [0.0, 1.0])
        np.testing.assert_allclose(ev1test.quantile_regression.interpolate_coefs(grid, 0.99), [3.0, 2.0])
        self.assertEqual(ev1test.quantile_regression.interpolate_coefs(grid, np.array([0.1, 0.2])).shape, (2, 2))
        self.assertAlmostEqual(
            ev1test.quantile_regression.predict_quantile(grid, 0.5, ev1test.data_interface.DesignRow([1.0, -1.0])),
            0.5
        )

    def test_transform_outcome(self):
        # Get actual result.
        actual = ev1test.quantile_regression.transform_outcome(np.array([0.0, 0.5, 0.75, 1.0]))

        # Compare expected and actual.
        np.testing.assert_allclose(actual, [np.log(0.01 / 0.99), 0.0, np.log(3.0), np.log(0.99 / 0.01)])
        np.testing.assert_array_equal(
            ev1test.quantile_regression.transform_outcome(np.array([0.0, 1.0]), 'direct'), [0.0, 1.0]
        )

    def test_fit_individual_lad(self):
        # Obtain test data.
        dataset = get_test_dataset()
        observations = dataset.observations.loc[dataset.observations.loc[:, 'scenario_id'].isin(['1', '2'])]
        observations = observations.loc[observations.loc[:, 'respondent_id'] == '1']
        observations = pd.concat([dataset.observations, observations.assign(respondent_id='short')], ignore_index=True)
        dataset = ev1test.data_interface.Dataset(observations, dataset.schema)

        # Get actual result.
        ev1test.utils.log_time("test_fit_individual_lad", log_level='info', logger_object=logger)
        lad_table = ev1test.quantile_regression.fit_individual_lad(dataset)
        wtp = ev1test.quantile_regression.get_individual_wtp(lad_table, 'hours')
        ev1test.utils.log_time("test_fit_individual_lad", log_level='info', logger_object=logger)

        # Compare expected and actual.
        self.assertEqual(lad_table.at['short', 'status'], 'insufficient scenarios')
        self.assertEqual(int((lad_table.loc[:, 'status'] == 'estimated').sum()), 8)
        self.assertTrue(np.isnan(wtp.at['short']))
        self.assertEqual(wtp.index.to_list(), lad_table.index.to_list())

    def test_fit_pooled_lad(self):
        # Obtain test data.
        dataset = get_test_dataset()
        design = ev1test.data_interface.build_design(dataset)
        outcomes = ev1test.quantile_regression.transform_outcome(dataset.get_probabilities())

        # Get actual result.
        fit = ev1test.quantile_regression.fit_pooled_lad(dataset)

        # Compare expected and actual.
        self.assertTrue(fit.converged)
        self.assertEqual(fit.tau, 0.5)
        self.assertEqual(len(fit.beta), 3)
        random_generator = np.random.default_rng(5)
        for _ in range(50):
            perturbed_beta = fit.beta + random_generator.normal(0.0, 0.1, len(fit.beta))
            self.assertGreaterEqual(
                ev1test.quantile_regression.get_check_loss(outcomes - design.regressors @ perturbed_beta, 0.5),
                fit.objective - 1e-8
            )


if __name__ == '__main__':
    unittest.main()
