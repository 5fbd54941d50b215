"""Test IQR models."""

import json
import os
import tempfile
import unittest

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


def get_logistic_grid() -> ev1test.quantile_regression.CoefficientGrid:
    """Obtain the exact log-odds quantile coefficients of a logistic model with unit scale and slope 0.5."""

    return ev1test.quantile_regression.CoefficientGrid(
        [0.1, 0.5, 0.9],
        np.tile([0.0, 1.0, 0.5], (3, 1)),
        ['intercept', 'numeraire', 'hours']
    )


def get_varying_grid() -> ev1test.quantile_regression.CoefficientGrid:

    return ev1test.quantile_regression.CoefficientGrid(
        [0.1, 0.5, 0.9],
        [[-0.7, 0.8, 0.4], [0.1, 1.1, 0.5], [0.9, 1.3, 0.7]],
        ['intercept', 'numeraire', 'hours']
    )


def get_random_grid(
        seed: int,
        slope_sign: float = 1.0
) -> ev1test.quantile_regression.CoefficientGrid:
    """Obtain random coefficients with intercepts increasing in the level and numeraire slopes of given sign."""

    random_generator = np.random.default_rng(seed)
    return ev1test.quantile_regression.CoefficientGrid(
        [0.1, 0.5, 0.9],
        np.column_stack([
            np.sort(random_generator.normal(0.0, 1.0, 3)),
            slope_sign * random_generator.uniform(0.5, 1.5, 3),
            random_generator.normal(0.0, 0.5, 3)
        ]),
        ['intercept', 'numeraire', 'hours']
    )


def get_random_surface(
        seed: int,
        grid_spec: ev1test.iqr_models.GridSpec,
        slope_sign: float = 1.0,
        row_count: int = 30
) -> ev1test.iqr_models.QuantileSurface:

    random_generator = np.random.default_rng(seed + 100)
    regressors = np.column_stack([
        np.ones(row_count),
        random_generator.uniform(-3.0, 3.0, row_count),
        random_generator.uniform(0.0, 2.0, row_count)
    ])
    return ev1test.iqr_models.QuantileSurface(
        get_random_grid(seed, slope_sign), regressors, np.full(row_count, 1.0 / row_count), grid_spec.a_grid
    )


def get_test_run_config(**kwargs) -> ev1test.config.RunConfig:

    return ev1test.config.RunConfig(**dict(dict(a_grid_count=20, s_grid_count=401, threads=1), **kwargs))


class TestIQRModels(unittest.TestCase):

    def test_ell(self):
        # Compare expected and actual.
        self.assertAlmostEqual(ev1test.iqr_models.ell(0.75), np.log(3.0), delta=1e-12)
        self.assertAlmostEqual(ev1test.iqr_models.ell(0.9), np.log(9.0), delta=1e-12)
        self.assertAlmostEqual(ev1test.iqr_models.ell(0.25), ev1test.iqr_models.ell(0.75), delta=1e-12)
        self.assertAlmostEqual(ev1test.iqr_models.ell_normal(0.75), 0.6744897501960817, delta=1e-6)
        self.assertAlmostEqual(ev1test.iqr_models.ell_normal(0.1), 1.2815515655446004, delta=1e-6)
        with self.assertRaisesRegex(ValueError, "degenerate normalization"):
            ev1test.iqr_models.ell(0.5)

    def test_get_band(self):
        # Compare expected and actual.
        self.assertEqual(ev1test.iqr_models.get_band(0.25), (0.25, 0.5))
        self.assertEqual(ev1test.iqr_models.get_band(0.9), (0.5, 0.9))

    def test_grid_spec(self):
        # Get actual result.
        grid_spec = ev1test.iqr_models.GridSpec(4, np.linspace(-1.0, 1.0, 5), [0.5, 1.0])

        # Compare expected and actual.
        np.testing.assert_allclose(grid_spec.a_grid, [0.125, 0.375, 0.625, 0.875])
        self.assertAlmostEqual(grid_spec.s_step, 0.5)
        np.testing.assert_allclose(ev1test.iqr_models.GridSpec.get_s_grid(-1.0, 1.0, 0.25), np.linspace(-1.0, 1.0, 9))
        np.testing.assert_allclose(
            ev1test.iqr_models.GridSpec.from_dict(grid_spec.to_dict()).s_grid, grid_spec.s_grid
        )
        with self.assertRaises(ValueError):
            ev1test.iqr_models.GridSpec(4, np.linspace(-1.0, 1.0, 5), [1.0, 0.5])

    @parameterized.expand([
        ('tau_0.1', 0.1),
        ('tau_0.25', 0.25),
        ('tau_0.75', 0.75),
        ('tau_0.9', 0.9),
    ])
    def test_interval_measure_matrix(self, name, tau):
        # Obtain test data.
        dataset = get_test_dataset()
        design = ev1test.data_interface.build_design(dataset)
        grid = get_varying_grid()
        grid_spec = ev1test.iqr_models.GridSpec(7, np.linspace(-10.3, 10.1, 2041), [1.0])
        surface = ev1test.iqr_models.get_quantile_surface(dataset, grid, None, grid_spec)
        tau_lo, tau_hi = ev1test.iqr_models.get_band(tau)

        # Define expected result.
        expected = np.array([
            [ev1test.iqr_models.estimate_A(grid, row, a, tau_lo, tau_hi, grid_spec) for a in grid_spec.a_grid]
            for row in design
        ])

        # Get actual result.
        ev1test.utils.log_time(f"test_interval_measure_matrix_{name}", log_level='info', logger_object=logger)
        actual = ev1test.iqr_models.get_interval_measure_matrix(surface, tau_lo, tau_hi, grid_spec)
        ev1test.utils.log_time(f"test_interval_measure_matrix_{name}", log_level='info', logger_object=logger)

        # Compare expected and actual.
        np.testing.assert_allclose(actual, expected, atol=1.0001 * grid_spec.s_step)
        self.assertTrue(np.all(actual >= 0.0))

    def test_interval_measure_partition(self):
        # Obtain test data.
        dataset = get_test_dataset()
        grid_spec = ev1test.iqr_models.GridSpec(9, np.linspace(-10.3, 10.1, 2041), [1.0])
        surface = ev1test.iqr_models.get_quantile_surface(dataset, get_varying_grid(), None, grid_spec)

        # Get actual result.
        lower_part = ev1test.iqr_models.get_interval_measure_matrix(surface, 0.1, 0.5, grid_spec)
        upper_part = ev1test.iqr_models.get_interval_measure_matrix(surface, 0.5, 0.9, grid_spec)
        whole = ev1test.iqr_models.get_interval_measure_matrix(surface, 0.1, 0.9, grid_spec)

        # Compare expected and actual.
        # - The closed bands share the median edge, which may hold one s-grid point.
        difference = lower_part + upper_part - whole
        self.assertTrue(np.all(difference >= -1e-12))
        self.assertTrue(np.all(difference <= 1.0001 * grid_spec.s_step))

    @parameterized.expand([
        ('seed_1', 1, 0.6, 0.9, 1.0),
        ('seed_2', 2, 0.75, 0.95, -1.0),
        ('seed_3', 3, 0.55, 0.7, 1.0),
        ('seed_4', 4, 0.8, 0.9, -1.0),
    ])
    def test_interval_measure_additivity(self, name, seed, tau_1, tau_2, slope_sign):
        # Obtain test data.
        grid_spec = ev1test.iqr_models.GridSpec(9, np.linspace(-10.3, 10.1, 2041), [1.0])
        surface = get_random_surface(seed, grid_spec, slope_sign)

        # Get actual result.
        # - Bands [1 - tau_2, 1 - tau_1] and [1 - tau_1, 0.5] partition [1 - tau_2, 0.5].
        outer_counts = np.rint(
            ev1test.iqr_models.get_interval_measure_matrix(surface, tau_1, tau_2, grid_spec) / grid_spec.s_step
        ).astype(int)
        inner_counts = np.rint(
            ev1test.iqr_models.get_interval_measure_matrix(surface, 0.5, tau_1, grid_spec) / grid_spec.s_step
        ).astype(int)
        whole_counts = np.rint(
            ev1test.iqr_models.get_interval_measure_matrix(surface, 0.5, tau_2, grid_spec) / grid_spec.s_step
        ).astype(int)

        # Compare expected and actual.
        np.testing.assert_array_equal(outer_counts + inner_counts, whole_counts)
        self.assertTrue(np.any(outer_counts > 0))
        self.assertTrue(np.any(inner_counts > 0))

    @parameterized.expand([
        ('seed_1', 1),
        ('seed_2', 2),
        ('seed_3', 3),
    ])
    def test_estimate_G_permutation(self, name, seed):
        # Obtain test data.
        random_generator = np.random.default_rng(seed)
        dataset = get_test_dataset()
        grid_spec = ev1test.iqr_models.GridSpec(9, np.linspace(-10.3, 10.1, 2041), np.linspace(0.2, 3.0, 8))
        respondent_labels = dict(zip(
            dataset.respondents, [f'r{index}' for index in random_generator.permutation(len(dataset.respondents))]
        ))
        observations = dataset.observations.iloc[random_generator.permutation(len(dataset)), :]
        observations = observations.assign(respondent_id=observations.loc[:, 'respondent_id'].map(respondent_labels))
        dataset_permuted = ev1test.data_interface.Dataset(observations.reset_index(drop=True), dataset.schema)

        # Get actual result.
        curves = ev1test.iqr_models.estimate_G_curves(
            dataset, get_random_grid(seed), [0.1, 0.25, 0.75, 0.9], None, grid_spec
        )
        curves_permuted = ev1test.iqr_models.estimate_G_curves(
            dataset_permuted, get_random_grid(seed), [0.1, 0.25, 0.75, 0.9], None, grid_spec
        )

        # Compare expected and actual.
        for tau in curves:
            np.testing.assert_array_equal(curves_permuted[tau].values, curves[tau].values)

    @parameterized.expand([
        ('logistic_seed_1', 'logistic', 1, 0.1),
        ('logistic_seed_2', 'logistic', 2, 0.75),
        ('normal_seed_3', 'normal', 3, 0.25),
        ('normal_seed_4', 'normal', 4, 0.9),
    ])
    def test_normalization_consistency(self, name, normalization, seed, tau):
        # Obtain test data.
        random_generator = np.random.default_rng(seed)
        s_grid = np.linspace(-10.3, 10.1, 2041)
        y_grid = np.sort(random_generator.uniform(0.05, 3.0, 12))
        grid_spec = ev1test.iqr_models.GridSpec(9, s_grid, y_grid)
        grid_spec_scaled = ev1test.iqr_models.GridSpec(
            9, s_grid, y_grid * ev1test.iqr_models.get_normalization(tau, normalization)
        )
        surface = get_random_surface(seed, grid_spec)

        # Get actual result.
        curve = ev1test.iqr_models.get_cdf_curve(surface, tau, grid_spec, normalization)
        curve_unnormalized = ev1test.iqr_models.get_cdf_curve(surface, tau, grid_spec_scaled, 'none')

        # Compare expected and actual.
        np.testing.assert_array_equal(curve.values, curve_unnormalized.values)
        self.assertGreater(curve.values[-1], curve.values[0])

    def test_interval_measure_zero_slope(self):
        # Obtain test data.
        grid = ev1test.quantile_regression.CoefficientGrid([0.5], [[0.2, 0.0, 0.0]], ['intercept', 'numeraire', 'hours'])
        grid_spec = ev1test.iqr_models.GridSpec(1, np.linspace(-2.0, 2.0, 41), [1.0])
        row = ev1test.data_interface.DesignRow([1.0, 3.0, 1.0])
        surface = ev1test.iqr_models.QuantileSurface(grid, row.regressors[np.newaxis, :], [1.0], grid_spec.a_grid)

        # Compare expected and actual.
        self.assertAlmostEqual(
            ev1test.iqr_models.get_interval_measure_matrix(surface, 0.25, 0.5, grid_spec)[0, 0], 41 * 0.1
        )
        self.assertAlmostEqual(ev1test.iqr_models.estimate_A(grid, row, 0.5, 0.25, 0.5, grid_spec), 41 * 0.1)
        self.assertEqual(ev1test.iqr_models.get_interval_measure_matrix(surface, 0.5, 0.75, grid_spec)[0, 0], 0.0)

    def test_estimate_G_logistic(self):
        # Obtain test data.
        dataset = get_test_dataset()
        grid_spec = ev1test.iqr_models.GridSpec(10, np.linspace(-15.0, 15.0, 30001), [0.9, 1.1])

        # Get actual result.
        ev1test.utils.log_time("test_estimate_G_logistic", log_level='info', logger_object=logger)
        curves = ev1test.iqr_models.estimate_G_curves(
            dataset, get_logistic_grid(), [0.1, 0.25, 0.75, 0.9], None, grid_spec
        )
        ev1test.utils.log_time("test_estimate_G_logistic", log_level='info', logger_object=logger)

        # Compare expected and actual.
        for tau, curve in curves.items():
            np.testing.assert_allclose(curve.values, [0.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(
            ev1test.iqr_models.estimate_G(dataset, get_logistic_grid(), 0.25, None, grid_spec).values,
            curves[0.25].values
        )

    def test_estimate_FQ_curve(self):
        # Obtain test data.
        dataset = get_test_dataset()
        grid_spec = ev1test.iqr_models.GridSpec(10, np.linspace(-10.0, 10.0, 2001), [1.0])

        # Get actual result.
        curve = ev1test.iqr_models.estimate_FQ_curve(dataset, get_logistic_grid(), 0.25, None, grid_spec, False)
        curve_varying = ev1test.iqr_models.estimate_FQ_curve(dataset, get_varying_grid(), 0.75, None, grid_spec)

        # Compare expected and actual.
        for index in [0, 500, 1000, 1500, 2000]:
            self.assertAlmostEqual(
                curve.iat[index],
                ev1test.iqr_models.estimate_FQ(
                    dataset, get_logistic_grid(), 0.25, grid_spec.s_grid[index], None, grid_spec
                ),
                delta=1e-12
            )
        for values in [curve.to_numpy(), curve_varying.to_numpy()]:
            self.assertTrue(np.all(np.diff(values) >= 0.0))
            self.assertTrue(np.all((values >= 0.0) & (values <= 1.0)))
        self.assertAlmostEqual(curve.iat[-1], 1.0)

    @parameterized.expand([
        ('tau_0.25', 0.25),
        ('tau_0.75', 0.75),
    ])
    def test_estimate_return_quantile(self, name, tau):
        # Obtain test data.
        grid_spec = ev1test.iqr_models.GridSpec(10, np.linspace(-5.0, 5.0, 10001), [1.0])
        row = ev1test.data_interface.DesignRow([1.0, 0.0, 0.0])

        # Get actual result.
        actual = ev1test.iqr_models.estimate_return_quantile(get_logistic_grid(), row, 0.5, tau, grid_spec)

        # Compare expected and actual.
        self.assertAlmostEqual(actual, np.log(tau / (1.0 - tau)), delta=2.0 * grid_spec.s_step)

    def test_get_grid_spec(self):
        # Obtain test data.
        dataset = get_test_dataset()
        run_config = get_test_run_config()
        design = ev1test.data_interface.build_design(dataset)
        grid = ev1test.quantile_regression.fit_qr_grid(
            design,
            ev1test.quantile_regression.transform_outcome(dataset.get_probabilities()),
            run_config.quantile_levels
        )

        # Get actual result.
        ev1test.utils.log_time("test_get_grid_spec", log_level='info', logger_object=logger)
        grid_spec = ev1test.iqr_models.get_grid_spec(dataset, grid, run_config)
        grid_spec_explicit = ev1test.iqr_models.get_grid_spec(
            dataset, grid, get_test_run_config(s_grid=[-5.0, 5.0, 0.5], y_grid=[0.5, 1.0])
        )
        ev1test.utils.log_time("test_get_grid_spec", log_level='info', logger_object=logger)

        # Compare expected and actual.
        self.assertEqual(len(grid_spec.a_grid), 20)
        self.assertEqual(len(grid_spec.s_grid), 401)
        self.assertAlmostEqual(grid_spec.s_grid[0], -grid_spec.s_grid[-1])
        self.assertTrue(np.all(np.diff(grid_spec.y_grid) > 0.0))
        self.assertLessEqual(len(grid_spec.y_grid), 19)
        self.assertEqual(len(grid_spec_explicit.s_grid), 21)
        np.testing.assert_array_equal(grid_spec_explicit.y_grid, [0.5, 1.0])

    def test_estimate_curves(self):
        # Get actual result.
        ev1test.utils.log_time("test_estimate_curves", log_level='info', logger_object=logger)
        grid, grid_spec, curves = ev1test.iqr_models.estimate_curves(get_test_dataset(), get_test_run_config())
        ev1test.utils.log_time("test_estimate_curves", log_level='info', logger_object=logger)

        # Compare expected and actual.
        self.assertEqual(sorted(curves.keys()), [0.1, 0.25, 0.75, 0.9])
        for curve in curves.values():
            np.testing.assert_array_equal(curve.y, grid_spec.y_grid)
            self.assertTrue(np.all(np.diff(curve.values) >= 0.0))
            self.assertTrue(np.all((curve.values >= 0.0) & (curve.values <= 1.0)))
        self.assertEqual(grid.coefs.shape, (12, 3))

    def test_get_bands(self):
        # Obtain test data.
        curve = ev1test.iqr_models.CdfCurve([0.5, 1.0, 1.5], [0.2, 0.5, 0.8], 0.25, 'logistic')
        replicate_values = np.clip(0.5 + 0.3 * np.random.default_rng(2).normal(size=(50, 3)), 0.0, 1.0)

        # Get actual result.
        lower, upper = ev1test.iqr_models.get_bands(curve, replicate_values, 0.9)

        # Compare expected and actual.
        self.assertTrue(np.all(lower.values <= curve.values))
        self.assertTrue(np.all(upper.values >= curve.values))
        self.assertTrue(np.all(np.diff(lower.values) >= 0.0))
        self.assertTrue(np.all(np.diff(upper.values) >= 0.0))

    def test_bootstrap_bands(self):
        # Obtain test data.
        dataset = get_test_dataset()
        run_config = get_test_run_config()
        _, grid_spec, curves = ev1test.iqr_models.estimate_curves(dataset, run_config)

        # Get actual result.
        ev1test.utils.log_time("test_bootstrap_bands", log_level='info', logger_object=logger)
        lower, upper = ev1test.iqr_models.bootstrap_bands(
            dataset, 4, 0.25, None, grid_spec, 0.9, ev1test.utils.RandomStream(5, 'bootstrap_bands'), run_config
        )
        replicates_1 = ev1test.iqr_models.get_bootstrap_replicates(
            dataset, run_config, grid_spec, None, 3, ev1test.utils.RandomStream(5, 'bootstrap_bands')
        )
        replicates_2 = ev1test.iqr_models.get_bootstrap_replicates(
            dataset, run_config, grid_spec, None, 3, ev1test.utils.RandomStream(5, 'bootstrap_bands')
        )
        ev1test.utils.log_time("test_bootstrap_bands", log_level='info', logger_object=logger)

        # Compare expected and actual.
        self.assertTrue(np.all(lower.values <= curves[0.25].values))
        self.assertTrue(np.all(upper.values >= curves[0.25].values))
        for replicate_1, replicate_2 in zip(replicates_1, replicates_2):
            for tau in run_config.taus:
                np.testing.assert_array_equal(replicate_1[tau], replicate_2[tau])

    def test_counterfactual_spec(self):
        schema = ev1test.data_interface.DatasetSchema(['hours'])
        with tempfile.TemporaryDirectory() as data_path:
            # Get actual result.
            with open(os.path.join(data_path, 'counterfactual.json'), 'w') as file:
                json.dump(dict(rows=[
                    dict(numeraire_difference=1.0, attributes=dict(hours=2.0)),
                    dict(numeraire_difference=-1.0)
                ]), file)
            counterfactual = ev1test.iqr_models.CounterfactualSpec.from_json(
                os.path.join(data_path, 'counterfactual.json'), schema
            )
            with open(os.path.join(data_path, 'unknown.json'), 'w') as file:
                json.dump(dict(rows=[dict(numeraire_difference=1.0, attributes=dict(price=2.0))]), file)

            # Compare expected and actual.
            np.testing.assert_array_equal(counterfactual.rows.regressors, [[1.0, 1.0, 2.0], [1.0, -1.0, 0.0]])
            np.testing.assert_array_equal(counterfactual.weights, [0.5, 0.5])
            with self.assertRaises(ValueError):
                ev1test.iqr_models.CounterfactualSpec.from_json(os.path.join(data_path, 'unknown.json'), schema)
        with self.assertRaises(ValueError):
            ev1test.iqr_models.CounterfactualSpec(
                'explicit', [ev1test.data_interface.DesignRow([1.0, 0.0, 0.0])], [0.5]
            )

    def test_estimate_G_counterfactual(self):
        # Obtain test data.
        grid_spec = ev1test.iqr_models.GridSpec(10, np.linspace(-15.0, 15.0, 30001), [0.9, 1.1])
        counterfactual = ev1test.iqr_models.CounterfactualSpec(
            'explicit', [ev1test.data_interface.DesignRow([1.0, 0.0, 0.0])]
        )

        # Get actual result.
        curve = ev1test.iqr_models.estimate_G(
            get_test_dataset(), get_logistic_grid(), 0.9, counterfactual, grid_spec
        )

        # Compare expected and actual.
        np.testing.assert_allclose(curve.values, [0.0, 1.0], atol=1e-12)

    def test_iqr_results_save(self):
        # Obtain test data.
        grid, grid_spec, curves = ev1test.iqr_models.estimate_curves(get_test_dataset(), get_test_run_config())
        results = ev1test.iqr_models.IQRResults(
            coefficient_grid=grid,
            grid_spec=grid_spec,
            curves=curves,
            lower_bands=dict(),
            upper_bands=dict(),
            run=dict(config=get_test_run_config().get_echo())
        )

        with tempfile.TemporaryDirectory() as results_path:
            # Get actual result.
            results.save(results_path)
            curves_table = pd.read_csv(os.path.join(results_path, 'curves.csv'))
            coefficient_grid = ev1test.quantile_regression.CoefficientGrid.from_csv(
                os.path.join(results_path, 'coefficients.csv')
            )

            # Compare expected and actual.
            self.assertEqual(list(curves_table.columns), ['tau', 'y', 'value', 'lower', 'upper'])
            self.assertEqual(len(curves_table), 4 * len(grid_spec.y_grid))
            np.testing.assert_allclose(coefficient_grid.coefs, grid.coefs)
            self.assertTrue(os.path.isfile(os.path.join(results_path, 'run.json')))


if __name__ == '__main__':
    unittest.main()
