"""Test data interface."""

import os
import tempfile
import unittest

import numpy as np
import pandas as pd

import ev1test

logger = ev1test.config.get_logger(__name__)

test_data_path = os.path.join(os.path.dirname(os.path.normpath(__file__)), 'data')


def get_test_dataset() -> ev1test.data_interface.Dataset:

    return ev1test.data_interface.load_dataset(
        os.path.join(test_data_path, 'survey.csv'),
        os.path.join(test_data_path, 'schema.json')
    )


class TestDataInterface(unittest.TestCase):

    def test_load_dataset(self):
        # Get result.
        ev1test.utils.log_time("test_load_dataset", log_level='info', logger_object=logger)
        dataset = get_test_dataset()
        ev1test.utils.log_time("test_load_dataset", log_level='info', logger_object=logger)

        # Compare expected and actual.
        self.assertEqual(len(dataset), 40)
        self.assertEqual(len(dataset.respondents), 8)
        self.assertEqual(dataset.respondents.to_list(), [str(index) for index in range(1, 9)])
        np.testing.assert_array_equal(
            np.sort(np.concatenate(list(dataset.respondent_index.values()))),
            np.arange(len(dataset))
        )
        self.assertEqual(dataset[0].respondent_id, '1')
        self.assertAlmostEqual(dataset[0].prob, 0.9967)
        dataset.validate()

    def test_load_dataset_percent_scale(self):
        # Get result.
        dataset = get_test_dataset()
        dataset_percent = ev1test.data_interface.load_dataset(
            os.path.join(test_data_path, 'survey_percent.csv'),
            os.path.join(test_data_path, 'schema_percent.json')
        )
        dataset_override = ev1test.data_interface.load_dataset(
            os.path.join(test_data_path, 'survey_percent.csv'),
            os.path.join(test_data_path, 'schema.json'),
            prob_scale=100
        )

        # Compare expected and actual.
        np.testing.assert_allclose(dataset_percent.get_probabilities(), dataset.get_probabilities(), atol=1e-9)
        np.testing.assert_allclose(dataset_override.get_probabilities(), dataset.get_probabilities(), atol=1e-9)

    def test_load_dataset_errors(self):
        observations = pd.read_csv(os.path.join(test_data_path, 'survey.csv'), dtype=str)
        with tempfile.TemporaryDirectory() as data_path:
            # Missing column.
            observations.drop(columns=['prob']).to_csv(os.path.join(data_path, 'missing.csv'), index=False)
            with self.assertRaisesRegex(ValueError, 'prob'):
                ev1test.data_interface.load_dataset(
                    os.path.join(data_path, 'missing.csv'), os.path.join(test_data_path, 'schema.json')
                )

            # Line-numbered row errors.
            invalid_observations = observations.copy()
            invalid_observations.loc[0, 'prob'] = '1.2'
            invalid_observations.loc[2, 'x1_hours'] = 'abc'
            invalid_observations.to_csv(os.path.join(data_path, 'invalid.csv'), index=False)
            with self.assertRaises(ValueError) as context:
                ev1test.data_interface.load_dataset(
                    os.path.join(data_path, 'invalid.csv'), os.path.join(test_data_path, 'schema.json')
                )
            self.assertIn("line 2: probability out of range: 1.2", str(context.exception))
            self.assertIn("line 4: non-numeric value in column 'x1_hours'", str(context.exception))

            # Nonpositive numeraire under log transform.
            invalid_observations = observations.copy()
            invalid_observations.loc[1, 'num1'] = '0'
            invalid_observations.to_csv(os.path.join(data_path, 'nonpositive.csv'), index=False)
            with self.assertRaisesRegex(ValueError, "line 3: nonpositive numeraire"):
                ev1test.data_interface.load_dataset(
                    os.path.join(data_path, 'nonpositive.csv'),
                    dict(attributes=['hours'], numeraire_transform='log')
                )

        with self.assertRaises(FileNotFoundError):
            ev1test.data_interface.load_dataset('missing.csv', os.path.join(test_data_path, 'schema.json'))

    def test_build_design(self):
        # Get result.
        dataset = get_test_dataset()
        design = ev1test.data_interface.build_design(dataset)
        dataset_log = ev1test.data_interface.Dataset(
            dataset.observations, ev1test.data_interface.DatasetSchema(['hours'], 'log')
        )
        design_log = ev1test.data_interface.build_design(dataset_log)

        # Compare expected and actual.
        self.assertEqual(design.columns, ['intercept', 'numeraire', 'hours'])
        np.testing.assert_array_equal(design[0].regressors, [1.0, 5.0, -2.0])
        np.testing.assert_allclose(design_log[0].regressors, [1.0, np.log(105.0 / 100.0), -2.0])

    def test_shift_numeraire(self):
        # Get result.
        row = ev1test.data_interface.DesignRow([1.0, 5.0, -2.0])
        actual = ev1test.data_interface.shift_numeraire(row, 1.5)

        # Compare expected and actual.
        self.assertEqual(actual, ev1test.data_interface.DesignRow([1.0, 3.5, -2.0]))
        self.assertEqual(row, ev1test.data_interface.DesignRow([1.0, 5.0, -2.0]))

    def test_block_resample(self):
        # Get result.
        dataset = get_test_dataset()
        resampled_dataset_1 = ev1test.data_interface.block_resample(dataset, np.random.default_rng(3))
        resampled_dataset_2 = ev1test.data_interface.block_resample(dataset, np.random.default_rng(3))

        # Compare expected and actual.
        self.assertEqual(len(resampled_dataset_1.respondents), len(dataset.respondents))
        self.assertEqual(len(resampled_dataset_1), 40)
        pd.testing.assert_frame_equal(resampled_dataset_1.observations, resampled_dataset_2.observations)
        for respondent_id, rows in resampled_dataset_1.respondent_index.items():
            source_id = resampled_dataset_1.observations.at[rows[0], 'source_respondent_id']
            pd.testing.assert_frame_equal(
                resampled_dataset_1.observations.loc[rows, ['scenario_id', 'prob', 'num1', 'x1_hours']]
                .reset_index(drop=True),
                dataset.observations.loc[dataset.respondent_index[source_id], ['scenario_id', 'prob', 'num1', 'x1_hours']]
                .reset_index(drop=True)
            )

    def test_get_dataset_diagnostics(self):
        # Get result.
        dataset = get_test_dataset()
        diagnostics = ev1test.data_interface.get_dataset_diagnostics(dataset)
        observations = dataset.observations.copy()
        observations['num1'] = observations.loc[:, 'num0']
        diagnostics_degenerate = ev1test.data_interface.get_dataset_diagnostics(
            ev1test.data_interface.Dataset(observations, dataset.schema)
        )

        # Compare expected and actual.
        self.assertEqual(diagnostics['respondent_count'], 8)
        self.assertEqual(diagnostics['scenarios_per_respondent']['minimum'], 5)
        self.assertEqual(sum(diagnostics['probability_heaping']['histogram_counts']), 40)
        self.assertEqual(diagnostics['warnings'], [])
        self.assertIn("numeraire has no variation; Â undefined", diagnostics_degenerate['warnings'])

    def test_schema(self):
        with self.assertRaises(ValueError):
            ev1test.data_interface.DatasetSchema.from_dict(dict(attributes=['hours'], prob_scale=10))
        with self.assertRaises(ValueError):
            ev1test.data_interface.DatasetSchema.from_dict(dict(attributes=['hours', 'hours']))
        with self.assertRaises(ValueError):
            ev1test.data_interface.DatasetSchema.from_dict(dict(features=['hours']))


if __name__ == '__main__':
    unittest.main()
