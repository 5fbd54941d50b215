"""Data interface module for stated-choice survey data.

- Survey data is a long CSV file with one row per respondent, scenario and binary option pair. Required columns are
  `respondent_id, scenario_id, prob, num1, num0` plus `x1_<name>, x0_<name>` for each schema attribute.
- The schema is a JSON document, e.g. `{"attributes": ["hours"], "numeraire_transform": "log", "prob_scale": 100}`.
"""

import json
import os
import typing

from multimethod import multimethod
import numpy as np
import pandas as pd

import ev1test.config
import ev1test.utils

logger = ev1test.config.get_logger(__name__)


class DatasetSchema(ev1test.utils.ObjectBase):
    """Dataset schema, i.e. the named attribute columns, the numeraire transform and the probability scale."""

    attributes: typing.List[str]
    numeraire_transform: str
    prob_scale: int

    def __init__(
            self,
            attributes: typing.List[str],
            numeraire_transform: str = 'level',
            prob_scale: int = 1
    ):

        # Validate schema values.
        attributes = [str(attribute) for attribute in attributes]
        if len(set(attributes)) != len(attributes):
            raise ValueError(f"Duplicate attribute names in schema: {attributes}")
        if numeraire_transform not in ['level', 'log']:
            raise ValueError(f"Invalid numeraire transform: '{numeraire_transform}'. Choices: 'level', 'log'.")
        if prob_scale not in [1, 100]:
            raise ValueError(f"Invalid probability scale: {prob_scale}. Choices: 1, 100.")

        self.attributes = attributes
        self.numeraire_transform = numeraire_transform
        self.prob_scale = int(prob_scale)

    @classmethod
    def from_dict(
            cls,
            schema_dict: dict
    ):

        if 'attributes' not in schema_dict:
            raise ValueError("Missing schema key: 'attributes'")
        unknown_keys = set(schema_dict.keys()) - {'attributes', 'numeraire_transform', 'prob_scale'}
        if len(unknown_keys) > 0:
            raise ValueError(f"Unknown schema key(s): {sorted(unknown_keys)}")

        return cls(
            schema_dict['attributes'],
            numeraire_transform=schema_dict.get('numeraire_transform', 'level'),
            prob_scale=schema_dict.get('prob_scale', 1)
        )

    @classmethod
    def from_json(
            cls,
            path: str
    ):

        if not os.path.isfile(path):
            raise FileNotFoundError(f"Schema file not found: {path}")
        with open(path, 'r', encoding='utf-8') as file:
            try:
                schema_dict = json.load(file)
            except json.JSONDecodeError as exception:
                raise ValueError(f"Invalid schema JSON '{path}': {exception}") from exception

        return cls.from_dict(schema_dict)

    def to_dict(self) -> dict:

        return dict(
            attributes=self.attributes,
            numeraire_transform=self.numeraire_transform,
            prob_scale=self.prob_scale
        )

    def to_json(
            self,
            path: str
    ):

        ev1test.utils.write_json(path, self.to_dict())

    def get_columns(self) -> typing.List[str]:
        """Obtain the required CSV columns in standard order."""

        return (
            ['respondent_id', 'scenario_id', 'prob', 'num1', 'num0']
            + [f'x{option}_{attribute}' for attribute in self.attributes for option in [1, 0]]
        )

    def get_numeric_columns(self) -> typing.List[str]:

        return self.get_columns()[2:]


class Observation(typing.NamedTuple):
    """Single stated-choice observation, i.e. one respondent answer for one binary scenario."""

    respondent_id: str
    scenario_id: str
    prob: float
    numeraire1: float
    numeraire0: float
    attrs1: np.ndarray
    attrs0: np.ndarray


class Dataset(ev1test.utils.ObjectBase):
    """Stated-choice dataset object.

    - Observations are stored as data frame in the standard CSV column layout, with probabilities on the 0-1 scale.
    - Rows are grouped by respondent, preserving the order of first appearance of respondents and the row order
      within each respondent.
    - The respondent index maps each respondent identifier to the integer row positions of its observations and
      partitions the rows exactly.
    - Datasets are treated as immutable. Operations return new dataset objects.
    """

    observations: pd.DataFrame
    schema: DatasetSchema
    respondents: pd.Index
    respondent_index: typing.Dict[str, np.ndarray]

    @multimethod
    def __init__(
            self,
            path: str,
            schema: DatasetSchema
    ):

        dataset = load_dataset(path, schema)
        self.__init__(dataset.observations, dataset.schema)

    @multimethod
    def __init__(
            self,
            observations: pd.DataFrame,
            schema: DatasetSchema
    ):

        # Check columns.
        missing_columns = [column for column in schema.get_columns() if column not in observations.columns]
        if len(missing_columns) > 0:
            raise ValueError(f"Missing column(s): {', '.join(missing_columns)}")
        if len(observations) == 0:
            raise ValueError("Dataset contains no observations.")

        # Obtain observations grouped by respondent, in order of first appearance.
        observations = observations.copy()
        observations['respondent_id'] = observations.loc[:, 'respondent_id'].astype(str)
        observations['scenario_id'] = observations.loc[:, 'scenario_id'].astype(str)
        respondent_codes, respondents = pd.factorize(observations.loc[:, 'respondent_id'], sort=False)
        row_order = np.argsort(respondent_codes, kind='stable')
        observations = observations.iloc[row_order, :].reset_index(drop=True)

        # Obtain respondent index.
        _, row_starts, row_counts = (
            np.unique(respondent_codes[row_order], return_index=True, return_counts=True)
        )
        self.respondent_index = {
            respondent_id: np.arange(row_start, row_start + row_count)
            for respondent_id, row_start, row_count in zip(respondents, row_starts, row_counts)
        }
        self.respondents = pd.Index(respondents, name='respondent_id')
        self.observations = observations
        self.schema = schema

    def __len__(self) -> int:

        return len(self.observations)

    def __getitem__(
            self,
            row: int
    ) -> Observation:

        observation = self.observations.iloc[row, :]
        return Observation(
            respondent_id=observation.at['respondent_id'],
            scenario_id=observation.at['scenario_id'],
            prob=float(observation.at['prob']),
            numeraire1=float(observation.at['num1']),
            numeraire0=float(observation.at['num0']),
            attrs1=observation.loc[[f'x1_{attribute}' for attribute in self.schema.attributes]].to_numpy(float),
            attrs0=observation.loc[[f'x0_{attribute}' for attribute in self.schema.attributes]].to_numpy(float)
        )

    def validate(
            self,
            min_respondents: int = 2
    ):
        """Check the dataset invariants required for estimation."""

        if len(self.respondents) < min_respondents:
            raise ValueError(
                f"Dataset contains {len(self.respondents)} respondent(s), but at least {min_respondents} are required."
            )
        if not np.all(self.observations.loc[:, 'prob'].between(0.0, 1.0)):
            raise ValueError("Dataset contains probability out of range.")
        if self.schema.numeraire_transform == 'log':
            if np.any(self.observations.loc[:, ['num1', 'num0']].to_numpy() <= 0.0):
                raise ValueError("Dataset contains nonpositive numeraire under log transform.")

    def get_probabilities(self) -> np.ndarray:

        return self.observations.loc[:, 'prob'].to_numpy(float)

    def to_csv(
            self,
            path: str
    ):
        """Write dataset to the standard CSV layout, with probabilities on the 0-1 scale."""

        self.observations.loc[:, self.schema.get_columns()].to_csv(path, index=False)


class DesignRow(ev1test.utils.ObjectBase):
    """Differenced design row r(w) = [1, T(num1) - T(num0), attrs1 - attrs0]."""

    regressors: np.ndarray
    numeraire_coord: int

    def __init__(
            self,
            regressors: np.ndarray,
            numeraire_coord: int = 1
    ):

        regressors = np.array(regressors, dtype=float)
        if not (0 <= numeraire_coord < len(regressors)):
            raise ValueError(f"Invalid numeraire coordinate {numeraire_coord} for {len(regressors)} regressors.")
        regressors.flags.writeable = False
        self.regressors = regressors
        self.numeraire_coord = int(numeraire_coord)

    def __eq__(self, other) -> bool:

        return (
            isinstance(other, DesignRow)
            and (self.numeraire_coord == other.numeraire_coord)
            and np.array_equal(self.regressors, other.regressors)
        )


class DesignMatrix(ev1test.utils.ObjectBase):
    """Ordered collection of design rows, stored as one regressor matrix."""

    regressors: np.ndarray
    columns: typing.List[str]
    numeraire_coord: int
    respondent_ids: np.ndarray

    def __init__(
            self,
            regressors: np.ndarray,
            columns: typing.List[str],
            numeraire_coord: int = 1,
            respondent_ids: np.ndarray = None
    ):

        regressors = np.array(regressors, dtype=float, ndmin=2)
        if regressors.shape[1] != len(columns):
            raise ValueError(f"Regressor column count {regressors.shape[1]} does not match {len(columns)} names.")
        regressors.flags.writeable = False
        self.regressors = regressors
        self.columns = list(columns)
        self.numeraire_coord = int(numeraire_coord)
        self.respondent_ids = (
            np.array(respondent_ids, dtype=object) if respondent_ids is not None
            else np.full(len(regressors), None, dtype=object)
        )

    def __len__(self) -> int:

        return self.regressors.shape[0]

    def __getitem__(
            self,
            row: int
    ) -> DesignRow:

        return DesignRow(self.regressors[row, :], self.numeraire_coord)

    def __iter__(self) -> typing.Iterator[DesignRow]:

        return (self[row] for row in range(len(self)))


def load_dataset(
        path: str,
        schema_config: typing.Union[DatasetSchema, dict, str],
        prob_scale: int = None
) -> Dataset:
    """Load and validate stated-choice CSV data.

    - All row problems are collected and raised as one `ValueError` with line-numbered messages, where the header
      row is line 1.
    - If `prob_scale` is given, it overrides the probability scale of the schema.
    """

    # Obtain schema.
    if isinstance(schema_config, DatasetSchema):
        schema = schema_config
    elif isinstance(schema_config, dict):
        schema = DatasetSchema.from_dict(schema_config)
    else:
        schema = DatasetSchema.from_json(schema_config)
    if prob_scale is not None:
        schema = DatasetSchema(schema.attributes, schema.numeraire_transform, prob_scale)

    # Load raw CSV values.
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Data file not found: {path}")
    try:
        raw_data = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exception:
        raise ValueError(f"Data file '{path}' cannot be parsed as CSV: {exception}") from exception
    raw_data.columns = raw_data.columns.str.strip()

    # Check columns.
    missing_columns = [column for column in schema.get_columns() if column not in raw_data.columns]
    if len(missing_columns) > 0:
        raise ValueError(f"Missing column(s) in '{path}': {', '.join(missing_columns)}")
    if len(raw_data) == 0:
        raise ValueError(f"Data file '{path}' contains no rows.")

    # Obtain numeric values, collecting line-numbered errors.
    messages = []
    line_numbers = np.arange(len(raw_data)) + 2
    observations = raw_data.loc[:, schema.get_columns()].copy()
    for column in ['respondent_id', 'scenario_id']:
        observations[column] = observations.loc[:, column].str.strip()
        for line_number in line_numbers[(observations.loc[:, column] == '').to_numpy()]:
            messages.append(f"line {line_number}: empty value in column '{column}'")
    for column in schema.get_numeric_columns():
        values = pd.to_numeric(raw_data.loc[:, column].str.strip(), errors='coerce')
        for line_number, raw_value in zip(
                line_numbers[~np.isfinite(values.to_numpy(float))],
                raw_data.loc[~np.isfinite(values.to_numpy(float)), column]
        ):
            messages.append(f"line {line_number}: non-numeric value in column '{column}': '{raw_value}'")
        observations[column] = values.astype(float)

    # Rescale and check probabilities.
    observations['prob'] = observations.loc[:, 'prob'] / schema.prob_scale
    out_of_range = ~observations.loc[:, 'prob'].between(0.0, 1.0) & observations.loc[:, 'prob'].notna()
    for line_number, raw_value in zip(line_numbers[out_of_range.to_numpy()], raw_data.loc[out_of_range, 'prob']):
        messages.append(f"line {line_number}: probability out of range: {raw_value}")

    # Check numeraire values under log transform.
    if schema.numeraire_transform == 'log':
        for column in ['num1', 'num0']:
            nonpositive = (observations.loc[:, column] <= 0.0).to_numpy()
            for line_number, raw_value in zip(line_numbers[nonpositive], raw_data.loc[nonpositive, column]):
                messages.append(
                    f"line {line_number}: nonpositive numeraire in column '{column}' under log transform: {raw_value}"
                )

    if len(messages) > 0:
        raise ValueError(f"Invalid data file '{path}':\n" + "\n".join(messages))

    dataset = Dataset(observations, schema)
    logger.debug(
        f"Loaded {len(dataset)} observations of {len(dataset.respondents)} respondents from: {path}"
    )

    return dataset


def build_design(
        dataset: Dataset
) -> DesignMatrix:
    """Obtain the differenced design rows, one per observation, under the configured numeraire transform."""

    # Obtain numeraire transform.
    if dataset.schema.numeraire_transform == 'log':
        transform = np.log
    else:
        transform = lambda values: values

    # Obtain regressors.
    observations = dataset.observations
    numeraire_difference = (
        transform(observations.loc[:, 'num1'].to_numpy(float))
        - transform(observations.loc[:, 'num0'].to_numpy(float))
    )
    attribute_differences = (
        observations.loc[:, [f'x1_{attribute}' for attribute in dataset.schema.attributes]].to_numpy(float)
        - observations.loc[:, [f'x0_{attribute}' for attribute in dataset.schema.attributes]].to_numpy(float)
    )
    regressors = np.column_stack([np.ones(len(observations)), numeraire_difference, attribute_differences])

    return DesignMatrix(
        regressors,
        ['intercept', 'numeraire', *dataset.schema.attributes],
        numeraire_coord=1,
        respondent_ids=observations.loc[:, 'respondent_id'].to_numpy(object)
    )


def shift_numeraire(
        row: DesignRow,
        s: float
) -> DesignRow:
    """Obtain the counterfactual row t(s, w), i.e. the row with the numeraire difference decreased by `s`."""

    regressors = row.regressors.copy()
    regressors[row.numeraire_coord] -= s

    return DesignRow(regressors, row.numeraire_coord)


def block_resample(
        dataset: Dataset,
        random_generator: np.random.Generator
) -> Dataset:
    """Obtain block bootstrap resample by respondent.

    - Draws as many respondents as the dataset contains, with replacement, and copies all their rows.
    - Drawn respondents are relabeled as `<respondent_id>_<draw>`, such that the respondent index remains a
      partition. The original identifier is kept in column `source_respondent_id`.
    """

    # Draw respondents.
    draws = random_generator.integers(0, len(dataset.respondents), size=len(dataset.respondents))
    respondent_ids = dataset.respondents[draws]

    # Obtain resampled observations.
    row_positions = [dataset.respondent_index[respondent_id] for respondent_id in respondent_ids]
    observations = dataset.observations.iloc[np.concatenate(row_positions), :].reset_index(drop=True)
    observations['source_respondent_id'] = np.repeat(
        respondent_ids.to_numpy(object),
        [len(positions) for positions in row_positions]
    )
    observations['respondent_id'] = np.repeat(
        [f'{respondent_id}_{draw_index}' for draw_index, respondent_id in enumerate(respondent_ids)],
        [len(positions) for positions in row_positions]
    )

    return Dataset(observations, dataset.schema)


def get_dataset_diagnostics(
        dataset: Dataset
) -> dict:
    """Obtain validation diagnostics, i.e. scenario counts, probability heaping and attribute variation."""

    # Obtain scenario counts per respondent.
    scenario_counts = pd.Series(
        {respondent_id: len(rows) for respondent_id, rows in dataset.respondent_index.items()}
    )

    # Obtain probability heaping shares.
    probabilities = dataset.get_probabilities()
    histogram_counts, histogram_edges = np.histogram(probabilities, bins=10, range=(0.0, 1.0))
    heaping = dict(
        share_multiple_of_0_10=float(np.mean(np.isclose(np.round(probabilities * 10.0), probabilities * 10.0))),
        share_multiple_of_0_05=float(np.mean(np.isclose(np.round(probabilities * 20.0), probabilities * 20.0))),
        share_zero=float(np.mean(probabilities == 0.0)),
        share_one=float(np.mean(probabilities == 1.0)),
        histogram_edges=histogram_edges.round(10).tolist(),
        histogram_counts=histogram_counts.tolist()
    )

    # Obtain attribute variation, with warnings for degenerate columns.
    design = build_design(dataset)
    warnings = []
    variation = dict()
    for column_index, column in enumerate(design.columns[1:], start=1):
        has_variation = bool(np.ptp(design.regressors[:, column_index]) > 0.0)
        variation[column] = has_variation
        if not has_variation:
            if column_index == design.numeraire_coord:
                warnings.append("numeraire has no variation; Â undefined")
            else:
                warnings.append(f"attribute '{column}' has no variation; design is rank deficient")
    if len(dataset.respondents) < 2:
        warnings.append("dataset contains fewer than 2 respondents; estimation requires at least 2")
    for warning in warnings:
        logger.warning(warning)

    return dict(
        observation_count=len(dataset),
        respondent_count=len(dataset.respondents),
        scenarios_per_respondent=dict(
            minimum=int(scenario_counts.min()),
            median=float(scenario_counts.median()),
            maximum=int(scenario_counts.max())
        ),
        probability_heaping=heaping,
        attribute_variation=variation,
        warnings=warnings
    )
