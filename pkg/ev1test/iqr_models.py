"""Interquantile range (IQR) models module.

- The interval measure A(w, a) is the length of the set of numeraire shifts `s` for which the predicted conditional
  quantile at level `a` of the shifted scenario t(s, w) lies in the probability band of an interquantile range.
- The IQR distribution G_tau is the share of (scenario, level) pairs whose normalized interval measure is below `y`.
- The quantile distribution F_Q is the share of (scenario, level) pairs whose shifted prediction is below 1 - tau.
"""

import json
import os
import typing

import numpy as np
import pandas as pd
import scipy.stats

import ev1test.config
import ev1test.data_interface
import ev1test.quantile_regression
import ev1test.utils

logger = ev1test.config.get_logger(__name__)


def ell(
        tau: float
) -> float:
    """Obtain the logistic normalization |log(tau / (1 - tau))|."""

    validate_tau(tau)
    return float(np.abs(np.log(tau / (1.0 - tau))))


def ell_normal(
        tau: float
) -> float:
    """Obtain the normal normalization |Phi^-1(tau)|."""

    validate_tau(tau)
    return float(np.abs(scipy.stats.norm.ppf(tau)))


def validate_tau(
        tau: float
):

    if not (0.0 < tau < 1.0):
        raise ValueError(f"Quantile level must be in (0, 1): {tau}")
    if tau == 0.5:
        raise ValueError("degenerate normalization: tau = 0.5")


def get_normalization(
        tau: float,
        normalization: str = 'logistic'
) -> float:

    if normalization == 'logistic':
        return ell(tau)
    elif normalization == 'normal':
        return ell_normal(tau)
    elif normalization == 'none':
        validate_tau(tau)
        return 1.0
    else:
        raise ValueError(f"Invalid normalization: '{normalization}'")


def get_band(
        tau: float
) -> (float, float):
    """Obtain (tau_lo, tau_hi) of the IQR between the tau-quantile and the median.

    - The corresponding probability band is [1 - tau_hi, 1 - tau_lo], i.e. [1 - tau, 0.5] for tau > 0.5
      and [0.5, 1 - tau] for tau < 0.5.
    """

    validate_tau(tau)
    return (0.5, tau) if tau > 0.5 else (tau, 0.5)


class GridSpec(ev1test.utils.ObjectBase):
    """Evaluation grids, i.e. the midpoint a-grid, the equally spaced s-grid and the y-grid."""

    a_grid: np.ndarray
    a_step: float
    s_grid: np.ndarray
    s_step: float
    y_grid: np.ndarray

    def __init__(
            self,
            a_grid_count: int,
            s_grid: np.ndarray,
            y_grid: np.ndarray
    ):

        # Obtain a-grid.
        if a_grid_count < 1:
            raise ValueError(f"Invalid a-grid point count: {a_grid_count}")
        self.a_grid = (np.arange(1, a_grid_count + 1) - 0.5) / a_grid_count
        self.a_step = 1.0 / a_grid_count

        # Obtain s-grid.
        s_grid = np.array(s_grid, dtype=float)
        if (len(s_grid) < 2) or not np.all(np.diff(s_grid) > 0.0):
            raise ValueError("The s-grid must contain at least 2 strictly increasing points.")
        self.s_grid = s_grid
        self.s_step = float((s_grid[-1] - s_grid[0]) / (len(s_grid) - 1))

        # Obtain y-grid.
        y_grid = np.array(y_grid, dtype=float)
        if (len(y_grid) == 0) or not np.all(np.diff(y_grid) > 0.0) or np.any(y_grid < 0.0):
            raise ValueError(f"The y-grid must be nonnegative and strictly increasing: {y_grid.tolist()}")
        self.y_grid = y_grid

    @staticmethod
    def get_s_grid(
            lower: float,
            upper: float,
            step: float
    ) -> np.ndarray:
        """Obtain s-grid from `lower` in steps of `step` up to `upper`."""

        if not ((lower < upper) and (step > 0.0)):
            raise ValueError(f"Invalid s-grid bounds: {lower}, {upper}, {step}")
        point_count = int(np.floor((upper - lower) / step + 1e-9)) + 1
        return lower + step * np.arange(point_count)

    def to_dict(self) -> dict:

        return dict(
            a_grid_count=len(self.a_grid),
            a_step=self.a_step,
            s_grid_lower=float(self.s_grid[0]),
            s_grid_upper=float(self.s_grid[-1]),
            s_grid_count=len(self.s_grid),
            s_step=self.s_step,
            y_grid=self.y_grid.tolist()
        )

    @classmethod
    def from_dict(
            cls,
            grid_dict: dict
    ):

        return cls(
            grid_dict['a_grid_count'],
            np.linspace(grid_dict['s_grid_lower'], grid_dict['s_grid_upper'], grid_dict['s_grid_count']),
            grid_dict['y_grid']
        )


class CdfCurve(ev1test.utils.ObjectBase):
    """Estimated distribution function on a y-grid."""

    y: np.ndarray
    values: np.ndarray
    tau: float
    normalization: str

    def __init__(
            self,
            y: np.ndarray,
            values: np.ndarray,
            tau: float,
            normalization: str
    ):

        values = np.array(values, dtype=float)
        if np.any(values < 0.0) or np.any(values > 1.0) or np.any(np.diff(values) < 0.0):
            raise ValueError("Distribution function values must be nondecreasing and in [0, 1].")
        self.y = np.array(y, dtype=float)
        self.values = values
        self.tau = float(tau)
        self.normalization = normalization

    def to_dict(self) -> dict:

        return dict(tau=self.tau, normalization=self.normalization, y=self.y.tolist(), values=self.values.tolist())


class CounterfactualSpec(ev1test.utils.ObjectBase):
    """Counterfactual scenario set, i.e. the observed design rows or an explicit weighted list of design rows."""

    mode: str
    rows: typing.Optional[ev1test.data_interface.DesignMatrix]
    weights: typing.Optional[np.ndarray]

    def __init__(
            self,
            mode: str = 'observed',
            rows: typing.Union[ev1test.data_interface.DesignMatrix, typing.List[ev1test.data_interface.DesignRow]] = None,
            weights: np.ndarray = None
    ):

        if mode == 'observed':
            self.mode = mode
            self.rows = None
            self.weights = None
        elif mode == 'explicit':
            if rows is None or len(rows) == 0:
                raise ValueError("Explicit counterfactual requires at least one design row.")
            if not isinstance(rows, ev1test.data_interface.DesignMatrix):
                rows = ev1test.data_interface.DesignMatrix(
                    np.vstack([row.regressors for row in rows]),
                    ['intercept', 'numeraire'] + [f'attribute_{index}' for index in range(len(rows[0].regressors) - 2)],
                    numeraire_coord=rows[0].numeraire_coord
                )
            weights = np.full(len(rows), 1.0 / len(rows)) if weights is None else np.array(weights, dtype=float)
            if (len(weights) != len(rows)) or np.any(weights < 0.0) or not np.isclose(np.sum(weights), 1.0):
                raise ValueError("Counterfactual weights must be nonnegative, one per row and sum to 1.")
            self.mode = mode
            self.rows = rows
            self.weights = weights
        else:
            raise ValueError(f"Invalid counterfactual mode: '{mode}'. Choices: 'observed', 'explicit'.")

    @classmethod
    def from_json(
            cls,
            path: str,
            schema: ev1test.data_interface.DatasetSchema
    ):
        """Load explicit counterfactual scenarios.

        - Format: `{"rows": [{"weight": 0.5, "numeraire_difference": 1.0, "attributes": {"hours": 0.0}}, ...]}`.
        - Missing weights default to equal weights. Missing attributes default to zero differences.
        """

        if not os.path.isfile(path):
            raise FileNotFoundError(f"Counterfactual file not found: {path}")
        with open(path, 'r', encoding='utf-8') as file:
            counterfactual_dict = json.load(file)
        rows = counterfactual_dict.get('rows', [])
        if len(rows) == 0:
            raise ValueError(f"Counterfactual file contains no rows: {path}")
        for row in rows:
            unknown_attributes = set(row.get('attributes', dict()).keys()) - set(schema.attributes)
            if len(unknown_attributes) > 0:
                raise ValueError(f"Unknown counterfactual attribute(s): {sorted(unknown_attributes)}")
        regressors = np.array([
            [1.0, float(row['numeraire_difference'])]
            + [float(row.get('attributes', dict()).get(attribute, 0.0)) for attribute in schema.attributes]
            for row in rows
        ])
        weights = (
            np.array([float(row['weight']) for row in rows])
            if all('weight' in row for row in rows) else None
        )

        return cls(
            'explicit',
            ev1test.data_interface.DesignMatrix(regressors, ['intercept', 'numeraire', *schema.attributes]),
            weights
        )

    def get_design(
            self,
            dataset: ev1test.data_interface.Dataset
    ) -> (np.ndarray, np.ndarray):
        """Obtain the regressor matrix and the weights of the scenario set."""

        if self.mode == 'observed':
            design = ev1test.data_interface.build_design(dataset)
            return design.regressors, np.full(len(design), 1.0 / len(design))
        else:
            return self.rows.regressors, self.weights


class QuantileSurface(ev1test.utils.ObjectBase):
    """Linear predictions of the conditional quantiles over scenarios and the a-grid, as functions of the shift `s`.

    - The linear prediction for scenario `i` at level `a_k` and shift `s` is `intercepts[i, k] - s * slopes[k]`.
    """

    intercepts: np.ndarray
    slopes: np.ndarray
    weights: np.ndarray
    outcome_transform: str

    def __init__(
            self,
            grid: ev1test.quantile_regression.CoefficientGrid,
            regressors: np.ndarray,
            weights: np.ndarray,
            a_grid: np.ndarray
    ):

        if len(regressors) == 0:
            raise ValueError("Counterfactual scenario set is empty.")
        coefs = ev1test.quantile_regression.interpolate_coefs(grid, a_grid)
        self.intercepts = regressors @ coefs.T
        self.slopes = coefs[:, grid.numeraire_coord]
        self.weights = np.asarray(weights, dtype=float)
        self.outcome_transform = grid.outcome_transform


def get_quantile_surface(
        dataset: ev1test.data_interface.Dataset,
        grid: ev1test.quantile_regression.CoefficientGrid,
        counterfactual: CounterfactualSpec,
        grid_spec: GridSpec
) -> QuantileSurface:

    counterfactual = CounterfactualSpec() if counterfactual is None else counterfactual
    regressors, weights = counterfactual.get_design(dataset)

    return QuantileSurface(grid, regressors, weights, grid_spec.a_grid)


def get_interval_measure_matrix(
        surface: QuantileSurface,
        tau_lo: float,
        tau_hi: float,
        grid_spec: GridSpec
) -> np.ndarray:
    """Obtain the interval measure A for all scenarios (rows) and a-grid levels (columns).

    - Since the linear prediction is affine in `s`, the set of shifts with prediction in the closed band
      [1 - tau_hi, 1 - tau_lo] is a closed interval, whose s-grid points are counted by binary search.
    """

    if not (0.0 < tau_lo < tau_hi < 1.0):
        raise ValueError(f"Invalid band levels: tau_lo = {tau_lo}, tau_hi = {tau_hi}")

    # Obtain band edges on the scale of the linear prediction.
    lower_edge = ev1test.quantile_regression.get_link_value(1.0 - tau_hi, surface.outcome_transform)
    upper_edge = ev1test.quantile_regression.get_link_value(1.0 - tau_lo, surface.outcome_transform)

    # Obtain shift interval bounds.
    slopes = np.broadcast_to(surface.slopes[np.newaxis, :], surface.intercepts.shape)
    with np.errstate(divide='ignore', invalid='ignore'):
        shift_at_upper_edge = (surface.intercepts - upper_edge) / slopes
        shift_at_lower_edge = (surface.intercepts - lower_edge) / slopes
    shift_lower = np.where(slopes > 0.0, shift_at_upper_edge, shift_at_lower_edge)
    shift_upper = np.where(slopes > 0.0, shift_at_lower_edge, shift_at_upper_edge)

    # Count s-grid points in the closed interval.
    point_counts = (
        np.searchsorted(grid_spec.s_grid, np.nan_to_num(shift_upper), side='right')
        - np.searchsorted(grid_spec.s_grid, np.nan_to_num(shift_lower), side='left')
    )
    point_counts = np.where(
        slopes == 0.0,
        np.where(
            (surface.intercepts >= lower_edge) & (surface.intercepts <= upper_edge),
            len(grid_spec.s_grid),
            0
        ),
        np.maximum(point_counts, 0)
    )

    return grid_spec.s_step * point_counts


def estimate_A(
        grid: ev1test.quantile_regression.CoefficientGrid,
        row: ev1test.data_interface.DesignRow,
        a: float,
        tau_lo: float,
        tau_hi: float,
        grid_spec: GridSpec
) -> float:
    """Obtain the interval measure A(w, a) as indicator sum over the s-grid.

    - Evaluates the probability-scale prediction of every shifted row t(s, w) and sums `s_step` over the shifts
      with prediction in the closed band [1 - tau_hi, 1 - tau_lo].
    """

    if not (0.0 < tau_lo < tau_hi < 1.0):
        raise ValueError(f"Invalid band levels: tau_lo = {tau_lo}, tau_hi = {tau_hi}")

    # Obtain shifted rows, one per s-grid point.
    shifted_regressors = np.tile(row.regressors, (len(grid_spec.s_grid), 1))
    shifted_regressors[:, row.numeraire_coord] -= grid_spec.s_grid

    # Obtain predictions and indicator sum.
    predictions = ev1test.quantile_regression.get_probability(
        shifted_regressors @ ev1test.quantile_regression.interpolate_coefs(grid, a),
        grid.outcome_transform
    )
    in_band = (predictions >= 1.0 - tau_hi) & (predictions <= 1.0 - tau_lo)

    return float(grid_spec.s_step * np.sum(in_band))


def get_cdf_curve(
        surface: QuantileSurface,
        tau: float,
        grid_spec: GridSpec,
        normalization: str = 'logistic'
) -> CdfCurve:
    """Obtain the IQR distribution curve at the y-grid from a quantile surface."""

    # Obtain interval measures and weights.
    tau_lo, tau_hi = get_band(tau)
    interval_measures = get_interval_measure_matrix(surface, tau_lo, tau_hi, grid_spec).ravel()
    weights = np.repeat(surface.weights * grid_spec.a_step, len(grid_spec.a_grid))

    # Obtain weighted share of interval measures below the normalized thresholds.
    sort_order = np.argsort(interval_measures, kind='stable')
    cumulative_weights = np.concatenate([[0.0], np.cumsum(weights[sort_order])])
    thresholds = grid_spec.y_grid * get_normalization(tau, normalization)
    values = cumulative_weights[np.searchsorted(interval_measures[sort_order], thresholds, side='right')]

    return CdfCurve(grid_spec.y_grid, np.clip(values, 0.0, 1.0), tau, normalization)


def estimate_G(
        dataset: ev1test.data_interface.Dataset,
        grid: ev1test.quantile_regression.CoefficientGrid,
        tau: float,
        counterfactual: CounterfactualSpec,
        grid_spec: GridSpec,
        normalization: str = 'logistic'
) -> CdfCurve:
    """Estimate the distribution G_tau of the normalized IQR(tau, 0.5) over the counterfactual scenario set."""

    return get_cdf_curve(get_quantile_surface(dataset, grid, counterfactual, grid_spec), tau, grid_spec, normalization)


def estimate_G_curves(
        dataset: ev1test.data_interface.Dataset,
        grid: ev1test.quantile_regression.CoefficientGrid,
        taus: typing.Iterable[float],
        counterfactual: CounterfactualSpec,
        grid_spec: GridSpec,
        normalization: str = 'logistic'
) -> typing.Dict[float, CdfCurve]:
    """Estimate G_tau for several quantile levels, sharing one quantile surface."""

    surface = get_quantile_surface(dataset, grid, counterfactual, grid_spec)

    return {float(tau): get_cdf_curve(surface, tau, grid_spec, normalization) for tau in taus}


def estimate_FQ(
        dataset: ev1test.data_interface.Dataset,
        grid: ev1test.quantile_regression.CoefficientGrid,
        tau: float,
        s: float,
        counterfactual: CounterfactualSpec,
        grid_spec: GridSpec
) -> float:
    """Estimate the quantile distribution F_Q(s; tau), i.e. the weighted share of (scenario, level) pairs whose
    prediction at the shifted scenario t(s, w) is at most 1 - tau.
    """

    if not (0.0 < tau < 1.0):
        raise ValueError(f"Quantile level must be in (0, 1): {tau}")
    surface = get_quantile_surface(dataset, grid, counterfactual, grid_spec)
    predictions = ev1test.quantile_regression.get_probability(
        surface.intercepts - s * surface.slopes[np.newaxis, :],
        surface.outcome_transform
    )
    value = np.sum(surface.weights[:, np.newaxis] * grid_spec.a_step * (predictions <= 1.0 - tau))

    return float(np.clip(value, 0.0, 1.0))


def estimate_FQ_curve(
        dataset: ev1test.data_interface.Dataset,
        grid: ev1test.quantile_regression.CoefficientGrid,
        tau: float,
        counterfactual: CounterfactualSpec,
        grid_spec: GridSpec,
        rearrange: bool = True
) -> pd.Series:
    """Estimate F_Q(s; tau) at all s-grid points.

    - The prediction is below 1 - tau for all shifts above (positive slope) or below (negative slope) a threshold,
      such that the curve is obtained from weighted threshold counts.
    - If `rearrange`, the values are sorted along the s-grid, which repairs non-monotonicity from quantile crossing.
    """

    if not (0.0 < tau < 1.0):
        raise ValueError(f"Quantile level must be in (0, 1): {tau}")
    surface = get_quantile_surface(dataset, grid, counterfactual, grid_spec)
    edge = ev1test.quantile_regression.get_link_value(1.0 - tau, surface.outcome_transform)
    weights = np.broadcast_to(surface.weights[:, np.newaxis] * grid_spec.a_step, surface.intercepts.shape)
    slopes = np.broadcast_to(surface.slopes[np.newaxis, :], surface.intercepts.shape)
    with np.errstate(divide='ignore', invalid='ignore'):
        thresholds = (surface.intercepts - edge) / slopes

    # Constant part, from zero slopes.
    values = np.full(len(grid_spec.s_grid), np.sum(weights[(slopes == 0.0) & (surface.intercepts <= edge)]))

    # Positive slopes count for shifts at or above the threshold.
    positive = slopes > 0.0
    sort_order = np.argsort(thresholds[positive], kind='stable')
    cumulative_weights = np.concatenate([[0.0], np.cumsum(weights[positive][sort_order])])
    values += cumulative_weights[np.searchsorted(thresholds[positive][sort_order], grid_spec.s_grid, side='right')]

    # Negative slopes count for shifts at or below the threshold.
    negative = slopes < 0.0
    sort_order = np.argsort(thresholds[negative], kind='stable')
    cumulative_weights = np.concatenate([[0.0], np.cumsum(weights[negative][sort_order])])
    values += (
        cumulative_weights[-1]
        - cumulative_weights[np.searchsorted(thresholds[negative][sort_order], grid_spec.s_grid, side='left')]
    )

    values = np.clip(values, 0.0, 1.0)
    if rearrange:
        values = np.sort(values)

    return pd.Series(values, index=pd.Index(grid_spec.s_grid, name='s'), name=f'tau_{tau}')


def estimate_return_quantile(
        grid: ev1test.quantile_regression.CoefficientGrid,
        row: ev1test.data_interface.DesignRow,
        a: float,
        tau: float,
        grid_spec: GridSpec
) -> float:
    """Estimate the tau-quantile of the ex ante return of the individual at rank `a` in scenario `row`,
    as sum over the s-grid of `s_step * (1{1 - Q(a | t(s, w)) <= tau} - 1{s <= 0})`.

    - The result is exact up to `s_step` if the quantile lies within the s-grid.
    """

    if not (0.0 < tau < 1.0):
        raise ValueError(f"Quantile level must be in (0, 1): {tau}")

    # Obtain predictions at shifted rows.
    shifted_regressors = np.tile(row.regressors, (len(grid_spec.s_grid), 1))
    shifted_regressors[:, row.numeraire_coord] -= grid_spec.s_grid
    predictions = ev1test.quantile_regression.get_probability(
        shifted_regressors @ ev1test.quantile_regression.interpolate_coefs(grid, a),
        grid.outcome_transform
    )

    return float(
        grid_spec.s_step
        * (np.sum(1.0 - predictions <= tau) - np.sum(grid_spec.s_grid <= 0.0))
    )


def get_grid_spec(
        dataset: ev1test.data_interface.Dataset,
        grid: ev1test.quantile_regression.CoefficientGrid,
        run_config: ev1test.config.RunConfig,
        counterfactual: CounterfactualSpec = None
) -> GridSpec:
    """Obtain the evaluation grids for the original sample.

    - s-grid: explicit `run_config.s_grid` (lower, upper, step) or symmetric around zero with half width
      `s_grid_margin` times the largest predicted band crossing, capped at `s_grid_cap_multiple` times the largest
      absolute numeraire difference. Crossings outside of the s-grid are reported as warning.
    - y-grid: explicit `run_config.y_grid` or the `y_grid_quantiles` of the pooled normalized interval measures
      over all taus. The y-grid is frozen here and reused by all bootstrap replicates.
    """

    # Obtain predicted band crossings.
    design = ev1test.data_interface.build_design(dataset)
    a_grid = (np.arange(1, run_config.a_grid_count + 1) - 0.5) / run_config.a_grid_count
    surface = get_quantile_surface(dataset, grid, counterfactual, GridSpec(run_config.a_grid_count, [0.0, 1.0], [0.0]))
    band_edges = np.unique(ev1test.quantile_regression.get_link_value(
        np.array([1.0 - tau for tau in run_config.taus] + [0.5]),
        grid.outcome_transform
    ))
    with np.errstate(divide='ignore', invalid='ignore'):
        crossings = np.concatenate([
            ((surface.intercepts - edge) / surface.slopes[np.newaxis, :]).ravel()
            for edge in band_edges
        ])
    crossings = np.abs(crossings[np.isfinite(crossings)])

    # Obtain s-grid.
    if run_config.s_grid is not None:
        s_grid = GridSpec.get_s_grid(*run_config.s_grid)
    else:
        numeraire_range = np.max(np.abs(design.regressors[:, design.numeraire_coord]))
        if not (numeraire_range > 0.0):
            raise ValueError("numeraire has no variation; Â undefined")
        s_max = run_config.s_grid_cap_multiple * numeraire_range
        if len(crossings) > 0:
            s_max = min(s_max, run_config.s_grid_margin * np.max(crossings))
        s_max = s_max if s_max > 0.0 else numeraire_range
        s_grid = np.linspace(-s_max, s_max, run_config.s_grid_count)
    outside_share = float(np.mean(crossings > np.min(np.abs(s_grid[[0, -1]])))) if len(crossings) > 0 else 0.0
    if outside_share > 0.0:
        logger.warning(
            f"{outside_share:.2%} of predicted band crossings lie outside of the s-grid "
            f"[{s_grid[0]:.6g}, {s_grid[-1]:.6g}]; interval measures are truncated."
        )

    # Obtain y-grid.
    if run_config.y_grid is not None:
        y_grid = np.array(run_config.y_grid)
    else:
        grid_spec = GridSpec(run_config.a_grid_count, s_grid, [0.0])
        surface = get_quantile_surface(dataset, grid, counterfactual, grid_spec)
        normalized_measures = np.concatenate([
            get_interval_measure_matrix(surface, *get_band(tau), grid_spec).ravel()
            / get_normalization(tau, run_config.normalization)
            for tau in run_config.taus
        ])
        y_grid = np.unique(np.quantile(normalized_measures, run_config.y_grid_quantiles))
        if len(y_grid) < len(run_config.y_grid_quantiles):
            logger.warning(
                f"Tied y-grid quantiles; using {len(y_grid)} instead of {len(run_config.y_grid_quantiles)} points."
            )
    logger.debug(f"Obtained a-grid of {len(a_grid)} points, s-grid of {len(s_grid)} points and y-grid {y_grid}.")

    return GridSpec(run_config.a_grid_count, s_grid, y_grid)


def estimate_curves(
        dataset: ev1test.data_interface.Dataset,
        run_config: ev1test.config.RunConfig,
        grid_spec: GridSpec = None,
        counterfactual: CounterfactualSpec = None
) -> (ev1test.quantile_regression.CoefficientGrid, GridSpec, typing.Dict[float, CdfCurve]):
    """Run the estimation pipeline: quantile regression grid, evaluation grids (if not given) and G_tau curves."""

    design = ev1test.data_interface.build_design(dataset)
    outcomes = ev1test.quantile_regression.transform_outcome(
        dataset.get_probabilities(),
        run_config.outcome_transform,
        run_config.winsorize_bounds
    )
    grid = ev1test.quantile_regression.fit_qr_grid(
        design,
        outcomes,
        run_config.quantile_levels,
        outcome_transform=run_config.outcome_transform
    )
    if grid_spec is None:
        grid_spec = get_grid_spec(dataset, grid, run_config, counterfactual)
    curves = estimate_G_curves(dataset, grid, run_config.taus, counterfactual, grid_spec, run_config.normalization)

    return grid, grid_spec, curves


def get_bootstrap_replicate(
        dataset: ev1test.data_interface.Dataset,
        run_config: ev1test.config.RunConfig,
        grid_spec: GridSpec,
        counterfactual: CounterfactualSpec,
        random_stream: ev1test.utils.RandomStream,
        replicate_index: int
) -> typing.Optional[typing.Dict[float, np.ndarray]]:
    """Obtain the G_tau curve values of one block bootstrap replicate, or None if the replicate fails."""

    try:
        resampled_dataset = ev1test.data_interface.block_resample(
            dataset,
            random_stream.get_generator(replicate_index)
        )
        _, _, curves = estimate_curves(resampled_dataset, run_config, grid_spec, counterfactual)
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exception:
        logger.warning(f"Bootstrap replicate {replicate_index} failed: {exception}")
        return None

    return {tau: curve.values for tau, curve in curves.items()}


def get_bootstrap_replicates(
        dataset: ev1test.data_interface.Dataset,
        run_config: ev1test.config.RunConfig,
        grid_spec: GridSpec,
        counterfactual: CounterfactualSpec,
        bootstrap_count: int,
        random_stream: ev1test.utils.RandomStream
) -> typing.List[typing.Dict[float, np.ndarray]]:
    """Obtain G_tau curve values of all successful bootstrap replicates, in replicate order.

    - Replicates run in parallel if `run_config.threads` is greater than 1.
    - Raises `RuntimeError` if the share of failed replicates exceeds `run_config.replicate_failure_limit`.
    """

    ev1test.utils.log_time(f'{bootstrap_count} bootstrap replicates', log_level='info', logger_object=logger)
    replicates = ev1test.utils.starmap(
        get_bootstrap_replicate,
        [(dataset, run_config, grid_spec, counterfactual, random_stream, index) for index in range(bootstrap_count)],
        threads=run_config.threads
    )
    ev1test.utils.log_time(f'{bootstrap_count} bootstrap replicates', log_level='info', logger_object=logger)

    # Check failure rate.
    failure_count = sum(replicate is None for replicate in replicates)
    if failure_count > run_config.replicate_failure_limit * bootstrap_count:
        raise RuntimeError(
            f"{failure_count} of {bootstrap_count} bootstrap replicates failed, "
            f"exceeding the limit of {run_config.replicate_failure_limit:.0%}."
        )
    if failure_count > 0:
        logger.warning(f"{failure_count} of {bootstrap_count} bootstrap replicates failed and are skipped.")

    return [replicate for replicate in replicates if replicate is not None]


def get_bands(
        curve: CdfCurve,
        replicate_values: np.ndarray,
        level: float = 0.90
) -> (CdfCurve, CdfCurve):
    """Obtain pointwise percentile bands from replicate curve values (replicates x y-grid).

    - Bands are widened to contain the point estimate and monotonized by running maximum, such that each band is
      a valid distribution function.
    """

    lower = np.quantile(replicate_values, (1.0 - level) / 2.0, axis=0)
    upper = np.quantile(replicate_values, (1.0 + level) / 2.0, axis=0)
    lower = np.maximum.accumulate(np.clip(np.minimum(lower, curve.values), 0.0, 1.0))
    upper = np.maximum.accumulate(np.clip(np.maximum(upper, curve.values), 0.0, 1.0))

    return (
        CdfCurve(curve.y, lower, curve.tau, curve.normalization),
        CdfCurve(curve.y, upper, curve.tau, curve.normalization)
    )


def bootstrap_bands(
        dataset: ev1test.data_interface.Dataset,
        bootstrap_count: int,
        tau: float,
        counterfactual: CounterfactualSpec,
        grid_spec: GridSpec,
        level: float,
        random_stream: ev1test.utils.RandomStream,
        run_config: ev1test.config.RunConfig
) -> (CdfCurve, CdfCurve):
    """Obtain pointwise percentile bands of G_tau from block bootstrap re-estimates of the full pipeline."""

    if bootstrap_count < 2:
        raise ValueError(f"Bootstrap bands require at least 2 replicates: {bootstrap_count}")
    curve = estimate_curves(dataset, run_config, grid_spec, counterfactual)[2].get(float(tau))
    if curve is None:
        raise ValueError(f"Quantile level {tau} is not in the configured taus: {run_config.taus}")
    replicates = get_bootstrap_replicates(
        dataset, run_config, grid_spec, counterfactual, bootstrap_count, random_stream
    )

    return get_bands(curve, np.vstack([replicate[float(tau)] for replicate in replicates]), level)


class IQRResults(ev1test.utils.ResultsBase):
    """IQR estimation results."""

    coefficient_grid: ev1test.quantile_regression.CoefficientGrid
    grid_spec: GridSpec
    curves: typing.Dict[float, CdfCurve]
    lower_bands: typing.Dict[float, CdfCurve]
    upper_bands: typing.Dict[float, CdfCurve]
    run: dict

    def get_curves_dataframe(self) -> pd.DataFrame:
        """Obtain curves in long format with columns `tau, y, value, lower, upper`."""

        return pd.concat([
            pd.DataFrame(dict(
                tau=tau,
                y=curve.y,
                value=curve.values,
                lower=self.lower_bands[tau].values if tau in (self.lower_bands or dict()) else np.nan,
                upper=self.upper_bands[tau].values if tau in (self.upper_bands or dict()) else np.nan
            ))
            for tau, curve in sorted(self.curves.items())
        ], ignore_index=True)

    def save(
            self,
            results_path: str
    ):
        """Store `curves.csv`, `curves.json`, `coefficients.csv` and `run.json` at given results path."""

        curves = self.get_curves_dataframe()
        curves.to_csv(os.path.join(results_path, 'curves.csv'), index=False)
        ev1test.utils.write_json(
            os.path.join(results_path, 'curves.json'),
            dict(
                grid_spec=self.grid_spec.to_dict(),
                curves=[
                    dict(
                        self.curves[tau].to_dict(),
                        lower=self.lower_bands[tau].values if tau in (self.lower_bands or dict()) else None,
                        upper=self.upper_bands[tau].values if tau in (self.upper_bands or dict()) else None
                    )
                    for tau in sorted(self.curves.keys())
                ]
            )
        )
        self.coefficient_grid.to_csv(os.path.join(results_path, 'coefficients.csv'))
        ev1test.utils.write_json(os.path.join(results_path, 'run.json'), self.run)
