"""Quantile regression module.

- Linear quantile regressions minimize the check loss rho_tau(u) = u * (tau - 1{u < 0}) and are solved as linear
  programs, either with `scipy.optimize.linprog` (HiGHS) or with CVXPY, depending on the `optimization` settings.
- Coefficient grids collect the fits over a grid of quantile levels and interpolate linearly between them.
"""

import typing

import cvxpy as cp
import numpy as np
import pandas as pd
import scipy.optimize
import scipy.sparse as sp
import scipy.special

import ev1test.config
import ev1test.data_interface
import ev1test.utils

logger = ev1test.config.get_logger(__name__)


class QuantileRegressionFit(ev1test.utils.ObjectBase):
    """Quantile regression fit result."""

    tau: float
    beta: np.ndarray
    objective: float
    iterations: int
    converged: bool

    def __init__(
            self,
            tau: float,
            beta: np.ndarray,
            objective: float,
            iterations: int,
            converged: bool
    ):

        self.tau = float(tau)
        self.beta = np.asarray(beta, dtype=float)
        self.objective = float(objective)
        self.iterations = int(iterations)
        self.converged = bool(converged)


QrFit = QuantileRegressionFit


class CoefficientGrid(ev1test.utils.ObjectBase):
    """Quantile regression coefficients over a grid of quantile levels.

    - Row `k` of `coefs` is the coefficient vector at `levels[k]`.
    - `outcome_transform` records what was regressed: `log_odds` of the probability or the probability (`direct`).
    """

    levels: np.ndarray
    coefs: np.ndarray
    columns: typing.List[str]
    numeraire_coord: int
    outcome_transform: str
    converged: np.ndarray

    def __init__(
            self,
            levels: typing.Iterable[float],
            coefs: np.ndarray,
            columns: typing.List[str],
            numeraire_coord: int = 1,
            outcome_transform: str = 'log_odds',
            converged: np.ndarray = None
    ):

        levels = np.array(levels, dtype=float)
        coefs = np.array(coefs, dtype=float, ndmin=2)
        validate_levels(levels)
        if coefs.shape != (len(levels), len(columns)):
            raise ValueError(
                f"Coefficient matrix shape {coefs.shape} does not match {len(levels)} levels "
                f"and {len(columns)} columns."
            )
        if outcome_transform not in ['log_odds', 'direct']:
            raise ValueError(f"Invalid outcome transform: '{outcome_transform}'")
        levels.flags.writeable = False
        coefs.flags.writeable = False
        self.levels = levels
        self.coefs = coefs
        self.columns = list(columns)
        self.numeraire_coord = int(numeraire_coord)
        self.outcome_transform = outcome_transform
        self.converged = (
            np.ones(len(levels), dtype=bool) if converged is None else np.array(converged, dtype=bool)
        )

    def to_dataframe(self) -> pd.DataFrame:

        return pd.DataFrame(
            self.coefs,
            index=pd.Index(self.levels, name='level'),
            columns=[f'coef_{column}' for column in self.columns]
        )

    def to_csv(
            self,
            path: str
    ):

        self.to_dataframe().to_csv(path)

    @classmethod
    def from_csv(
            cls,
            path: str,
            outcome_transform: str = 'log_odds',
            numeraire_column: str = 'numeraire'
    ):

        coefficients = pd.read_csv(path, index_col='level')
        columns = [column.replace('coef_', '', 1) for column in coefficients.columns]
        if numeraire_column not in columns:
            raise ValueError(f"Missing numeraire coefficient column 'coef_{numeraire_column}' in: {path}")

        return cls(
            coefficients.index.to_numpy(float),
            coefficients.to_numpy(float),
            columns,
            numeraire_coord=columns.index(numeraire_column),
            outcome_transform=outcome_transform
        )


def validate_levels(
        levels: np.ndarray
):

    if len(levels) == 0:
        raise ValueError("Quantile level grid is empty.")
    if not np.all((levels > 0.0) & (levels < 1.0)):
        raise ValueError(f"Quantile levels must be in (0, 1): {levels.tolist()}")
    if not np.all(np.diff(levels) > 0.0):
        raise ValueError(f"Quantile levels must be strictly increasing without duplicates: {levels.tolist()}")


def get_regressor_matrix(
        rows: typing.Union[ev1test.data_interface.DesignMatrix, typing.Iterable[ev1test.data_interface.DesignRow], np.ndarray]
) -> np.ndarray:

    if isinstance(rows, ev1test.data_interface.DesignMatrix):
        return rows.regressors
    elif isinstance(rows, np.ndarray):
        return np.array(rows, dtype=float, ndmin=2)
    else:
        return np.array([row.regressors for row in rows], dtype=float, ndmin=2)


def get_check_loss(
        residuals: np.ndarray,
        tau: float
) -> float:
    """Obtain the check loss sum of rho_tau(u) = u * (tau - 1{u < 0}) over the given residuals."""

    residuals = np.asarray(residuals, dtype=float)
    return float(np.sum(residuals * (tau - (residuals < 0.0))))


def get_collinear_columns(
        regressors: np.ndarray,
        columns: typing.List[str] = None
) -> typing.List[str]:
    """Obtain the columns which are linear combinations of the preceding columns."""

    columns = [f'column_{index}' for index in range(regressors.shape[1])] if columns is None else columns
    collinear_columns = []
    independent_columns = []
    for column_index in range(regressors.shape[1]):
        candidate_columns = independent_columns + [column_index]
        if np.linalg.matrix_rank(regressors[:, candidate_columns]) == len(candidate_columns):
            independent_columns = candidate_columns
        else:
            collinear_columns.append(columns[column_index])

    return collinear_columns


def transform_outcome(
        prob: np.ndarray,
        outcome_transform: str = 'log_odds',
        winsorize_bounds: typing.Tuple[float, float] = (0.01, 0.99)
) -> np.ndarray:
    """Obtain regression outcomes from stated probabilities.

    - `log_odds`: probabilities are winsorized into `winsorize_bounds` and mapped to log(p / (1 - p)).
    - `direct`: probabilities are regressed as they are.
    """

    prob = np.asarray(prob, dtype=float)
    if outcome_transform == 'log_odds':
        return scipy.special.logit(np.clip(prob, winsorize_bounds[0], winsorize_bounds[1]))
    elif outcome_transform == 'direct':
        return prob.copy()
    else:
        raise ValueError(f"Invalid outcome transform: '{outcome_transform}'")


def get_link_value(
        prob: typing.Union[float, np.ndarray],
        outcome_transform: str
) -> typing.Union[float, np.ndarray]:
    """Map probabilities in (0, 1) to the scale of the linear prediction."""

    if outcome_transform == 'log_odds':
        return scipy.special.logit(prob)
    else:
        return prob


def get_probability(
        linear_prediction: typing.Union[float, np.ndarray],
        outcome_transform: str
) -> typing.Union[float, np.ndarray]:
    """Map linear predictions back to the probability scale, by inverse log-odds or by clamping to [0, 1]."""

    if outcome_transform == 'log_odds':
        return scipy.special.expit(linear_prediction)
    else:
        return np.clip(linear_prediction, 0.0, 1.0)


def fit_qr(
        rows: typing.Union[ev1test.data_interface.DesignMatrix, typing.Iterable[ev1test.data_interface.DesignRow], np.ndarray],
        outcomes: np.ndarray,
        tau: float,
        columns: typing.List[str] = None
) -> QuantileRegressionFit:
    """Fit linear quantile regression of the outcomes on the design rows at given quantile level.

    - Rank-deficient designs raise `ValueError` naming the collinear columns.
    - If all outcomes are equal, the intercept is set to that value and all slopes to zero.
    - If the solver does not reach optimality, the fit is returned with `converged = False`.
    """

    # Obtain regression data.
    regressors = get_regressor_matrix(rows)
    outcomes = np.asarray(outcomes, dtype=float).ravel()
    if columns is None and isinstance(rows, ev1test.data_interface.DesignMatrix):
        columns = rows.columns
    if regressors.shape[0] == 0:
        raise ValueError("Quantile regression requires at least one design row.")
    if regressors.shape[0] != len(outcomes):
        raise ValueError(f"Design row count {regressors.shape[0]} does not match outcome count {len(outcomes)}.")
    if not (0.0 < tau < 1.0):
        raise ValueError(f"Quantile level must be in (0, 1): {tau}")
    if not np.all(np.isfinite(outcomes)):
        raise ValueError("Quantile regression outcomes must be finite.")

    # Check rank of the design.
    if np.linalg.matrix_rank(regressors) < regressors.shape[1]:
        raise ValueError(
            f"Rank-deficient design; collinear column(s): "
            f"{', '.join(get_collinear_columns(regressors, columns))}"
        )

    # Degenerate outcomes, exactly fitted by the intercept in a unit first column.
    if np.all(outcomes == outcomes[0]) and np.all(regressors[:, 0] == 1.0):
        beta = np.zeros(regressors.shape[1])
        beta[0] = outcomes[0]
        return QuantileRegressionFit(tau, beta, get_check_loss(outcomes - regressors @ beta, tau), 0, True)

    # Solve with the configured solver interface.
    solver_interface = ev1test.config.config['optimization']['solver_interface']
    if solver_interface == 'scipy':
        beta, iterations, converged = solve_linprog(regressors, outcomes, tau)
    elif solver_interface == 'cvxpy':
        beta, iterations, converged = solve_cvxpy(regressors, outcomes, tau)
    else:
        raise ValueError(f"Invalid solver interface: '{solver_interface}'")

    if not converged:
        logger.warning(f"Quantile regression at level {tau} did not converge.")

    return QuantileRegressionFit(
        tau,
        beta,
        get_check_loss(outcomes - regressors @ beta, tau) if np.all(np.isfinite(beta)) else np.nan,
        iterations,
        converged
    )


def solve_linprog(
        regressors: np.ndarray,
        outcomes: np.ndarray,
        tau: float
) -> (np.ndarray, int, bool):
    """Solve the check loss problem as linear program with `scipy.optimize.linprog`.

    - Variables are [beta, u, v] with residual split outcomes - regressors @ beta = u - v and u, v >= 0.
    """

    row_count, column_count = regressors.shape

    # Obtain linear program.
    c_vector = np.concatenate([np.zeros(column_count), np.full(row_count, tau), np.full(row_count, 1.0 - tau)])
    a_matrix = sp.hstack(
        [sp.csr_matrix(regressors), sp.identity(row_count), -sp.identity(row_count)],
        format='csr'
    )
    bounds = np.array([[-np.inf, np.inf]] * column_count + [[0.0, np.inf]] * (2 * row_count))

    # Obtain solver options.
    options = dict(disp=ev1test.config.config['optimization']['show_solver_output'])
    if ev1test.config.config['optimization']['time_limit'] is not None:
        options['time_limit'] = ev1test.config.config['optimization']['time_limit']
    if ev1test.config.config['optimization']['max_iterations'] is not None:
        options['maxiter'] = ev1test.config.config['optimization']['max_iterations']

    # Solve linear program.
    result = scipy.optimize.linprog(
        c_vector,
        A_eq=a_matrix,
        b_eq=outcomes,
        bounds=bounds,
        method=ev1test.config.config['optimization']['solver_name'] or 'highs',
        options=options
    )

    beta = result.x[:column_count] if result.x is not None else np.full(column_count, np.nan)
    iterations = int(getattr(result, 'nit', 0) or 0)

    return beta, iterations, result.status == 0


def solve_cvxpy(
        regressors: np.ndarray,
        outcomes: np.ndarray,
        tau: float
) -> (np.ndarray, int, bool):
    """Solve the check loss problem with CVXPY."""

    # Define problem.
    beta = cp.Variable(regressors.shape[1], name='beta')
    residuals = outcomes - regressors @ beta
    objective = cp.sum(cp.maximum(tau * residuals, (tau - 1.0) * residuals))
    cvxpy_problem = cp.Problem(cp.Minimize(objective))

    # Solve problem.
    solver_name = ev1test.config.config['optimization']['solver_name']
    cvxpy_problem.solve(
        solver=solver_name.upper() if solver_name is not None else None,
        verbose=ev1test.config.config['optimization']['show_solver_output']
    )
    converged = cvxpy_problem.status == cp.OPTIMAL
    iterations = cvxpy_problem.solver_stats.num_iters if cvxpy_problem.solver_stats is not None else 0

    return (
        beta.value if beta.value is not None else np.full(regressors.shape[1], np.nan),
        int(iterations or 0),
        converged
    )


def fit_qr_grid(
        rows: typing.Union[ev1test.data_interface.DesignMatrix, typing.Iterable[ev1test.data_interface.DesignRow], np.ndarray],
        outcomes: np.ndarray,
        levels: typing.Iterable[float],
        outcome_transform: str = 'log_odds',
        columns: typing.List[str] = None,
        numeraire_coord: int = 1
) -> CoefficientGrid:
    """Fit quantile regressions for each level of the given grid."""

    levels = np.array(levels, dtype=float)
    validate_levels(levels)
    if columns is None:
        if isinstance(rows, ev1test.data_interface.DesignMatrix):
            columns = rows.columns
            numeraire_coord = rows.numeraire_coord
        else:
            columns = [f'column_{index}' for index in range(get_regressor_matrix(rows).shape[1])]

    # Fit each level, annotating errors with the level.
    fits = []
    for level in levels:
        try:
            fits.append(fit_qr(rows, outcomes, level, columns))
        except ValueError as exception:
            raise ValueError(f"Quantile regression at level {level} failed: {exception}") from exception

    return CoefficientGrid(
        levels,
        np.vstack([fit.beta for fit in fits]),
        columns,
        numeraire_coord=numeraire_coord,
        outcome_transform=outcome_transform,
        converged=np.array([fit.converged for fit in fits])
    )


def interpolate_coefs(
        grid: CoefficientGrid,
        a: typing.Union[float, np.ndarray]
) -> np.ndarray:
    """Obtain coefficients at quantile level(s) `a` by linear interpolation between the grid levels.

    - Outside of the grid levels, the coefficients of the nearest level are used.
    - For an array of levels, returns one coefficient row per level.
    """

    coefs = np.column_stack([
        np.interp(np.atleast_1d(a), grid.levels, grid.coefs[:, column_index])
        for column_index in range(grid.coefs.shape[1])
    ])

    return coefs[0, :] if np.ndim(a) == 0 else coefs


def predict_quantile(
        grid: CoefficientGrid,
        a: float,
        row: ev1test.data_interface.DesignRow
) -> float:
    """Obtain the probability-scale prediction of the conditional quantile at level `a` for given design row."""

    return float(get_probability(row.regressors @ interpolate_coefs(grid, a), grid.outcome_transform))


def fit_individual_lad(
        dataset: ev1test.data_interface.Dataset,
        winsorize_bounds: typing.Tuple[float, float] = (0.01, 0.99)
) -> pd.DataFrame:
    """Fit least absolute deviation regressions of the log-odds on the design rows for each respondent.

    - Returns one row per respondent with columns `coef_<name>`, `objective` and `status`.
    - Respondents with fewer scenarios than regressors or with rank-deficient designs are flagged and skipped.
    """

    # Obtain design and outcomes.
    design = ev1test.data_interface.build_design(dataset)
    outcomes = transform_outcome(dataset.get_probabilities(), 'log_odds', winsorize_bounds)
    column_count = len(design.columns)

    # Fit each respondent.
    lad_table = pd.DataFrame(
        np.nan,
        index=dataset.respondents,
        columns=[f'coef_{column}' for column in design.columns] + ['objective']
    )
    lad_table['status'] = ''
    for respondent_id, rows in dataset.respondent_index.items():
        if len(rows) < column_count:
            lad_table.at[respondent_id, 'status'] = 'insufficient scenarios'
        elif np.linalg.matrix_rank(design.regressors[rows, :]) < column_count:
            lad_table.at[respondent_id, 'status'] = 'rank deficient'
        else:
            fit = fit_qr(design.regressors[rows, :], outcomes[rows], 0.5, design.columns)
            lad_table.loc[respondent_id, [f'coef_{column}' for column in design.columns]] = fit.beta
            lad_table.at[respondent_id, 'objective'] = fit.objective
            lad_table.at[respondent_id, 'status'] = 'estimated' if fit.converged else 'not converged'

    # Check estimable respondents.
    skipped_count = int(np.sum(lad_table.loc[:, 'status'] != 'estimated'))
    if skipped_count == len(lad_table):
        raise ValueError("No respondent is estimable by individual LAD regression.")
    if skipped_count > 0:
        logger.warning(f"Skipped {skipped_count} of {len(lad_table)} respondents in individual LAD regressions.")

    return lad_table


def fit_pooled_lad(
        dataset: ev1test.data_interface.Dataset,
        winsorize_bounds: typing.Tuple[float, float] = (0.01, 0.99)
) -> QuantileRegressionFit:
    """Fit one least absolute deviation regression of the log-odds on all design rows."""

    design = ev1test.data_interface.build_design(dataset)
    outcomes = transform_outcome(dataset.get_probabilities(), 'log_odds', winsorize_bounds)

    return fit_qr(design, outcomes, 0.5)


def get_individual_wtp(
        lad_table: pd.DataFrame,
        attribute: str,
        numeraire_column: str = 'numeraire'
) -> pd.Series:
    """Obtain the per-respondent willingness to pay for an attribute, i.e. the ratio of the attribute coefficient
    to the numeraire coefficient of the individual LAD fits.
    """

    if f'coef_{attribute}' not in lad_table.columns:
        raise ValueError(f"Unknown attribute: '{attribute}'")
    numeraire_coefs = lad_table.loc[:, f'coef_{numeraire_column}'].replace(0.0, np.nan)

    return (lad_table.loc[:, f'coef_{attribute}'] / numeraire_coefs).rename(f'wtp_{attribute}')
