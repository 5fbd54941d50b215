"""Data generating process (DGP) models for synthetic stated-choice data with known IQR distributions.

- The ex ante return of respondent `i` in a scenario is S = dy + dx @ slopes_i + nu, where nu / sigma_i follows
  the standardized distribution of the uncertainty family. The stated probability is P = Pr(S >= 0).
- Since scenarios are drawn independently of (sigma_i, slopes_i), the oracle IQR distribution G_tau only depends on
  the distribution of sigma_i and the family's standardized interquantile range.
"""

import json
import os
import typing

import numpy as np
import pandas as pd
import scipy.stats

import ev1test.config
import ev1test.data_interface
import ev1test.iqr_models
import ev1test.moment_tests
import ev1test.utils

logger = ev1test.config.get_logger(__name__)


class UncertaintyFamily(ev1test.utils.ObjectBase):
    """Uncertainty family base object, defined by the standardized distribution of nu / sigma with median zero."""

    name: str
    distribution: typing.Any
    is_symmetric: bool

    def cdf(
            self,
            values: typing.Union[float, np.ndarray]
    ) -> typing.Union[float, np.ndarray]:

        return self.distribution.cdf(values)

    def ppf(
            self,
            quantiles: typing.Union[float, np.ndarray]
    ) -> typing.Union[float, np.ndarray]:

        return self.distribution.ppf(quantiles)

    def get_standardized_iqr(
            self,
            tau: float
    ) -> float:
        """Obtain |Q(tau) - Q(0.5)| of the standardized distribution."""

        ev1test.iqr_models.validate_tau(tau)
        return float(np.abs(self.ppf(tau) - self.ppf(0.5)))

    def get_probability(
            self,
            mean_return: np.ndarray,
            sigma: np.ndarray
    ) -> np.ndarray:
        """Obtain stated probabilities Pr(S >= 0) = 1 - F(-mean_return / sigma)."""

        return 1.0 - self.cdf(-np.asarray(mean_return) / np.asarray(sigma))


class LogisticFamily(UncertaintyFamily):
    """Logistic uncertainty, i.e. the difference of two EV1 variables, with scale parameter sigma."""

    def __init__(self):

        self.name = 'logistic'
        self.distribution = scipy.stats.logistic()
        self.is_symmetric = True

    def get_standardized_iqr(
            self,
            tau: float
    ) -> float:

        return ev1test.iqr_models.ell(tau)


class NormalFamily(UncertaintyFamily):
    """Normal uncertainty with standard deviation sigma."""

    def __init__(self):

        self.name = 'normal'
        self.distribution = scipy.stats.norm()
        self.is_symmetric = True

    def get_standardized_iqr(
            self,
            tau: float
    ) -> float:

        return ev1test.iqr_models.ell_normal(tau)


class UniformFamily(UncertaintyFamily):
    """Uniform uncertainty on [-sigma, sigma]."""

    def __init__(self):

        self.name = 'uniform'
        self.distribution = scipy.stats.uniform(loc=-1.0, scale=2.0)
        self.is_symmetric = True


class ShiftedExponentialFamily(UncertaintyFamily):
    """Exponential uncertainty with scale sigma, shifted to median zero."""

    def __init__(self):

        self.name = 'shifted_exponential'
        self.distribution = scipy.stats.expon(loc=-np.log(2.0))
        self.is_symmetric = False


def make_uncertainty_family(
        name: str
) -> UncertaintyFamily:
    """Factory method for uncertainty families."""

    name = name.replace('-', '_')
    if name == 'logistic':
        return LogisticFamily()
    elif name == 'normal':
        return NormalFamily()
    elif name == 'uniform':
        return UniformFamily()
    elif name == 'shifted_exponential':
        return ShiftedExponentialFamily()
    else:
        raise ValueError(
            f"Unknown uncertainty family: '{name}'. Choices: logistic, normal, uniform, shifted-exponential."
        )


class ParameterDistribution(ev1test.utils.ObjectBase):
    """Distribution of a respondent-level parameter.

    - `degenerate`: `{"kind": "degenerate", "value": c}`
    - `uniform`: `{"kind": "uniform", "lo": lo, "hi": hi}`
    - `two_point`: `{"kind": "two-point", "values": [c1, c2], "p": p}`, with probability `p` for `c1`.
    - `normal`: `{"kind": "normal", "mean": m, "sd": s}`
    """

    kind: str
    parameters: dict

    def __init__(
            self,
            kind: str,
            **parameters
    ):

        kind = kind.replace('-', '_')
        if kind == 'degenerate':
            parameters = dict(value=float(parameters['value']))
        elif kind == 'uniform':
            parameters = dict(lo=float(parameters['lo']), hi=float(parameters['hi']))
            if not (parameters['lo'] <= parameters['hi']):
                raise ValueError(f"Invalid uniform distribution bounds: {parameters}")
        elif kind == 'two_point':
            parameters = dict(values=[float(value) for value in parameters['values']], p=float(parameters['p']))
            if (len(parameters['values']) != 2) or not (0.0 <= parameters['p'] <= 1.0):
                raise ValueError(f"Invalid two-point distribution: {parameters}")
        elif kind == 'normal':
            parameters = dict(mean=float(parameters['mean']), sd=float(parameters['sd']))
            if parameters['sd'] < 0.0:
                raise ValueError(f"Invalid normal distribution standard deviation: {parameters['sd']}")
        else:
            raise ValueError(f"Unknown parameter distribution: '{kind}'. Choices: degenerate, uniform, two-point, normal.")
        self.kind = kind
        self.parameters = parameters

    @classmethod
    def from_dict(
            cls,
            distribution_dict: typing.Union[dict, float, int]
    ):

        if isinstance(distribution_dict, (float, int)):
            return cls('degenerate', value=distribution_dict)
        distribution_dict = dict(distribution_dict)
        if 'kind' not in distribution_dict:
            raise ValueError(f"Missing distribution key 'kind': {distribution_dict}")
        try:
            return cls(distribution_dict.pop('kind'), **distribution_dict)
        except KeyError as exception:
            raise ValueError(f"Missing distribution parameter: {exception}") from exception

    def to_dict(self) -> dict:

        return dict(kind=self.kind.replace('_', '-'), **self.parameters)

    def get_support(self) -> (float, float):

        if self.kind == 'degenerate':
            return self.parameters['value'], self.parameters['value']
        elif self.kind == 'uniform':
            return self.parameters['lo'], self.parameters['hi']
        elif self.kind == 'two_point':
            return min(self.parameters['values']), max(self.parameters['values'])
        else:
            return -np.inf, np.inf

    def get_breakpoints(self) -> np.ndarray:
        """Obtain the points at which the distribution function has jumps or kinks."""

        if self.kind == 'degenerate':
            return np.array([self.parameters['value']])
        elif self.kind == 'uniform':
            return np.array([self.parameters['lo'], self.parameters['hi']])
        elif self.kind == 'two_point':
            return np.array(self.parameters['values'])
        else:
            return np.array([])

    def sample(
            self,
            random_generator: np.random.Generator,
            size: int
    ) -> np.ndarray:

        if self.kind == 'degenerate':
            return np.full(size, self.parameters['value'])
        elif self.kind == 'uniform':
            return random_generator.uniform(self.parameters['lo'], self.parameters['hi'], size)
        elif self.kind == 'two_point':
            return np.where(
                random_generator.random(size) < self.parameters['p'],
                self.parameters['values'][0],
                self.parameters['values'][1]
            )
        else:
            return random_generator.normal(self.parameters['mean'], self.parameters['sd'], size)

    def cdf(
            self,
            values: typing.Union[float, np.ndarray]
    ) -> np.ndarray:
        """Obtain the right-continuous distribution function."""

        values = np.asarray(values, dtype=float)
        if self.kind == 'degenerate':
            return (values >= self.parameters['value']).astype(float)
        elif self.kind == 'uniform':
            lo, hi = self.parameters['lo'], self.parameters['hi']
            if lo == hi:
                return (values >= lo).astype(float)
            return scipy.stats.uniform(loc=lo, scale=hi - lo).cdf(values)
        elif self.kind == 'two_point':
            (value_1, value_2), p = self.parameters['values'], self.parameters['p']
            return p * (values >= value_1) + (1.0 - p) * (values >= value_2)
        else:
            if self.parameters['sd'] == 0.0:
                return (values >= self.parameters['mean']).astype(float)
            return scipy.stats.norm(self.parameters['mean'], self.parameters['sd']).cdf(values)


class DgpSpec(ev1test.utils.ObjectBase):
    """Data generating process specification.

    - `attribute_design` maps `numeraire` and each attribute name to the [lo, hi] range of the uniformly drawn
      scenario differences. Scenario draws are independent of all respondent-level draws.
    - `slope_dist` maps each attribute name to the distribution of the respondent's slope, i.e. the valuation of
      the attribute in numeraire units.
    """

    n_respondents: int
    scenarios_per_respondent: int
    family: str
    sigma_dist: ParameterDistribution
    slope_dist: typing.Dict[str, ParameterDistribution]
    attribute_design: typing.Dict[str, typing.List[float]]
    numeraire_transform: str
    numeraire_base: float
    rounding: str
    seed: int

    rounding_steps = {'none': None, 'nearest-0.05': 0.05, 'nearest-0.10': 0.10}

    def __init__(
            self,
            n_respondents: int = 500,
            scenarios_per_respondent: int = 5,
            family: str = 'logistic',
            sigma_dist: typing.Union[dict, ParameterDistribution] = None,
            slope_dist: typing.Dict[str, typing.Union[dict, ParameterDistribution]] = None,
            attribute_design: typing.Dict[str, typing.List[float]] = None,
            numeraire_transform: str = 'level',
            numeraire_base: float = 100.0,
            rounding: str = 'none',
            seed: int = 0
    ):

        # Obtain parameter distributions.
        sigma_dist = dict(kind='degenerate', value=1.0) if sigma_dist is None else sigma_dist
        slope_dist = dict() if slope_dist is None else slope_dist
        self.sigma_dist = (
            sigma_dist if isinstance(sigma_dist, ParameterDistribution)
            else ParameterDistribution.from_dict(sigma_dist)
        )
        self.slope_dist = {
            str(attribute): (
                distribution if isinstance(distribution, ParameterDistribution)
                else ParameterDistribution.from_dict(distribution)
            )
            for attribute, distribution in slope_dist.items()
        }

        # Obtain attribute design, defaulting to [-3, 3] for the numeraire and [-2, 2] for attributes.
        attribute_design = dict() if attribute_design is None else dict(attribute_design)
        self.attribute_design = {
            'numeraire': [float(value) for value in attribute_design.pop('numeraire', [-3.0, 3.0])],
            **{
                attribute: [float(value) for value in attribute_design.pop(attribute, [-2.0, 2.0])]
                for attribute in self.slope_dist
            }
        }
        if len(attribute_design) > 0:
            raise ValueError(f"Attribute design for attribute(s) without slope distribution: {list(attribute_design)}")

        self.n_respondents = int(n_respondents)
        self.scenarios_per_respondent = int(scenarios_per_respondent)
        self.family = make_uncertainty_family(family).name
        self.numeraire_transform = numeraire_transform
        self.numeraire_base = float(numeraire_base)
        self.rounding = {'0.05': 'nearest-0.05', '0.10': 'nearest-0.10', '0.1': 'nearest-0.10'}.get(
            str(rounding), str(rounding)
        )
        self.seed = int(seed)
        self.validate()

    def validate(self):

        if self.n_respondents < 1 or self.scenarios_per_respondent < 1:
            raise ValueError("DGP requires at least 1 respondent and 1 scenario per respondent.")
        if self.sigma_dist.kind == 'normal' or not (self.sigma_dist.get_support()[0] > 0.0):
            raise ValueError(f"Scale distribution must have strictly positive support: {self.sigma_dist.to_dict()}")
        for attribute, (lo, hi) in self.attribute_design.items():
            if not (lo <= hi):
                raise ValueError(f"Invalid design range for '{attribute}': [{lo}, {hi}]")
        if self.numeraire_transform not in ['level', 'log']:
            raise ValueError(f"Invalid numeraire transform: '{self.numeraire_transform}'")
        if self.numeraire_transform == 'level' and self.numeraire_base + self.attribute_design['numeraire'][0] <= 0.0:
            logger.debug("Numeraire levels may be nonpositive; the level transform does not require positive values.")
        if self.numeraire_transform == 'log' and not (self.numeraire_base > 0.0):
            raise ValueError(f"Numeraire base must be positive under log transform: {self.numeraire_base}")
        if self.rounding not in self.rounding_steps:
            raise ValueError(f"Invalid rounding: '{self.rounding}'. Choices: {', '.join(self.rounding_steps)}.")
        if self.seed < 0:
            raise ValueError(f"Invalid seed: {self.seed}")

    @classmethod
    def from_dict(
            cls,
            spec_dict: dict
    ):

        unknown_keys = set(spec_dict) - set(typing.get_type_hints(cls))
        if len(unknown_keys) > 0:
            raise ValueError(f"Unknown DGP specification key(s): {sorted(unknown_keys)}")

        return cls(**spec_dict)

    @classmethod
    def from_json(
            cls,
            path: str
    ):

        if not os.path.isfile(path):
            raise FileNotFoundError(f"DGP specification file not found: {path}")
        with open(path, 'r', encoding='utf-8') as file:
            try:
                spec_dict = json.load(file)
            except json.JSONDecodeError as exception:
                raise ValueError(f"Invalid DGP specification JSON '{path}': {exception}") from exception

        return cls.from_dict(spec_dict)

    def to_dict(
            self,
            include_seed: bool = True
    ) -> dict:

        spec_dict = dict(
            n_respondents=self.n_respondents,
            scenarios_per_respondent=self.scenarios_per_respondent,
            family=self.family.replace('_', '-'),
            sigma_dist=self.sigma_dist.to_dict(),
            slope_dist={attribute: distribution.to_dict() for attribute, distribution in self.slope_dist.items()},
            attribute_design=self.attribute_design,
            numeraire_transform=self.numeraire_transform,
            numeraire_base=self.numeraire_base,
            rounding=self.rounding
        )
        if include_seed:
            spec_dict['seed'] = self.seed

        return spec_dict

    def get_schema(self) -> ev1test.data_interface.DatasetSchema:

        return ev1test.data_interface.DatasetSchema(list(self.slope_dist), self.numeraire_transform, 1)


def simulate(
        spec: DgpSpec
) -> ev1test.data_interface.Dataset:
    """Generate a synthetic stated-choice dataset.

    - Respondent-level scale and slopes are drawn once per respondent and kept for all its scenarios.
    - Scenario differences are drawn uniformly on the design ranges. Option 0 holds the numeraire base and zero
      attributes, option 1 holds the differences on top.
    """

    random_generator = ev1test.utils.RandomStream(spec.seed, 'data_generation').get_generator(0)
    family = make_uncertainty_family(spec.family)
    shape = (spec.n_respondents, spec.scenarios_per_respondent)

    # Draw respondent-level parameters.
    sigma = spec.sigma_dist.sample(random_generator, spec.n_respondents)
    slopes = {
        attribute: distribution.sample(random_generator, spec.n_respondents)
        for attribute, distribution in spec.slope_dist.items()
    }

    # Draw scenarios.
    numeraire_differences = random_generator.uniform(*spec.attribute_design['numeraire'], shape)
    attribute_differences = {
        attribute: random_generator.uniform(*spec.attribute_design[attribute], shape)
        for attribute in spec.slope_dist
    }

    # Obtain stated probabilities.
    mean_return = numeraire_differences.copy()
    for attribute in spec.slope_dist:
        mean_return += attribute_differences[attribute] * slopes[attribute][:, np.newaxis]
    prob = family.get_probability(mean_return, sigma[:, np.newaxis])
    step = DgpSpec.rounding_steps[spec.rounding]
    if step is not None:
        prob = np.clip(np.round(np.round(prob / step) * step, 10), 0.0, 1.0)

    # Obtain observations.
    if spec.numeraire_transform == 'log':
        numeraire1 = spec.numeraire_base * np.exp(numeraire_differences)
    else:
        numeraire1 = spec.numeraire_base + numeraire_differences
    observations = pd.DataFrame(dict(
        respondent_id=np.repeat([f'{index + 1}' for index in range(spec.n_respondents)], spec.scenarios_per_respondent),
        scenario_id=np.tile([f'{index + 1}' for index in range(spec.scenarios_per_respondent)], spec.n_respondents),
        prob=prob.ravel(),
        num1=numeraire1.ravel(),
        num0=np.full(prob.size, spec.numeraire_base)
    ))
    for attribute in spec.slope_dist:
        observations[f'x1_{attribute}'] = attribute_differences[attribute].ravel()
        observations[f'x0_{attribute}'] = 0.0

    return ev1test.data_interface.Dataset(observations, spec.get_schema())


def get_oracle_scale_ratio(
        spec: DgpSpec,
        tau: float,
        normalization: str = 'logistic'
) -> float:
    """Obtain the ratio of normalization to standardized IQR, such that G_tau(y) = F_sigma(y * ratio)."""

    family = make_uncertainty_family(spec.family)
    standardized_iqr = family.get_standardized_iqr(tau)
    if not (standardized_iqr > 0.0):
        raise ValueError(f"Unsupported family / tau combination: {spec.family}, {tau}")

    return ev1test.iqr_models.get_normalization(tau, normalization) / standardized_iqr


def oracle_G(
        spec: DgpSpec,
        tau: float,
        y: typing.Union[float, np.ndarray],
        normalization: str = 'logistic'
) -> typing.Union[float, np.ndarray]:
    """Obtain the analytic IQR distribution G_tau(y) = Pr(sigma * IQR_0(tau) <= y * normalization(tau)),
    where IQR_0 is the standardized interquantile range of the family.
    """

    values = spec.sigma_dist.cdf(np.asarray(y, dtype=float) * get_oracle_scale_ratio(spec, tau, normalization))

    return float(values) if np.ndim(y) == 0 else values


def oracle_symmetry_gap(
        spec: DgpSpec,
        tau: float,
        normalization: str = 'logistic'
) -> float:
    """Obtain sup_y |G_tau(y) - G_(1 - tau)(y)|.

    - The supremum is evaluated at the breakpoints of both curves, just below them and on a fine grid.
    """

    if not (0.0 < tau < 0.5):
        raise ValueError(f"Symmetry gap requires tau in (0, 0.5): {tau}")
    ratio_lower = get_oracle_scale_ratio(spec, tau, normalization)
    ratio_upper = get_oracle_scale_ratio(spec, 1.0 - tau, normalization)
    if np.isclose(ratio_lower, ratio_upper, rtol=1e-12, atol=0.0):
        return 0.0

    # Obtain evaluation points.
    breakpoints = spec.sigma_dist.get_breakpoints()
    y_breakpoints = np.concatenate([breakpoints / ratio_lower, breakpoints / ratio_upper])
    y_max = 2.0 * spec.sigma_dist.get_support()[1] / min(ratio_lower, ratio_upper)
    y_values = np.concatenate([
        y_breakpoints,
        y_breakpoints * (1.0 - 1e-12),
        np.linspace(0.0, y_max, 10001)
    ])
    y_values = y_values[y_values >= 0.0]

    return float(np.max(np.abs(
        oracle_G(spec, tau, y_values, normalization) - oracle_G(spec, 1.0 - tau, y_values, normalization)
    )))


def get_oracle(
        spec: DgpSpec,
        taus: typing.Iterable[float],
        y_grid: np.ndarray = None,
        normalization: str = 'logistic'
) -> dict:
    """Obtain the oracle document with G_tau at the y-grid knots and the symmetry gaps.

    - The oracle depends on the specification without its seed.
    """

    taus = sorted(float(tau) for tau in taus)
    if y_grid is None:
        support = spec.sigma_dist.get_support()
        y_max = 2.0 * support[1] / min(get_oracle_scale_ratio(spec, tau, normalization) for tau in taus)
        y_grid = np.linspace(0.0, y_max, 51)
    y_grid = np.asarray(y_grid, dtype=float)

    return dict(
        version=ev1test.config.get_version(),
        spec=spec.to_dict(include_seed=False),
        normalization=normalization,
        taus=taus,
        y=y_grid,
        G={str(tau): oracle_G(spec, tau, y_grid, normalization) for tau in taus},
        symmetry_gaps={str(tau): oracle_symmetry_gap(spec, tau, normalization) for tau in taus if tau < 0.5}
    )


class MonteCarloResults(ev1test.utils.ResultsBase):
    """Monte Carlo results, i.e. the test decisions per replication and the rejection rates per null and alpha."""

    decisions: pd.DataFrame
    rejection_rates: pd.DataFrame
    summary: dict


def get_monte_carlo_seed(
        seed: int,
        replication_index: int
) -> int:
    """Obtain the data generation / test seed of one Monte Carlo replication."""

    random_generator = ev1test.utils.RandomStream(seed, 'monte_carlo').get_generator(replication_index)
    return int(random_generator.integers(0, 2 ** 31 - 1))


def run_monte_carlo(
        spec: DgpSpec,
        run_config: ev1test.config.RunConfig,
        replications: int = None,
        null_kinds: typing.Iterable[str] = ('ev1', 'symmetry')
) -> MonteCarloResults:
    """Run the size / power experiment: simulate a dataset per replication, run the tests and record decisions.

    - Replication `r` uses the seed `get_monte_carlo_seed(run_config.seed, r)` for both the data and the test.
    - Replications whose test fails with `RuntimeError` are recorded with decision "Failed" and excluded from the
      rejection rates.
    """

    replications = ev1test.config.config['tests']['monte_carlo_replications'] if replications is None else replications
    if replications < 1:
        raise ValueError(f"Invalid Monte Carlo replication count: {replications}")
    null_kinds = list(null_kinds)
    for null_kind in null_kinds:
        ev1test.moment_tests.get_tau_pairs(run_config.taus, null_kind)

    # Run replications.
    records = []
    ev1test.utils.log_time(f'{replications} Monte Carlo replications', log_level='info', logger_object=logger)
    for replication_index in range(replications):
        seed = get_monte_carlo_seed(run_config.seed, replication_index)
        dataset = simulate(DgpSpec.from_dict(dict(spec.to_dict(include_seed=False), seed=seed)))
        for null_kind in null_kinds:
            test_config = ev1test.config.RunConfig(**dict(vars(run_config), null_kind=null_kind, seed=seed))
            record = dict(replication=replication_index, seed=seed, null_kind=null_kind)
            try:
                report = ev1test.moment_tests.run_test(dataset, test_config)
            except RuntimeError as exception:
                logger.warning(f"Monte Carlo replication {replication_index} ({null_kind}) failed: {exception}")
                record.update(statistic=np.nan, decision='Failed')
                record.update({f'rejected_{alpha:g}': np.nan for alpha in run_config.alphas})
            else:
                record.update(statistic=report.statistic, decision=report.decision)
                record.update({
                    f'rejected_{alpha:g}': float(report.statistic > report.critical_values[alpha])
                    for alpha in run_config.alphas
                })
            records.append(record)
    ev1test.utils.log_time(f'{replications} Monte Carlo replications', log_level='info', logger_object=logger)
    decisions = pd.DataFrame(records)

    # Obtain rejection rates over successful replications.
    rejection_rates = (
        decisions.loc[decisions.loc[:, 'decision'] != 'Failed', :]
        .groupby('null_kind', sort=False)
        .agg(**{f'alpha_{alpha:g}': (f'rejected_{alpha:g}', 'mean') for alpha in run_config.alphas})
        .reindex(null_kinds)
    )
    rejection_rates['replications'] = (
        decisions.loc[decisions.loc[:, 'decision'] != 'Failed', 'null_kind'].value_counts().reindex(null_kinds)
        .fillna(0).astype(int)
    )
    for null_kind in null_kinds:
        logger.info(
            f"{ev1test.moment_tests.get_null_label(null_kind)} rejection rates for n_respondents = "
            f"{spec.n_respondents}: {rejection_rates.loc[null_kind, :].to_dict()}"
        )

    return MonteCarloResults(
        decisions=decisions,
        rejection_rates=rejection_rates,
        summary=dict(
            version=ev1test.config.get_version(),
            spec=spec.to_dict(include_seed=False),
            n_respondents=spec.n_respondents,
            replications=replications,
            seed=run_config.seed,
            config=run_config.get_echo(),
            rejection_rates={
                null_kind: rejection_rates.loc[null_kind, :].to_dict() for null_kind in null_kinds
            }
        )
    )
