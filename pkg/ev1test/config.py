"""Configuration module."""

import logging
import multiprocessing
import os
import typing

import numpy as np
import pandas as pd
import yaml


def get_config() -> dict:
    """Load the configuration dictionary.

    - Default configuration is obtained from `./ev1test/config_default.yml`.
    - Custom configuration is obtained from `./config.yml`, if existing, and overwrites the respective default
      configuration.
    - `./` denotes the repository base directory.
    """

    # Load default configuration values.
    with open(os.path.join(base_path, 'ev1test', 'config_default.yml'), 'r') as file:
        default_config = yaml.safe_load(file)

    # Load custom configuration values, overwriting the default values.
    custom_config = None
    if os.path.isfile(os.path.join(base_path, 'config.yml')):
        with open(os.path.join(base_path, 'config.yml'), 'r') as file:
            custom_config = yaml.safe_load(file)

    # Define utility function to recursively merge default and custom configuration.
    def merge_config(default_values: dict, custom_values: dict) -> dict:
        full_values = default_values.copy()
        full_values.update({
            key: (
                merge_config(default_values[key], custom_values[key])
                if (
                    (key in default_values)
                    and isinstance(default_values[key], dict)
                    and isinstance(custom_values[key], dict)
                )
                else custom_values[key]
            )
            for key in custom_values.keys()
        })
        return full_values

    # Obtain complete configuration.
    if custom_config is not None:
        complete_config = merge_config(default_config, custom_config)
    else:
        complete_config = default_config

    # Define utility function to obtain full paths.
    # - Replace `./` with the base path and normalize paths.
    def get_full_path(path: str) -> str:
        return os.path.normpath(path.replace('./', base_path + os.path.sep))

    # Obtain full paths.
    complete_config['paths']['data'] = get_full_path(complete_config['paths']['data'])
    complete_config['paths']['results'] = get_full_path(complete_config['paths']['results'])

    return complete_config


def get_logger(
        name: str
) -> logging.Logger:
    """Generate logger with given name."""

    logger = logging.getLogger(name)

    # Avoid duplicate handlers when modules are reloaded.
    if not logger.handlers:
        logging_handler = logging.StreamHandler()
        logging_handler.setFormatter(logging.Formatter(config['logs']['format']))
        logger.addHandler(logging_handler)

    if config['logs']['level'] == 'debug':
        logger.setLevel(logging.DEBUG)
    elif config['logs']['level'] == 'info':
        logger.setLevel(logging.INFO)
    elif config['logs']['level'] == 'warn':
        logger.setLevel(logging.WARN)
    elif config['logs']['level'] == 'error':
        logger.setLevel(logging.ERROR)
    else:
        raise ValueError(f"Unknown logging level: {config['logs']['level']}")

    return logger


def get_version() -> str:
    """Obtain the package version string."""

    import ev1test
    return ev1test.__version__


def get_parallel_pool(
        processes: int = None
) -> multiprocessing.Pool:
    """Create multiprocessing / parallel computing pool.

    - Number of parallel processes / workers defaults to number of CPU threads as returned by `os.cpu_count()`.
    """

    # Obtain multiprocessing pool.
    import ray.util.multiprocessing
    return ray.util.multiprocessing.Pool(processes=processes)


class RunConfig(object):
    """Run configuration, i.e. the fully resolved set of parameters of one command-line / API run.

    - Every parameter except the data / schema paths has a default, which is taken from the `estimation` and
      `testing` sections of the configuration dictionary.
    - Keyword arguments which are None are ignored, such that unset command-line flags fall back to the defaults.
    - The echo, i.e. the JSON-serializable dictionary embedded into output files, excludes runtime-only
      parameters (`threads`, `output_path`), such that outputs do not depend on them.
    """

    data_path: typing.Optional[str]
    schema_path: typing.Optional[str]
    dgp_path: typing.Optional[str]
    counterfactual_path: typing.Optional[str]
    prob_scale: typing.Optional[int]
    null_kind: typing.Optional[str]
    taus: typing.List[float]
    quantile_levels: typing.List[float]
    outcome_transform: str
    winsorize_bounds: typing.List[float]
    normalization: str
    a_grid_count: int
    s_grid: typing.Optional[typing.List[float]]
    s_grid_count: int
    s_grid_margin: float
    s_grid_cap_multiple: float
    y_grid: typing.Optional[typing.List[float]]
    y_grid_quantiles: typing.List[float]
    bands_bootstrap_count: int
    bands_level: float
    bootstrap_count: int
    bootstrap_count_minimum: int
    simulation_count: int
    simulation_count_minimum: int
    alphas: typing.List[float]
    ridge: float
    ridge_maximum: float
    variance_threshold: float
    rank_tolerance: float
    replicate_failure_limit: float
    seed: int
    threads: int
    output_path: typing.Optional[str]

    runtime_parameters = ('threads', 'output_path')

    def __init__(
            self,
            **kwargs
    ):

        # Set defaults.
        self.data_path = None
        self.schema_path = None
        self.dgp_path = None
        self.counterfactual_path = None
        self.prob_scale = None
        self.null_kind = None
        self.s_grid = None
        self.y_grid = None
        self.seed = 0
        self.threads = os.cpu_count() if config['multiprocessing']['run_parallel'] else 1
        self.output_path = None
        for section in ['estimation', 'testing']:
            for key, value in config[section].items():
                setattr(self, key, value)

        # Set keyword arguments, ignoring unset values.
        for key, value in kwargs.items():
            if key not in typing.get_type_hints(type(self)):
                raise ValueError(f"Unknown run configuration parameter: '{key}'")
            if value is not None:
                setattr(self, key, value)

        # Normalize value types for a stable echo.
        self.taus = sorted(float(tau) for tau in self.taus)
        self.quantile_levels = [float(level) for level in self.quantile_levels]
        self.winsorize_bounds = [float(bound) for bound in self.winsorize_bounds]
        self.y_grid_quantiles = [float(value) for value in self.y_grid_quantiles]
        self.alphas = sorted((float(alpha) for alpha in self.alphas), reverse=True)
        if self.s_grid is not None:
            self.s_grid = [float(value) for value in self.s_grid]
        if self.y_grid is not None:
            self.y_grid = [float(value) for value in self.y_grid]
        for key in ['a_grid_count', 's_grid_count', 'bands_bootstrap_count', 'bootstrap_count',
                    'simulation_count', 'seed', 'threads']:
            setattr(self, key, int(getattr(self, key)))
        for key in ['s_grid_margin', 's_grid_cap_multiple', 'bands_level', 'ridge', 'ridge_maximum',
                    'variance_threshold', 'rank_tolerance', 'replicate_failure_limit']:
            setattr(self, key, float(getattr(self, key)))

        self.validate()

    def validate(self):
        """Check parameter domains, raising `ValueError` for invalid values."""

        if len(self.taus) == 0:
            raise ValueError("At least one tau is required.")
        for tau in self.taus:
            if not (0.0 < tau < 1.0) or (tau == 0.5):
                raise ValueError(f"Invalid tau: {tau}. Taus must be in (0, 1) and different from 0.5.")
        if len(set(self.taus)) != len(self.taus):
            raise ValueError(f"Duplicate taus: {self.taus}")
        if not (
                all(0.0 < level < 1.0 for level in self.quantile_levels)
                and np.all(np.diff(self.quantile_levels) > 0.0)
        ):
            raise ValueError(f"Quantile levels must be strictly increasing in (0, 1): {self.quantile_levels}")
        if self.outcome_transform not in ['log_odds', 'direct']:
            raise ValueError(f"Invalid outcome transform: '{self.outcome_transform}'")
        if not (0.0 <= self.winsorize_bounds[0] < self.winsorize_bounds[1] <= 1.0):
            raise ValueError(f"Invalid winsorize bounds: {self.winsorize_bounds}")
        if self.normalization not in ['logistic', 'normal', 'none']:
            raise ValueError(f"Invalid normalization: '{self.normalization}'")
        if self.prob_scale not in [None, 1, 100]:
            raise ValueError(f"Invalid probability scale: {self.prob_scale}. Choices: 1, 100.")
        if self.null_kind not in [None, 'ev1', 'symmetry']:
            raise ValueError(f"Invalid null hypothesis: '{self.null_kind}'. Choices: 'ev1', 'symmetry'.")
        if self.a_grid_count < 1:
            raise ValueError(f"Invalid a-grid point count: {self.a_grid_count}")
        if self.s_grid_count < 2:
            raise ValueError(f"Invalid s-grid point count: {self.s_grid_count}")
        if self.s_grid is not None:
            if not ((len(self.s_grid) == 3) and (self.s_grid[0] < self.s_grid[1]) and (self.s_grid[2] > 0.0)):
                raise ValueError(f"Invalid s-grid '{self.s_grid}'. Expected: lo,hi,step with lo < hi and step > 0.")
        if self.y_grid is not None:
            if not ((len(self.y_grid) > 0) and np.all(np.diff(self.y_grid) > 0.0) and (min(self.y_grid) >= 0.0)):
                raise ValueError(f"The y-grid must be nonnegative and strictly increasing: {self.y_grid}")
        if not all(0.0 < value < 1.0 for value in self.y_grid_quantiles):
            raise ValueError(f"Invalid y-grid quantiles: {self.y_grid_quantiles}")
        if not (0.0 < self.bands_level < 1.0):
            raise ValueError(f"Invalid band coverage level: {self.bands_level}")
        if self.bands_bootstrap_count < 0:
            raise ValueError(f"Invalid band bootstrap count: {self.bands_bootstrap_count}")
        if not all(0.0 < alpha < 1.0 for alpha in self.alphas):
            raise ValueError(f"Invalid significance levels: {self.alphas}")
        if self.ridge < 0.0:
            raise ValueError(f"Invalid ridge: {self.ridge}. Ridge must be nonnegative.")
        if not (0.0 <= self.rank_tolerance < 1.0):
            raise ValueError(f"Invalid rank tolerance: {self.rank_tolerance}. Expected a value in [0, 1).")
        if self.seed < 0:
            raise ValueError(f"Invalid seed: {self.seed}. Seed must be nonnegative.")
        if self.threads < 1:
            raise ValueError(f"Invalid thread count: {self.threads}")

    def get_echo(self) -> dict:
        """Obtain the configuration echo for output files."""

        return {
            key: value
            for key, value in sorted(vars(self).items())
            if key not in self.runtime_parameters
        }


# Obtain repository base directory path.
base_path = os.path.dirname(os.path.dirname(os.path.normpath(__file__)))

# Obtain configuration dictionary.
config = get_config()

# Instantiate multiprocessing / parallel computing pool.
# - Pool is instantiated as None and only created on first use in `ev1test.utils.starmap`.
parallel_pool = None
parallel_pool_processes = None

# Modify pandas default settings.
# - These settings ensure that that data frames are always printed in full, rather than cropped.
pd.set_option('display.max_rows', None)
pd.set_option('display.max_columns', None)
pd.set_option('display.width', int(9e9))
pd.set_option('display.max_colwidth', None)
