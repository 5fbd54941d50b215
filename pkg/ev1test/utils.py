"""Utility functions module."""

import contextlib
import copy
import datetime
import functools
import itertools
import json
import logging
import os
import re
import time
import typing

import numpy as np
import pandas as pd

import ev1test.config

logger = ev1test.config.get_logger(__name__)

# Instantiate dictionary for execution time logging.
log_times = dict()


class ObjectBase(object):
    """Object base class with declared attributes.

    - Attributes are declared with type annotations in the class body, e.g. `levels: np.ndarray`. Setting an
      undeclared attribute logs a warning.
    - The string representation lists all attribute values.
    """

    def __setattr__(
            self,
            attribute_name,
            value
    ):

        # Assert that attribute name is valid.
        # - Valid attributes are those which are defined as class attributes with type declaration.
        if not (attribute_name in typing.get_type_hints(type(self))):
            logger.warning(
                f"Setting undefined attribute '{attribute_name}'. "
                f"Please ensure that the attribute has been defined by a type declaration in the class definition."
            )

        # Set attribute value.
        super().__setattr__(attribute_name, value)

    def __repr__(self) -> str:
        """Obtain string representation."""

        # Obtain attributes.
        attributes = vars(self)

        # Obtain representation string.
        repr_string = ""
        for attribute_name in attributes:
            repr_string += f"{attribute_name} = \n{attributes[attribute_name]}\n"

        return repr_string

    def copy(self):
        """Obtain a deep copy."""

        return copy.deepcopy(self)


class ResultsBase(ObjectBase):
    """Results object base class."""

    def __init__(
            self,
            **kwargs
    ):

        # Set all keyword arguments as attributes.
        for attribute_name in kwargs:
            self.__setattr__(attribute_name, kwargs[attribute_name])

    def __getitem__(self, key):
        # Enable dict-like attribute getting.
        return self.__getattribute__(key)

    def __setitem__(self, key, value):
        # Enable dict-like attribute setting.
        self.__setattr__(key, value)

    def save(
            self,
            results_path: str
    ):
        """Store results to files at given results path.

        - Each results variable / attribute will be stored as separate file with the attribute name as file name.
        - Pandas Series / DataFrame are stored to CSV.
        - Dictionaries are stored to JSON with sorted keys.
        - Other attributes are not stored.
        """

        # Obtain results attributes.
        attributes = vars(self)

        # Store each attribute to a separate file.
        for attribute_name in attributes:
            if type(attributes[attribute_name]) in (pd.Series, pd.DataFrame):
                attributes[attribute_name].to_csv(os.path.join(results_path, f'{attribute_name}.csv'))
            elif type(attributes[attribute_name]) is dict:
                write_json(os.path.join(results_path, f'{attribute_name}.json'), attributes[attribute_name])
            else:
                logger.debug(f"Skipping results attribute without file representation: {attribute_name}")


class RandomStream(object):
    """Counter-based random stream, which derives independent generators for numbered tasks from a master seed.

    - The generator for task `index` of stream `name` is seeded by `SeedSequence(seed, spawn_key=(stream, index))`,
      such that task results do not depend on the number of tasks or on the order / process of execution.
    """

    stream_ids = {
        'bootstrap_covariance': 0,
        'simulation': 1,
        'bootstrap_bands': 2,
        'data_generation': 3,
        'monte_carlo': 4
    }

    seed: int
    name: str

    def __init__(
            self,
            seed: int,
            name: str
    ):

        if name not in self.stream_ids:
            raise ValueError(f"Unknown random stream: '{name}'")
        self.seed = int(seed)
        self.name = name

    def get_generator(
            self,
            index: int = 0
    ) -> np.random.Generator:
        """Obtain the generator for the task with given index."""

        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_ids[self.name], int(index)))
        )


def starmap(
        function: typing.Callable,
        argument_sequence: typing.Iterable[tuple],
        keyword_arguments: dict = None,
        threads: int = None
) -> list:
    """Execute a function for a sequence of argument tuples, sequentially or on a `ray` multiprocessing pool.

    - If `threads` is greater than 1 or, when not given, configuration parameter `run_parallel` is set to True,
      execution is passed to `starmap` of the multiprocessing pool, hence running the function calls in parallel.
    - Otherwise, execution is passed to `itertools.starmap`, which is the non-parallel equivalent.
    - Results are returned in the order of the argument sequence in both cases.
    """

    # Apply keyword arguments.
    if keyword_arguments is not None:
        function_partial = functools.partial(function, **keyword_arguments)
    else:
        function_partial = function

    # Obtain parallel execution flag.
    if threads is None:
        run_parallel = ev1test.config.config['multiprocessing']['run_parallel']
        threads = os.cpu_count() if run_parallel else 1
    else:
        run_parallel = threads > 1

    if run_parallel:
        # If `run_parallel`, use starmap from multiprocessing pool for parallel execution.
        if (ev1test.config.parallel_pool is None) or (ev1test.config.parallel_pool_processes != threads):
            # Setup parallel pool on first execution or when the number of processes changes.
            log_time('parallel pool setup')
            ev1test.config.parallel_pool = ev1test.config.get_parallel_pool(threads)
            ev1test.config.parallel_pool_processes = threads
            log_time('parallel pool setup')
        results = ev1test.config.parallel_pool.starmap(function_partial, list(argument_sequence))
    else:
        # If not `run_parallel`, use `itertools.starmap` for non-parallel / sequential execution.
        results = list(itertools.starmap(function_partial, argument_sequence))

    return results


def log_time(
        label: str,
        log_level: str = 'debug',
        logger_object: logging.Logger = logger
):
    """Log the start of a labelled step on the first call and its duration on the second call with the same label.

    - Messages are "Starting <label>." and "Completed <label> in <duration> seconds.", at `debug` or `info` level.
    """

    time_now = time.time()

    if log_level == 'debug':
        logger_handle = lambda message: logger_object.debug(message)
    elif log_level == 'info':
        logger_handle = lambda message: logger_object.info(message)
    else:
        raise ValueError(f"Invalid log level: '{log_level}'")

    if label in log_times.keys():
        logger_handle(f"Completed {label} in {(time_now - log_times.pop(label)):.6f} seconds.")
    else:
        log_times[label] = time_now
        logger_handle(f"Starting {label}.")


@contextlib.contextmanager
def run_stage(
        name: str,
        logger_object: logging.Logger = logger
):
    """Context manager for one pipeline stage, which logs its duration and wraps failures with the stage name.

    - Any exception raised in the stage is re-raised as `RuntimeError` chained to the original exception.
    """

    log_time(name, log_level='info', logger_object=logger_object)
    try:
        yield
    except Exception as exception:
        log_times.pop(name, None)
        raise RuntimeError(f"Stage '{name}' failed: {exception}") from exception
    log_time(name, log_level='info', logger_object=logger_object)


def get_serializable(value):
    """Convert numpy / pandas values to plain Python values for JSON output."""

    if isinstance(value, dict):
        return {str(key): get_serializable(item) for key, item in value.items()}
    elif isinstance(value, (list, tuple)):
        return [get_serializable(item) for item in value]
    elif isinstance(value, np.ndarray):
        return get_serializable(value.tolist())
    elif isinstance(value, (pd.Series, pd.Index)):
        return get_serializable(value.to_list())
    elif isinstance(value, np.generic):
        return value.item()
    else:
        return value


def write_json(
        path: str,
        content: dict
):
    """Write JSON file with sorted keys, such that identical content yields identical bytes."""

    with open(path, 'w', encoding='utf-8', newline='\n') as file:
        json.dump(get_serializable(content), file, indent=2, sort_keys=True, allow_nan=True)
        file.write('\n')


def get_timestamp(
        time: datetime.datetime = None
) -> str:
    """Generate formatted timestamp string, e.g., for saving results with timestamp."""

    if time is None:
        time = datetime.datetime.now()

    return time.strftime('%Y-%m-%d_%H-%M-%S')


def get_results_path(
        base_name: str
) -> str:
    """Generate results path, which is a new subfolder in the results directory. The subfolder name is
    assembled of the given base name, e.g. the command name, and current timestamp. The new subfolder is
    created on disk along with this.

    - Non-alphanumeric characters are removed from `base_name`.
    - If is a script file path or `__file__` is passed as `base_name`, the base file name without extension
      will be taken as base name.
    """

    # Preprocess results path name components, including removing non-alphanumeric characters.
    base_name = re.sub(r'\W-+', '', os.path.basename(os.path.splitext(base_name)[0])) + '_'
    timestamp = get_timestamp()

    # Obtain results path.
    results_path = os.path.join(ev1test.config.config['paths']['results'], f'{base_name}{timestamp}')

    # Instantiate results directory.
    os.makedirs(results_path, exist_ok=True)

    return results_path
