"""Application programming interface (API) module for high-level interface functions to run the ev1test pipeline."""

import os
import typing

import ev1test.config
import ev1test.data_interface
import ev1test.dgp_models
import ev1test.iqr_models
import ev1test.moment_tests
import ev1test.utils

logger = ev1test.config.get_logger(__name__)


def load_run_dataset(
        run_config: ev1test.config.RunConfig
) -> ev1test.data_interface.Dataset:
    """Load the dataset of the given run configuration."""

    if run_config.data_path is None:
        raise ValueError("Missing data path.")
    if run_config.schema_path is None:
        raise ValueError("Missing schema path.")

    return ev1test.data_interface.load_dataset(run_config.data_path, run_config.schema_path, run_config.prob_scale)


def load_run_counterfactual(
        run_config: ev1test.config.RunConfig,
        dataset: ev1test.data_interface.Dataset
) -> typing.Optional[ev1test.iqr_models.CounterfactualSpec]:

    if run_config.counterfactual_path is None:
        return None

    return ev1test.iqr_models.CounterfactualSpec.from_json(run_config.counterfactual_path, dataset.schema)


def get_run_results_path(
        run_config: ev1test.config.RunConfig,
        base_name: str
) -> str:

    if run_config.output_path is not None:
        os.makedirs(run_config.output_path, exist_ok=True)
        return run_config.output_path

    return ev1test.utils.get_results_path(base_name)


def run_validate(
        run_config: ev1test.config.RunConfig,
        print_results: bool = False,
        store_results: bool = True,
        results_path: str = None
) -> dict:
    """Load the dataset and obtain the validation diagnostics."""

    # Obtain dataset and diagnostics.
    dataset = load_run_dataset(run_config)
    diagnostics = ev1test.data_interface.get_dataset_diagnostics(dataset)
    report = dict(
        version=ev1test.config.get_version(),
        config=run_config.get_echo(),
        schema=dataset.schema.to_dict(),
        diagnostics=diagnostics
    )
    logger.info(
        f"Validated {diagnostics['observation_count']} observations of {diagnostics['respondent_count']} respondents."
    )

    # Print results.
    if print_results:
        print(f"respondents = {diagnostics['respondent_count']}")
        print(f"observations = {diagnostics['observation_count']}")
        for warning in diagnostics['warnings']:
            print(f"warning: {warning}")

    # Store results as JSON.
    if store_results:
        results_path = get_run_results_path(run_config, 'validate') if results_path is None else results_path
        ev1test.utils.write_json(os.path.join(results_path, 'validation.json'), report)
        logger.info(f"Results are stored in: {results_path}")

    return report


def run_estimate_iqr(
        run_config: ev1test.config.RunConfig,
        print_results: bool = False,
        store_results: bool = True,
        results_path: str = None
) -> ev1test.iqr_models.IQRResults:
    """Estimate the IQR distribution curves G_tau and, if `run_config.bands_bootstrap_count` is positive, their
    pointwise bootstrap bands.
    """

    # Obtain dataset.
    dataset = load_run_dataset(run_config)
    dataset.validate(min_respondents=2)
    counterfactual = load_run_counterfactual(run_config, dataset)

    # Obtain curves.
    with ev1test.utils.run_stage('curve estimation', logger_object=logger):
        grid, grid_spec, curves = ev1test.iqr_models.estimate_curves(dataset, run_config, None, counterfactual)

    # Obtain bands.
    lower_bands = dict()
    upper_bands = dict()
    if run_config.bands_bootstrap_count > 0:
        with ev1test.utils.run_stage('bootstrap bands', logger_object=logger):
            replicates = ev1test.iqr_models.get_bootstrap_replicates(
                dataset,
                run_config,
                grid_spec,
                counterfactual,
                run_config.bands_bootstrap_count,
                ev1test.utils.RandomStream(run_config.seed, 'bootstrap_bands')
            )
            if len(replicates) < 2:
                raise ValueError(f"Bootstrap bands require at least 2 successful replicates: {len(replicates)}")
            for tau, curve in curves.items():
                lower_bands[tau], upper_bands[tau] = ev1test.iqr_models.get_bands(
                    curve,
                    [replicate[tau] for replicate in replicates],
                    run_config.bands_level
                )

    results = ev1test.iqr_models.IQRResults(
        coefficient_grid=grid,
        grid_spec=grid_spec,
        curves=curves,
        lower_bands=lower_bands,
        upper_bands=upper_bands,
        run=dict(
            version=ev1test.config.get_version(),
            config=run_config.get_echo(),
            grid_spec=grid_spec.to_dict(),
            dataset=dict(observation_count=len(dataset), respondent_count=len(dataset.respondents))
        )
    )

    # Print results.
    if print_results:
        print(f"curves = \n{results.get_curves_dataframe()}")

    # Store results as CSV / JSON.
    if store_results:
        results_path = get_run_results_path(run_config, 'estimate_iqr') if results_path is None else results_path
        results.save(results_path)
        logger.info(f"Results are stored in: {results_path}")

    return results


def run_test(
        run_config: ev1test.config.RunConfig,
        print_results: bool = False,
        store_results: bool = True,
        results_path: str = None
) -> ev1test.moment_tests.TestReport:
    """Run the moment equality test of the null hypothesis `run_config.null_kind`."""

    # Obtain dataset and test report.
    dataset = load_run_dataset(run_config)
    counterfactual = load_run_counterfactual(run_config, dataset)
    report = ev1test.moment_tests.run_test(dataset, run_config, counterfactual)

    # Print results.
    if print_results:
        print(report.to_text(), end='')

    # Store results as JSON / text.
    if store_results:
        results_path = get_run_results_path(run_config, 'test') if results_path is None else results_path
        report.save(results_path)
        logger.info(f"Results are stored in: {results_path}")

    return report


def run_simulate(
        run_config: ev1test.config.RunConfig,
        seed: int = None,
        print_results: bool = False,
        store_results: bool = True,
        results_path: str = None
) -> (ev1test.data_interface.Dataset, dict):
    """Generate a synthetic dataset from the DGP specification at `run_config.dgp_path` along with its oracle.

    - If `seed` is given, it overrides the seed of the DGP specification.
    """

    # Obtain DGP specification.
    if run_config.dgp_path is None:
        raise ValueError("Missing DGP specification path.")
    spec = ev1test.dgp_models.DgpSpec.from_json(run_config.dgp_path)
    if seed is not None:
        spec = ev1test.dgp_models.DgpSpec.from_dict(dict(spec.to_dict(), seed=seed))

    # Obtain dataset and oracle.
    dataset = ev1test.dgp_models.simulate(spec)
    oracle = ev1test.dgp_models.get_oracle(spec, run_config.taus, run_config.y_grid, run_config.normalization)

    # Print results.
    if print_results:
        print(f"symmetry_gaps = {oracle['symmetry_gaps']}")

    # Store results as CSV / JSON.
    if store_results:
        results_path = get_run_results_path(run_config, 'simulate') if results_path is None else results_path
        dataset.to_csv(os.path.join(results_path, 'data.csv'))
        dataset.schema.to_json(os.path.join(results_path, 'schema.json'))
        ev1test.utils.write_json(os.path.join(results_path, 'oracle.json'), oracle)
        logger.info(f"Results are stored in: {results_path}")

    return dataset, oracle


def run_monte_carlo(
        run_config: ev1test.config.RunConfig,
        replications: int = None,
        null_kinds: typing.Iterable[str] = ('ev1', 'symmetry'),
        n_respondents: int = None,
        print_results: bool = False,
        store_results: bool = True,
        results_path: str = None
) -> ev1test.dgp_models.MonteCarloResults:
    """Run the Monte Carlo size / power experiment for the DGP specification at `run_config.dgp_path`.

    - If `n_respondents` is given, it overrides the respondent count of the DGP specification.
    """

    # Obtain DGP specification.
    if run_config.dgp_path is None:
        raise ValueError("Missing DGP specification path.")
    spec = ev1test.dgp_models.DgpSpec.from_json(run_config.dgp_path)
    if n_respondents is not None:
        spec = ev1test.dgp_models.DgpSpec.from_dict(dict(spec.to_dict(), n_respondents=n_respondents))

    # Run experiment.
    results = ev1test.dgp_models.run_monte_carlo(spec, run_config, replications, null_kinds)

    # Print results.
    if print_results:
        print(f"rejection_rates = \n{results.rejection_rates}")

    # Store results as CSV / JSON.
    if store_results:
        results_path = get_run_results_path(run_config, 'monte_carlo') if results_path is None else results_path
        results.save(results_path)
        logger.info(f"Results are stored in: {results_path}")

    return results
