"""Command line interface module.

- Commands: `validate`, `estimate-iqr`, `test --null ev1|symmetry`, `simulate` and `monte-carlo`.
- Exit codes: 0 if the command completed (regardless of the test decision), 2 for invalid input or configuration,
  1 for internal failures.
"""

import argparse
import os
import sys
import typing

import ev1test.api
import ev1test.config

logger = ev1test.config.get_logger(__name__)


def get_float_list(
        text: str
) -> typing.List[float]:
    """Parse comma-separated list of numbers."""

    try:
        return [float(value) for value in text.split(',') if value.strip() != '']
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected comma-separated numbers: '{text}'")


def get_parser() -> argparse.ArgumentParser:

    parser = argparse.ArgumentParser(
        prog='ev1test',
        description="Estimate the distribution of resolvable uncertainty from stated-choice probabilities and test "
                    "the EV1 and symmetry hypotheses."
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {ev1test.config.get_version()}")
    subparsers = parser.add_subparsers(dest='command', required=True)

    # Define shared arguments.
    data_parser = argparse.ArgumentParser(add_help=False)
    data_parser.add_argument('--data', type=str, help="Stated-choice CSV file.")
    data_parser.add_argument('--schema', type=str, help="Schema JSON file.")
    data_parser.add_argument(
        '--prob-scale', type=int, choices=[1, 100], help="Probability scale, overriding the schema."
    )
    estimation_parser = argparse.ArgumentParser(add_help=False)
    estimation_parser.add_argument('--taus', type=get_float_list, help="Quantile levels, e.g. 0.1,0.25,0.75,0.9.")
    estimation_parser.add_argument('--ygrid', type=get_float_list, help="Explicit y-grid.")
    estimation_parser.add_argument('--agrid', type=int, help="Number of a-grid midpoints.")
    estimation_parser.add_argument('--sgrid', type=get_float_list, help="Explicit s-grid as lo,hi,step.")
    estimation_parser.add_argument(
        '--normalization', type=str, choices=['logistic', 'normal'], help="Normalization of the IQR."
    )
    estimation_parser.add_argument(
        '--direct', action='store_true', help="Regress probabilities directly instead of their log-odds."
    )
    estimation_parser.add_argument('--counterfactual', type=str, help="Counterfactual scenario JSON file.")
    estimation_parser.add_argument('--bootstrap', type=int, help="Number of block bootstrap replicates B.")
    estimation_parser.add_argument('--seed', type=int, help="Random seed.")
    estimation_parser.add_argument(
        '--threads', type=int, default=os.cpu_count(), help="Number of parallel workers. Default: all cores."
    )
    estimation_parser.add_argument('--out', type=str, help="Output directory.")
    testing_parser = argparse.ArgumentParser(add_help=False)
    testing_parser.add_argument('--sims', type=int, help="Number of Gaussian draws L.")
    testing_parser.add_argument('--alpha', type=get_float_list, help="Significance levels, e.g. 0.10,0.05,0.01.")
    testing_parser.add_argument('--ridge', type=float, help="Relative ridge of the covariance.")

    # Define commands.
    subparsers.add_parser(
        'validate', parents=[data_parser], help="Validate a dataset and report diagnostics."
    ).add_argument('--out', type=str, help="Output directory.")
    estimate_parser = subparsers.add_parser(
        'estimate-iqr', parents=[data_parser, estimation_parser], help="Estimate the IQR distribution curves."
    )
    estimate_parser.add_argument('--bands-level', type=float, help="Coverage level of the bootstrap bands.")
    test_parser = subparsers.add_parser(
        'test', parents=[data_parser, estimation_parser, testing_parser], help="Run the moment equality test."
    )
    test_parser.add_argument('--null', type=str, choices=['ev1', 'symmetry'], default='ev1')
    simulate_parser = subparsers.add_parser('simulate', help="Generate a synthetic dataset and its oracle.")
    simulate_parser.add_argument('--dgp', type=str, required=True, help="DGP specification JSON file.")
    simulate_parser.add_argument('--taus', type=get_float_list, help="Quantile levels of the oracle.")
    simulate_parser.add_argument('--ygrid', type=get_float_list, help="y-grid of the oracle.")
    simulate_parser.add_argument('--normalization', type=str, choices=['logistic', 'normal'])
    simulate_parser.add_argument('--seed', type=int, help="Random seed, overriding the DGP specification.")
    simulate_parser.add_argument('--out', type=str, help="Output directory.")
    monte_carlo_parser = subparsers.add_parser(
        'monte-carlo', parents=[estimation_parser, testing_parser], help="Run the Monte Carlo size / power experiment."
    )
    monte_carlo_parser.add_argument('--dgp', type=str, required=True, help="DGP specification JSON file.")
    monte_carlo_parser.add_argument('--replications', type=int, help="Number of Monte Carlo replications.")
    monte_carlo_parser.add_argument('--n-respondents', type=int, help="Respondent count, overriding the DGP.")
    monte_carlo_parser.add_argument(
        '--null', type=str, choices=['ev1', 'symmetry', 'both'], default='both'
    )

    return parser


def get_run_config(
        arguments: argparse.Namespace
) -> ev1test.config.RunConfig:
    """Obtain run configuration from parsed arguments. Unset arguments fall back to the configuration defaults."""

    def get_argument(name: str):
        return getattr(arguments, name, None)

    bootstrap_key = 'bands_bootstrap_count' if arguments.command == 'estimate-iqr' else 'bootstrap_count'
    null_kind = get_argument('null')

    return ev1test.config.RunConfig(
        data_path=get_argument('data'),
        schema_path=get_argument('schema'),
        dgp_path=get_argument('dgp'),
        counterfactual_path=get_argument('counterfactual'),
        prob_scale=get_argument('prob_scale'),
        null_kind=null_kind if null_kind in ['ev1', 'symmetry'] else None,
        taus=get_argument('taus'),
        y_grid=get_argument('ygrid'),
        a_grid_count=get_argument('agrid'),
        s_grid=get_argument('sgrid'),
        normalization=get_argument('normalization'),
        outcome_transform='direct' if get_argument('direct') else None,
        bands_level=get_argument('bands_level'),
        simulation_count=get_argument('sims'),
        alphas=get_argument('alpha'),
        ridge=get_argument('ridge'),
        seed=get_argument('seed') if arguments.command != 'simulate' else None,
        threads=get_argument('threads'),
        output_path=get_argument('out'),
        **{bootstrap_key: get_argument('bootstrap')}
    )


def main(
        argv: typing.List[str] = None
) -> int:
    """Run the command line interface and return the exit code."""

    arguments = get_parser().parse_args(argv)

    try:
        run_config = get_run_config(arguments)
        if arguments.command == 'validate':
            ev1test.api.run_validate(run_config, print_results=True)
        elif arguments.command == 'estimate-iqr':
            ev1test.api.run_estimate_iqr(run_config, print_results=True)
        elif arguments.command == 'test':
            ev1test.api.run_test(run_config, print_results=True)
        elif arguments.command == 'simulate':
            ev1test.api.run_simulate(run_config, seed=arguments.seed, print_results=True)
        elif arguments.command == 'monte-carlo':
            ev1test.api.run_monte_carlo(
                run_config,
                replications=arguments.replications,
                null_kinds=['ev1', 'symmetry'] if arguments.null == 'both' else [arguments.null],
                n_respondents=arguments.n_respondents,
                print_results=True
            )
    except (ValueError, FileNotFoundError, KeyError) as exception:
        logger.error(f"Invalid input: {exception}")
        return 2
    except Exception as exception:
        logger.error(f"Failed: {exception}", exc_info=True)
        return 1

    return 0


if __name__ == '__main__':
    sys.exit(main())
