"""
PPA Cooling - Command Line
==========================

Subcommands:

    simulate   iterate PPA from an initial state and write the trajectory
    asymptote  closed-form limits (optionally with temperatures)
    verify     run a named verification suite
    sweep      limit/bound table over an (n, epsilon) grid

Exit codes: 0 success, 2 verification failure, 3 no convergence,
64 usage error, 73 output could not be written.

Run with: python ppa_cli.py simulate --n 2 --epsilon 0.2
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

import settings
from asymptotics import (
    TemperatureSpec,
    asymptotic_p0,
    effective_temperature,
    lambda1_limit,
    predict,
    qubit1_polarization_limit,
    schulman_upper_bound,
)
from cooling_state import (
    FLOAT,
    RATIONAL,
    ComputationMarginal,
    DiagonalState,
    ResetDistribution,
    as_vector,
    make_reset,
    make_tensor_reset,
    make_thermal_reset,
)
from errors import CoolingError, InvalidParameterError
from ppa_engine import (
    CONVERGENCE_METRICS,
    METRIC_P0,
    PRESET_MAXIMALLY_MIXED,
    RECORD_MODES,
    RECORD_SUMMARY,
    RunConfig,
    run,
)
from result_export import (
    FORMAT_CSV,
    FORMAT_JSON,
    FORMATS,
    build_metadata,
    write_json,
    write_prediction,
    write_table,
    write_trajectory,
)
from verification import SUITE_ALL, SUITES, run_suite

logger = logging.getLogger('ppa_cli')

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 2
EXIT_NOT_CONVERGED = 3
EXIT_USAGE = 64
EXIT_CANT_WRITE = 73


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with EXIT_USAGE instead of 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ============================================================================
# Shared flag handling
# ============================================================================

def build_reset(epsilon=None, reset_probs=None, tensor_qubits=None,
                rational: bool = False) -> ResetDistribution:
    """reset_probs wins over epsilon; tensor_qubits k composes k thermal qubits at epsilon"""
    if reset_probs:
        if not isinstance(reset_probs, str):
            reset_probs = ','.join(str(value) for value in reset_probs)
        return make_reset(reset_probs, rational=rational)
    if rational:
        raise InvalidParameterError("The rational backend needs exact reset entries")
    if epsilon is None:
        raise InvalidParameterError("Give the reset as an epsilon or explicit reset probabilities")
    qubit = make_thermal_reset(epsilon)
    if tensor_qubits is not None:
        if tensor_qubits < 1:
            raise InvalidParameterError(f"Tensor qubit count must be >= 1, got {tensor_qubits}")
        return make_tensor_reset([qubit] * tensor_qubits)
    return qubit


def resolve_reset(args) -> ResetDistribution:
    return build_reset(args.epsilon, args.reset_probs, args.tensor_qubits,
                       rational=getattr(args, 'backend', FLOAT) == RATIONAL)


def _exact_entries(values) -> list:
    return [Fraction(value) if isinstance(value, str) else value for value in values]


def load_initial(path: str, n: int, reset: ResetDistribution, rational: bool):
    """JSON file holding a joint 'probs' vector or a computation 'marginal'"""
    with open(path, encoding='utf-8') as handle:
        payload = json.load(handle)
    if 'probs' in payload:
        return DiagonalState(n, reset.k, as_vector(_exact_entries(payload['probs']), rational=rational))
    if 'marginal' in payload:
        return ComputationMarginal(as_vector(_exact_entries(payload['marginal']), rational=rational))
    raise InvalidParameterError(f"{path}: expected a 'probs' or 'marginal' entry")


def resolve_init(args, reset: ResetDistribution):
    if os.path.isfile(args.init):
        return load_initial(args.init, args.n, reset, args.backend == RATIONAL)
    return args.init


def _add_reset_flags(parser):
    parser.add_argument('--epsilon', type=float, help='polarization of a thermal reset qubit')
    parser.add_argument('--reset-probs', help="explicit reset populations, e.g. '0.6,0.4' or '3/5,2/5'")
    parser.add_argument('--tensor-qubits', type=int, help='compose this many thermal qubits at --epsilon')


def _add_output_flags(parser, default_format=FORMAT_CSV):
    parser.add_argument('--out', default='-', help="output path ('-' for stdout)")
    parser.add_argument('--format', choices=FORMATS, default=default_format)


# ============================================================================
# simulate
# ============================================================================

def cmd_simulate(args) -> int:
    reset = resolve_reset(args)
    config = RunConfig(
        n=args.n,
        reset=reset,
        initial=resolve_init(args, reset),
        max_iterations=args.max_iters,
        convergence_tol=args.tol,
        convergence_window=args.window,
        record_mode=args.record,
        convergence_metric=args.metric,
    )
    trajectory = run(config)
    summary = write_trajectory(trajectory, args.out, args.format, {'seed': args.seed},
                               summary_path=args.summary_out)
    logger.info("converged=%s at t=%s, final p0=%.17g, max deviation from limit %.3g",
                summary['converged'], summary['converged_at'], summary['final_p0'],
                summary['max_deviation_from_asymptote'])
    return EXIT_OK if trajectory.converged else EXIT_NOT_CONVERGED


# ============================================================================
# asymptote
# ============================================================================

def resolve_temperature(args) -> Optional[TemperatureSpec]:
    if args.t_bath is None:
        if args.delta_ratio is not None or args.delta is not None:
            raise InvalidParameterError("Temperature output needs --t-bath")
        return None
    if args.delta_ratio is not None:
        return TemperatureSpec(delta=args.delta_ratio, delta_total=1.0, t_bath=args.t_bath)
    if args.delta is None or args.delta_total is None:
        raise InvalidParameterError("Give --delta-ratio, or both --delta and --delta-total")
    return TemperatureSpec(delta=args.delta, delta_total=args.delta_total, t_bath=args.t_bath)


def cmd_asymptote(args) -> int:
    reset = resolve_reset(args)
    prediction = predict(args.n, reset, resolve_temperature(args))
    write_prediction(prediction, args.out, args.format, {'backend': reset.backend})
    return EXIT_OK


# ============================================================================
# verify
# ============================================================================

def cmd_verify(args) -> int:
    reset = resolve_reset(args) if (args.reset_probs or args.epsilon is not None) else None
    report = run_suite(args.suite, args.trials, args.seed, n=args.n, reset=reset)
    metadata = build_metadata(suite=args.suite, trials=args.trials, seed=args.seed,
                              tolerance=report.tolerance)
    write_json(args.out, metadata, report.to_dict())
    return EXIT_OK if report.passed else EXIT_VERIFICATION_FAILED


# ============================================================================
# sweep
# ============================================================================

@dataclass(frozen=True)
class SweepSpec:
    n_values: Tuple[int, ...]
    epsilon_values: Tuple[float, ...]
    gap_ratios: Tuple[float, ...] = (1.0,)
    output_path: Optional[str] = None
    format: str = FORMAT_CSV

    def __post_init__(self):
        if not self.n_values or not self.epsilon_values or not self.gap_ratios:
            raise InvalidParameterError("Sweep value lists must not be empty")
        if any(n < 1 for n in self.n_values):
            raise InvalidParameterError(f"Qubit counts must be >= 1, got {list(self.n_values)}")
        if any(not eps >= 0 for eps in self.epsilon_values):
            raise InvalidParameterError(f"Polarizations must be >= 0, got {list(self.epsilon_values)}")
        if any(not ratio > 0 for ratio in self.gap_ratios):
            raise InvalidParameterError(f"Gap ratios must be positive, got {list(self.gap_ratios)}")
        if self.format not in FORMATS:
            raise InvalidParameterError(f"Unknown format {self.format!r}")

    def columns(self) -> List[str]:
        return ['n', 'epsilon', 'lambda1_limit', 'schulman_bound', 'p0_infinity', 'polarization_limit'] + \
            [f't_eff_over_tb_r{ratio:g}' for ratio in self.gap_ratios]

    def grid(self) -> List[Tuple[int, float]]:
        return [(n, eps) for n in self.n_values for eps in self.epsilon_values]


def sweep_point(n: int, epsilon: float, gap_ratios: Sequence[float]) -> list:
    reset = make_thermal_reset(epsilon)
    row = [
        n,
        epsilon,
        float(lambda1_limit(n, reset)),
        schulman_upper_bound(n, epsilon),
        float(asymptotic_p0(n, reset)),
        qubit1_polarization_limit(n, reset),
    ]
    # T_B = 1 turns the effective temperature into T_eff / T_B
    row += [effective_temperature(n, TemperatureSpec(ratio, 1.0, 1.0)) for ratio in gap_ratios]
    return row


def run_sweep(spec: SweepSpec, workers: Optional[int] = None) -> List[list]:
    """Grid rows computed concurrently, returned in grid order"""
    grid = spec.grid()
    rows = [None] * len(grid)
    with ThreadPoolExecutor(max_workers=workers or settings.SWEEP_WORKERS) as executor:
        futures = {
            executor.submit(sweep_point, n, eps, spec.gap_ratios): index
            for index, (n, eps) in enumerate(grid)
        }
        for future in as_completed(futures):
            rows[futures[future]] = future.result()
    return rows


def epsilon_grid(start: float, stop: float, step: float) -> List[float]:
    if not step > 0 or stop < start:
        raise InvalidParameterError(f"Bad epsilon range {start}..{stop} step {step}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def cmd_sweep(args) -> int:
    if args.epsilon_range:
        epsilons = epsilon_grid(*args.epsilon_range)
    elif args.epsilon_values:
        epsilons = args.epsilon_values
    else:
        raise InvalidParameterError("Give --epsilon-values or --epsilon-range")
    spec = SweepSpec(
        n_values=tuple(args.n_values),
        epsilon_values=tuple(epsilons),
        gap_ratios=tuple(args.gap_ratios),
        output_path=args.out,
        format=args.format,
    )
    rows = run_sweep(spec, args.workers)
    metadata = build_metadata(n_values=list(spec.n_values), gap_ratios=list(spec.gap_ratios),
                              backend=FLOAT, rows=len(rows))
    write_table(spec.output_path, spec.format, spec.columns(), rows, metadata)
    logger.info("Sweep wrote %d rows to %s", len(rows), spec.output_path)
    return EXIT_OK


# ============================================================================
# Entry point
# ============================================================================

def build_parser() -> CliArgumentParser:
    parser = CliArgumentParser(prog='ppa_cli', description='PPA heat-bath algorithmic cooling simulator')
    parser.add_argument('--log-level', default=None, help=f'logging level (default {settings.LOG_LEVEL})')
    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', help='iterate PPA and write the trajectory')
    simulate.add_argument('--n', type=int, required=True)
    _add_reset_flags(simulate)
    simulate.add_argument('--backend', choices=(FLOAT, RATIONAL), default=FLOAT)
    simulate.add_argument('--init', default=PRESET_MAXIMALLY_MIXED,
                          help="'maximally-mixed', 'thermal(eps_c)' or a JSON file")
    simulate.add_argument('--max-iters', type=int, default=settings.MAX_ITERATIONS)
    simulate.add_argument('--tol', type=float, default=settings.CONVERGENCE_TOL)
    simulate.add_argument('--window', type=int, default=settings.CONVERGENCE_WINDOW)
    simulate.add_argument('--metric', choices=CONVERGENCE_METRICS, default=METRIC_P0)
    simulate.add_argument('--record', choices=RECORD_MODES, default=RECORD_SUMMARY)
    simulate.add_argument('--seed', type=int, default=None)
    _add_output_flags(simulate)
    simulate.add_argument('--summary-out', default=None,
                          help='summary JSON for CSV output (default <out>.summary.json, stderr when --out is -)')
    simulate.set_defaults(handler=cmd_simulate)

    asymptote = commands.add_parser('asymptote', help='closed-form limits')
    asymptote.add_argument('--n', type=int, required=True)
    _add_reset_flags(asymptote)
    asymptote.add_argument('--backend', choices=(FLOAT, RATIONAL), default=FLOAT)
    asymptote.add_argument('--delta-ratio', type=float, help='delta / Delta_total')
    asymptote.add_argument('--delta', type=float)
    asymptote.add_argument('--delta-total', type=float)
    asymptote.add_argument('--t-bath', type=float, help='bath temperature in kelvin')
    _add_output_flags(asymptote, default_format=FORMAT_JSON)
    asymptote.set_defaults(handler=cmd_asymptote)

    verify = commands.add_parser('verify', help='run a verification suite')
    verify.add_argument('--suite', choices=SUITES + (SUITE_ALL,), required=True)
    verify.add_argument('--trials', type=int, default=100)
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--n', type=int, default=None, help='fix the qubit count instead of drawing it')
    _add_reset_flags(verify)
    verify.add_argument('--backend', choices=(FLOAT, RATIONAL), default=FLOAT)
    verify.add_argument('--out', default='-')
    verify.set_defaults(handler=cmd_verify)

    sweep = commands.add_parser('sweep', help='limit and bound table over a parameter grid')
    sweep.add_argument('--n-values', type=int, nargs='+', required=True)
    sweep.add_argument('--epsilon-values', type=float, nargs='+')
    sweep.add_argument('--epsilon-range', type=float, nargs=3, metavar=('START', 'STOP', 'STEP'))
    sweep.add_argument('--gap-ratios', type=float, nargs='+', default=[1.0])
    sweep.add_argument('--workers', type=int, default=None)
    _add_output_flags(sweep)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=(args.log_level or settings.LOG_LEVEL).upper(),
        stream=sys.stderr,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        return args.handler(args)
    except CoolingError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        logger.error("Could not write output: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CANT_WRITE


if __name__ == '__main__':
    sys.exit(main())
