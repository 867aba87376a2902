"""
PPA Cooling - Verification
==========================

Executable checks for the cooling theorems:

- check_max_distance         distances never exceed max(d_i^0, log(a_1/a_k))
- check_p0_monotone          p0 never decreases
- check_steady_invariance    sorted-after-reset states are left alone, others move
- classify_crossings         which joint entries trade places in the next sort
- check_delta_p0_recurrence  p0 step against p1*a_1 - p0*a_k near convergence
- rational_oracle_compare    float iteration tracked against exact fractions

plus the random generators and the named suites the CLI and service run.
Every checker returns a VerificationReport; reports from independent trials
merge associatively.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from asymptotics import asymptotic_state, block_predict
from cooling_state import (
    RATIONAL,
    ComputationMarginal,
    DiagonalState,
    ResetDistribution,
    as_vector,
    backend_of,
    from_marginal,
    make_reset,
    make_thermal_reset,
    maximally_mixed,
    tolerance_for,
)
from errors import InvalidParameterError, PreconditionError
from ppa_engine import (
    METRIC_P0,
    METRIC_STATE,
    RECORD_MARGINALS,
    RECORD_SUMMARY,
    RunConfig,
    Trajectory,
    is_fixed_point,
    ppa_iteration,
    run,
)

logger = logging.getLogger(__name__)

MAX_WITNESSES = 10

DISTANCE_SLACK = 1e-9
MONOTONE_SLACK = 1e-14
RECURRENCE_TOL = 1e-8
ORACLE_TOL = 1e-10
BLOCK_TOL = 1e-6

ORACLE_MAX_QUBITS = 8
ORACLE_MAX_ITERATIONS = 10_000
# exact p0 strings beyond this denominator are dropped from oracle extras
ORACLE_MAX_EXACT_DENOMINATOR = 10 ** 12

SUITES = ('maxdist', 'monotone', 'steady', 'recurrence', 'oracle', 'blocks')
SUITE_ALL = 'all'


# ============================================================================
# Reports
# ============================================================================

@dataclass(frozen=True)
class Witness:
    """One violation: where it happened, what was seen, what it was held to"""
    input: str
    iteration: Optional[int]
    index: Optional[int]
    observed: float
    bound: float

    def to_dict(self) -> dict:
        return {
            'input': self.input,
            'iteration': self.iteration,
            'index': self.index,
            'observed': _json_number(self.observed),
            'bound': _json_number(self.bound),
        }


def _json_number(value):
    if value is None:
        return None
    value = float(value)
    if math.isnan(value):
        return 'nan'
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return value


def _merge_extras(left: Dict[str, Any], right: Dict[str, Any]) -> Dict[str, Any]:
    """max_* keys keep the maximum, *_count keys add up, anything else keeps the first value"""
    merged = dict(left)
    for key, value in right.items():
        if key not in merged or merged[key] is None:
            merged[key] = value
        elif value is None:
            continue
        elif key.startswith('max_'):
            merged[key] = max(merged[key], value)
        elif key.endswith('_count'):
            merged[key] = merged[key] + value
    return merged


@dataclass
class VerificationReport:
    invariant_name: str
    trials: int = 0
    failures: int = 0
    witnesses: List[Witness] = field(default_factory=list)
    tolerance: float = 0.0
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, witness: Witness):
        self.failures += 1
        if len(self.witnesses) < MAX_WITNESSES:
            self.witnesses.append(witness)

    def merge(self, other: 'VerificationReport') -> 'VerificationReport':
        return VerificationReport(
            invariant_name=self.invariant_name,
            trials=self.trials + other.trials,
            failures=self.failures + other.failures,
            witnesses=(self.witnesses + other.witnesses)[:MAX_WITNESSES],
            tolerance=max(self.tolerance, other.tolerance),
            extras=_merge_extras(self.extras, other.extras),
        )

    def to_dict(self) -> dict:
        return {
            'invariant_name': self.invariant_name,
            'passed': self.passed,
            'trials': self.trials,
            'failures': self.failures,
            'tolerance': self.tolerance,
            'witnesses': [w.to_dict() for w in self.witnesses],
            'extras': {key: _json_extra(value) for key, value in self.extras.items()},
        }


def _json_extra(value):
    if isinstance(value, dict):
        return {key: _json_extra(item) for key, item in value.items()}
    if isinstance(value, (float, np.floating)):
        return _json_number(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def _describe(config: RunConfig) -> str:
    initial = config.initial if isinstance(config.initial, str) else 'explicit'
    return f"n={config.n} reset={config.reset.to_list()} init={initial}"


# ============================================================================
# Trajectory checks
# ============================================================================

def _ratios(p: np.ndarray) -> list:
    """p_i / p_{i+1}; inf when only the lower entry is zero, 1 when both are"""
    ratios = []
    for upper, lower in zip(p[:-1], p[1:]):
        if lower > 0:
            ratios.append(upper / lower)
        else:
            ratios.append(math.inf if upper > 0 else 1)
    return ratios


def _log_distances(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore', invalid='ignore'):
        distances = np.log(p[:-1]) - np.log(p[1:])
    # both entries zero: no distance to speak of
    return np.where(np.isnan(distances), 0.0, distances)


def _aligned_pair(state: DiagonalState, reset: ResetDistribution):
    """State and reset values on a common backend (exact only when both are)"""
    values, weights = state.probs, reset.probs
    if not (backend_of(values) == RATIONAL and backend_of(weights) == RATIONAL):
        values, weights = values.astype(float), weights.astype(float)
    return values, weights


def _product_marginal(values: np.ndarray, weights: np.ndarray, tol) -> Optional[np.ndarray]:
    """The computation marginal when values == marginal ⊗ weights within tol, else None"""
    marginal = values.reshape(-1, len(weights)).sum(axis=1)
    product = np.outer(marginal, weights).ravel()
    if not np.all(np.asarray(abs(values - product) <= tol, dtype=bool)):
        return None
    return marginal


def _require_sorted_product_start(config: RunConfig):
    values, weights = _aligned_pair(config.initial_state, config.reset)
    tol = tolerance_for(backend_of(values))
    marginal = _product_marginal(values, weights, tol)
    if marginal is None:
        raise PreconditionError("Distance bound needs an initial product state marginal ⊗ reset")
    if not np.all(np.asarray(marginal[:-1] >= marginal[1:] - tol, dtype=bool)):
        raise PreconditionError("Distance bound needs a non-increasing initial marginal")


def check_max_distance(trajectory: Trajectory) -> VerificationReport:
    """d_i^t <= max(d_i^0, L) for every recorded t and i.

    The run must start from a sorted product state marginal ⊗ reset; other
    starts raise PreconditionError. Float runs get DISTANCE_SLACK on the log
    scale; rational runs compare the ratios p_i/p_{i+1} exactly.
    """
    config = trajectory.config
    reset = config.reset
    _require_sorted_product_start(config)
    series = trajectory.marginal_series()
    exact = backend_of(series[0]) == RATIONAL and reset.backend == RATIONAL
    report = VerificationReport('maxdist', trials=1, tolerance=0 if exact else DISTANCE_SLACK)
    label = _describe(config)

    if exact:
        gap_ratio = reset.probs[0] / reset.probs[-1]
        bounds = [max(r, gap_ratio) for r in _ratios(series[0])]
        for t, p in enumerate(series[1:], start=1):
            for i, (ratio, bound) in enumerate(zip(_ratios(p), bounds)):
                if ratio > bound:
                    report.record(Witness(label, t, i, _safe_log(ratio), _safe_log(bound)))
        return report

    bounds = np.maximum(_log_distances(np.asarray(series[0], dtype=float)), reset.large_gap) + DISTANCE_SLACK
    worst = -math.inf
    for t, p in enumerate(series[1:], start=1):
        distances = _log_distances(np.asarray(p, dtype=float))
        excess = distances - bounds
        worst = max(worst, float(np.max(excess)) if len(excess) else -math.inf)
        for i in np.flatnonzero(excess > 0):
            report.record(Witness(label, t, int(i), float(distances[i]), float(bounds[i])))
    report.extras['max_excess'] = worst + DISTANCE_SLACK if math.isfinite(worst) else worst
    return report


def _safe_log(value) -> float:
    if value == math.inf:
        return math.inf
    return math.log(value)


def check_p0_monotone(trajectory: Trajectory) -> VerificationReport:
    """p0^(t+1) >= p0^t - slack, with t = 0 the initial state"""
    exact = trajectory.config.backend == RATIONAL
    tolerance = 0 if exact else MONOTONE_SLACK
    report = VerificationReport('monotone', trials=1, tolerance=tolerance)
    label = _describe(trajectory.config)

    # float() is monotone, so rounding rational p0 values cannot invent a decrease
    series = trajectory.p0_series()
    drops = series[:-1] - series[1:]
    for t in np.flatnonzero(drops > tolerance):
        report.record(Witness(label, int(t) + 1, 0, float(series[t + 1]), float(series[t] - tolerance)))
    return report


def check_steady_invariance(state: Union[DiagonalState, ComputationMarginal],
                            reset: ResetDistribution) -> VerificationReport:
    """States passing is_fixed_point must survive one iteration; all others must move"""
    if isinstance(state, ComputationMarginal):
        state = from_marginal(state, reset)
    invariant = is_fixed_point(state, reset)
    after = ppa_iteration(state, reset)
    exact = state.backend == RATIONAL and after.backend == RATIONAL
    tolerance = tolerance_for(RATIONAL if exact else 'float')

    if exact:
        unchanged = after.equals(state)
    else:
        unchanged = after.allclose(state.as_float(), atol=tolerance)
    change = float(np.max(np.abs(after.as_float().probs - state.as_float().probs)))

    report = VerificationReport('steady', trials=1, tolerance=tolerance,
                                extras={'invariant': invariant, 'max_change': change})
    if invariant != unchanged:
        label = f"n={state.n} reset={reset.to_list()} state={state.to_list()}"
        report.record(Witness(label, 1, None, change, tolerance))
    return report


@dataclass(frozen=True)
class CrossingEvent:
    kind: str  # from-below | from-above
    i: int
    j: int
    m_i: int   # 0-based reset level
    m_j: int
    value_i: float
    value_j: float

    def to_dict(self) -> dict:
        return {
            'kind': self.kind, 'i': self.i, 'j': self.j, 'm_i': self.m_i, 'm_j': self.m_j,
            'value_i': float(self.value_i), 'value_j': float(self.value_j),
        }


FROM_BELOW = 'from-below'
FROM_ABOVE = 'from-above'


def classify_crossings(state: DiagonalState, reset: ResetDistribution,
                       tol: Optional[float] = None) -> List[CrossingEvent]:
    """Every pair of joint entries the next sort will swap.

    A from-below event (i < j, m_i > m_j) has p_i*a_{m_i} < p_j*a_{m_j}; the
    same pair seen from entry j is reported as the mirrored from-above event.
    Equal products are not crossings.
    """
    if state.reset_dim != reset.k:
        raise InvalidParameterError(
            f"State carries a {state.reset_dim}-level reset but the reset distribution has {reset.k} levels"
        )
    values, weights = _aligned_pair(state, reset)
    if tol is None:
        tol = tolerance_for(backend_of(values))

    marginal = _product_marginal(values, weights, tol)
    if marginal is None:
        raise InvalidParameterError("Crossings are defined for product states marginal ⊗ reset only")

    size = len(marginal)
    upper_triangle = np.triu(np.ones((size, size), dtype=bool), k=1)
    events = []
    for m_i in range(1, reset.k):
        for m_j in range(m_i):
            left = marginal * weights[m_i]
            right = marginal * weights[m_j]
            crossing = np.asarray(left[:, None] < right[None, :] - tol, dtype=bool) & upper_triangle
            for i, j in zip(*np.nonzero(crossing)):
                i, j = int(i), int(j)
                events.append(CrossingEvent(FROM_BELOW, i, j, m_i, m_j, left[i], right[j]))
                events.append(CrossingEvent(FROM_ABOVE, j, i, m_j, m_i, right[j], left[i]))

    events.sort(key=lambda e: (e.i, e.j, e.m_i, e.m_j, e.kind))
    return events


def check_delta_p0_recurrence(trajectory: Trajectory) -> VerificationReport:
    """|dp0 - (p1*a_1 - p0*a_k)| < RECURRENCE_TOL over the final quarter of a converged qubit-reset run"""
    reset = trajectory.config.reset
    if reset.k != 2:
        raise PreconditionError(f"Recurrence check needs a 2-level reset, got k={reset.k}")
    if not trajectory.converged:
        raise PreconditionError("Recurrence check needs a converged trajectory")
    upper, lower = float(reset.probs[0]), float(reset.probs[-1])

    p0 = trajectory.p0_series()
    p1 = trajectory.p1_series()
    residuals = np.abs((p0[1:] - p0[:-1]) - (p1[:-1] * upper - p0[:-1] * lower))

    start = (3 * len(residuals)) // 4
    tail = residuals[start:]
    report = VerificationReport('recurrence', trials=1, tolerance=RECURRENCE_TOL, extras={
        'max_tail_residual': float(tail.max()),
        'final_residual': float(residuals[-1]),
    })
    label = _describe(trajectory.config)
    for offset in np.flatnonzero(tail > RECURRENCE_TOL):
        t = start + int(offset)
        report.record(Witness(label, t, 0, float(residuals[t]), RECURRENCE_TOL))
    return report


def rational_oracle_compare(config: RunConfig, iterations: Optional[int] = None) -> VerificationReport:
    """Iterate the same start exactly and in float; entries must agree to ORACLE_TOL throughout"""
    reset = config.reset
    if reset.backend != RATIONAL:
        raise InvalidParameterError("Oracle comparison needs a rational reset distribution")
    if config.n > ORACLE_MAX_QUBITS:
        raise InvalidParameterError(f"Oracle comparison is limited to n <= {ORACLE_MAX_QUBITS}")
    iterations = config.max_iterations if iterations is None else iterations
    if not 1 <= iterations <= ORACLE_MAX_ITERATIONS:
        raise InvalidParameterError(f"Oracle iterations must be in 1..{ORACLE_MAX_ITERATIONS}, got {iterations}")

    start = config.initial_state
    exact_state = DiagonalState(start.n, start.reset_dim, as_vector(start.probs, rational=True))
    float_state = exact_state.as_float()
    float_reset = reset.as_float()

    report = VerificationReport('oracle', trials=1, tolerance=ORACLE_TOL)
    label = _describe(config)
    worst = 0.0
    fixed_at = None
    for t in range(1, iterations + 1):
        # once an iteration leaves the exact state unchanged it stays put
        if fixed_at is None:
            advanced = ppa_iteration(exact_state, reset)
            if advanced.equals(exact_state):
                fixed_at = t
                logger.debug("Exact fixed point reached at t=%d", t)
            exact_state = advanced
        float_state = ppa_iteration(float_state, float_reset)

        deviation = np.abs(exact_state.as_float().probs - float_state.probs)
        index = int(np.argmax(deviation))
        worst = max(worst, float(deviation[index]))
        if deviation[index] > ORACLE_TOL:
            report.record(Witness(label, t, index, float(deviation[index]), ORACLE_TOL))

    final_p0 = exact_state.probs.reshape(-1, reset.k).sum(axis=1)[0]
    report.extras.update({
        'max_deviation': worst,
        'exact_fixed_point_at': fixed_at,
        'final_p0': float(final_p0),
    })
    if final_p0.denominator <= ORACLE_MAX_EXACT_DENOMINATOR:
        report.extras['final_p0_exact'] = str(final_p0)
    return report


# ============================================================================
# Random inputs
# ============================================================================

def random_sorted_marginal(n: int, rng: np.random.Generator,
                           clamp_gap: Optional[float] = None) -> ComputationMarginal:
    """Sorted, normalized exponential variates.

    With clamp_gap, the vector is averaged toward uniform until every
    consecutive distance is <= clamp_gap.
    """
    size = 2 ** n
    p = np.sort(rng.exponential(size=size))[::-1]
    p = p / p.sum()
    if clamp_gap is not None:
        if clamp_gap <= 0:
            return ComputationMarginal(np.full(size, 1.0 / size))
        for _ in range(200):
            if float(np.max(_log_distances(p))) <= clamp_gap:
                break
            p = (p + 1.0 / size) / 2
        else:
            p = np.full(size, 1.0 / size)
        p = p / p.sum()
    return ComputationMarginal(p)


def random_reset(k: int, rng: np.random.Generator, large_gap: Optional[float] = None) -> ResetDistribution:
    """k levels a_m ∝ exp(-x_m), x_1 = 0, x_k = L, interior levels uniform in between"""
    if k < 2:
        raise InvalidParameterError(f"Reset system needs at least 2 levels, got {k}")
    gap = rng.uniform(0.02, 1.0) if large_gap is None else large_gap
    offsets = np.concatenate(([0.0], np.sort(rng.uniform(0.0, gap, size=k - 2)), [gap]))
    weights = np.exp(-offsets)
    return ResetDistribution(weights / weights.sum())


def random_rational_reset(rng: np.random.Generator, max_denominator: int = 10) -> ResetDistribution:
    """Qubit reset {m/D, (D-m)/D} with D <= max_denominator and m/D > 1/2"""
    denominator = int(rng.integers(3, max_denominator + 1))
    numerator = int(rng.integers(denominator // 2 + 1, denominator))
    return make_reset([Fraction(numerator, denominator), Fraction(denominator - numerator, denominator)],
                      rational=True)


def random_fixed_point(n: int, reset: ResetDistribution, rng: np.random.Generator) -> ComputationMarginal:
    """Marginal with every distance strictly above L, so marginal ⊗ reset is a fixed point"""
    gap = reset.large_gap
    distances = gap + 1e-6 + rng.exponential(scale=max(gap, 0.1), size=2 ** n - 1)
    logs = np.concatenate(([0.0], -np.cumsum(distances)))
    p = np.exp(logs - logs.max())
    return ComputationMarginal(p / p.sum())


# ============================================================================
# Suites
# ============================================================================

def _trial(name: str, rng: np.random.Generator, n: Optional[int],
           reset: Optional[ResetDistribution]) -> VerificationReport:
    if name == 'maxdist':
        n = n or int(rng.integers(1, 7))
        reset = reset or random_reset(int(rng.integers(2, 5)), rng)
        clamp = reset.large_gap if rng.random() < 0.5 else None
        initial = random_sorted_marginal(n, rng, clamp_gap=clamp)
        config = RunConfig(n=n, reset=reset, initial=initial, max_iterations=5000, record_mode=RECORD_MARGINALS)
        return check_max_distance(run(config))

    if name == 'monotone':
        n = n or int(rng.integers(1, 7))
        reset = reset or random_reset(int(rng.integers(2, 5)), rng)
        initial = random_sorted_marginal(n, rng) if rng.random() < 0.5 else 'maximally-mixed'
        config = RunConfig(n=n, reset=reset, initial=initial, max_iterations=5000, record_mode=RECORD_SUMMARY)
        return check_p0_monotone(run(config))

    if name == 'steady':
        n = n or int(rng.integers(1, 6))
        reset = reset or random_reset(int(rng.integers(2, 5)), rng)
        report = check_steady_invariance(random_fixed_point(n, reset.as_float(), rng), reset)
        if reset.large_gap > 0:
            moving = check_steady_invariance(maximally_mixed(n, reset), reset)
            report = report.merge(moving)
            report.trials -= 1
        return report

    if name == 'recurrence':
        n = n or int(rng.integers(1, 5))
        reset = reset or make_thermal_reset(rng.uniform(0.1, 0.5))
        config = RunConfig(n=n, reset=reset, max_iterations=50_000, record_mode=RECORD_SUMMARY)
        trajectory = run(config)
        if not trajectory.converged:
            report = VerificationReport('recurrence', trials=1, tolerance=RECURRENCE_TOL)
            report.record(Witness(_describe(config), trajectory.iterations, None, math.nan, RECURRENCE_TOL))
            return report
        return check_delta_p0_recurrence(trajectory)

    if name == 'oracle':
        n = n or int(rng.integers(1, 4))
        if reset is None or reset.backend != RATIONAL:
            reset = random_rational_reset(rng)
        return rational_oracle_compare(RunConfig(n=n, reset=reset), iterations=200)

    if name == 'blocks':
        n = n or int(rng.integers(1, 6))
        reset = (reset or random_reset(int(rng.integers(2, 4)), rng)).as_float()
        initial = random_sorted_marginal(n, rng)
        structure = block_predict(initial, reset)
        config = RunConfig(n=n, reset=reset, initial=initial, max_iterations=200_000,
                           convergence_tol=1e-14, convergence_metric=METRIC_STATE)
        trajectory = run(config)
        deviation = float(np.max(np.abs(trajectory.final_marginal.p - structure.predicted_marginal.p)))
        report = VerificationReport('blocks', trials=1, tolerance=BLOCK_TOL, extras={
            'max_deviation': deviation,
            'merge_count': structure.merges,
        })
        if deviation > BLOCK_TOL or not trajectory.converged:
            report.record(Witness(_describe(config), trajectory.iterations, None, deviation, BLOCK_TOL))
        return report

    raise InvalidParameterError(f"Unknown suite {name!r}; expected one of {SUITES + (SUITE_ALL,)}")


def run_suite(name: str, trials: int, seed: int, n: Optional[int] = None,
              reset: Optional[ResetDistribution] = None) -> VerificationReport:
    """Run `trials` independent seeded trials of a named suite and merge their reports.

    Trial i draws from the i-th child of SeedSequence(seed), so a given seed
    reproduces the same report. 'all' runs every suite and keeps the
    per-suite reports under extras['suites'].
    """
    if trials < 1:
        raise InvalidParameterError(f"trials must be >= 1, got {trials}")
    if name == SUITE_ALL:
        combined = VerificationReport(SUITE_ALL)
        suites = {}
        for offset, suite in enumerate(SUITES):
            sub = run_suite(suite, trials, seed + offset, n=n, reset=reset)
            suites[suite] = sub.to_dict()
            combined = combined.merge(VerificationReport(
                SUITE_ALL, sub.trials, sub.failures, sub.witnesses, sub.tolerance))
        combined.extras['suites'] = suites
        return combined
    if name not in SUITES:
        raise InvalidParameterError(f"Unknown suite {name!r}; expected one of {SUITES + (SUITE_ALL,)}")

    logger.info("Running suite %s: %d trials, seed %d", name, trials, seed)
    report = VerificationReport(name)
    for child in np.random.SeedSequence(seed).spawn(trials):
        report = report.merge(_trial(name, np.random.default_rng(child), n, reset))

    if report.passed:
        logger.info("Suite %s passed %d trials", name, report.trials)
    else:
        logger.warning("Suite %s: %d failures over %d trials", name, report.failures, report.trials)
    return report


def convergence_check(trajectory: Trajectory, tol: float = 1e-8) -> VerificationReport:
    """Final marginal against the closed-form asymptotic state, entrywise"""
    config = trajectory.config
    expected = asymptotic_state(config.n, config.reset).p.astype(float)
    observed = trajectory.final_marginal.p.astype(float)
    deviation = np.abs(observed - expected)
    report = VerificationReport('convergence', trials=1, tolerance=tol,
                                extras={'max_deviation': float(deviation.max())})
    label = _describe(config)
    if not trajectory.converged:
        report.record(Witness(label, trajectory.iterations, None, float(deviation.max()), tol))
        return report
    for i in np.flatnonzero(deviation > tol):
        report.record(Witness(label, trajectory.iterations, int(i), float(observed[i]), float(expected[i])))
    return report
