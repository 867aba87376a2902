"""
PPA Cooling - Iteration Engine
==============================

One Partner Pairing Algorithm iteration sorts the joint diagonal into
non-increasing order and then re-thermalizes the reset system. `run` repeats
that until the first computation population p0 settles.

The reported state at iteration t is the post-reset state. The sort
permutation is recomputed from the current values on every iteration.
"""

from __future__ import annotations

import logging
import math
import re
from array import array
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

import settings
from cooling_state import (
    RATIONAL,
    ComputationMarginal,
    DiagonalState,
    ResetDistribution,
    as_vector,
    backend_of,
    computation_marginal,
    from_marginal,
    marginal_polarization,
    max_distance,
    maximally_mixed,
    thermal_state,
    tolerance_for,
)
from errors import InvalidParameterError, PreconditionError, SingularPolarizationError

logger = logging.getLogger(__name__)

RECORD_FULL = 'full'
RECORD_MARGINALS = 'marginals'
RECORD_SUMMARY = 'summary'
RECORD_MODES = (RECORD_FULL, RECORD_MARGINALS, RECORD_SUMMARY)

METRIC_P0 = 'p0'
METRIC_STATE = 'state'
CONVERGENCE_METRICS = (METRIC_P0, METRIC_STATE)

PRESET_MAXIMALLY_MIXED = 'maximally-mixed'
_THERMAL_PRESET = re.compile(r'^thermal\(\s*([^()\s]+)\s*\)$')

# Float runs rescale the vector once its total drifts further than this
DRIFT_GUARD = 1e-13

SUMMARY_COLUMNS = ('t', 'p0', 'p1', 'delta_p0', 'max_distance', 'qubit1_polarization')


# ============================================================================
# Single steps
# ============================================================================

def sort_permutation(state: Union[DiagonalState, np.ndarray]) -> np.ndarray:
    """Stable descending order of the joint entries (ties keep original index order)"""
    values = state.probs if isinstance(state, DiagonalState) else state
    return np.argsort(-values, kind='stable')


def _check_dimensions(state: DiagonalState, reset: ResetDistribution):
    if state.reset_dim != reset.k:
        raise InvalidParameterError(
            f"State carries a {state.reset_dim}-level reset but the reset distribution has {reset.k} levels"
        )


def _aligned(values: np.ndarray, weights: np.ndarray):
    if backend_of(values) == RATIONAL and backend_of(weights) == RATIONAL:
        return values, weights
    return values.astype(float), weights.astype(float)


def _reset_values(values: np.ndarray, k: int, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    marginal = values.reshape(-1, k).sum(axis=1)
    return marginal, np.outer(marginal, weights).ravel()


def sort_step(state: DiagonalState) -> DiagonalState:
    return DiagonalState(state.n, state.reset_dim, state.probs[sort_permutation(state)])


def reset_step(state: DiagonalState, reset: ResetDistribution) -> DiagonalState:
    """Trace out the reset system and re-attach its equilibrium populations"""
    _check_dimensions(state, reset)
    values, weights = _aligned(state.probs, reset.probs)
    _, post_reset = _reset_values(values, reset.k, weights)
    return DiagonalState(state.n, state.reset_dim, post_reset)


def ppa_iteration(state: DiagonalState, reset: ResetDistribution, return_sorted: bool = False):
    """Sort then reset. With return_sorted=True returns (post_sort, post_reset)."""
    _check_dimensions(state, reset)
    post_sort = sort_step(state)
    post_reset = reset_step(post_sort, reset)
    if return_sorted:
        return post_sort, post_reset
    return post_reset


def is_fixed_point(state: DiagonalState, reset: ResetDistribution, tol: Optional[float] = None) -> bool:
    """True when the state is marginal ⊗ reset and stays sorted after the reset.

    The sortedness test is p_i*a_k >= p_{i+1}*a_1 - tol for every i.
    """
    _check_dimensions(state, reset)
    values, weights = _aligned(state.probs, reset.probs)
    if tol is None:
        tol = tolerance_for(backend_of(values))

    marginal, product = _reset_values(values, reset.k, weights)
    if not np.all(np.asarray(abs(values - product) <= tol, dtype=bool)):
        return False
    return bool(np.all(np.asarray(marginal[:-1] * weights[-1] >= marginal[1:] * weights[0] - tol, dtype=bool)))


# ============================================================================
# Runs
# ============================================================================

def resolve_initial(initial, n: int, reset: ResetDistribution) -> DiagonalState:
    """Turn a preset name, marginal or explicit state into a DiagonalState"""
    if isinstance(initial, DiagonalState):
        if initial.n != n or initial.reset_dim != reset.k:
            raise InvalidParameterError(
                f"Initial state has n={initial.n}, k={initial.reset_dim}; run expects n={n}, k={reset.k}"
            )
        return initial
    if isinstance(initial, ComputationMarginal):
        if initial.n != n:
            raise InvalidParameterError(f"Initial marginal has n={initial.n}; run expects n={n}")
        return from_marginal(initial, reset)
    if isinstance(initial, str):
        name = initial.strip().lower()
        if name in (PRESET_MAXIMALLY_MIXED, 'maximally_mixed', 'mixed'):
            return maximally_mixed(n, reset)
        match = _THERMAL_PRESET.match(name)
        if match:
            try:
                epsilon_c = float(match.group(1))
            except ValueError as e:
                raise InvalidParameterError(f"Bad thermal preset {initial!r}") from e
            return thermal_state(n, epsilon_c, reset)
    raise InvalidParameterError(f"Unknown initial state {initial!r}")


@dataclass(frozen=True, eq=False)
class RunConfig:
    n: int
    reset: ResetDistribution
    initial: Union[DiagonalState, ComputationMarginal, str] = PRESET_MAXIMALLY_MIXED
    max_iterations: int = settings.MAX_ITERATIONS
    convergence_tol: float = settings.CONVERGENCE_TOL
    convergence_window: int = settings.CONVERGENCE_WINDOW
    record_mode: str = RECORD_SUMMARY
    convergence_metric: str = METRIC_P0
    initial_state: DiagonalState = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidParameterError(f"Qubit count must be an integer >= 1, got {self.n!r}")
        if self.max_iterations < 1:
            raise InvalidParameterError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.convergence_tol > 0:
            raise InvalidParameterError(f"convergence_tol must be > 0, got {self.convergence_tol}")
        if self.convergence_window < 1:
            raise InvalidParameterError(f"convergence_window must be >= 1, got {self.convergence_window}")
        if self.record_mode not in RECORD_MODES:
            raise InvalidParameterError(f"record_mode must be one of {RECORD_MODES}, got {self.record_mode!r}")
        if self.convergence_metric not in CONVERGENCE_METRICS:
            raise InvalidParameterError(
                f"convergence_metric must be one of {CONVERGENCE_METRICS}, got {self.convergence_metric!r}"
            )
        object.__setattr__(self, 'initial_state', resolve_initial(self.initial, self.n, self.reset))

    @property
    def backend(self) -> str:
        values, _ = _aligned(self.initial_state.probs, self.reset.probs)
        return backend_of(values)

    def stopping_rule(self) -> str:
        if self.convergence_metric == METRIC_STATE:
            measure = f"max|state(t) - state(t-1)| <= {self.convergence_tol:g}"
        else:
            measure = f"|p0(t) - p0(t-1)| <= {self.convergence_tol:g} * max(p0, 1e-300)"
        return f"{measure} for {self.convergence_window} consecutive iterations"

    def describe(self) -> Dict:
        initial = self.initial if isinstance(self.initial, str) else 'explicit'
        return {
            'n': int(self.n),
            'reset': self.reset.to_list(),
            'reset_dim': self.reset.k,
            'initial': initial,
            'backend': self.backend,
            'max_iterations': self.max_iterations,
            'convergence_tol': self.convergence_tol,
            'convergence_window': self.convergence_window,
            'convergence_metric': self.convergence_metric,
            'record_mode': self.record_mode,
            'stopping_rule': self.stopping_rule(),
        }


@dataclass(frozen=True)
class IterationRecord:
    t: int
    p0: float
    p1: float
    delta_p0: float
    max_distance: float
    qubit1_polarization: float
    marginal: Optional[np.ndarray] = None
    post_sort: Optional[DiagonalState] = None
    post_reset: Optional[DiagonalState] = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Result of a run.

    Per-iteration scalars live in float64 columns (keyed by SUMMARY_COLUMNS) so
    summary-only runs stay compact; `records` materializes IterationRecords.
    """
    config: RunConfig
    initial_state: DiagonalState
    columns: Dict[str, np.ndarray]
    converged: bool
    converged_at: Optional[int]
    final_state: DiagonalState
    marginals: Optional[Tuple[np.ndarray, ...]] = None
    post_sort_states: Optional[Tuple[DiagonalState, ...]] = None
    post_reset_states: Optional[Tuple[DiagonalState, ...]] = None

    @property
    def iterations(self) -> int:
        return len(self.columns['t'])

    @cached_property
    def records(self) -> Tuple[IterationRecord, ...]:
        records = []
        for idx in range(self.iterations):
            records.append(IterationRecord(
                t=int(self.columns['t'][idx]),
                p0=float(self.columns['p0'][idx]),
                p1=float(self.columns['p1'][idx]),
                delta_p0=float(self.columns['delta_p0'][idx]),
                max_distance=float(self.columns['max_distance'][idx]),
                qubit1_polarization=float(self.columns['qubit1_polarization'][idx]),
                marginal=self.marginals[idx] if self.marginals is not None else None,
                post_sort=self.post_sort_states[idx] if self.post_sort_states is not None else None,
                post_reset=self.post_reset_states[idx] if self.post_reset_states is not None else None,
            ))
        return tuple(records)

    @property
    def initial_marginal(self) -> ComputationMarginal:
        return computation_marginal(self.initial_state)

    @property
    def final_marginal(self) -> ComputationMarginal:
        return computation_marginal(self.final_state)

    def p0_series(self) -> np.ndarray:
        """p0 at t = 0 (the initial state) through the last iteration"""
        return np.concatenate(([float(self.initial_marginal.p[0])], self.columns['p0']))

    def p1_series(self) -> np.ndarray:
        return np.concatenate(([float(self.initial_marginal.p[1])], self.columns['p1']))

    def marginal_series(self) -> List[np.ndarray]:
        """Computation marginals at t = 0 .. T; needs a marginals or full recording"""
        if self.marginals is None:
            raise PreconditionError(
                f"Trajectory was recorded with record_mode={self.config.record_mode!r}; marginals are not available"
            )
        return [self.initial_marginal.p] + list(self.marginals)

    def summary(self) -> Dict:
        final = self.final_marginal
        try:
            polarization = marginal_polarization(final, 1)
        except SingularPolarizationError:
            polarization = math.inf
        return {
            'converged': self.converged,
            'converged_at': self.converged_at,
            'iterations': self.iterations,
            'final_p0': float(final.p[0]),
            'final_marginal': final.to_list(),
            'final_qubit1_polarization': polarization,
            'final_max_distance': max_distance(final),
        }


def _record_metrics(marginal: np.ndarray) -> Tuple[float, float]:
    try:
        polarization = marginal_polarization(marginal, 1)
    except SingularPolarizationError:
        polarization = math.inf
    return max_distance(marginal), polarization


def _frozen(values: np.ndarray) -> np.ndarray:
    copy = values.copy()
    copy.setflags(write=False)
    return copy


def run(config: RunConfig) -> Trajectory:
    """Iterate sort-then-reset until the configured convergence rule holds"""
    n, k = config.n, config.reset.k
    values, weights = _aligned(config.initial_state.probs, config.reset.probs)
    exact = backend_of(values) == RATIONAL
    keep_marginals = config.record_mode in (RECORD_FULL, RECORD_MARGINALS)
    keep_states = config.record_mode == RECORD_FULL

    columns = {name: array('d') for name in SUMMARY_COLUMNS}
    marginals, post_sorts, post_resets = [], [], []

    previous_p0 = values.reshape(-1, k).sum(axis=1)[0]
    streak = 0
    candidate = None
    converged_at = None

    logger.info("PPA run: n=%d k=%d backend=%s max_iterations=%d rule=%s",
                n, k, 'rational' if exact else 'float', config.max_iterations, config.stopping_rule())

    for t in range(1, config.max_iterations + 1):
        post_sort = values[np.argsort(-values, kind='stable')]
        marginal, post_reset = _reset_values(post_sort, k, weights)

        if not exact:
            total = post_reset.sum()
            if abs(total - 1.0) > DRIFT_GUARD:
                logger.debug("t=%d: rescaling float state, total drifted to %.17g", t, total)
                post_reset = post_reset / total
                marginal = marginal / total

        p0 = marginal[0]
        delta = p0 - previous_p0
        distance, polarization = _record_metrics(marginal)
        columns['t'].append(t)
        columns['p0'].append(float(p0))
        columns['p1'].append(float(marginal[1]))
        columns['delta_p0'].append(float(delta))
        columns['max_distance'].append(distance)
        columns['qubit1_polarization'].append(polarization)
        if keep_marginals:
            marginals.append(_frozen(marginal))
        if keep_states:
            post_sorts.append(DiagonalState(n, k, _frozen(post_sort)))
            post_resets.append(DiagonalState(n, k, _frozen(post_reset)))

        if config.convergence_metric == METRIC_STATE:
            change = np.max(abs(post_reset - values))
            settled = change <= config.convergence_tol
        else:
            settled = abs(delta) <= config.convergence_tol * max(p0, 1e-300)

        values = post_reset
        previous_p0 = p0

        if settled:
            streak += 1
            if streak == 1:
                candidate = t
        else:
            streak = 0
        if streak >= config.convergence_window:
            converged_at = candidate
            break

    converged = converged_at is not None
    if converged:
        logger.info("Converged at t=%d (stopped after %d iterations), p0=%.17g",
                    converged_at, len(columns['t']), float(previous_p0))
    else:
        logger.warning("No convergence within %d iterations, p0=%.17g",
                       config.max_iterations, float(previous_p0))

    return Trajectory(
        config=config,
        initial_state=config.initial_state,
        columns={name: np.frombuffer(column, dtype=np.float64).copy() for name, column in columns.items()},
        converged=converged,
        converged_at=converged_at,
        final_state=DiagonalState(n, k, _frozen(values)),
        marginals=tuple(marginals) if keep_marginals else None,
        post_sort_states=tuple(post_sorts) if keep_states else None,
        post_reset_states=tuple(post_resets) if keep_states else None,
    )
