"""
PPA Cooling - Asymptotic Limits
===============================

Closed-form limits of PPA cooling:

- the asymptotic computation marginal p_i = p_0 * q^i with q = a_k / a_1
- the polarization limit 2^(n-1) * eps_eff of the first qubit
- effective temperatures with the large gap Delta_total
- the Schulman et al. upper bound on the ground population
- block expansion/merger prediction for general initial states

For rational resets the state-valued results are exact fractions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np

from cooling_state import (
    RATIONAL,
    ComputationMarginal,
    ResetDistribution,
    as_vector,
)
from errors import InvalidParameterError

logger = logging.getLogger(__name__)


def _check_n(n: int):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidParameterError(f"Qubit count must be an integer >= 1, got {n!r}")


def _geometric(size: int, mass, reset: ResetDistribution, exact: bool) -> np.ndarray:
    """`size` values with consecutive ratio a_k/a_1 summing to `mass`"""
    if exact:
        q = reset.ratio
        weights = [Fraction(1)]
        for _ in range(size - 1):
            weights.append(weights[-1] * q)
        total = sum(weights)
        return as_vector([mass * w / total for w in weights], rational=True)

    gap = reset.large_gap
    if gap == 0:
        return np.full(size, float(mass) / size)
    weights = np.exp(-gap * np.arange(size))
    return float(mass) * weights / weights.sum()


def asymptotic_p0(n: int, reset: ResetDistribution):
    """(q - 1) / (q^(2^n) - 1) with q = a_k / a_1; 2^-n when q = 1"""
    _check_n(n)
    size = 2 ** n
    if reset.backend == RATIONAL:
        q = reset.ratio
        if q == 1:
            return Fraction(1, size)
        return (q - 1) / (q ** size - 1)

    gap = reset.large_gap
    if gap == 0:
        return 2.0 ** -n
    return math.expm1(-gap) / math.expm1(-size * gap)


def asymptotic_state(n: int, reset: ResetDistribution) -> ComputationMarginal:
    _check_n(n)
    return ComputationMarginal(_geometric(2 ** n, 1, reset, reset.backend == RATIONAL))


def qubit1_polarization_limit(n: int, reset: ResetDistribution) -> float:
    _check_n(n)
    return 2 ** (n - 1) * reset.epsilon


def per_qubit_polarizations(n: int, reset: ResetDistribution) -> Tuple[float, ...]:
    """Qubit j (1 = most significant) settles at 2^(n-j) * eps_eff"""
    _check_n(n)
    return tuple(2 ** (n - j) * reset.epsilon for j in range(1, n + 1))


def lambda1_limit(n: int, reset: ResetDistribution):
    """Largest joint population a_1 * p_0 in the asymptotic state"""
    return reset.probs[0] * asymptotic_p0(n, reset)


# ============================================================================
# Temperatures and bounds
# ============================================================================

@dataclass(frozen=True)
class TemperatureSpec:
    delta: float        # computation-qubit gap
    delta_total: float  # large gap of the reset system, same units as delta
    t_bath: float       # kelvin

    def __post_init__(self):
        for name in ('delta', 'delta_total', 't_bath'):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
                raise InvalidParameterError(f"{name} must be a positive finite number, got {value!r}")

    @property
    def gap_ratio(self) -> float:
        return self.delta / self.delta_total


def effective_temperature(n: int, spec: TemperatureSpec) -> float:
    """(delta / Delta_total) * T_B / 2^(n-1)"""
    _check_n(n)
    return spec.gap_ratio * spec.t_bath / 2 ** (n - 1)


def schulman_upper_bound(n: int, epsilon: float) -> float:
    """e^(2^n eps) / 2^n; +inf once the exponent overflows"""
    _check_n(n)
    if not math.isfinite(epsilon) or epsilon < 0:
        raise InvalidParameterError(f"Polarization must be finite and >= 0, got {epsilon}")
    size = 2 ** n
    try:
        return math.exp(size * epsilon) / size
    except OverflowError:
        return math.inf


@dataclass(frozen=True, eq=False)
class AsymptoticPrediction:
    n: int
    reset: ResetDistribution
    p_infinity: ComputationMarginal
    qubit1_polarization_limit: float
    lambda1_limit: float
    schulman_bound: Optional[float]
    per_qubit_polarizations: Tuple[float, ...]
    temperature: Optional[TemperatureSpec] = None
    t_eff: Optional[float] = None

    @property
    def p0_infinity(self):
        return self.p_infinity.p[0]

    def to_dict(self) -> dict:
        data = {
            'n': int(self.n),
            'reset': self.reset.to_list(),
            'epsilon_eff': self.reset.epsilon,
            'large_gap': self.reset.large_gap,
            'p0_infinity': float(self.p0_infinity),
            'p_infinity': self.p_infinity.to_list(),
            'qubit1_polarization_limit': self.qubit1_polarization_limit,
            'per_qubit_polarizations': list(self.per_qubit_polarizations),
            'lambda1_limit': float(self.lambda1_limit),
            'schulman_bound': self.schulman_bound,
        }
        if self.temperature is not None:
            data.update({
                'delta': self.temperature.delta,
                'delta_total': self.temperature.delta_total,
                't_bath': self.temperature.t_bath,
                't_eff': self.t_eff,
            })
        return data


def predict(n: int, reset: ResetDistribution,
            temperature: Optional[TemperatureSpec] = None) -> AsymptoticPrediction:
    _check_n(n)
    bound = schulman_upper_bound(n, reset.epsilon) if reset.k == 2 else None
    return AsymptoticPrediction(
        n=n,
        reset=reset,
        p_infinity=asymptotic_state(n, reset),
        qubit1_polarization_limit=qubit1_polarization_limit(n, reset),
        lambda1_limit=lambda1_limit(n, reset),
        schulman_bound=bound,
        per_qubit_polarizations=per_qubit_polarizations(n, reset),
        temperature=temperature,
        t_eff=effective_temperature(n, temperature) if temperature is not None else None,
    )


def sufficient_condition(initial: ComputationMarginal, reset: ResetDistribution) -> bool:
    """log(p_0 / p_last) <= (2^n - 1) * log(a_1 / a_k), natural log throughout"""
    p = initial.p
    steps = len(p) - 1
    if not p[-1] > 0:
        return False
    if initial.backend == RATIONAL and reset.backend == RATIONAL:
        return p[0] * reset.probs[-1] ** steps <= p[-1] * reset.probs[0] ** steps
    return math.log(p[0] / p[-1]) <= steps * reset.large_gap


# ============================================================================
# Block expansion / merger
# ============================================================================

@dataclass(frozen=True, eq=False)
class BlockStructure:
    boundaries: Tuple[Tuple[int, int], ...]  # half-open index ranges
    block_masses: np.ndarray
    predicted_marginal: ComputationMarginal
    initial_boundaries: Tuple[Tuple[int, int], ...] = ()
    merges: int = 0

    def to_dict(self) -> dict:
        return {
            'boundaries': [list(b) for b in self.boundaries],
            'initial_boundaries': [list(b) for b in self.initial_boundaries],
            'block_masses': [float(m) for m in self.block_masses],
            'predicted_marginal': self.predicted_marginal.to_list(),
            'merges': self.merges,
        }


def _fill(blocks, masses, size, reset, exact) -> np.ndarray:
    values = np.empty(size, dtype=object if exact else np.float64)
    for (start, stop), mass in zip(blocks, masses):
        values[start:stop] = _geometric(stop - start, mass, reset, exact)
    return values


def block_predict(initial: ComputationMarginal, reset: ResetDistribution) -> BlockStructure:
    """Predict the limit of a general sorted initial marginal.

    Runs with consecutive distances below L = log(a_1/a_k) form blocks; each
    block saturates to a geometric run with distance exactly L while keeping its
    mass. Adjacent blocks whose boundary distance then falls below L merge, and
    the fill/merge pass repeats until nothing merges.
    """
    exact = initial.backend == RATIONAL and reset.backend == RATIONAL
    p = initial.p if exact else initial.p.astype(float)
    upper, lower = (reset.probs[0], reset.probs[-1]) if exact else (float(reset.probs[0]), float(reset.probs[-1]))

    if not np.all(np.asarray(p > 0, dtype=bool)):
        raise InvalidParameterError("Block prediction needs strictly positive marginal entries")
    if not np.all(np.asarray(p[:-1] >= p[1:], dtype=bool)):
        raise InvalidParameterError("Block prediction needs a marginal sorted in decreasing order")

    size = len(p)
    blocks: List[Tuple[int, int]] = []
    start = 0
    for i in range(size - 1):
        # d_i >= L is a wall: no crossing can move weight across it
        if not p[i] * lower < p[i + 1] * upper:
            blocks.append((start, i + 1))
            start = i + 1
    blocks.append((start, size))
    initial_blocks = tuple(blocks)
    masses = [p[s:e].sum() for s, e in blocks]

    merges = 0
    while True:
        predicted = _fill(blocks, masses, size, reset, exact)
        merged_blocks, merged_masses = [blocks[0]], [masses[0]]
        for (s, e), mass in zip(blocks[1:], masses[1:]):
            if predicted[s - 1] * lower < predicted[s] * upper:
                merged_blocks[-1] = (merged_blocks[-1][0], e)
                merged_masses[-1] = merged_masses[-1] + mass
                merges += 1
            else:
                merged_blocks.append((s, e))
                merged_masses.append(mass)
        if len(merged_blocks) == len(blocks):
            break
        logger.debug("Merged %d -> %d blocks", len(blocks), len(merged_blocks))
        blocks, masses = merged_blocks, merged_masses

    return BlockStructure(
        boundaries=tuple(blocks),
        block_masses=as_vector(masses, rational=exact),
        predicted_marginal=ComputationMarginal(as_vector(predicted, rational=exact)),
        initial_boundaries=initial_blocks,
        merges=merges,
    )
