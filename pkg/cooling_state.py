"""
PPA Cooling - State Representations
===================================

Probability-vector states for heat-bath algorithmic cooling:

- DiagonalState: diagonal of n computation qubits tensored with a k-level reset system
- ResetDistribution: decreasing equilibrium populations of the reset system
- ComputationMarginal: the computation register after tracing out the reset

Joint entries are laid out as index i*k + m for computation basis index i and
reset level m (computation qubits most significant, qubit 1 first).

Two numeric backends share every code path: float64 arrays, and numpy object
arrays of fractions.Fraction for exact arithmetic.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from errors import (
    InvalidParameterError,
    InvalidStateError,
    SingularDistanceError,
    SingularPolarizationError,
)

logger = logging.getLogger(__name__)

FLOAT = 'float'
RATIONAL = 'rational'

# Absolute slack on normalization for the float backend; the rational one is exact.
NORMALIZATION_TOL = 1e-12

# Largest polarization whose lower population is still a normal float
MAX_EPSILON = 350.0


def _to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    # Read floats through their shortest repr so 0.6 becomes 3/5, not the binary expansion
    return Fraction(repr(float(value)))


def as_vector(values, rational: Optional[bool] = None) -> np.ndarray:
    """Coerce values into a read-only float64 array or object array of Fractions.

    With rational=None the backend is inferred: object arrays and inputs holding
    Fractions stay exact, anything else becomes float64.
    """
    if isinstance(values, np.ndarray):
        if rational is None:
            rational = values.dtype == object
        if not rational and values.dtype == np.float64 and not values.flags.writeable:
            return values
        items = values.ravel()
    else:
        items = list(values)
        if rational is None:
            rational = any(isinstance(v, Fraction) for v in items)

    if rational:
        arr = np.empty(len(items), dtype=object)
        for idx, value in enumerate(items):
            arr[idx] = _to_fraction(value)
    else:
        arr = np.array(items, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def backend_of(values: np.ndarray) -> str:
    return RATIONAL if values.dtype == object else FLOAT


def tolerance_for(backend: str) -> float:
    """Default comparison slack: 1e-12 for floats, zero for exact fractions."""
    return 0 if backend == RATIONAL else NORMALIZATION_TOL


def parse_probabilities(text: str, rational: bool = False) -> List[Union[float, Fraction]]:
    """Parse '0.6,0.4' or '3/5,2/5' into a list of probabilities"""
    parts = [part for part in re.split(r'[,\s]+', text.strip()) if part]
    if not parts:
        raise InvalidParameterError("Empty probability list")
    try:
        exact = [Fraction(part) for part in parts]
    except (ValueError, ZeroDivisionError) as e:
        raise InvalidParameterError(f"Could not parse probabilities {text!r}: {e}") from e
    if rational:
        return exact
    return [float(value) for value in exact]


# ============================================================================
# Validation
# ============================================================================

@dataclass(frozen=True)
class StateViolation:
    """First problem found in a candidate probability vector"""
    kind: str  # dimension | length | non-finite | negative | normalization
    message: str

    def __str__(self):
        return self.message


def _distribution_violation(arr: np.ndarray, what: str) -> Optional[StateViolation]:
    backend = backend_of(arr)
    if backend == FLOAT and not np.all(np.isfinite(arr)):
        index = int(np.argmin(np.isfinite(arr)))
        return StateViolation('non-finite', f"{what} entry {index} is not finite ({arr[index]})")

    negative = np.asarray(arr < 0, dtype=bool)
    if negative.any():
        index = int(np.argmax(negative))
        return StateViolation('negative', f"{what} entry {index} is negative ({arr[index]})")

    total = arr.sum()
    if abs(total - 1) > tolerance_for(backend):
        return StateViolation(
            'normalization',
            f"{what} entries sum to {float(total):.15g}, not 1",
        )
    return None


def validate(n: int, reset_dim: int, probs) -> Optional[StateViolation]:
    """Check a candidate DiagonalState; returns None when it is valid.

    Checks run in order dimensions, length, finiteness, sign, normalization
    and the first failure is returned rather than raised.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        return StateViolation('dimension', f"qubit count must be an integer >= 1, got {n!r}")
    if not isinstance(reset_dim, (int, np.integer)) or reset_dim < 2:
        return StateViolation('dimension', f"reset dimension must be an integer >= 2, got {reset_dim!r}")

    expected = (2 ** n) * reset_dim
    if len(probs) != expected:
        return StateViolation(
            'length',
            f"state has {len(probs)} entries, expected {expected} (2^{n} x {reset_dim})",
        )
    return _distribution_violation(as_vector(probs), 'state')


# ============================================================================
# Domain types
# ============================================================================

@dataclass(frozen=True, eq=False)
class ResetDistribution:
    """Equilibrium populations a_1 >= ... >= a_k > 0 of the reset system"""
    probs: np.ndarray

    def __post_init__(self):
        arr = as_vector(self.probs)
        if len(arr) < 2:
            raise InvalidParameterError(f"Reset system needs at least 2 levels, got {len(arr)}")
        violation = _distribution_violation(arr, 'reset')
        if violation is not None:
            raise InvalidStateError(violation)
        if not np.all(np.asarray(arr[:-1] >= arr[1:], dtype=bool)):
            raise InvalidParameterError(f"Reset populations must be sorted decreasing: {arr.tolist()}")
        if not arr[-1] > 0:
            raise InvalidParameterError("Lowest reset population must be strictly positive")
        object.__setattr__(self, 'probs', arr)

    @property
    def k(self) -> int:
        return len(self.probs)

    @property
    def backend(self) -> str:
        return backend_of(self.probs)

    @property
    def ratio(self):
        """q = a_k / a_1 (a Fraction for the rational backend)"""
        return self.probs[-1] / self.probs[0]

    @property
    def large_gap(self) -> float:
        """log(a_1 / a_k), the only spectrum parameter the limit depends on"""
        return math.log(self.probs[0] / self.probs[-1])

    @property
    def epsilon(self) -> float:
        return 0.5 * self.large_gap

    def as_float(self) -> 'ResetDistribution':
        if self.backend == FLOAT:
            return self
        return ResetDistribution(as_vector(self.probs, rational=False))

    def to_list(self) -> list:
        return _export_values(self.probs)

    def __repr__(self):
        return f"ResetDistribution({_export_values(self.probs)})"


@dataclass(frozen=True, eq=False)
class ComputationMarginal:
    """Populations p_0 ... p_{2^n - 1} of the computation register"""
    p: np.ndarray

    def __post_init__(self):
        arr = as_vector(self.p)
        size = len(arr)
        if size < 2 or size & (size - 1):
            raise InvalidParameterError(f"Marginal length must be a power of two >= 2, got {size}")
        violation = _distribution_violation(arr, 'marginal')
        if violation is not None:
            raise InvalidStateError(violation)
        object.__setattr__(self, 'p', arr)

    @property
    def n(self) -> int:
        return len(self.p).bit_length() - 1

    @property
    def backend(self) -> str:
        return backend_of(self.p)

    def tensor(self, reset: ResetDistribution) -> 'DiagonalState':
        return from_marginal(self, reset)

    def to_list(self) -> list:
        return _export_values(self.p)

    def __repr__(self):
        return f"ComputationMarginal({_export_values(self.p)})"


@dataclass(frozen=True, eq=False)
class DiagonalState:
    """Diagonal of n computation qubits tensored with one reset system"""
    n: int
    reset_dim: int
    probs: np.ndarray

    def __post_init__(self):
        violation = validate(self.n, self.reset_dim, self.probs)
        if violation is not None:
            raise InvalidStateError(violation)
        object.__setattr__(self, 'probs', as_vector(self.probs))

    @classmethod
    def from_probs(cls, n: int, reset_dim: int, values: Iterable,
                   renormalize: bool = False, rational: Optional[bool] = None) -> 'DiagonalState':
        arr = as_vector(values, rational=rational)
        if renormalize:
            total = arr.sum()
            if not total > 0:
                raise InvalidParameterError("Cannot renormalize a vector with zero total")
            arr = as_vector(arr / total, rational=backend_of(arr) == RATIONAL)
        return cls(n, reset_dim, arr)

    @property
    def backend(self) -> str:
        return backend_of(self.probs)

    @property
    def dim(self) -> int:
        return len(self.probs)

    def as_float(self) -> 'DiagonalState':
        if self.backend == FLOAT:
            return self
        return DiagonalState(self.n, self.reset_dim, as_vector(self.probs, rational=False))

    def equals(self, other: 'DiagonalState') -> bool:
        """Exact entrywise equality"""
        return (self.n == other.n and self.reset_dim == other.reset_dim
                and bool(np.array_equal(self.probs, other.probs)))

    def allclose(self, other: 'DiagonalState', atol: float = 1e-12) -> bool:
        if self.n != other.n or self.reset_dim != other.reset_dim:
            return False
        diff = np.abs(self.probs.astype(float) - other.probs.astype(float))
        return bool(np.all(diff <= atol))

    def to_list(self) -> list:
        return _export_values(self.probs)

    def __repr__(self):
        return f"DiagonalState(n={self.n}, reset_dim={self.reset_dim}, probs={_export_values(self.probs)})"


def _export_values(arr: np.ndarray) -> list:
    """JSON-friendly values: floats stay floats, fractions become 'p/q' strings"""
    if backend_of(arr) == RATIONAL:
        return [str(value) for value in arr]
    return [float(value) for value in arr]


# ============================================================================
# Constructors
# ============================================================================

def make_thermal_reset(epsilon: float) -> ResetDistribution:
    """Thermal qubit reset {e^eps, e^-eps} / (e^eps + e^-eps)"""
    try:
        epsilon = float(epsilon)
    except (TypeError, ValueError) as e:
        raise InvalidParameterError(f"Polarization must be a real number, got {epsilon!r}") from e
    if not math.isfinite(epsilon) or epsilon < 0:
        raise InvalidParameterError(f"Polarization must be finite and >= 0, got {epsilon}")
    if epsilon > MAX_EPSILON:
        raise InvalidParameterError(f"Polarization {epsilon} is too large for float populations")

    upper = 1.0 / (1.0 + math.exp(-2.0 * epsilon))
    lower = 1.0 / (1.0 + math.exp(2.0 * epsilon))
    return ResetDistribution(np.array([upper, lower]))


def make_reset(values: Union[str, Sequence], rational: bool = False) -> ResetDistribution:
    """Reset from explicit populations, e.g. '0.6,0.4' or ['3/5', '2/5']"""
    if isinstance(values, str):
        values = parse_probabilities(values, rational=rational)
    return ResetDistribution(as_vector(values, rational=rational or None))


def make_tensor_reset(parts: Sequence[ResetDistribution]) -> ResetDistribution:
    """Sorted-decreasing tensor product of several reset systems"""
    parts = list(parts)
    if not parts:
        raise InvalidParameterError("Tensor reset needs at least one part")

    exact = all(part.backend == RATIONAL for part in parts)
    vectors = [part.probs if exact else part.probs.astype(float) for part in parts]
    joint = reduce(lambda left, right: np.outer(left, right).ravel(), vectors)
    return ResetDistribution(as_vector(np.sort(joint)[::-1], rational=exact))


def from_marginal(marginal: ComputationMarginal, reset: ResetDistribution) -> DiagonalState:
    """Product state marginal ⊗ reset"""
    p, a = _common_backend(marginal.p, reset.probs)
    return DiagonalState(marginal.n, reset.k, np.outer(p, a).ravel())


def maximally_mixed(n: int, reset: ResetDistribution) -> DiagonalState:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidParameterError(f"Qubit count must be an integer >= 1, got {n!r}")
    size = 2 ** n
    if reset.backend == RATIONAL:
        uniform = np.full(size, Fraction(1, size), dtype=object)
    else:
        uniform = np.full(size, 1.0 / size)
    return from_marginal(ComputationMarginal(uniform), reset)


def thermal_state(n: int, epsilon_c: float, reset: ResetDistribution) -> DiagonalState:
    """Every computation qubit thermal at epsilon_c, tensored with the reset"""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidParameterError(f"Qubit count must be an integer >= 1, got {n!r}")
    if reset.backend == RATIONAL:
        raise InvalidParameterError("Thermal computation qubits are irrational; use the float backend")
    qubit = make_thermal_reset(epsilon_c).probs
    marginal = reduce(np.kron, [qubit] * n)
    return from_marginal(ComputationMarginal(marginal), reset)


def _common_backend(*arrays: np.ndarray):
    if all(backend_of(arr) == RATIONAL for arr in arrays):
        return arrays
    return tuple(arr.astype(float) for arr in arrays)


# ============================================================================
# Functionals
# ============================================================================

def computation_marginal(state: DiagonalState) -> ComputationMarginal:
    """Partial trace over the reset system: p_i = sum_m probs[i*k + m]"""
    return ComputationMarginal(state.probs.reshape(2 ** state.n, state.reset_dim).sum(axis=1))


def qubit_polarization(state: DiagonalState, j: int) -> float:
    """1/2 log(P0/P1) for computation qubit j (1-based, qubit 1 most significant).

    Works on the joint entries directly: axis 1 of the reshaped vector is bit j.
    """
    if not 1 <= j <= state.n:
        raise InvalidParameterError(f"Qubit index must be in 1..{state.n}, got {j}")
    grouped = state.probs.reshape(2 ** (j - 1), 2, -1).sum(axis=2).sum(axis=0)
    return _half_log_ratio(grouped[0], grouped[1], j)


def marginal_polarization(values, j: int = 1) -> float:
    """Polarization of qubit j computed from computation-marginal values"""
    p = values.p if isinstance(values, ComputationMarginal) else np.asarray(values)
    n = len(p).bit_length() - 1
    if not 1 <= j <= n:
        raise InvalidParameterError(f"Qubit index must be in 1..{n}, got {j}")
    grouped = p.reshape(2 ** (j - 1), 2, -1).sum(axis=2).sum(axis=0)
    return _half_log_ratio(grouped[0], grouped[1], j)


def _half_log_ratio(lower, upper, j: int) -> float:
    if not lower > 0 or not upper > 0:
        raise SingularPolarizationError(
            f"Qubit {j} has a zero marginal population (P0={float(lower)}, P1={float(upper)})"
        )
    return 0.5 * math.log(lower / upper)


def pairwise_distances(marginal) -> np.ndarray:
    """d_i = log(p_i / p_{i+1}) for consecutive marginal entries"""
    p = marginal.p if isinstance(marginal, ComputationMarginal) else np.asarray(marginal)
    positive = np.asarray(p > 0, dtype=bool)
    if not positive.all():
        index = int(np.argmin(positive))
        raise SingularDistanceError(f"Marginal entry {index} is zero; distance undefined")
    ratios = p[:-1] / p[1:]
    if backend_of(p) == RATIONAL:
        return np.array([math.log(ratio) for ratio in ratios], dtype=np.float64)
    return np.log(ratios)


def max_distance(marginal) -> float:
    """Largest consecutive distance, +inf when a zero entry makes one undefined"""
    try:
        distances = pairwise_distances(marginal)
    except SingularDistanceError:
        return math.inf
    return float(distances.max()) if len(distances) else 0.0
