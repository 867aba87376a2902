"""Tests for the theorem checkers, generators and named suites."""
import math
from fractions import Fraction

import numpy as np
import pytest

from cooling_state import (
    ComputationMarginal,
    DiagonalState,
    as_vector,
    from_marginal,
    make_reset,
    make_thermal_reset,
    maximally_mixed,
    pairwise_distances,
)
from errors import InvalidParameterError, PreconditionError
from ppa_engine import METRIC_STATE, RECORD_MARGINALS, RunConfig, is_fixed_point, run
from verification import (
    FROM_ABOVE,
    FROM_BELOW,
    MAX_WITNESSES,
    CrossingEvent,
    VerificationReport,
    Witness,
    check_delta_p0_recurrence,
    check_max_distance,
    check_p0_monotone,
    check_steady_invariance,
    classify_crossings,
    convergence_check,
    random_fixed_point,
    random_rational_reset,
    random_reset,
    random_sorted_marginal,
    rational_oracle_compare,
    run_suite,
)


class FakeTrajectory:
    """Hand-written marginal series standing in for a recorded run"""

    def __init__(self, config, series, converged=True):
        self.config = config
        self.series = [as_vector(p) for p in series]
        self.converged = converged

    def marginal_series(self):
        return self.series

    def p0_series(self):
        return np.array([float(p[0]) for p in self.series])


def witness(i=0):
    return Witness(input='n=1', iteration=i, index=0, observed=1.0, bound=0.5)


# ============================================================================
# Reports
# ============================================================================

class TestVerificationReport:
    def test_empty_report_passes(self):
        assert VerificationReport('maxdist').passed

    def test_witnesses_capped(self):
        report = VerificationReport('maxdist', trials=1)
        for i in range(15):
            report.record(witness(i))
        assert report.failures == 15
        assert len(report.witnesses) == MAX_WITNESSES
        assert not report.passed

    def test_merge_adds_counts(self):
        left = VerificationReport('oracle', trials=2, tolerance=1e-10, extras={'max_deviation': 1e-16})
        right = VerificationReport('oracle', trials=3, tolerance=1e-10, extras={'max_deviation': 3e-16})
        right.record(witness())
        merged = left.merge(right)
        assert merged.trials == 5
        assert merged.failures == 1
        assert merged.extras['max_deviation'] == 3e-16
        assert left.trials == 2

    def test_merge_is_associative(self):
        reports = []
        for idx in range(3):
            report = VerificationReport('blocks', trials=idx + 1,
                                        extras={'max_deviation': idx * 1e-9, 'merge_count': idx})
            for i in range(idx * 4):
                report.record(witness(i))
            reports.append(report)
        a, b, c = reports
        assert a.merge(b).merge(c).to_dict() == a.merge(b.merge(c)).to_dict()
        assert a.merge(b).merge(c).extras['merge_count'] == 3

    def test_to_dict_serializes_infinities(self):
        report = VerificationReport('maxdist', extras={'max_excess': -math.inf})
        report.record(Witness('x', 1, 0, math.inf, 0.5))
        data = report.to_dict()
        assert data['extras']['max_excess'] == '-inf'
        assert data['witnesses'][0]['observed'] == 'inf'
        assert data['passed'] is False


# ============================================================================
# Maximum distance
# ============================================================================

class TestCheckMaxDistance:
    def test_maximally_mixed_run(self, thermal_02):
        trajectory = run(RunConfig(n=3, reset=thermal_02, record_mode=RECORD_MARGINALS))
        report = check_max_distance(trajectory)
        assert report.passed
        assert report.extras['max_excess'] < 1e-9

    def test_fixed_point_run(self, reset_60_40):
        initial = ComputationMarginal([0.75, 0.25])
        trajectory = run(RunConfig(n=1, reset=reset_60_40, initial=initial, record_mode=RECORD_MARGINALS))
        assert check_max_distance(trajectory).passed
        assert pairwise_distances(trajectory.final_marginal)[0] == pytest.approx(math.log(3))

    def test_uniform_reset_run(self):
        reset = make_thermal_reset(0)
        initial = ComputationMarginal([0.4, 0.3, 0.2, 0.1])
        trajectory = run(RunConfig(n=2, reset=reset, initial=initial, record_mode=RECORD_MARGINALS))
        assert check_max_distance(trajectory).passed

    def test_rational_run(self, exact_reset_60_40):
        trajectory = run(RunConfig(n=2, reset=exact_reset_60_40, max_iterations=30, record_mode=RECORD_MARGINALS))
        report = check_max_distance(trajectory)
        assert report.passed
        assert report.tolerance == 0

    def test_violation_reported(self, reset_60_40):
        config = RunConfig(n=1, reset=reset_60_40)
        report = check_max_distance(FakeTrajectory(config, [[0.6, 0.4], [0.8, 0.2]]))
        assert report.failures == 1
        found = report.witnesses[0]
        assert (found.iteration, found.index) == (1, 0)
        assert found.observed == pytest.approx(math.log(4))

    def test_exact_violation_reported(self, exact_reset_60_40):
        config = RunConfig(n=1, reset=exact_reset_60_40)
        series = [[Fraction(3, 5), Fraction(2, 5)], [Fraction(4, 5), Fraction(1, 5)]]
        report = check_max_distance(FakeTrajectory(config, series))
        assert report.failures == 1
        assert report.witnesses[0].bound == pytest.approx(math.log(1.5))

    def test_needs_marginals(self, reset_60_40):
        with pytest.raises(PreconditionError):
            check_max_distance(run(RunConfig(n=1, reset=reset_60_40)))

    def test_unsorted_start_rejected(self, reset_60_40):
        initial = ComputationMarginal([0.25, 0.75])
        trajectory = run(RunConfig(n=1, reset=reset_60_40, initial=initial, record_mode=RECORD_MARGINALS))
        with pytest.raises(PreconditionError, match='non-increasing'):
            check_max_distance(trajectory)

    def test_correlated_start_rejected(self, reset_60_40):
        initial = DiagonalState(1, 2, [0.5, 0.0, 0.0, 0.5])
        trajectory = run(RunConfig(n=1, reset=reset_60_40, initial=initial, record_mode=RECORD_MARGINALS))
        with pytest.raises(PreconditionError, match='product'):
            check_max_distance(trajectory)

    def test_rational_unsorted_start_rejected(self, exact_reset_60_40):
        initial = ComputationMarginal(as_vector(['1/4', '3/4'], rational=True))
        trajectory = run(RunConfig(n=1, reset=exact_reset_60_40, initial=initial, max_iterations=5,
                                   record_mode=RECORD_MARGINALS))
        with pytest.raises(PreconditionError):
            check_max_distance(trajectory)


# ============================================================================
# Monotone p0
# ============================================================================

class TestCheckP0Monotone:
    def test_real_run(self, thermal_02):
        assert check_p0_monotone(run(RunConfig(n=3, reset=thermal_02))).passed

    def test_hand_trajectory(self, reset_60_40):
        config = RunConfig(n=1, reset=reset_60_40)
        assert check_p0_monotone(FakeTrajectory(config, [[0.5, 0.5], [0.6, 0.4], [0.6, 0.4]])).passed

    def test_zero_polarization(self):
        assert check_p0_monotone(run(RunConfig(n=2, reset=make_thermal_reset(0)))).passed

    def test_drop_reported(self, reset_60_40):
        config = RunConfig(n=1, reset=reset_60_40)
        report = check_p0_monotone(FakeTrajectory(config, [[0.5, 0.5], [0.6, 0.4], [0.55, 0.45]]))
        assert report.failures == 1
        assert report.witnesses[0].iteration == 2
        assert report.witnesses[0].observed == pytest.approx(0.55)


# ============================================================================
# Steady states
# ============================================================================

class TestSteadyInvariance:
    def test_strict_fixed_point(self, reset_60_40):
        report = check_steady_invariance(DiagonalState(1, 2, [0.45, 0.30, 0.15, 0.10]), reset_60_40)
        assert report.passed
        assert report.extras['invariant'] is True

    def test_exact_fixed_point(self, exact_reset_60_40):
        state = DiagonalState(1, 2, as_vector(['9/20', '3/10', '3/20', '1/10'], rational=True))
        report = check_steady_invariance(state, exact_reset_60_40)
        assert report.passed
        assert report.extras['max_change'] == 0.0
        assert report.tolerance == 0

    def test_equality_case(self, reset_60_40):
        report = check_steady_invariance(DiagonalState(1, 2, [0.36, 0.24, 0.24, 0.16]), reset_60_40)
        assert report.passed
        assert report.extras['invariant'] is True

    def test_maximally_mixed_moves(self, thermal_02):
        report = check_steady_invariance(maximally_mixed(2, thermal_02), thermal_02)
        assert report.passed
        assert report.extras['invariant'] is False
        assert report.extras['max_change'] > 0

    def test_accepts_marginal(self, reset_60_40):
        assert check_steady_invariance(ComputationMarginal([0.75, 0.25]), reset_60_40).passed


# ============================================================================
# Crossings
# ============================================================================

class TestClassifyCrossings:
    def test_maximally_mixed_one_qubit(self, reset_60_40):
        events = classify_crossings(maximally_mixed(1, reset_60_40), reset_60_40)
        assert [(e.kind, e.i, e.j, e.m_i, e.m_j) for e in events] == [
            (FROM_BELOW, 0, 1, 1, 0),
            (FROM_ABOVE, 1, 0, 0, 1),
        ]
        assert events[0].value_i == pytest.approx(0.2)
        assert events[0].value_j == pytest.approx(0.3)

    def test_fixed_point_has_none(self, reset_60_40):
        assert classify_crossings(DiagonalState(1, 2, [0.36, 0.24, 0.24, 0.16]), reset_60_40) == []

    def test_uniform_reset_has_none(self):
        reset = make_thermal_reset(0)
        assert classify_crossings(from_marginal(ComputationMarginal([0.4, 0.3, 0.2, 0.1]), reset), reset) == []

    def test_non_product_rejected(self, reset_60_40):
        with pytest.raises(InvalidParameterError):
            classify_crossings(DiagonalState(1, 2, [0.45, 0.15, 0.3, 0.1]), reset_60_40)

    def test_dimension_mismatch(self, reset_60_40):
        with pytest.raises(InvalidParameterError):
            classify_crossings(maximally_mixed(1, reset_60_40), make_reset([0.5, 0.3, 0.2]))

    def test_three_level_events_sorted(self):
        reset = make_reset([0.5, 0.3, 0.2])
        events = classify_crossings(maximally_mixed(1, reset), reset)
        keys = [(e.i, e.j, e.m_i, e.m_j, e.kind) for e in events]
        assert keys == sorted(keys)
        assert {(e.m_i, e.m_j) for e in events if e.kind == FROM_BELOW} == {(1, 0), (2, 0), (2, 1)}

    def test_event_to_dict(self):
        event = CrossingEvent(FROM_BELOW, 0, 1, 1, 0, 0.2, 0.3)
        assert event.to_dict()['kind'] == 'from-below'

    def test_empty_exactly_at_fixed_points(self):
        rng = np.random.default_rng(2024)
        for _ in range(60):
            reset = random_reset(int(rng.integers(2, 5)), rng)
            n = int(rng.integers(1, 5))
            if rng.random() < 0.5:
                marginal = random_fixed_point(n, reset, rng)
            else:
                marginal = random_sorted_marginal(n, rng)
            state = from_marginal(marginal, reset)
            assert (classify_crossings(state, reset) == []) == is_fixed_point(state, reset)


# ============================================================================
# Delta p0 recurrence
# ============================================================================

class TestDeltaP0Recurrence:
    def test_two_qubits(self, thermal_02):
        report = check_delta_p0_recurrence(run(RunConfig(n=2, reset=thermal_02)))
        assert report.passed
        assert report.extras['max_tail_residual'] < 1e-8

    def test_one_qubit_residual_vanishes(self, reset_60_40):
        report = check_delta_p0_recurrence(run(RunConfig(n=1, reset=reset_60_40)))
        assert report.passed
        assert report.extras['max_tail_residual'] < 1e-15
        assert report.extras['final_residual'] < 1e-15

    def test_requires_qubit_reset(self):
        reset = make_reset([0.5, 0.3, 0.2])
        trajectory = run(RunConfig(n=1, reset=reset))
        with pytest.raises(PreconditionError, match='2-level'):
            check_delta_p0_recurrence(trajectory)

    def test_requires_convergence(self, thermal_02):
        trajectory = run(RunConfig(n=3, reset=thermal_02, max_iterations=2))
        with pytest.raises(PreconditionError):
            check_delta_p0_recurrence(trajectory)


# ============================================================================
# Rational oracle
# ============================================================================

class TestRationalOracle:
    def test_one_qubit_hits_fixed_point(self, exact_reset_60_40):
        report = rational_oracle_compare(RunConfig(n=1, reset=exact_reset_60_40), iterations=100)
        assert report.passed
        assert report.extras['exact_fixed_point_at'] == 2
        assert report.extras['max_deviation'] < 1e-14
        assert report.extras['final_p0'] == pytest.approx(0.6)
        assert report.extras['final_p0_exact'] == '3/5'

    def test_two_qubits_track_exact_limit(self, exact_reset_60_40):
        report = rational_oracle_compare(RunConfig(n=2, reset=exact_reset_60_40), iterations=1000)
        assert report.passed
        assert report.extras['max_deviation'] < 1e-10
        assert report.extras['final_p0'] == pytest.approx(27 / 65, abs=1e-6)
        assert 'final_p0_exact' not in report.extras

    @pytest.mark.slow
    @pytest.mark.parametrize('n', [3, 4])
    def test_larger_registers_track_float(self, exact_reset_60_40, n):
        report = rational_oracle_compare(RunConfig(n=n, reset=exact_reset_60_40), iterations=1000)
        assert report.passed, report.to_dict()['witnesses']
        assert report.extras['max_deviation'] < 1e-10

    def test_uniform_reset_is_exact_in_float(self):
        reset = make_reset('1/2,1/2', rational=True)
        report = rational_oracle_compare(RunConfig(n=2, reset=reset), iterations=5)
        assert report.extras['max_deviation'] == 0.0
        assert report.extras['exact_fixed_point_at'] == 1

    def test_float_reset_rejected(self, reset_60_40):
        with pytest.raises(InvalidParameterError):
            rational_oracle_compare(RunConfig(n=1, reset=reset_60_40), iterations=10)

    def test_limits(self, exact_reset_60_40):
        with pytest.raises(InvalidParameterError):
            rational_oracle_compare(RunConfig(n=9, reset=exact_reset_60_40), iterations=10)
        with pytest.raises(InvalidParameterError):
            rational_oracle_compare(RunConfig(n=1, reset=exact_reset_60_40), iterations=0)
        with pytest.raises(InvalidParameterError):
            rational_oracle_compare(RunConfig(n=1, reset=exact_reset_60_40), iterations=10_001)


# ============================================================================
# Generators
# ============================================================================

class TestGenerators:
    def test_sorted_marginal(self):
        marginal = random_sorted_marginal(3, np.random.default_rng(1))
        assert len(marginal.p) == 8
        assert np.all(np.diff(marginal.p) <= 0)
        assert marginal.p.sum() == pytest.approx(1.0)

    def test_clamped_marginal(self):
        marginal = random_sorted_marginal(4, np.random.default_rng(2), clamp_gap=0.1)
        assert pairwise_distances(marginal).max() <= 0.1 + 1e-12

    def test_reset(self):
        rng = np.random.default_rng(3)
        reset = random_reset(3, rng)
        assert reset.k == 3
        assert 0.02 <= reset.large_gap <= 1.0
        assert random_reset(4, rng, large_gap=0.5).large_gap == pytest.approx(0.5, abs=1e-12)

    def test_reset_needs_two_levels(self):
        with pytest.raises(InvalidParameterError):
            random_reset(1, np.random.default_rng(0))

    def test_rational_reset(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            reset = random_rational_reset(rng)
            assert reset.backend == 'rational'
            assert reset.probs[0] > Fraction(1, 2)
            assert reset.probs[0].denominator <= 10

    def test_fixed_point(self, thermal_02):
        marginal = random_fixed_point(3, thermal_02, np.random.default_rng(5))
        assert np.all(pairwise_distances(marginal) > thermal_02.large_gap)
        assert is_fixed_point(from_marginal(marginal, thermal_02), thermal_02)


# ============================================================================
# Suites
# ============================================================================

class TestRunSuite:
    @pytest.mark.parametrize('name', ['maxdist', 'monotone', 'steady', 'recurrence', 'oracle'])
    def test_small_suite_passes(self, name):
        report = run_suite(name, trials=4, seed=42)
        assert report.passed, report.to_dict()
        assert report.trials == 4
        assert report.invariant_name == name

    def test_seed_reproduces_report(self):
        assert run_suite('monotone', 3, 7).to_dict() == run_suite('monotone', 3, 7).to_dict()

    def test_fixed_parameters(self, exact_reset_60_40):
        report = run_suite('oracle', 2, 0, n=2, reset=exact_reset_60_40)
        assert report.passed
        assert report.extras['max_deviation'] < 1e-10

    def test_unknown_suite(self):
        with pytest.raises(InvalidParameterError):
            run_suite('entropy', 1, 0)

    def test_needs_trials(self):
        with pytest.raises(InvalidParameterError):
            run_suite('maxdist', 0, 0)

    @pytest.mark.slow
    def test_max_distance_thousand_trials(self):
        assert run_suite('maxdist', 1000, 42).passed

    @pytest.mark.slow
    def test_monotone_thousand_trials(self):
        assert run_suite('monotone', 1000, 0).passed

    @pytest.mark.slow
    def test_block_prediction_hundred_trials(self):
        report = run_suite('blocks', 100, 10)
        assert report.passed, report.to_dict()['witnesses']

    @pytest.mark.slow
    def test_all_suites(self):
        report = run_suite('all', 5, 1)
        assert report.passed
        assert set(report.extras['suites']) == {'maxdist', 'monotone', 'steady', 'recurrence', 'oracle', 'blocks'}


class TestConvergenceCheck:
    def test_converged_run(self, thermal_02):
        trajectory = run(RunConfig(n=2, reset=thermal_02, convergence_tol=1e-13, convergence_metric=METRIC_STATE))
        report = convergence_check(trajectory)
        assert report.passed
        assert report.extras['max_deviation'] < 1e-8

    def test_unconverged_run_fails(self, thermal_02):
        report = convergence_check(run(RunConfig(n=3, reset=thermal_02, max_iterations=1)))
        assert not report.passed

    @pytest.mark.parametrize('seed', range(8))
    def test_starts_within_the_gap_reach_the_limit(self, seed):
        rng = np.random.default_rng(seed)
        reset = random_reset(int(rng.integers(2, 5)), rng) if seed % 2 else make_thermal_reset(0.2)
        n = seed % 4 + 1
        initial = random_sorted_marginal(n, rng, clamp_gap=reset.large_gap)
        assert pairwise_distances(initial).max() <= reset.large_gap + 1e-12
        config = RunConfig(n=n, reset=reset, initial=initial, convergence_tol=1e-13,
                           convergence_metric=METRIC_STATE)
        report = convergence_check(run(config))
        assert report.passed, report.to_dict()

    @pytest.mark.slow
    def test_hundred_starts_within_the_gap(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            reset = random_reset(int(rng.integers(2, 5)), rng)
            n = int(rng.integers(1, 6))
            initial = random_sorted_marginal(n, rng, clamp_gap=reset.large_gap)
            config = RunConfig(n=n, reset=reset, initial=initial, convergence_tol=1e-13,
                               convergence_metric=METRIC_STATE)
            report = convergence_check(run(config))
            assert report.passed, report.to_dict()
            worst = max(worst, report.extras['max_deviation'])
        assert worst < 1e-8
