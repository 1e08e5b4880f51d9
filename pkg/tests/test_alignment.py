"""Tests for the interference alignment solvers.

The iterative and closed-form solvers are validated against the same
criteria: residual cross-pair leakage at tolerance, unit-norm vectors,
and a non-degenerate direct link after combining.
"""

import numpy as np
import pytest
from scipy import stats

from clustalign.alignment import (
    AlignmentSolution,
    ClusterChannels,
    ConvergenceError,
    FeasibilityError,
    effective_coefficient,
    is_feasible,
    leakage_terms,
    solve_ia,
)
from clustalign.channel import sample_channel, standard_complex_normal


def _random_cluster(cbar, n_r, n_t, seed, mu=1.0):
    return ClusterChannels.sample(cbar, n_r, n_t, mu, np.random.default_rng(seed))


def _check_solution(channels, sol, tol=1e-8):
    """Common post-conditions: leakage, norms, cross terms, rank."""
    assert sol.leakage <= tol
    for v in sol.precoders:
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12
    for u in sol.combiners:
        assert abs(np.linalg.norm(u) - 1.0) < 1e-12
    cbar = channels.cbar
    for i in range(cbar):
        for j in range(cbar):
            coeff = effective_coefficient(
                sol.combiners[i], channels.channel(i, j), sol.precoders[j]
            )
            if i == j:
                assert abs(coeff) > 1e-6  # direct link survives
            else:
                assert abs(coeff) <= 1e-4


class TestFeasibility:
    def test_known_triples(self):
        assert is_feasible(2, 2, 3)
        assert not is_feasible(2, 2, 4)
        assert is_feasible(1, 1, 1)
        assert not is_feasible(1, 1, 2)
        assert is_feasible(4, 4, 7)
        assert is_feasible(2, 3, 4)


class TestIterativeSolver:
    def test_single_pair_has_zero_leakage(self):
        channels = _random_cluster(1, 2, 2, seed=0)
        sol = solve_ia(channels)
        assert sol.leakage == 0.0
        assert sol.iterations == 0

    def test_three_pairs_two_antennas(self):
        channels = _random_cluster(3, 2, 2, seed=1)
        sol = solve_ia(channels, rng=np.random.default_rng(100))
        _check_solution(channels, sol)
        assert sol.iterations <= 5000

    def test_larger_network(self):
        channels = _random_cluster(4, 3, 2, seed=2)
        sol = solve_ia(channels, rng=np.random.default_rng(101))
        _check_solution(channels, sol)

    def test_infeasible_raises(self):
        channels = _random_cluster(4, 2, 2, seed=3)
        with pytest.raises(FeasibilityError):
            solve_ia(channels)

    def test_leakage_history_is_monotone(self):
        channels = _random_cluster(3, 2, 2, seed=4)
        sol = solve_ia(
            channels, rng=np.random.default_rng(102), record_history=True
        )
        hist = np.asarray(sol.history)
        assert hist.size >= 1
        assert np.all(np.diff(hist) <= hist[:-1] * 1e-9 + 1e-12)

    def test_deterministic_given_rng(self):
        channels = _random_cluster(3, 2, 2, seed=5)
        a = solve_ia(channels, rng=np.random.default_rng(7))
        b = solve_ia(channels, rng=np.random.default_rng(7))
        assert np.array_equal(a.precoders, b.precoders)
        assert np.array_equal(a.combiners, b.combiners)
        assert a.leakage == b.leakage
        assert a.iterations == b.iterations

    def test_solution_leads_with_real_positive_entry(self):
        channels = _random_cluster(3, 2, 2, seed=6)
        sol = solve_ia(channels, rng=np.random.default_rng(8))
        for vec in list(sol.precoders) + list(sol.combiners):
            lead = vec[np.argmax(np.abs(vec) > 1e-12)]
            assert abs(lead.imag) < 1e-12 and lead.real > 0


class TestClosedFormSolver:
    def test_meets_same_criteria_as_iterative(self):
        for seed in range(20):
            channels = _random_cluster(3, 2, 2, seed=200 + seed)
            sol = solve_ia(channels, method="closed_form")
            _check_solution(channels, sol)
            assert sol.iterations == 0

    def test_rejected_outside_three_pair_two_antenna(self):
        channels = _random_cluster(4, 3, 2, seed=7)
        with pytest.raises(ValueError):
            solve_ia(channels, method="closed_form")

    def test_agrees_with_iterative_on_leakage(self):
        channels = _random_cluster(3, 2, 2, seed=8)
        closed = solve_ia(channels, method="closed_form")
        iterative = solve_ia(channels, rng=np.random.default_rng(9))
        assert closed.leakage <= 1e-8
        assert iterative.leakage <= 1e-8


class TestLeakageTerms:
    def test_diagonal_is_zero_and_offdiag_matches(self):
        channels = _random_cluster(3, 2, 2, seed=9)
        sol = solve_ia(channels, rng=np.random.default_rng(10))
        terms = leakage_terms(channels.matrices, sol.combiners, sol.precoders)
        assert terms.shape == (3, 3)
        assert np.all(np.diag(terms) == 0.0)
        assert np.sum(terms) == pytest.approx(sol.leakage, abs=1e-15)


class TestEffectiveCoefficient:
    def test_basis_vectors_pick_matrix_entry(self):
        ch = sample_channel(2, 2, 1.0, np.random.default_rng(11))
        e0 = np.array([1.0, 0.0], dtype=complex)
        e1 = np.array([0.0, 1.0], dtype=complex)
        assert effective_coefficient(e0, ch, e0) == ch.entries[0, 0]
        assert effective_coefficient(e0, ch, e1) == ch.entries[0, 1]

    def test_shape_mismatch_rejected(self):
        ch = sample_channel(2, 2, 1.0, np.random.default_rng(12))
        with pytest.raises(ValueError):
            effective_coefficient(np.ones(3, dtype=complex), ch, np.ones(2, dtype=complex))

    def test_effective_power_is_unit_exponential(self):
        """|u^H H v|^2 with aligned unit vectors keeps the Exp(1) law.

        The direct-link channel entries are independent of the vectors
        produced by the alignment (which only sees cross channels in the
        relevant directions), so the quadratic form stays unit-mean
        exponential.
        """
        powers = []
        rng = np.random.default_rng(13)
        for seed in range(4000):
            channels = _random_cluster(3, 2, 2, seed=(3000, seed))
            sol = solve_ia(channels, method="closed_form")
            h = standard_complex_normal(rng, (2, 2))
            powers.append(abs(np.vdot(sol.combiners[0], h @ sol.precoders[0])) ** 2)
        assert stats.kstest(powers, "expon").pvalue > 0.01

    def test_phase_is_uniform(self):
        rng = np.random.default_rng(14)
        phases = []
        for seed in range(3000):
            channels = _random_cluster(3, 2, 2, seed=(4000, seed))
            sol = solve_ia(channels, method="closed_form")
            h = standard_complex_normal(rng, (2, 2))
            phases.append(np.angle(np.vdot(sol.combiners[0], h @ sol.precoders[0])))
        phases = np.asarray(phases)
        assert stats.kstest((phases + np.pi) / (2 * np.pi), "uniform").pvalue > 0.01


class TestNoisePreservation:
    def test_unit_combiner_preserves_noise_variance(self):
        """Projecting white noise on a unit-norm combiner keeps its power."""
        channels = _random_cluster(3, 2, 2, seed=15)
        sol = solve_ia(channels, rng=np.random.default_rng(16))
        rng = np.random.default_rng(17)
        noise_var = 0.7
        n = standard_complex_normal(rng, (100000, 2)) * np.sqrt(noise_var)
        projected = n @ np.conj(sol.combiners[0])
        measured = np.mean(np.abs(projected) ** 2)
        assert abs(measured - noise_var) / noise_var < 0.02


class TestConvergenceReporting:
    def test_convergence_error_carries_best_leakage(self):
        channels = _random_cluster(3, 2, 2, seed=18)
        with pytest.raises(ConvergenceError) as excinfo:
            solve_ia(
                channels,
                tolerance=1e-30,
                max_iterations=5,
                rng=np.random.default_rng(19),
                restarts=0,
            )
        assert excinfo.value.best_leakage > 0

    def test_solution_reports_restarts_field(self):
        channels = _random_cluster(3, 2, 2, seed=20)
        sol = solve_ia(channels, rng=np.random.default_rng(21))
        assert isinstance(sol, AlignmentSolution)
        assert sol.restarts >= 0
