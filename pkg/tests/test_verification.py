import numpy as np
import pytest

from fracwave import verification
from fracwave.verification import (
    coercivity_suite,
    convergence_study,
    lemma1_check,
    lemma2_check,
    lemma_suite,
    stability_sweep,
)


class TestLemma1:
    def test_constant_sequence(self):
        w = np.ones((6, 3))
        lhs, rhs, gap = lemma1_check(w)
        assert lhs == rhs == 0.0

    def test_alternating_unit_sequence(self):
        e = np.array([1.0, -2.0])
        w = np.array([e, -e, e, -e, e])  # N = 3
        lhs, rhs, gap = lemma1_check(w)
        assert gap < 1e-14 * np.sum(w * w)
        # both endpoint averages vanish for the alternating pattern
        assert rhs == 0.0

    def test_random_sequences(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            N = int(rng.integers(1, 51))
            dim = int(rng.integers(1, 9))
            w = rng.standard_normal((N + 2, dim))
            _, _, gap = lemma1_check(w)
            assert gap <= 1e-12 * (np.sum(w * w) + 1)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            lemma1_check(np.ones((2, 1)))


class TestLemma2:
    def test_single_term(self):
        lhs, rhs, slack = lemma2_check(np.array([[3.0, 1.0]]))
        assert lhs == 0.0
        assert rhs <= 0.0
        assert slack >= 0.0

    def test_equal_entries_closed_form(self):
        # all w~ equal w: lhs = N(N+1)/2 |w|^2, bound = (N^2+2N)/4 |w|^2,
        # slack = N^2 |w|^2 / 4
        w = np.array([0.5, -1.5])
        N = 7
        seq = np.tile(w, (N + 1, 1))
        lhs, rhs, slack = lemma2_check(seq)
        w2 = float(np.dot(w, w))
        assert lhs == pytest.approx(N * (N + 1) / 2 * w2, rel=1e-13)
        assert slack == pytest.approx(N**2 / 4 * w2, rel=1e-12)

    def test_random_sequences(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            N = int(rng.integers(0, 50))
            dim = int(rng.integers(1, 9))
            w = rng.standard_normal((N + 1, dim))
            _, _, slack = lemma2_check(w)
            assert slack >= -1e-12 * (np.sum(w * w) + 1)


class TestSuites:
    def test_lemma_suite_all_pass(self):
        rows = lemma_suite(trials=100, seed=0)
        assert len(rows) == 200
        for _, lemma, value, scale in rows:
            if lemma == 1:
                assert abs(value) <= 1e-12 * scale
            else:
                assert value >= -1e-12 * scale

    def test_lemma_suite_seeded(self):
        a = lemma_suite(trials=10, seed=5)
        b = lemma_suite(trials=10, seed=5)
        assert a == b

    def test_coercivity_suite(self):
        rows = coercivity_suite()
        assert len(rows) == 9
        for r in rows:
            assert r["min_eig"] >= -1e-12 * r["scale"]


class TestConvergence:
    def test_relaxation_order(self):
        report = convergence_study("relaxation", [0.08, 0.04, 0.02])
        assert report.fitted_order >= 1.7
        assert all(e > 0 for e in report.energy_errors)

    def test_undamped_is_second_order(self):
        report = convergence_study("undamped", [0.08, 0.04, 0.02])
        assert 1.8 <= report.fitted_order <= 2.3

    def test_coarse_sanity(self):
        report = convergence_study("relaxation", [0.08, 0.04, 0.02])
        # solution amplitude is 1; the coarsest run must sit well below it
        assert report.max_errors[0] < 0.1

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            convergence_study("bogus", [0.1, 0.05, 0.025])

    def test_needs_three_levels(self):
        with pytest.raises(ValueError):
            convergence_study("relaxation", [0.1, 0.05])


class TestStability:
    def test_no_blowup_under_refinement(self):
        rows = stability_sweep([0.08 / 2**k for k in range(5)])
        ratios = [r["ratio"] for r in rows]
        # the discrete energy stays within a fixed multiple of the
        # initial-data terms at every refinement level
        assert max(ratios) < 10.0
        assert all(np.isfinite(r["energy"]) for r in rows)
