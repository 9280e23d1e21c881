import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tcpuzzle.game import (GameError, InfeasibleMarketError, NoSolutionError, bisect_decreasing,
                           brute_force_optimal, factor_difficulty, finite_n_ladder,
                           finite_n_optimal, max_difficulty_bound, nash_difficulty_asymptotic,
                           provider_objective, provider_reduced_objective, recommend,
                           reduced_provider_objective, user_equilibrium, utility_eval, ybar_residual)
from tcpuzzle.puzzle import PuzzleParams


def grid_argmax_G(w_bar, N, mu, n=1_000_000):
    """Independent oracle: dense evaluation of G on the open interval (N, N + mu)."""
    y = np.linspace(N, N + mu, n + 2)[1:-1]
    g = (w_bar / y - 1.0 / (mu + N - y) ** 2) * (y - N)
    i = int(np.argmax(g))
    return y[i], mu / (n + 1)


class TestAsymptotic:
    def test_worked_example(self):
        assert nash_difficulty_asymptotic(140630, 1.1) == pytest.approx(66966.67, abs=0.01)
        assert nash_difficulty_asymptotic(1024, 1.0) == 512

    def test_monotone(self):
        vals = [nash_difficulty_asymptotic(1000, a) for a in (0.5, 1, 2, 4, 100)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert nash_difficulty_asymptotic(2000, 1) > nash_difficulty_asymptotic(1000, 1)

    def test_bad_inputs(self):
        with pytest.raises(GameError):
            nash_difficulty_asymptotic(0, 1)
        with pytest.raises(GameError):
            nash_difficulty_asymptotic(1, -1)


class TestFactor:
    def test_examples(self):
        assert factor_difficulty(66966.67, 2) == (2, 17)
        assert factor_difficulty(512, 1) == (1, 10)
        assert factor_difficulty(512, 4) == (4, 8)

    @given(ell=st.floats(8, 1e12), k=st.integers(1, 8))
    def test_bracket(self, ell, k):
        k, m = factor_difficulty(ell, k)
        assert ell <= k * 2 ** (m - 1) < 2 * ell

    def test_bad(self):
        with pytest.raises(GameError):
            factor_difficulty(0, 2)


class TestBound:
    def test_examples(self):
        assert max_difficulty_bound(10 * 1000, 10, 100) == pytest.approx(999.9999)
        assert max_difficulty_bound(10 * 1000, 10, 1e9) == pytest.approx(1000)

    def test_infeasible(self):
        with pytest.raises(InfeasibleMarketError):
            max_difficulty_bound(10 * 0.0001, 10, 100)


class TestUserEquilibrium:
    def test_symmetric_residual(self):
        w, mu, ell = [5000.0] * 10, 20.0, 300.0
        eq = user_equilibrium(w, mu, ell)
        assert abs(ybar_residual(eq.y_bar, sum(w), 10, mu, ell)) < 1e-6
        assert eq.x_bar == pytest.approx(eq.y_bar - 10)
        assert not eq.non_participants

    def test_small_case_matches_grid(self):
        y = np.linspace(1, 6, 2_000_001)[1:-1]
        r = 10 / y - 1 - 1 / (5 + 1 - y) ** 2
        root = y[np.argmax(r < 0)]
        eq = user_equilibrium([10], 5, 1)
        assert 1 < eq.y_bar < 6
        assert eq.y_bar == pytest.approx(root, abs=1e-5)

    def test_first_order_condition_per_user(self):
        w = np.array([2000.0, 3500.0, 5000.0, 8000.0])
        mu, ell = 30.0, 400.0
        eq = user_equilibrium(w, mu, ell)
        foc = w / (1 + eq.x) - ell - 1 / (mu - eq.x_bar) ** 2
        assert np.all(np.abs(foc) < 1e-6)

    def test_no_unilateral_gain(self):
        w = [2000.0, 3500.0, 5000.0, 8000.0]
        mu, ell = 30.0, 400.0
        eq = user_equilibrium(w, mu, ell)
        for i, wi in enumerate(w):
            others = eq.x_bar - eq.x[i]
            u0 = utility_eval(eq.x[i], others, wi, ell, mu)
            for d in (-1e-3, 1e-3):
                assert utility_eval(eq.x[i] + d, others, wi, ell, mu) <= u0 + 1e-12

    def test_non_participant_flagged(self):
        eq = user_equilibrium([1.0, 5000.0, 5000.0], 20.0, 100.0)
        assert eq.non_participants == [0]

    def test_ell_at_bound(self):
        with pytest.raises(NoSolutionError):
            user_equilibrium([1000.0] * 10, 100, max_difficulty_bound(10000, 10, 100))


def test_utility_eval():
    assert utility_eval(0, 0, 10, PuzzleParams(1, 1), 4) == -0.25
    # w_i = 0: every positive rate is worse than abstaining
    assert all(utility_eval(x, 1, 0, 8, 20) < utility_eval(0, 1, 0, 8, 20) for x in (0.1, 1, 5))
    with pytest.raises(GameError):
        utility_eval(5, 5, 1, 1, 10)


class TestFiniteN:
    def test_matches_grid_oracle(self):
        for w_bar, N, mu in [(10 * 5000, 10, 20), (140630 * 100, 100, 110), (1e6, 50, 400)]:
            y_star, _ = finite_n_optimal(w_bar, N, mu)
            y_grid, step = grid_argmax_G(w_bar, N, mu)
            assert abs(y_star - y_grid) <= 2 * step
            g = provider_reduced_objective(np.array([y_star, y_grid]), w_bar, N, mu)
            assert g[0] >= g[1] - 1e-9 * abs(g[1])

    def test_convergence_ladder(self):
        rows = finite_n_ladder(140630, 1.1)
        gaps = [g for _, _, g in rows]
        assert all(a > b for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 0.02

    def test_argmax_moves_with_w_bar(self):
        # the first FOC term scales with w_bar, the second does not
        N, mu = 10, 20.0
        ys = [finite_n_optimal(s * 50000, N, mu)[0] for s in (0.5, 1, 2, 4)]
        assert all(a < b for a, b in zip(ys, ys[1:]))
        for s, y in zip((0.5, 1, 2, 4), ys):
            assert s * 50000 * N / y ** 2 == pytest.approx((mu + y - N) / (mu + N - y) ** 3, rel=1e-6)


class TestGrid:
    def test_small_market(self):
        res = brute_force_optimal([5000.0] * 10, 20.0)
        assert res.lemma_holds
        assert res.best_value == max(res.values.values())

    def test_reduced_dominates(self):
        for km, _ in brute_force_optimal([5000.0] * 10, 20.0).values.items():
            p = PuzzleParams(*km, 64 if km[1] < 64 else 72)
            assert reduced_provider_objective(p, 3.0) - provider_objective(p, 3.0) == pytest.approx((2 + p.k / 2) * 3.0)

    def test_zero_rate(self):
        assert provider_objective(PuzzleParams(2, 5), 0) == 0

    def test_infeasible_grid(self):
        with pytest.raises(InfeasibleMarketError):
            brute_force_optimal([1.0] * 10, 20.0, k_range=[8], m_range=[20])


def test_recommend():
    rec = recommend(140630, 1.1)
    assert (rec.k, rec.m) == (2, 17)
    assert rec.params == PuzzleParams(2, 17, 64)
    assert [n for n, _, _ in rec.corrections] == [10, 100, 1000, 10000]


def test_bisect_avoids_endpoint():
    root = bisect_decreasing(lambda x: 1 / (2 - x) ** 2 * -1 + 1, 0, 2)
    assert root == pytest.approx(1, abs=1e-8)
    assert math.isfinite(root)
