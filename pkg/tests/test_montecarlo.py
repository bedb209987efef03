import math
import warnings

import numpy as np
import pytest

from regime_eq import (
    ConstantFraction,
    DomainError,
    EquilibriumStrategy,
    Preferences,
    RegimeChain,
    RegimePath,
    SimConfig,
    SimulationError,
    StrategySpec,
    UnreachableRegimeError,
    ZeroInvestment,
    estimate_conditional_utility,
    estimate_objective,
    estimate_unconditional_utility,
    exact_wealth_equilibrium,
    expected_utility_exact,
    objective,
    perturbation_test,
    sample_regime_path,
    simulate_paths,
    simulate_wealth,
    solve_g,
    transition_probability,
    value_function,
)
from regime_eq.montecarlo import (
    BLOCK_SIZE,
    ESTIMATE_COLUMNS,
    path_increments,
    resolve_workers,
    segment_path,
    step_grid,
    summarize,
    write_estimates_csv,
)
from regime_eq.regime import path_generator

T = 10.0


def cfg(dt=1e-2, x0=1.0, i0=1, t0=0.0, seed=1, n=1):
    return SimConfig(n, dt, seed, t0, x0, i0, T)


class TestGrid:
    def test_step_grid(self):
        g = step_grid(0.0, 10.0, 0.3)
        assert g[0] == 0.0 and g[-1] == 10.0 and np.all(np.diff(g) > 0)
        assert np.all(np.diff(g)[:-1] == pytest.approx(0.3))
        assert step_grid(0.0, 1.0, 1.0).size == 2

    def test_segments_split_at_jumps(self):
        path = RegimePath(0.0, 1.0, 1, [0.25, 0.55, 0.6], [2, 1, 2])
        seg = segment_path(path, step_grid(0.0, 1.0, 0.1))
        # 0.55 and 0.6: 0.6 may coincide with a node up to rounding; either way totals hold
        assert seg.length.sum() == pytest.approx(1.0, abs=1e-15)
        assert np.all(seg.length > 0)
        ends = seg.start + seg.length
        for tj, sj in zip(path.jump_times, path.states):
            k = np.argmin(np.abs(seg.start - tj))
            assert seg.start[k] == pytest.approx(tj, abs=1e-15) and seg.regime[k] == sj
        assert np.all(seg.regime[seg.start < 0.25] == 1)
        assert ends[-1] == pytest.approx(1.0)

    def test_config_validation(self):
        for kw in (dict(n=0), dict(dt=0.0), dict(dt=20.0), dict(x0=0.0), dict(i0=3)):
            with pytest.raises(DomainError):
                cfg(**kw)


class TestSimulateWealth:
    def test_bond_only_frozen_chain(self, market):
        path = sample_regime_path(1, 0.0, T, RegimeChain(0, 0))
        x = simulate_wealth(path, ZeroInvestment(), cfg(x0=2.0), market)
        assert x == pytest.approx(2.0 * math.exp(market.r[0] * T), rel=1e-13)

    def test_bond_only_general_path(self, market, chain):
        for k in range(5):
            path = sample_regime_path(2, 0.0, T, chain, seed=4, path_index=k)
            occ = path.occupation_times()
            x = simulate_wealth(path, ZeroInvestment(), cfg(dt=0.01), market)
            assert x == pytest.approx(math.exp(market.r[0] * occ[0] + market.r[1] * occ[1]), rel=1e-13)

    def test_exact_homogeneity(self, market, chain, sol):
        path = sample_regime_path(1, 0.0, T, chain, seed=2)
        eq = EquilibriumStrategy(sol)
        inc = path_increments(segment_path(path, step_grid(0, T, 0.01)), step_grid(0, T, 0.01), 9, 0)
        a = simulate_wealth(path, eq, cfg(x0=1.0), market, increments=inc)
        b = simulate_wealth(path, eq, cfg(x0=3.5), market, increments=inc)
        assert b == pytest.approx(3.5 * a, rel=1e-15)

    def test_increment_count_checked(self, market, chain):
        path = sample_regime_path(1, 0.0, T, chain, seed=2)
        with pytest.raises(DomainError):
            simulate_wealth(path, ZeroInvestment(), cfg(), market, increments=np.zeros(3))

    def test_non_finite_wealth(self, market):
        class Reckless(StrategySpec):
            bound_c = 1e200

            def fraction(self, t, i):
                return np.full(np.broadcast(np.asarray(t), np.asarray(i)).shape, 1e200)

        path = sample_regime_path(1, 0.0, T, RegimeChain(0, 0))
        with pytest.raises(SimulationError) as err:
            simulate_wealth(path, Reckless(), cfg(), market)
        assert err.value.step is not None

    def test_bridge_preserves_step_increments(self, chain):
        grid = step_grid(0.0, T, 0.05)
        path = sample_regime_path(1, 0.0, T, RegimeChain(4, 4), seed=8)
        seg = segment_path(path, grid)
        inc = path_increments(seg, grid, 8, 0)
        per_step = np.bincount(seg.step, weights=inc, minlength=grid.size - 1)
        dW = np.sqrt(np.diff(grid)) * path_generator(8, 0, 1).standard_normal(grid.size - 1)
        np.testing.assert_allclose(per_step, dW, atol=1e-13)


class TestExactSolution:
    def test_deterministic_exponent(self, market):
        alpha = 2.0
        s = solve_g(market, Preferences(alpha, alpha), RegimeChain(0, 0), T)
        path = sample_regime_path(2, 0.0, T, RegimeChain(0, 0))
        seg = segment_path(path, step_grid(0, T, 0.1))
        x = exact_wealth_equilibrium(path, s, cfg(dt=0.1, x0=1.5), np.zeros(len(seg)))
        th2, A, r = market.theta(2) ** 2, 1 / alpha, market.r[1]
        assert x == pytest.approx(1.5 * math.exp((th2 * A + r - th2 * A * A / 2) * T), rel=1e-12)

    def test_vanishing_horizon(self, market, prefs, chain):
        s = solve_g(market, prefs, chain, T)
        path = RegimePath(T - 1e-9, T, 1)
        c = SimConfig(1, 1e-9, 0, T - 1e-9, 2.0, 1, T)
        assert exact_wealth_equilibrium(path, s, c, np.zeros(1)) == pytest.approx(2.0, rel=1e-8)

    def test_euler_agrees_with_exact(self, market, chain, sol):
        eq = EquilibriumStrategy(sol)
        grid = step_grid(0, T, 1e-3)
        gaps = []
        for k in range(20):
            path = sample_regime_path(1, 0.0, T, chain, seed=6, path_index=k)
            inc = path_increments(segment_path(path, grid), grid, 6, k)
            a = simulate_wealth(path, eq, cfg(dt=1e-3), market, increments=inc)
            b = exact_wealth_equilibrium(path, sol, cfg(dt=1e-3), inc)
            gaps.append(abs(a - b) / b)
        assert max(gaps) < 2e-3

    def test_strong_order_one(self, market, sol):
        """Mean |X(dt) - X(dt/2)| roughly halves with dt, on shared Brownian paths."""
        chain = RegimeChain(1.0, 1.0)
        eq = EquilibriumStrategy(sol)
        dts = [0.4, 0.2, 0.1, 0.05]
        fine = dts[-1]
        rng = np.random.default_rng(5)
        diffs = np.zeros((len(dts) - 1,))
        n = 300
        for k in range(n):
            path = sample_regime_path(1, 0.0, T, chain, seed=12, path_index=k)
            # Brownian motion on the finest segmentation, summed up for coarser ones
            fgrid = step_grid(0, T, fine)
            fseg = segment_path(path, fgrid)
            pts = np.concatenate([fseg.start, [T]])
            W = np.concatenate([[0.0], np.cumsum(np.sqrt(fseg.length) * rng.standard_normal(len(fseg)))])
            xs = []
            for dt in dts:
                seg = segment_path(path, step_grid(0, T, dt))
                ends = np.interp(np.concatenate([seg.start, [T]]), pts, W)
                xs.append(simulate_wealth(path, eq, cfg(dt=dt), market, increments=np.diff(ends)))
            diffs += np.abs(np.diff(xs))
        ratios = diffs[:-1] / diffs[1:]
        assert np.all((ratios > 2 * 0.8) & (ratios < 2 * 1.2)), ratios


class TestBatch:
    def test_block_engine_matches_single_path(self, market, chain, sol):
        eq = EquilibriumStrategy(sol)
        arms = [eq, ConstantFraction((1.2, 0.4)), ZeroInvestment()]
        for dt in (1e-2, 0.37):
            batch = simulate_paths(arms, 0.0, T, 2, 60, market, chain, seed=3, dt=dt, workers=1)
            c = cfg(dt=dt, i0=2, seed=3)
            for k in range(60):
                path = sample_regime_path(2, 0.0, T, chain, seed=3, path_index=k)
                assert batch.terminal_regime[k] == path.terminal_state
                for a, s in enumerate(arms):
                    x = simulate_wealth(path, s, c, market, path_index=k)
                    assert batch.log_growth[k, a] == pytest.approx(math.log(x), abs=1e-12)

    def test_jump_exactly_on_node(self, market):
        """A jump landing on a grid node switches the regime there without splitting."""
        path = RegimePath(0.0, 1.0, 1, [0.5], [2])
        grid = step_grid(0.0, 1.0, 0.25)
        seg = segment_path(path, grid)
        assert len(seg) == 4 and list(seg.regime) == [1, 1, 2, 2]

    def test_worker_independence(self, market, chain, sol):
        eq = EquilibriumStrategy(sol)
        a = simulate_paths([eq], 0.0, T, 1, 600, market, chain, seed=5, dt=0.02, workers=1)
        b = simulate_paths([eq], 0.0, T, 1, 600, market, chain, seed=5, dt=0.02, workers=3)
        assert np.array_equal(a.log_growth, b.log_growth)
        assert np.array_equal(a.terminal_regime, b.terminal_regime)

    def test_prefix_stability(self, market, chain):
        """Path k does not depend on how many paths are requested.

        Full blocks are bit-identical; a block of different length may
        round its matrix products differently in the last bit.
        """
        a = simulate_paths([ZeroInvestment()], 0.0, T, 1, 300, market, chain, seed=5, dt=0.1, workers=1)
        b = simulate_paths([ZeroInvestment()], 0.0, T, 1, 520, market, chain, seed=5, dt=0.1, workers=1)
        assert np.array_equal(a.terminal_regime, b.terminal_regime[:300])
        assert np.array_equal(a.log_growth[:BLOCK_SIZE], b.log_growth[:BLOCK_SIZE])
        np.testing.assert_allclose(a.log_growth, b.log_growth[:300], rtol=0, atol=1e-14)

    def test_thread_cap(self, monkeypatch):
        monkeypatch.setenv("REGIME_EQ_THREADS", "2")
        assert resolve_workers(8) == 2
        monkeypatch.delenv("REGIME_EQ_THREADS")
        assert resolve_workers(3) == 3

    def test_terminal_frequencies(self, market, chain):
        n = 20_000
        batch = simulate_paths([ZeroInvestment()], 0.0, T, 1, n, market, RegimeChain(1.5, 0.5), seed=2, dt=1.0, workers=1)
        p = transition_probability(0.0, 1, 1, RegimeChain(1.5, 0.5), T)
        f = np.mean(batch.terminal_regime == 1)
        assert abs(f - p) <= 3 * math.sqrt(p * (1 - p) / n)


class TestEstimators:
    def test_unreachable_regime(self, market, prefs):
        s = solve_g(market, prefs, RegimeChain(0, 0), T)
        with pytest.raises(UnreachableRegimeError):
            estimate_conditional_utility(0.0, 1.0, 1, 2, EquilibriumStrategy(s), 100, market, prefs, s.chain, 1)

    def test_vacuous_conditioning(self, market, prefs):
        s = solve_g(market, prefs, RegimeChain(0, 0), T)
        eq = EquilibriumStrategy(s)
        c = estimate_conditional_utility(0.0, 1.0, 1, 1, eq, 500, market, prefs, s.chain, 4, dt=0.05)
        m, se = estimate_unconditional_utility(0.0, 1.0, 1, 1, eq, 500, market, prefs, s.chain, 4, dt=0.05)
        assert c.mean == m and c.standard_error == se and c.n_effective == 500

    def test_low_sample_warning(self, market, prefs, chain, sol):
        with pytest.warns(UserWarning, match="only"):
            est = estimate_conditional_utility(9.9, 1.0, 1, 2, EquilibriumStrategy(sol), 200, market, prefs, chain, 1, dt=0.01)
        assert est.warning is not None and est.n_effective < 30

    def test_degenerate_horizon(self, market, prefs, chain, sol):
        est = estimate_objective(T, 2.5, 1, EquilibriumStrategy(sol), 10, market, prefs, chain, 0)
        assert est.objective == 2.5 and est.objective_se == 0.0

    def test_bond_only_objective(self, market, prefs):
        est = estimate_objective(0.0, 1.0, 2, ZeroInvestment(), 50, market, prefs, RegimeChain(0, 0), 3, T=T, dt=0.1)
        assert est.objective == pytest.approx(math.exp(market.r[1] * T), rel=1e-12)
        assert est.component(2).n_effective == 50
        with pytest.raises(UnreachableRegimeError):
            est.component(1)

    def test_horizon_required(self, market, prefs, chain):
        with pytest.raises(DomainError):
            estimate_objective(0.0, 1.0, 1, ZeroInvestment(), 10, market, prefs, chain, 0)

    def test_estimate_bundle(self, tmp_path, market, prefs, chain, sol):
        batch = simulate_paths([EquilibriumStrategy(sol)], 0.0, T, 1, 400, market, chain, 1, dt=0.05, workers=1)
        est = summarize(batch, 0.0, 1.0, 1, prefs, chain, T, 0.05, 1)
        assert sum(est.n_effective) == 400
        assert all(c.standard_error >= 0 for c in est.components)
        write_estimates_csv(est.rows(), tmp_path / "e.csv")
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines[0] == ",".join(ESTIMATE_COLUMNS) and len(lines) == 4

    def test_objective_matches_closed_form(self, market, prefs, chain, sol):
        est = estimate_objective(0.0, 1.0, 1, EquilibriumStrategy(sol), 4000, market, prefs, chain, 21, dt=0.01, workers=1)
        assert abs(est.objective - objective(0.0, 1.0, 1, sol)) <= 3 * est.objective_se


class TestExpectedUtilityOracle:
    """Deterministic Feynman-Kac values, and Monte Carlo against them."""

    def test_unconditional_expectation_is_value_function(self, market, prefs, chain, sol):
        eq = EquilibriumStrategy(sol)
        for t0 in (0.0, 6.0):
            for i in (1, 2):
                for j in (1, 2):
                    e = expected_utility_exact(t0, 1.0, i, j, eq, market, prefs, chain, T, conditional=False)
                    assert e == pytest.approx(value_function(t0, 1.0, i, j, sol), rel=1e-8)

    def test_conditional_expectation_differs(self, market, prefs, chain, sol):
        eq = EquilibriumStrategy(sol)
        e = expected_utility_exact(0.0, 1.0, 1, 1, eq, market, prefs, chain, T, conditional=True)
        assert abs(e / value_function(0.0, 1.0, 1, 1, sol) - 1) > 5e-3

    def test_bond_only(self, market, prefs):
        e = expected_utility_exact(0.0, 1.0, 1, 1, ZeroInvestment(), market, prefs, RegimeChain(0, 0), T)
        assert e == pytest.approx(-math.exp(-market.r[0] * T), rel=1e-9)

    def test_monte_carlo_matches_oracle(self, market, prefs, chain, sol):
        eq = EquilibriumStrategy(sol)
        batch = simulate_paths([eq], 5.0, T, 1, 6000, market, chain, 17, dt=0.01, workers=1)
        X = batch.wealth(1.0)
        for j in (1, 2):
            a = prefs.alpha(j)
            u = X ** (1 - a) / (1 - a)
            mask = batch.terminal_regime == j
            cond = expected_utility_exact(5.0, 1.0, 1, j, eq, market, prefs, chain, T)
            unc = expected_utility_exact(5.0, 1.0, 1, j, eq, market, prefs, chain, T, conditional=False)
            assert abs(u[mask].mean() - cond) <= 3.5 * u[mask].std(ddof=1) / math.sqrt(mask.sum())
            assert abs(u.mean() - unc) <= 3.5 * u.std(ddof=1) / math.sqrt(u.size)


class TestPerturbation:
    def test_self_perturbation_is_zero(self, sol):
        res = perturbation_test(0.0, 1.0, 1, EquilibriumStrategy(sol), [0.5, 0.1], sol, 200, 3, dt=0.05, workers=1)
        for r in res:
            assert r.slope == 0.0 and r.standard_error == 0.0

    def test_bad_h(self, sol):
        with pytest.raises(DomainError):
            perturbation_test(0.0, 1.0, 1, ZeroInvestment(), [10.0], sol, 10, 3)

    def test_off_grid_h_warns(self, sol):
        with pytest.warns(UserWarning, match="multiple"):
            perturbation_test(0.0, 1.0, 1, ZeroInvestment(), [0.123], sol, 10, 3, dt=0.05, workers=1)

    def test_zero_investment_does_not_help(self, sol):
        res = perturbation_test(0.0, 1.0, 2, ZeroInvestment(), [0.5], sol, 3000, 8, dt=0.01, workers=1)
        assert res[0].slope <= 2 * res[0].standard_error
