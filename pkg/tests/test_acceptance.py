"""
Acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line with the measured
quantity and the tolerance it is held to. Criteria 8-10 share one Monte
Carlo run (10^5 paths per starting regime, dt = 1e-3) and take a few
minutes.
"""

import math

import numpy as np
import pytest

from regime_eq import (
    MarketParams,
    Preferences,
    RegimeChain,
    RunConfig,
    equilibrium_fraction,
    interpolate_g,
    merton_fraction,
    solve_g,
    stationary_distribution,
)
from regime_eq.cli import main
from regime_eq.figures import ALPHA_VALUES, BETA_VALUES, LAMBDA_VALUES
from regime_eq.odes import g_index
from regime_eq.regime import transition_probabilities
from regime_eq.verification import verify

T = 10.0
MC_PATHS = 100_000
MC_DT = 1e-3
DETERMINISM_PATHS = 2_000


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {name}: {detail}")
        assert ok, f"criterion {number} ({name}) failed: {detail}"

    return emit


def test_01_merton_anchor(report, market):
    value = merton_fraction(1, 2.0, market)
    err = abs(value - 0.8)
    report(1, "Merton anchor", err <= 1e-12, f"merton(1, 2) = {value!r}, |error| = {err:.1e} <= 1e-12")


def test_02_sandwich(report, market, sol):
    t = sol.grid[:-1]
    away = T - t >= 1e-8
    worst_strict, worst_margin = math.inf, math.inf
    for i in (1, 2):
        pi = equilibrium_fraction(t, i, sol)
        gap = np.minimum(pi - merton_fraction(i, 3.0, market), merton_fraction(i, 2.0, market) - pi)
        worst_strict = min(worst_strict, gap.min())
        worst_margin = min(worst_margin, gap[away].min())
    ok = worst_strict > 0 and worst_margin > 1e-10
    report(2, "sandwich", ok,
           f"{t.size} grid times x 2 regimes, min gap {worst_strict:.2e} > 0, "
           f"min gap for T-t >= 1e-8 is {worst_margin:.2e} > 1e-10")


def test_03_terminal_limit(report, market, prefs, sol):
    gaps = [abs(equilibrium_fraction(T - 1e-8, i, sol) - merton_fraction(i, prefs.alpha(i), market)) for i in (1, 2)]
    report(3, "terminal limit", max(gaps) < 1e-6, f"|pi*(T-1e-8, i) - merton(i, alpha_i)| = {gaps[0]:.1e}, {gaps[1]:.1e} < 1e-6")


def test_04_collapse(report, market, chain):
    s = solve_g(market, Preferences(2.0, 2.0), chain, T)
    err = max(np.max(np.abs(equilibrium_fraction(s.grid, i, s) - merton_fraction(i, 2.0, market))) for i in (1, 2))
    report(4, "equal risk aversion collapse", err < 1e-9, f"max |pi* - merton(i, 2)| = {err:.1e} < 1e-9")


def test_05_degenerate_closed_form(report, market):
    alpha = 2.0
    s = solve_g(market, Preferences(alpha, alpha), RegimeChain(0, 0), T)
    worst = 0.0
    for i in (1, 2):
        rate = (1 - alpha) / alpha * (market.theta(i) ** 2 / (2 * alpha) + market.r[i - 1])
        exact = np.exp(rate * (T - s.grid))
        for j in (1, 2):
            worst = max(worst, np.max(np.abs(s.g[:, g_index(i, j)] / exact - 1)))
    report(5, "frozen chain closed form", worst < 1e-9, f"max relative error {worst:.1e} < 1e-9 on [0, 10]")


def test_06_solver_convergence(report, market, prefs, chain):
    loose = solve_g(market, prefs, chain, T, tolerance=1e-8)
    tight = solve_g(market, prefs, chain, T, tolerance=1e-12)
    t = np.union1d(loose.grid, tight.grid)
    diff = np.max(np.abs(interpolate_g(loose, t) - interpolate_g(tight, t)))
    report(6, "solver convergence", diff < 1e-6, f"max |g(tol 1e-8) - g(tol 1e-12)| = {diff:.1e} < 1e-6")


def test_07_transition_probabilities(report):
    worst_sum, worst_bound = 0.0, -math.inf
    for chain in (RegimeChain(1, 1), RegimeChain(0.5, 2.0), RegimeChain(3.0, 0.25)):
        t = np.linspace(0, T, 1000)
        P = transition_probabilities(t, chain, T)
        worst_sum = max(worst_sum, np.max(np.abs(P.sum(axis=-1) - 1)))
        stat = np.array(stationary_distribution(chain))
        bound = np.exp(-chain.total_rate * (T - t))
        excess = np.abs(P - stat[None, None, :]) - bound[:, None, None]
        worst_bound = max(worst_bound, excess.max())
    ok = worst_sum <= 1e-12 and worst_bound <= 1e-15
    report(7, "transition probabilities", ok,
           f"max |row sum - 1| = {worst_sum:.1e} <= 1e-12; max(|p - limit| - e^(-(l1+l2)(T-t))) = {worst_bound:.1e} <= 1e-15 (rounding slack)")


@pytest.fixture(scope="module")
def mc_rows(sol):
    rows, _ = verify(sol, 0.0, 1.0, MC_PATHS, RunConfig().seed, dt=MC_DT)
    return rows


def _z(r):
    return (r.estimate - r.reference) / r.std_error


def test_08_conditional_utility(report, mc_rows):
    rows = [r for r in mc_rows if r.check == "conditional_utility"]
    uncond = {(r.regime_i, r.regime_j): r for r in mc_rows if r.check == "unconditional_utility"}
    parts = [
        f"(i={r.regime_i},j={r.regime_j}) z={_z(r):+.2f} [unfiltered z={_z(uncond[r.regime_i, r.regime_j]):+.2f}]"
        for r in rows
    ]
    ok = len(rows) == 4 and all(abs(_z(r)) <= 3 for r in rows)
    report(8, "conditional utility vs f^{i,j} (|z| <= 3, n=1e5, dt=1e-3)", ok, "; ".join(parts))


def test_09_objective(report, mc_rows):
    rows = [r for r in mc_rows if r.check == "objective"]
    ok = len(rows) == 2 and all(abs(_z(r)) <= 3 for r in rows)
    detail = "; ".join(f"i={r.regime_i} J_mc={r.estimate:.5f} J={r.reference:.5f} z={_z(r):+.2f}" for r in rows)
    report(9, "objective vs closed form (|z| <= 3)", ok, detail)


def test_10_perturbation(report, mc_rows):
    rows = [r for r in mc_rows if r.check == "perturbation"]
    ok = len(rows) == 12 and all(r.estimate <= 2 * r.std_error for r in rows)
    worst = max(rows, key=lambda r: r.estimate / r.std_error)
    detail = (f"{len(rows)} slopes (2 deviations x h in 0.5, 0.25, 0.1 x 2 regimes), "
              f"largest slope/SE = {worst.estimate / worst.std_error:+.2f} ({worst.alternative}, h={worst.h}, i={worst.regime_i}) <= +2")
    report(10, "perturbation slopes", ok, detail)


def test_11_figure_trends(report, market):
    def pi0(lam1=1.0, lam2=1.0, a1=2.0, a2=3.0):
        s = solve_g(market, Preferences(a1, a2), RegimeChain(lam1, lam2), T)
        return np.array([equilibrium_fraction(0.0, i, s) for i in (1, 2)])

    # rows ordered by increasing lambda2/lambda1
    by_lambda1 = np.array([pi0(lam1=v) for v in sorted(LAMBDA_VALUES, reverse=True)])
    by_lambda2 = np.array([pi0(lam2=v) for v in sorted(LAMBDA_VALUES)])
    by_beta = np.array([pi0(a2=v) for v in BETA_VALUES])
    by_alpha = np.array([pi0(a1=v) for v in ALPHA_VALUES])
    checks = {
        "lambda1 sweep increasing in l2/l1": np.all(np.diff(by_lambda1, axis=0) > 0),
        "lambda2 sweep increasing in l2/l1": np.all(np.diff(by_lambda2, axis=0) > 0),
        "decreasing in alpha2": np.all(np.diff(by_beta, axis=0) < 0),
        "decreasing in alpha1": np.all(np.diff(by_alpha, axis=0) < 0),
    }
    detail = ", ".join(f"{k}: {'ok' if v else 'VIOLATED'}" for k, v in checks.items())
    report(11, "figure trends at t=0, both regimes", all(checks.values()), detail)


def test_12_determinism(report, tmp_path, monkeypatch):
    monkeypatch.delenv("REGIME_EQ_THREADS", raising=False)
    outputs = {}
    for workers in (1, 4, 8, 1):
        cfg = tmp_path / f"w{workers}.cfg"
        cfg.write_text(f"workers = {workers}\nn_paths = {DETERMINISM_PATHS}\n")
        out = tmp_path / f"out{len(outputs)}"
        main(["verify", "--config", str(cfg), "--out", str(out)])
        outputs[len(outputs)] = tuple((out / name).read_bytes() for name in ("verify_report.csv", "verify_estimates.csv"))
    same = len(set(outputs.values())) == 1
    report(12, "determinism", same,
           f"verify with {DETERMINISM_PATHS} paths under 1, 4, 8 and again 1 workers: "
           f"{'byte-identical' if same else 'outputs differ'} report and estimate CSVs")
