"""
Monte Carlo verification of a solved equilibrium.

Three families of checks, each a row of the report:

* ``conditional_utility`` -- the sample mean of ``u^j(X_T)`` over paths
  started in regime ``i`` and ending in regime ``j`` against the value
  function ``f^{i,j}(t0, x0)``; passes within 3 standard errors.
* ``objective`` -- the plug-in certainty-equivalent objective against its
  closed form; passes within 3 standard errors.
* ``perturbation`` -- the common-random-numbers slope
  ``(J(pi_h) - J(pi*)) / h`` for a deviation on ``[t0, t0 + h)``; passes
  when it is at most 2 standard errors above zero.

Rows with ``gating = 0`` are diagnostics that do not affect the verdict:
``unconditional_utility`` compares the unfiltered mean of ``u^j(X_T)``
with the same ``f^{i,j}``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .montecarlo import perturbation_slopes, simulate_paths, summarize
from .odes import GSolution
from .regime import REGIMES, transition_probability
from .strategy import (
    ConstantFraction,
    EquilibriumStrategy,
    SwitchedStrategy,
    ZeroInvestment,
    merton_fraction,
    objective,
    value_function,
)

REPORT_COLUMNS = (
    "check", "regime_i", "regime_j", "alternative", "h", "estimate", "reference",
    "std_error", "threshold", "n_effective", "gating", "status",
)
H_VALUES = (0.5, 0.25, 0.1)
SE_CONSISTENCY = 3.0
SE_PERTURBATION = 2.0


@dataclass(frozen=True)
class CheckRow:
    check: str
    regime_i: int
    regime_j: int | str
    alternative: str
    h: float | str
    estimate: float
    reference: float
    std_error: float
    threshold: float
    n_effective: int
    gating: bool
    status: str

    @property
    def passed(self) -> bool:
        return self.status in ("pass", "skipped")

    def values(self) -> list:
        out = []
        for name in REPORT_COLUMNS:
            v = getattr(self, name)
            out.append(int(v) if isinstance(v, bool) else repr(v) if isinstance(v, float) else v)
        return out


def _within(est, ref, se, k):
    gap = abs(est - ref)
    return "pass" if gap <= k * se else "fail"


def alternative_strategies(sol: GSolution) -> dict[str, object]:
    """Deviations used in the perturbation checks."""
    a_min = min(sol.prefs.alphas)
    doubled = tuple(2.0 * merton_fraction(i, a_min, sol.market) for i in REGIMES)
    return {"zero": ZeroInvestment(), "double_merton": ConstantFraction(doubled)}


def verify(
    sol: GSolution,
    t0: float,
    x0: float,
    n_paths: int,
    seed: int,
    dt: float = 1e-3,
    h_values=H_VALUES,
    workers: int | None = None,
) -> tuple[list[CheckRow], list[dict]]:
    """Run every check for both starting regimes.

    All arms of one starting regime (the equilibrium rule and every spliced
    deviation) are simulated together on common random numbers, so one
    batch per regime serves all checks. Returns the report rows and the
    raw estimate rows of the equilibrium arm.
    """
    T = sol.T
    rows: list[CheckRow] = []
    estimates: list[dict] = []
    eq = EquilibriumStrategy(sol)
    alts = alternative_strategies(sol)
    hs = [float(h) for h in h_values if 0 < h < T - t0]
    dt = min(dt, T - t0) if T > t0 else dt
    for i in REGIMES:
        if T <= t0:
            ref = objective(t0, x0, i, sol)
            rows.append(CheckRow("objective", i, "", "", "", float(x0), ref, 0.0, SE_CONSISTENCY, n_paths, True,
                                 "pass" if math.isclose(ref, x0, rel_tol=1e-12) else "fail"))
            continue
        arms = [eq] + [SwitchedStrategy(a, eq, t0 + h) for a in alts.values() for h in hs]
        batch = simulate_paths(arms, t0, T, i, n_paths, sol.market, sol.chain, seed, dt, workers)
        est = summarize(batch, t0, x0, i, sol.prefs, sol.chain, T, dt, seed)
        estimates.extend(est.rows())
        X = batch.wealth(x0, 0)
        for j in REGIMES:
            if transition_probability(t0, i, j, sol.chain, T) == 0.0:
                rows.append(CheckRow("conditional_utility", i, j, "", "", math.nan, math.nan, math.nan,
                                     SE_CONSISTENCY, 0, True, "skipped"))
                continue
            ref = value_function(t0, x0, i, j, sol)
            c = est.component(j)
            rows.append(CheckRow("conditional_utility", i, j, "", "", c.mean, ref, c.standard_error,
                                 SE_CONSISTENCY, c.n_effective, True, _within(c.mean, ref, c.standard_error, SE_CONSISTENCY)))
            a = sol.prefs.alpha(j)
            u = X ** (1.0 - a) / (1.0 - a)
            m, se = float(u.mean()), float(u.std(ddof=1) / math.sqrt(u.size))
            rows.append(CheckRow("unconditional_utility", i, j, "", "", m, ref, se, SE_CONSISTENCY, u.size, False,
                                 _within(m, ref, se, SE_CONSISTENCY)))
        ref = objective(t0, x0, i, sol)
        rows.append(CheckRow("objective", i, "", "", "", est.objective, ref, est.objective_se, SE_CONSISTENCY,
                             n_paths, True, _within(est.objective, ref, est.objective_se, SE_CONSISTENCY)))
        arm = 1
        for name in alts:
            for res in perturbation_slopes(batch, x0, hs, sol.prefs, first_arm=arm):
                status = "pass" if res.slope <= SE_PERTURBATION * res.standard_error else "fail"
                rows.append(CheckRow("perturbation", i, "", name, res.h, res.slope, 0.0, res.standard_error,
                                     SE_PERTURBATION, n_paths, True, status))
            arm += len(hs)
    return rows, estimates


def all_passed(rows: list[CheckRow]) -> bool:
    return all(r.passed for r in rows if r.gating)


def write_report(rows: list[CheckRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow(r.values())
