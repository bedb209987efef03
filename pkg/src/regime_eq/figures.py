"""
Data series behind the equilibrium-strategy curves: the time profile of
the reference market and parameter sweeps over the regime intensities and
the two risk-aversion coefficients.

Each curve is a table over ``t`` with the equilibrium fraction of one
regime and the two Merton fractions that bracket it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .odes import GSolution, MarketParams, Preferences, solve_g
from .regime import REGIMES, RegimeChain
from .strategy import equilibrium_fraction, merton_fraction

FIGURE_IDS = (1, 2, 3, 4, 5)
CURVE_COLUMNS = ("t", "pi_star", "merton_alpha1", "merton_alpha2")
MANIFEST_COLUMNS = ("figure", "file", "regime", "parameter", "value", "lambda1", "lambda2", "alpha1", "alpha2")

# swept values; the middle entry of each reproduces the reference market
LAMBDA_VALUES = (0.5, 1.0, 2.0)
BETA_VALUES = (2.5, 3.0, 4.0)
ALPHA_VALUES = (1.5, 2.0, 2.5)

FIGURE_TITLES = {
    1: "equilibrium fraction over time",
    2: "sweep of lambda1 at lambda2 = 1",
    3: "sweep of lambda2 at lambda1 = 1",
    4: "sweep of lambda1 = lambda2 = lambda",
    5: "sweeps of alpha2 (alpha1 = 2) and alpha1 (alpha2 = 3)",
}


@dataclass(frozen=True)
class Curve:
    """One plotted line: ``pi*(t, regime)`` for a parameter set."""

    figure: int
    regime: int
    parameter: str
    value: float
    chain: RegimeChain
    prefs: Preferences
    table: NDArray[np.float64]

    @property
    def filename(self) -> str:
        tag = "base" if not self.parameter else f"{self.parameter}_{self.value:g}"
        return f"figure{self.figure}_{tag}_regime{self.regime}.csv"


def _sweep(fig: int, chain: RegimeChain, prefs: Preferences):
    """``(parameter, value, chain, prefs)`` for every parameter set of a figure."""
    if fig == 1:
        return [("", float("nan"), chain, prefs)]
    if fig == 2:
        return [("lambda1", v, replace(chain, lambda1=v), prefs) for v in LAMBDA_VALUES]
    if fig == 3:
        return [("lambda2", v, replace(chain, lambda2=v), prefs) for v in LAMBDA_VALUES]
    if fig == 4:
        return [("lambda", v, RegimeChain(v, v), prefs) for v in LAMBDA_VALUES]
    if fig == 5:
        return [("alpha2", v, chain, replace(prefs, alpha2=v)) for v in BETA_VALUES] + [
            ("alpha1", v, chain, replace(prefs, alpha1=v)) for v in ALPHA_VALUES
        ]
    raise ValueError(f"unknown figure id {fig!r}; choose from {FIGURE_IDS}")


def curve_table(sol: GSolution, i: int, t_grid) -> NDArray[np.float64]:
    """Rows ``CURVE_COLUMNS`` for regime ``i``."""
    t = np.asarray(t_grid, dtype=np.float64)
    m, p = sol.market, sol.prefs
    return np.column_stack([
        t,
        equilibrium_fraction(t, i, sol),
        np.full(t.shape, merton_fraction(i, p.alpha1, m)),
        np.full(t.shape, merton_fraction(i, p.alpha2, m)),
    ])


def figure_curves(
    fig: int,
    market: MarketParams,
    prefs: Preferences,
    chain: RegimeChain,
    T: float,
    t_start: float = 0.0,
    tolerance: float = 1e-10,
    grid_points: int = 1001,
) -> list[Curve]:
    """Solve every parameter set of figure ``fig`` and tabulate both regimes.

    Figures 2-5 sweep around the supplied parameters: figure 2 replaces
    ``lambda1``, figure 3 ``lambda2``, figure 4 both, and figure 5 each
    risk aversion in turn.
    """
    t_grid = np.linspace(t_start, T, grid_points)
    curves = []
    for name, value, ch, pr in _sweep(fig, chain, prefs):
        sol = solve_g(market, pr, ch, T, t_start, tolerance)
        for i in REGIMES:
            curves.append(Curve(fig, i, name, value, ch, pr, curve_table(sol, i, t_grid)))
    return curves


def write_figure(curves: list[Curve], out_dir) -> Path:
    """Write one CSV per curve plus ``figure{K}_manifest.csv``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for c in curves:
        with open(out / c.filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CURVE_COLUMNS)
            for row in c.table:
                w.writerow([repr(float(v)) for v in row])
    manifest = out / f"figure{curves[0].figure}_manifest.csv"
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_COLUMNS)
        for c in curves:
            w.writerow([
                c.figure, c.filename, c.regime, c.parameter or "none",
                "" if not c.parameter else repr(c.value),
                repr(c.chain.lambda1), repr(c.chain.lambda2), repr(c.prefs.alpha1), repr(c.prefs.alpha2),
            ])
    return manifest
