# How the equilibrium fraction at t = 0 responds to the regime intensities
# and the two risk aversions. The same series are written as CSV files by
# `regime-eq figures`.
from regime_eq import MarketParams, Preferences, RegimeChain
from regime_eq.figures import FIGURE_TITLES, figure_curves

market = MarketParams(r=(0.05, 0.01), mu=(0.15, 0.25), sigma=(0.25, 0.6))
prefs = Preferences(2.0, 3.0)
chain = RegimeChain(1.0, 1.0)

for fig in (2, 3, 4, 5):
    print(f"\nfigure {fig}: {FIGURE_TITLES[fig]}")
    curves = figure_curves(fig, market, prefs, chain, T=10.0, grid_points=101)
    for c in curves:
        t, pi = c.table[:, 0], c.table[:, 1]
        # where the curve starts, and how far it travels over the horizon
        mid = pi[len(pi) // 2]
        print(f"  {c.parameter} = {c.value:<4g} regime {c.regime}: "
              f"pi*(0) = {pi[0]:.4f}  pi*(5) = {mid:.4f}  pi*(10) = {pi[-1]:.4f}")

# A larger lambda2 / lambda1 means more time in the bull regime, so more
# stock; a larger risk aversion in either regime means less.
