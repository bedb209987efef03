# Solve the four coupled ODEs for g^{i,j}(t) and turn them into the
# equilibrium fraction of wealth held in the stock.
import numpy as np

from regime_eq import (
    MarketParams,
    Preferences,
    RegimeChain,
    equilibrium_fraction,
    merton_fraction,
    objective,
    solve_g,
    value_function,
)

market = MarketParams(r=(0.05, 0.01), mu=(0.15, 0.25), sigma=(0.25, 0.6))
prefs = Preferences(alpha1=2.0, alpha2=3.0)   # less risk averse in the bull regime
chain = RegimeChain(1.0, 1.0)
T = 10.0

sol = solve_g(market, prefs, chain, T)
print(f"solved on {sol.grid.size} points, {sol.n_accepted} accepted / {sol.n_rejected} rejected steps")
print("g(0) = (g11, g21, g12, g22) =", np.round(sol.g[0], 6))
print("A_i(t) stayed inside [1/3, 1/2]:", np.round(sol.a_range, 6))
for b in sol.ratio_bounds:
    print(f"ratio certificate j={b.j}: observed [{b.observed_min:.4f}, {b.observed_max:.4f}] "
          f"inside [{b.lower:.4f}, {b.upper:.4f}]")

# The equilibrium fraction sits between the two Merton fractions and
# converges to the one of the current regime's utility at the horizon.
print("\n    t    pi*(t,1)  pi*(t,2)")
for t in (0.0, 4.0, 8.0, 9.0, 9.9, 10.0):
    print(f"{t:5.1f}   {equilibrium_fraction(t, 1, sol):.5f}   {equilibrium_fraction(t, 2, sol):.5f}")
for i in (1, 2):
    print(f"regime {i}: merton(alpha=3) = {merton_fraction(i, 3.0, market):.5f}, "
          f"merton(alpha=2) = {merton_fraction(i, 2.0, market):.5f}")

# Value functions and the certainty-equivalent objective at t = 0, x = 1.
for i in (1, 2):
    f = [value_function(0.0, 1.0, i, j, sol) for j in (1, 2)]
    print(f"start in regime {i}: f^(i,1) = {f[0]:.5f}, f^(i,2) = {f[1]:.5f}, J = {objective(0.0, 1.0, i, sol):.5f}")

# With equal risk aversion the investor is a plain Merton investor.
flat = solve_g(market, Preferences(2.0, 2.0), chain, T)
print("\nalpha1 = alpha2 = 2: pi*(0, 1) =", equilibrium_fraction(0.0, 1, flat), "= merton", merton_fraction(1, 2.0, market))
