# Simulate wealth under the equilibrium rule and compare with the closed
# forms. Paths are simulated once and reused for every comparison.
import math

import numpy as np

from regime_eq import (
    EquilibriumStrategy,
    MarketParams,
    Preferences,
    RegimeChain,
    ZeroInvestment,
    expected_utility_exact,
    objective,
    perturbation_test,
    simulate_paths,
    solve_g,
    value_function,
)
from regime_eq.montecarlo import summarize

market = MarketParams(r=(0.05, 0.01), mu=(0.15, 0.25), sigma=(0.25, 0.6))
prefs = Preferences(2.0, 3.0)
chain = RegimeChain(1.0, 1.0)
T, n, dt, seed = 10.0, 20_000, 1e-2, 7

sol = solve_g(market, prefs, chain, T)
eq = EquilibriumStrategy(sol)
batch = simulate_paths([eq], 0.0, T, 1, n, market, chain, seed, dt)
X = batch.wealth(1.0)
print(f"{n} paths from regime 1; all terminal wealth positive: {bool(np.all(X > 0))}")

# The objective: plug-in certainty equivalents against the closed form.
est = summarize(batch, 0.0, 1.0, 1, prefs, chain, T, dt, seed)
print(f"J: Monte Carlo {est.objective:.4f} +/- {est.objective_se:.4f}, closed form {objective(0.0, 1.0, 1, sol):.4f}")

# Expected utility of the terminal-regime-j investor. The value function
# f^{1,j} is compared with the plain mean of u^j(X_T) and with the mean over
# paths that end in regime j; a deterministic Feynman-Kac solve gives the
# exact value of both.
for j in (1, 2):
    a = prefs.alpha(j)
    u = X ** (1 - a) / (1 - a)
    mask = batch.terminal_regime == j
    f = value_function(0.0, 1.0, 1, j, sol)
    plain = expected_utility_exact(0.0, 1.0, 1, j, eq, market, prefs, chain, T, conditional=False)
    ended = expected_utility_exact(0.0, 1.0, 1, j, eq, market, prefs, chain, T, conditional=True)
    print(f"\nj = {j}: f^(1,{j}) = {f:.5f}")
    print(f"  all paths        MC {u.mean():.5f} +/- {u.std(ddof=1) / math.sqrt(n):.5f}   exact {plain:.5f}")
    print(f"  ending in {j}      MC {u[mask].mean():.5f} +/- {u[mask].std(ddof=1) / math.sqrt(mask.sum()):.5f}   exact {ended:.5f}")

# Deviating to all-bond for a short while never helps: slopes are negative.
for r in perturbation_test(0.0, 1.0, 1, ZeroInvestment(), [0.5, 0.25, 0.1], sol, n, seed, dt=dt):
    print(f"h = {r.h:<4}  (J(pi_h) - J(pi*)) / h = {r.slope:+.4f} +/- {r.standard_error:.4f}")
