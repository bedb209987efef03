# The bull/bear regime is a two-state Markov chain. Regime 1 (bull) is
# left at rate lambda1, regime 2 (bear) at rate lambda2.
import numpy as np
from scipy.linalg import expm

from regime_eq import RegimeChain, sample_regime_path, stationary_distribution, transition_matrix

chain = RegimeChain(lambda1=1.0, lambda2=1.0)
T = 10.0
print("generator Q =\n", chain.generator)

# Transition probabilities P(regime at T = j | regime at t = i) in closed
# form, checked against the matrix exponential of Q over the horizon.
for t in (9.9, 9.0, 5.0, 0.0):
    P = transition_matrix(t, chain, T)
    print(f"T - t = {T - t:4.1f}   P = {np.round(P, 5).tolist()}   "
          f"|P - expm| = {np.abs(P - expm(chain.generator * (T - t))).max():.1e}")

# Far from the horizon every row forgets its start and approaches the
# stationary law.
print("stationary distribution:", stationary_distribution(chain))
print("asymmetric chain (1, 3):", stationary_distribution(RegimeChain(1.0, 3.0)))

# Exact path sampling: exponential holding times, one counter-based random
# stream per (seed, path index), so path k is the same in every run.
path = sample_regime_path(1, 0.0, T, chain, seed=2024, path_index=0)
print(f"\npath 0: {path.n_jumps} jumps, ends in regime {path.terminal_state}")
print("first jump times:", np.round(path.jump_times[:5], 3), "states:", path.states[:5])
print("time spent in (bull, bear):", np.round(path.occupation_times(), 3))

jumps = [sample_regime_path(1, 0.0, T, chain, seed=2024, path_index=k).n_jumps for k in range(5000)]
print(f"mean number of jumps over 5000 paths: {np.mean(jumps):.3f} (Poisson mean 10)")
