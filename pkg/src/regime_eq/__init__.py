"""
Equilibrium investment in a two-regime (bull/bear) market with
regime-dependent CRRA utilities.

The package solves the four-dimensional ODE system for the value-function
factors ``g^{i,j}``, evaluates the resulting equilibrium stock fraction,
and checks the solution by Monte Carlo simulation of the regime-modulated
wealth process.
"""

from .config import RunConfig, load_config, parse_config
from .errors import (
    ConfigError,
    DomainError,
    NoStationaryDistributionError,
    RangeError,
    RegimeEqError,
    SimulationError,
    SolverError,
    UnreachableRegimeError,
)
from .montecarlo import (
    McEstimate,
    PathBatch,
    SimConfig,
    estimate_conditional_utility,
    estimate_objective,
    estimate_unconditional_utility,
    exact_wealth_equilibrium,
    expected_utility_exact,
    perturbation_test,
    simulate_paths,
    simulate_wealth,
)
from .odes import GSolution, MarketParams, Preferences, a_weight, interpolate_g, rhs, solve_g
from .regime import (
    RegimeChain,
    RegimePath,
    sample_regime_path,
    stationary_distribution,
    transition_matrix,
    transition_probability,
)
from .strategy import (
    ConstantFraction,
    EquilibriumStrategy,
    StrategySpec,
    SwitchedStrategy,
    ValuePoint,
    ZeroInvestment,
    certainty_equivalent,
    equilibrium_dollars,
    equilibrium_fraction,
    inverse_utility,
    merton_fraction,
    objective,
    utility,
    value_function,
)

__version__ = "0.1.0"
