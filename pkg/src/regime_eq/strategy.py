"""
Closed-form evaluation layer: CRRA utilities, Merton fractions, the
equilibrium investment fraction, value functions and the objective.

All strategies are positively homogeneous in wealth, so a strategy is fully
described by the fraction of wealth it puts in the stock as a function of
time and current regime.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError, RangeError
from .odes import GSolution, MarketParams, Preferences, g_index, interpolate_g
from .regime import REGIMES, transition_probabilities, transition_probability

STRATEGY_COLUMNS = (
    "t",
    "pi_star_regime1",
    "pi_star_regime2",
    "merton_alpha1_regime1",
    "merton_alpha1_regime2",
    "merton_alpha2_regime1",
    "merton_alpha2_regime2",
)


def utility(x: float, j: int, prefs: Preferences) -> float:
    """CRRA utility ``x^(1-a_j) / (1-a_j)`` of the terminal-regime-``j`` investor."""
    if not x > 0:
        raise DomainError(f"wealth must be > 0, got {x!r}")
    a = prefs.alpha(j)
    return x ** (1.0 - a) / (1.0 - a)


def inverse_utility(y: float, j: int, prefs: Preferences) -> float:
    """Certainty-equivalent map ``(u^j)^{-1}``.

    ``y`` must be in the range of ``u^j``: negative when ``a_j > 1``,
    positive when ``a_j < 1``.
    """
    a = prefs.alpha(j)
    z = (1.0 - a) * y
    if not z > 0 or not math.isfinite(z):
        raise DomainError(f"y={y!r} is outside the range of u^{j} (alpha={a})")
    return z ** (1.0 / (1.0 - a))


def merton_fraction(i: int, alpha: float, market: MarketParams) -> float:
    """Constant-risk-aversion optimal stock fraction ``(mu_i - r_i) / (alpha sigma_i^2)``."""
    if not alpha > 0 or alpha == 1:
        raise DomainError(f"alpha must be > 0 and != 1, got {alpha!r}")
    return market.excess(i) / (alpha * market.sigma[i - 1] ** 2)


def _check_t(sol: GSolution, t) -> None:
    lo, hi = sol.grid[0], sol.T
    eps = 1e-12 * max(1.0, abs(hi))
    tt = np.asarray(t)
    if np.any(tt < lo - eps) or np.any(tt > hi + eps):
        raise RangeError(f"t outside solved range [{lo}, {hi}]")


def a_weights(sol: GSolution, t: ArrayLike) -> NDArray[np.float64]:
    """``A_i(t)`` for both regimes; shape ``t.shape + (2,)``.

    Vectorised counterpart of :func:`regime_eq.odes.a_weight`.
    """
    _check_t(sol, t)
    tt = np.minimum(np.asarray(t, dtype=np.float64), sol.T)
    g = interpolate_g(sol, tt)
    P = transition_probabilities(tt, sol.chain, sol.T)
    out = np.empty(tt.shape + (2,))
    for i in REGIMES:
        num = np.zeros(tt.shape)
        den = np.zeros(tt.shape)
        for j in REGIMES:
            a = sol.prefs.alpha(j)
            w = P[..., i - 1, j - 1] * g[..., g_index(i, j)] ** (a / (1.0 - a))
            num += w
            den += a * w
        out[..., i - 1] = num / den
    return out


def equilibrium_fraction(t: ArrayLike, i: int, sol: GSolution):
    """Equilibrium proportion of wealth in the stock, ``pi*(t, i)``.

    Accepts scalar or array ``t``; independent of wealth.
    """
    if i not in REGIMES:
        raise DomainError(f"regime must be 1 or 2, got {i!r}")
    A = a_weights(sol, t)[..., i - 1]
    m = sol.market
    out = m.excess(i) / m.sigma[i - 1] ** 2 * A
    return float(out) if np.ndim(out) == 0 else out


def equilibrium_dollars(t: float, x: float, i: int, sol: GSolution) -> float:
    """Dollar amount in the stock under the equilibrium feedback rule."""
    return x * equilibrium_fraction(t, i, sol)


def value_function(t: float, x: float, i: int, j: int, sol: GSolution) -> float:
    """``f^{i,j}(t, x) = x^(1-a_j) g^{i,j}(t)^a_j / (1-a_j)``."""
    if not x > 0:
        raise DomainError(f"wealth must be > 0, got {x!r}")
    _check_t(sol, t)
    a = sol.prefs.alpha(j)
    g = interpolate_g(sol, min(t, sol.T))[g_index(i, j)]
    return x ** (1.0 - a) * g**a / (1.0 - a)


def certainty_equivalent(t: float, x: float, i: int, j: int, sol: GSolution) -> float:
    """``(u^j)^{-1}(f^{i,j}(t,x))`` evaluated as ``x g^{i,j}(t)^(a_j/(1-a_j))``."""
    if not x > 0:
        raise DomainError(f"wealth must be > 0, got {x!r}")
    _check_t(sol, t)
    a = sol.prefs.alpha(j)
    g = interpolate_g(sol, min(t, sol.T))[g_index(i, j)]
    return x * g ** (a / (1.0 - a))


def objective(t: float, x: float, i: int, sol: GSolution) -> float:
    """Objective under the equilibrium strategy.

    Probability-weighted certainty equivalents, computed from powers of
    ``g`` directly; composing :func:`inverse_utility` with
    :func:`value_function` loses digits when ``f`` is small and negative.
    """
    if not x > 0:
        raise DomainError(f"wealth must be > 0, got {x!r}")
    _check_t(sol, t)
    tt = min(t, sol.T)
    g = interpolate_g(sol, tt)
    total = 0.0
    for j in REGIMES:
        p = transition_probability(tt, i, j, sol.chain, sol.T)
        a = sol.prefs.alpha(j)
        total += p * g[g_index(i, j)] ** (a / (1.0 - a))
    return x * total


@dataclass(frozen=True)
class ValuePoint:
    """Value functions and objective at one state ``(t, x, i)``."""

    t: float
    x: float
    i: int
    f: tuple[float, float]
    J: float


def value_point(t: float, x: float, i: int, sol: GSolution) -> ValuePoint:
    f = tuple(value_function(t, x, i, j, sol) for j in REGIMES)
    return ValuePoint(t, x, i, f, objective(t, x, i, sol))


class StrategySpec:
    """A wealth-homogeneous feedback strategy ``pi(t, x, i) = x * fraction(t, i)``.

    Subclasses implement :meth:`fraction`, vectorised over ``t`` and ``i``.
    ``bound_c`` is the admissibility constant with ``|pi| <= bound_c |x|``.
    """

    bound_c: float = 0.0

    def fraction(self, t, i):
        raise NotImplementedError

    def dollars(self, t, x, i):
        return x * self.fraction(t, i)


class ZeroInvestment(StrategySpec):
    """Everything in the bond."""

    bound_c = 0.0

    def fraction(self, t, i):
        shape = np.broadcast(np.asarray(t), np.asarray(i)).shape
        return np.zeros(shape) if shape else 0.0

    def __repr__(self):
        return "ZeroInvestment()"


class ConstantFraction(StrategySpec):
    """Fixed stock fraction per regime, e.g. a Merton investor."""

    def __init__(self, fractions):
        f = tuple(float(v) for v in fractions)
        if len(f) != 2 or not all(math.isfinite(v) for v in f):
            raise DomainError(f"need two finite fractions, got {fractions!r}")
        self.fractions = f
        self.bound_c = max(abs(v) for v in f)

    def fraction(self, t, i):
        _, ii = np.broadcast_arrays(np.asarray(t), np.asarray(i))
        out = np.asarray(self.fractions)[ii - 1]
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"ConstantFraction({self.fractions})"


class EquilibriumStrategy(StrategySpec):
    """The equilibrium feedback rule built from a solved ``g``."""

    def __init__(self, sol: GSolution):
        self.sol = sol
        m = sol.market
        self.bound_c = max(abs(m.excess(i)) / m.sigma[i - 1] ** 2 for i in REGIMES) / min(sol.prefs.alphas)

    def fraction(self, t, i):
        tt, ii = np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(i))
        A = a_weights(self.sol, tt)
        m = self.sol.market
        scale = np.array([m.excess(k) / m.sigma[k - 1] ** 2 for k in REGIMES])
        idx = ii - 1
        out = scale[idx] * np.take_along_axis(A, idx[..., None], axis=-1)[..., 0]
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return "EquilibriumStrategy(...)"


class SwitchedStrategy(StrategySpec):
    """``first`` on ``[.., switch_time)`` and ``then`` afterwards.

    This is the spliced strategy used to probe the equilibrium property.
    """

    def __init__(self, first: StrategySpec, then: StrategySpec, switch_time: float):
        self.first = first
        self.then = then
        self.switch_time = float(switch_time)
        self.bound_c = max(first.bound_c, then.bound_c)

    def fraction(self, t, i):
        tt = np.asarray(t, dtype=np.float64)
        a = np.asarray(self.first.fraction(t, i))
        b = np.asarray(self.then.fraction(t, i))
        # grid nodes computed as t0 + k*dt may miss switch_time by an ulp
        cut = self.switch_time - 1e-12 * max(1.0, abs(self.switch_time))
        out = np.where(tt < cut, a, b)
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"SwitchedStrategy({self.first!r}, {self.then!r}, {self.switch_time})"


def strategy_table(sol: GSolution, t_grid: ArrayLike) -> NDArray[np.float64]:
    """Rows ``STRATEGY_COLUMNS`` evaluated on ``t_grid``."""
    tt = np.asarray(t_grid, dtype=np.float64)
    _check_t(sol, tt)
    m, a1, a2 = sol.market, sol.prefs.alpha1, sol.prefs.alpha2
    cols = [
        tt,
        equilibrium_fraction(tt, 1, sol),
        equilibrium_fraction(tt, 2, sol),
    ]
    for a in (a1, a2):
        for i in REGIMES:
            cols.append(np.full(tt.shape, merton_fraction(i, a, m)))
    return np.column_stack(cols)


def write_strategy_csv(sol: GSolution, t_grid: ArrayLike, path) -> NDArray[np.float64]:
    table = strategy_table(sol, t_grid)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STRATEGY_COLUMNS)
        for row in table:
            w.writerow([repr(float(v)) for v in row])
    return table
