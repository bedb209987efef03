"""
Backward integration of the four coupled ODEs for the value-function
scaling factors ``g^{i,j}(t)``.

Under the separable form ``f^{i,j}(t, x) = x^(1-a_j) g^{i,j}(t)^a_j / (1-a_j)``
the coupled equilibrium PDEs reduce to a 4-dimensional nonlinear system with
terminal condition ``g = 1`` at ``t = T``. Components are always ordered

    (g11, g21, g12, g22)

i.e. column-major in ``(i, j)``: index ``2*(j-1) + (i-1)``.

The system is integrated in reversed time ``tau = T - t`` with an embedded
Dormand-Prince 5(4) pair and step-size control.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError, RangeError, SolverError
from .regime import REGIMES, RegimeChain, transition_probability

G_LABELS = ("g11", "g21", "g12", "g22")
CSV_COLUMNS = ("t",) + G_LABELS + tuple("d" + s for s in G_LABELS)


def g_index(i: int, j: int) -> int:
    """Position of ``g^{i,j}`` in the 4-vector."""
    return 2 * (j - 1) + (i - 1)


@dataclass(frozen=True)
class MarketParams:
    """Per-regime bond rate, stock drift and stock volatility.

    Each field is a pair ``(regime 1, regime 2)``.
    """

    r: tuple[float, float]
    mu: tuple[float, float]
    sigma: tuple[float, float]
    check_bull_bear: bool = field(default=False, compare=False)

    def __post_init__(self):
        for name in ("r", "mu", "sigma"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 2 or not all(math.isfinite(x) for x in v):
                raise DomainError(f"{name} must be two finite numbers, got {v!r}")
            object.__setattr__(self, name, v)
        if min(self.sigma) <= 0:
            raise DomainError(f"sigma must be > 0 in both regimes, got {self.sigma}")
        if self.check_bull_bear and not self.is_bull_bear():
            warnings.warn(
                "market coefficients violate the bull/bear ordering "
                "0 < mu1-r1 < mu2-r2, 0 < sigma1 < sigma2, "
                "(mu1-r1)/sigma1^2 > (mu2-r2)/sigma2^2",
                stacklevel=2,
            )

    def excess(self, i: int) -> float:
        return self.mu[i - 1] - self.r[i - 1]

    def theta(self, i: int) -> float:
        """Sharpe ratio ``(mu_i - r_i) / sigma_i``."""
        return self.excess(i) / self.sigma[i - 1]

    def is_bull_bear(self) -> bool:
        e1, e2 = self.excess(1), self.excess(2)
        s1, s2 = self.sigma
        return 0 < e1 < e2 and 0 < s1 < s2 and e1 / s1**2 > e2 / s2**2

    def swapped(self) -> "MarketParams":
        return MarketParams(self.r[::-1], self.mu[::-1], self.sigma[::-1])


@dataclass(frozen=True)
class Preferences:
    """CRRA exponents of the terminal-regime utilities ``u^1`` and ``u^2``."""

    alpha1: float
    alpha2: float

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            a = getattr(self, name)
            if not math.isfinite(a) or a <= 0 or a == 1:
                raise DomainError(f"{name} must lie in (0,1) or (1,inf), got {a!r}")

    @property
    def alphas(self) -> tuple[float, float]:
        return (self.alpha1, self.alpha2)

    def alpha(self, j: int) -> float:
        return self.alphas[j - 1]

    def swapped(self) -> "Preferences":
        return Preferences(self.alpha2, self.alpha1)


def a_weight(t: float, i: int, g_values: Sequence[float], probs: Sequence[float], prefs: Preferences) -> float:
    """Aggregated inverse risk aversion ``A_i(t)`` of the equilibrium fraction.

    ``g_values`` is the full 4-vector at ``t`` and ``probs`` the pair
    ``(p(t,i,1), p(t,i,2))``; ``t`` itself only enters through them. The
    result is a weighted mean of ``1/alpha_j`` and so lies between
    ``1/max(alpha)`` and ``1/min(alpha)``.
    """
    num = 0.0
    den = 0.0
    for j in REGIMES:
        g = g_values[g_index(i, j)]
        if not g > 0:
            raise DomainError(f"g{i}{j} must be > 0, got {g!r}")
        a = prefs.alpha(j)
        w = probs[j - 1] * g ** (a / (1.0 - a))
        num += w
        den += a * w
    return num / den


def rhs(t: float, g4: Sequence[float], market: MarketParams, prefs: Preferences, chain: RegimeChain, T: float) -> NDArray[np.float64]:
    """Time derivative ``dg/dt`` of the four-component system."""
    return _rhs_with_weights(t, g4, market, prefs, chain, T)[0]


def _rhs_with_weights(t, g4, market, prefs, chain, T):
    for k, g in enumerate(g4):
        if not g > 0:
            raise DomainError(f"{G_LABELS[k]} = {g!r} left the region g > 0 at t={t}")
    out = np.empty(4)
    weights = []
    for i in REGIMES:
        probs = (transition_probability(t, i, 1, chain, T), transition_probability(t, i, 2, chain, T))
        A = a_weight(t, i, g4, probs, prefs)
        weights.append(A)
        th2 = market.theta(i) ** 2
        lam = chain.rate(i)
        for j in REGIMES:
            a = prefs.alpha(j)
            g_own = g4[g_index(i, j)]
            g_other = g4[g_index(3 - i, j)]
            bracket = (
                0.5 * a * th2 * A * A
                - th2 * A
                - market.r[i - 1]
                + lam / (1.0 - a) * (1.0 - (g_other / g_own) ** a)
            )
            out[g_index(i, j)] = (1.0 - a) / a * bracket * g_own
    return out, weights


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

MAX_HALVINGS = 60


@dataclass(frozen=True)
class RatioBound:
    """Certificate that ``(g^{1,j}/g^{2,j})^alpha_j`` stays in a positive-root interval."""

    j: int
    lower: float
    upper: float
    observed_min: float
    observed_max: float

    @property
    def holds(self) -> bool:
        slack = 1e-9 * max(1.0, self.upper)
        return self.lower - slack <= self.observed_min and self.observed_max <= self.upper + slack


@dataclass(frozen=True, eq=False)
class GSolution:
    """Solved trajectories of ``g`` on an increasing time grid ending at ``T``.

    ``g`` and ``dg`` have shape ``(len(grid), 4)`` in ``G_LABELS`` order.
    """

    T: float
    grid: NDArray[np.float64]
    g: NDArray[np.float64]
    dg: NDArray[np.float64]
    market: MarketParams
    prefs: Preferences
    chain: RegimeChain
    tolerance: float = float("nan")
    n_accepted: int = 0
    n_rejected: int = 0
    a_range: tuple[float, float] = (float("nan"), float("nan"))
    ratio_bounds: tuple[RatioBound, ...] | None = None

    def __post_init__(self):
        for name in ("grid", "g", "dg"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def t_start(self) -> float:
        return float(self.grid[0])

    def __call__(self, t):
        return interpolate_g(self, t)

    def component(self, i: int, j: int) -> NDArray[np.float64]:
        return self.g[:, g_index(i, j)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for t, gs, ds in zip(self.grid, self.g, self.dg):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in gs] + [repr(float(v)) for v in ds])

    @classmethod
    def from_csv(cls, path, market: MarketParams, prefs: Preferences, chain: RegimeChain) -> "GSolution":
        """Reload a trajectory written by :meth:`to_csv`.

        The CSV carries no parameters, so they must be supplied again.
        """
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != CSV_COLUMNS:
            raise DomainError(f"unexpected CSV header {rows[0]!r}")
        data = np.array([[float(v) for v in row] for row in rows[1:]])
        return cls(
            T=float(data[-1, 0]),
            grid=data[:, 0],
            g=data[:, 1:5],
            dg=data[:, 5:9],
            market=market,
            prefs=prefs,
            chain=chain,
        )


def _quad_range(a: float, th2: float, r: float, lo: float, hi: float) -> tuple[float, float]:
    """Range of ``0.5*a*th2*A^2 - th2*A - r`` over ``A in [lo, hi]``."""
    f = lambda A: 0.5 * a * th2 * A * A - th2 * A - r  # noqa: E731
    vals = [f(lo), f(hi)]
    vertex = 1.0 / a
    if lo < vertex < hi:
        vals.append(f(vertex))
    return min(vals), max(vals)


def ratio_interval(j: int, market: MarketParams, prefs: Preferences, chain: RegimeChain) -> tuple[float, float] | None:
    """A priori interval containing ``(g^{1,j}/g^{2,j})^alpha_j`` for all ``t <= T``.

    The ratio ``y`` obeys ``y' = l2 y^2 + c(t) y - l1`` with ``y(T) = 1`` and a
    bounded coefficient ``c``. Freezing ``c`` at its extremes gives Riccati
    comparison equations whose solutions stay between 1 and their positive
    root. Returns ``None`` unless both rates are positive.
    """
    l1, l2 = chain.rates
    if l1 <= 0 or l2 <= 0:
        return None
    a = prefs.alpha(j)
    a_lo, a_hi = 1.0 / max(prefs.alphas), 1.0 / min(prefs.alphas)
    b1 = _quad_range(a, market.theta(1) ** 2, market.r[0], a_lo, a_hi)
    b2 = _quad_range(a, market.theta(2) ** 2, market.r[1], a_lo, a_hi)
    shift = (l1 - l2) / (1.0 - a)
    m1 = b1[0] - b2[1] + shift
    m2 = b1[1] - b2[0] + shift
    c_vals = ((1.0 - a) * m1, (1.0 - a) * m2)

    def pos_root(c):
        return (-c + math.sqrt(c * c + 4.0 * l1 * l2)) / (2.0 * l2)

    roots = [pos_root(c) for c in c_vals]
    return min(1.0, *roots), max(1.0, *roots)


def _certify(grid_g: NDArray[np.float64], market, prefs, chain) -> tuple[RatioBound, ...] | None:
    out = []
    for j in REGIMES:
        iv = ratio_interval(j, market, prefs, chain)
        if iv is None:
            return None
        a = prefs.alpha(j)
        y = (grid_g[:, g_index(1, j)] / grid_g[:, g_index(2, j)]) ** a
        out.append(RatioBound(j, iv[0], iv[1], float(y.min()), float(y.max())))
    return tuple(out)


def solve_g(
    market: MarketParams,
    prefs: Preferences,
    chain: RegimeChain,
    T: float,
    t_start: float = 0.0,
    tolerance: float = 1e-10,
    max_step: float | None = None,
    min_points: int = 1000,
) -> GSolution:
    """Integrate the g-system backward from ``g(T) = (1,1,1,1)`` to ``t_start``.

    ``tolerance`` is used as both absolute and relative error target. The
    step is capped so that the accepted grid has at least ``min_points``
    intervals. A trial step that would make any ``g <= 0`` is retried at
    half size; 60 consecutive halvings abort the solve.

    Raises
    ------
    SolverError
        On positivity loss, step-size underflow, or a violated ratio
        certificate.
    """
    if not t_start < T:
        raise DomainError(f"need t_start < T, got {t_start} >= {T}")
    if not tolerance > 0:
        raise DomainError("tolerance must be > 0")
    span = T - t_start
    h_cap = span / min_points
    if max_step is not None:
        h_cap = min(h_cap, max_step)
    atol = rtol = tolerance
    a_seen = [math.inf, -math.inf]

    def f(tau, y):
        t = T - tau
        try:
            d, weights = _rhs_with_weights(t, y, market, prefs, chain, T)
        except DomainError as exc:
            raise SolverError(str(exc), t=t) from exc
        a_seen[0] = min(a_seen[0], *weights)
        a_seen[1] = max(a_seen[1], *weights)
        return -d

    tau = 0.0
    y = np.ones(4)
    k1 = f(tau, y)
    taus = [0.0]
    ys = [y.copy()]
    dys = [-k1]
    # initial step from the derivative scale
    scale = atol + rtol * np.abs(y)
    d1 = np.sqrt(np.mean((k1 / scale) ** 2))
    h = min(h_cap, 0.01 * span if d1 < 1e-12 else 0.01 / d1)
    n_acc = n_rej = 0
    halvings = 0
    K = np.empty((7, 4))
    while tau < span:
        if tau + h >= span or span - (tau + h) < 1e-12 * span:
            h = span - tau
        if h <= 1e-14 * max(1.0, span):
            raise SolverError(f"step size underflow (h={h:.3e})", t=T - tau)
        K[0] = k1
        ok = True
        for s in range(1, 7):
            ys_ = y + h * (np.array(_A[s]) @ K[:s])
            if not np.all(ys_ > 0):
                ok = False
                break
            K[s] = f(tau + _C[s] * h, ys_)
        if not ok:
            halvings += 1
            n_rej += 1
            if halvings > MAX_HALVINGS:
                raise SolverError("g lost positivity; retried step at half size 60 times", t=T - tau)
            h *= 0.5
            continue
        y_new = ys_
        err = h * (_E @ K)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        en = math.sqrt(float(np.mean((err / sc) ** 2)))
        if en <= 1.0:
            tau += h
            y = y_new
            k1 = K[6].copy()
            taus.append(tau)
            ys.append(y.copy())
            dys.append(-k1)
            n_acc += 1
            halvings = 0
            fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            h = min(h * fac, h_cap)
        else:
            n_rej += 1
            h *= max(0.2, 0.9 * en ** -0.2)

    grid = T - np.array(taus[::-1])
    grid[-1] = T
    grid[0] = t_start
    g = np.array(ys[::-1])
    dg = np.array(dys[::-1])
    g[-1] = 1.0
    if not np.all(g > 0):
        bad = int(np.argmin(g.min(axis=1)))
        raise SolverError("non-positive g on the solved grid", t=float(grid[bad]))
    certificate = _certify(g, market, prefs, chain)
    if certificate is not None and not all(c.holds for c in certificate):
        bad = next(c for c in certificate if not c.holds)
        raise SolverError(
            f"ratio certificate violated for j={bad.j}: observed "
            f"[{bad.observed_min}, {bad.observed_max}] outside [{bad.lower}, {bad.upper}]"
        )
    return GSolution(
        T=float(T),
        grid=grid,
        g=g,
        dg=dg,
        market=market,
        prefs=prefs,
        chain=chain,
        tolerance=tolerance,
        n_accepted=n_acc,
        n_rejected=n_rej,
        a_range=(a_seen[0], a_seen[1]),
        ratio_bounds=certificate,
    )


def interpolate_g(sol: GSolution, t: ArrayLike) -> NDArray[np.float64]:
    """Cubic Hermite interpolation of ``g`` from stored ``(g, dg)`` pairs.

    Scalar ``t`` gives a 4-vector; an array of shape ``(n,)`` gives ``(n, 4)``.
    Values at grid nodes are returned exactly.
    """
    tt = np.asarray(t, dtype=np.float64)
    scalar = tt.ndim == 0
    tt = np.atleast_1d(tt)
    grid = sol.grid
    lo, hi = grid[0], grid[-1]
    eps = 1e-12 * max(1.0, abs(hi))
    if np.any(tt < lo - eps) or np.any(tt > hi + eps) or np.any(~np.isfinite(tt)):
        raise RangeError(f"t outside solved range [{lo}, {hi}]")
    tt = np.clip(tt, lo, hi)
    k = np.searchsorted(grid, tt, side="right") - 1
    k = np.clip(k, 0, len(grid) - 2)
    h = grid[k + 1] - grid[k]
    s = ((tt - grid[k]) / h)[:, None]
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    hh = h[:, None]
    out = h00 * sol.g[k] + h10 * hh * sol.dg[k] + h01 * sol.g[k + 1] + h11 * hh * sol.dg[k + 1]
    # exact node values
    at_node = s[:, 0] == 0.0
    out[at_node] = sol.g[k[at_node]]
    at_end = tt == hi
    out[at_end] = sol.g[-1]
    if np.any(out <= 0):
        raise SolverError("interpolated g is not positive")
    return out[0] if scalar else out
