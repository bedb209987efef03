"""
Monte Carlo simulation of regime-modulated wealth under homogeneous
feedback strategies, with estimators for conditional expected utilities,
the certainty-equivalent objective, and finite-``h`` perturbation slopes.

Each path owns three counter-based random streams keyed by
``(seed, path_index)``: the regime chain, the Brownian increments on the
regular step grid, and Brownian-bridge draws used when a regime jump splits
a step. Results therefore do not depend on how paths are distributed over
worker processes.

Wealth is stepped in log space. Within a segment (a grid step, or part of
one when a jump falls inside it) the regime and the strategy fraction are
frozen at the segment start, so

    d log X = (r + (mu - r) f - f^2 sigma^2 / 2) dt + f sigma dW.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import solve_ivp

from .errors import ConfigError, DomainError, SimulationError, UnreachableRegimeError
from .odes import GSolution, MarketParams, Preferences
from .regime import REGIMES, RegimeChain, RegimePath, draw_jumps, path_generator, transition_probability
from .strategy import EquilibriumStrategy, StrategySpec, SwitchedStrategy, a_weights, inverse_utility

ESTIMATE_COLUMNS = ("quantity", "regime_i", "regime_j", "estimate", "std_error", "n_effective", "n_paths", "dt", "seed")
THREADS_ENV = "REGIME_EQ_THREADS"
BLOCK_SIZE = 250
LOW_SAMPLE = 30

_STREAM_REGIME, _STREAM_BROWNIAN, _STREAM_BRIDGE = 0, 1, 2


@dataclass(frozen=True)
class SimConfig:
    """Discretisation and sampling settings for one simulation run."""

    n_paths: int
    dt: float
    seed: int
    t0: float
    x0: float
    i0: int
    T: float

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError("n_paths must be >= 1")
        if not 0 < self.dt <= self.T - self.t0:
            raise DomainError(f"need 0 < dt <= T - t0, got dt={self.dt}, T-t0={self.T - self.t0}")
        if not self.x0 > 0:
            raise DomainError("x0 must be > 0")
        if self.i0 not in REGIMES:
            raise DomainError("i0 must be 1 or 2")


def step_grid(t0: float, T: float, dt: float) -> NDArray[np.float64]:
    """Regular grid ``t0, t0+dt, ...`` ending exactly at ``T``.

    The last step may be short; a remainder below ``1e-6 * dt`` is merged
    into the previous step instead of producing a sliver.
    """
    n = max(1, int(math.ceil((T - t0) / dt - 1e-6)))
    grid = t0 + dt * np.arange(n + 1, dtype=np.float64)
    grid[-1] = T
    return grid


@dataclass(frozen=True)
class Segments:
    """Pieces of the step grid on which the regime is constant."""

    start: NDArray[np.float64]
    length: NDArray[np.float64]
    regime: NDArray[np.int64]
    step: NDArray[np.int64]
    on_grid: NDArray[np.bool_]

    def __len__(self):
        return self.start.size


def segment_path(path: RegimePath, grid: NDArray[np.float64]) -> Segments:
    """Split the grid steps of ``grid`` at the jump times of ``path``."""
    jt = path.jump_times[path.jump_times < grid[-1]]
    pos = np.searchsorted(grid, jt, side="left")
    jt = jt[grid[pos] != jt]
    where = np.searchsorted(grid, jt)
    breaks = np.insert(grid, where, jt)
    start = breaks[:-1]
    on_grid = np.ones(start.size, dtype=bool)
    on_grid[where + np.arange(jt.size)] = False
    step = np.searchsorted(grid, start, side="right") - 1
    k = np.searchsorted(path.jump_times, start, side="right")
    regime = np.concatenate(([path.initial_state], path.states))[k]
    return Segments(start, np.diff(breaks), regime, step, on_grid)


def sample_increments(
    seg: Segments, grid: NDArray[np.float64], rng_w: np.random.Generator, rng_b: np.random.Generator
) -> NDArray[np.float64]:
    """Brownian increments per segment.

    One normal per grid step gives the step increment; steps split by jumps
    are filled in by a Brownian bridge conditioned on that step increment.
    """
    h = np.diff(grid)
    n = h.size
    dW = np.sqrt(h) * rng_w.standard_normal(n)
    inc = dW[seg.step]
    counts = np.bincount(seg.step, minlength=n)
    split = counts[seg.step] > 1
    if split.any():
        L = seg.length[split]
        st = seg.step[split]
        w = np.sqrt(L) * rng_b.standard_normal(L.size)
        sums = np.bincount(st, weights=w, minlength=n)
        inc[split] = w + L / h[st] * (dW[st] - sums[st])
    return inc


def path_increments(seg: Segments, grid, seed: int, path_index: int) -> NDArray[np.float64]:
    return sample_increments(
        seg,
        grid,
        path_generator(seed, path_index, _STREAM_BROWNIAN),
        path_generator(seed, path_index, _STREAM_BRIDGE),
    )


def _fraction_tables(strategies, grid):
    nodes = grid[:-1]
    return [np.column_stack([np.broadcast_to(s.fraction(nodes, i), nodes.shape) for i in REGIMES]) for s in strategies]


def _segment_fractions(strategy, table, seg: Segments):
    f = table[seg.step, seg.regime - 1]
    off = ~seg.on_grid
    if off.any():
        f = f.copy()
        f[off] = strategy.fraction(seg.start[off], seg.regime[off])
    return f


def _log_increments(f, seg: Segments, inc, market: MarketParams):
    r = np.asarray(market.r)[seg.regime - 1]
    ex = np.asarray(market.mu)[seg.regime - 1] - r
    sig = np.asarray(market.sigma)[seg.regime - 1]
    # overflow is reported by _check_finite with the step index
    with np.errstate(over="ignore", invalid="ignore"):
        return (r + ex * f - 0.5 * (f * sig) ** 2) * seg.length + f * sig * inc


def _check_finite(logs, x0):
    vals = math.log(x0) + np.cumsum(logs)
    bad = ~np.isfinite(vals)
    if bad.any():
        raise SimulationError("wealth became non-finite", step=int(np.argmax(bad)))


def simulate_wealth(
    path: RegimePath,
    strategy: StrategySpec,
    config: SimConfig,
    market: MarketParams,
    increments: NDArray[np.float64] | None = None,
    path_index: int = 0,
) -> float:
    """Terminal wealth along one regime path by log-space Euler stepping.

    ``increments`` are Brownian increments per segment of
    ``segment_path(path, step_grid(config.t0, config.T, config.dt))``; when
    omitted they are drawn from the ``(config.seed, path_index)`` streams.
    """
    grid = step_grid(config.t0, config.T, config.dt)
    seg = segment_path(path, grid)
    if increments is None:
        increments = path_increments(seg, grid, config.seed, path_index)
    elif len(increments) != len(seg):
        raise DomainError(f"expected {len(seg)} increments, got {len(increments)}")
    table = _fraction_tables([strategy], grid)[0]
    logs = _log_increments(_segment_fractions(strategy, table, seg), seg, np.asarray(increments), market)
    _check_finite(logs, config.x0)
    return float(config.x0 * math.exp(logs.sum()))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def exact_wealth_equilibrium(
    path: RegimePath,
    sol: GSolution,
    config: SimConfig,
    brownian_increments: NDArray[np.float64],
) -> float:
    """Terminal wealth from the explicit exponential solution of the wealth SDE.

    Under the equilibrium rule ``log X`` has drift ``r + th^2 A - th^2 A^2/2``
    and volatility ``th A`` with deterministic ``A`` between jumps. The drift
    is integrated by Gauss-Legendre quadrature per segment; the stochastic
    integral is replaced by its conditional mean given the segment
    increments, ``th * mean(A) * dW``. Nothing is frozen at segment starts.
    """
    grid = step_grid(config.t0, config.T, config.dt)
    seg = segment_path(path, grid)
    inc = np.asarray(brownian_increments)
    if inc.size != len(seg):
        raise DomainError(f"expected {len(seg)} increments, got {inc.size}")
    m = sol.market
    nodes = seg.start[:, None] + 0.5 * seg.length[:, None] * (_GL_NODES[None, :] + 1.0)
    A = a_weights(sol, nodes)
    A = np.where(seg.regime[:, None] == 1, A[..., 0], A[..., 1])
    theta = np.array([m.theta(1), m.theta(2)])[seg.regime - 1][:, None]
    r = np.asarray(m.r)[seg.regime - 1]
    drift = r + 0.5 * (_GL_WEIGHTS[None, :] * (theta**2 * A - 0.5 * theta**2 * A**2)).sum(axis=1)
    a_mean = 0.5 * (_GL_WEIGHTS[None, :] * A).sum(axis=1)
    logs = drift * seg.length + theta[:, 0] * a_mean * inc
    _check_finite(logs, config.x0)
    return float(config.x0 * math.exp(logs.sum()))


def resolve_workers(workers: int | None = None) -> int:
    """Worker count, capped by the ``REGIME_EQ_THREADS`` environment variable."""
    n = workers if workers is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, int(n))


def _node_coefficients(strategy, table, market: MarketParams):
    """Log-drift rate and log-volatility at grid nodes, shape ``(n, 2)`` each."""
    r = np.asarray(market.r)
    ex = np.asarray(market.mu) - r
    sig = np.asarray(market.sigma)
    return r + ex * table - 0.5 * (table * sig) ** 2, table * sig


def _simulate_block(task):
    """Simulate paths ``start..stop-1`` for every strategy.

    Unsplit grid steps are handled as dense ``(paths, steps)`` matrix
    products; steps split by a jump get a correction computed from their
    segments. Random draws match :func:`simulate_wealth` path by path.
    """
    start, stop, strategies, t0, T, i0, dt, seed, market, chain = task
    grid = step_grid(t0, T, dt)
    h = np.diff(grid)
    n = h.size
    P = stop - start
    tables = _fraction_tables(strategies, grid)
    coeffs = [_node_coefficients(s, tab, market) for s, tab in zip(strategies, tables)]

    dW = np.empty((P, n))
    counts = np.zeros((P, n + 1), dtype=np.int64)
    terminal = np.empty(P, dtype=np.int64)
    j_path, j_time, j_state, j_step, xis = [], [], [], [], []
    for p, k in enumerate(range(start, stop)):
        times, states = draw_jumps(i0, t0, T, chain.rates, path_generator(seed, k, _STREAM_REGIME))
        terminal[p] = states[-1] if states.size else i0
        dW[p] = path_generator(seed, k, _STREAM_BROWNIAN).standard_normal(n)
        keep = times < T
        if not keep.any():
            continue
        tj, sj = times[keep], states[keep]
        node = np.searchsorted(grid, tj, side="left")
        counts[p] += np.bincount(node, minlength=n + 1)
        inside = grid[node] != tj
        if inside.any():
            ki = node[inside] - 1
            n_groups = 1 + int(np.count_nonzero(np.diff(ki)))
            j_path.append(np.full(ki.size, p))
            j_time.append(tj[inside])
            j_state.append(sj[inside])
            j_step.append(ki)
            xis.append(path_generator(seed, k, _STREAM_BRIDGE).standard_normal(n_groups + ki.size))
    dW *= np.sqrt(h)
    # regime at each node: parity of the jumps at or before it
    odd = (np.cumsum(counts[:, :n], axis=1) & 1).astype(bool)
    in2 = odd if i0 == 1 else ~odd
    M = in2.astype(np.float64)
    node_regime = np.where(in2, 2, 1)

    logs = np.empty((P, len(strategies)))
    for a, (D, V) in enumerate(coeffs):
        Dh = D * h[:, None]
        logs[:, a] = (
            Dh[:, 0].sum()
            + dW @ V[:, 0]
            + M @ (Dh[:, 1] - Dh[:, 0])
            + (M * dW) @ (V[:, 1] - V[:, 0])
        )

    if j_path:
        jp = np.concatenate(j_path)
        tj = np.concatenate(j_time)
        sj = np.concatenate(j_state)
        kj = np.concatenate(j_step)
        xi = np.concatenate(xis)
        J = jp.size
        new_group = np.ones(J, dtype=bool)
        new_group[1:] = (jp[1:] != jp[:-1]) | (kj[1:] != kj[:-1])
        gid = np.cumsum(new_group) - 1
        G = int(gid[-1]) + 1
        first = np.flatnonzero(new_group)
        gp, gk = jp[first], kj[first]
        # per path: group g contributes [leading piece, its jump pieces...]
        pos_first = first + np.arange(G)
        pos_jump = np.arange(J) + gid + 1
        same_next = np.zeros(J, dtype=bool)
        same_next[:-1] = ~new_group[1:]
        jump_end = np.where(same_next, np.roll(tj, -1), grid[kj + 1])
        L = np.empty(G + J)
        L[pos_first] = tj[first] - grid[gk]
        L[pos_jump] = jump_end - tj
        seg_gid = np.empty(G + J, dtype=np.int64)
        seg_gid[pos_first] = np.arange(G)
        seg_gid[pos_jump] = gid
        w = np.sqrt(L) * xi
        sums = np.bincount(seg_gid, weights=w, minlength=G)
        dWg = dW[gp, gk]
        w = w + L / h[gk][seg_gid] * (dWg - sums)[seg_gid]
        r0 = node_regime[gp, gk] - 1

        r = np.asarray(market.r)
        ex = np.asarray(market.mu) - r
        sig = np.asarray(market.sigma)
        for a, (s, (D, V)) in enumerate(zip(strategies, coeffs)):
            f = np.asarray(s.fraction(tj, sj), dtype=np.float64)
            Dj = r[sj - 1] + ex[sj - 1] * f - 0.5 * (f * sig[sj - 1]) ** 2
            Vj = f * sig[sj - 1]
            contrib = np.empty(G + J)
            contrib[pos_first] = D[gk, r0] * L[pos_first] + V[gk, r0] * w[pos_first]
            contrib[pos_jump] = Dj * L[pos_jump] + Vj * w[pos_jump]
            total = np.bincount(seg_gid, weights=contrib, minlength=G)
            base = D[gk, r0] * h[gk] + V[gk, r0] * dWg
            np.add.at(logs[:, a], gp, total - base)
    return terminal, logs


@dataclass(frozen=True)
class PathBatch:
    """Terminal regimes and terminal log-wealth growth for every path and strategy."""

    terminal_regime: NDArray[np.int64]
    log_growth: NDArray[np.float64]

    def wealth(self, x0: float, arm: int = 0) -> NDArray[np.float64]:
        return x0 * np.exp(self.log_growth[:, arm])


def simulate_paths(
    strategies: list[StrategySpec],
    t0: float,
    T: float,
    i0: int,
    n_paths: int,
    market: MarketParams,
    chain: RegimeChain,
    seed: int,
    dt: float = 1e-3,
    workers: int | None = None,
) -> PathBatch:
    """Simulate ``n_paths`` joint regime/wealth paths for several strategies at once.

    Every strategy sees the same regime paths and Brownian increments. The
    output is bit-identical for any worker count: paths are processed in
    fixed blocks of ``BLOCK_SIZE`` whatever the number of workers.
    """
    SimConfig(n_paths, dt, seed, t0, 1.0, i0, T)
    tasks = [
        (s, min(s + BLOCK_SIZE, n_paths), strategies, t0, T, i0, dt, seed, market, chain)
        for s in range(0, n_paths, BLOCK_SIZE)
    ]
    nw = min(resolve_workers(workers), len(tasks))
    if nw == 1:
        results = [_simulate_block(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(_simulate_block, tasks))
    terminal = np.concatenate([r[0] for r in results])
    logs = np.concatenate([r[1] for r in results])
    if not np.all(np.isfinite(logs)):
        raise SimulationError("wealth became non-finite on at least one path")
    return PathBatch(terminal, logs)


@dataclass(frozen=True)
class ConditionalEstimate:
    """Sample mean of ``u^j(X_T)`` over paths that end in regime ``j``."""

    j: int
    mean: float
    standard_error: float
    n_effective: int
    warning: str | None = None


@dataclass(frozen=True)
class McEstimate:
    """Per-terminal-regime estimates plus the combined objective."""

    t0: float
    x0: float
    i0: int
    n_paths: int
    dt: float
    seed: int
    components: tuple[ConditionalEstimate | None, ConditionalEstimate | None]
    objective: float
    objective_se: float

    @property
    def n_effective(self) -> tuple[int, int]:
        return tuple(c.n_effective if c is not None else 0 for c in self.components)

    def component(self, j: int) -> ConditionalEstimate:
        c = self.components[j - 1]
        if c is None:
            raise UnreachableRegimeError(f"terminal regime {j} is unreachable from regime {self.i0}")
        return c

    def rows(self) -> list[dict]:
        out = []
        for c in self.components:
            if c is not None:
                out.append(self._row("conditional_utility", c.j, c.mean, c.standard_error, c.n_effective))
        out.append(self._row("objective", "", self.objective, self.objective_se, self.n_paths))
        return out

    def _row(self, quantity, j, est, se, n_eff):
        return dict(
            quantity=quantity, regime_i=self.i0, regime_j=j, estimate=est, std_error=se,
            n_effective=n_eff, n_paths=self.n_paths, dt=self.dt, seed=self.seed,
        )


def _u(x, a):
    return x ** (1.0 - a) / (1.0 - a)


def _component(j, X, terminal, prefs):
    mask = terminal == j
    n = int(mask.sum())
    if n == 0:
        return None
    vals = _u(X[mask], prefs.alpha(j))
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    warn = f"only {n} paths end in regime {j}" if n < LOW_SAMPLE else None
    return ConditionalEstimate(j, float(vals.mean()), se, n, warn)


def _objective_influence(X, terminal, prefs, reachable):
    """Objective estimate and its per-path influence values (delta method)."""
    n = X.size
    psi = np.zeros(n)
    J = 0.0
    for j in REGIMES:
        mask = terminal == j
        if not reachable[j - 1] or not mask.any():
            continue
        a = prefs.alpha(j)
        vals = _u(X[mask], a)
        m = vals.mean()
        ce = inverse_utility(m, j, prefs)
        dce = ((1.0 - a) * m) ** (a / (1.0 - a))
        J += mask.mean() * ce
        psi[mask] += ce + dce * (vals - m)
    return J, psi - J


def _degenerate_horizon(t0, T):
    return T - t0 <= 0


def _resolve_T(strategy, T):
    if T is None:
        sol = getattr(strategy, "sol", None)
        if sol is None:
            raise DomainError("horizon T is required for strategies without a solved g")
        return sol.T
    return T


def estimate_conditional_utility(
    t0: float,
    x0: float,
    i0: int,
    j: int,
    strategy: StrategySpec,
    n_paths: int,
    market: MarketParams,
    prefs: Preferences,
    chain: RegimeChain,
    seed: int,
    *,
    T: float | None = None,
    dt: float = 1e-3,
    workers: int | None = None,
) -> ConditionalEstimate:
    """Estimate ``E[u^j(X_T) | X_t0 = x0, regime_t0 = i0, regime_T = j]``.

    Paths are simulated unconditionally and filtered on the terminal regime;
    the Brownian motion is independent of the chain so this is unbiased.
    """
    T = _resolve_T(strategy, T)
    if transition_probability(t0, i0, j, chain, T) == 0.0:
        raise UnreachableRegimeError(f"regime {j} at T is unreachable from regime {i0} at t0={t0}")
    if _degenerate_horizon(t0, T):
        return ConditionalEstimate(j, _u(x0, prefs.alpha(j)), 0.0, n_paths)
    batch = simulate_paths([strategy], t0, T, i0, n_paths, market, chain, seed, dt, workers)
    est = _component(j, batch.wealth(x0), batch.terminal_regime, prefs)
    if est is None:
        raise UnreachableRegimeError(f"no simulated path ended in regime {j}")
    if est.warning:
        warnings.warn(est.warning, stacklevel=2)
    return est


def estimate_unconditional_utility(
    t0: float,
    x0: float,
    i0: int,
    j: int,
    strategy: StrategySpec,
    n_paths: int,
    market: MarketParams,
    prefs: Preferences,
    chain: RegimeChain,
    seed: int,
    *,
    T: float | None = None,
    dt: float = 1e-3,
    workers: int | None = None,
) -> tuple[float, float]:
    """Mean and standard error of ``u^j(X_T)`` over all paths, not filtered on the terminal regime."""
    T = _resolve_T(strategy, T)
    if _degenerate_horizon(t0, T):
        return _u(x0, prefs.alpha(j)), 0.0
    batch = simulate_paths([strategy], t0, T, i0, n_paths, market, chain, seed, dt, workers)
    vals = _u(batch.wealth(x0), prefs.alpha(j))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def summarize(batch: PathBatch, t0, x0, i0, prefs, chain, T, dt, seed, arm: int = 0) -> McEstimate:
    """Turn simulated paths into an :class:`McEstimate`."""
    X = batch.wealth(x0, arm)
    terminal = batch.terminal_regime
    reachable = [transition_probability(t0, i0, j, chain, T) > 0 for j in REGIMES]
    comps = tuple(_component(j, X, terminal, prefs) if reachable[j - 1] else None for j in REGIMES)
    J, psi = _objective_influence(X, terminal, prefs, reachable)
    n = X.size
    se = float(psi.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return McEstimate(t0, x0, i0, n, dt, seed, comps, J, se)


def estimate_objective(
    t0: float,
    x0: float,
    i0: int,
    strategy: StrategySpec,
    n_paths: int,
    market: MarketParams,
    prefs: Preferences,
    chain: RegimeChain,
    seed: int,
    *,
    T: float | None = None,
    dt: float = 1e-3,
    workers: int | None = None,
) -> McEstimate:
    """Estimate the certainty-equivalent objective.

    ``J = sum_j p_hat(j) (u^j)^{-1}(mean_j)`` with ``p_hat`` the observed
    terminal-regime frequencies. The standard error is the delta-method
    error of that plug-in estimator, including the noise in ``p_hat``.
    """
    T = _resolve_T(strategy, T)
    if _degenerate_horizon(t0, T):
        comps = tuple(
            ConditionalEstimate(j, _u(x0, prefs.alpha(j)), 0.0, n_paths) if j == i0 else None for j in REGIMES
        )
        return McEstimate(t0, x0, i0, n_paths, dt, seed, comps, float(x0), 0.0)
    batch = simulate_paths([strategy], t0, T, i0, n_paths, market, chain, seed, dt, workers)
    est = summarize(batch, t0, x0, i0, prefs, chain, T, dt, seed)
    for c in est.components:
        if c is not None and c.warning:
            warnings.warn(c.warning, stacklevel=2)
    return est


@dataclass(frozen=True)
class PerturbationResult:
    """Finite-``h`` slope ``(J(pi_h) - J(pi_hat)) / h`` with its standard error."""

    h: float
    slope: float
    standard_error: float
    objective_perturbed: float
    objective_equilibrium: float


def perturbation_test(
    t0: float,
    x0: float,
    i0: int,
    alt_strategy: StrategySpec,
    h_values,
    sol: GSolution,
    n_paths: int,
    seed: int,
    *,
    dt: float = 1e-3,
    workers: int | None = None,
) -> list[PerturbationResult]:
    """Probe the equilibrium property with spliced strategies.

    For each ``h`` the strategy ``pi_h`` follows ``alt_strategy`` on
    ``[t0, t0+h)`` and the equilibrium rule afterwards. All arms share the
    same random numbers, so the slope standard error is computed from the
    per-path difference of influence values.
    """
    T = sol.T
    hs = [float(h) for h in h_values]
    for h in hs:
        if not 0 < h < T - t0:
            raise DomainError(f"h={h} must lie in (0, T - t0)")
        if abs(h / dt - round(h / dt)) > 1e-6:
            warnings.warn(f"h={h} is not a multiple of dt={dt}; the switch is rounded to the step grid", stacklevel=2)
    eq = EquilibriumStrategy(sol)
    arms = [eq] + [SwitchedStrategy(alt_strategy, eq, t0 + h) for h in hs]
    batch = simulate_paths(arms, t0, T, i0, n_paths, sol.market, sol.chain, seed, dt, workers)
    return perturbation_slopes(batch, x0, hs, sol.prefs)


def perturbation_slopes(
    batch: PathBatch, x0: float, h_values, prefs: Preferences, first_arm: int = 1
) -> list[PerturbationResult]:
    """Slopes of arms ``first_arm, first_arm+1, ...`` (one per ``h``) against arm 0.

    Arm 0 of ``batch`` must be the equilibrium rule; all arms share the same
    random numbers, so the standard error comes from the per-path
    difference of influence values.
    """
    # regimes no path reaches drop out of the plug-in estimator on their own
    reachable = (True, True)
    J0, psi0 = _objective_influence(batch.wealth(x0, 0), batch.terminal_regime, prefs, reachable)
    out = []
    for a, h in enumerate(h_values, start=first_arm):
        Jh, psih = _objective_influence(batch.wealth(x0, a), batch.terminal_regime, prefs, reachable)
        d = psih - psi0
        se = float(d.std(ddof=1) / math.sqrt(d.size)) / h if d.size > 1 else float("inf")
        out.append(PerturbationResult(float(h), (Jh - J0) / h, se, Jh, J0))
    return out


def expected_utility_exact(
    t0: float,
    x0: float,
    i0: int,
    j: int,
    strategy: StrategySpec,
    market: MarketParams,
    prefs: Preferences,
    chain: RegimeChain,
    T: float,
    conditional: bool = True,
    rtol: float = 1e-10,
) -> float:
    """Deterministic ``E[u^j(X_T)]`` for a homogeneous strategy, by Feynman-Kac.

    ``E[X_T^(1-a) 1{regime_T in B} | X_t = x, regime_t = i] = x^(1-a) k_i(t)``
    where ``k`` solves a 2-dimensional linear ODE driven by the chain
    generator. With ``conditional=True`` the terminal indicator is
    ``{regime_T = j}`` and the result is divided by ``p(t0, i0, j)``;
    otherwise no conditioning is applied.
    """
    a = prefs.alpha(j)
    pw = 1.0 - a
    Q = chain.generator
    r = np.asarray(market.r)
    ex = np.asarray(market.mu) - r
    s2 = np.asarray(market.sigma) ** 2

    def rhs(t, k):
        f = np.array([strategy.fraction(min(t, T), i) for i in REGIMES])
        c = pw * (r + ex * f) + 0.5 * pw * (pw - 1.0) * f * f * s2
        return -(c * k) - Q @ k

    if conditional:
        p = transition_probability(t0, i0, j, chain, T)
        if p == 0.0:
            raise UnreachableRegimeError(f"regime {j} at T is unreachable from regime {i0}")
        k_T = np.eye(2)[j - 1]
    else:
        p = 1.0
        k_T = np.ones(2)
    if T - t0 <= 0:
        k = k_T
    else:
        sol = solve_ivp(rhs, (T, t0), k_T, method="DOP853", rtol=rtol, atol=rtol * 1e-3)
        k = sol.y[:, -1]
    return x0**pw / pw * k[i0 - 1] / p


def write_estimates_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ESTIMATE_COLUMNS)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in ESTIMATE_COLUMNS)])
