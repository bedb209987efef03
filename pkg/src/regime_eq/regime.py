"""
Two-state continuous-time Markov chain for the bull/bear market regime.

Regimes are labelled 1 (bull) and 2 (bear). The chain leaves regime 1 at
rate ``lambda1`` and regime 2 at rate ``lambda2``; every jump flips the
regime. Transition probabilities over a horizon are available in closed
form, and paths are sampled exactly from exponential holding times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError, NoStationaryDistributionError

REGIMES = (1, 2)


def _check_regime(i: int, name: str = "regime") -> None:
    if i not in REGIMES:
        raise DomainError(f"{name} must be 1 or 2, got {i!r}")


@dataclass(frozen=True)
class RegimeChain:
    """Generator of the two-state chain.

    Parameters
    ----------
    lambda1 : float
        Intensity of leaving regime 1 (per unit time).
    lambda2 : float
        Intensity of leaving regime 2 (per unit time).
    """

    lambda1: float
    lambda2: float

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {v!r}")

    @property
    def rates(self) -> tuple[float, float]:
        return (self.lambda1, self.lambda2)

    def rate(self, i: int) -> float:
        _check_regime(i)
        return self.rates[i - 1]

    @property
    def total_rate(self) -> float:
        return self.lambda1 + self.lambda2

    @property
    def generator(self) -> NDArray[np.float64]:
        """The 2x2 rate matrix Q; rows sum to zero."""
        l1, l2 = self.lambda1, self.lambda2
        return np.array([[-l1, l1], [l2, -l2]], dtype=np.float64)

    def swapped(self) -> "RegimeChain":
        """Same chain with the regime labels exchanged."""
        return RegimeChain(self.lambda2, self.lambda1)


def transition_probability(t: float, i: int, j: int, chain: RegimeChain, T: float) -> float:
    """P(regime at T is j | regime at t is i).

    The both-rates-zero chain is handled exactly: the regime never moves.
    """
    _check_regime(i, "i")
    _check_regime(j, "j")
    if t > T:
        raise DomainError(f"t={t} exceeds horizon T={T}")
    tot = chain.total_rate
    if tot == 0.0:
        return 1.0 if i == j else 0.0
    # decay = exp(-(l1+l2)(T-t)); the stationary part does not depend on i
    decay = math.exp(-tot * (T - t))
    stay = chain.rates[2 - i] / tot
    if i == j:
        return stay + (chain.rates[i - 1] / tot) * decay
    return (chain.rates[i - 1] / tot) * (1.0 - decay)


def transition_probabilities(t, chain: RegimeChain, T: float) -> NDArray[np.float64]:
    """Vectorised transition matrices: shape ``t.shape + (2, 2)``."""
    tt = np.asarray(t, dtype=np.float64)
    if np.any(tt > T):
        raise DomainError(f"t exceeds horizon T={T}")
    out = np.empty(tt.shape + (2, 2))
    tot = chain.total_rate
    if tot == 0.0:
        out[...] = np.eye(2)
        return out
    decay = np.exp(-tot * (T - tt))
    l1, l2 = chain.rates
    out[..., 0, 0] = l2 / tot + (l1 / tot) * decay
    out[..., 0, 1] = (l1 / tot) * (1.0 - decay)
    out[..., 1, 0] = (l2 / tot) * (1.0 - decay)
    out[..., 1, 1] = l1 / tot + (l2 / tot) * decay
    return out


def transition_matrix(t: float, chain: RegimeChain, T: float) -> NDArray[np.float64]:
    """Matrix P with P[i-1, j-1] = transition_probability(t, i, j, chain, T)."""
    return np.array(
        [[transition_probability(t, i, j, chain, T) for j in REGIMES] for i in REGIMES]
    )


def stationary_distribution(chain: RegimeChain) -> tuple[float, float]:
    """Long-run regime occupation probabilities ``(pi(1), pi(2))``."""
    tot = chain.total_rate
    if tot == 0.0:
        raise NoStationaryDistributionError(
            "lambda1 = lambda2 = 0: every regime is absorbing, no unique stationary law"
        )
    return (chain.lambda2 / tot, chain.lambda1 / tot)


@dataclass(frozen=True)
class RegimePath:
    """A realised regime trajectory on ``[start_time, end_time]``.

    ``states[k]`` is the regime entered at ``jump_times[k]``.
    """

    start_time: float
    end_time: float
    initial_state: int
    jump_times: NDArray[np.float64] = field(default_factory=lambda: np.empty(0))
    states: NDArray[np.int64] = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        _check_regime(self.initial_state, "initial_state")
        jt = np.asarray(self.jump_times, dtype=np.float64)
        st = np.asarray(self.states, dtype=np.int64)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "states", st)
        if jt.shape != st.shape:
            raise DomainError("jump_times and states must have equal length")
        if jt.size:
            if np.any(np.diff(jt) <= 0):
                raise DomainError("jump_times must be strictly increasing")
            if jt[0] <= self.start_time or jt[-1] > self.end_time:
                raise DomainError("jump_times must lie in (start_time, end_time]")
            prev = np.concatenate(([self.initial_state], st[:-1]))
            if np.any(st == prev) or np.any((st != 1) & (st != 2)):
                raise DomainError("consecutive states must alternate between 1 and 2")

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    @property
    def terminal_state(self) -> int:
        return int(self.states[-1]) if self.states.size else self.initial_state

    def state_at(self, t: float) -> int:
        """Regime in force at time ``t`` (right-continuous)."""
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.initial_state if k == 0 else int(self.states[k - 1])

    def occupation_times(self) -> tuple[float, float]:
        """Total time spent in regime 1 and regime 2."""
        edges = np.concatenate(([self.start_time], self.jump_times, [self.end_time]))
        regs = np.concatenate(([self.initial_state], self.states))
        lengths = np.diff(edges)
        return (float(lengths[regs == 1].sum()), float(lengths[regs == 2].sum()))


def path_generator(seed: int, path_index: int = 0, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, path_index)``.

    Distinct ``stream`` values select disjoint regions of the Philox counter
    space so that regime and Brownian draws for one path never overlap.
    """
    if not 0 <= seed < 2**64 or not 0 <= path_index < 2**64:
        raise DomainError("seed and path_index must fit in 64 unsigned bits")
    key = (int(seed) << 64) | int(path_index)
    counter = np.array([0, 0, 0, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def sample_regime_path(
    i0: int,
    t0: float,
    T: float,
    chain: RegimeChain,
    seed: int = 0,
    path_index: int = 0,
    rng: np.random.Generator | None = None,
) -> RegimePath:
    """Exact sample of the chain on ``[t0, T]`` started in regime ``i0``.

    Holding times are exponential draws by inverse CDF; a zero rate means
    the current regime is never left. Pass ``rng`` to override the
    ``(seed, path_index)`` keyed stream.
    """
    _check_regime(i0, "i0")
    if not t0 < T:
        raise DomainError(f"need t0 < T, got t0={t0}, T={T}")
    if rng is None:
        rng = path_generator(seed, path_index, stream=0)
    times, states = draw_jumps(i0, t0, T, chain.rates, rng)
    return RegimePath(t0, T, i0, times, states)


def draw_jumps(i0: int, t0: float, T: float, rates, rng: np.random.Generator):
    """Jump times in ``(t0, T]`` and the regimes entered, as two arrays."""
    times: list[float] = []
    states: list[int] = []
    t, state = t0, i0
    while True:
        lam = rates[state - 1]
        if lam == 0.0:
            break
        t = t - math.log1p(-rng.random()) / lam
        if t > T:
            break
        state = 3 - state
        times.append(t)
        states.append(state)
    return np.array(times, dtype=np.float64), np.array(states, dtype=np.int64)
