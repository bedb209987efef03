"""
Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Every key is optional; the defaults are the reference bull/bear market
used throughout the package documentation::

    # market, regime 1 = bull, regime 2 = bear
    r1 = 0.05
    r2 = 0.01
    mu1 = 0.15
    mu2 = 0.25
    sigma1 = 0.25
    sigma2 = 0.6
    # risk aversion of the regime-1 and regime-2 utilities
    alpha1 = 2
    alpha2 = 3
    # intensities of leaving regime 1 and regime 2
    lambda1 = 1
    lambda2 = 1
    T = 10
    t_start = 0
    tolerance = 1e-10
    # Monte Carlo
    seed = 20240101
    n_paths = 100000
    dt = 0.001
    t0 = 0
    x0 = 1
    # Monte Carlo worker processes, 0 = one per CPU (REGIME_EQ_THREADS caps it)
    workers = 0
    # strategy table
    grid_points = 1001
    output_dir = out
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError, RegimeEqError
from .montecarlo import SimConfig
from .odes import MarketParams, Preferences
from .regime import RegimeChain

_FLOAT_KEYS = (
    "r1", "r2", "mu1", "mu2", "sigma1", "sigma2", "alpha1", "alpha2",
    "lambda1", "lambda2", "T", "t_start", "tolerance", "dt", "t0", "x0",
)
_INT_KEYS = ("seed", "n_paths", "workers", "grid_points")
_STR_KEYS = ("output_dir",)


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs; field names are the config keys."""

    r1: float = 0.05
    r2: float = 0.01
    mu1: float = 0.15
    mu2: float = 0.25
    sigma1: float = 0.25
    sigma2: float = 0.6
    alpha1: float = 2.0
    alpha2: float = 3.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    T: float = 10.0
    t_start: float = 0.0
    tolerance: float = 1e-10
    seed: int = 20240101
    n_paths: int = 100_000
    dt: float = 1e-3
    t0: float = 0.0
    x0: float = 1.0
    workers: int = 0
    grid_points: int = 1001
    output_dir: str = "out"

    def __post_init__(self):
        try:
            self.market, self.prefs, self.chain
        except RegimeEqError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.t_start < self.T:
            raise ConfigError(f"need t_start < T, got t_start={self.t_start}, T={self.T}")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be > 0")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be >= 2")
        if not self.t_start <= self.t0 <= self.T:
            raise ConfigError(f"t0={self.t0} outside [t_start, T]")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        if self.n_paths < 1 or not self.dt > 0 or not self.x0 > 0 or self.seed < 0:
            raise ConfigError("need n_paths >= 1, dt > 0, x0 > 0, seed >= 0")

    @property
    def market(self) -> MarketParams:
        return MarketParams((self.r1, self.r2), (self.mu1, self.mu2), (self.sigma1, self.sigma2))

    @property
    def prefs(self) -> Preferences:
        return Preferences(self.alpha1, self.alpha2)

    @property
    def chain(self) -> RegimeChain:
        return RegimeChain(self.lambda1, self.lambda2)

    def sim(self, i0: int) -> SimConfig:
        """Monte Carlo settings started in regime ``i0``."""
        try:
            return SimConfig(self.n_paths, min(self.dt, self.T - self.t0), self.seed, self.t0, self.x0, i0, self.T)
        except RegimeEqError as exc:
            raise ConfigError(str(exc)) from exc

    def updated(self, **changes) -> "RunConfig":
        """Copy with some keys replaced; ``None`` values are ignored."""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n".replace("'", "") for f in fields(self))


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines into a :class:`RunConfig`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        where = f"{source}:{lineno}"
        if not sep or not key or not value:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        if key in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        values[key] = _convert(key, value, where)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, str(path))


def _convert(key, value, where):
    try:
        if key in _FLOAT_KEYS:
            v = float(value)
            if not math.isfinite(v):
                raise ValueError
            return v
        if key in _INT_KEYS:
            return int(value)
        if key in _STR_KEYS:
            return value
    except ValueError:
        raise ConfigError(f"{where}: invalid value {value!r} for {key!r}") from None
    raise ConfigError(f"{where}: unknown key {key!r}")
