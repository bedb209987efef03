"""Shared fixtures: the reference bull/bear market and its solved g."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from regime_eq import MarketParams, Preferences, RegimeChain, rhs, solve_g


@pytest.fixture(scope="session")
def market():
    return MarketParams(r=(0.05, 0.01), mu=(0.15, 0.25), sigma=(0.25, 0.6))


@pytest.fixture(scope="session")
def prefs():
    return Preferences(2.0, 3.0)


@pytest.fixture(scope="session")
def chain():
    return RegimeChain(1.0, 1.0)


@pytest.fixture(scope="session")
def sol(market, prefs, chain):
    return solve_g(market, prefs, chain, 10.0)


def reference_g(market, prefs, chain, T, t_eval, rtol=1e-12):
    """Independent oracle: scipy's DOP853 on the same right-hand side, in reversed time.

    ``t_eval`` must be increasing; returns an array of shape ``(len(t_eval), 4)``.
    """
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    taus = (T - t_eval)[::-1]
    out = solve_ivp(
        lambda tau, y: -rhs(T - tau, y, market, prefs, chain, T),
        (0.0, taus[-1]),
        np.ones(4),
        method="DOP853",
        rtol=rtol,
        atol=rtol,
        t_eval=taus,
    )
    assert out.success
    return out.y.T[::-1]


@pytest.fixture(scope="session")
def reference():
    return reference_g
