"""Optimal consumption, wealth and portfolio at time t.

With ``k = 1 / (gamma - 1)`` and the agent's state price
``zeta_t = Z_t exp((rho - r) t)``, the optimal consumption rate is
``(y zeta_t)**k`` and the optimal wealth is::

    X_t = (y zeta_t)**k * G(theta_t, T - t)

where ``G`` is the annuity of the spending density ``H`` for consumers and
``H(theta_t, T - t)`` for the terminal agent. In terms of
``Y_t = exp(r t) / (y Z_t)`` the prefactor is
``Y_t**(1/(1-gamma)) * exp(-rho t / (1 - gamma))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import riccati
from .core_model import AgentSpec, MarketParams, Role
from .riccati import AffineCoefficients


@dataclass(frozen=True)
class PolicyState:
    """Market state at time ``t``; ``Y_t = exp(r t) / (y Z_t)``.

    ``theta_t`` and ``Y_t`` may be arrays of equal shape (one entry per path).
    """

    t: float
    theta_t: object
    Y_t: object
    mu_t: object

    @classmethod
    def from_market(cls, market: MarketParams, t: float, theta_t, y: float, Z_t=1.0):
        theta_t = np.asarray(theta_t, dtype=float)
        Y = math.exp(market.r * t) / (y * np.asarray(Z_t, dtype=float))
        return cls(t, theta_t, Y, market.drift(theta_t))


def state_price(agent: AgentSpec, market: MarketParams, t: float, Z_t):
    """``zeta_t = Z_t exp(-r t) exp(rho t)``."""
    return np.asarray(Z_t, dtype=float) * math.exp((agent.rho - market.r) * t)


def consumption(agent: AgentSpec, y: float, zeta_t):
    """Optimal consumption rate ``(y zeta_t)**(1/(gamma - 1))``."""
    zeta_t = np.asarray(zeta_t, dtype=float)
    if not y > 0 or np.any(zeta_t <= 0):
        raise ValueError("y and zeta_t must be positive")
    return agent.inverse_marginal(y * zeta_t)


def _check_t(t, market):
    if not 0 <= t <= market.horizon_T:
        raise ValueError(f"t must lie in [0, T], got {t}")


def _prefactor(agent: AgentSpec, state: PolicyState):
    """``(y zeta_t)**k`` expressed through ``Y_t``."""
    Y = np.asarray(state.Y_t, dtype=float)
    if np.any(Y <= 0):
        raise ValueError("Y_t must be positive")
    return Y ** (1.0 / (1.0 - agent.gamma)) * math.exp(-agent.rho * state.t / (1.0 - agent.gamma))


def wealth_t(agent: AgentSpec, coeffs: AffineCoefficients, market: MarketParams,
             state: PolicyState):
    """Optimal wealth of ``agent`` at ``state``.

    A consumer's wealth is 0 at ``t = T``; the terminal agent's equals
    ``I(y zeta_T)``.
    """
    _check_t(state.t, market)
    tau = market.horizon_T - state.t
    theta = np.asarray(state.theta_t, dtype=float)
    if agent.role is Role.TERMINAL:
        g = riccati.h_integrand(coeffs, agent, market, theta, tau)
    else:
        g = riccati.annuity(coeffs, agent, market, theta, tau)
    return _prefactor(agent, state) * g


@dataclass(frozen=True)
class PortfolioBreakdown:
    """Per-agent risky positions.

    ``weights`` are fractions of each agent's wealth; ``amounts`` are
    ``weights * wealth``. ``total`` is the summed amount held by the shared
    portfolio and ``total_weight`` its fraction of total wealth.
    """

    myopic: tuple
    hedging: tuple
    weights: tuple
    amounts: tuple
    wealth: tuple
    brackets: tuple
    total: object
    total_weight: object


def portfolio_weights(agents: Sequence[AgentSpec], coeffs: Sequence[AffineCoefficients],
                      market: MarketParams, state: PolicyState, *,
                      convention: str = "derived") -> PortfolioBreakdown:
    """Risky-asset positions of every agent and of the shared portfolio.

    The myopic part is ``(mu_t - r) / ((1 - gamma) sigma**2)``. The hedging
    part is ``-(sigma_theta / sigma) * bracket`` where ``bracket`` is
    ``riccati.hedge_bracket``, the theta-sensitivity of log wealth; this is
    what matching the diffusion of ``wealth_t`` gives. With
    ``convention="printed"`` the hedging part carries an extra
    ``1 / (1 - gamma)`` factor.
    """
    if convention not in ("derived", "printed"):
        raise ValueError("convention must be 'derived' or 'printed'")
    _check_t(state.t, market)
    if state.t >= market.horizon_T:
        raise ValueError("portfolio undefined at t = T")
    tau = market.horizon_T - state.t
    theta = np.asarray(state.theta_t, dtype=float)
    excess = np.asarray(state.mu_t, dtype=float) - market.r
    myo, hed, wts, amts, wlth, brs = [], [], [], [], [], []
    for agent, c in zip(agents, coeffs):
        ra = 1.0 - agent.gamma
        m = excess / (ra * market.sigma ** 2)
        br = riccati.hedge_bracket(c, agent, market, theta, tau)
        scale = market.sigma_theta / market.sigma
        if convention == "printed":
            scale /= ra
        h = -scale * np.asarray(br)
        w = m + h
        x = wealth_t(agent, c, market, state)
        myo.append(m)
        hed.append(h)
        wts.append(w)
        wlth.append(x)
        amts.append(w * x)
        brs.append(br)
    total = sum(amts)
    total_weight = total / sum(wlth)
    return PortfolioBreakdown(tuple(myo), tuple(hed), tuple(wts), tuple(amts), tuple(wlth),
                              tuple(brs), total, total_weight)
