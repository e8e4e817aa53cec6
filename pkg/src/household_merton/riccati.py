"""Exponential-affine coefficients of the CRRA state-price moments.

For an agent with CRRA exponent ``gamma`` let ``q = gamma / (gamma - 1)``.
Under the physical measure::

    E[(Z_{t+s} / Z_t)**q | theta_t = th] = exp(A1(s) th**2 / 2 + A2(s) th + A3(s))

where (A1, A2, A3) solve, from zero at ``s = 0``::

    A1' = c - 2 kappa A1 + sigma_theta**2 A1**2,      c = gamma / (1 - gamma)**2
    A2' = -kappa A2 + lambda_theta theta_bar A1 + sigma_theta**2 A1 A2
    A3' = lambda_theta theta_bar A2 + sigma_theta**2 / 2 (A1 + A2**2)

``kappa = lambda_theta + sigma_theta * gamma / (1 - gamma)`` carries the
covariation between theta and the stock shock (both use the same Brownian
motion). With ``hedge_drift=False`` the solver uses ``kappa = lambda_theta``
instead, which drops that term.

Agent ``i``'s discounted spending density at horizon ``tau`` is the affine
exponential times ``exp(tau * (r gamma - rho) / (1 - gamma))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .core_model import AgentSpec, MarketParams, Role

DEFAULT_GRID = 2048
DEFAULT_BLOWUP = 1e6


class SingularityDetected(ArithmeticError):
    """``A1`` leaves every finite bound before the requested span."""

    def __init__(self, message: str, blowup_time: float, partial=None):
        super().__init__(message)
        self.blowup_time = blowup_time
        self.partial = partial


@dataclass(frozen=True)
class AffineCoefficients:
    agent_gamma: float
    grid: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    delta: float
    kappa: float
    source: str = "numerical"

    def __post_init__(self):
        for arr in (self.grid, self.A1, self.A2, self.A3):
            arr.setflags(write=False)

    @property
    def span(self) -> float:
        return float(self.grid[-1])

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def at(self, s):
        """Linearly interpolated (A1, A2, A3) at offsets ``s``."""
        s = np.asarray(s, dtype=float)
        if np.any(s < -1e-12) or np.any(s > self.span * (1 + 1e-12)):
            raise ValueError(f"offset outside coefficient span [0, {self.span}]")
        return (np.interp(s, self.grid, self.A1),
                np.interp(s, self.grid, self.A2),
                np.interp(s, self.grid, self.A3))


def source_term(gamma: float) -> float:
    return gamma / (1.0 - gamma) ** 2


def reversion_speed(gamma: float, market: MarketParams) -> float:
    """Mean-reversion speed of theta under the q-power tilt of Z."""
    return market.lambda_theta + market.sigma_theta * gamma / (1.0 - gamma)


def delta(gamma: float, market: MarketParams, kappa: Optional[float] = None) -> float:
    """Discriminant ``kappa**2 - gamma sigma_theta**2 / (1 - gamma)**2``.

    ``kappa`` defaults to ``lambda_theta``; pass ``reversion_speed(gamma,
    market)`` for the discriminant of the system ``solve_system`` integrates.
    """
    k = market.lambda_theta if kappa is None else kappa
    return k * k - gamma * market.sigma_theta ** 2 / (1.0 - gamma) ** 2


def gamma_limit(market: MarketParams) -> float:
    """Largest gamma in (0, 1] with ``delta(gamma) > 0`` below it.

    ``2 / (2 + b + sqrt((2 + b)**2 - 4))`` with ``b = (sigma_theta / lambda_theta)**2``;
    equals 1 when ``sigma_theta = 0``.
    """
    b = (market.sigma_theta / market.lambda_theta) ** 2
    if b == 0.0:
        return 1.0
    return 2.0 / (2.0 + b + math.sqrt((2.0 + b) ** 2 - 4.0))


def solve_system(gamma: float, market: MarketParams, span_S: Optional[float] = None,
                 n_grid: int = DEFAULT_GRID, *, blowup_bound: float = DEFAULT_BLOWUP,
                 hedge_drift: bool = True) -> AffineCoefficients:
    """Integrate the affine system with classical RK4 on ``n_grid`` uniform steps.

    Raises ``SingularityDetected`` if ``|A1|`` passes ``blowup_bound`` before
    ``span_S``; the exception carries the coefficients up to the last finite
    node in ``partial``.
    """
    S = market.horizon_T if span_S is None else float(span_S)
    if not S > 0:
        raise ValueError("span_S must be positive")
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    kappa = reversion_speed(gamma, market) if hedge_drift else market.lambda_theta
    c = source_term(gamma)
    h = S / n_grid
    A, last = kernels.integrate_affine(c, kappa, market.lambda_theta * market.theta_bar,
                                       market.sigma_theta ** 2, h, n_grid, blowup_bound)
    grid = np.linspace(0.0, S, n_grid + 1)
    d = delta(gamma, market, kappa)
    if last < n_grid:
        partial = AffineCoefficients(gamma, grid[: last + 1].copy(), A[: last + 1, 0].copy(),
                                     A[: last + 1, 1].copy(), A[: last + 1, 2].copy(), d, kappa)
        t_blow = (last + 1) * h
        raise SingularityDetected(
            f"A1 exceeded {blowup_bound:g} near s={t_blow:.6g} (gamma={gamma}, delta={d:.6g})",
            t_blow, partial)
    return AffineCoefficients(gamma, grid, A[:, 0].copy(), A[:, 1].copy(), A[:, 2].copy(),
                              d, kappa)


def riccati_a1(c: float, kappa: float, sig2: float, s):
    """Closed-form solution of ``A' = c - 2 kappa A + sig2 A**2``, ``A(0) = 0``.

    With ``D = kappa**2 - sig2 c``::

        D > 0:  c (1 - e) / (kappa + sqrt(D) - (kappa - sqrt(D)) e),  e = exp(-2 sqrt(D) s)
        D = 0:  c s / (1 + kappa s)
        D < 0:  (sqrt(-D) tan(sqrt(-D) s + arctan(-kappa / sqrt(-D))) + kappa) / sig2

    Raises ``SingularityDetected`` if some ``s`` lies at or past the pole.
    """
    s = np.asarray(s, dtype=float)
    D = kappa * kappa - sig2 * c
    smax = float(np.max(s)) if s.size else 0.0
    if D > 0:
        rd = math.sqrt(D)
        em1 = np.expm1(-2.0 * rd * s)
        den = 2.0 * rd - (kappa - rd) * em1
        if kappa + rd < 0:
            pole = -math.log((kappa + rd) / (kappa - rd)) / (2.0 * rd)
            if smax >= pole:
                raise SingularityDetected(f"A1 pole at s={pole:.6g}", pole)
        return -c * em1 / den
    if D == 0:
        if kappa < 0 and smax >= -1.0 / kappa:
            raise SingularityDetected(f"A1 pole at s={-1.0 / kappa:.6g}", -1.0 / kappa)
        return c * s / (1.0 + kappa * s)
    rd = math.sqrt(-D)
    phase = math.atan(-kappa / rd)
    pole = (0.5 * math.pi - phase) / rd
    if smax >= pole:
        raise SingularityDetected(f"A1 pole at s={pole:.6g}", pole)
    return (rd * np.tan(rd * s + phase) + kappa) / sig2


def a1_closed(gamma: float, market: MarketParams, s, *, hedge_drift: bool = True):
    """Closed-form ``A1`` for one agent; cross-check for ``solve_system``."""
    kappa = reversion_speed(gamma, market) if hedge_drift else market.lambda_theta
    return riccati_a1(source_term(gamma), kappa, market.sigma_theta ** 2, s)


def a1_printed(gamma: float, market: MarketParams, s):
    """The three-branch expression for ``A1`` as it is usually printed.

    Kept only to document how it departs from the ODE solution: the
    ``Delta > 0`` branch has an extra ``1 / sigma_theta`` prefactor and
    ``sigma_theta**2`` in the exponent, and the ``Delta < 0`` branch has the
    wrong sign inside the tangent. Raises ``SingularityDetected`` past the
    tangent pole of that branch.
    """
    s = np.asarray(s, dtype=float)
    lam, sth = market.lambda_theta, market.sigma_theta
    D = delta(gamma, market)
    if D > 0:
        rd = math.sqrt(D)
        e = np.exp(-2.0 * rd * sth ** 2 * s)
        return gamma / ((1 - gamma) ** 2 * sth) * (1 - e) / (lam + rd - (lam - rd) * e)
    if D == 0:
        return lam ** 2 * s / (sth ** 2 * lam * s + sth ** 2)
    rd = math.sqrt(-D)
    phase = math.atan(-lam / rd)
    pole = (phase + 0.5 * math.pi) / rd
    if s.size and float(np.max(s)) >= pole:
        raise SingularityDetected(f"printed A1 pole at s={pole:.6g}", pole)
    return (rd * np.tan(-rd * s + phase) + lam) / sth ** 2


def residual(coeffs: AffineCoefficients, gamma: float, market: MarketParams, *,
             pointwise: bool = False):
    """Largest ODE residual over interior nodes, derivatives by centred differences.

    With ``pointwise`` returns the per-node max over the three equations
    (second-order one-sided differences at the two ends).
    """
    if len(coeffs.grid) < 3:
        raise ValueError("residual needs at least 3 grid points")
    h = coeffs.step
    c = source_term(gamma)
    k = coeffs.kappa
    m = market.lambda_theta * market.theta_bar
    sig2 = market.sigma_theta ** 2
    A1, A2, A3 = coeffs.A1, coeffs.A2, coeffs.A3
    f1 = c - 2 * k * A1 + sig2 * A1 * A1
    f2 = -k * A2 + m * A1 + sig2 * A1 * A2
    f3 = m * A2 + 0.5 * sig2 * (A1 + A2 * A2)
    res = np.maximum.reduce([np.abs(np.gradient(A, h, edge_order=2) - f)
                             for A, f in ((A1, f1), (A2, f2), (A3, f3))])
    if pointwise:
        return res
    return float(np.max(res[1:-1]))


def discount_rate(agent: AgentSpec, market: MarketParams) -> float:
    """Deterministic exponential rate of discounted CRRA spending, per year."""
    g = agent.gamma
    return (market.r * g - agent.rho) / (1.0 - g)


def h_integrand(coeffs: AffineCoefficients, agent: AgentSpec, market: MarketParams,
                theta, tau):
    """Discounted unit-level spending density H(theta, tau) > 0."""
    theta = np.asarray(theta, dtype=float)
    a1, a2, a3 = coeffs.at(tau)
    tau = np.asarray(tau, dtype=float)
    return np.exp(0.5 * a1 * theta ** 2 + a2 * theta + a3 + discount_rate(agent, market) * tau)


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights for ``n`` uniform intervals (3/8 rule on an odd tail)."""
    w = np.zeros(n + 1)
    if n == 0:
        return w
    if n == 1:
        w[:] = 0.5 * h
        return w
    even = n if n % 2 == 0 else n - 3
    if even:
        w[0:even + 1:2] = 2.0
        w[1:even:2] = 4.0
        w[0] = w[even] = 1.0
        w[: even + 1] *= h / 3.0
    if n % 2:
        w[even: even + 4] += 3.0 * h / 8.0 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


def quadrature_nodes(coeffs: AffineCoefficients, horizon: float):
    """Nodes, weights and coefficients for integrating over ``[0, horizon]``.

    Uses the coefficient grid nodes below ``horizon`` and one extra Simpson
    panel, with interpolated coefficients, for an off-grid remainder.
    """
    if horizon < -1e-12 or horizon > coeffs.span * (1 + 1e-12):
        raise ValueError(f"horizon {horizon} outside coefficient span [0, {coeffs.span}]")
    horizon = min(max(horizon, 0.0), coeffs.span)
    h = coeffs.step
    n_full = int(math.floor(horizon / h + 1e-9))
    n_full = min(n_full, len(coeffs.grid) - 1)
    rem = horizon - n_full * h
    u = coeffs.grid[: n_full + 1]
    w = simpson_weights(n_full, h)
    a1, a2, a3 = coeffs.A1[: n_full + 1], coeffs.A2[: n_full + 1], coeffs.A3[: n_full + 1]
    if rem > 1e-12 * max(h, horizon):
        extra = np.array([n_full * h + 0.5 * rem, horizon])
        e1, e2, e3 = coeffs.at(extra)
        u = np.concatenate([u, extra])
        w = np.concatenate([w, [4.0 * rem / 6.0, rem / 6.0]])
        w[n_full] += rem / 6.0
        a1 = np.concatenate([a1, e1])
        a2 = np.concatenate([a2, e2])
        a3 = np.concatenate([a3, e3])
    return u, w, np.ascontiguousarray(a1), np.ascontiguousarray(a2), np.ascontiguousarray(a3)


def _moments(coeffs, agent, market, theta, horizon):
    u, w, a1, a2, a3 = quadrature_nodes(coeffs, horizon)
    b = np.ascontiguousarray(a3 + discount_rate(agent, market) * u)
    theta = np.atleast_1d(np.asarray(theta, dtype=float)).ravel()
    return kernels.weighted_exp_moments(theta, a1, a2, b, np.ascontiguousarray(w))


def annuity(coeffs: AffineCoefficients, agent: AgentSpec, market: MarketParams,
            theta, horizon: float):
    """``int_0^horizon H(theta, u) du`` for each entry of ``theta``."""
    shape = np.shape(theta)
    s0, _, _ = _moments(coeffs, agent, market, theta, horizon)
    return s0.reshape(shape) if shape else float(s0[0])


def hedge_bracket(coeffs: AffineCoefficients, agent: AgentSpec, market: MarketParams,
                  theta, horizon: float):
    """Sensitivity ``d log(spending value) / d theta`` at remaining ``horizon``.

    Consumers: ``int p(tau) (A1(tau) theta + A2(tau)) dtau`` over ``[0, horizon]``
    with the density ``p = H / annuity``. Terminal agent: ``A1(horizon) theta +
    A2(horizon)``.
    """
    theta_arr = np.asarray(theta, dtype=float)
    if agent.role is Role.TERMINAL:
        a1, a2, _ = coeffs.at(horizon)
        return a1 * theta_arr + a2
    shape = theta_arr.shape
    s0, s1, s2 = _moments(coeffs, agent, market, theta_arr, horizon)
    th = np.atleast_1d(theta_arr).ravel()
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(s0 > 0, (s1 * th + s2) / np.where(s0 > 0, s0, 1.0), 0.0)
    return out.reshape(shape) if shape else float(out[0])


def s_value(coeffs: AffineCoefficients, agent: AgentSpec, market: MarketParams) -> float:
    """Unit-level spending value: the agent's initial wealth at Lagrange level 1.

    Consumers integrate ``H(theta0, .)`` over ``[0, T]``; the terminal agent
    takes ``H(theta0, T)``.
    """
    T = market.horizon_T
    if coeffs.span < T * (1 - 1e-12):
        raise ValueError("coefficient span shorter than the horizon")
    if agent.role is Role.TERMINAL:
        return float(h_integrand(coeffs, agent, market, market.theta0, T))
    return float(annuity(coeffs, agent, market, market.theta0, T))


def printed_terminal_s(agent: AgentSpec, market: MarketParams) -> float:
    """Terminal-agent factor ``exp(r T - (r + rho) T / (1 - gamma))`` as usually printed.

    It has no dependence on theta0 and a different deterministic rate; Monte
    Carlo rejects it (see ``mc_verify``). Only used for comparisons.
    """
    T = market.horizon_T
    return math.exp(market.r * T - (market.r + agent.rho) * T / (1.0 - agent.gamma))


def density_p(coeffs: AffineCoefficients, agent: AgentSpec, market: MarketParams,
              theta_t, t: float, tau):
    """Density of the remaining spending over ``tau in [0, T - t]``."""
    T = market.horizon_T
    if not 0 <= t < T:
        raise ValueError("t must lie in [0, T)")
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0) or np.any(tau_arr > T - t + 1e-12):
        raise ValueError("tau must lie in [0, T - t]")
    return h_integrand(coeffs, agent, market, theta_t, tau_arr) / annuity(
        coeffs, agent, market, theta_t, T - t)
