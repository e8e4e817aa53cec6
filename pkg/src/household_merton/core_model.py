"""Market and agent parameters, validation, and path simulation.

The market has one stock with constant volatility, a constant short rate and
a market price of risk following an Ornstein-Uhlenbeck process driven by the
stock's own Brownian motion with a negative sign::

    d theta_t = -lambda_theta (theta_t - theta_bar) dt - sigma_theta dW_t

The stock drift is ``r + sigma * theta_t``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels

#: Sampling units (paths, or antithetic pairs) drawn from one seeded stream.
SEED_BLOCK = 1024


@dataclass(frozen=True)
class MarketParams:
    """Constant-coefficient market with an OU market price of risk.

    Rates are per year, volatilities per square-root year.
    """

    r: float
    sigma: float
    lambda_theta: float
    sigma_theta: float
    theta_bar: float
    theta0: float
    horizon_T: float

    @classmethod
    def calibrated(cls, *, sigma: float = 0.15, theta0: Optional[float] = None,
                       horizon_T: float = 1.0) -> "MarketParams":
        """Reference calibration for r and the OU parameters.

        The stock volatility and the initial market price of risk are not
        part of that calibration; ``theta0`` defaults to the long-run mean.
        """
        theta_bar = 0.9456
        return cls(r=0.048, sigma=sigma, lambda_theta=0.2712, sigma_theta=0.0655,
                   theta_bar=theta_bar,
                   theta0=theta_bar if theta0 is None else theta0,
                   horizon_T=horizon_T)

    def drift(self, theta):
        """Stock drift ``mu = r + sigma * theta``."""
        return self.r + self.sigma * np.asarray(theta)

    def with_(self, **changes) -> "MarketParams":
        return replace(self, **changes)


class Role(enum.Enum):
    CONSUMER = "consumer"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class AgentSpec:
    """CRRA agent ``U(c) = c**gamma / gamma`` with discount rate ``rho``."""

    gamma: float
    rho: float
    role: Role = Role.CONSUMER

    @property
    def power(self) -> float:
        """Exponent of the inverse marginal utility, ``1 / (gamma - 1)``."""
        return 1.0 / (self.gamma - 1.0)

    @property
    def risk_aversion(self) -> float:
        return 1.0 - self.gamma

    def utility(self, c):
        return np.asarray(c, dtype=float) ** self.gamma / self.gamma

    def inverse_marginal(self, y):
        """``I(y) = y**(1/(gamma-1))``, the inverse of ``U'``."""
        return np.asarray(y, dtype=float) ** self.power


@dataclass(frozen=True)
class ProblemSpec:
    """Agents sharing one portfolio with total initial wealth ``total_wealth_x``.

    ``terminal`` may be ``None`` and ``consumers`` may be empty; both are
    degenerate (single-purpose) problems that ``validate`` reports as warnings.
    """

    market: MarketParams
    consumers: tuple[AgentSpec, ...]
    terminal: Optional[AgentSpec]
    total_wealth_x: float

    def __post_init__(self):
        object.__setattr__(self, "consumers", tuple(self.consumers))

    @property
    def agents(self) -> tuple[AgentSpec, ...]:
        """Consumers in order, then the terminal evaluator."""
        return self.consumers + ((self.terminal,) if self.terminal is not None else ())

    @classmethod
    def calibrated_example(cls, gammas: Sequence[float] = (-9.0, -3.0, -2.0),
                      rhos: Sequence[float] = (0.01, 0.01, 0.01),
                      x: float = 1.0, market: Optional[MarketParams] = None) -> "ProblemSpec":
        """Two consumers and one terminal evaluator (last entries of the lists)."""
        market = market or MarketParams.calibrated()
        *cg, tg = gammas
        *cr, tr = rhos
        consumers = tuple(AgentSpec(g, r) for g, r in zip(cg, cr))
        return cls(market, consumers, AgentSpec(tg, tr, Role.TERMINAL), x)

    def with_(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)


@dataclass(frozen=True)
class Violation:
    field: str
    message: str
    severity: str = "error"

    def __str__(self):
        return f"{self.severity}: {self.field}: {self.message}"


def validate(spec: ProblemSpec) -> list[Violation]:
    """Check every parameter invariant; an empty list means valid.

    Agents whose Riccati discriminant is not positive get a warning: the
    coefficient ``A1`` may blow up inside the horizon and the solver will
    stop with ``SingularityDetected`` if it does.
    """
    from .riccati import delta, reversion_speed

    out: list[Violation] = []
    m = spec.market
    for name in ("r", "sigma", "lambda_theta", "sigma_theta", "theta_bar", "theta0", "horizon_T"):
        if not math.isfinite(getattr(m, name)):
            out.append(Violation(name, f"{name} must be finite"))
    if not m.lambda_theta > 0:
        out.append(Violation("lambda_theta", "lambda_theta must be positive"))
    if not m.sigma > 0:
        out.append(Violation("sigma", "sigma must be positive"))
    if not m.horizon_T > 0:
        out.append(Violation("horizon_T", "horizon_T must be positive"))
    if not m.sigma_theta >= 0:
        out.append(Violation("sigma_theta", "sigma_theta must be nonnegative"))
    if not (math.isfinite(spec.total_wealth_x) and spec.total_wealth_x >= 0):
        out.append(Violation("total_wealth_x", "total wealth must be finite and nonnegative"))

    if not spec.consumers:
        out.append(Violation("consumers", "no consuming agent; CSP is identically 0",
                             "warning"))
    if spec.terminal is None:
        out.append(Violation("terminal", "no terminal-wealth evaluator; CSP is identically 1",
                             "warning"))
    for i, agent in enumerate(spec.agents, start=1):
        tag = f"agent[{i}]"
        expected = Role.TERMINAL if agent is spec.terminal else Role.CONSUMER
        if agent.role is not expected:
            out.append(Violation(f"{tag}.role", f"role must be {expected.value}"))
        if not (math.isfinite(agent.gamma) and math.isfinite(agent.rho)):
            out.append(Violation(tag, "gamma and rho must be finite"))
            continue
        if agent.gamma == 0:
            out.append(Violation(f"{tag}.gamma", "gamma must be nonzero"))
            continue
        if not agent.gamma < 1:
            out.append(Violation(f"{tag}.gamma", "gamma must be below 1"))
            continue
        if m.lambda_theta > 0 and m.sigma_theta >= 0:
            d = delta(agent.gamma, m, kappa=reversion_speed(agent.gamma, m))
            if d <= 0:
                out.append(Violation(
                    f"{tag}.gamma",
                    f"Riccati discriminant {d:.6g} <= 0: closed-form A1 may blow up "
                    "inside [0, T]; numerical solution with singularity detection is used",
                    "warning"))
    return out


def errors(violations: Sequence[Violation]) -> list[Violation]:
    return [v for v in violations if v.severity == "error"]


@dataclass(frozen=True)
class PathEnsemble:
    """Joint paths of (theta, Z) on a uniform grid, under the physical measure.

    With ``antithetic`` paths ``2j`` and ``2j+1`` use opposite shocks and form
    one independent sampling unit.
    """

    n_paths: int
    n_steps: int
    dt: float
    times: np.ndarray
    theta: np.ndarray
    Z: np.ndarray
    seed: int
    antithetic: bool = True

    def __post_init__(self):
        for arr in (self.times, self.theta, self.Z):
            arr.setflags(write=False)

    def unit_means(self, values: np.ndarray) -> np.ndarray:
        """Collapse per-path values to independent sampling units."""
        values = np.asarray(values, dtype=float)
        if self.antithetic:
            return 0.5 * (values[0::2] + values[1::2])
        return values

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if not (0 <= k <= self.n_steps) or abs(k * self.dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"t={t} is not on the ensemble grid")
        return k


def simulate(market: MarketParams, n_paths: int, n_steps: int, seed: int = 0,
             *, antithetic: bool = True) -> PathEnsemble:
    """Simulate ``n_paths`` joint paths of (theta, Z) over ``[0, T]``.

    theta uses the exact OU transition; Z accumulates
    ``exp(-theta_k dW_k - theta_k**2 dt / 2)`` with the same Gaussian shock
    that drives theta (``dW_k = sqrt(dt) xi_k``, theta gets ``-sigma_theta``
    times the exactly scaled ``xi_k``).

    Normals for sampling unit ``u`` come from the stream seeded with
    ``(seed, u // SEED_BLOCK)``, so any path depends only on
    ``(seed, path index, n_steps)``.
    """
    if n_paths < 1 or n_steps < 1:
        raise ValueError("n_paths and n_steps must be at least 1")
    if antithetic and n_paths % 2:
        raise ValueError("antithetic sampling needs an even number of paths")
    vals = [market.r, market.lambda_theta, market.sigma_theta, market.theta_bar,
            market.theta0, market.horizon_T]
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("market parameters must be finite")
    if market.lambda_theta <= 0 or market.horizon_T <= 0 or market.sigma_theta < 0:
        raise ValueError("invalid OU parameters")

    T = market.horizon_T
    dt = T / n_steps
    lam = market.lambda_theta
    decay = math.exp(-lam * dt)
    ou_scale = market.sigma_theta * math.sqrt(-math.expm1(-2.0 * lam * dt) / (2.0 * lam))
    units = n_paths // 2 if antithetic else n_paths
    reps = 2 if antithetic else 1

    theta = np.empty((n_paths, n_steps + 1))
    Z = np.empty((n_paths, n_steps + 1))
    for block, start in enumerate(range(0, units, SEED_BLOCK)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
        xi = rng.standard_normal((SEED_BLOCK, n_steps))
        stop = min(units, start + SEED_BLOCK)
        xi = np.ascontiguousarray(xi[: stop - start])
        th, z = kernels.simulate_paths(xi, market.theta0, market.theta_bar, decay,
                                       ou_scale, math.sqrt(dt), dt, antithetic)
        theta[start * reps: stop * reps] = th
        Z[start * reps: stop * reps] = z

    times = np.linspace(0.0, T, n_steps + 1)
    return PathEnsemble(n_paths=n_paths, n_steps=n_steps, dt=dt, times=times,
                        theta=theta, Z=Z, seed=seed, antithetic=antithetic)


def exact_ou_moments(market: MarketParams, t: float) -> tuple[float, float]:
    """Mean and variance of theta_t under the physical measure."""
    lam = market.lambda_theta
    mean = market.theta_bar + (market.theta0 - market.theta_bar) * math.exp(-lam * t)
    var = market.sigma_theta ** 2 * (-math.expm1(-2.0 * lam * t)) / (2.0 * lam)
    return mean, var
