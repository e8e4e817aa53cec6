"""Monte Carlo checks of the closed-form spending values, budgets and wealths.

Everything is estimated under the physical measure from one ensemble of
(theta, Z) paths; risk-neutral expectations are ``E[Z_t * f]`` for
``F_t``-measurable ``f``. Standard errors are taken over independent
sampling units (antithetic pairs by default).
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import policy, riccati
from .allocation import AllocationResult, allocate, allocate_at_y, build_family, coefficients_for
from .core_model import (AgentSpec, MarketParams, PathEnsemble, ProblemSpec, Role,
                         exact_ou_moments, simulate)

Z_LIMIT = 3.0
DETERMINISTIC_TOL = 1e-8
ROW_CHUNK = 8192
REPORT_COLUMNS = ("check_name", "agent", "estimate", "std_error", "reference", "z_score", "pass")


@dataclass(frozen=True)
class EstimateWithError:
    mean: float
    std_error: float
    n_paths: int

    @classmethod
    def from_units(cls, units: np.ndarray, n_paths: int) -> "EstimateWithError":
        units = np.asarray(units, dtype=float)
        n = units.size
        se = float(np.std(units, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(float(np.mean(units)), se, n_paths)

    def z_score(self, reference: float) -> float:
        diff = abs(self.mean - reference)
        if self.std_error > 0:
            return diff / self.std_error
        return 0.0 if diff <= DETERMINISTIC_TOL * max(1.0, abs(reference)) else math.inf


def _chunks(n: int):
    for start in range(0, n, ROW_CHUNK):
        yield slice(start, min(n, start + ROW_CHUNK))


def _trapezoid_weights(n_steps: int, dt: float, upto: Optional[int] = None) -> np.ndarray:
    k = n_steps if upto is None else upto
    w = np.zeros(n_steps + 1)
    if k > 0:
        w[: k + 1] = dt
        w[0] = w[k] = 0.5 * dt
    return w


def _spending_per_path(agent: AgentSpec, market: MarketParams, y: float,
                       ens: PathEnsemble) -> np.ndarray:
    """Per-path discounted spending under the pricing measure, at level ``y``.

    Consumer: ``sum_k w_k Z_k D_k I(y zeta_k)`` (trapezoid). Terminal:
    ``Z_T D_T I(y zeta_T)``.
    """
    p = agent.power
    # Z D I(y zeta) = y**p * Z**(1+p) * exp(t ((rho - r) p - r))
    rate = (agent.rho - market.r) * p - market.r
    out = np.empty(ens.n_paths)
    if agent.role is Role.TERMINAL:
        T = ens.times[-1]
        out[:] = y ** p * ens.Z[:, -1] ** (1.0 + p) * math.exp(rate * T)
        return out
    w = _trapezoid_weights(ens.n_steps, ens.dt) * np.exp(rate * ens.times)
    for sl in _chunks(ens.n_paths):
        out[sl] = (ens.Z[sl] ** (1.0 + p)) @ w
    return out * y ** p


def estimate_h_mc(agent: AgentSpec, market: MarketParams, y: float,
                  ensemble: PathEnsemble) -> EstimateWithError:
    """Monte Carlo estimate of the agent's spending value ``H_i(y)``."""
    if not y > 0:
        raise ValueError("y must be positive")
    vals = _spending_per_path(agent, market, y, ensemble)
    return EstimateWithError.from_units(ensemble.unit_means(vals), ensemble.n_paths)


@dataclass(frozen=True)
class BudgetReport:
    per_agent: tuple
    total: EstimateWithError


def budget_check(spec: ProblemSpec, allocation: AllocationResult,
                 ensemble: PathEnsemble) -> BudgetReport:
    """Estimate each agent's discounted spending at the allocation's ``y``.

    At the optimum each estimate should equal ``x_i`` and their sum ``x``.
    """
    n = ensemble.n_paths
    if allocation.total_wealth_x == 0:
        zero = EstimateWithError(0.0, 0.0, n)
        return BudgetReport(tuple(zero for _ in spec.agents), zero)
    per, total = [], np.zeros(n)
    for agent in spec.agents:
        vals = _spending_per_path(agent, spec.market, allocation.y, ensemble)
        total += vals
        per.append(EstimateWithError.from_units(ensemble.unit_means(vals), n))
    return BudgetReport(tuple(per), EstimateWithError.from_units(ensemble.unit_means(total), n))


@dataclass(frozen=True)
class MartingaleReport:
    times: tuple
    estimates: tuple
    reference: float
    max_deviation: float


def martingale_check(agent: AgentSpec, coeffs: riccati.AffineCoefficients,
                     market: MarketParams, ensemble: PathEnsemble,
                     checkpoints: Iterable[float], y: float) -> MartingaleReport:
    """Tower-property check of the wealth formula.

    At each checkpoint ``t`` estimates ``E[Z_t (D_t X_t + int_0^t D_s c_s ds)]``,
    which must equal ``X_0``. ``max_deviation`` is in standard errors.
    """
    ref = float(policy.wealth_t(agent, coeffs, market,
                                policy.PolicyState.from_market(market, 0.0, market.theta0, y)))
    p = agent.power
    rate = (agent.rho - market.r) * p - market.r
    times, ests, worst = [], [], 0.0
    for t in checkpoints:
        k = ensemble.index_of(t)
        Zt = ensemble.Z[:, k]
        state = policy.PolicyState.from_market(market, t, ensemble.theta[:, k], y, Zt)
        X = policy.wealth_t(agent, coeffs, market, state)
        vals = Zt * math.exp(-market.r * t) * X
        if agent.role is Role.CONSUMER and k > 0:
            w = _trapezoid_weights(ensemble.n_steps, ensemble.dt, upto=k) * np.exp(rate * ensemble.times)
            w = w[: k + 1]
            spent = np.empty(ensemble.n_paths)
            for sl in _chunks(ensemble.n_paths):
                spent[sl] = (ensemble.Z[sl, : k + 1] ** p) @ w
            vals = vals + Zt * spent * y ** p
        est = EstimateWithError.from_units(ensemble.unit_means(vals), ensemble.n_paths)
        times.append(float(t))
        ests.append(est)
        worst = max(worst, est.z_score(ref))
    return MartingaleReport(tuple(times), tuple(ests), ref, worst)


def measure_check(ensemble: PathEnsemble, t: float) -> EstimateWithError:
    """Estimate of ``E[Z_t]``, which must be 1."""
    k = ensemble.index_of(t)
    return EstimateWithError.from_units(ensemble.unit_means(ensemble.Z[:, k]), ensemble.n_paths)


def ou_variance_check(ensemble: PathEnsemble, market: MarketParams) -> tuple:
    """Estimate of ``E[(theta_T - m_T)**2]`` and the exact OU variance ``v_T``."""
    m, v = exact_ou_moments(market, float(ensemble.times[-1]))
    dev = (ensemble.theta[:, -1] - m) ** 2
    return EstimateWithError.from_units(ensemble.unit_means(dev), ensemble.n_paths), v


@dataclass(frozen=True)
class CheckRow:
    check_name: str
    agent: str
    estimate: float
    std_error: float
    reference: float
    z_score: float
    passed: bool


def _row(name: str, agent: str, est: EstimateWithError, ref: float) -> CheckRow:
    z = est.z_score(ref)
    return CheckRow(name, agent, est.mean, est.std_error, ref, z, bool(z <= Z_LIMIT))


def _label(spec: ProblemSpec, i: int) -> str:
    a = spec.agents[i]
    return f"{i + 1}:{a.role.value}"


def run_verification(spec: ProblemSpec, n_paths: int = 100_000, n_steps: int = 252,
                     seed: int = 0, *, checkpoints: Sequence[float] = (0.25, 0.5, 0.75),
                     fixed_y: Optional[float] = None,
                     ensemble: Optional[PathEnsemble] = None) -> list:
    """Run every check on one ensemble and return the report rows.

    ``checkpoints`` are fractions of the horizon.
    """
    m = spec.market
    T = m.horizon_T
    ens = ensemble or simulate(m, n_paths, n_steps, seed)
    family = build_family(spec)
    coeffs = coefficients_for(spec)
    alloc = (allocate_at_y(spec, fixed_y, family=family) if fixed_y is not None
             else allocate(spec, family=family))
    times = [c * T for c in checkpoints]
    rows = []
    for t in times + [T]:
        rows.append(_row(f"measure_EZ@t={t:g}", "-", measure_check(ens, t), 1.0))
    var_est, var_ref = ou_variance_check(ens, m)
    rows.append(_row("ou_variance_thetaT", "-", var_est, var_ref))
    for i, (agent, s) in enumerate(zip(spec.agents, family.s)):
        rows.append(_row("h_value@y=1", _label(spec, i), estimate_h_mc(agent, m, 1.0, ens), s))
    if alloc.total_wealth_x > 0:
        budget = budget_check(spec, alloc, ens)
        for i, est in enumerate(budget.per_agent):
            rows.append(_row("budget_agent", _label(spec, i), est, alloc.x_alloc[i]))
        rows.append(_row("budget_total", "all", budget.total, alloc.total_wealth_x))
        for i, (agent, c) in enumerate(zip(spec.agents, coeffs)):
            rep = martingale_check(agent, c, m, ens, times, alloc.y)
            for t, est in zip(rep.times, rep.estimates):
                rows.append(_row(f"martingale@t={t:g}", _label(spec, i), est, rep.reference))
    return rows


def format_float(v: float) -> str:
    return "%.17g" % v


def write_report(rows: Sequence[CheckRow], target=None) -> str:
    """Write the rows as CSV to ``target`` (path or file object); return the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([r.check_name, r.agent, format_float(r.estimate), format_float(r.std_error),
                    format_float(r.reference), format_float(r.z_score),
                    "true" if r.passed else "false"])
    text = buf.getvalue()
    if target is None:
        return text
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        target.write(text)
    return text
