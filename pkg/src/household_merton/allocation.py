"""Splitting the shared initial wealth across agents.

In the CRRA model each agent's spending value at Lagrange level ``y`` is
``H_i(y) = y**(1/(gamma_i - 1)) * s_i``. The aggregate ``H = sum_i H_i`` is
strictly decreasing, so ``x`` fixes a unique ``y = H^{-1}(x)`` and agent
``i`` receives ``x_i = H_i(y)``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import riccati
from .core_model import AgentSpec, MarketParams, ProblemSpec, Role, errors, validate

BRACKET_LIMIT = 1e300
BISECT_RTOL = 1e-12
NEWTON_STEPS = 5


class InvalidSpec(ValueError):
    """The problem has error-level violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class NonFinite(ArithmeticError):
    """Bracket expansion for the inversion left the representable range."""


@dataclass(frozen=True)
class HFamily:
    """Per-agent ``(s_i, gamma_i)`` with the aggregate spending function.

    Attributes
    ----------
    gammas, s : tuple of float
        CRRA exponents and unit-level spending values, agent order.
    roles : tuple of Role
    """

    gammas: tuple
    s: tuple
    roles: tuple

    def __post_init__(self):
        if not (len(self.gammas) == len(self.s) == len(self.roles)) or not self.gammas:
            raise ValueError("HFamily needs matching, nonempty gammas, s and roles")
        if any(not (si > 0 and math.isfinite(si)) for si in self.s):
            raise ValueError("s values must be positive and finite")

    @classmethod
    def from_values(cls, gammas: Sequence[float], s: Sequence[float],
                    roles: Optional[Sequence[Role]] = None) -> "HFamily":
        if roles is None:
            roles = (Role.CONSUMER,) * len(gammas)
        return cls(tuple(float(g) for g in gammas), tuple(float(v) for v in s), tuple(roles))

    @property
    def powers(self) -> np.ndarray:
        return 1.0 / (np.asarray(self.gammas) - 1.0)

    @property
    def consumer_mask(self) -> np.ndarray:
        return np.array([r is Role.CONSUMER for r in self.roles])

    def h_i(self, y: float) -> np.ndarray:
        """Per-agent ``H_i(y)``."""
        _check_y(y)
        with np.errstate(over="ignore"):
            return np.asarray(self.s) * np.power(float(y), self.powers)

    def h(self, y: float) -> float:
        return float(np.sum(self.h_i(y)))

    def dh(self, y: float) -> float:
        """Analytic derivative ``H'(y)``."""
        _check_y(y)
        k = self.powers
        with np.errstate(over="ignore"):
            return float(np.sum(np.asarray(self.s) * k * np.power(float(y), k - 1.0)))


def _check_y(y):
    if not (y > 0):
        raise ValueError(f"y must be positive, got {y}")


@dataclass(frozen=True)
class AllocationResult:
    """Outcome of one wealth split; agent order is consumers, then terminal.

    ``y`` is ``inf`` and ``csp`` is ``nan`` when ``x = 0``: every agent gets
    nothing and no finite Lagrange level attains that.
    """

    y: float
    x_alloc: tuple
    csp: float
    s_values: tuple
    residual: float
    total_wealth_x: float

    @property
    def fractions(self) -> tuple:
        x = self.total_wealth_x
        return tuple(v / x for v in self.x_alloc) if x > 0 else tuple(math.nan for _ in self.x_alloc)


@functools.lru_cache(maxsize=256)
def _coefficients(gamma: float, market_key: MarketParams, n_grid: int):
    return riccati.solve_system(gamma, market_key, n_grid=n_grid)


def coefficients_for(spec: ProblemSpec, n_grid: int = riccati.DEFAULT_GRID) -> tuple:
    """Affine coefficients over ``[0, T]`` for every agent (cached by gamma and market).

    ``theta0`` does not enter the ODEs, so it is dropped from the cache key.
    """
    key = spec.market.with_(theta0=0.0)
    return tuple(_coefficients(a.gamma, key, n_grid) for a in spec.agents)


def build_family(spec: ProblemSpec, n_grid: int = riccati.DEFAULT_GRID) -> HFamily:
    """Compute every ``s_i`` and wrap them in an ``HFamily``."""
    bad = errors(validate(spec))
    if bad:
        raise InvalidSpec(bad)
    coeffs = coefficients_for(spec, n_grid)
    s = [riccati.s_value(c, a, spec.market) for c, a in zip(coeffs, spec.agents)]
    return HFamily(tuple(a.gamma for a in spec.agents), tuple(s),
                   tuple(a.role for a in spec.agents))


def h_of_y(family: HFamily, y: float) -> float:
    return family.h(y)


def invert_y(family: HFamily, x: float) -> float:
    """Solve ``H(y) = x`` for ``y > 0``.

    Doubles or halves from ``y = 1`` to bracket the root, bisects
    geometrically to relative width 1e-12, then polishes with up to five
    Newton steps kept inside the bracket.
    """
    if not (x > 0 and math.isfinite(x)):
        raise ValueError(f"x must be positive and finite, got {x}")
    lo = hi = 1.0
    h1 = family.h(1.0)
    if h1 == x:
        return 1.0
    if h1 > x:
        while family.h(hi) >= x:
            lo = hi
            hi *= 2.0
            if hi > BRACKET_LIMIT:
                raise NonFinite(f"no bracket for x={x}: H stays above x up to y=1e300")
    else:
        while family.h(lo) <= x:
            hi = lo
            lo *= 0.5
            if lo < 1.0 / BRACKET_LIMIT:
                raise NonFinite(f"no bracket for x={x}: H stays below x down to y=1e-300")
    while (hi - lo) > BISECT_RTOL * hi:
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        if family.h(mid) > x:
            lo = mid
        else:
            hi = mid
    y = math.sqrt(lo * hi)
    tol = 1e-10 * max(1.0, x)
    for _ in range(NEWTON_STEPS):
        f = family.h(y) - x
        if abs(f) <= 1e-3 * tol:
            break
        step = f / family.dh(y)
        y_new = y - step
        if not lo <= y_new <= hi:
            break
        y = y_new
    return y


def _result(family: HFamily, y: float, x: float) -> AllocationResult:
    xs = family.h_i(y)
    total = float(np.sum(xs))
    cons = float(np.sum(xs[family.consumer_mask]))
    return AllocationResult(y=y, x_alloc=tuple(float(v) for v in xs), csp=cons / total,
                            s_values=family.s, residual=abs(total - x), total_wealth_x=x)


def allocate(spec: ProblemSpec, *, family: Optional[HFamily] = None,
             n_grid: int = riccati.DEFAULT_GRID) -> AllocationResult:
    """Split ``spec.total_wealth_x`` so every agent's marginal value equals ``y``."""
    family = family or build_family(spec, n_grid)
    x = spec.total_wealth_x
    if x == 0:
        n = len(family.s)
        return AllocationResult(y=math.inf, x_alloc=(0.0,) * n, csp=math.nan,
                                s_values=family.s, residual=0.0, total_wealth_x=0.0)
    return _result(family, invert_y(family, x), x)


def allocate_at_y(spec: ProblemSpec, y: float, *, family: Optional[HFamily] = None,
                  n_grid: int = riccati.DEFAULT_GRID) -> AllocationResult:
    """Allocation at a fixed Lagrange level; total wealth becomes ``H(y)``."""
    family = family or build_family(spec, n_grid)
    return _result(family, float(y), family.h(y))


def csp(spec: ProblemSpec, *, fixed_y: Optional[float] = None) -> float:
    """Consumption satisfaction proportion: consumers' share of total wealth."""
    if not spec.consumers:
        return 0.0
    if spec.terminal is None:
        return 1.0
    res = allocate_at_y(spec, fixed_y) if fixed_y is not None else allocate(spec)
    return res.csp


def relative_risk_aversion(family: HFamily, x: float) -> float:
    """Relative risk aversion ``-H(y) / (y H'(y))`` at ``y = H^{-1}(x)``."""
    y = invert_y(family, x)
    terms = family.h_i(y)
    return float(np.sum(terms) / np.sum(terms / (1.0 - np.asarray(family.gammas))))


def rra_limit_candidates(family: HFamily) -> dict:
    """Candidate analytic limits of the relative risk aversion.

    ``large_x_dominant`` and ``small_x_dominant`` are ``1 - gamma`` of the
    agent whose power of ``y`` dominates as ``y -> 0`` and ``y -> inf``.
    ``stated_large_x`` is ``(1 - gamma_1) H_last(1) / H_1(1)`` with agents
    sorted by gamma.
    """
    g = np.asarray(family.gammas)
    s = np.asarray(family.s)
    order = np.argsort(g)
    return {
        "large_x_dominant": float(1.0 - g.max()),
        "small_x_dominant": float(1.0 - g.min()),
        "stated_large_x": float((1.0 - g[order[0]]) * s[order[-1]] / s[order[0]]),
    }


def csp_theta_sensitivity(spec: ProblemSpec, theta_grid: Iterable[float], *,
                          fixed_y: Optional[float] = None,
                          n_grid: int = riccati.DEFAULT_GRID) -> list:
    """CSP at each initial market price of risk in ``theta_grid``.

    Returns a list of ``(theta0, csp)``; uses ``fixed_y`` when given,
    otherwise ``spec.total_wealth_x``.
    """
    rows = []
    for th in theta_grid:
        sub = spec.with_(market=spec.market.with_(theta0=float(th)))
        fam = build_family(sub, n_grid)
        res = (allocate_at_y(sub, fixed_y, family=fam) if fixed_y is not None
               else allocate(sub, family=fam))
        rows.append((float(th), res.csp))
    return rows


def terminal_split(u4: AgentSpec, u5: AgentSpec, x_T: float,
                   discounts: Sequence[float]) -> tuple:
    """Best split ``eps`` of terminal wealth between two CRRA evaluators.

    Maximises ``B4 U4(eps x) + B5 U5((1 - eps) x)`` over ``eps in [0, 1]``
    with ``(B4, B5) = discounts``. The first-order condition
    ``B4 (eps x)**(g4 - 1) = B5 ((1 - eps) x)**(g5 - 1)`` is solved in
    logit coordinates, where its log form is strictly decreasing.

    Returns
    -------
    eps : float
    value : float
        The attained supremum.
    """
    if not x_T > 0:
        raise ValueError("x_T must be positive")
    b4, b5 = (float(d) for d in discounts)
    if b4 < 0 or b5 < 0 or b4 + b5 == 0:
        raise ValueError("discounts must be nonnegative and not both zero")
    if b4 == 0:
        return 0.0, b5 * float(u5.utility(x_T))
    if b5 == 0:
        return 1.0, b4 * float(u4.utility(x_T))
    g4, g5 = u4.gamma, u5.gamma
    lx = math.log(x_T)
    lb = math.log(b4) - math.log(b5)

    def foc(u):
        log_eps = -math.log1p(math.exp(-u)) if u > -700 else u
        log_rest = -math.log1p(math.exp(u)) if u < 700 else -u
        return lb + (g4 - 1.0) * (log_eps + lx) - (g5 - 1.0) * (log_rest + lx)

    if foc(0.0) == 0.0:
        u_star = 0.0
    else:
        lo, hi = -1.0, 1.0
        while foc(lo) <= 0:
            lo *= 2.0
        while foc(hi) >= 0:
            hi *= 2.0
        u_star = brentq(foc, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    eps = 1.0 / (1.0 + math.exp(-u_star))
    value = b4 * float(u4.utility(eps * x_T)) + b5 * float(u5.utility((1.0 - eps) * x_T))
    return eps, value
