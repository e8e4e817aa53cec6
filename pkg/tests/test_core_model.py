import math

import numpy as np
import pytest

from household_merton.core_model import (AgentSpec, MarketParams, ProblemSpec, Role, SEED_BLOCK,
                                         errors, exact_ou_moments, simulate, validate)


def messages(spec):
    return [v.message for v in validate(spec)]


def test_calibrated_set_is_valid(base_spec):
    assert validate(base_spec) == []


def test_zero_gamma_rejected(base_spec):
    spec = base_spec.with_(consumers=(AgentSpec(0.0, 0.01), AgentSpec(-3.0, 0.01)))
    assert "gamma must be nonzero" in messages(spec)


def test_zero_lambda_rejected(base_spec):
    spec = base_spec.with_(market=base_spec.market.with_(lambda_theta=0.0))
    assert "lambda_theta must be positive" in messages(spec)


@pytest.mark.parametrize("field,value", [("sigma", 0.0), ("horizon_T", -1.0), ("sigma_theta", -0.1),
                                         ("r", math.nan)])
def test_market_invariants(base_spec, field, value):
    spec = base_spec.with_(market=base_spec.market.with_(**{field: value}))
    assert errors(validate(spec))


def test_gamma_at_or_above_one_rejected(base_spec):
    spec = base_spec.with_(terminal=AgentSpec(1.0, 0.01, Role.TERMINAL))
    assert any("below 1" in m for m in messages(spec))


def test_wrong_role_reported(base_spec):
    spec = base_spec.with_(terminal=AgentSpec(-2.0, 0.01, Role.CONSUMER))
    assert any("role must be terminal" in m for m in messages(spec))


def test_negative_wealth_rejected(base_spec):
    assert errors(validate(base_spec.with_(total_wealth_x=-1.0)))


def test_blowup_risk_is_a_warning():
    m = MarketParams(0.048, 0.15, 0.2, 1.0, 0.9, 0.9, 2.0)
    spec = ProblemSpec(m, (AgentSpec(0.5, 0.01),), AgentSpec(-2.0, 0.01, Role.TERMINAL), 1.0)
    vs = validate(spec)
    assert vs and all(v.severity == "warning" for v in vs)
    assert "discriminant" in vs[0].message


def test_degenerate_agent_sets_warn(market):
    spec = ProblemSpec(market, (), AgentSpec(-2.0, 0.01, Role.TERMINAL), 1.0)
    assert [v.severity for v in validate(spec)] == ["warning"]
    spec = ProblemSpec(market, (AgentSpec(-2.0, 0.01),), None, 1.0)
    assert [v.severity for v in validate(spec)] == ["warning"]


def test_agent_helpers():
    a = AgentSpec(-1.0, 0.0)
    assert a.risk_aversion == 2.0
    assert a.inverse_marginal(4.0) == pytest.approx(0.5)
    assert a.utility(2.0) == pytest.approx(-0.5)


def test_paths_structure(market):
    ens = simulate(market, 64, 20, seed=3)
    assert ens.theta.shape == ens.Z.shape == (64, 21)
    assert np.all(ens.Z[:, 0] == 1.0)
    assert np.all(ens.Z > 0)
    assert np.all(ens.theta[:, 0] == market.theta0)
    assert ens.times[-1] == pytest.approx(market.horizon_T)
    with pytest.raises(ValueError):
        ens.Z[0, 0] = 2.0


def test_degenerate_ou(market):
    m = market.with_(sigma_theta=0.0, theta0=market.theta_bar)
    ens = simulate(m, 10, 15)
    assert np.all(ens.theta == m.theta_bar)


def test_deterministic_and_prefix_stable(market):
    a = simulate(market, 2 * SEED_BLOCK + 10, 12, seed=11)
    b = simulate(market, 2 * SEED_BLOCK + 10, 12, seed=11)
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.Z, b.Z)
    c = simulate(market, 40, 12, seed=11)
    assert np.array_equal(a.theta[:40], c.theta)
    d = simulate(market, 40, 12, seed=12)
    assert not np.array_equal(c.theta, d.theta)


def test_antithetic_pairs(market):
    ens = simulate(market, 8, 5, seed=1)
    m, _ = exact_ou_moments(market, ens.times[-1])
    # theta_T is linear in the shocks, so paired paths straddle the exact mean
    assert np.allclose(ens.theta[0::2, -1] + ens.theta[1::2, -1], 2 * m)


def test_input_checks(market):
    with pytest.raises(ValueError):
        simulate(market, 3, 10)
    with pytest.raises(ValueError):
        simulate(market, 0, 10)
    with pytest.raises(ValueError):
        simulate(market.with_(theta0=math.inf), 2, 10)
    simulate(market, 3, 10, antithetic=False)


def test_z_is_mean_one(ensemble):
    zt = ensemble.unit_means(ensemble.Z[:, -1])
    se = zt.std(ddof=1) / math.sqrt(zt.size)
    assert abs(zt.mean() - 1.0) <= 3 * se


def test_theta_variance_matches_exact(market):
    ens = simulate(market, 100_000, 100, seed=5)
    m, v = exact_ou_moments(market, 1.0)
    dev = ens.unit_means((ens.theta[:, -1] - m) ** 2)
    assert abs(dev.mean() - v) <= 3 * dev.std(ddof=1) / math.sqrt(dev.size)


def test_step_size_does_not_change_theta_law(market):
    coarse = simulate(market, 40_000, 10, seed=8, antithetic=False).theta[:, -1]
    fine = simulate(market, 40_000, 20, seed=9, antithetic=False).theta[:, -1]
    se = math.sqrt(coarse.var() / coarse.size + fine.var() / fine.size)
    assert abs(coarse.mean() - fine.mean()) <= 4 * se
    se_v = math.sqrt(2.0 / coarse.size) * coarse.var() * math.sqrt(2)
    assert abs(coarse.var() - fine.var()) <= 4 * se_v


def test_index_of(market):
    ens = simulate(market, 2, 4)
    assert ens.index_of(0.5) == 2
    with pytest.raises(ValueError):
        ens.index_of(0.3)
