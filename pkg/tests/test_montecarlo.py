from __future__ import annotations

import math

import numpy as np
import pytest

import oracle
from conftest import BASELINE, R_BELOW, model
from ezsdu.closed_form import family_member_from_T
from ezsdu.montecarlo import (
    CHUNK,
    SimSpec,
    f_ez,
    family_candidate,
    proportional_candidate,
    residual_estimate,
    residual_estimates,
    simulate,
)
from ezsdu.params import MarketParams, make_strategy


def batch_for(params, n_paths=20000, n_steps=20, horizon=20.0, seed=3):
    prefs, market, opt = model(params)
    return prefs, market, opt, simulate(opt, market, SimSpec(n_paths, n_steps, horizon, seed))


def test_terminal_mean_matches_lognormal_moment():
    prefs, market, opt, batch = batch_for(BASELINE, n_paths=50000)
    XT = batch.paths[:, -1]
    g = market.r + opt.pi * (market.mu - market.r) - opt.xi
    expected = math.exp(g * batch.horizon)
    se = XT.std(ddof=1) / math.sqrt(XT.size)
    assert abs(XT.mean() - expected) < 3 * se


def test_log_increments_have_exact_variance():
    prefs, market, opt, batch = batch_for(BASELINE, n_paths=50000, n_steps=4)
    inc = np.diff(np.log(batch.paths), axis=1)
    var = (opt.pi * market.sigma) ** 2 * batch.dt
    # sample variance of 2e5 normals is within a few percent
    assert inc.var(ddof=1) == pytest.approx(var, rel=0.02)


def test_zero_volatility_is_deterministic():
    prefs, market, opt = model(BASELINE)
    flat = MarketParams(market.r, market.mu, 1e-300, market.lam, market.eta)
    st = make_strategy(0.0, opt.xi, flat, prefs)
    batch = simulate(st, flat, SimSpec(10, 5, 5.0))
    expected = np.exp((flat.r - st.xi) * batch.times)
    np.testing.assert_allclose(batch.paths, np.broadcast_to(expected, batch.paths.shape), rtol=1e-14)


def test_same_seed_same_paths():
    a = batch_for(BASELINE, n_paths=CHUNK + 17, seed=9)[3].paths
    b = batch_for(BASELINE, n_paths=CHUNK + 17, seed=9)[3].paths
    c = batch_for(BASELINE, n_paths=CHUNK + 17, seed=10)[3].paths
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert a.shape == (CHUNK + 17, 21)


def test_chunks_are_prefix_stable():
    small = batch_for(BASELINE, n_paths=CHUNK, seed=4)[3].paths
    big = batch_for(BASELINE, n_paths=3 * CHUNK, seed=4)[3].paths
    assert np.array_equal(small, big[:CHUNK])


def test_standard_error_scales_like_inverse_sqrt_n():
    prefs, market, opt = model(BASELINE)
    cand = proportional_candidate(opt, prefs, 1.1)
    se = []
    for n in (4 * CHUNK, 16 * CHUNK):
        b = simulate(opt, market, SimSpec(n, 20, 20.0, 1))
        se.append(residual_estimate(cand, b, prefs)[1])
    assert se[0] / se[1] == pytest.approx(2.0, rel=0.1)


def test_single_and_batched_estimates_agree():
    prefs, market, opt, batch = batch_for(BASELINE, n_paths=5000)
    cands = [proportional_candidate(opt, prefs), proportional_candidate(opt, prefs, 1.1)]
    many = residual_estimates(cands, batch, prefs)
    for c, m in zip(cands, many):
        assert residual_estimate(c, batch, prefs) == m


def test_aggregator_values():
    prefs, market, opt = model(BASELINE)
    # R = 2, S = 1.5: f = c^{-1/2}/(-1/2) * (-v)^{1/2}
    assert f_ez(4.0, -9.0, prefs) == pytest.approx(-2 * 0.5 * 3)
    assert f_ez(4.0, 0.0, prefs) == 0.0


def test_candidate_values_match_closed_form():
    prefs, market, opt = model(BASELINE)
    cand = proportional_candidate(opt, prefs)
    v = cand.value(np.array([0.0, 3.0]), np.array([1.0, 2.0]), opt.xi, prefs)
    expected = float(oracle.V_hat(1.0, **BASELINE))
    assert v[0] == pytest.approx(expected, rel=1e-12)
    assert v[1] == pytest.approx(expected / 2, rel=1e-12)


def test_family_candidate_is_zero_after_absorption():
    prefs, market, opt = model(BASELINE)
    cand = family_candidate(family_member_from_T(5.0, opt, prefs))
    v = cand.value(np.array([1.0, 5.0, 8.0]), np.ones(3), opt.xi, prefs)
    assert v[0] != 0 and v[1] == pytest.approx(0.0, abs=1e-12) and v[2] == 0.0


@pytest.mark.parametrize("params", [BASELINE, R_BELOW])
def test_true_solution_is_unbiased_on_short_runs(params):
    prefs, market, opt, batch = batch_for(params, n_paths=30000, n_steps=40, horizon=20.0)
    est, se = residual_estimate(proportional_candidate(opt, prefs), batch, prefs)
    assert abs(est) < 4 * se


def test_spec_validation():
    with pytest.raises(ValueError):
        SimSpec(1, 5, 1.0)
    with pytest.raises(ValueError):
        SimSpec(10, 5, 0.0)
