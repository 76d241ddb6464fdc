from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracle
from conftest import BASELINE, R_BELOW
from ezsdu.errors import IllPosed, ThetaOutOfRegime
from ezsdu.params import MarketParams, derive_market, derive_preferences, growth_H, make_strategy


@pytest.mark.parametrize("R,S", [(2, 1.5), (0.5, 0.75)])
def test_theta_and_rho_direct(R, S):
    p = derive_preferences(R, S)
    assert p.theta == 2.0
    assert p.rho == 0.5


@pytest.mark.parametrize("R,S", [(2, 3), (0.5, 0.25), (2, 0.5), (0.5, 2), (1, 0.5), (2, 1), (-1, 0.5)])
def test_rejects_out_of_regime(R, S):
    with pytest.raises(ThetaOutOfRegime):
        derive_preferences(R, S)


def test_market_baseline_matches_oracle():
    prefs = derive_preferences(2, 1.5)
    m = derive_market(0.02, 0.05, 0.2, prefs)
    ref = oracle.market_constants(**BASELINE)
    assert m.lam == pytest.approx(float(ref["lam"]), rel=1e-14)
    assert m.eta == pytest.approx(float(ref["eta"]), rel=1e-14)
    assert m.eta == pytest.approx(0.00854167, abs=5e-9)


def test_market_r_below_one_matches_oracle():
    prefs = derive_preferences(0.5, 0.75)
    m = derive_market(-0.05, -0.04, 0.2, prefs)
    ref = oracle.market_constants(**R_BELOW)
    assert m.lam == pytest.approx(0.05, rel=1e-13)
    assert m.eta == pytest.approx(float(ref["eta"]), rel=1e-14)
    assert m.eta == pytest.approx(0.0158333, abs=5e-8)


def test_ill_posed_market():
    prefs = derive_preferences(0.5, 0.75)
    ref = oracle.market_constants(0.5, 0.75, 0.02, 0.05, 0.2)
    assert ref["eta"] < 0
    with pytest.raises(IllPosed):
        derive_market(0.02, 0.05, 0.2, prefs)


def test_nonpositive_sigma_rejected():
    with pytest.raises(IllPosed):
        derive_market(0.02, 0.05, 0.0, derive_preferences(2, 1.5))


@pytest.mark.parametrize(
    "xi,expected", [(None, None), (0.01, 0.015625), (0.05, -0.024375)]
)
def test_growth_H_examples(baseline, xi, expected):
    prefs, market, opt = baseline
    xi_val = market.eta if xi is None else xi
    ref = oracle.H(0.375, xi_val, **BASELINE)
    got = growth_H(0.375, xi_val, market, prefs)
    assert got == pytest.approx(float(ref), rel=1e-12)
    if expected is None:
        assert got == pytest.approx(prefs.theta * market.eta, rel=1e-12)
    else:
        assert got == pytest.approx(expected, rel=1e-12)


def test_outside_D_flag(baseline):
    prefs, market, _ = baseline
    assert not make_strategy(0.375, 0.05, market, prefs).in_D
    assert make_strategy(0.375, 0.01, market, prefs).in_D


valid_prefs = st.one_of(
    st.tuples(st.floats(1.05, 10), st.floats(0.05, 0.95)).map(lambda t: (1 + (t[0] - 1), 1 + (t[0] - 1) * t[1])),
    st.tuples(st.floats(0.01, 0.95), st.floats(0.05, 0.95)).map(lambda t: (t[0], t[0] + (1 - t[0]) * t[1])),
)


@given(valid_prefs)
def test_rho_identities(rs):
    R, S = rs
    p = derive_preferences(R, S)
    assert p.theta > 1
    assert 0 < p.rho < 1
    assert math.isclose(p.rho * p.theta, p.theta - 1, rel_tol=1e-12, abs_tol=1e-15)
    assert math.isclose((1 - R) * p.rho, S - R, rel_tol=1e-12, abs_tol=1e-15)


@given(
    valid_prefs,
    st.floats(-0.05, 0.08),
    st.floats(0.0, 0.1),
    st.floats(0.05, 0.6),
)
def test_H_at_optimum_equals_theta_eta(rs, r, excess, sigma):
    prefs = derive_preferences(*rs)
    try:
        market = derive_market(r, r + excess, sigma, prefs)
    except IllPosed:
        return
    got = growth_H(market.lam / (sigma * prefs.R), market.eta, market, prefs)
    assert math.isclose(got, prefs.theta * market.eta, rel_tol=1e-10, abs_tol=1e-14)


@given(valid_prefs, st.floats(-1, 2), st.floats(0.001, 0.1), st.floats(1e-4, 0.05))
def test_H_monotone_in_xi(rs, pi, xi, dxi):
    prefs = derive_preferences(*rs)
    # H does not involve eta, so the market need not be well-posed here
    market = MarketParams(0.03, 0.06, 0.2, 0.15, float("nan"))
    lo, hi = growth_H(pi, xi, market, prefs), growth_H(pi, xi + dxi, market, prefs)
    if prefs.R > 1:
        assert hi < lo
    else:
        assert hi > lo


def test_growth_H_vectorises(baseline):
    prefs, market, _ = baseline
    xs = np.array([0.01, 0.05])
    np.testing.assert_allclose(growth_H(0.375, xs, market, prefs), [0.015625, -0.024375], rtol=1e-12)


def test_records_are_frozen(baseline):
    prefs, _, _ = baseline
    with pytest.raises(Exception):
        prefs.R = 3.0
