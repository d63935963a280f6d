import numpy as np
import pytest

from ccrbsde.bsde import SolverConfig, TerminalSpec, solve_backward, solve_linear_closed_form
from ccrbsde.credit import CollateralSpec, RecoverySpec
from ccrbsde.errors import InvalidArgumentError, SingularDiffusionError
from ccrbsde.hermite import HermiteBasis
from ccrbsde.paths import arithmetic_model, build_time_grid, generate_brownian, geometric_model, simulate_euler
from ccrbsde.xva import (
    TERMS,
    NettingSet,
    RateDeck,
    approx_adjustment_MVhat,
    driver_fundamental,
    effective_rate,
    g_source,
    hedge_ratios,
    market_price_of_risk,
    reduced_driver,
    riskless_value,
    solve_reduced_MV,
    solve_reduced_MVhat,
    xva_decompose_MV,
    xva_integrands,
)

CALL = NettingSet(lambda s: np.maximum(s[:, 0] - 1.0, 0.0))
ONE = NettingSet(lambda s: np.ones(len(s)))
BASIS = HermiteBasis(1, 3)


def gbm(N=4000, m=20, seed=11, drift=0.03, vol=0.25):
    g = build_time_grid(1.0, m)
    b = generate_brownian(g, 1, N, seed)
    return simulate_euler(geometric_model([drift], [vol], [1.0]), g, b)


def bm(N=500, m=100, seed=5):
    g = build_time_grid(1.0, m)
    b = generate_brownian(g, 1, N, seed)
    return simulate_euler(arithmetic_model([0.0], [[1.0]], [0.0]), g, b)


def spread_deck(**kw):
    base = dict(r=0.02, r_B=0.05, r_C=0.07, q_C=0.03, r_F=0.06, r_X=0.01,
                r_TC=0.015, r_FC=0.012, r_K=0.08)
    base.update(kw)
    return RateDeck(**base)


# riskless value

def test_riskless_trivial_gamma():
    # drift equal to the repo rate makes h1 vanish
    ens = gbm(drift=0.02)
    deck = RateDeck(r=0.02, q_S=0.02)
    V = riskless_value(ens, deck, CALL, BASIS)
    assert np.max(np.abs(V.h1)) == 0.0
    expect = np.exp(-0.02) * CALL.evaluate(ens).mean()
    assert V.v0 == pytest.approx(expect, rel=1e-12)


def test_riskless_unit_payoff_martingale():
    ens = gbm(N=20000, drift=0.08)
    V = riskless_value(ens, RateDeck(r=0.02), ONE, BASIS)
    assert abs(V.v0 - np.exp(-0.02)) <= 3 * V.stderr0 + 1e-12


def test_riskless_backward_matches_closed_form():
    ens = gbm(N=8000)
    deck = RateDeck(r=0.02)
    a = riskless_value(ens, deck, CALL, BASIS)
    b = riskless_value(ens, deck, CALL, BASIS, method="backward")
    assert abs(a.v0 - b.v0) <= 3 * a.stderr0
    assert b.Z is not None


def test_singular_diffusion_reported():
    ens = gbm(vol=0.0)
    with pytest.raises(SingularDiffusionError):
        riskless_value(ens, RateDeck(r=0.02), CALL, BASIS)


def test_unknown_method():
    with pytest.raises(InvalidArgumentError):
        riskless_value(gbm(N=100), RateDeck(), CALL, BASIS, method="tree")


# fundamental driver

def _rates(**kw):
    r = dict(r=0.02, r_B=0.02, r_C=0.03, q_C=0.03, r_F=0.02, r_X=0.0, r_TC=0.0,
             r_FC=0.0, r_K=0.0)
    r.update(kw)
    return {k: np.array([v]) for k, v in r.items()}


def test_driver_zero_spreads_is_riskless():
    rng = np.random.default_rng(0)
    h1, z = rng.normal(size=(1, 2)), rng.normal(size=(1, 2))
    v, uB, uC = rng.normal(size=3)[:, None]
    g = driver_fundamental(h1, v, z, uB, uC, _rates(), 0.0, 0.0, 0.0, 0.0)
    np.testing.assert_allclose(g, -(z * h1).sum() - 0.02 * v, rtol=1e-14)


def test_driver_funding_vanishes_on_boundary():
    v, X, I_TC = np.array([1.3]), np.array([0.4]), np.array([0.2])
    uB = -(v - X + I_TC)
    args = (np.zeros((1, 1)), v, np.zeros((1, 1)), uB, np.array([0.1]))
    a = driver_fundamental(*args, _rates(r_F=0.02), X, I_TC, 0.0, 0.0)
    b = driver_fundamental(*args, _rates(r_F=0.5), X, I_TC, 0.0, 0.0)
    np.testing.assert_array_equal(a, b)


def test_driver_hand_evaluated():
    r, rB, rC, qC, rF, rX, rTC, rFC, rK = 0.01, 0.04, 0.09, 0.03, 0.06, 0.005, 0.02, 0.015, 0.1
    rates = _rates(r=r, r_B=rB, r_C=rC, q_C=qC, r_F=rF, r_X=rX, r_TC=rTC, r_FC=rFC, r_K=rK)
    h1, z = np.array([[0.4, -0.2]]), np.array([[1.5, 2.0]])
    v, uB, uC = 2.0, -3.1, -0.7
    X, I_TC, I_FC, K = 0.5, 0.3, 0.25, 1.2
    # v - X + I_TC + uB = 2 - 0.5 + 0.3 - 3.1 = -1.3, negative part -1.3
    expect = (-(1.5 * 0.4 - 2.0 * 0.2) + 0.03 * -3.1 + 0.06 * -0.7 - 0.03 * 0.3
              + 0.015 * 0.25 + 0.015 * 0.5 + 0.1 * 1.2 - 0.01 * 2.0 - 0.05 * -1.3)
    got = driver_fundamental(h1, np.array([v]), z, np.array([uB]), np.array([uC]), rates,
                             X, I_TC, I_FC, K)
    assert got[0] == pytest.approx(expect, abs=1e-12)


def test_integrands_add_up_to_G():
    rng = np.random.default_rng(3)
    V = rng.normal(size=50)
    X = 0.3 * V
    rates = {k: v[0] for k, v in _rates(r_B=0.05, r_C=0.08, r_F=0.07, r_X=0.01, r_TC=0.02,
                                        r_FC=0.01, r_K=0.1).items()}
    rec = RecoverySpec(0.3, 0.6)
    parts = xva_integrands(V, rates, X, 0.1, 0.2, 0.5, rec)
    G = g_source(V, rates, X, 0.1, 0.2, 0.5, rec)
    np.testing.assert_allclose(sum(parts.values()), G, atol=1e-14)


# reduced drivers

def test_reduced_MV_collapse():
    ens = gbm(N=200)
    V = riskless_value(ens, RateDeck(r=0.02), CALL, BASIS).values
    drv = reduced_driver("MV", ens, RateDeck(r=0.02), CollateralSpec(), RecoverySpec(), V=V)
    for i in (0, 7, 19):
        A, B, _ = drv.coefficients(i)
        assert np.all(A == 0.0)
        np.testing.assert_allclose(B, -0.02, rtol=1e-14)


def test_reduced_MV_needs_V():
    ens = gbm(N=100)
    with pytest.raises(InvalidArgumentError):
        reduced_driver("MV", ens, RateDeck(), CollateralSpec(), RecoverySpec())


def test_reduced_MVhat_full_recovery_is_linear_with_slope_r():
    ens = gbm(N=300)
    drv = reduced_driver("MVhat", ens, spread_deck(r_F=0.02), CollateralSpec(X=0.1),
                         RecoverySpec(1.0, 1.0))
    rng = np.random.default_rng(1)
    s = ens.states[:, 3]
    z = np.zeros((300, 1))
    y = rng.normal(scale=2.0, size=300)
    slope = (drv(3, 0.15, s, y + 1.0, z) - drv(3, 0.15, s, y, z))
    np.testing.assert_allclose(slope, -0.02, atol=1e-12)


def test_unknown_convention():
    with pytest.raises(InvalidArgumentError):
        reduced_driver("MX", gbm(N=50), RateDeck(), CollateralSpec(), RecoverySpec(), V=0.0)


# solve_reduced_MV

def test_reduced_MV_equals_V_without_spreads():
    ens = gbm()
    deck = RateDeck(r=0.02)
    V = riskless_value(ens, deck, CALL, BASIS)
    _, path = solve_reduced_MV(ens, deck, CollateralSpec(), RecoverySpec(), CALL, V.values, BASIS)
    np.testing.assert_allclose(path, V.pathwise, rtol=1e-12, atol=1e-15)


def test_reduced_MV_deterministic_oracle():
    ens = bm(N=50, m=200)
    r, rB, rC, qC, rK, K = 0.02, 0.05, 0.07, 0.03, 0.1, 2.0
    deck = RateDeck(r=r, r_B=rB, r_C=rC, q_C=qC, r_K=rK)
    rho, g0 = rB + rC - qC, rK * K
    V0 = np.zeros((50, 201))
    vals, path = solve_reduced_MV(ens, deck, CollateralSpec(K=K), RecoverySpec(), ONE, V0, BASIS)
    expect = np.exp(-rho) + g0 * (1 - np.exp(-rho)) / rho
    assert vals[0, 0] == pytest.approx(expect, abs=1e-6)
    np.testing.assert_allclose(path[:, 0], expect, atol=1e-6)


def test_reduced_MV_closed_form_vs_backward():
    ens = gbm(N=8000)
    deck = spread_deck()
    coll = CollateralSpec(I_TC=0.05, I_FC=0.04, K=0.2)
    rec = RecoverySpec(0.4, 0.3)
    V = riskless_value(ens, deck, CALL, BASIS)
    vals, path = solve_reduced_MV(ens, deck, coll, rec, CALL, V.values, BASIS)
    drv = reduced_driver("MV", ens, deck, coll, rec, V=V.values)
    sol = solve_backward(ens, drv, TerminalSpec(CALL.payoff), BASIS)
    se = np.std(path[:, 0], ddof=1) / np.sqrt(len(path))
    assert abs(sol.y0 - vals[0, 0]) <= 3 * se


# decomposition under M = V

def _mv_report(deck, rec, coll=None, seed=11, N=4000):
    ens = gbm(N=N, seed=seed)
    V = riskless_value(ens, deck, CALL, BASIS)
    coll = coll if coll is not None else CollateralSpec.from_rules(V.values, 0.3, 0.02, 0.03, 0.1)
    return xva_decompose_MV(ens, deck, coll, rec, CALL, V.values, BASIS, riskless=V)


def test_cva_zero_at_full_recovery():
    rep = _mv_report(spread_deck(), RecoverySpec(0.4, 1.0))
    assert np.all(rep.terms["CVA"] == 0.0)


def test_dva_fva_zero_without_bank_spreads():
    rep = _mv_report(spread_deck(r_B=0.02, r_F=0.02), RecoverySpec(0.4, 0.4))
    assert np.all(rep.terms["DVA"] == 0.0)
    assert np.all(rep.terms["FVA"] == 0.0)


def test_term_sum_reconciles():
    rep = _mv_report(spread_deck(), RecoverySpec(0.35, 0.45))
    gap = rep.term_sum[0] - rep.A[:, 0].mean()
    assert abs(gap) <= 3 * rep.stderr["A"][0] + 1e-12
    assert set(TERMS) <= set(rep.columns())


def test_zero_spread_report():
    rep = _mv_report(RateDeck(r=0.02), RecoverySpec(0.4, 0.4), coll=CollateralSpec())
    for k in ("CVA", "DVA", "FVA"):
        assert np.all(rep.terms[k] == 0.0)
    np.testing.assert_allclose(rep.Vhat, rep.V, atol=1e-12)


def test_discount_term_cross_check():
    # with G = 0 and rho > r the adjustment is the pure discount difference
    ens = gbm(N=4000)
    deck = RateDeck(r=0.02, r_B=0.02, r_F=0.02, q_C=0.02, r_C=0.05)
    V = riskless_value(ens, deck, CALL, BASIS)
    rep = xva_decompose_MV(ens, deck, CollateralSpec(), RecoverySpec(0.4, 1.0), CALL, V.values,
                           BASIS, riskless=V)
    # carry (rho - r) V cancels the DVA/CVA-free part of G exactly
    total = rep.terms["discount_term"][0] + rep.terms["carry_term"][0]
    assert total == pytest.approx(rep.A[:, 0].mean(), abs=1e-12)
    assert rep.terms["discount_term"][0] < 0


# first-order adjustment under M = Vhat

def test_effective_rate_two_regimes():
    rates = {k: v[0] for k, v in _rates(r=0.01, r_B=0.04, r_C=0.09, q_C=0.03, r_F=0.07).items()}
    rec = RecoverySpec(0.3, 0.6)
    V = np.array([1.0, -1.0])
    reff = effective_rate(V, rates, 0.0, 0.0, 0.0, rec)
    rho = 0.04 + 0.09 - 0.03
    # V >= 0: bank side fully on, counterparty side only its recovery share
    up = rho - 0.03 * 1.0 - 0.06 * 0.6
    # V < 0: bank recovery share, funding on, counterparty fully on
    down = rho - 0.03 * 0.3 - 0.06 * 1.0 - 0.06
    np.testing.assert_allclose(reff, [up, down], rtol=1e-14)


def test_effective_rate_without_spreads_is_r():
    rates = {k: v[0] for k, v in _rates(r=0.03, r_B=0.03, q_C=0.05, r_C=0.05, r_F=0.03).items()}
    V = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(effective_rate(V, rates, 0.0, 0.0, 0.0, RecoverySpec()), 0.03,
                               rtol=1e-14)


def test_literal_source_unit_payoff():
    r = 0.05
    ens = bm(N=20, m=400)
    deck = RateDeck(r=r)
    V = riskless_value(ens, deck, ONE, BASIS).values
    A, rep = approx_adjustment_MVhat(ens, deck, CollateralSpec(), RecoverySpec(), ONE, V, BASIS,
                                     literal_source=True)
    assert A[0, 0] == pytest.approx(r * np.exp(-r), abs=1e-6)
    assert np.all(rep.effective_rate == r)
    A0, _ = approx_adjustment_MVhat(ens, deck, CollateralSpec(), RecoverySpec(), ONE, V, BASIS)
    assert np.max(np.abs(A0)) < 1e-14


def test_approx_cva_zero_at_full_recovery():
    ens = gbm(N=2000)
    deck = spread_deck()
    V = riskless_value(ens, deck, CALL, BASIS).values
    _, rep = approx_adjustment_MVhat(ens, deck, CollateralSpec(), RecoverySpec(0.4, 1.0), CALL,
                                     V, BASIS)
    assert np.all(rep.terms["CVA"] == 0.0)


def test_approx_closed_form_vs_backward():
    ens = gbm(N=6000)
    deck = spread_deck()
    rec = RecoverySpec(0.4, 0.4)
    V = riskless_value(ens, deck, CALL, BASIS, method="backward").values
    A1, rep = approx_adjustment_MVhat(ens, deck, CollateralSpec(), rec, CALL, V, BASIS)
    A2, _ = approx_adjustment_MVhat(ens, deck, CollateralSpec(), rec, CALL, V, BASIS,
                                    method="backward")
    assert abs(A1[0, 0] - A2[0, 0]) <= 3 * rep.stderr["A"][0] + 2e-4


# nonlinear solve under M = Vhat

def test_nonlinear_zero_spreads_matches_riskless():
    ens = gbm(N=6000)
    deck = RateDeck(r=0.02)
    V = riskless_value(ens, deck, CALL, BASIS)
    sol = solve_reduced_MVhat(ens, deck, CollateralSpec(), RecoverySpec(), CALL, BASIS)
    assert abs(sol.y0 - V.v0) <= 3 * V.stderr0


def test_nonlinear_full_recovery_matches_linear():
    ens = gbm(N=6000)
    deck = spread_deck(r_F=0.02)
    rec = RecoverySpec(1.0, 1.0)
    sol = solve_reduced_MVhat(ens, deck, CollateralSpec(), rec, CALL, BASIS)
    # the driver collapses to -h1.z - r y
    h1 = market_price_of_risk(ens, deck.sample(ens.path_count, ens.grid.m, 1))
    lin = solve_linear_closed_form(ens, 0.0, -0.02, -h1, CALL.payoff, BASIS, eval_index=0)
    assert abs(sol.y0 - lin.y0) <= 3 * lin.y0_stderr


# hedge ratios

def test_hedge_ratio_identity():
    Z = np.array([0.3, -1.2])
    np.testing.assert_allclose(hedge_ratios(Z, np.eye(2)), Z, rtol=1e-15)


def test_hedge_ratio_diagonal():
    np.testing.assert_allclose(hedge_ratios([2.0, 4.0], np.diag([2.0, 4.0])), [1.0, 1.0])


def test_hedge_ratio_transpose():
    rng = np.random.default_rng(4)
    sig = rng.normal(size=(10, 3, 3)) + 3 * np.eye(3)
    Z = rng.normal(size=(10, 3))
    d = hedge_ratios(Z, sig)
    np.testing.assert_allclose(np.einsum("pji,pj->pi", sig, d), Z, atol=1e-12)


def test_hedge_ratio_singular():
    with pytest.raises(SingularDiffusionError):
        hedge_ratios([1.0, 1.0], [[1.0, 1.0], [1.0, 1.0]])


def test_first_order_accuracy_weak():
    # spread halving shrinks the approximation error by at least 3
    ens = gbm(N=5000, m=40, seed=21)
    base = RateDeck(r=0.02, q_S=0.02, r_B=0.07, q_C=0.02, r_C=0.10, r_F=0.12, r_X=-0.02)
    rec = RecoverySpec(0.4, 0.4)
    V = riskless_value(ens, base, CALL, BASIS, method="backward").values
    errs = []
    for eps in (1.0, 0.5, 0.25):
        d = base.scaled_spreads(eps)
        nl = solve_reduced_MVhat(ens, d, CollateralSpec(), rec, CALL, BASIS)
        A, _ = approx_adjustment_MVhat(ens, d, CollateralSpec(), rec, CALL, V, BASIS,
                                       method="backward")
        errs.append(abs(nl.Y[0, 0] - V[0, 0] - A[0, 0]))
    assert errs[0] / errs[1] >= 3 and errs[1] / errs[2] >= 3
