import numpy as np
import pytest

from ccrbsde.credit import (
    CollateralSpec,
    DefaultTimes,
    IntensityModel,
    RecoverySpec,
    close_out_values,
    default_value,
    neg,
    pos,
    simulate_default_times,
)
from ccrbsde.errors import ContractViolationError, InvalidArgumentError, InvalidModelError
from ccrbsde.paths import build_time_grid, generate_brownian


@pytest.fixture(scope="module")
def setup():
    g = build_time_grid(1.0, 50)
    b = generate_brownian(g, 2, 40_000, 17)
    return g, b


def test_parts():
    x = np.array([-2.0, 0.0, 3.0])
    np.testing.assert_array_equal(pos(x), [0, 0, 3])
    np.testing.assert_array_equal(neg(x), [-2, 0, 0])


def test_zero_intensity_never_defaults(setup):
    g, b = setup
    d = simulate_default_times(IntensityModel.constant(0), IntensityModel.constant(0), g, b, 1)
    assert np.all(np.isinf(d.tau_B)) and np.all(np.isinf(d.tau_C))
    assert not d.defaulted.any()


def test_constant_intensity_default_fraction(setup):
    g, b = setup
    d = simulate_default_times(IntensityModel.constant(0), IntensityModel.constant(0.02), g, b, 2)
    p = 1 - np.exp(-0.02)
    frac = np.mean(d.tau_C <= 1.0)
    assert abs(frac - p) <= 3 * np.sqrt(p * (1 - p) / b.path_count)


def test_huge_intensity_defaults_in_first_interval(setup):
    g, b = setup
    d = simulate_default_times(IntensityModel.constant(1e3), IntensityModel.constant(0), g, b, 3)
    assert np.all((d.tau_B > 0) & (d.tau_B <= g.nodes[1]))


def test_survival_curve_matches_hazard(setup):
    g, b = setup
    curve = IntensityModel.curve([[0.0, 0.05], [1.0, 0.45]])
    d = simulate_default_times(curve, IntensityModel.constant(0), g, b, 4)
    N = b.path_count
    for t in (0.25, 0.5, 1.0):
        H = 0.05 * t + 0.2 * t**2
        surv = np.exp(-H)
        emp = np.mean(d.tau_B > t)
        assert abs(emp - surv) <= 3 * np.sqrt(surv * (1 - surv) / N)


def test_threshold_substream_changes_tau_not_intensity(setup):
    g, b = setup
    cir = IntensityModel.cir(0.1, 1.0, 0.1, 0.3, [0.0, 1.0])
    d1 = simulate_default_times(cir, cir, g, b, 5)
    d2 = simulate_default_times(cir, cir, g, b, 6)
    np.testing.assert_array_equal(d1.intensity_C, d2.intensity_C)
    assert not np.array_equal(d1.tau_C, d2.tau_C)


def test_cir_is_nonnegative_and_adapted(setup):
    g, b = setup
    cir = IntensityModel.cir(0.02, 0.5, 0.02, 0.8, [1.0, 1.0])
    lam = cir.paths(g, b)
    assert lam.min() >= 0 and np.all(lam[:, 0] == 0.02)
    # perturbing a late increment leaves earlier intensities unchanged
    inc = b.increments.copy()
    inc[:, 30] += 1.0
    from ccrbsde.paths import BrownianBatch
    lam2 = cir.paths(g, BrownianBatch.from_increments(g, inc))
    np.testing.assert_array_equal(lam[:, :31], lam2[:, :31])
    assert not np.array_equal(lam[:, 32], lam2[:, 32])


def test_negative_intensity_rejected(setup):
    g, b = setup
    with pytest.raises(InvalidModelError):
        simulate_default_times(IntensityModel.constant(-0.1), IntensityModel.constant(0), g, b, 1)
    with pytest.raises(InvalidModelError):
        IntensityModel.cir(0.1, 1.0, 0.1, 0.2, [0.0, 0.0]).paths(g, b)


def test_close_out_examples():
    rec = RecoverySpec(0.4, 0.4)
    M = np.array([10.0, -5.0, 3.0])
    tb, tc = close_out_values(M, CollateralSpec(X=M * np.array([0, 0, 1])), rec)
    assert tc[0] == pytest.approx(4.0)
    assert tb[1] == pytest.approx(-2.0) and tc[1] == pytest.approx(-5.0)
    assert tb[2] == tc[2] == 3.0


def test_close_out_monotone_and_full_recovery():
    rng = np.random.default_rng(0)
    M = rng.normal(size=200)
    coll = CollateralSpec(X=0.3 * M, I_TC=np.abs(rng.normal(size=200)) * 0.1,
                          I_FC=np.abs(rng.normal(size=200)) * 0.1)
    prev = None
    for R in np.linspace(0, 1, 6):
        tb, tc = close_out_values(M, coll, RecoverySpec(R, R))
        if prev is not None:
            # R_C scales a claim held by the bank, R_B one held against it
            assert np.all(tc >= prev[1] - 1e-15)
            assert np.all(tb <= prev[0] + 1e-15)
        prev = (tb, tc)
    tb, tc = close_out_values(M, coll, RecoverySpec(1.0, 1.0))
    np.testing.assert_allclose(tb, M, atol=1e-14)
    np.testing.assert_allclose(tc, M, atol=1e-14)


def test_recovery_and_collateral_validation():
    with pytest.raises(InvalidArgumentError):
        RecoverySpec(1.2, 0.4)
    with pytest.raises(InvalidArgumentError):
        CollateralSpec(I_TC=-1.0)
    c = CollateralSpec.from_rules(np.array([[1.0, -2.0]]), vm_fraction=0.5, im_posted=0.1,
                                  capital_fraction=0.08)
    np.testing.assert_allclose(c.X, [[0.5, -1.0]])
    np.testing.assert_allclose(c.K, [[0.08, 0.16]])


def test_default_value_selection_and_ties():
    g = build_time_grid(1.0, 4)
    N = 3
    thB = np.full((N, 5), -1.0)
    thC = np.full((N, 5), 7.0)
    d = DefaultTimes(np.array([0.1, 0.6, 0.5]), np.array([0.9, 0.2, 0.5]))
    np.testing.assert_array_equal(default_value(thB, thC, d, g), [-1.0, 7.0, 7.0])
    d2 = DefaultTimes(np.array([0.1, np.inf]), np.array([np.inf, np.inf]))
    with pytest.raises(ContractViolationError):
        default_value(thB[:2], thC[:2], d2, g)
    assert default_value(thB[:2], thC[:2], d2, g, paths=[0])[0] == -1.0
