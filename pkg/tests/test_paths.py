import numpy as np
import pytest

from ccrbsde.errors import InvalidArgumentError, NonFiniteStateError, UnsupportedModelError
from ccrbsde.paths import (
    AssetModel,
    BrownianBatch,
    arithmetic_model,
    build_time_grid,
    generate_brownian,
    geometric_model,
    linear_model,
    simulate_euler,
    simulate_milstein,
)


def test_grid_examples():
    g = build_time_grid(1.0, 4)
    np.testing.assert_array_equal(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    g = build_time_grid(1.0, 250)
    assert len(g.nodes) == 251
    np.testing.assert_allclose(g.steps, 0.004, rtol=1e-12)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 1.0
    np.testing.assert_array_equal(build_time_grid(2.0, 1).nodes, [0.0, 2.0])


@pytest.mark.parametrize("T,m", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, -3)])
def test_grid_rejects_bad_arguments(T, m):
    with pytest.raises(InvalidArgumentError):
        build_time_grid(T, m)


def test_increment_variance_and_determinism():
    g = build_time_grid(1.0, 1)
    N = 100_000
    b = generate_brownian(g, 1, N, 11)
    x = b.increments[:, 0, 0]
    var = x.var(ddof=1)
    # variance of the sample variance of a Gaussian is 2 s^4 / (N - 1)
    assert abs(var - 1.0) <= 3 * np.sqrt(2.0 / (N - 1))
    b2 = generate_brownian(g, 1, N, 11)
    np.testing.assert_array_equal(b.increments, b2.increments)


def test_cross_correlation_is_zero():
    g = build_time_grid(1.0, 1)
    N = 50_000
    b = generate_brownian(g, 2, N, 5)
    r = np.corrcoef(b.increments[:, 0, 0], b.increments[:, 0, 1])[0, 1]
    assert abs(np.arctanh(r)) <= 3 / np.sqrt(N - 3)


def test_parallelism_does_not_change_draws(monkeypatch):
    g = build_time_grid(1.0, 8)
    one = generate_brownian(g, 2, 3000, 3, workers=1)
    many = generate_brownian(g, 2, 3000, 3, workers=4)
    np.testing.assert_array_equal(one.increments, many.increments)
    monkeypatch.setenv("CCRBSDE_THREADS", "3")
    env = generate_brownian(g, 2, 3000, 3)
    np.testing.assert_array_equal(one.increments, env.increments)


def test_cumulative_and_standardized_states():
    g = build_time_grid(1.0, 10)
    b = generate_brownian(g, 2, 500, 1)
    np.testing.assert_allclose(b.cumulative[:, 1:], np.cumsum(b.increments, axis=1), atol=1e-14)
    assert np.all(b.cumulative[:, 0] == 0)
    np.testing.assert_allclose(b.standardized[:, 3] * np.sqrt(g.nodes[3]), b.cumulative[:, 3])


def test_innovation_decomposition():
    g = build_time_grid(1.0, 5)
    N = 40_000
    b = generate_brownian(g, 1, N, 9)
    for i in (1, 3):
        chi = b.chi(i)
        assert chi == pytest.approx(g.nodes[i] / g.nodes[i + 1])
        x = b.innovations(i)[:, 0]
        w = b.standardized
        np.testing.assert_allclose(np.sqrt(chi) * w[:, i, 0] + np.sqrt(1 - chi) * x,
                                   w[:, i + 1, 0], atol=1e-12)
        se = 1 / np.sqrt(N)
        assert abs(x.mean()) < 3 * se
        assert abs(x.var() - 1) < 3 * np.sqrt(2 / N)
        assert abs(np.mean(x * w[:, i, 0])) < 3 * se


def test_from_increments_shape_check():
    g = build_time_grid(1.0, 3)
    with pytest.raises(InvalidArgumentError):
        BrownianBatch.from_increments(g, np.zeros((5, 4, 1)))
    b = BrownianBatch.from_increments(g, np.zeros((5, 3)))
    assert b.dimension == 1 and b.path_count == 5


def test_euler_deterministic_ode():
    g = build_time_grid(2.0, 7)
    b = generate_brownian(g, 1, 20, 0)
    ens = simulate_euler(linear_model([[0.0]], [0.3], [[0.0]], [1.0]), g, b)
    np.testing.assert_allclose(ens.states[:, -1, 0], 1.0 + 0.3 * 2.0, rtol=1e-14)


def test_euler_single_step_is_increment():
    g = build_time_grid(1.0, 1)
    b = generate_brownian(g, 2, 10, 4)
    ens = simulate_euler(arithmetic_model([0.0, 0.0], np.eye(2), [0.0, 0.0]), g, b)
    np.testing.assert_array_equal(ens.states[:, 1] - ens.states[:, 0], b.increments[:, 0])
    ens = simulate_euler(arithmetic_model([0.0, 0.0], np.eye(2), [0.5, -1.0]), g, b)
    assert np.all(ens.states[:, 0] == [0.5, -1.0])
    np.testing.assert_allclose(ens.states[:, 1] - ens.states[:, 0], b.increments[:, 0], atol=1e-15)


def test_euler_geometric_mean():
    g = build_time_grid(1.0, 250)
    N = 20_000
    b = generate_brownian(g, 1, N, 2016)
    ens = simulate_euler(geometric_model(0.05, 0.2, 1.0), g, b)
    sT = ens.states[:, -1, 0]
    assert abs(sT.mean() - np.exp(0.05)) < 3 * sT.std(ddof=1) / np.sqrt(N)


def test_inputs_are_not_mutated():
    g = build_time_grid(1.0, 4)
    b = generate_brownian(g, 1, 10, 1)
    before = b.increments.copy()
    simulate_euler(geometric_model(0.0, 0.3, 1.0), g, b)
    np.testing.assert_array_equal(before, b.increments)
    assert not b.increments.flags.writeable


def test_weak_error_decreases_with_refinement():
    errs = []
    for m in (10, 100, 1000):
        g = build_time_grid(1.0, m)
        b = generate_brownian(g, 1, 4000, 77)
        ens = simulate_euler(geometric_model(1.0, 0.01, 1.0), g, b)
        errs.append(abs(ens.states[:, -1, 0].mean() - np.e))
    assert errs[0] > errs[1] > errs[2]


def test_non_finite_state_names_path_and_step():
    g = build_time_grid(1.0, 20)
    b = generate_brownian(g, 1, 5, 1)
    model = AssetModel(1, lambda t, s: np.where(t > 0.3, np.inf, 0.0 * s),
                       lambda t, s: np.zeros((s.shape[0], 1, 1)), np.array([10.0]))
    with pytest.raises(NonFiniteStateError) as exc:
        simulate_euler(model, g, b)
    assert exc.value.step == 7 and exc.value.path == 0


def test_milstein_constant_sigma_equals_euler():
    g = build_time_grid(1.0, 16)
    b = generate_brownian(g, 2, 100, 3)
    model = linear_model(-0.5 * np.eye(2), [0.1, 0.0], np.diag([0.3, 0.2]), [1.0, 2.0])
    np.testing.assert_array_equal(simulate_milstein(model, g, b).states,
                                  simulate_euler(model, g, b).states)


def test_milstein_single_step_formula():
    g = build_time_grid(0.5, 1)
    w = np.array([[0.3], [-0.7], [1.1]])
    b = BrownianBatch.from_increments(g, w)
    ens = simulate_milstein(geometric_model(0.0, 1.0, 1.0), g, b)
    np.testing.assert_allclose(ens.states[:, 1, 0], 1 + w[:, 0] + 0.5 * (w[:, 0] ** 2 - 0.5),
                               rtol=1e-14)


def test_milstein_strong_order():
    mu, vol = 0.05, 0.4
    fine = build_time_grid(1.0, 160)
    N = 4000
    bf = generate_brownian(fine, 1, N, 8)
    WT = bf.cumulative[:, -1, 0]
    exact = np.exp((mu - 0.5 * vol**2) + vol * WT)
    model = geometric_model(mu, vol, 1.0)
    e_eu, e_mi = [], []
    for m in (10, 40, 160):
        g = build_time_grid(1.0, m)
        k = 160 // m
        inc = bf.increments.reshape(N, m, k, 1).sum(axis=2)
        b = BrownianBatch.from_increments(g, inc)
        e_eu.append(np.mean(np.abs(simulate_euler(model, g, b).states[:, -1, 0] - exact)))
        e_mi.append(np.mean(np.abs(simulate_milstein(model, g, b).states[:, -1, 0] - exact)))
    # a 4x refinement gains about 4 for Milstein and about 2 for Euler
    assert e_mi[0] / e_mi[1] > 3.0 and e_mi[1] / e_mi[2] > 3.0
    assert 1.5 < e_eu[0] / e_eu[1] < 3.0
    assert all(a < b for a, b in zip(e_mi, e_eu))


def test_milstein_rejects_non_diagonal_noise():
    g = build_time_grid(1.0, 4)
    b = generate_brownian(g, 2, 10, 1)
    model = geometric_model([0.0, 0.0], [0.2, 0.3], [1.0, 1.0], [[1.0, 0.5], [0.5, 1.0]])
    with pytest.raises(UnsupportedModelError):
        simulate_milstein(model, g, b, dsigma=lambda t, s: np.full_like(s, 0.2))
    with pytest.raises(UnsupportedModelError):
        simulate_milstein(model, g, b)
