import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state, scalar_topology
from learnadapt.dual import (
    DualProblem,
    RegularizedDual,
    batch_dual_gradients,
    dual_gradient,
    dual_value,
    lagrangian,
    oracle_primal_minimizer,
    primal_minimizer,
)
from learnadapt.network import Allocation, StateSample, build_incidence, instantaneous_cost
from learnadapt.scenario import SampleStream, StateBatch, default_config_small, draw_topology, generate_batch

seeds = st.integers(0, 2**32 - 1)


def _scalar_argmin(c, lin, hi):
    # minimize c x^2 + lin x on [0, hi] by dense search then local refinement
    grid = np.linspace(0.0, hi, 200_001)
    x = grid[np.argmin(c * grid**2 + lin * grid)]
    lo_, hi_ = max(0.0, x - hi / 2e5), min(hi, x + hi / 2e5)
    for _ in range(100):
        m1, m2 = lo_ + (hi_ - lo_) / 3, hi_ - (hi_ - lo_) / 3
        if c * m1**2 + lin * m1 <= c * m2**2 + lin * m2:
            hi_ = m2
        else:
            lo_ = m1
    return 0.5 * (lo_ + hi_)


def test_routed_scalar_example():
    topo = scalar_topology(c=0.5, B=10.0)
    a = primal_minimizer([3.0, 1.0], StateSample([10.0], [0.0], [1.0]), topo)
    assert a.routed[0, 0] == pytest.approx(2.0)
    assert a.routed[0, 0] == pytest.approx(_scalar_argmin(0.5, 1.0 - 3.0, 10.0), abs=1e-6)


def test_processing_examples():
    topo = scalar_topology(alpha_e=1.2, D=100.0)
    s = StateSample([10.0], [0.0], [1.0])
    assert primal_minimizer([0.0, 0.0], s, topo).processed[0] == 0.0
    # unclipped 4800 / (2*10*1.2) = 200, capped at D = 100
    assert primal_minimizer([0.0, 4800.0], s, topo).processed[0] == 100.0
    assert primal_minimizer([0.0, 2400.0], s, topo).processed[0] == pytest.approx(100.0)


def test_lagrangian_identities(small_topo):
    rng = np.random.default_rng(0)
    A = build_incidence(small_topo)
    s = random_state(rng, small_topo)
    a = primal_minimizer(rng.uniform(0, 500, 8), s, small_topo)
    assert lagrangian(a, np.zeros(8), s, small_topo, A) == pytest.approx(instantaneous_cost(a, s, small_topo))
    lam = rng.uniform(0, 50, 8)
    zero = Allocation.zeros(small_topo)
    c = np.concatenate([s.arrivals, np.zeros(4)])
    assert lagrangian(zero, lam, s, small_topo, A) == pytest.approx(instantaneous_cost(zero, s, small_topo) + lam @ c)


def test_minimizer_dominates_random_feasible_points(small_topo):
    rng = np.random.default_rng(1)
    A = build_incidence(small_topo)
    s = random_state(rng, small_topo)
    lam = rng.uniform(0, 3000, 8)
    best = lagrangian(primal_minimizer(lam, s, small_topo), lam, s, small_topo, A)
    for _ in range(100):
        x = rng.uniform(0, 1, small_topo.num_vars) * small_topo.upper
        assert best <= lagrangian(Allocation.from_vector(x, small_topo), lam, s, small_topo, A) + 1e-9


def test_dual_at_zero(small_topo):
    rng = np.random.default_rng(2)
    A = build_incidence(small_topo)
    s = random_state(rng, small_topo)
    assert dual_value(np.zeros(8), s, small_topo, A) == pytest.approx(-np.sum(s.price * s.renewable))
    np.testing.assert_array_equal(dual_gradient(np.zeros(8), s, small_topo, A), np.concatenate([s.arrivals, np.zeros(4)]))


def test_regularizer_shifts(small_topo):
    rng = np.random.default_rng(3)
    A = build_incidence(small_topo)
    s = random_state(rng, small_topo)
    lam = rng.uniform(0, 1000, 8)
    reg = RegularizedDual(0.3)
    expected = dual_value(lam, s, small_topo, A) - 0.15 * lam @ lam
    assert dual_value(lam, s, small_topo, A, reg) == pytest.approx(expected, rel=1e-14)
    ones = np.ones(8)
    np.testing.assert_array_equal(
        dual_gradient(ones, s, small_topo, A, RegularizedDual(1.0)), dual_gradient(ones, s, small_topo, A) - 1.0
    )


def test_negative_epsilon_rejected():
    with pytest.raises(ValueError):
        RegularizedDual(-0.1)


def test_oracle_zero_multiplier(small_topo):
    s = random_state(np.random.default_rng(4), small_topo)
    a = oracle_primal_minimizer(np.zeros(8), s, small_topo, build_incidence(small_topo))
    np.testing.assert_allclose(a.flatten(), 0.0, atol=1e-12)


def test_oracle_interior_stationarity():
    topo = scalar_topology(alpha_e=1.2, c=0.5, B=1000.0, D=1000.0)
    A = build_incidence(topo)
    s = StateSample([10.0], [0.0], [1.0])
    lam = np.array([300.0, 100.0])
    x = oracle_primal_minimizer(lam, s, topo, A).flatten()
    assert 0 < x[0] < 1000 and 0 < x[1] < 1000
    grad = np.array([2 * 0.5 * x[0], 2 * 10 * 1.2 * x[1]]) + A.T @ lam
    np.testing.assert_allclose(grad, 0.0, atol=1e-6)


def test_batch_gradients_match_loop(sparse_topo):
    problem = DualProblem(sparse_topo, RegularizedDual(0.1))
    rng = np.random.default_rng(5)
    batch = generate_batch(SampleStream(default_config_small(), seed=1), 3)
    batch = StateBatch(batch.price[:, :2], batch.renewable[:, :2], batch.arrivals[:, :3])
    lam = rng.uniform(0, 800, 5)
    stacked = batch_dual_gradients(lam, batch, sparse_topo, problem.reg)
    for n, s in enumerate(batch):
        np.testing.assert_allclose(stacked[n], problem.gradient(lam, s), rtol=0, atol=1e-10)


@settings(max_examples=50)
@given(seeds)
def test_primal_in_box(seed):
    rng = np.random.default_rng(seed)
    topo = draw_topology(default_config_small(), rng)
    s = random_state(rng, topo)
    a = primal_minimizer(rng.uniform(0, 8000, 8), s, topo)
    assert a.is_feasible(topo)


@settings(max_examples=50)
@given(seeds)
def test_weak_duality(seed):
    rng = np.random.default_rng(seed)
    topo = scalar_topology(c=rng.uniform(0.4, 4), B=rng.uniform(10, 100))
    A = build_incidence(topo)
    s = StateSample(rng.uniform(10, 30, 1), rng.uniform(10, 50, 1), rng.uniform(10, 150, 1))
    lam = rng.uniform(0, 3000, 2)
    x = rng.uniform(0, 1, 2) * topo.upper
    assert dual_value(lam, s, topo, A) <= lagrangian(Allocation.from_vector(x, topo), lam, s, topo, A) + 1e-9


@settings(max_examples=50)
@given(seeds, st.integers(0, 7), st.floats(0.0, 500.0))
def test_monotone_clipping(seed, node, bump):
    rng = np.random.default_rng(seed)
    topo = draw_topology(default_config_small(), rng)
    s = random_state(rng, topo)
    lam = rng.uniform(0, 3000, 8)
    up = lam.copy()
    up[node] += bump
    a, b = primal_minimizer(lam, s, topo), primal_minimizer(up, s, topo)
    if node >= 4:
        assert b.processed[node - 4] >= a.processed[node - 4]
    else:
        assert np.all(b.routed[node] >= a.routed[node])


@settings(max_examples=50)
@given(seeds, st.floats(0.0, 1.0), st.sampled_from([0.0, 0.1, 1.0]))
def test_strong_concavity(seed, theta, eps):
    rng = np.random.default_rng(seed)
    topo = draw_topology(default_config_small(), rng)
    A = build_incidence(topo)
    s = random_state(rng, topo)
    reg = RegularizedDual(eps)
    l1, l2 = rng.uniform(0, 4000, (2, 8))
    D = lambda lam: dual_value(lam, s, topo, A, reg)
    mid = D(theta * l1 + (1 - theta) * l2)
    rhs = theta * D(l1) + (1 - theta) * D(l2) + 0.5 * eps * theta * (1 - theta) * np.sum((l1 - l2) ** 2)
    assert mid >= rhs - 1e-9 * max(1.0, abs(rhs))


def test_problem_smoothness(small_topo):
    sigma, L, kappa = DualProblem(small_topo, RegularizedDual(0.1)).smoothness(10.0)
    _, L0, k0 = DualProblem(small_topo).smoothness(10.0)
    assert L == pytest.approx(L0 + 0.1)
    assert kappa == pytest.approx(L / 0.1)
    assert k0 == float("inf")
    coefs = np.concatenate([10.0 * small_topo.efficiency, small_topo.dist_cost.ravel()])
    assert sigma == pytest.approx(2 * coefs.min())
