"""Tests for :mod:`sdq.sdq_engine`"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdq import (
    CurvatureMemory, CurvaturePair, DampingConfig, InitMode, Recursion, OptimizerState,
    DegenerateStepError, InvalidConfigError, InvalidInputError, NumericalFailureError,
    compute_theta, compute_gamma, damp_pair, raw_pair, two_loop, compact_product,
    dense_hessian_reconstruct, normalize_direction, compute_direction,
)

from conftest import random_memory, random_pair


def _one_pair_memory():
    memory = CurvatureMemory(5, dim=2)
    memory.push(CurvaturePair(np.array([1.0, 0.0]), np.array([2.0, 0.0]), 0.5))
    return memory


@pytest.mark.parametrize('s_dot_y, s_dot_hinv_s, theta', [
    (2.0, 1.0, 1.0),
    (-1.0, 1.0, 0.375),
    (0.25, 1.0, 1.0),
])
def test_compute_theta(identity_cfg, s_dot_y, s_dot_hinv_s, theta):
    assert compute_theta(s_dot_y, s_dot_hinv_s, identity_cfg) == pytest.approx(theta, rel=1e-15)


def test_compute_theta_rejects_non_positive_denominator(identity_cfg):
    with pytest.raises(InvalidInputError):
        compute_theta(1.0, 0.0, identity_cfg)


@pytest.mark.parametrize('y, gamma', [
    ((2.0, 0.0), 2.0),
    ((-1.0, 0.0), 0.01),
    ((0.0, 0.0), 0.01),
])
def test_compute_gamma(gamma_cfg, y, gamma):
    assert compute_gamma(np.array([1.0, 0.0]), np.array(y), gamma_cfg) == pytest.approx(gamma)


def test_compute_gamma_zero_step(gamma_cfg):
    with pytest.raises(DegenerateStepError):
        compute_gamma(np.zeros(2), np.ones(2), gamma_cfg)


def test_compute_gamma_beyond_float_range(gamma_cfg):
    assert compute_gamma(np.array([1e-200, 0.0]), np.array([1e200, 0.0]), gamma_cfg) == float('inf')
    # y'y overflows but the ratio itself is representable
    assert compute_gamma(np.array([1.0, 0.0]), np.array([1e200, 0.0]), gamma_cfg) == pytest.approx(1e200)


@pytest.mark.parametrize('s, y, y_bar, rho', [
    ((1.0, 0.0), (2.0, 0.0), (2.0, 0.0), 0.5),
    ((1.0, 0.0), (-1.0, 0.0), (0.25, 0.0), 4.0),
    ((2.0, 0.0), (2.0, 0.0), (2.0, 0.0), 0.25),
])
def test_damp_pair(identity_cfg, s, y, y_bar, rho):
    pair = damp_pair(np.array(s), np.array(y), 1.0, identity_cfg)
    np.testing.assert_allclose(pair.y_bar, y_bar, rtol=1e-14, atol=1e-15)
    assert pair.rho == pytest.approx(rho, rel=1e-12)
    assert float(pair.s @ pair.y_bar) >= 0.25 * float(pair.s @ pair.s) - 1e-12


def test_damp_pair_errors(identity_cfg):
    with pytest.raises(DegenerateStepError):
        damp_pair(np.zeros(2), np.ones(2), 1.0, identity_cfg)
    with pytest.raises(InvalidInputError):
        damp_pair(np.ones(2), np.ones(3), 1.0, identity_cfg)
    with pytest.raises(InvalidInputError):
        damp_pair(np.ones(2), np.ones(2), 0.0, identity_cfg)


def test_damp_pair_skips_products_beyond_float_range(gamma_cfg):
    s = np.array([1e150, 1e150])
    y = np.array([1e150, -1e150 * (1.0 - 2.0**-52)])
    assert damp_pair(s, y, 1e16, gamma_cfg) is None
    assert raw_pair(np.array([1e200, 0.0]), np.array([1e200, 0.0])) is None


def test_compute_direction_keeps_memory_when_gamma_overflows(gamma_cfg):
    state = OptimizerState(
        x=np.array([1e-200, 0.0]), x_prev=np.zeros(2), g_prev=np.zeros(2), k=2,
        memory=CurvatureMemory(100, dim=2), cfg=gamma_cfg,
    )
    direction = compute_direction(state, np.array([1e200, 0.0]), gamma_cfg)
    assert len(state.memory) == 0 and state.memory.h0_scale == 1.0
    np.testing.assert_array_equal(direction, [1e200, 0.0])


def test_damping_guarantee_random_draws(rng, identity_cfg):
    accepted = 0
    for draw in range(1000):
        d = int(rng.integers(1, 11))
        s = rng.standard_normal(d)
        y = rng.standard_normal(d) * rng.uniform(0.1, 10.0)
        if draw % 2 and float(s @ y) > 0:
            y = -y  # force s'y < 0
        hinv_scale = rng.uniform(0.1, 10.0)
        pair = damp_pair(s, y, hinv_scale, identity_cfg)
        if pair is None:
            continue
        accepted += 1
        s_dot_s = float(s @ s)
        assert float(s @ pair.y_bar) >= 0.25 * hinv_scale * s_dot_s - 1e-12
        assert pair.rho > 0
        assert pair.rho == pytest.approx(1.0 / float(s @ pair.y_bar), rel=1e-12)
    assert accepted >= 990


def test_raw_pair_skip_rule():
    assert raw_pair(np.array([1.0, 0.0]), np.array([-1.0, 0.0])) is None
    assert raw_pair(np.array([1.0, 0.0]), np.array([0.0, 1.0])) is None
    pair = raw_pair(np.array([1.0, 0.0]), np.array([2.0, 0.0]))
    assert pair.rho == 0.5


def test_damping_config_validation():
    with pytest.raises(InvalidConfigError):
        DampingConfig(delta=0.0)
    with pytest.raises(InvalidConfigError):
        DampingConfig(damping_threshold=0.8, damping_numerator=0.75)
    with pytest.raises(InvalidConfigError):
        DampingConfig(normalize_floor=-1.0)


def test_memory_evicts_oldest():
    memory = CurvatureMemory(2, dim=1)
    for value in (1.0, 2.0, 3.0):
        memory.push(CurvaturePair(np.array([value]), np.array([1.0]), 1.0 / value))
    assert len(memory) == 2
    assert [p.s[0] for p in memory.pairs()] == [2.0, 3.0]


def test_memory_rejects_other_dimension():
    memory = CurvatureMemory(3, dim=2)
    with pytest.raises(InvalidInputError):
        memory.push(CurvaturePair(np.ones(3), np.ones(3), 1.0 / 3.0))


@given(capacity=st.integers(min_value=1, max_value=12), pushes=st.integers(min_value=0, max_value=40))
def test_memory_bound_property(capacity, pushes):
    memory = CurvatureMemory(capacity)
    for n in range(1, pushes + 1):
        memory.push(CurvaturePair(np.array([float(n), 1.0]), np.array([1.0, 0.0]), 1.0 / n))
    assert len(memory) == min(pushes, capacity)
    kept = [int(p.s[0]) for p in memory.pairs()]
    assert kept == list(range(pushes - len(memory) + 1, pushes + 1))
    S, Y, rho = memory.stacked()
    assert S.shape[0] == len(memory) and rho.shape == (len(memory),)


def test_two_loop_examples():
    empty = CurvatureMemory(5, dim=2)
    np.testing.assert_array_equal(two_loop(empty, np.array([1.0, 1.0]), 1.0), [1.0, 1.0])

    memory = _one_pair_memory()
    np.testing.assert_allclose(two_loop(memory, np.array([1.0, 1.0]), 1.0), [0.5, 1.0], atol=1e-15)
    np.testing.assert_allclose(two_loop(memory, np.array([2.0, 2.0]), 1.0), [1.0, 2.0], atol=1e-15)


def test_two_loop_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        two_loop(_one_pair_memory(), np.ones(3), 1.0)


def test_dense_reconstruction_examples():
    np.testing.assert_array_equal(dense_hessian_reconstruct(CurvatureMemory(3), 1.0, dim=2), np.eye(2))
    np.testing.assert_allclose(dense_hessian_reconstruct(_one_pair_memory(), 1.0),
                               [[0.5, 0.0], [0.0, 1.0]], atol=1e-15)


def test_two_loop_matches_dense_reconstruction(rng, identity_cfg):
    for _ in range(200):
        memory = random_memory(rng, identity_cfg)
        h0 = rng.uniform(0.1, 10.0)
        g = rng.standard_normal(memory.dim) * rng.uniform(0.1, 10.0)
        expected = dense_hessian_reconstruct(memory, h0) @ g
        error = np.linalg.norm(two_loop(memory, g, h0) - expected)
        assert error <= 1e-10 * (1.0 + np.linalg.norm(g))


def test_compact_product_matches_two_loop(rng, identity_cfg):
    for _ in range(100):
        memory = random_memory(rng, identity_cfg)
        h0 = rng.uniform(0.1, 10.0)
        g = rng.standard_normal(memory.dim)
        error = np.linalg.norm(compact_product(memory, g, h0) - two_loop(memory, g, h0))
        assert error <= 1e-10 * (1.0 + np.linalg.norm(g))


def test_compact_product_after_wraparound(rng, identity_cfg):
    memory = CurvatureMemory(3, dim=4)
    pushed = 0
    while pushed < 7:
        pair = random_pair(rng, 4, 1.0, identity_cfg, undamped=True)
        if pair is not None:
            memory.push(pair)
            pushed += 1
    assert memory.slots() == [1, 2, 0]
    g = rng.standard_normal(4)
    np.testing.assert_allclose(compact_product(memory, g, 0.7), two_loop(memory, g, 0.7), atol=1e-10)


def test_dense_reconstruction_positive_definite(rng, identity_cfg):
    for _ in range(100):
        memory = random_memory(rng, identity_cfg)
        H = dense_hessian_reconstruct(memory, rng.uniform(0.1, 10.0))
        np.testing.assert_allclose(H, H.T, atol=1e-10 * (1.0 + np.abs(H).max()))
        z = rng.standard_normal((100, memory.dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        assert np.all(np.einsum('ij,jk,ik->i', z, H, z) > 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1),
       scale=st.floats(min_value=-1e3, max_value=1e3, allow_nan=False).filter(lambda a: abs(a) > 1e-3))
def test_two_loop_is_linear_in_g(seed, scale):
    rng = np.random.default_rng(seed)
    memory = random_memory(rng, DampingConfig())
    g = rng.standard_normal(memory.dim)
    base = two_loop(memory, g, 1.0)
    scaled = two_loop(memory, scale * g, 1.0)
    np.testing.assert_allclose(scaled, scale * base, rtol=1e-12,
                               atol=1e-12 * abs(scale) * (1.0 + np.linalg.norm(base)))


@pytest.mark.parametrize('v, expected', [
    ((3.0, 4.0), (0.6, 0.8)),
    ((5.0, 0.0), (1.0, 0.0)),
])
def test_normalize_direction(v, expected):
    np.testing.assert_allclose(normalize_direction(np.array(v), 1e-10), expected, rtol=1e-15)


def test_normalize_direction_converged_and_nonfinite():
    assert normalize_direction(np.zeros(2), 1e-10) is None
    with pytest.raises(NumericalFailureError):
        normalize_direction(np.array([np.nan, 1.0]))


def test_compute_direction_first_iteration(identity_cfg):
    state = OptimizerState(x=np.array([3.0, 4.0]), memory=CurvatureMemory(100, dim=2), cfg=identity_cfg)
    np.testing.assert_allclose(compute_direction(state, np.array([3.0, 4.0]), identity_cfg), [0.6, 0.8])
    assert compute_direction(state, np.zeros(2), identity_cfg) is None
    assert len(state.memory) == 0


def test_compute_direction_second_iteration(identity_cfg):
    state = OptimizerState(
        x=np.array([1.0, 0.0]), x_prev=np.array([0.0, 0.0]),
        g_prev=np.array([-1.0, 1.0]), k=2,
        memory=CurvatureMemory(100, dim=2), cfg=identity_cfg,
    )
    direction = compute_direction(state, np.array([1.0, 1.0]), identity_cfg)
    np.testing.assert_allclose(direction, np.array([0.5, 1.0]) / np.sqrt(1.25), rtol=1e-14)
    assert len(state.memory) == 1


def test_compute_direction_zero_displacement_skips_pair(identity_cfg):
    state = OptimizerState(
        x=np.array([1.0, 2.0]), x_prev=np.array([1.0, 2.0]),
        g_prev=np.array([0.5, 0.5]), k=2,
        memory=CurvatureMemory(10, dim=2), cfg=identity_cfg,
    )
    compute_direction(state, np.array([1.0, 1.0]), identity_cfg)
    assert len(state.memory) == 0


def test_compute_direction_gamma_mode_is_unnormalized(gamma_cfg):
    state = OptimizerState(x=np.array([3.0, 4.0]), memory=CurvatureMemory(100, dim=2), cfg=gamma_cfg)
    np.testing.assert_array_equal(compute_direction(state, np.array([3.0, 4.0]), gamma_cfg), [3.0, 4.0])


def test_compute_direction_gamma_mode_sets_h0_scale(gamma_cfg):
    state = OptimizerState(
        x=np.array([1.0, 0.0]), x_prev=np.array([0.0, 0.0]),
        g_prev=np.array([-1.0, 1.0]), k=2,
        memory=CurvatureMemory(100, dim=2), cfg=gamma_cfg,
    )
    compute_direction(state, np.array([1.0, 1.0]), gamma_cfg)
    assert state.memory.h0_scale == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1),
       recursion=st.sampled_from(list(Recursion)))
def test_identity_mode_directions_have_unit_norm(seed, recursion):
    rng = np.random.default_rng(seed)
    cfg = DampingConfig(mode=InitMode.IDENTITY, recursion=recursion)
    memory = random_memory(rng, cfg)
    state = OptimizerState(x=np.zeros(memory.dim), memory=memory, cfg=cfg)
    g = rng.standard_normal(memory.dim)
    direction = compute_direction(state, g, cfg)
    assert direction is None or abs(np.linalg.norm(direction) - 1.0) <= 1e-12


@given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1, max_size=10)
       .filter(lambda v: np.linalg.norm(v) >= 1e-10))
def test_empty_memory_direction_is_normalized_gradient(values):
    g = np.array(values)
    cfg = DampingConfig()
    state = OptimizerState(x=np.zeros_like(g), memory=CurvatureMemory(5, dim=g.shape[0]), cfg=cfg)
    np.testing.assert_array_equal(compute_direction(state, g, cfg), g / np.linalg.norm(g))
