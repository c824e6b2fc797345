import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from simam2.energy import (
    ZetaState,
    channel_stats,
    closed_form_minimizer,
    correlation_proxy,
    energy_at,
    excess_energy,
    minimal_energy_map,
    mutual_energy,
    simam2_apply,
    simam_unimodal,
    superpose,
    zeta_forward,
)
from simam2.gradcheck import check_gradients
from simam2.rng import stream
from simam2.tensor import DegenerateInputError, ShapeError, Tensor

from oracles import direct_energy

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


# ------------------------------------------------------------------ closed form

def test_minimizer_zero_at_mean():
    w, b = closed_form_minimizer(2.0, [1.0, 3.0])
    assert w == 0.0 and b == 0.0


def test_minimizer_beats_grid_on_spec_channel():
    t, others = 1.0, [0.0, 0.0, 0.0, 0.0]
    w, b = closed_form_minimizer(t, others)
    best = energy_at(t, others, w, b)
    grid = np.linspace(-5, 5, 401)
    ww, bb = np.meshgrid(grid, grid)
    x = np.array(others)
    e_grid = ((-1 - (ww[..., None] * x + bb[..., None])) ** 2).mean(-1) + (1 - (ww * t + bb)) ** 2
    assert best <= e_grid.min() + 1e-9


def test_minimizer_is_local_minimum():
    rng = np.random.default_rng(0)
    x = rng.normal(size=9)
    w, b = closed_form_minimizer(x[0], x[1:], lam=0.1)
    e0 = energy_at(x[0], x[1:], w, b, lam=0.1)
    for dw in (-1e-3, 0, 1e-3):
        for db in (-1e-3, 0, 1e-3):
            assert e0 <= energy_at(x[0], x[1:], w + dw, b + db, lam=0.1) + 1e-15


def test_minimizer_degenerate_channel():
    with pytest.raises(DegenerateInputError):
        closed_form_minimizer(1.0, [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        closed_form_minimizer(1.0, [])


def test_energy_at_examples():
    assert energy_at(0.3, [1.0, -2.0, 4.0], 0.0, 0.0) == pytest.approx(2.0)
    assert energy_at(1.0, [-1.0], 1.0, 0.0) == 0.0


# ------------------------------------------------------------------ energy map

def test_energy_map_spec_channel():
    e = minimal_energy_map(np.array([[1.0, 0, 0, 0, 0]]), 0.0).values.data
    assert e[0, 0] == pytest.approx(0.64 / 0.96, abs=1e-14)
    assert e[0, 1] == pytest.approx(0.64 / 0.36, abs=1e-14)


def test_energy_map_constant_channel():
    e = minimal_energy_map(np.full((2, 3, 4), 5.0), 1e-6).values.data
    np.testing.assert_allclose(e, 2.0, rtol=1e-12)
    with pytest.raises(DegenerateInputError):
        minimal_energy_map(np.full((1, 4), 5.0), 0.0)


def test_energy_map_needs_two_neurons():
    with pytest.raises(ShapeError):
        minimal_energy_map(np.ones((3, 4, 1, 1)))


def test_energy_map_per_channel_statistics():
    x = np.random.default_rng(1).normal(size=(2, 3, 4, 5))
    e = minimal_energy_map(x, 1e-3).values.data
    for n in range(2):
        for c in range(3):
            want = direct_energy(list(x[n, c].ravel()), 1e-3)
            np.testing.assert_allclose(e[n, c].ravel(), want, rtol=0, atol=1e-12)


def test_channel_stats_population_variance():
    x = np.random.default_rng(2).normal(size=(3, 10))
    stats = channel_stats(x)
    np.testing.assert_allclose(stats.sigma_hat2, x.var(axis=1))
    np.testing.assert_allclose(stats.mu_hat, x.mean(axis=1))


def test_energy_decreases_with_distance_from_mean():
    row = np.array([[0.0, 1.0, 2.0, 3.0, 10.0]])
    e = minimal_energy_map(row, 0.0).values.data[0]
    dist = np.abs(row[0] - row[0].mean())
    order = np.argsort(dist)
    assert np.all(np.diff(e[order]) < 0)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (2, 6), elements=finite), st.floats(1e-6, 1.0))
def test_energy_map_matches_direct_formula(x, lam):
    e = minimal_energy_map(x, lam).values.data
    want = np.array([direct_energy(list(row), lam) for row in x])
    np.testing.assert_allclose(e, want, rtol=1e-12, atol=1e-12)


def test_energy_map_gradient():
    x = np.random.default_rng(3).normal(size=(2, 2, 3))
    (err,) = check_gradients(lambda a: minimal_energy_map(a, 1e-2).values.sum(), [x])
    assert err < 1e-4


# ------------------------------------------------------------------ unimodal

def test_unimodal_constant_channel_scale():
    x = np.full((1, 2, 3), 4.0)
    out = simam_unimodal(x, 1e-6).data
    np.testing.assert_allclose(out, 4.0 / (1 + math.exp(-0.5)))


# ------------------------------------------------------------------ gate

def make_state(c=4, seed=0, out_scale=1.0):
    state = ZetaState.init(c, stream(seed, "gate"))
    rng = np.random.default_rng(seed + 100)
    state.set_params({**{k: v.data for k, v in state.params().items()},
                      "w_out": rng.normal(0, out_scale, (c, c)), "b_out": rng.normal(0, 0.1, c)})
    return state


def test_gate_zero_output_gives_half():
    state = ZetaState.init(3, stream(0, "gate"))
    z = zeta_forward(np.ones((2, 3)), np.zeros((2, 3)), state).data
    np.testing.assert_array_equal(z, 0.5)


def test_gate_range_and_mirror_symmetry():
    c = 4
    state = make_state(c, out_scale=3.0)
    x1 = np.random.default_rng(5).normal(size=(6, c, 3))
    x2 = np.random.default_rng(6).normal(size=(6, c, 3))
    z = zeta_forward(x1, x2, state).data
    assert np.all((z > 0) & (z < 1))
    p = {k: v.data for k, v in state.params().items()}
    mirrored = ZetaState.init(c, stream(0, "gate"))
    mirrored.set_params({"w_hidden": np.vstack([p["w_hidden"][c:], p["w_hidden"][:c]]),
                         "b_hidden": p["b_hidden"], "w_out": -p["w_out"], "b_out": -p["b_out"]})
    z_swap = zeta_forward(x2, x1, mirrored).data
    np.testing.assert_allclose(z_swap, 1.0 - z, atol=1e-15)


def test_gate_shape_mismatch():
    state = ZetaState.init(3, stream(0, "gate"))
    with pytest.raises(ShapeError):
        zeta_forward(np.ones((2, 3)), np.ones((2, 4)), state)


def test_superpose_examples_and_symmetry():
    np.testing.assert_array_equal(superpose([[2.0, 0.0]], [[0.0, 2.0]], [[0.5, 0.5]]).data, [[1.0, 1.0]])
    x1 = np.random.default_rng(0).normal(size=(3, 2, 4))
    x2 = np.random.default_rng(1).normal(size=(3, 2, 4))
    z = np.random.default_rng(2).uniform(size=(3, 2))
    np.testing.assert_array_equal(superpose(x1, x2, np.ones((3, 2))).data, x1)
    np.testing.assert_allclose(superpose(x1, x2, z).data, superpose(x2, x1, 1 - z).data, atol=1e-15)


# ------------------------------------------------------------------ correlation proxy

def test_proxy_first_batch_is_tanh1_at_s1():
    state = ZetaState.init(3, stream(0, "gate"))
    z = np.random.default_rng(0).uniform(size=(8, 3))
    assert correlation_proxy(z, state, s=1.0) == pytest.approx(math.tanh(1.0), abs=1e-12)
    np.testing.assert_allclose(state.var_max, z.var(axis=0))


def test_proxy_constant_zeta():
    state = ZetaState.init(3, stream(0, "gate"))
    assert correlation_proxy(np.full((4, 3), 0.3), state) == pytest.approx(math.tanh(1.0))


def test_proxy_small_current_variance_goes_to_zero():
    state = ZetaState.init(2, stream(0, "gate"))
    state.var_max = np.array([0.2, 0.2])
    r = correlation_proxy(np.full((4, 2), 0.5), state, s=2.5, lam=1e-9)
    assert 0 < r < 1e-6


def test_proxy_errors():
    state = ZetaState.init(2, stream(0, "gate"))
    with pytest.raises(ValueError):
        correlation_proxy(np.ones((1, 2)) * 0.5, state)
    with pytest.raises(ValueError):
        correlation_proxy(np.ones((3, 2)) * 0.5, state, s=0.0)


# ------------------------------------------------------------------ excess / mutual energy

def fused_maps(x1, x2, z, lam=1e-6):
    u = superpose(x1, x2, z)
    return u, minimal_energy_map(u, lam), minimal_energy_map(x1, 0.0), minimal_energy_map(x2, 0.0)


def test_excess_energy_r1_and_identical_modalities():
    x = np.random.default_rng(0).normal(size=(2, 3, 5))
    z = np.full((2, 3), 0.5)
    u, e_u, e_1, e_2 = fused_maps(x, x, z)
    e_star = excess_energy(e_u, e_1, e_2, z, 1.0).data
    np.testing.assert_allclose(e_star, e_u.values.data - 0.5 * e_1.values.data, atol=1e-14)


def test_excess_energy_swap_symmetry():
    rng = np.random.default_rng(1)
    x1, x2 = rng.normal(size=(2, 3, 5)), rng.normal(size=(2, 3, 5))
    z = rng.uniform(0.05, 0.95, size=(2, 3))
    _, e_u, e_1, e_2 = fused_maps(x1, x2, z)
    _, f_u, f_1, f_2 = fused_maps(x2, x1, 1 - z)
    a = excess_energy(e_u, e_1, e_2, z, 0.7).data
    b = excess_energy(f_u, f_2, f_1, 1 - z, 0.7).data
    b_swapped = excess_energy(f_u, f_1, f_2, 1 - z, 0.7).data
    np.testing.assert_allclose(a, b_swapped, atol=1e-12)
    assert not np.allclose(a, b)


def test_excess_energy_rejects_regularised_unimodal_maps():
    x = np.random.default_rng(0).normal(size=(2, 4))
    e = minimal_energy_map(x, 1e-6)
    with pytest.raises(ValueError):
        excess_energy(e, e, e, np.full((2, 4), 0.5), 0.5)


def test_simam2_apply_limits():
    u = np.array([[1.0, -2.0, 3.0]])
    np.testing.assert_array_equal(simam2_apply(u, np.zeros((1, 3))).data, 0.5 * u)
    np.testing.assert_allclose(simam2_apply(u, np.full((1, 3), 50.0)).data, u)
    np.testing.assert_allclose(simam2_apply(u, np.full((1, 3), -50.0)).data, 0.0, atol=1e-20)
    with pytest.raises(ShapeError):
        simam2_apply(u, np.zeros((1, 2)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (2, 5), elements=finite), arrays(np.float64, (2, 5), elements=finite),
       st.floats(-30, 30))
def test_attenuation_property(u, e, shift):
    out = simam2_apply(u, e + shift).data
    assert np.all(np.abs(out) <= np.abs(u))


def test_mutual_energy_examples():
    x = np.random.default_rng(2).normal(size=(3, 6))
    z = np.random.default_rng(3).uniform(0.1, 0.9, size=(3, 6))
    _, e_u, e_1, e_2 = fused_maps(x, x, z, lam=0.0)
    np.testing.assert_allclose(mutual_energy(e_u, e_1, e_2, z).data, e_1.values.data, rtol=1e-12)
    half = np.full((3, 6), 0.5)
    y = np.random.default_rng(4).normal(size=(3, 6))
    _, e_u, e_1, e_2 = fused_maps(x, y, half)
    want = (e_u.values.data - 0.25 * e_1.values.data - 0.25 * e_2.values.data) / 0.5
    np.testing.assert_allclose(mutual_energy(e_u, e_1, e_2, half).data, want, rtol=1e-13)
    with pytest.raises(DegenerateInputError):
        mutual_energy(e_u, e_1, e_2, np.ones((3, 6)))


def test_full_block_gradient():
    c = 3
    rng = np.random.default_rng(9)
    x1, x2 = rng.normal(size=(4, c, 3)), rng.normal(size=(4, c, 3))
    readout = rng.normal(size=(4, c, 3))
    state = make_state(c, seed=1)
    names = ZetaState.PARAM_NAMES
    params = [state.params()[n].data for n in names]

    def loss(a, b, *gate):
        for n, g in zip(names, gate):  # leaf tensors, so gradients reach them
            setattr(state, n, g)
        z = zeta_forward(a, b, state)
        u = superpose(a, b, z)
        e_star = excess_energy(minimal_energy_map(u), minimal_energy_map(a, 0.0),
                               minimal_energy_map(b, 0.0), z, 0.8)
        return (simam2_apply(u, e_star) * Tensor(readout)).sum()

    errs = check_gradients(loss, [x1, x2, *params])
    assert max(errs) < 1e-4


def test_constant_channel_limit():
    x = np.zeros((2, 2, 3))
    x[:, 0] = np.random.default_rng(0).normal(size=(2, 3))
    e = minimal_energy_map(x, 0.0, constant_limit=True).values.data
    np.testing.assert_array_equal(e[:, 1], 2.0)
    np.testing.assert_allclose(e[:, 0], minimal_energy_map(x[:, :1], 0.0).values.data[:, 0])
    np.testing.assert_allclose(minimal_energy_map(np.full((1, 1, 4), 3.0), 1e-9).values.data, 2.0)
