import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biped_imitation.nn import (
    AdamState, NetworkParams, NetworkSpec, NumericError, ShapeError, _forward_trace, adam_step, backward,
    copy_params, forward, forward_backward, init_network, mse_loss)

from oracles import finite_difference, naive_forward


def _params(spec, arrays):
    return NetworkParams(spec, tuple(np.asarray(a, dtype=np.float64) for a in arrays))


def test_default_spec():
    spec = NetworkSpec()
    assert spec.sizes == (28, 768, 768, 768, 25)
    assert spec.hidden_activations == ("relu",) * 3


def test_parameter_count_closed_form():
    # 28*768 + 768 + 2*(768*768 + 768) + 768*25 + 25
    closed = 28 * 768 + 768 + 2 * (768 * 768 + 768) + 768 * 25 + 25
    assert closed == 1_222_681
    assert NetworkSpec().param_count() == closed


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=2, max_size=5), st.sampled_from(["dense", "conv1d"]),
       st.integers(1, 4))
def test_parameter_count_matches_arrays(sizes, variant, ch):
    spec = NetworkSpec(tuple(sizes), "tanh", variant, ch)
    p = init_network(spec, 0)
    assert sum(a.size for a in p.arrays) == spec.param_count()
    assert [a.shape for a in p.arrays] == spec.shapes()


def test_spec_validation():
    for bad in [dict(sizes=(3,)), dict(sizes=(3, 0, 2)), dict(variant="lstm"),
                dict(sizes=(3, 4, 2), activation="sigmoid"), dict(sizes=(3, 4, 2), activation=("relu", "tanh"))]:
        with pytest.raises(ShapeError):
            NetworkSpec(**bad)


def test_spec_dict_round_trip():
    spec = NetworkSpec((5, 4, 3, 2), ("tanh", "relu"), "conv1d", 2)
    assert NetworkSpec.from_dict(spec.to_dict()) == spec


def test_init_deterministic_and_seeded():
    spec = NetworkSpec((6, 8, 3))
    a, b, c = init_network(spec, 5), init_network(spec, 5), init_network(spec, 6)
    assert a.equals(b)
    assert not a.equals(c)
    assert all(np.all(x == 0) for x in a.arrays[1::2])


def test_init_scale():
    spec = NetworkSpec((100, 200, 50), "relu")
    p = init_network(spec, 0)
    assert np.abs(p.arrays[0]).max() <= np.sqrt(6 / 100)
    assert np.abs(p.arrays[2]).max() <= np.sqrt(6 / 250)


def test_zero_weights_output_bias():
    spec = NetworkSpec((3, 4, 2))
    p = _params(spec, [np.zeros((3, 4)), np.zeros(4), np.zeros((4, 2)), [0.5, -1.5]])
    np.testing.assert_array_equal(forward(p, [1.0, 2.0, 3.0]), [0.5, -1.5])


def test_identity_layer():
    p = _params(NetworkSpec((3, 3)), [np.eye(3), np.zeros(3)])
    np.testing.assert_array_equal(forward(p, [1.0, -2.0, 3.5]), [1.0, -2.0, 3.5])


def test_scalar_linear():
    p = _params(NetworkSpec((1, 1)), [[[2.0]], [0.5]])
    assert forward(p, [1.0])[0] == 2.5


def test_shape_error():
    p = init_network(NetworkSpec((3, 2)), 0)
    with pytest.raises(ShapeError):
        forward(p, [1.0, 2.0])


def test_forward_matches_naive_loops():
    rng = np.random.default_rng(0)
    for variant in ("dense", "conv1d"):
        spec = NetworkSpec((5, 6, 4, 3), ("tanh", "relu"), variant, 2)
        p = init_network(spec, 1)
        x = rng.normal(size=5)
        conv = None
        arrays = [a.tolist() for a in p.arrays]
        if variant == "conv1d":
            conv, arrays = (arrays[0], arrays[1]), arrays[2:]
        layers = list(zip(arrays[::2], arrays[1::2]))
        np.testing.assert_allclose(forward(p, x), naive_forward(layers, x.tolist(), ("tanh", "relu"), conv),
                                   atol=1e-12)


def test_forward_pure_and_batched():
    spec = NetworkSpec((4, 5, 2), "tanh")
    p = init_network(spec, 3)
    before = p.flat().copy()
    x = np.random.default_rng(1).normal(size=(7, 4))
    out = forward(p, x)
    np.testing.assert_array_equal(p.flat(), before)
    np.testing.assert_allclose(out[2], forward(p, x[2]), atol=1e-15)


def test_backward_zero_grad():
    p = init_network(NetworkSpec((3, 4, 2), "tanh"), 0)
    assert all(np.all(g == 0) for g in backward(p, [1.0, 2.0, 3.0], [0.0, 0.0]))


def test_backward_linear_base_case():
    p = _params(NetworkSpec((1, 1)), [[[1.7]], [0.2]])
    gw, gb = backward(p, [3.0], [0.5])
    assert gw[0, 0] == pytest.approx(1.5)
    assert gb[0] == pytest.approx(0.5)


def _near_kink(p, x, margin=1e-3):
    """True when some relu input sits so close to 0 that finite differences straddle it."""
    _, trace = _forward_trace(p, x)
    acts = p.spec.hidden_activations
    return any(a == "relu" and np.abs(z).min() < margin for a, (_, z, _) in zip(acts, trace["dense"]))


def gradient_case(spec, seed, batch=3):
    """Random parameters (non-zero biases) and inputs away from relu kinks."""
    rng = np.random.default_rng(seed)
    while True:
        p = init_network(spec, int(rng.integers(2**31)))
        p = _params(spec, [a if a.ndim > 1 else rng.uniform(-0.5, 0.5, a.shape) for a in p.arrays])
        x = rng.normal(size=(batch, spec.input_dim))
        if not _near_kink(p, x):
            return p, x, rng


def max_rel_error(spec, seed, batch=3):
    p, x, rng = gradient_case(spec, seed, batch)
    g = rng.normal(size=(batch, spec.output_dim))
    analytic = backward(p, x, g)
    work = [a.copy() for a in p.arrays]
    f = lambda: float(np.sum(forward(_params(spec, work), x) * g))
    numeric = finite_difference(f, work)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
        worst = max(worst, float(rel.max()))
    return worst


def test_gradient_small_tanh():
    assert max_rel_error(NetworkSpec((3, 5, 2), "tanh"), 0) < 1e-4


@pytest.mark.parametrize("variant,act", [("dense", "relu"), ("dense", "tanh"), ("conv1d", "tanh"),
                                         ("conv1d", "relu")])
def test_gradient_families(variant, act):
    for seed in range(3):
        spec = NetworkSpec((4, 6, 5, 3), act, variant, 3)
        assert max_rel_error(spec, seed) < 1e-4


def test_mse_loss_examples():
    loss, g = mse_loss([3.0], [1.0])
    assert loss == 4.0 and g.tolist() == [4.0]
    loss, g = mse_loss([1.0, 2.0], [0.0, 0.0])
    assert loss == 2.5 and g.tolist() == [1.0, 2.0]
    loss, g = mse_loss([1.0, 2.0], [1.0, 2.0])
    assert loss == 0 and not g.any()
    with pytest.raises(ShapeError):
        mse_loss([1.0], [1.0, 2.0])


def test_forward_backward_matches_backward():
    spec = NetworkSpec((3, 4, 2), "tanh")
    p = init_network(spec, 0)
    x = np.ones((2, 3))
    t = np.zeros((2, 2))
    loss, grads = forward_backward(p, x, lambda out: mse_loss(out, t))
    _, g_out = mse_loss(forward(p, x), t)
    for a, b in zip(grads, backward(p, x, g_out)):
        np.testing.assert_allclose(a, b)


def test_adam_zero_gradient_keeps_params():
    p = init_network(NetworkSpec((3, 4, 2)), 0)
    p2, s2 = adam_step(p, [np.zeros_like(a) for a in p.arrays], AdamState.zeros(p))
    assert p2.equals(p) and s2.t == 1


def test_adam_first_step_is_sign():
    p = _params(NetworkSpec((2, 1)), [[[1.0], [1.0]], [0.0]])
    g = [np.array([[3.0], [-0.2]]), np.array([5.0])]
    p2, _ = adam_step(p, g, AdamState.zeros(p, lr=0.01))
    np.testing.assert_allclose(p2.arrays[0] - p.arrays[0], [[-0.01], [0.01]], rtol=1e-6)
    np.testing.assert_allclose(p2.arrays[1], [-0.01], rtol=1e-6)


def test_adam_scalar_convergence():
    p = _params(NetworkSpec((1, 1)), [[[0.0]], [0.0]])
    s = AdamState.zeros(p, lr=0.1)
    for _ in range(200):
        w = p.arrays[0][0, 0]
        p, s = adam_step(p, [np.array([[2 * (w - 3)]]), np.zeros(1)], s)
    assert abs(p.arrays[0][0, 0] - 3) < 0.1
    assert all(np.all(v >= 0) for v in s.v)


def test_adam_rejects_nonfinite():
    p = init_network(NetworkSpec((2, 2)), 0)
    g = [np.full(a.shape, np.nan) for a in p.arrays]
    with pytest.raises(NumericError):
        adam_step(p, g, AdamState.zeros(p))


def test_regression_loss_mostly_decreasing():
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, (64, 3))
    y = np.stack([np.sin(x[:, 0]) + x[:, 1] * x[:, 2], np.cos(x[:, 1])], axis=1)
    spec = NetworkSpec((3, 16, 16, 2), "tanh")
    p = init_network(spec, 0)
    s = AdamState.zeros(p, lr=1e-3)
    losses = []
    for _ in range(50):
        loss, g = forward_backward(p, x, lambda out: mse_loss(out, y))
        p, s = adam_step(p, g, s)
        losses.append(loss)
    increases = np.sum(np.diff(losses) > 0)
    assert increases <= 0.05 * 49


def test_copy_params_independent():
    p = init_network(NetworkSpec((3, 4, 2)), 0)
    c = copy_params(p)
    assert c.equals(p) and copy_params(c).equals(p)
    assert not any(np.shares_memory(a, b) for a, b in zip(p.arrays, c.arrays))
    x = np.ones(3)
    np.testing.assert_array_equal(forward(c, x), forward(p, x))
    # an update of the source leaves the copy alone
    p2, _ = adam_step(p, [np.ones_like(a) for a in p.arrays], AdamState.zeros(p))
    assert c.equals(p) and not c.equals(p2)


def test_params_read_only_and_flat_round_trip():
    p = init_network(NetworkSpec((3, 4, 2), "tanh", "conv1d", 2), 9)
    with pytest.raises(ValueError):
        p.arrays[0][0, 0] = 1.0
    assert NetworkParams.from_flat(p.spec, p.flat(), p.seed).equals(p)
