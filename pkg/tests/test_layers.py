import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from elaspoof import layers as L
from elaspoof.errors import IllegalStateError, InvalidArgumentError, InvalidConfigError, ShapeMismatchError
from elaspoof.model import Network, init_params
from elaspoof.tensor import Tensor

from conftest import central_diff, fd_floor, max_rel_error, naive_conv


# --- configuration and parameter counts -------------------------------------

def test_default_config_first_layer_has_2432_params():
    counts, _ = L.param_count(L.default_model_config(128))
    assert counts[0] == 2432


@pytest.mark.parametrize("size", [32, 40, 64, 128, 200])
def test_first_layer_count_independent_of_input(size):
    assert L.param_count(L.default_model_config(size))[0][0] == 2432


def test_default_config_shapes_at_128():
    cfg = L.default_model_config(128)
    shapes = cfg.output_shapes()
    assert shapes[0] == (124, 124, 32)
    assert shapes[2] == (62, 62, 32)
    assert shapes[3] == (58, 58, 32)
    assert shapes[5] == (29, 29, 32)
    assert shapes[7] == (26912,)
    assert shapes[-1] == (1,)
    counts, total = L.param_count(cfg)
    assert counts[3] == (5 * 5 * 32 + 1) * 32 == 25632
    assert counts[8] == (26912 + 1) * 256
    params = init_params(cfg, 0)
    runtime = {name: t.size for name, t in params.items()}
    assert runtime["3.weight"] + runtime["3.bias"] == 25632
    assert runtime["8.weight"] + runtime["8.bias"] == counts[8]
    assert sum(runtime.values()) == total


def test_small_layers_param_count():
    cfg = L.ModelConfig(1, 1, 1, (L.Conv2D(1, 1, 1), L.Flatten(), L.Dense(1)))
    assert L.param_count(cfg)[0] == [2, 0, 2]


def test_too_small_input_rejected():
    with pytest.raises(InvalidConfigError):
        L.default_model_config(8)


def test_config_needs_scalar_head():
    with pytest.raises(InvalidConfigError):
        L.ModelConfig(4, 4, 1, (L.Flatten(), L.Dense(2)))


@pytest.mark.parametrize("bad", [
    lambda: L.Conv2D(0, 3, 3), lambda: L.MaxPool2D(2, 2, 0),
    lambda: L.Dropout(1.0), lambda: L.Dense(0), lambda: L.Activation("tanh"),
])
def test_layer_spec_invariants(bad):
    with pytest.raises(InvalidConfigError):
        bad()


def test_config_dict_roundtrip():
    cfg = L.default_model_config(64)
    assert L.ModelConfig.from_dict(cfg.to_dict()) == cfg


# --- convolution ------------------------------------------------------------

def test_conv_identity_kernel(rng):
    x = Tensor(rng.normal(size=(1, 5, 4, 1)))
    out, _ = L.conv2d_forward(x, Tensor(np.ones((1, 1, 1, 1))), Tensor([0.0]))
    assert np.array_equal(out.array, x.array)


def test_conv_ones():
    out, _ = L.conv2d_forward(Tensor(np.ones((1, 4, 4, 1))), Tensor(np.ones((3, 3, 1, 1))), Tensor([0.0]))
    assert out.shape == (1, 2, 2, 1)
    assert out.array.ravel().tolist() == [9, 9, 9, 9]


def test_conv_kernel_too_large():
    with pytest.raises(ShapeMismatchError):
        L.conv2d_forward(Tensor(np.ones((1, 4, 4, 1))), Tensor(np.ones((5, 5, 1, 1))), Tensor([0.0]))


@pytest.mark.parametrize("stride", [1, 2, 3])
def test_conv_matches_direct_summation(rng, stride):
    for _ in range(5):
        x = rng.normal(size=(2, 9, 8, 3))
        w = rng.normal(size=(3, 2, 3, 4))
        b = rng.normal(size=4)
        out, _ = L.conv2d_forward(Tensor(x), Tensor(w), Tensor(b), stride)
        assert max_rel_error(out.array, naive_conv(x, w, b, stride)) < 1e-12


def test_conv_backward_zero_grad(rng):
    x = Tensor(rng.normal(size=(1, 6, 6, 2)))
    out, cache = L.conv2d_forward(x, Tensor(rng.normal(size=(3, 3, 2, 4))), Tensor(np.zeros(4)))
    gx, gw, gb = L.conv2d_backward(cache, Tensor(np.zeros(out.shape)))
    assert not gx.array.any() and not gw.array.any() and not gb.array.any()


def test_conv_backward_scalar():
    _, cache = L.conv2d_forward(Tensor([[[[3.0]]]]), Tensor([[[[2.0]]]]), Tensor([0.5]))
    gx, gw, gb = L.conv2d_backward(cache, Tensor([[[[1.5]]]]))
    assert gw.array.item() == 3.0 * 1.5
    assert gx.array.item() == 2.0 * 1.5
    assert gb.array.item() == 1.5


def test_conv_backward_needs_cache():
    with pytest.raises(IllegalStateError):
        L.conv2d_backward(None, Tensor(np.ones((1, 1, 1, 1))))


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_backward_finite_differences(rng, stride):
    x = rng.normal(size=(1, 6, 6, 2))
    w = rng.normal(size=(3, 3, 2, 4))
    b = rng.normal(size=4)
    proj = None

    def loss():
        out, _ = L.conv2d_forward(Tensor.wrap(x), Tensor.wrap(w), Tensor.wrap(b), stride)
        return float(np.sum(out.array * proj))

    out, cache = L.conv2d_forward(Tensor(x), Tensor(w), Tensor(b), stride)
    proj = rng.normal(size=out.shape)
    gx, gw, gb = L.conv2d_backward(cache, Tensor(proj))
    floor = fd_floor(loss())
    assert max_rel_error(gx.array, central_diff(loss, x), floor) < 1e-5
    assert max_rel_error(gw.array, central_diff(loss, w), floor) < 1e-5
    assert max_rel_error(gb.array, central_diff(loss, b), floor) < 1e-5


def test_conv_chunking_matches_single_pass(rng, monkeypatch):
    x = Tensor(rng.normal(size=(5, 8, 8, 2)))
    w, b = Tensor(rng.normal(size=(3, 3, 2, 3))), Tensor(rng.normal(size=3))
    g = Tensor(rng.normal(size=(5, 6, 6, 3)))
    out1, c1 = L.conv2d_forward(x, w, b)
    grads1 = L.conv2d_backward(c1, g)
    monkeypatch.setattr(L, "_COLS_BUDGET", 1)
    out2, c2 = L.conv2d_forward(x, w, b)
    grads2 = L.conv2d_backward(c2, g)
    assert np.allclose(out1.array, out2.array, rtol=1e-13, atol=0)
    for a, c in zip(grads1, grads2):
        assert np.allclose(a.array, c.array, rtol=1e-12, atol=1e-14)


# --- max pooling ------------------------------------------------------------

def test_maxpool_window_max():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1))
    out, cache = L.maxpool_forward(x, 2, 2)
    assert out.array.item() == 4.0
    gi = L.maxpool_backward(cache, Tensor(np.ones((1, 1, 1, 1))))
    assert gi.array.reshape(2, 2).tolist() == [[0, 0], [0, 1]]
    assert not L.maxpool_backward(cache, Tensor(np.zeros((1, 1, 1, 1)))).array.any()


def test_maxpool_constant_input_first_index():
    out, cache = L.maxpool_forward(Tensor(np.full((1, 4, 4, 1), 7.0)), 2, 2)
    assert out.shape == (1, 2, 2, 1)
    assert np.all(out.array == 7.0)
    assert cache.argmax.ravel().tolist() == [0, 2, 8, 10]


def test_maxpool_too_large():
    with pytest.raises(ShapeMismatchError):
        L.maxpool_forward(Tensor(np.ones((1, 1, 1, 1))), 2, 2)


def test_maxpool_backward_shape_mismatch(rng):
    _, cache = L.maxpool_forward(Tensor(rng.normal(size=(1, 4, 4, 1))), 2, 2)
    with pytest.raises(ShapeMismatchError):
        L.maxpool_backward(cache, Tensor(np.ones((1, 3, 3, 1))))


@pytest.mark.parametrize("pool,stride", [(2, 2), (3, 1), (3, 2)])
def test_maxpool_finite_differences(rng, pool, stride):
    # distinct values spaced far apart relative to h keep every window tie-free
    x = rng.permutation(2 * 7 * 7 * 2).astype(float).reshape(2, 7, 7, 2) * 0.01
    out, cache = L.maxpool_forward(Tensor(x), pool, stride)
    proj = rng.normal(size=out.shape)

    def loss():
        return float(np.sum(L.maxpool_forward(Tensor.wrap(x), pool, stride)[0].array * proj))

    gi = L.maxpool_backward(cache, Tensor(proj))
    assert max_rel_error(gi.array, central_diff(loss, x), fd_floor(loss())) < 1e-5
    nz = np.flatnonzero(gi.array.reshape(2, -1, 2).transpose(0, 2, 1).reshape(4, -1))
    assert len(nz) <= out.size


def test_maxpool_routes_only_to_argmax(rng):
    x = rng.normal(size=(2, 6, 6, 3))
    out, cache = L.maxpool_forward(Tensor(x), 2, 2)
    g = rng.normal(size=out.shape)
    gi = L.maxpool_backward(cache, Tensor(g)).array.reshape(2, 36, 3)
    mask = np.zeros_like(gi, dtype=bool)
    for b in range(2):
        for c in range(3):
            mask[b, cache.argmax[b, ..., c].ravel(), c] = True
    assert not gi[~mask].any()
    assert gi.sum() == pytest.approx(g.sum(), rel=1e-12)


# --- dropout ----------------------------------------------------------------

def test_dropout_inference_identity(rng):
    x = Tensor(rng.normal(size=(3, 4)))
    out, mask = L.dropout_forward(x, 0.9, training=False)
    assert np.array_equal(out.array, x.array) and np.all(mask == 1)


def test_dropout_rate_zero_training(rng):
    x = Tensor(rng.normal(size=(3, 4)))
    out, mask = L.dropout_forward(x, 0.0, training=True, rng=rng)
    assert np.array_equal(out.array, x.array) and np.all(mask == 1)


def test_dropout_statistics():
    x = Tensor(np.ones(10_000))
    out, _ = L.dropout_forward(x, 0.5, True, np.random.default_rng(7))
    assert 0.97 <= out.array.mean() <= 1.03
    out, _ = L.dropout_forward(x, 0.25, True, np.random.default_rng(7))
    assert abs(np.mean(out.array == 0) - 0.25) < 0.02


@pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
def test_dropout_rate_range(rate):
    with pytest.raises(InvalidArgumentError):
        L.dropout_forward(Tensor([1.0]), rate, True, np.random.default_rng(0))


def test_dropout_backward_uses_mask(rng):
    x = Tensor(rng.normal(size=(4, 5)))
    out, mask = L.dropout_forward(x, 0.4, True, rng)
    g = L.dropout_backward(mask, Tensor(np.ones((4, 5))))
    assert np.array_equal(g.array, mask)
    with pytest.raises(IllegalStateError):
        L.dropout_backward(None, Tensor(np.ones((4, 5))))


# --- dense ------------------------------------------------------------------

def test_dense_examples(rng):
    x = Tensor(rng.normal(size=(3, 4)))
    out, _ = L.dense_forward(x, Tensor(np.eye(4)), Tensor(np.zeros(4)))
    assert np.array_equal(out.array, x.array)
    out, _ = L.dense_forward(Tensor([[1.0, 2.0]]), Tensor([[1.0], [1.0]]), Tensor([3.0]))
    assert out.tolist() == [[6.0]]
    with pytest.raises(ShapeMismatchError):
        L.dense_forward(Tensor([[1.0, 2.0]]), Tensor(np.ones((3, 1))), Tensor([0.0]))


def test_dense_backward_finite_differences(rng):
    x, w, b = rng.normal(size=(3, 5)), rng.normal(size=(5, 4)), rng.normal(size=4)
    proj = rng.normal(size=(3, 4))

    def loss():
        return float(np.sum(L.dense_forward(Tensor.wrap(x), Tensor.wrap(w), Tensor.wrap(b))[0].array * proj))

    _, cache = L.dense_forward(Tensor(x), Tensor(w), Tensor(b))
    gx, gw, gb = L.dense_backward(cache, Tensor(proj))
    for analytic, arr in ((gx, x), (gw, w), (gb, b)):
        assert max_rel_error(analytic.array, central_diff(loss, arr), fd_floor(loss())) < 1e-5


# --- activations ------------------------------------------------------------

def test_activation_values():
    assert L.activation_forward("relu", Tensor([-2.0, 0.0, 3.0])).tolist() == [0, 0, 3]
    assert L.activation_forward("sigmoid", Tensor([0.0])).tolist() == [0.5]
    g = L.activation_backward("sigmoid", Tensor([0.0]), Tensor([1.0]))
    assert g.tolist() == [0.25]
    g = L.activation_backward("relu", Tensor([-1.0, 0.0, 2.0]), Tensor([1.0, 1.0, 1.0]))
    assert g.tolist() == [0, 0, 1]


@given(st.floats(-36.0, 36.0))
def test_sigmoid_strictly_inside_unit_interval(z):
    s = L.activation_forward("sigmoid", Tensor([z])).array.item()
    assert 0.0 < s < 1.0


def test_sigmoid_stable_for_large_inputs():
    s = L.activation_forward("sigmoid", Tensor([-1000.0, 1000.0])).array
    assert np.all(np.isfinite(s)) and s.tolist() == [0.0, 1.0]


def test_activation_finite_differences(rng):
    x = rng.normal(size=50) * 3
    x[np.abs(x) < 1e-3] = 0.5
    proj = rng.normal(size=50)
    for kind in ("relu", "sigmoid"):
        def loss():
            return float(np.sum(L.activation_forward(kind, Tensor.wrap(x)).array * proj))
        g = L.activation_backward(kind, Tensor(x), Tensor(proj))
        assert max_rel_error(g.array, central_diff(loss, x), fd_floor(loss())) < 1e-5


# --- network ----------------------------------------------------------------

def test_network_backward_before_forward():
    cfg = L.ModelConfig(4, 4, 1, (L.Flatten(), L.Dense(1), L.Activation("sigmoid")))
    net = Network(cfg, init_params(cfg))
    with pytest.raises(IllegalStateError):
        net.backward(Tensor([[1.0]]))


def test_network_rejects_wrong_input():
    cfg = L.ModelConfig(4, 4, 1, (L.Flatten(), L.Dense(1), L.Activation("sigmoid")))
    net = Network(cfg, init_params(cfg))
    with pytest.raises(InvalidArgumentError):
        net.forward(Tensor(np.ones((1, 5, 4, 1))))


def test_glorot_bounds_and_zero_bias():
    cfg = L.default_model_config(32)
    params = init_params(cfg, 3)
    limit = np.sqrt(6.0 / (5 * 5 * 3 + 5 * 5 * 32))
    assert np.abs(params["0.weight"].array).max() <= limit
    assert not params["0.bias"].array.any()
    again = init_params(cfg, 3)
    assert all(np.array_equal(params[k].array, again[k].array) for k in params)
