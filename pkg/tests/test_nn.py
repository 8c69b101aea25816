import numpy as np
import pytest

from upinn import autodiff as ad
from upinn import nn
from upinn.nn import MLP, MLPSpec, MultiHeadModel

from conftest import central_diff


def test_flame_body_parameter_count():
    # 2 inputs, three tanh layers of 64, 64 latent outputs
    spec = MLPSpec(2, (64, 64, 64), 64, "tanh", final_linear=False)
    assert spec.n_params() == 2 * 64 + 64 + 2 * (64 * 64 + 64) + (64 * 64 + 64)
    assert spec.n_params() == 12672


def test_spec_validation():
    with pytest.raises(ValueError):
        MLPSpec(0, (4,), 1)
    with pytest.raises(ValueError):
        MLPSpec(1, (4,), 1, "relu")


def test_init_is_reproducible_and_glorot_bounded():
    spec = MLPSpec(3, (16,), 2)
    a, b = MLP.init(spec, 7), MLP.init(spec, 7)
    assert np.array_equal(a.flat(), b.flat())
    limit = np.sqrt(6 / (3 + 16))
    w = a.params["layer0.weight"]
    assert w.shape == (3, 16) and np.all(np.abs(w) <= limit)
    assert np.all(a.params["layer0.bias"] == 0)


def test_body_latent_in_tanh_range():
    body = MLP.init(MLPSpec(2, (64, 64, 64), 64, "tanh", False), 0)
    h = nn.forward(body, np.array([0.1, 0.02]))
    assert h.shape == (64,) and np.all(np.abs(h) < 1)


def test_head_output_is_linear():
    head = MLP.init(MLPSpec(4, (8,), 1, "tanh", True), 0)
    head.params["layer1.bias"][:] = 100.0
    assert nn.forward(head, np.zeros(4))[0] > 99


def test_wrong_input_dim():
    net = MLP.init(MLPSpec(2, (4,), 1), 0)
    with pytest.raises(ValueError):
        nn.forward(net, np.zeros(3))


@pytest.mark.parametrize("act", ["tanh", "silu"])
def test_jet_tangents_match_input_derivatives(act, rng):
    net = MLP.init(MLPSpec(2, (7, 5), 3, act, True), 3)
    x = rng.uniform(-1, 1, (6, 2))
    jet = nn.forward_jet(net, nn.input_jet(x, [0, 1]))
    assert np.allclose(jet[0], nn.forward(net, x))
    h = 1e-6
    for mu in range(2):
        e = np.zeros(2)
        e[mu] = h
        fd = (nn.forward(net, x + e) - nn.forward(net, x - e)) / (2 * h)
        assert np.allclose(jet[1 + mu], fd, atol=1e-8)


@pytest.mark.parametrize("act", ["tanh", "silu"])
def test_jet_parameter_gradient_matches_fd(act, rng):
    # loss depends on values and tangents, so the backward rule uses f''
    net = MLP.init(MLPSpec(1, (6, 6), 1, act, True), 5)
    x = rng.uniform(-1, 1, (5, 1))
    name = "layer0.weight"

    def loss_of(w):
        p = dict(net.params)
        p[name] = w
        j = nn.forward_jet(net, nn.input_jet(x, [0]), p)
        return ad.sum(j[0] ** 2 + 3.0 * j[1] ** 2)

    ad.new_graph()
    params = net.lift_params()
    j = nn.forward_jet(net, nn.input_jet(x, [0]), params)
    g = ad.grad(ad.sum(j[0] ** 2 + 3.0 * j[1] ** 2), params[name])
    fd = central_diff(lambda w: float(loss_of(w)), net.params[name])
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_frozen_net_keeps_input_gradient(rng):
    net = nn.freeze(MLP.init(MLPSpec(2, (5,), 1), 1))
    params = net.lift_params()
    assert not any(isinstance(v, ad.Var) for v in params.values())
    x0 = rng.uniform(-1, 1, 2)
    x = ad.lift(x0)
    g = ad.grad(ad.sum(nn.forward(net, x, params)), x)
    fd = central_diff(lambda v: float(nn.forward(net, v)[0]), x0)
    assert np.allclose(g, fd, atol=1e-8) and np.any(g != 0)


def test_multihead_model_invariants():
    body = MLP.init(MLPSpec(2, (8,), 4, "tanh", False), 0)
    model = MultiHeadModel([body])
    model.add_head(0.1, MLPSpec(4, (3,), 1), 1)
    model.add_head(0.2, MLPSpec(4, (3,), 1), 2)
    assert model.n_heads == 2 and model.family == [0.1, 0.2]
    with pytest.raises(ValueError):
        model.add_head(0.3, MLPSpec(5, (3,), 1), 3)
    y = nn.solution(model, 0, 1, np.zeros((3, 2)))
    assert y.shape == (3, 1)
    model.freeze_bodies()
    assert body.frozen
