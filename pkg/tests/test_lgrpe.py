import numpy as np
import pytest

from oracles import bias_loop, gamma_loop, golden_psi
from slgtformer import graph as G
from slgtformer.lgrpe import build_gamma0, forward_meta, init_meta_params, positional_bias
from slgtformer.tensor import DimensionError, Tensor, backward, softmax


def _psi():
    return G.shortest_path_matrix(G.builtin_slgt27())


def _meta(seed=0, d_max=9, hidden=16, heads=4, d_pos=3, scale=1.0):
    mlp = init_meta_params(np.random.default_rng(seed), d_max, hidden, heads, d_pos)
    for t in mlp.values():
        t.data *= scale
    return mlp


def test_gamma0_self_distance_and_clipping():
    g0 = build_gamma0(np.array([[0, 5], [5, 0]]), d_max=2)
    assert g0.shape == (2, 2, 4)
    np.testing.assert_array_equal(g0[0, 0], [1, 0, 0, 0])
    np.testing.assert_array_equal(g0[0, 1], [0, 0, 0, 1])  # overflow bucket
    assert (g0.sum(axis=-1) == 1).all()


def test_gamma0_rejects_negative_distance():
    with pytest.raises(ValueError, match="negative distance"):
        build_gamma0(np.array([[0, -1], [-1, 0]]), d_max=3)


def test_gamma0_histogram_matches_golden_distances():
    psi = golden_psi()
    for d_max in (9, 4):
        g0 = build_gamma0(psi, d_max)
        hot = g0.argmax(axis=-1)
        expected = np.bincount(np.minimum(psi, d_max + 1).ravel(), minlength=d_max + 2)
        np.testing.assert_array_equal(np.bincount(hot.ravel(), minlength=d_max + 2), expected)
        np.testing.assert_array_equal(hot, hot.T)


def test_zero_weights_give_zero_gamma():
    mlp = _meta(scale=0.0)
    gamma = forward_meta(Tensor(build_gamma0(_psi(), 9)), mlp, heads=4)
    assert gamma.shape == (27, 27, 4, 3)
    assert not gamma.data.any()


def test_gamma_is_a_function_of_distance():
    psi = _psi()
    gamma = forward_meta(Tensor(build_gamma0(psi, 9)), _meta(seed=3), heads=4).data
    for i in range(27):
        for h in range(27):
            for j in range(27):
                if psi[i, h] == psi[i, j]:
                    assert np.array_equal(gamma[i, h], gamma[i, j])
    assert len({gamma[i, j].tobytes() for i in range(27) for j in range(27)}) == len(np.unique(psi))
    np.testing.assert_array_equal(gamma, gamma.transpose(1, 0, 2, 3))


def test_gamma_per_distance_lookup_oracle():
    psi = _psi()
    mlp = _meta(seed=5)
    w = {k: v.data for k, v in mlp.items()}
    gamma = forward_meta(Tensor(build_gamma0(psi, 9)), mlp, heads=4).data
    for dist in range(11):
        onehot = np.eye(11)[dist]
        direct = (np.maximum(onehot @ w["w1"] + w["b1"], 0) @ w["w2"] + w["b2"]).reshape(4, 3)
        for i, j in np.argwhere(np.minimum(psi, 10) == dist):
            assert np.abs(gamma[i, j] - direct).max() < 1e-12
    assert np.abs(gamma - gamma_loop(psi, 9, w["w1"], w["b1"], w["w2"], w["b2"], 4)).max() < 1e-12


def test_bias_zero_vpos_is_zero():
    gamma = forward_meta(Tensor(build_gamma0(_psi(), 9)), _meta(), heads=4)
    bias = positional_bias(gamma, [Tensor(np.zeros(3)) for _ in range(4)])
    assert bias.shape == (4, 27, 27) and not bias.data.any()


def test_constant_bias_leaves_attention_unchanged(rng):
    gamma = Tensor(np.ones((5, 5, 2, 1)))
    c = 1.7
    bias = positional_bias(gamma, [Tensor([c]), Tensor([c])])
    assert (bias.data == c).all()
    logits = rng.normal(size=(2, 5, 5))
    plain = softmax(Tensor(logits)).data
    shifted = softmax(Tensor(logits) + bias).data
    assert np.abs(plain - shifted).max() < 1e-12


def test_row_shift_invariance(rng):
    logits = rng.normal(size=(3, 6, 6))
    shift = np.zeros_like(logits)
    shift[1, 2, :] = rng.normal() * 5
    a = softmax(Tensor(logits)).data
    b = softmax(Tensor(logits + shift)).data
    assert np.abs(a - b).max() < 1e-12


def test_bias_loop_oracle(rng):
    gamma = rng.normal(size=(6, 6, 3, 4))
    vpos = [rng.normal(size=4) for _ in range(3)]
    bias = positional_bias(Tensor(gamma), [Tensor(v) for v in vpos]).data
    assert np.abs(bias - bias_loop(gamma, vpos)).max() < 1e-12


def test_bias_head_mismatch():
    gamma = Tensor(np.ones((3, 3, 2, 4)))
    with pytest.raises(DimensionError):
        positional_bias(gamma, [Tensor(np.zeros(4))] * 3)
    with pytest.raises(DimensionError):
        positional_bias(gamma, [Tensor(np.zeros(5))] * 2)


def test_meta_gradient_reaches_first_layer(rng):
    psi = G.shortest_path_matrix(G.path_graph(4))
    mlp = _meta(d_max=3, hidden=8, heads=2, d_pos=2)
    gamma0 = Tensor(build_gamma0(psi, 3), requires_grad=True)
    vpos = [Tensor(rng.normal(size=2), requires_grad=True) for _ in range(2)]
    bias = positional_bias(forward_meta(gamma0, mlp, heads=2), vpos)
    attn = softmax(Tensor(rng.normal(size=(2, 4, 4))) + bias)
    loss = (attn * Tensor(rng.normal(size=(2, 4, 4)))).sum()
    backward(loss)
    assert np.abs(mlp["w1"].grad).max() > 0
    assert np.abs(gamma0.grad).max() > 0
