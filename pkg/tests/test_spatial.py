import numpy as np
import pytest

from oracles import attention_loop, attn_params, grouped_factor_loop, layer_norm_vec, mlp_loop, sublayer_loop
from slgtformer import graph as G
from slgtformer.attention import Context, init_sublayer, multi_head, sub
from slgtformer.lgrpe import build_gamma0, forward_meta, init_meta_params, positional_bias
from slgtformer.spatial import apply_decoupled_factor, psa_forward, spatial_block
from slgtformer.tensor import DimensionError, Tensor, cross_entropy, mean
from slgtformer.tensor.gradcheck import check_gradients


def _params(seed, d=8, heads=2, ratio=2, jitter=0.2):
    r = np.random.default_rng(seed)
    p = init_sublayer(r, d, heads, d // heads, ratio)
    for t in p.values():
        t.data += jitter * r.normal(size=t.shape)
    return p


def _np(p):
    return {k: v.data for k, v in p.items()}


def test_zero_qk_gives_uniform_attention(rng):
    p = _params(0)
    p["attn.wq"].data[:] = 0
    p["attn.wk"].data[:] = 0
    x = Tensor(rng.normal(size=(3, 5, 8)))
    out, alpha = multi_head(x, x, sub(p, "attn."), 2)
    assert np.abs(alpha.data - 0.2).max() < 1e-15
    v_mean = (x.data @ p["attn.wv"].data).mean(axis=1, keepdims=True)
    expected = np.broadcast_to(v_mean @ p["attn.wo"].data, out.shape)
    assert np.abs(out.data - expected).max() < 1e-12


def test_single_joint_weight_is_one(rng):
    p = _params(1)
    x = Tensor(rng.normal(size=(4, 1, 8)))
    out, alpha = multi_head(x, x, sub(p, "attn."), 2)
    assert (alpha.data == 1.0).all()
    np.testing.assert_allclose(out.data, x.data @ p["attn.wv"].data @ p["attn.wo"].data, atol=1e-13)
    full = psa_forward(x, p, 2).data
    w = _np(p)
    for i in range(4):
        h = x.data[i, 0] + layer_norm_vec(x.data[i, 0], w["ln1.g"], w["ln1.b"]) @ w["attn.wv"] @ w["attn.wo"]
        ref = h + mlp_loop(layer_norm_vec(h, w["ln2.g"], w["ln2.b"]), w["mlp.w1"], w["mlp.b1"], w["mlp.w2"], w["mlp.b2"])
        assert np.abs(full[i, 0] - ref).max() < 1e-12


def test_psa_matches_loop_oracle(rng):
    p = _params(2)
    x = rng.normal(size=(3, 4, 8))
    bias = rng.normal(size=(2, 4, 4))
    got = psa_forward(Tensor(x), p, 2, bias=Tensor(bias)).data
    w = _np(p)
    for f in range(3):
        ref = sublayer_loop(x[f], w, lambda h: attention_loop(h, h, *attn_params(w, "attn."), 2, bias=bias)[0])
        assert np.abs(got[f] - ref).max() < 1e-10


def test_zero_vpos_bias_equals_vanilla(rng):
    psi = G.shortest_path_matrix(G.path_graph(4))
    gamma = forward_meta(Tensor(build_gamma0(psi, 3)), init_meta_params(rng, 3, 6, 2, 3), 2)
    bias = positional_bias(gamma, [Tensor(np.zeros(3)), Tensor(np.zeros(3))])
    p = _params(3)
    x = Tensor(rng.normal(size=(5, 4, 8)))
    with_bias = psa_forward(x, p, 2, bias=bias).data
    vanilla = psa_forward(x, p, 2).data
    assert np.abs(with_bias - vanilla).max() < 1e-10


def test_attention_rows_sum_to_one(rng):
    p = _params(4)
    ctx = Context(trace={})
    psa_forward(Tensor(rng.normal(size=(6, 7, 8)) * 3), p, 2, bias=Tensor(rng.normal(size=(2, 7, 7))), ctx=ctx)
    alpha = ctx.trace["spatial.attn"]
    assert alpha.shape == (6, 2, 7, 7)
    assert np.abs(alpha.sum(axis=-1) - 1).max() < 1e-12


def test_logit_scale_is_root_dh(rng):
    p = _params(5, d=8, heads=1)
    x = Tensor(rng.normal(size=(1, 3, 8)))
    _, alpha = multi_head(x, x, sub(p, "attn."), 1)
    q, k = x.data[0] @ p["attn.wq"].data, x.data[0] @ p["attn.wk"].data
    logits = q @ k.T / np.sqrt(8)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    assert np.abs(alpha.data[0, 0] - e / e.sum(axis=1, keepdims=True)).max() < 1e-14


def test_identity_factor_is_identity(rng):
    x = Tensor(rng.normal(size=(3, 5, 8)))
    eye = Tensor(np.repeat(np.eye(5)[:, :, None], 4, axis=2))
    assert np.array_equal(apply_decoupled_factor(x, eye).data, x.data)


@pytest.mark.parametrize("groups", [1, 2, 8])
def test_decoupled_init_equals_coupled_product(rng, groups):
    g = G.builtin_slgt27()
    f = G.normalized_adjacency_factor(g)
    x = rng.normal(size=(4, 27, 16))
    got = apply_decoupled_factor(Tensor(x), G.init_decoupled_factor(f, groups)).data
    coupled = np.einsum("ij,bjc->bic", f, x)
    assert np.abs(got - coupled).max() < 1e-10


def test_group_block_behaviour(rng):
    x = rng.normal(size=(2, 4, 6))
    fac = np.zeros((4, 4, 2))
    fac[:, :, 0] = np.eye(4)
    out = apply_decoupled_factor(Tensor(x), Tensor(fac)).data
    assert np.array_equal(out[..., :3], x[..., :3])
    assert not out[..., 3:].any()


def test_grouped_factor_loop_oracle(rng):
    x = rng.normal(size=(3, 5, 8))
    fac = rng.normal(size=(5, 5, 4))
    out = apply_decoupled_factor(Tensor(x), Tensor(fac)).data
    for f in range(3):
        assert np.abs(out[f] - grouped_factor_loop(x[f], fac)).max() < 1e-12


def test_factor_group_mismatch():
    with pytest.raises(DimensionError):
        apply_decoupled_factor(Tensor(np.zeros((1, 3, 8))), Tensor(np.zeros((3, 3, 3))))


def test_degenerate_block_is_mlp_residual(rng):
    p = _params(6)
    p["attn.wo"].data[:] = 0
    eye = Tensor(np.repeat(np.eye(4)[:, :, None], 2, axis=2))
    x = rng.normal(size=(3, 4, 8))
    out = spatial_block(Tensor(x), p, 2, factor=eye).data
    w = _np(p)
    for f in range(3):
        for n in range(4):
            ref = x[f, n] + mlp_loop(layer_norm_vec(x[f, n], w["ln2.g"], w["ln2.b"]), w["mlp.w1"], w["mlp.b1"], w["mlp.w2"], w["mlp.b2"])
            assert np.abs(out[f, n] - ref).max() < 1e-12


def test_block_preserves_shape(rng):
    p = _params(7)
    fac = G.init_decoupled_factor(G.normalized_adjacency_factor(G.path_graph(5)), 4)
    x = Tensor(rng.normal(size=(6, 5, 8)))
    assert spatial_block(x, p, 2, factor=fac).shape == x.shape


def test_permutation_equivariance_without_graph_terms(rng):
    p = _params(8)
    x = rng.normal(size=(2, 6, 8))
    perm = rng.permutation(6)
    eye = Tensor(np.repeat(np.eye(6)[:, :, None], 2, axis=2))
    out = spatial_block(Tensor(x), p, 2, factor=eye).data
    out_perm = spatial_block(Tensor(x[:, perm]), p, 2, factor=eye).data
    assert np.abs(out[:, perm] - out_perm).max() < 1e-10


def test_graph_terms_break_equivariance(rng):
    g = G.builtin_slgt27()
    psi = G.shortest_path_matrix(g)
    p = _params(9)
    gamma = forward_meta(Tensor(build_gamma0(psi, 9)), init_meta_params(rng, 9, 8, 2, 4), 2)
    bias = positional_bias(gamma, [Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4))])
    fac = G.init_decoupled_factor(G.normalized_adjacency_factor(g), 2)
    x = rng.normal(size=(2, 27, 8))
    perm = np.roll(np.arange(27), 1)  # not a graph automorphism
    out = spatial_block(Tensor(x), p, 2, bias=bias, factor=fac).data
    out_perm = spatial_block(Tensor(x[:, perm]), p, 2, bias=bias, factor=fac).data
    assert np.abs(out[:, perm] - out_perm).max() > 1e-3


def test_spatial_block_gradients(rng):
    p = _params(10, d=4, heads=2)
    p["factor"] = Tensor(np.abs(rng.normal(size=(3, 3, 2))), requires_grad=True)
    p["factor"].data *= 0.5
    bias = Tensor(rng.normal(size=(2, 3, 3)), requires_grad=True)
    x = Tensor(rng.uniform(-2, 2, size=(2, 3, 4)), requires_grad=True)
    labels = np.array([0, 3])

    def loss():
        out = spatial_block(x, p, 2, bias=bias, factor=p["factor"])
        return cross_entropy(mean(out, axis=1), labels)

    report = check_gradients(loss, {**p, "bias": bias, "x": x})
    assert report.passed(1e-4), report
