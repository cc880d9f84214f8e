import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intentsan import layers as L
from intentsan.errors import ConfigError, PreconditionError, UsageError, VocabIndexError
from intentsan.numeric import grad_check, make_rng


def rand_lstm(rng, d, u, scale=0.5):
    return L.LstmParams(rng.normal(0, scale, (4 * u, d)), rng.normal(0, scale, (4 * u, u)), rng.normal(0, scale, 4 * u))


def rand_attention(rng, k):
    return L.AttentionParams(rng.normal(0, 0.5, (k, k)), rng.normal(0, 0.5, k), rng.normal(0, 0.5, k))


# ---------------------------------------------------------------- embedding


def test_embed_pad_and_lookup():
    rng = make_rng(0)
    m = rng.normal(size=(6, 4))
    m[0] = 0
    table = L.EmbeddingTable(m)
    np.testing.assert_array_equal(L.embed([0], table), np.zeros((1, 4)))
    rows = L.embed([3, 3], table)
    np.testing.assert_array_equal(rows[0], m[3])
    np.testing.assert_array_equal(rows[1], m[3])
    ids = rng.integers(0, 6, size=20)
    expected = np.stack([m[i].copy() for i in ids])
    np.testing.assert_array_equal(L.embed(ids, table), expected)


def test_embed_out_of_range_is_distinct_from_unk():
    table = L.EmbeddingTable(np.zeros((4, 2)))
    L.embed([1], table)  # UNK id is valid
    with pytest.raises(VocabIndexError, match="4"):
        L.embed([4], table)


def test_embed_backward_scatter_adds_and_skips_pad():
    d = np.arange(8.0).reshape(4, 2)
    g = L.embed_backward(d, [2, 0, 2, 3], 5)
    np.testing.assert_array_equal(g[2], d[0] + d[2])
    np.testing.assert_array_equal(g[0], [0, 0])
    np.testing.assert_array_equal(g[3], d[3])


# ---------------------------------------------------------------- LSTM


def test_lstm_zero_params_fixed_point():
    p = L.LstmParams(np.zeros((8, 3)), np.zeros((8, 2)), np.zeros(8))
    h, _ = L.lstm_forward(make_rng(1).normal(size=(5, 3)), p)
    assert h.shape == (5, 2) and np.all(h == 0)


def test_lstm_single_step_hand_computation():
    wi, wf, wg, wo = 0.5, -0.3, 0.8, 0.1
    ui, uf, ug, uo = 0.2, 0.4, -0.6, 0.7
    bi, bf, bg, bo = 0.05, 1.0, -0.1, 0.2
    x, h0, c0 = 0.7, 0.3, -0.4
    p = L.LstmParams(np.array([[wi], [wf], [wg], [wo]]), np.array([[ui], [uf], [ug], [uo]]), np.array([bi, bf, bg, bo]))
    sig = lambda z: 1 / (1 + math.exp(-z))
    i = sig(wi * x + ui * h0 + bi)
    f = sig(wf * x + uf * h0 + bf)
    g = math.tanh(wg * x + ug * h0 + bg)
    o = sig(wo * x + uo * h0 + bo)
    c = f * c0 + i * g
    h_expected = o * math.tanh(c)
    h, _ = L.lstm_forward(np.array([[x]]), p, h0=np.array([h0]), c0=np.array([c0]))
    assert h[0, 0] == pytest.approx(h_expected, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 20))
def test_lstm_hidden_bounded(seed, scale):
    rng = make_rng(seed)
    h, _ = L.lstm_forward(rng.normal(0, scale, (6, 3)), rand_lstm(rng, 3, 4, scale))
    assert np.max(np.abs(h)) < 1


def test_lstm_batch_equals_per_sequence():
    rng = make_rng(2)
    p = rand_lstm(rng, 3, 2)
    x = rng.normal(size=(4, 5, 3))
    hb, _ = L.lstm_forward(x, p)
    for b in range(4):
        np.testing.assert_allclose(hb[b], L.lstm_forward(x[b], p)[0], atol=1e-14)


# ---------------------------------------------------------------- Bi-LSTM


def test_bilstm_composition_oracle():
    rng = make_rng(3)
    pf, pb = rand_lstm(rng, 3, 2), rand_lstm(rng, 3, 2)
    x = rng.normal(size=(5, 3))
    out, _ = L.bilstm_forward(x, pf, pb)
    expected = np.concatenate([L.lstm_forward(x, pf)[0], L.lstm_forward(x[::-1], pb)[0][::-1]], axis=1)
    # batched gather path vs direct slicing: same math, different summation order
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-14)


def test_bilstm_zero_and_single_step():
    z = L.LstmParams(np.zeros((8, 3)), np.zeros((8, 2)), np.zeros(8))
    out, _ = L.bilstm_forward(make_rng(0).normal(size=(4, 3)), z, z)
    assert out.shape == (4, 4) and np.all(out == 0)
    rng = make_rng(4)
    pf, pb = rand_lstm(rng, 3, 2), rand_lstm(rng, 3, 2)
    x = rng.normal(size=(1, 3))
    out, _ = L.bilstm_forward(x, pf, pb)
    np.testing.assert_allclose(out[0], np.concatenate([L.lstm_forward(x, pf)[0][0], L.lstm_forward(x, pb)[0][0]]), atol=1e-14)


def test_bilstm_unit_mismatch():
    rng = make_rng(0)
    with pytest.raises(ConfigError):
        L.bilstm_forward(np.zeros((2, 3)), rand_lstm(rng, 3, 2), rand_lstm(rng, 3, 3))


def test_bilstm_padded_rows_match_unpadded():
    rng = make_rng(5)
    pf, pb = rand_lstm(rng, 3, 2), rand_lstm(rng, 3, 2)
    x = rng.normal(size=(2, 6, 3))
    out, _ = L.bilstm_forward(x, pf, pb, lengths=[4, 6])
    alone, _ = L.bilstm_forward(x[0, :4], pf, pb)
    np.testing.assert_allclose(out[0, :4], alone, atol=1e-14)


# ---------------------------------------------------------------- attention


def attention_oracle(H, mask, p):
    scores = [float(p.v @ np.tanh(p.W @ h + p.b)) if m else -math.inf for h, m in zip(H, mask)]
    top = max(s for s in scores if s != -math.inf)
    e = [math.exp(s - top) if s != -math.inf else 0.0 for s in scores]
    a = np.array(e) / sum(e)
    return sum(w * h for w, h in zip(a, H)), a


def test_attention_single_position():
    rng = make_rng(0)
    H = rng.normal(size=(1, 3))
    ctx, a, _ = L.self_attention(H, [True], rand_attention(rng, 3))
    assert a.tolist() == [1.0]
    np.testing.assert_array_equal(ctx, H[0])


def test_attention_identical_rows_uniform():
    rng = make_rng(1)
    H = np.tile(rng.normal(size=3), (5, 1))
    ctx, a, _ = L.self_attention(H, [True] * 5, rand_attention(rng, 3))
    np.testing.assert_allclose(a, 0.2, atol=1e-15)
    np.testing.assert_allclose(ctx, H[0], atol=1e-15)


def test_attention_matches_direct_oracle():
    rng = make_rng(2)
    H = rng.normal(size=(4, 3))
    p = rand_attention(rng, 3)
    mask = [True, True, False, True]
    ctx, a, _ = L.self_attention(H, mask, p)
    ctx_o, a_o = attention_oracle(H, mask, p)
    np.testing.assert_allclose(a, a_o, rtol=0, atol=1e-12)
    np.testing.assert_allclose(ctx, ctx_o, rtol=0, atol=1e-12)
    assert a[2] == 0.0


def test_attention_all_masked_is_rejected():
    rng = make_rng(0)
    with pytest.raises(PreconditionError):
        L.self_attention(rng.normal(size=(3, 2)), [False] * 3, rand_attention(rng, 2))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 8), st.integers(1, 5))
def test_attention_weight_invariants(seed, T, k):
    rng = make_rng(seed)
    H = rng.normal(0, 3, (T, k))
    mask = rng.random(T) < 0.6
    mask[rng.integers(T)] = True
    _, a, _ = L.self_attention(H, mask, rand_attention(rng, k))
    assert np.all(a >= 0)
    assert np.all(a[~mask] == 0)
    assert abs(a[mask].sum() - 1) < 1e-9


# ---------------------------------------------------------------- classifier


def test_classifier_examples():
    p = L.ClassifierParams(np.zeros((4, 3)), np.zeros(4))
    probs, _ = L.classify(np.ones(3), p)
    np.testing.assert_allclose(probs, 0.25, atol=1e-15)
    probs, _ = L.classify(np.ones(3), L.ClassifierParams(np.zeros((2, 3)), np.array([10.0, -10.0])))
    np.testing.assert_allclose(probs, [1, 0], atol=1e-8)
    rng = make_rng(3)
    W, b, ctx = rng.normal(size=(5, 3)), rng.normal(size=5), rng.normal(size=3)
    probs, _ = L.classify(ctx, L.ClassifierParams(W, b))
    logits = W @ ctx + b
    expected = np.exp(logits - logits.max()) / np.exp(logits - logits.max()).sum()
    np.testing.assert_allclose(probs, expected, rtol=0, atol=1e-12)
    assert abs(probs.sum() - 1) < 1e-9


def test_classifier_ce_gradient_identity():
    rng = make_rng(4)
    p = L.ClassifierParams(rng.normal(size=(3, 2)), rng.normal(size=3))
    ctx = rng.normal(size=2)
    probs, _ = L.classify(ctx, p)
    label = 1
    onehot = np.eye(3)[label]
    eps = 1e-6
    fd = np.zeros(3)
    for j in range(3):
        up, down = p.b.copy(), p.b.copy()
        up[j] += eps
        down[j] -= eps
        ce = lambda bb: -math.log(L.classify(ctx, L.ClassifierParams(p.W, bb))[0][label])
        fd[j] = (ce(up) - ce(down)) / (2 * eps)
    np.testing.assert_allclose(probs - onehot, fd, atol=1e-8)


def test_softmax_backward_chain():
    rng = make_rng(5)
    z = rng.normal(size=4)
    probs = np.exp(z) / np.exp(z).sum()
    dp = rng.normal(size=4)
    J = np.diag(probs) - np.outer(probs, probs)
    np.testing.assert_allclose(L.softmax_backward(dp, probs), J.T @ dp, atol=1e-14)


# ---------------------------------------------------------------- backward passes vs finite differences


def _lstm_objective(x, p, w):
    def f(arrs):
        q = L.LstmParams(arrs["W"], arrs["U"], arrs["b"])
        h, cache = L.lstm_forward(arrs["x"], q)
        dx, g = L.lstm_backward(w, cache)
        return float(np.sum(w * h)), {"x": dx, **g}

    return f


SHAPES = [(3, 2, 2), (2, 3, 1), (4, 1, 3)]


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("T,d,u", SHAPES)
def test_lstm_backward_grad_check(seed, T, d, u):
    rng = make_rng(seed)
    p = rand_lstm(rng, d, u)
    x = rng.normal(size=(T, d))
    w = rng.normal(size=(T, u))
    arrs = {"x": x, "W": p.W, "U": p.U, "b": p.b}
    assert grad_check(_lstm_objective(x, p, w), arrs, rng) < 1e-4


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("B,T,d,u", [(1, 3, 2, 2), (2, 4, 3, 1), (3, 2, 1, 3)])
def test_bilstm_backward_grad_check(seed, B, T, d, u):
    rng = make_rng(seed)
    pf, pb = rand_lstm(rng, d, u), rand_lstm(rng, d, u)
    x = rng.normal(size=(B, T, d))
    lengths = rng.integers(1, T + 1, size=B)
    w = rng.normal(size=(B, T, 2 * u))

    def f(a):
        out, cache = L.bilstm_forward(a["x"], L.LstmParams(a["fW"], a["fU"], a["fb"]), L.LstmParams(a["bW"], a["bU"], a["bb"]), lengths)
        dx, gf, gb = L.bilstm_backward(w, cache)
        grads = {"x": dx, "fW": gf["W"], "fU": gf["U"], "fb": gf["b"], "bW": gb["W"], "bU": gb["U"], "bb": gb["b"]}
        return float(np.sum(w * out)), grads

    arrs = {"x": x, "fW": pf.W, "fU": pf.U, "fb": pf.b, "bW": pb.W, "bU": pb.U, "bb": pb.b}
    assert grad_check(f, arrs, rng) < 1e-4


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("B,T,k", [(1, 2, 3), (2, 4, 2), (3, 3, 4)])
def test_attention_backward_grad_check(seed, B, T, k):
    rng = make_rng(seed)
    p = rand_attention(rng, k)
    H = rng.normal(size=(B, T, k))
    mask = rng.random((B, T)) < 0.7
    mask[:, 0] = True
    w = rng.normal(size=(B, k))

    def f(a):
        ctx, _, cache = L.self_attention(a["H"], mask, L.AttentionParams(a["W"], a["b"], a["v"]))
        dH, g = L.self_attention_backward(w, cache)
        return float(np.sum(w * ctx)), {"H": dH, **g}

    assert grad_check(f, {"H": H, "W": p.W, "b": p.b, "v": p.v}, rng) < 1e-4


def test_attention_v_gradient_T2():
    rng = make_rng(9)
    p = rand_attention(rng, 3)
    H = rng.normal(size=(2, 3))
    w = rng.normal(size=3)

    def f(a):
        ctx, _, cache = L.self_attention(H, [True, True], L.AttentionParams(p.W, p.b, a["v"]))
        return float(w @ ctx), {"v": L.self_attention_backward(w, cache)[1]["v"]}

    assert grad_check(f, {"v": p.v}, rng) < 1e-4


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("B,k,K", [(1, 2, 2), (3, 4, 3), (2, 1, 5)])
def test_classifier_backward_grad_check(seed, B, k, K):
    rng = make_rng(seed)
    W, b = rng.normal(size=(K, k)), rng.normal(size=K)
    ctx = rng.normal(size=(B, k))
    labels = rng.integers(0, K, size=B)

    def f(a):
        probs, cache = L.classify(a["ctx"], L.ClassifierParams(a["W"], a["b"]))
        d_logits = probs - np.eye(K)[labels]
        d_ctx, g = L.classify_backward(d_logits, cache)
        return float(-np.sum(np.log(probs[np.arange(B), labels]))), {"ctx": d_ctx, **g}

    assert grad_check(f, {"ctx": ctx, "W": W, "b": b}, rng) < 1e-4


def test_backward_requires_fresh_cache():
    rng = make_rng(0)
    p = rand_lstm(rng, 2, 2)
    h, cache = L.lstm_forward(rng.normal(size=(3, 2)), p)
    with pytest.raises(UsageError):
        L.lstm_backward(np.ones_like(h), None)
    L.lstm_backward(np.ones_like(h), cache)
    with pytest.raises(UsageError):
        L.lstm_backward(np.ones_like(h), cache)
    _, _, att = L.self_attention(rng.normal(size=(2, 2)), [True, True], rand_attention(rng, 2))
    with pytest.raises(UsageError):
        L.lstm_backward(np.ones_like(h), att)
