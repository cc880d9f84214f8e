"""Network blocks with hand-derived backward passes.

Every forward function accepts either a single sequence (``T x d``) or a batch
(``B x T x d``) and returns its output together with a cache object; the
matching ``*_backward`` consumes that cache. Batch outputs keep the batch axis,
single-sequence outputs drop it again.

LSTM gates are packed in the order (input, forget, cell, output):

    z_t = W x_t + U h_{t-1} + b
    i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

Attention is additive self-attention pooled to one vector per utterance:

    e_t = v . tanh(W_a h_t + b_a),  masked e_t = -inf
    a = softmax(e),  context = sum_t a_t h_t
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, PreconditionError, UsageError, VocabIndexError
from .numeric import DTYPE, glorot_uniform, softmax

PAD_ID = 0


def _batched(x: np.ndarray, rank: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if x.ndim == rank - 1:
        return x[None], True
    if x.ndim != rank:
        raise DimensionError(f"expected rank {rank - 1} or {rank} input, got shape {x.shape}")
    return x, False


def _mm(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # (..., n) @ (n, m) as one 2-D BLAS call
    return (x.reshape(-1, x.shape[-1]) @ w).reshape(*x.shape[:-1], w.shape[1])


def _require(cache, kind):
    if cache is None:
        raise UsageError(f"{kind.__name__} missing: run the forward pass first")
    if not isinstance(cache, kind):
        raise UsageError(f"expected {kind.__name__}, got {type(cache).__name__}")
    if cache.consumed:
        raise UsageError(f"{kind.__name__} was already used by a backward pass")
    cache.consumed = True
    return cache


# ---------------------------------------------------------------- embedding


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    frozen: bool = False
    coverage: float | None = None  # fraction of vocab found in a pretrained file

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def embed(token_ids, table: EmbeddingTable) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size == 0:
        raise PreconditionError("cannot embed an empty id sequence")
    if ids.min() < 0 or ids.max() >= table.vocab_size:
        bad = int(ids.max()) if ids.max() >= table.vocab_size else int(ids.min())
        raise VocabIndexError(f"token id {bad} outside embedding table of size {table.vocab_size}")
    return table.matrix[ids]


def embed_backward(d_out: np.ndarray, token_ids, vocab_size: int) -> np.ndarray:
    """Scatter-add row gradients; the PAD row always receives zero."""
    ids = np.asarray(token_ids, dtype=np.int64).reshape(-1)
    d_out = np.asarray(d_out, dtype=DTYPE)
    grad = np.zeros((vocab_size, d_out.shape[-1]), dtype=DTYPE)
    np.add.at(grad, ids, d_out.reshape(-1, d_out.shape[-1]))
    grad[PAD_ID] = 0.0
    return grad


# ---------------------------------------------------------------- LSTM


@dataclass
class LstmParams:
    W: np.ndarray  # (4u, d)
    U: np.ndarray  # (4u, u)
    b: np.ndarray  # (4u,)

    @property
    def units(self) -> int:
        return self.U.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]


def init_lstm(rng: np.random.Generator, input_dim: int, units: int = 64) -> LstmParams:
    W = glorot_uniform(rng, 4 * units, input_dim)
    U = glorot_uniform(rng, 4 * units, units)
    b = np.zeros(4 * units, dtype=DTYPE)
    b[units : 2 * units] = 1.0  # forget gate
    return LstmParams(W, U, b)


@dataclass
class LstmCache:
    x: np.ndarray
    params: LstmParams
    gates: np.ndarray  # (B, T, 4u) post-activation i, f, g, o
    c: np.ndarray  # (B, T, u)
    tanh_c: np.ndarray
    h: np.ndarray
    h0: np.ndarray
    c0: np.ndarray
    single: bool
    consumed: bool = False


def lstm_forward(x, p: LstmParams, h0=None, c0=None):
    x, single = _batched(np.asarray(x, dtype=DTYPE), 3)
    B, T, d = x.shape
    u = p.units
    if T < 1:
        raise PreconditionError("LSTM needs at least one time step")
    if d != p.input_dim or p.W.shape[0] != 4 * u or p.b.shape != (4 * u,):
        raise DimensionError(f"LSTM params W{p.W.shape} U{p.U.shape} b{p.b.shape} do not fit input {x.shape}")
    h_prev = np.zeros((B, u)) if h0 is None else np.broadcast_to(np.asarray(h0, dtype=DTYPE), (B, u)).copy()
    c_prev = np.zeros((B, u)) if c0 is None else np.broadcast_to(np.asarray(c0, dtype=DTYPE), (B, u)).copy()
    h0_, c0_ = h_prev, c_prev

    xw = _mm(x, p.W.T) + p.b
    # sigmoid(z) = (1 + tanh(z / 2)) / 2, so one tanh call covers all four gates
    scale = np.full(4 * u, 0.5)
    scale[2 * u : 3 * u] = 1.0
    is_sig = scale == 0.5
    gates = np.empty((B, T, 4 * u))
    c = np.empty((B, T, u))
    tanh_c = np.empty((B, T, u))
    h = np.empty((B, T, u))
    UT = p.U.T
    for t in range(T):
        a = np.tanh((xw[:, t] + h_prev @ UT) * scale)
        a[:, is_sig] = 0.5 + 0.5 * a[:, is_sig]
        gates[:, t] = a
        c_prev = a[:, u : 2 * u] * c_prev + a[:, :u] * a[:, 2 * u : 3 * u]
        c[:, t] = c_prev
        tanh_c[:, t] = tc = np.tanh(c_prev)
        h[:, t] = h_prev = a[:, 3 * u :] * tc
    cache = LstmCache(x, p, gates, c, tanh_c, h, h0_, c0_, single)
    return (h[0] if single else h), cache


def lstm_backward(d_h, cache: LstmCache):
    """Backprop through time. Returns ``(dx, {"W", "U", "b"})``."""
    cache = _require(cache, LstmCache)
    p = cache.params
    u = p.units
    d_h, _ = _batched(np.asarray(d_h, dtype=DTYPE), 3)
    B, T, _ = cache.h.shape
    if d_h.shape != cache.h.shape:
        raise DimensionError(f"upstream gradient {d_h.shape} does not match hidden states {cache.h.shape}")
    gates = cache.gates
    dz = np.empty((B, T, 4 * u))
    dh_next = np.zeros((B, u))
    dc_next = np.zeros((B, u))
    for t in range(T - 1, -1, -1):
        i = gates[:, t, :u]
        f = gates[:, t, u : 2 * u]
        g = gates[:, t, 2 * u : 3 * u]
        o = gates[:, t, 3 * u :]
        tc = cache.tanh_c[:, t]
        c_prev = cache.c[:, t - 1] if t > 0 else cache.c0
        dh = d_h[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz[:, t, :u] = dc * g * i * (1.0 - i)
        dz[:, t, u : 2 * u] = dc * c_prev * f * (1.0 - f)
        dz[:, t, 2 * u : 3 * u] = dc * i * (1.0 - g * g)
        dz[:, t, 3 * u :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz[:, t] @ p.U
    h_prev = np.concatenate([cache.h0[:, None], cache.h[:, :-1]], axis=1)
    flat_dz = dz.reshape(B * T, 4 * u)
    grads = {
        "W": flat_dz.T @ cache.x.reshape(B * T, -1),
        "U": flat_dz.T @ h_prev.reshape(B * T, u),
        "b": flat_dz.sum(axis=0),
    }
    dx = _mm(dz, p.W)
    return (dx[0] if cache.single else dx), grads


# ---------------------------------------------------------------- Bi-LSTM


def reverse_index(lengths, T: int) -> np.ndarray:
    """Per-row index that reverses the first ``length`` positions and leaves pads in place.

    The map is an involution, so the same index undoes the reversal.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    t = np.arange(T)[None, :]
    return np.where(t < lengths[:, None], lengths[:, None] - 1 - t, t)


def _gather_time(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(x, idx[:, :, None], axis=1)


@dataclass
class BiLstmCache:
    fwd: LstmCache
    bwd: LstmCache
    rev: np.ndarray
    units: int
    single: bool
    consumed: bool = False


def bilstm_forward(x, p_fwd: LstmParams, p_bwd: LstmParams, lengths=None):
    """Concatenate a left-to-right and a right-to-left LSTM per position.

    ``lengths`` gives the real length of each row; the right-to-left pass
    reverses only those positions, so trailing pads never reach real tokens.
    """
    if p_fwd.units != p_bwd.units:
        raise ConfigError(f"Bi-LSTM directions disagree on units: {p_fwd.units} vs {p_bwd.units}")
    x, single = _batched(np.asarray(x, dtype=DTYPE), 3)
    B, T, _ = x.shape
    if lengths is None:
        lengths = np.full(B, T)
    rev = reverse_index(lengths, T)
    h_f, c_f = lstm_forward(x, p_fwd)
    h_r, c_b = lstm_forward(_gather_time(x, rev), p_bwd)
    out = np.concatenate([h_f, _gather_time(h_r, rev)], axis=2)
    cache = BiLstmCache(c_f, c_b, rev, p_fwd.units, single)
    return (out[0] if single else out), cache


def bilstm_backward(d_out, cache: BiLstmCache):
    """Returns ``(dx, grads_fwd, grads_bwd)``."""
    cache = _require(cache, BiLstmCache)
    d_out, _ = _batched(np.asarray(d_out, dtype=DTYPE), 3)
    u = cache.units
    dx_f, g_f = lstm_backward(d_out[:, :, :u], cache.fwd)
    dx_r, g_b = lstm_backward(_gather_time(d_out[:, :, u:], cache.rev), cache.bwd)
    dx = dx_f + _gather_time(dx_r, cache.rev)
    return (dx[0] if cache.single else dx), g_f, g_b


# ---------------------------------------------------------------- attention


@dataclass
class AttentionParams:
    W: np.ndarray  # (k_a, k)
    b: np.ndarray  # (k_a,)
    v: np.ndarray  # (k_a,)


def init_attention(rng: np.random.Generator, width: int, attn_width: int | None = None) -> AttentionParams:
    k_a = width if attn_width is None else attn_width
    return AttentionParams(
        glorot_uniform(rng, k_a, width),
        np.zeros(k_a, dtype=DTYPE),
        glorot_uniform(rng, k_a, 1)[:, 0].copy(),
    )


@dataclass
class AttentionCache:
    H: np.ndarray
    mask: np.ndarray
    proj: np.ndarray  # tanh(W h + b), (B, T, k_a)
    weights: np.ndarray
    params: AttentionParams
    single: bool
    consumed: bool = False


def self_attention(H, mask, p: AttentionParams):
    """Returns ``(context, weights, cache)``. Masked positions get weight exactly 0."""
    H, single = _batched(np.asarray(H, dtype=DTYPE), 3)
    mask, _ = _batched(np.asarray(mask, dtype=bool), 2)
    if mask.shape != H.shape[:2]:
        raise DimensionError(f"mask shape {mask.shape} does not match sequence shape {H.shape[:2]}")
    if not np.all(mask.any(axis=1)):
        raise PreconditionError("every sequence needs at least one unmasked position")
    if p.W.shape[1] != H.shape[2]:
        raise DimensionError(f"attention projection {p.W.shape} does not fit width {H.shape[2]}")
    proj = np.tanh(_mm(H, p.W.T) + p.b)
    scores = np.where(mask, proj @ p.v, -np.inf)
    weights = softmax(scores, axis=1)
    context = np.einsum("bt,btk->bk", weights, H)
    cache = AttentionCache(H, mask, proj, weights, p, single)
    if single:
        return context[0], weights[0], cache
    return context, weights, cache


def self_attention_backward(d_context, cache: AttentionCache):
    """Returns ``(dH, {"W", "b", "v"})``."""
    cache = _require(cache, AttentionCache)
    d_context, _ = _batched(np.asarray(d_context, dtype=DTYPE), 2)
    a, H, p = cache.weights, cache.H, cache.params
    dH = a[:, :, None] * d_context[:, None, :]
    da = np.einsum("btk,bk->bt", H, d_context)
    de = a * (da - np.sum(a * da, axis=1, keepdims=True))
    grads = {"v": np.einsum("bt,btj->j", de, cache.proj)}
    dpre = de[:, :, None] * p.v * (1.0 - cache.proj**2)
    grads["W"] = dpre.reshape(-1, dpre.shape[-1]).T @ H.reshape(-1, H.shape[-1])
    grads["b"] = dpre.sum(axis=(0, 1))
    dH += _mm(dpre, p.W)
    return (dH[0] if cache.single else dH), grads


# ---------------------------------------------------------------- classifier


@dataclass
class ClassifierParams:
    W: np.ndarray  # (K, k)
    b: np.ndarray  # (K,)

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]


def init_classifier(rng: np.random.Generator, width: int, n_classes: int) -> ClassifierParams:
    if n_classes < 2:
        raise ConfigError(f"need at least 2 intents, got {n_classes}")
    return ClassifierParams(glorot_uniform(rng, n_classes, width), np.zeros(n_classes, dtype=DTYPE))


@dataclass
class ClassifierCache:
    context: np.ndarray
    probs: np.ndarray
    params: ClassifierParams
    single: bool
    consumed: bool = False


def classify(context, p: ClassifierParams):
    """Returns ``(probs, cache)`` with ``probs = softmax(W context + b)``."""
    context, single = _batched(np.asarray(context, dtype=DTYPE), 2)
    if context.shape[1] != p.W.shape[1]:
        raise DimensionError(f"classifier weights {p.W.shape} do not fit context width {context.shape[1]}")
    probs = softmax(context @ p.W.T + p.b, axis=1)
    cache = ClassifierCache(context, probs, p, single)
    return (probs[0] if single else probs), cache


def classify_backward(d_logits, cache: ClassifierCache):
    """Takes the gradient w.r.t. the logits (``probs - onehot`` for cross-entropy)."""
    cache = _require(cache, ClassifierCache)
    d_logits, _ = _batched(np.asarray(d_logits, dtype=DTYPE), 2)
    grads = {"W": d_logits.T @ cache.context, "b": d_logits.sum(axis=0)}
    d_context = d_logits @ cache.params.W
    return (d_context[0] if cache.single else d_context), grads


def softmax_backward(d_probs: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. probabilities back to the logits."""
    return probs * (d_probs - np.sum(probs * d_probs, axis=-1, keepdims=True))
