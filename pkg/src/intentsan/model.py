"""SAN + LSTM and SAN + Bi-LSTM networks assembled from :mod:`intentsan.layers`.

Parameters live in one ordered name -> array map. The order is fixed:

    embedding,
    lstm_fwd.W, lstm_fwd.U, lstm_fwd.b,
    lstm_bwd.W, lstm_bwd.U, lstm_bwd.b      (bilstm only)
    attention.W, attention.b, attention.v,
    classifier.W, classifier.b
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .errors import ConfigError, UsageError
from .numeric import make_rng

ARCHS = {"lstm": "SAN+LSTM", "bilstm": "SAN+Bi-LSTM"}

BIAS_NAMES = ("lstm_fwd.b", "lstm_bwd.b", "attention.b", "classifier.b")


def param_names(arch: str) -> list[str]:
    if arch not in ARCHS:
        raise ConfigError(f"unknown architecture {arch!r}; expected one of {', '.join(ARCHS)}")
    names = ["embedding", "lstm_fwd.W", "lstm_fwd.U", "lstm_fwd.b"]
    if arch == "bilstm":
        names += ["lstm_bwd.W", "lstm_bwd.U", "lstm_bwd.b"]
    return names + ["attention.W", "attention.b", "attention.v", "classifier.W", "classifier.b"]


@dataclass
class ModelParams:
    arch: str
    arrays: dict[str, np.ndarray]
    frozen: frozenset = field(default_factory=frozenset)
    version: int = 0  # bumped by every optimizer step; forward caches remember it

    def __post_init__(self):
        expected = param_names(self.arch)
        if list(self.arrays) != expected:
            raise ConfigError(f"{ARCHS[self.arch]} expects arrays {expected}, got {list(self.arrays)}")
        self.frozen = frozenset(self.frozen)
        unknown = self.frozen - set(expected)
        if unknown:
            raise ConfigError(f"cannot freeze unknown arrays {sorted(unknown)}")
        u = self.arrays["lstm_fwd.U"].shape[1]
        k = 2 * u if self.arch == "bilstm" else u
        if self.arrays["attention.W"].shape[1] != k or self.arrays["classifier.W"].shape[1] != k:
            raise ConfigError(f"attention/classifier widths do not match encoder output width {k}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    @property
    def embedding(self) -> L.EmbeddingTable:
        return L.EmbeddingTable(self.arrays["embedding"], frozen="embedding" in self.frozen)

    @property
    def lstm_fwd(self) -> L.LstmParams:
        a = self.arrays
        return L.LstmParams(a["lstm_fwd.W"], a["lstm_fwd.U"], a["lstm_fwd.b"])

    @property
    def lstm_bwd(self) -> L.LstmParams:
        a = self.arrays
        return L.LstmParams(a["lstm_bwd.W"], a["lstm_bwd.U"], a["lstm_bwd.b"])

    @property
    def attention(self) -> L.AttentionParams:
        a = self.arrays
        return L.AttentionParams(a["attention.W"], a["attention.b"], a["attention.v"])

    @property
    def classifier(self) -> L.ClassifierParams:
        return L.ClassifierParams(self.arrays["classifier.W"], self.arrays["classifier.b"])

    @property
    def n_classes(self) -> int:
        return self.arrays["classifier.W"].shape[0]

    @property
    def units(self) -> int:
        return self.arrays["lstm_fwd.U"].shape[1]

    @property
    def vocab_size(self) -> int:
        return self.arrays["embedding"].shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.arrays["embedding"].shape[1]

    def trainable_names(self) -> list[str]:
        return [n for n in self.arrays if n not in self.frozen]

    def weight_names(self) -> list[str]:
        """Arrays covered by the L2 penalty: trainable and not a bias."""
        return [n for n in self.trainable_names() if n not in BIAS_NAMES]

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, {n: a.copy() for n, a in self.arrays.items()}, self.frozen, self.version)


def init_model(
    arch: str,
    vocab_size: int,
    embedding_dim: int,
    units: int,
    n_classes: int,
    seed: int,
    embeddings: L.EmbeddingTable | None = None,
    freeze_embeddings: bool | None = None,
) -> ModelParams:
    """Glorot-uniform weights, zero biases, forget-gate bias 1.

    Without ``embeddings`` the table is drawn uniform(-0.05, 0.05) and trainable.
    ``freeze_embeddings`` overrides the table's own flag.
    """
    param_names(arch)
    rng = make_rng(seed)
    if embeddings is None:
        table = rng.uniform(-0.05, 0.05, size=(vocab_size, embedding_dim))
        table[L.PAD_ID] = 0.0
        frozen = False
    else:
        if embeddings.matrix.shape != (vocab_size, embedding_dim):
            raise ConfigError(f"embedding table {embeddings.matrix.shape} does not match ({vocab_size}, {embedding_dim})")
        table = embeddings.matrix.copy()
        frozen = embeddings.frozen
    if freeze_embeddings is not None:
        frozen = freeze_embeddings
    arrays = {"embedding": table}
    fwd = L.init_lstm(rng, embedding_dim, units)
    arrays.update({"lstm_fwd.W": fwd.W, "lstm_fwd.U": fwd.U, "lstm_fwd.b": fwd.b})
    width = units
    if arch == "bilstm":
        bwd = L.init_lstm(rng, embedding_dim, units)
        arrays.update({"lstm_bwd.W": bwd.W, "lstm_bwd.U": bwd.U, "lstm_bwd.b": bwd.b})
        width = 2 * units
    att = L.init_attention(rng, width)
    arrays.update({"attention.W": att.W, "attention.b": att.b, "attention.v": att.v})
    cls = L.init_classifier(rng, width, n_classes)
    arrays.update({"classifier.W": cls.W, "classifier.b": cls.b})
    return ModelParams(arch, arrays, frozenset({"embedding"}) if frozen else frozenset())


@dataclass
class ForwardCache:
    ids: np.ndarray
    encoder: object
    attention: L.AttentionCache
    classifier: L.ClassifierCache
    version: int
    probs: np.ndarray
    weights: np.ndarray


def forward(params: ModelParams, ids, mask=None) -> tuple[np.ndarray, ForwardCache]:
    """Class probabilities ``(B, K)`` for a padded id matrix ``(B, T)``."""
    ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
    mask = ids != L.PAD_ID if mask is None else np.atleast_2d(np.asarray(mask, dtype=bool))
    x = L.embed(ids, params.embedding)
    if params.arch == "bilstm":
        H, enc = L.bilstm_forward(x, params.lstm_fwd, params.lstm_bwd, lengths=mask.sum(axis=1))
    else:
        H, enc = L.lstm_forward(x, params.lstm_fwd)
    context, weights, att = L.self_attention(H, mask, params.attention)
    probs, cls = L.classify(context, params.classifier)
    return probs, ForwardCache(ids, enc, att, cls, params.version, probs, weights)


def backward(params: ModelParams, cache: ForwardCache, d_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of every trainable array given the gradient at the logits."""
    if cache is None:
        raise UsageError("no forward cache: call forward() first")
    if cache.version != params.version:
        raise UsageError(f"stale forward cache (version {cache.version}, params at {params.version})")
    grads: dict[str, np.ndarray] = {}
    d_ctx, g = L.classify_backward(d_logits, cache.classifier)
    grads["classifier.W"], grads["classifier.b"] = g["W"], g["b"]
    dH, g = L.self_attention_backward(d_ctx, cache.attention)
    grads["attention.W"], grads["attention.b"], grads["attention.v"] = g["W"], g["b"], g["v"]
    if params.arch == "bilstm":
        dx, gf, gb = L.bilstm_backward(dH, cache.encoder)
        for key in "WUb":
            grads[f"lstm_bwd.{key}"] = gb[key]
    else:
        dx, gf = L.lstm_backward(dH, cache.encoder)
    for key in "WUb":
        grads[f"lstm_fwd.{key}"] = gf[key]
    if "embedding" not in params.frozen:
        grads["embedding"] = L.embed_backward(dx, cache.ids, params.vocab_size)
    return {n: grads[n] for n in params.arrays if n in grads}


def predict_proba(params: ModelParams, ids, mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Inference-only forward pass returning ``(probs, attention_weights)``."""
    probs, cache = forward(params, ids, mask)
    return probs, cache.weights
