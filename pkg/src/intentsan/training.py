"""Regularized cross-entropy objective, Adam, the training loop, and checkpoints."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import model as M
from .data import Example, Vocab, make_batches
from .errors import (
    ArchitectureMismatchError,
    CheckpointError,
    ConfigError,
    CorruptCheckpointError,
    DataError,
    IntentSanError,
    NumericError,
    PreconditionError,
)
from .layers import EmbeddingTable

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    epochs: int = 25
    l2_gamma: float = 0.01
    hidden_units: int = 64
    embedding_dim: int = 300
    seed: int = 0
    arch: str = "bilstm"
    embeddings: str = "random"  # "random" or a path to a text vector file
    freeze_embeddings: bool | None = None  # None: frozen iff pretrained
    loss_reduction: str = "sum"
    lowercase: bool = True  # preprocessing flag, kept so inference matches training

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("learning_rate", "epsilon"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be a positive finite number, got {value}")
        if not (self.l2_gamma >= 0 and math.isfinite(self.l2_gamma)):
            raise ConfigError(f"l2_gamma must be a finite number >= 0, got {self.l2_gamma}")
        for name in ("beta1", "beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {getattr(self, name)}")
        for name in ("batch_size", "epochs", "hidden_units", "embedding_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.arch not in M.ARCHS:
            raise ConfigError(f"arch must be one of {', '.join(M.ARCHS)}, got {self.arch!r}")
        if self.loss_reduction not in ("sum", "mean"):
            raise ConfigError(f"loss_reduction must be 'sum' or 'mean', got {self.loss_reduction!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def pretrained(self) -> bool:
        return self.embeddings != "random"

    @property
    def embeddings_frozen(self) -> bool:
        return self.pretrained if self.freeze_embeddings is None else self.freeze_embeddings

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------- objective


def l2_penalty(params: M.ModelParams) -> float:
    return float(sum(np.sum(params[n] ** 2) for n in params.weight_names()))


def loss(probs, labels, params: M.ModelParams | None, gamma: float, reduction: str = "sum") -> float:
    """Cross-entropy summed over the batch plus ``gamma`` times the squared L2 norm of the weights.

    ``log`` is clamped at ``1e-12``. With ``reduction="mean"`` the data term is
    divided by the batch size; the penalty is never rescaled.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    B, K = probs.shape
    if labels.shape != (B,):
        raise PreconditionError(f"{labels.shape[0]} labels for {B} probability rows")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise PreconditionError("probability rows must sum to 1 within 1e-6")
    if np.any(labels < 0) or np.any(labels >= K):
        raise DataError(f"label ids must lie in [0, {K}), got {labels.min()}..{labels.max()}")
    picked = probs[np.arange(B), labels]
    data_term = float(-np.sum(np.log(np.maximum(picked, LOG_CLAMP))))
    if reduction == "mean":
        data_term /= B
    return data_term + (gamma * l2_penalty(params) if params is not None and gamma else 0.0)


def objective(params: M.ModelParams, batch, gamma: float, reduction: str = "sum"):
    """``(J, grads)`` for one padded batch; grads cover every trainable array."""
    probs, cache = M.forward(params, batch.ids, batch.mask)
    J = loss(probs, batch.labels, params, gamma, reduction)
    d_logits = probs.copy()
    d_logits[np.arange(len(batch.labels)), batch.labels] -= 1.0
    if reduction == "mean":
        d_logits /= len(batch.labels)
    grads = M.backward(params, cache, d_logits)
    if gamma:
        for name in params.weight_names():
            grads[name] = grads[name] + 2.0 * gamma * params[name]
    return J, grads, probs


# ---------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: M.ModelParams) -> "AdamState":
        names = params.trainable_names()
        return cls({n: np.zeros_like(params[n]) for n in names}, {n: np.zeros_like(params[n]) for n in names}, 0)


def adam_step(params: M.ModelParams, grads: dict, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update, in place. Frozen arrays are never touched."""
    names = params.trainable_names()
    for name in names:
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != params[name].shape:
            raise PreconditionError(f"gradient for {name} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name in names:
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.setdefault(name, np.zeros_like(g))
        v = state.v.setdefault(name, np.zeros_like(g))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params.arrays[name] -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
    params.version += 1
    return params, state


# ---------------------------------------------------------------- training loop


@dataclass
class EpochRecord:
    epoch: int
    steps: int
    train_loss: float  # mean objective per training example over the epoch
    train_accuracy: float
    val_accuracy: float


@dataclass
class TrainResult:
    params: M.ModelParams
    history: list[EpochRecord]


def _check_examples(examples: Sequence[Example], vocab_size: int, n_classes: int, what: str) -> None:
    for k, ex in enumerate(examples):
        if not ex.token_ids:
            raise DataError(f"{what} example {k} has no token ids (was the vocabulary applied?)")
        if not 0 <= ex.intent_id < n_classes:
            raise DataError(f"{what} example {k}: label id {ex.intent_id} outside [0, {n_classes})")
        if min(ex.token_ids) < 0 or max(ex.token_ids) >= vocab_size:
            raise DataError(f"{what} example {k}: token id outside vocabulary of size {vocab_size}")


def epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([int(seed), epoch]).generate_state(1, np.uint64)[0])


def steps_per_epoch(n_examples: int, batch_size: int) -> int:
    return math.ceil(n_examples / batch_size)


def train(
    cfg: TrainConfig,
    train_set: Sequence[Example],
    val_set: Sequence[Example] = (),
    *,
    vocab_size: int,
    n_classes: int,
    embeddings: EmbeddingTable | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Mini-batch Adam for exactly ``cfg.epochs`` epochs; returns the final-epoch model.

    Examples must already carry ``token_ids`` and ``intent_id``. Validation
    accuracy is recorded per epoch and has no influence on training.
    """
    from .evaluation import predict  # evaluation imports model only; keep the import local

    if not train_set:
        raise DataError("training set is empty")
    _check_examples(train_set, vocab_size, n_classes, "train")
    _check_examples(val_set, vocab_size, n_classes, "validation")
    params = M.init_model(
        cfg.arch, vocab_size, cfg.embedding_dim, cfg.hidden_units, n_classes, cfg.seed,
        embeddings=embeddings, freeze_embeddings=cfg.embeddings_frozen,
    )
    state = AdamState.for_params(params)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        batches = make_batches(train_set, cfg.batch_size, seed=epoch_seed(cfg.seed, epoch), shuffle=True)
        total, correct = 0.0, 0
        for batch in batches:
            J, grads, probs = objective(params, batch, cfg.l2_gamma, cfg.loss_reduction)
            total += J
            correct += int(np.sum(np.argmax(probs, axis=1) == batch.labels))
            adam_step(params, grads, state, cfg)
        val_acc = float("nan")
        if val_set:
            preds = predict(params, val_set).predictions
            val_acc = float(np.mean(preds == np.array([ex.intent_id for ex in val_set])))
        record = EpochRecord(epoch, len(batches), total / len(train_set), correct / len(train_set), val_acc)
        history.append(record)
        log.info("epoch %d loss %.4f train_acc %.4f val_acc %.4f", epoch, record.train_loss, record.train_accuracy, val_acc)
        if on_epoch is not None:
            on_epoch(record)
    return TrainResult(params, history)


# ---------------------------------------------------------------- checkpoints

MAGIC = b"INTENTSAN-CKPT\n"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: TrainConfig
    vocab: Vocab
    labels: list[str]
    params: M.ModelParams
    version: int = FORMAT_VERSION


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Binary layout, all integers little-endian:

    magic ``INTENTSAN-CKPT\\n`` | u32 format version | u64 metadata length |
    metadata (UTF-8 JSON: arch, config, vocab, labels, frozen, array names/shapes) |
    per array: u32 name length, name, u32 rank, u64 per dim, float64 data |
    u32 CRC-32 of everything before it.
    """
    params = ckpt.params
    meta = {
        "arch": params.arch,
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab.itos,
        "labels": list(ckpt.labels),
        "frozen": sorted(params.frozen),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in params.arrays.items()],
    }
    meta_bytes = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    chunks = [MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(meta_bytes)), meta_bytes]
    for name, arr in params.arrays.items():
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)) + nb)
        chunks.append(struct.pack(f"<I{arr.ndim}Q", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(chunks)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptCheckpointError("checkpoint is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, expected_arch: str | None = None) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not buf.startswith(MAGIC):
        raise CorruptCheckpointError(f"{path} is not a checkpoint (bad magic)")
    r = _Reader(buf)
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    if len(buf) < len(MAGIC) + 16:
        raise CorruptCheckpointError(f"{path}: checkpoint is truncated")
    (crc,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(buf[:-4]) != crc:
        raise CorruptCheckpointError(f"{path}: checksum mismatch (truncated or corrupted file)")
    (meta_len,) = r.unpack("<Q")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
        arch = meta["arch"]
        declared = meta["arrays"]
        config = TrainConfig(**meta["config"])
    except (ValueError, KeyError, TypeError, IntentSanError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable metadata ({exc})") from exc
    if expected_arch is not None and arch != expected_arch:
        raise ArchitectureMismatchError(
            f"{path} holds a {M.ARCHS.get(arch, arch)} model, expected {M.ARCHS.get(expected_arch, expected_arch)}"
        )
    arrays = {}
    for entry in declared:
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}Q")
        if name != entry["name"] or list(shape) != entry["shape"]:
            raise CorruptCheckpointError(f"{path}: array {name!r} {shape} disagrees with metadata")
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(buf) - 4:
        raise CorruptCheckpointError(f"{path}: trailing bytes after arrays")
    try:
        params = M.ModelParams(arch, arrays, frozenset(meta["frozen"]))
    except ConfigError as exc:
        raise ArchitectureMismatchError(f"{path}: arrays do not fit the declared architecture ({exc})") from exc
    vocab = Vocab()
    for tok in meta["vocab"][2:]:
        vocab.add(tok)
    if vocab.itos != meta["vocab"]:
        raise CorruptCheckpointError(f"{path}: vocabulary is not a valid id list")
    if len(vocab) != params.vocab_size or len(meta["labels"]) != params.n_classes:
        raise ArchitectureMismatchError(f"{path}: vocabulary/labels do not match the array shapes")
    return Checkpoint(config, vocab, list(meta["labels"]), params, version)
