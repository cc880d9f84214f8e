"""Text preprocessing, vocabulary, embeddings, dataset adapters, splits and batching."""

from __future__ import annotations

import csv
import json
import logging
import math
import re
import string
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, MissingPathError, ParseError, PreconditionError
from .layers import EmbeddingTable
from .numeric import DTYPE, make_rng
from .numwords import digits_to_words

log = logging.getLogger(__name__)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

FORMATS = ("jsonl", "csv", "snips-nested", "seqin")

_PUNCT_TO_SPACE = str.maketrans({ch: " " for ch in string.punctuation if ch != "'"} | {"'": ""})
_DIGITS = re.compile(r"[0-9]+")


def preprocess(text: str, lowercase: bool = True) -> list[str]:
    """Tokenize one utterance.

    ASCII apostrophes are deleted ("don't" -> "dont"), every other ASCII
    punctuation character becomes a space, and each maximal digit run is
    replaced by its English words. Input with no surviving token yields
    ``[UNK_TOKEN]``; that sentinel passes through unchanged, which keeps the
    function idempotent.
    """
    tokens: list[str] = []
    for raw in text.split():
        if raw == UNK_TOKEN:
            tokens.append(raw)
            continue
        if lowercase:
            raw = raw.lower()
        raw = raw.translate(_PUNCT_TO_SPACE)
        raw = _DIGITS.sub(lambda m: " " + " ".join(digits_to_words(m.group())) + " ", raw)
        tokens.extend(raw.split())
    return tokens or [UNK_TOKEN]


class Vocab:
    """Token <-> id map with ``<pad>`` = 0 and ``<unk>`` = 1; ids follow first occurrence."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self.stoi: dict[str, int] = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        idx = self.stoi.get(token)
        if idx is None:
            idx = self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return idx

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    @classmethod
    def build(cls, examples) -> "Vocab":
        """Vocabulary over ``Example`` objects or plain token lists."""
        examples = list(examples)
        if not examples:
            raise PreconditionError("cannot build a vocabulary from zero examples")
        vocab = cls()
        for ex in examples:
            for tok in ex.tokens if isinstance(ex, Example) else ex:
                vocab.add(tok)
        return vocab


build_vocab = Vocab.build


@dataclass
class Example:
    text: str
    tokens: list[str]
    intent_name: str
    intent_id: int = -1
    token_ids: list[int] = field(default_factory=list)

    @classmethod
    def from_text(cls, text: str, intent: str, lowercase: bool = True) -> "Example":
        return cls(text=text, tokens=preprocess(text, lowercase), intent_name=intent)


def encode_examples(examples: Sequence[Example], vocab: Vocab, labels: Sequence[str]) -> list[Example]:
    """Fill ``token_ids`` and ``intent_id`` in place; unseen tokens map to UNK."""
    index = {name: i for i, name in enumerate(labels)}
    unknown = sorted({ex.intent_name for ex in examples} - index.keys())
    if unknown:
        raise DataError(f"intents not in the trained label set: {', '.join(unknown)}")
    for ex in examples:
        ex.token_ids = vocab.encode(ex.tokens)
        ex.intent_id = index[ex.intent_name]
    return list(examples)


def collect_labels(examples: Iterable[Example]) -> list[str]:
    return sorted({ex.intent_name for ex in examples})


# ---------------------------------------------------------------- embeddings


def load_embeddings(path, vocab: Vocab, dim: int = 300, seed: int = 0) -> EmbeddingTable:
    """Read a word2vec/fastText text vector file into a table aligned with ``vocab``.

    Tokens missing from the file get uniform(-0.05, 0.05) rows drawn from the
    seeded generator; the PAD row is zero. The fraction of non-reserved vocab
    tokens found is stored as ``table.coverage``.
    """
    path = Path(path)
    rng = make_rng(seed)
    matrix = rng.uniform(-0.05, 0.05, size=(len(vocab), dim))
    found = np.zeros(len(vocab), dtype=bool)
    try:
        fh = path.open(encoding="utf-8", errors="strict")
    except OSError as exc:
        raise OSError(f"cannot read embedding file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\r\n ").split(" ")
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                if int(parts[1]) != dim:
                    raise ParseError(f"{path}:1: header declares dim {parts[1]}, expected {dim}")
                continue
            if parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise ParseError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            idx = vocab.stoi.get(parts[0])
            if idx is None or found[idx]:
                continue
            try:
                row = np.array(parts[1:], dtype=DTYPE)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric value ({exc})") from exc
            if not np.all(np.isfinite(row)):
                raise ParseError(f"{path}:{lineno}: non-finite value")
            matrix[idx] = row
            found[idx] = True
    matrix[PAD_ID] = 0.0
    real = len(vocab) - 2
    coverage = float(found[2:].sum() / real) if real > 0 else 1.0
    log.info("embedding coverage %.3f (%d of %d tokens)", coverage, int(found[2:].sum()), real)
    return EmbeddingTable(matrix, frozen=True, coverage=coverage)


def random_embeddings(vocab_size: int, dim: int, seed: int) -> EmbeddingTable:
    matrix = make_rng(seed).uniform(-0.05, 0.05, size=(vocab_size, dim))
    matrix[PAD_ID] = 0.0
    return EmbeddingTable(matrix, frozen=False)


# ---------------------------------------------------------------- datasets


@dataclass
class DatasetSpec:
    name: str = "dataset"
    format: str = "jsonl"
    intents: tuple[str, ...] | None = None
    ratios: tuple[float, float, float] = (0.81, 0.09, 0.10)
    seed: int = 0
    lowercase: bool = True

    def __post_init__(self):
        if self.format not in FORMATS:
            raise DataError(f"unknown dataset format {self.format!r}; expected one of {', '.join(FORMATS)}")
        check_ratios(self.ratios)


def check_ratios(ratios: Sequence[float]) -> None:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must be three non-negative numbers summing to 1, got {tuple(ratios)}")


def _read_jsonl(path: Path) -> list[tuple[str, str]]:
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or not isinstance(obj.get("text"), str) or not isinstance(obj.get("intent"), str):
                raise ParseError(f"{path}:{lineno}: expected an object with string fields 'text' and 'intent'")
            rows.append((obj["text"], obj["intent"]))
    return rows


def _read_csv(path: Path) -> list[tuple[str, str]]:
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"text", "intent"} <= set(reader.fieldnames):
            raise ParseError(f"{path}:1: header must contain columns text,intent")
        rows = []
        for row in reader:
            if row["text"] is None or row["intent"] is None:
                raise ParseError(f"{path}:{reader.line_num}: missing column value")
            rows.append((row["text"], row["intent"]))
    return rows


def _read_snips_file(path: Path) -> list[tuple[str, str]]:
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        text = raw.decode("latin-1")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: expected an object keyed by intent name")
    rows = []
    for intent, utterances in obj.items():
        if not isinstance(utterances, list):
            raise ParseError(f"{path}: intent {intent!r} must map to a list of utterances")
        for k, utt in enumerate(utterances):
            chunks = utt.get("data") if isinstance(utt, dict) else None
            if not isinstance(chunks, list):
                raise ParseError(f"{path}: {intent}[{k}] has no 'data' chunk list")
            rows.append(("".join(str(ch.get("text", "")) for ch in chunks), intent))
    return rows


def _read_snips(path: Path) -> list[tuple[str, str]]:
    if path.is_dir():
        files = sorted(path.rglob("*.json"))
        if not files:
            raise DataError(f"no .json files under {path}")
        return [row for f in files for row in _read_snips_file(f)]
    return _read_snips_file(path)


def _read_seqin(path: Path) -> list[tuple[str, str]]:
    # Directory holding parallel ``seq.in`` / ``label`` files, one utterance per line.
    seq, lab = path / "seq.in", path / "label"
    texts = seq.read_text(encoding="utf-8").splitlines()
    labels = lab.read_text(encoding="utf-8").splitlines()
    if len(texts) != len(labels):
        raise ParseError(f"{path}: seq.in has {len(texts)} lines but label has {len(labels)}")
    return [(t, l.strip()) for t, l in zip(texts, labels)]


_READERS = {"jsonl": _read_jsonl, "csv": _read_csv, "snips-nested": _read_snips, "seqin": _read_seqin}


def read_rows(path, fmt: str) -> list[tuple[str, str]]:
    path = Path(path)
    if fmt not in _READERS:
        raise DataError(f"unknown dataset format {fmt!r}")
    if not path.exists():
        raise MissingPathError(f"dataset path does not exist: {path}")
    rows = _READERS[fmt](path)
    if not rows:
        raise DataError(f"dataset {path} is empty")
    return rows


def load_dataset(spec: DatasetSpec, path) -> list[Example]:
    """Read and preprocess a dataset; ``intent_id`` follows ``spec.intents`` or sorted label names."""
    examples = [Example.from_text(text, intent, spec.lowercase) for text, intent in read_rows(path, spec.format)]
    labels = list(spec.intents) if spec.intents is not None else collect_labels(examples)
    index = {name: i for i, name in enumerate(labels)}
    unknown = sorted({ex.intent_name for ex in examples} - index.keys())
    if unknown:
        raise DataError(f"{path}: intents not in the label set: {', '.join(unknown)}")
    for ex in examples:
        ex.intent_id = index[ex.intent_name]
    return examples


def write_jsonl(examples: Iterable[Example], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({"text": ex.text, "intent": ex.intent_name}, ensure_ascii=False) + "\n")


def intent_counts(examples: Iterable[Example]) -> list[tuple[str, int]]:
    """Per-intent counts, largest first, ties by name."""
    counts = Counter(ex.intent_name for ex in examples)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


# ---------------------------------------------------------------- splitting


def _apportion(n: int, ratios: Sequence[float]) -> list[int]:
    # largest remainder; ties go to the earlier split
    exact = [n * r for r in ratios]
    counts = [math.floor(x + 1e-9) for x in exact]
    order = sorted(range(len(ratios)), key=lambda j: (-(exact[j] - counts[j]), j))
    for j in order[: n - sum(counts)]:
        counts[j] += 1
    return counts


def split(examples: Sequence[Example], ratios=(0.81, 0.09, 0.10), seed: int = 0):
    """Stratified seeded split into ``(train, val, test)``.

    Each intent is shuffled and apportioned by largest remainder, so every
    per-class count is within one of its exact share. Within each split the
    original corpus order is kept. A class smaller than the number of non-empty
    splits triggers a warning; its items still go wherever the remainders put them.
    """
    check_ratios(ratios)
    rng = make_rng(seed)
    by_class: dict[str, list[int]] = {}
    for i, ex in enumerate(examples):
        by_class.setdefault(ex.intent_name, []).append(i)
    active = sum(1 for r in ratios if r > 0)
    parts: list[list[int]] = [[], [], []]
    for name in sorted(by_class):
        idx = by_class[name]
        if len(idx) < active:
            warnings.warn(f"intent {name!r} has {len(idx)} examples, fewer than {active} splits", stacklevel=2)
        perm = [idx[k] for k in rng.permutation(len(idx))]
        start = 0
        for j, count in enumerate(_apportion(len(idx), ratios)):
            parts[j].extend(perm[start : start + count])
            start += count
    return tuple([examples[i] for i in sorted(p)] for p in parts)


# ---------------------------------------------------------------- batching


@dataclass
class Batch:
    ids: np.ndarray  # (B, T) int64, PAD-filled
    mask: np.ndarray  # (B, T) bool, True on real tokens
    labels: np.ndarray  # (B,) int64

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    def __len__(self) -> int:
        return self.ids.shape[0]


def pad_batch(sequences: Sequence[Sequence[int]], labels: Sequence[int]) -> Batch:
    if any(len(s) == 0 for s in sequences):
        raise PreconditionError("every sequence needs at least one token")
    T = max(len(s) for s in sequences)
    ids = np.full((len(sequences), T), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(sequences), T), dtype=bool)
    for r, s in enumerate(sequences):
        ids[r, : len(s)] = s
        mask[r, : len(s)] = True
    return Batch(ids, mask, np.asarray(labels, dtype=np.int64))


def make_batches(examples: Sequence[Example], batch_size: int, seed: int = 0, shuffle: bool = False) -> list[Batch]:
    if batch_size < 1:
        raise PreconditionError(f"batch_size must be >= 1, got {batch_size}")
    order = make_rng(seed).permutation(len(examples)) if shuffle else np.arange(len(examples))
    batches = []
    for start in range(0, len(examples), batch_size):
        chunk = [examples[i] for i in order[start : start + batch_size]]
        batches.append(pad_batch([ex.token_ids for ex in chunk], [ex.intent_id for ex in chunk]))
    return batches


# ---------------------------------------------------------------- synthetic corpus

_OPENERS = ["", "please", "could you", "can you", "hey", "i want to", "i would like you to", "go ahead and"]
_CLOSERS = ["", "please", "now", "right now", "for me", "thanks", "if you can"]
_ROOMS = ["kitchen", "bedroom", "living room", "bathroom", "garage", "office", "hallway", "basement"]

# (name, keywords, templates); keyword lists are pairwise disjoint and never used as filler
SMART_LIGHTS_INTENTS = [
    (
        "DecreaseBrightness",
        ["dim", "lower", "decrease", "reduce"],
        ["{open} {kw} the lights in the {room} {close}", "{open} {kw} the brightness in the {room} {close}",
         "{open} {kw} the {room} light a bit {close}"],
    ),
    (
        "IncreaseBrightness",
        ["brighten", "increase", "raise", "boost"],
        ["{open} {kw} the lights in the {room} {close}", "{open} {kw} the brightness in the {room} {close}",
         "{open} {kw} the {room} light a bit {close}"],
    ),
    (
        "SetLightBrightness",
        ["percent", "level"],
        ["{open} set the lights in the {room} to {num} {kw} {close}", "{open} put the {room} brightness at {num} {kw} {close}"],
    ),
    (
        "SetLightColor",
        ["red", "blue", "green", "purple", "orange", "yellow", "pink"],
        ["{open} set the lights in the {room} to {kw} {close}", "{open} make the {room} light {kw} {close}",
         "{open} change the {room} color to {kw} {close}"],
    ),
    (
        "SwitchLightOff",
        ["off", "out"],
        ["{open} switch {kw} the lights in the {room} {close}", "{open} turn the {room} light {kw} {close}",
         "{open} put {kw} the light in the {room} {close}"],
    ),
    (
        "SwitchLightOn",
        ["on"],
        ["{open} switch {kw} the lights in the {room} {close}", "{open} turn the {room} light {kw} {close}",
         "{open} put {kw} the light in the {room} {close}"],
    ),
]

_SYLLABLES = ["ka", "lo", "mi", "ter", "vu", "san", "ri", "dex"]


def _generic_intent(i: int):
    kw = _SYLLABLES[i % 8] + _SYLLABLES[(i // 8) % 8] + _SYLLABLES[(i // 64) % 8] + "x"
    return (f"SyntheticIntent{i:02d}", [kw], ["{open} {kw} the {room} {close}", "{open} do the {kw} in the {room} {close}"])


def synthetic_intents(n: int):
    return [SMART_LIGHTS_INTENTS[i] if i < len(SMART_LIGHTS_INTENTS) else _generic_intent(i) for i in range(n)]


def generate_synthetic(intents: int = 6, per_intent: int = 100, seed: int = 0, lowercase: bool = True) -> list[Example]:
    """Templated smart-lights style utterances.

    Each utterance contains exactly one keyword of its own intent and none of
    any other intent, so keyword lookup separates the classes perfectly.
    """
    if intents < 2:
        raise PreconditionError(f"need at least 2 intents, got {intents}")
    rng = make_rng(seed)
    out = []
    for name, keywords, templates in synthetic_intents(intents):
        for _ in range(per_intent):
            text = templates[rng.integers(len(templates))].format(
                open=_OPENERS[rng.integers(len(_OPENERS))],
                kw=keywords[rng.integers(len(keywords))],
                room=_ROOMS[rng.integers(len(_ROOMS))],
                num=int(rng.integers(1, 101)),
                close=_CLOSERS[rng.integers(len(_CLOSERS))],
            )
            text = " ".join(text.split())
            text = text[0].upper() + text[1:] + ("." if rng.random() < 0.5 else "")
            out.append(Example.from_text(text, name, lowercase))
    labels = [name for name, _, _ in synthetic_intents(intents)]
    index = {name: i for i, name in enumerate(sorted(labels))}
    for ex in out:
        ex.intent_id = index[ex.intent_name]
    return out


def keyword_oracle(tokens: Sequence[str], intents: int) -> str | None:
    """Name of the single intent whose keyword appears in ``tokens`` (None if not unique)."""
    hits = {name for name, kws, _ in synthetic_intents(intents) if set(kws) & set(tokens)}
    return hits.pop() if len(hits) == 1 else None


SYNTHETIC_SEED = 7


def synthetic_corpus_path() -> Path:
    """The committed 6 x 100 corpus, identical to ``generate_synthetic(6, 100, SYNTHETIC_SEED)``."""
    return Path(__file__).parent / "resources" / "synthetic_6x100.jsonl"
