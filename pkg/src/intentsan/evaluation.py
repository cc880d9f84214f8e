"""Prediction, confusion matrices, and the accuracy / precision / recall / F1 suite."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import model as M
from .data import Example, pad_batch
from .errors import DataError, PreconditionError


@dataclass
class Prediction:
    predictions: np.ndarray  # (N,) class ids
    probs: np.ndarray  # (N, K)
    weights: list[np.ndarray]  # attention over the real tokens of each utterance


def predict(params: M.ModelParams, examples: Sequence[Example], batch_size: int = 64) -> Prediction:
    """Argmax intent per example; ties go to the lowest class id."""
    preds, probs, weights = [], [], []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        batch = pad_batch([ex.token_ids for ex in chunk], [0] * len(chunk))
        p, w = M.predict_proba(params, batch.ids, batch.mask)
        probs.append(p)
        preds.append(np.argmax(p, axis=1))
        weights.extend(w[r, :n].copy() for r, n in enumerate(batch.lengths))
    if not examples:
        return Prediction(np.zeros(0, dtype=np.int64), np.zeros((0, params.n_classes)), [])
    return Prediction(np.concatenate(preds), np.concatenate(probs), weights)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (K, K) int, rows gold, columns predicted
    labels: list[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(golds, preds, K: int, labels: Sequence[str] | None = None) -> ConfusionMatrix:
    golds = np.asarray(golds, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if golds.shape != preds.shape or golds.ndim != 1:
        raise DataError(f"gold/prediction length mismatch: {golds.shape} vs {preds.shape}")
    for name, arr in (("gold", golds), ("predicted", preds)):
        if arr.size and (arr.min() < 0 or arr.max() >= K):
            raise DataError(f"{name} id outside [0, {K})")
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (golds, preds), 1)
    names = list(labels) if labels is not None else [str(k) for k in range(K)]
    if len(names) != K:
        raise DataError(f"{len(names)} label names for {K} classes")
    return ConfusionMatrix(counts, names)


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


@dataclass
class EvalReport:
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    micro_f1: float
    macro_f1: float
    overall_f1: float
    confusion: ConfusionMatrix
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "overall_f1": self.overall_f1,
            "labels": self.confusion.labels,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": self.confusion.counts.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        cm = ConfusionMatrix(np.asarray(d["confusion"], dtype=np.int64), list(d["labels"]))
        return cls(d["accuracy"], d["precision"], d["recall"], d["f1"], d["micro_f1"], d["macro_f1"],
                   d["overall_f1"], cm, d.get("metadata", {}))


def metrics(cm: ConfusionMatrix, metadata: dict | None = None) -> EvalReport:
    """Metric suite from a confusion matrix.

    Precision, recall and F1 with a zero denominator are 0. Micro F1 pools
    TP/FP/FN over classes; overall F1 is the mean of micro and macro F1.
    """
    c = np.asarray(cm.counts, dtype=np.int64)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] == 0:
        raise PreconditionError(f"confusion matrix must be square and non-empty, got shape {c.shape}")
    total = int(c.sum())
    if total < 1:
        raise PreconditionError("confusion matrix holds no examples")
    tp = np.diag(c)
    fp = c.sum(axis=0) - tp
    fn = c.sum(axis=1) - tp
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    TP, FP, FN = int(tp.sum()), int(fp.sum()), int(fn.sum())
    # pooled form of 2PR/(P+R); integer operands make it round exactly like accuracy
    micro_f1 = 2 * TP / (2 * TP + FP + FN)
    macro_f1 = float(np.mean(f1))
    return EvalReport(
        accuracy=int(tp.sum()) / total,
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        micro_f1=float(micro_f1),
        macro_f1=macro_f1,
        overall_f1=(micro_f1 + macro_f1) / 2,
        confusion=cm,
        metadata=dict(metadata or {}),
    )


# ---------------------------------------------------------------- rendering


def render_confusion(cm: ConfusionMatrix) -> str:
    """Aligned grid: gold labels down the side, predicted labels along the bottom."""
    labels = cm.labels
    cell = max(max(len(str(v)) for v in cm.counts.ravel()), 3)
    side = max(len(l) for l in labels)
    col = [max(cell, len(l)) for l in labels]
    lines = [
        f"{label:<{side}}  " + "  ".join(f"{v:>{w}}" for v, w in zip(row, col))
        for label, row in zip(labels, cm.counts.tolist())
    ]
    lines.append(f"{'':<{side}}  " + "  ".join(f"{l:>{w}}" for l, w in zip(labels, col)))
    return "\n".join(lines)


def table_row(name: str, report: EvalReport) -> str:
    """One results row: accuracy as a percentage with one decimal, F1 with two decimals."""
    return f"{name}\t{100 * report.accuracy:.1f}\t{report.overall_f1:.2f}"


def emit_text(report: EvalReport, name: str = "model") -> str:
    labels = report.confusion.labels
    width = max(len(l) for l in labels + ["intent"])
    out = ["Model\tAcc(%)\tF1-s.", table_row(name, report), ""]
    out.append(f"{'intent':<{width}}  precision  recall     f1")
    for l, p, r, f in zip(labels, report.precision, report.recall, report.f1):
        out.append(f"{l:<{width}}  {p:9.2f}  {r:6.2f}  {f:5.2f}")
    out.append("")
    out.append(f"micro F1 {report.micro_f1:.2f}  macro F1 {report.macro_f1:.2f}  overall F1 {report.overall_f1:.2f}")
    out.append("")
    out.append("confusion matrix (rows: gold, columns: predicted)")
    out.append(render_confusion(report.confusion))
    for key in sorted(report.metadata):
        out.append(f"# {key} = {report.metadata[key]}")
    return "\n".join(out) + "\n"


def emit_json(report: EvalReport) -> str:
    """One line of JSON; floats keep full precision through ``repr`` round-tripping."""
    return json.dumps(report.to_dict(), sort_keys=True) + "\n"


def emit_report(report: EvalReport, format: str = "text", name: str = "model") -> str:
    if format == "text":
        return emit_text(report, name)
    if format in ("json", "jsonl"):
        return emit_json(report)
    raise ValueError(f"unknown report format {format!r}")


def parse_reports(text: str) -> list[EvalReport]:
    return [EvalReport.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
