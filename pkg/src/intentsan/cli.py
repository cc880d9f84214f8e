"""Command line entry point: ``intentsan train|evaluate|predict|dataset``.

Failures print one line ``error[<CODE>]: <message>`` on stderr and exit with
the status bound to the error class:

    2  usage (bad flags)          8  I/O
    3  E_CONFIG                   9  E_DIM
    4  E_DATA / E_PARSE           10 E_PRECONDITION
    5  E_CHECKPOINT*              11 E_USAGE
    7  E_NUMERIC                  12 E_VOCAB_INDEX
    13 E_LABEL_MISMATCH           14 E_MISSING_PATH
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import config as C
from . import data as D
from . import evaluation as E
from . import plotting
from . import training as T
from .errors import ConfigError, IntentSanError, LabelMismatchError
from .model import ARCHS

log = logging.getLogger("intentsan")

IO_EXIT = 8

_FLAG_CHOICES = {"arch": list(ARCHS), "freeze_embeddings": ["auto", "true", "false"], "loss_reduction": ["sum", "mean"]}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file (default: $%s/%s)" % (C.CONFIG_DIR_ENV, C.DEFAULT_CONFIG_NAME))
    for f in fields(C.CliConfig):
        p.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f.name,
            default=None,
            choices=_FLAG_CHOICES.get(f.name),
            metavar=None if f.name in _FLAG_CHOICES else f.name.upper(),
        )


def _overrides(args) -> dict:
    return {f.name: C.coerce(f.name, getattr(args, f.name)) for f in fields(C.CliConfig) if getattr(args, f.name) is not None}


def _write_history(history, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["epoch", "steps", "train_loss", "train_accuracy", "val_accuracy"])
        for h in history:
            w.writerow([h.epoch, h.steps, repr(h.train_loss), repr(h.train_accuracy), repr(h.val_accuracy)])


def read_history(path) -> list[T.EpochRecord]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    return [
        T.EpochRecord(int(r["epoch"]), int(r["steps"]), float(r["train_loss"]), float(r["train_accuracy"]), float(r["val_accuracy"]))
        for r in rows
    ]


def _load_splits(cfg: C.CliConfig):
    if not cfg.dataset:
        raise ConfigError("no dataset given (set dataset = <path> or --dataset)")
    spec = cfg.dataset_spec()
    examples = D.load_dataset(spec, cfg.dataset)
    val = D.load_dataset(spec, cfg.val_dataset) if cfg.val_dataset else None
    test = D.load_dataset(spec, cfg.test_dataset) if cfg.test_dataset else None
    if val is not None and test is not None:
        train = examples
    elif test is not None:
        train, val, _ = D.split(examples, (1 - cfg.val_fraction, cfg.val_fraction, 0.0), cfg.seed)
    elif val is not None:
        train, _, test = D.split(examples, (1 - cfg.test_fraction, 0.0, cfg.test_fraction), cfg.seed)
    else:
        train, val, test = D.split(examples, cfg.ratios, cfg.seed)
    if not train:
        raise ConfigError("the training split is empty")
    return train, val, test


def cmd_train(args) -> int:
    cfg = C.load_config(args.config, _overrides(args))
    tcfg = cfg.train_config()
    train, val, test = _load_splits(cfg)
    labels = D.collect_labels(train + val + test)
    vocab = D.Vocab.build(train)
    for part in (train, val, test):
        D.encode_examples(part, vocab, labels)
    table = None
    if tcfg.pretrained:
        table = D.load_embeddings(tcfg.embeddings, vocab, tcfg.embedding_dim, seed=tcfg.seed)
        print(f"embedding coverage {table.coverage:.3f}")
    print(f"{ARCHS[tcfg.arch]}: {len(train)} train / {len(val)} val / {len(test)} test, "
          f"{len(labels)} intents, vocabulary {len(vocab)}")

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.conf").write_text(cfg.render(), encoding="utf-8")
    for name, part in (("train", train), ("val", val), ("test", test)):
        D.write_jsonl(part, out / f"{name}.jsonl")

    def report(rec):
        print(f"epoch {rec.epoch:3d}  loss {rec.train_loss:.4f}  train acc {rec.train_accuracy:.4f}  val acc {rec.val_accuracy:.4f}")

    result = T.train(tcfg, train, val, vocab_size=len(vocab), n_classes=len(labels), embeddings=table, on_epoch=report)
    T.save_checkpoint(T.Checkpoint(tcfg, vocab, labels, result.params), out / "model.ckpt")
    _write_history(result.history, out / "history.tsv")
    plotting.plot_history(result.history, out / "history.png", title=ARCHS[tcfg.arch])
    print(f"wrote {out / 'model.ckpt'}")
    return 0


def _config_hash(tcfg: T.TrainConfig) -> str:
    return hashlib.sha256(json.dumps(tcfg.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def cmd_evaluate(args) -> int:
    ckpt = T.load_checkpoint(args.checkpoint)
    spec = D.DatasetSpec(format=args.format, lowercase=ckpt.config.lowercase)
    examples = D.load_dataset(spec, args.dataset)
    extra = sorted({ex.intent_name for ex in examples} - set(ckpt.labels))
    if extra:
        raise LabelMismatchError(
            f"dataset intents not known to the model: {extra}; model intents: {ckpt.labels}"
        )
    D.encode_examples(examples, ckpt.vocab, ckpt.labels)
    pred = E.predict(ckpt.params, examples)
    golds = [ex.intent_id for ex in examples]
    cm = E.confusion(golds, pred.predictions, len(ckpt.labels), ckpt.labels)
    name = args.name or ARCHS[ckpt.params.arch]
    meta = {
        "dataset": str(args.dataset),
        "model": ARCHS[ckpt.params.arch],
        "seed": ckpt.config.seed,
        "config_hash": _config_hash(ckpt.config),
        "examples": len(examples),
    }
    report = E.metrics(cm, meta)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(E.emit_report(report, "text", name), encoding="utf-8")
    (out / "report.jsonl").write_text(E.emit_report(report, "jsonl"), encoding="utf-8")
    plotting.plot_confusion(cm.counts, cm.labels, out / "confusion.png", title=name)
    print("Model\tAcc(%)\tF1-s.")
    print(E.table_row(name, report))
    return 0


def cmd_predict(args) -> int:
    ckpt = T.load_checkpoint(args.checkpoint)
    if args.text is not None:
        texts = [args.text]
    else:
        texts = Path(args.file).read_text(encoding="utf-8").splitlines()
    examples = [D.Example.from_text(t, ckpt.labels[0], ckpt.config.lowercase) for t in texts]
    for ex in examples:
        ex.token_ids = ckpt.vocab.encode(ex.tokens)
    pred = E.predict(ckpt.params, examples)
    lines = []
    for ex, k, probs, w in zip(examples, pred.predictions, pred.probs, pred.weights):
        line = f"{ckpt.labels[k]}\t{probs[k]:.6f}"
        if args.attention:
            line += "\t" + " ".join(f"{tok}={float(a)!r}" for tok, a in zip(ex.tokens, w))
        lines.append(line)
    sys.stdout.write("".join(line + "\n" for line in lines))
    return 0


def _stats_table(examples) -> str:
    rows = D.intent_counts(examples)
    out = ["Type of intent\tNumber"] + [f"{n}\t{c}" for n, c in rows]
    out.append(f"total\t{sum(c for _, c in rows)}")
    return "\n".join(out) + "\n"


def cmd_dataset(args) -> int:
    if args.action == "convert":
        rows = D.read_rows(args.input, args.format)
        examples = [D.Example(text=t, tokens=[], intent_name=i) for t, i in rows]
        D.write_jsonl(examples, args.output)
        print(f"wrote {len(examples)} examples to {args.output}")
    elif args.action == "synth":
        examples = D.generate_synthetic(args.intents, args.per_intent, args.seed)
        D.write_jsonl(examples, args.output)
        print(f"wrote {len(examples)} examples to {args.output}")
    else:
        rows = D.read_rows(args.input, args.format)
        sys.stdout.write(_stats_table([D.Example(text=t, tokens=[], intent_name=i) for t, i in rows]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intentsan", description="Self-attention + (Bi-)LSTM intent detection")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint, history and resolved config")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a labelled dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", default="jsonl", choices=D.FORMATS)
    p.add_argument("--output-dir", default="eval")
    p.add_argument("--name", default=None, help="row label in the results table")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify utterances")
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text")
    src.add_argument("--file", help="one utterance per line")
    p.add_argument("--attention", action="store_true", help="append token=weight pairs")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("dataset", help="convert, synthesize or summarize datasets")
    ds = p.add_subparsers(dest="action", required=True)
    q = ds.add_parser("convert", help="snips-nested/csv/seqin -> jsonl")
    q.add_argument("--input", required=True)
    q.add_argument("--format", required=True, choices=D.FORMATS)
    q.add_argument("--output", required=True)
    q = ds.add_parser("synth", help="write the templated synthetic corpus")
    q.add_argument("--intents", type=int, default=6)
    q.add_argument("--per-intent", type=int, default=100)
    q.add_argument("--seed", type=int, default=D.SYNTHETIC_SEED)
    q.add_argument("--output", required=True)
    q = ds.add_parser("stats", help="per-intent counts")
    q.add_argument("--input", required=True)
    q.add_argument("--format", default="jsonl", choices=D.FORMATS)
    p.set_defaults(func=cmd_dataset)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except IntentSanError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"error[E_IO]: {exc}", file=sys.stderr)
        return IO_EXIT


if __name__ == "__main__":
    sys.exit(main())
