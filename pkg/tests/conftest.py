import numpy as np
import pytest

from intentsan import data as D
from intentsan import model as M


@pytest.fixture(scope="session")
def synthetic_splits():
    """Committed corpus split 81/9/10 and id-encoded with a train-only vocabulary."""
    examples = D.load_dataset(D.DatasetSpec(format="jsonl"), D.synthetic_corpus_path())
    train, val, test = D.split(examples, (0.81, 0.09, 0.10), seed=0)
    vocab = D.Vocab.build(train)
    labels = D.collect_labels(examples)
    for part in (train, val, test):
        D.encode_examples(part, vocab, labels)
    return train, val, test, vocab, labels


def tiny_model(arch, seed, vocab_size=7, dim=3, units=3, n_classes=3, freeze=False):
    params = M.init_model(arch, vocab_size, dim, units, n_classes, seed, freeze_embeddings=freeze)
    rng = np.random.default_rng(seed + 1000)
    # larger than Glorot scale so every gate is away from saturation/zero
    for name in params.arrays:
        if name.endswith(".b"):
            params.arrays[name][:] = rng.normal(0, 0.3, params[name].shape)
    return params


def tiny_batch(seed, vocab_size=7, n_classes=3, B=2, T=4):
    rng = np.random.default_rng(seed)
    lengths = rng.integers(1, T + 1, size=B)
    lengths[0] = T
    seqs = [list(rng.integers(1, vocab_size, size=n)) for n in lengths]
    return D.pad_batch(seqs, rng.integers(0, n_classes, size=B))


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """One CLI ``train`` with every default (25 epochs, 64 units, 300-d) on the committed corpus."""
    import time

    from intentsan.cli import main

    out = tmp_path_factory.mktemp("default_run")
    start = time.perf_counter()
    code = main(["train", "--dataset", str(D.synthetic_corpus_path()), "--output-dir", str(out)])
    return code, out, time.perf_counter() - start


ACCEPTANCE: list[str] = []


def record(number: int, ok, detail: str) -> None:
    status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
    line = f"criterion {number}: {status}  {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
