"""Dense float64 primitives, the seeded generator, and the finite-difference gradient checker.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Everything in the
package works in 64-bit; gradient checks at 1e-4 are not trustworthy in 32-bit.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .errors import DimensionError, NumericError, PreconditionError

DTYPE = np.float64

GradFn = Callable[[Mapping[str, np.ndarray]], "tuple[float, Mapping[str, np.ndarray]]"]


def make_rng(seed: int) -> np.random.Generator:
    """Return the package's deterministic generator.

    The bit generator is numpy's PCG64 seeded through ``SeedSequence``; its stream
    is specified by numpy and identical across platforms for a given seed.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent sub-stream keyed by ``(seed, *stream)``, e.g. one per epoch."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def as_tensor(values) -> np.ndarray:
    arr = np.array(values, dtype=DTYPE)
    if arr.ndim not in (1, 2):
        raise DimensionError(f"tensor must be rank 1 or 2, got shape {arr.shape}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax along ``axis``.

    Entries equal to ``-inf`` receive exactly zero probability, which is how
    masked positions are excluded; at least one entry per slice must be finite.
    """
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0 or v.shape[axis] == 0:
        raise PreconditionError("softmax of an empty vector")
    m = np.max(v, axis=axis, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise PreconditionError("softmax needs at least one finite entry per slice")
    e = np.exp(v - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=DTYPE)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def relative_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def grad_check(
    f: GradFn,
    params: Mapping[str, np.ndarray],
    rng: np.random.Generator,
    h: float = 1e-5,
    max_coords: int = 60,
    names=None,
) -> float:
    """Largest relative error between the analytic gradient and central differences.

    ``f(params)`` returns ``(value, grads)`` with ``grads[name]`` shaped like
    ``params[name]``. Arrays are perturbed in place and restored afterwards. An
    array with more than ``max_coords`` entries is checked on a random subsample
    of ``max_coords`` coordinates. Names absent from ``grads`` are treated as
    having zero analytic gradient (frozen arrays should then show zero FD slope).
    """
    if max_coords < 50:
        raise PreconditionError("max_coords must be at least 50")
    value, grads = f(params)
    if not np.isfinite(value):
        raise NumericError("objective is not finite at the base point")
    worst = 0.0
    for name in names if names is not None else list(params):
        arr = params[name]
        if not arr.flags.c_contiguous:
            raise PreconditionError(f"parameter {name!r} is not contiguous")
        flat = arr.reshape(-1)
        g = grads.get(name)
        g_flat = np.zeros(flat.size) if g is None else np.asarray(g, dtype=DTYPE).reshape(-1)
        if flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + h
            plus = f(params)[0]
            flat[idx] = orig - h
            minus = f(params)[0]
            flat[idx] = orig
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise NumericError(f"objective is not finite when perturbing {name}[{idx}]")
            fd = (plus - minus) / (2.0 * h)
            worst = max(worst, float(relative_error(g_flat[idx], fd)))
    return worst
