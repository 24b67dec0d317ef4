"""Seeded randomness shared by every stage.

All stages draw from ``numpy.random.Generator`` (PCG64, 64-bit state).
Sub-streams come from ``SeedSequence`` so that a single integer seed fixes a
whole pipeline run.
"""

from __future__ import annotations

import hashlib
from typing import Sequence, TypeVar

import numpy as np
from scipy.special import zeta

T = TypeVar("T")


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed: int, *keys: int | str) -> int:
    """Deterministic 63-bit child seed of ``seed`` for the given key path."""
    words = [seed & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            k = int.from_bytes(hashlib.sha256(k.encode()).digest()[:8], "little")
        words.append(int(k) & 0xFFFFFFFFFFFFFFFF)
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def sample_without_replacement(items: Sequence[T], k: int, rng: np.random.Generator) -> list[T]:
    """Uniform ``k``-subset via a partial Fisher-Yates shuffle.

    Callers pass a sorted sequence so the draw is platform-independent. The
    first ``k`` picks do not depend on ``k``: samples for increasing ``k``
    from equally seeded generators are nested.
    """
    if not 0 <= k <= len(items):
        raise ValueError(f"cannot draw {k} of {len(items)} items")
    pool = list(items)
    n = len(pool)
    for i in range(k):
        j = i + int(rng.integers(n - i))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def discrete_power_law(alpha: float, xmin: int, size: int, rng: np.random.Generator,
                       table_max: int = 100_000) -> np.ndarray:
    """Exact inverse-transform draws from p(x) = x^-alpha / zeta(alpha, xmin), x >= xmin.

    The CDF is tabulated up to ``table_max``; the rare draws beyond it use the
    continuous approximation of the tail.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    xs = np.arange(xmin, table_max + 1)
    cdf = 1.0 - zeta(alpha, xs + 1) / zeta(alpha, xmin)
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="left")
    out = np.empty(size, dtype=np.int64)
    inside = idx < len(xs)
    out[inside] = xs[idx[inside]]
    tail_u = u[~inside]
    if tail_u.size:
        # P(X > x) ~ (x + 0.5)^(1-alpha) * scale beyond the table
        s_tab = 1.0 - cdf[-1]
        tail = (table_max + 0.5) * ((1.0 - tail_u) / s_tab) ** (-1.0 / (alpha - 1.0))
        out[~inside] = np.maximum(np.floor(tail).astype(np.int64), table_max + 1)
    return out
