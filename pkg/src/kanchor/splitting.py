"""Seeded random partition of sample indices into consecutive blocks."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .exceptions import InvalidInputError


def random_split(n: int, sizes: Sequence[int], seed) -> list[np.ndarray]:
    """Permute ``range(n)`` with ``seed`` and cut it into blocks of ``sizes``."""
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes) or sum(sizes) != n:
        raise InvalidInputError(f"split sizes {tuple(sizes)} do not sum to {n}")
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([0] + sizes)
    return [perm[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def proportional_sizes(n: int, weights: Sequence[float]) -> tuple[int, ...]:
    """Integer block sizes proportional to ``weights`` that sum exactly to ``n``.

    Largest-remainder rounding; every block gets at least one sample when
    ``n`` allows it.
    """
    w = np.asarray(weights, dtype=float)
    if n < len(w):
        raise InvalidInputError(f"cannot split {n} samples into {len(w)} blocks")
    raw = n * w / w.sum()
    sizes = np.maximum(np.floor(raw).astype(int), 1)
    while sizes.sum() > n:
        sizes[np.argmax(sizes)] -= 1
    order = np.argsort(-(raw - np.floor(raw)), kind="stable")
    i = 0
    while sizes.sum() < n:
        sizes[order[i % len(w)]] += 1
        i += 1
    return tuple(int(s) for s in sizes)
