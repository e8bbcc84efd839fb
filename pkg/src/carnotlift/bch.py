"""Dynkin's form of the Baker-Campbell-Hausdorff series as exact word coefficients.

A word is a tuple over {0, 1} (0 = X, 1 = Y) standing for the right-nested
bracket ``[w_1, [w_2, [..., w_m]]]``.  ``dynkin_words(s)`` collects every word of
length <= s with its rational coefficient, so that

    log(exp X exp Y) = sum_w coeff(w) [w]        (exact in step <= s).
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np


def _compositions(total: int, parts: int):
    """Ordered tuples of ``parts`` pairs (r, s) with r + s >= 1 summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for size in range(1, total - parts + 2):
        for r in range(size + 1):
            for rest in _compositions(total - size, parts - 1):
                yield ((r, size - r),) + rest


@lru_cache(maxsize=None)
def dynkin_words(step: int) -> tuple[tuple[tuple[int, ...], Fraction], ...]:
    coeffs: dict[tuple[int, ...], Fraction] = {}
    for m in range(1, step + 1):
        for n in range(1, m + 1):
            sign = Fraction((-1) ** (n - 1), n)
            for comp in _compositions(m, n):
                denom = m
                word: list[int] = []
                for r, s in comp:
                    denom *= factorial(r) * factorial(s)
                    word += [0] * r + [1] * s
                # nested brackets ending in a repeated letter vanish
                if m > 1 and word[-1] == word[-2]:
                    continue
                key = tuple(word)
                coeffs[key] = coeffs.get(key, Fraction(0)) + sign / denom
    return tuple((w, c) for w, c in sorted(coeffs.items()) if c != 0)


def bch(x: np.ndarray, y: np.ndarray, tensor: np.ndarray, step: int) -> np.ndarray:
    """Evaluate the truncated series on batched coordinate vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    if step <= 1 or not np.any(tensor):
        return x + y
    cache: dict[tuple[int, ...], np.ndarray] = {(0,): x, (1,): y}

    def nested(word: tuple[int, ...]) -> np.ndarray:
        val = cache.get(word)
        if val is None:
            inner = nested(word[1:])
            left = x if word[0] == 0 else y
            val = np.einsum("...i,...j,ijk->...k", left, inner, tensor)
            cache[word] = val
        return val

    out = np.zeros_like(x)
    for word, c in dynkin_words(step):
        out = out + float(c) * nested(word)
    return out
