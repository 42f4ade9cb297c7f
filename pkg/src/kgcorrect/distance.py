"""Unit-cost edit distance over arbitrary symbol sequences."""

from __future__ import annotations

from typing import Sequence

__all__ = ["levenshtein"]


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance between two sequences (strings, phoneme lists, word lists).

    Single insertions, deletions, and substitutions all cost 1.
    """

    if a == b:
        return 0
    # keep the inner loop over the shorter sequence
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, sym_a in enumerate(a, start=1):
        current = [i]
        for j, sym_b in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[-1] + 1,
                    previous[j - 1] + (sym_a != sym_b),
                )
            )
        previous = current
    return previous[-1]
