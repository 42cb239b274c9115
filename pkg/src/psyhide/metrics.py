"""Word error rate, perceptibility and SNR."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from psyhide._validation import DimensionError

_PUNCT = re.compile(r"[^\w\s']")


def tokenize(text: str) -> list[str]:
    """Whitespace split with punctuation stripped and upper-case folding."""
    return _PUNCT.sub(" ", text).upper().split()


@dataclass(frozen=True)
class WerBreakdown:
    deletions: int
    insertions: int
    substitutions: int
    ref_length: int

    @property
    def errors(self) -> int:
        return self.deletions + self.insertions + self.substitutions

    @property
    def wer(self) -> float:
        return self.errors / self.ref_length


def wer(reference, hypothesis) -> WerBreakdown:
    """Levenshtein alignment of two word sequences.

    Strings are tokenized first. Among minimum-cost alignments the backtrace
    prefers a substitution (or match) over a deletion/insertion pair.
    """
    ref = tokenize(reference) if isinstance(reference, str) else list(reference)
    hyp = tokenize(hypothesis) if isinstance(hypothesis, str) else list(hypothesis)
    n, m = len(ref), len(hyp)
    if n == 0:
        raise ValueError("reference must contain at least one word")

    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            cost[i, j] = min(diag, cost[i - 1, j] + 1, cost[i, j - 1] + 1)

    dels = ins = subs = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return WerBreakdown(dels, ins, subs, n)


def phi(matrix) -> float:
    """Mean over all bins of the strictly positive entries (others count as zero)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.size == 0:
        return 0.0
    return float(np.sum(matrix[matrix > 0]) / matrix.size)


def snr(original, adversarial) -> float:
    """10*log10 of signal energy over perturbation energy; +inf for no perturbation."""
    x = getattr(original, "samples", original)
    y = getattr(adversarial, "samples", adversarial)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError("signals differ in length")
    p_x = float(np.sum(x**2))
    if p_x == 0:
        raise ValueError("original signal is all zeros")
    p_noise = float(np.sum((y - x) ** 2))
    if p_noise == 0:
        return float("inf")
    return 10.0 * np.log10(p_x / p_noise)
