"""Multi-level orthonormal Haar DWT.

Each stage splits the current approximation into pairwise sums and
differences scaled by 1/sqrt(2).  An odd-length stage repeats its final
sample; that last pair is scaled by 1/2 instead, so the lone sample passes
through unchanged with a zero detail and the transform keeps its energy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class WaveletDecomposition:
    approximation: np.ndarray
    details: tuple  # finest level first
    original_length: int
    basis: str = "haar"

    @property
    def levels(self):
        return len(self.details)

    def detail(self, level):
        return self.details[level - 1]

    def energy(self):
        return float(np.sum(self.approximation**2) + sum(np.sum(d**2) for d in self.details))

    def with_details(self, details):
        return WaveletDecomposition(self.approximation, tuple(details), self.original_length, self.basis)


def max_level(length):
    """Largest J with 2**J <= length."""
    return int(np.floor(np.log2(length))) if length >= 1 else 0


def _stage_lengths(length, levels):
    lengths = [length]
    for _ in range(levels):
        lengths.append(-(-lengths[-1] // 2))
    return lengths


def dwt_decompose(signal, levels):
    x = np.asarray(signal, dtype=float).ravel()
    n = x.size
    if levels < 1:
        raise DomainError(f"levels must be >= 1, got {levels}")
    if n == 0 or 2**levels > n:
        raise DomainError(f"{levels} levels need at least {2**levels} samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise DomainError("signal contains non-finite values")
    details = []
    a = x
    for _ in range(levels):
        odd = a.size % 2
        if odd:
            a = np.append(a, a[-1])
        even_part, odd_part = a[0::2], a[1::2]
        approx = (even_part + odd_part) / SQRT2
        detail = (even_part - odd_part) / SQRT2
        if odd:
            approx[-1] = a[-1]
            detail[-1] = 0.0
        details.append(detail)
        a = approx
    return WaveletDecomposition(a, tuple(details), n)


def dwt_reconstruct(decomposition):
    dec = decomposition
    lengths = _stage_lengths(dec.original_length, dec.levels)
    if dec.approximation.size != lengths[-1]:
        raise DomainError("approximation length does not match original_length")
    for level, d in enumerate(dec.details, start=1):
        if d.size != lengths[level]:
            raise DomainError(f"detail level {level} has length {d.size}, expected {lengths[level]}")
    a = np.asarray(dec.approximation, dtype=float)
    for level in range(dec.levels, 0, -1):
        d = np.asarray(dec.details[level - 1], dtype=float)
        target = lengths[level - 1]
        out = np.empty(2 * a.size)
        out[0::2] = (a + d) / SQRT2
        out[1::2] = (a - d) / SQRT2
        if target % 2:
            out[-2] = a[-1]
        a = out[:target]
    return a


def haar_detail_dense(signal, level):
    """Shift-invariant level-``level`` Haar detail at every sample.

    Value ``n`` is (sum of the ``h`` samples before n - sum of the ``h``
    samples from n on) / sqrt(2h), with ``h = 2**(level-1)`` and edge
    replication past either end.  Sampled at ``n = 2**level * k + h`` it
    equals the decimated coefficient ``k`` of :func:`dwt_decompose`
    wherever that block lies inside the signal.  A rising signal gives
    negative values.
    """
    x = np.asarray(signal, dtype=float).ravel()
    h = 2 ** (level - 1)
    padded = np.concatenate([np.full(h, x[0]), x, np.full(h, x[-1])])
    c = np.concatenate([[0.0], np.cumsum(padded)])
    idx = np.arange(x.size) + h
    before = c[idx] - c[idx - h]
    after = c[idx + h] - c[idx]
    return (before - after) / np.sqrt(2.0 * h)
