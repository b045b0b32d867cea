"""Cumulative binary encoding (CBE) of scaled values and the distribution
over valid encodings derived from independent per-bin probabilities.

A value is quantized on a uniform grid of ``D`` bins between ``b0`` and
``bD``.  Its encoding is a monotone bit vector ``1...10...0`` whose number of
leading ones ``m`` identifies the bin, so every encoding is fully described
by ``m`` in ``0..D``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_EPS = 1e-12
_PROB_SLACK = 1e-9


@dataclass(frozen=True)
class Binning:
    """Uniform quantization grid shared by encoder, decoder and model head."""

    b0: float = -5.0
    bD: float = 5.0
    D: int = 1000

    def __post_init__(self):
        if not (np.isfinite(self.b0) and np.isfinite(self.bD)):
            raise ValueError("bin edges must be finite")
        if self.bD <= self.b0:
            raise ValueError(f"bD ({self.bD}) must exceed b0 ({self.b0})")
        if int(self.D) != self.D or self.D < 1:
            raise ValueError(f"bin count must be a positive integer, got {self.D}")

    @property
    def width(self) -> float:
        return (self.bD - self.b0) / self.D

    def edge(self, d):
        """Edge ``d`` for ``d`` in ``0..D`` (vectorized)."""
        return self.b0 + np.asarray(d) * self.width

    @property
    def edges(self) -> np.ndarray:
        return self.edge(np.arange(self.D + 1))


@dataclass(frozen=True)
class CbeVector:
    bits: np.ndarray

    @property
    def m(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def from_count(cls, m: int, D: int) -> "CbeVector":
        if not 0 <= m <= D:
            raise ValueError(f"ones count {m} outside 0..{D}")
        bits = np.zeros(D, dtype=np.float64)
        bits[:m] = 1.0
        return cls(bits)


@dataclass(frozen=True)
class Scale:
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"scale must be positive, got {self.s}")


@dataclass(frozen=True)
class BinDistribution:
    """Normalized log-probabilities over encodings.

    Entry ``i`` of ``log_probs`` is the outcome ``m = i + m_offset``.  The
    cumulative codec uses ``m_offset = 0`` (outcomes ``0..D``); the one-hot
    head has no "below range" outcome and uses ``m_offset = 1``.
    """

    log_probs: np.ndarray
    log_z: float = 0.0
    m_offset: int = 0

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


def mean_scale(context) -> Scale:
    x = np.asarray(context, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty context")
    s = float(np.mean(np.abs(x)))
    # all-zero context encodes identically under any scale
    return Scale(s if s > 0 else 1.0)


def ones_count(x_scaled, binning: Binning):
    """Number of leading ones of the encoding of ``x_scaled`` (vectorized).

    Component ``d`` (1-based) is set iff ``x_scaled >= edge(d - 1)``, so the
    count is the number of edges ``0..D-1`` at or below the value.
    """
    x = np.asarray(x_scaled, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot encode non-finite value")
    # searchsorted on the exact edges avoids floor() rounding at bin boundaries
    m = np.searchsorted(binning.edges[:-1], x, side="right")
    return m if m.ndim else int(m)


def encode(x_scaled: float, binning: Binning) -> CbeVector:
    return CbeVector.from_count(ones_count(float(x_scaled), binning), binning.D)


def encode_many(x_scaled, binning: Binning) -> np.ndarray:
    """Encode an array of values; returns bits with a trailing axis of size D."""
    m = np.asarray(ones_count(np.asarray(x_scaled, dtype=np.float64), binning))
    return (np.arange(binning.D) < m[..., None]).astype(np.float64)


def decode(m, binning: Binning):
    """Bin midpoint for ``m >= 1``; ``m = 0`` (below range) clamps to ``b0``."""
    m_arr = np.asarray(m)
    if np.any(m_arr < 0) or np.any(m_arr > binning.D):
        raise ValueError(f"ones count outside 0..{binning.D}: {m}")
    mid = binning.b0 + (m_arr - 0.5) * binning.width
    out = np.where(m_arr == 0, binning.b0, mid)
    return float(out) if out.ndim == 0 else out


def valid_sequence_log_probs(p) -> BinDistribution:
    """Distribution over the ``D + 1`` valid encodings given per-bit
    probabilities ``p``.

    The unnormalized log weight of ``m`` leading ones is
    ``sum(log p[:m]) + sum(log(1 - p[m:]))``, evaluated for all ``m`` at once
    with prefix sums.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("expected a non-empty 1-d probability vector")
    if np.any(~np.isfinite(p)) or np.any(p < -_PROB_SLACK) or np.any(p > 1 + _PROB_SLACK):
        raise ValueError("probabilities must lie in [0, 1]")
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return _from_log_terms(np.log(p), np.log1p(-p))


def valid_sequence_log_probs_from_logits(logits) -> BinDistribution:
    """Same as :func:`valid_sequence_log_probs` on ``sigmoid(logits)``,
    computed without forming the probabilities."""
    z = np.asarray(logits, dtype=np.float64)
    log_p = -np.logaddexp(0.0, -z)
    log_q = -np.logaddexp(0.0, z)
    lo, hi = np.log(PROB_EPS), np.log1p(-PROB_EPS)
    return _from_log_terms(np.clip(log_p, lo, hi), np.clip(log_q, lo, hi))


def _from_log_terms(log_p: np.ndarray, log_q: np.ndarray) -> BinDistribution:
    ones = np.concatenate(([0.0], np.cumsum(log_p)))
    zeros = np.concatenate((np.cumsum(log_q[::-1])[::-1], [0.0]))
    log_w = ones + zeros
    top = log_w.max()
    log_z = top + np.log(np.sum(np.exp(log_w - top)))
    return BinDistribution(log_w - log_z, float(log_z))


def argmax_bin(dist: BinDistribution) -> int:
    # np.argmax returns the first maximum, i.e. the smallest m on ties
    return int(np.argmax(dist.log_probs)) + dist.m_offset


def sample_bins(dist: BinDistribution, rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """``n`` i.i.d. draws of ``m`` by inverse-CDF sampling."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return inverse_cdf(dist, rng.random(n))


def inverse_cdf(dist: BinDistribution, u) -> np.ndarray:
    cdf = np.cumsum(dist.probs)
    idx = np.searchsorted(cdf, np.asarray(u) * cdf[-1], side="right")
    return np.minimum(idx, cdf.size - 1) + dist.m_offset
