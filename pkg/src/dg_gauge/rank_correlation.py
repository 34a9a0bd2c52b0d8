"""Spearman's rho and Kendall's tau-b, with explicit tie handling."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInput, UndefinedCorrelation


@dataclass(frozen=True)
class PairedSample:
    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        y = tuple(float(v) for v in self.y)
        if len(x) != len(y):
            raise InvalidInput(f"paired sample lengths differ: {len(x)} vs {len(y)}")
        if len(x) < 2:
            raise InvalidInput(f"need at least 2 pairs, got {len(x)}")
        if not all(map(math.isfinite, x + y)):
            raise InvalidInput("paired sample contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    tau: float
    n: int


def _as_sample(s, y=None) -> PairedSample:
    if isinstance(s, PairedSample):
        return s
    return PairedSample(tuple(s), tuple(y))


def fractional_ranks(x: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of the ranks they span."""
    xs = [float(v) for v in x]
    if not xs:
        raise InvalidInput("cannot rank an empty sequence")
    if not all(map(math.isfinite, xs)):
        raise InvalidInput("cannot rank non-finite values")
    order = sorted(range(len(xs)), key=xs.__getitem__)
    ranks = [0.0] * len(xs)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        # positions i..j (0-based) hold ranks i+1..j+1
        r = (i + j + 2) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = r
        i = j + 1
    return ranks


def spearman_rho(s: PairedSample | Sequence[float], y: Sequence[float] | None = None) -> float:
    """Pearson correlation of the fractional ranks of ``x`` and ``y``.

    A constant side has no rank spread; if both sides are constant the
    coefficient is undefined. If exactly one is constant the coefficient is
    also undefined (zero variance in the denominator) and the same error is
    raised.
    """
    s = _as_sample(s, y)
    rx = np.asarray(fractional_ranks(s.x))
    ry = np.asarray(fractional_ranks(s.y))
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("Spearman's rho is undefined for a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def _pair_counts(x: np.ndarray, y: np.ndarray) -> tuple[int, int, int, int]:
    """Concordant, discordant, tied-only-in-x, tied-only-in-y pair counts."""
    iu = np.triu_indices(len(x), k=1)
    sx = np.sign(x[:, None] - x[None, :])[iu]
    sy = np.sign(y[:, None] - y[None, :])[iu]
    prod = sx * sy
    c = int(np.count_nonzero(prod > 0))
    d = int(np.count_nonzero(prod < 0))
    tx = int(np.count_nonzero((sx == 0) & (sy != 0)))
    ty = int(np.count_nonzero((sy == 0) & (sx != 0)))
    return c, d, tx, ty


def kendall_tau(s: PairedSample | Sequence[float], y: Sequence[float] | None = None) -> float:
    """Kendall's tau-b: ``(C - D) / sqrt((C + D + Tx)(C + D + Ty))``."""
    s = _as_sample(s, y)
    c, d, tx, ty = _pair_counts(np.asarray(s.x), np.asarray(s.y))
    denom = (c + d + tx) * (c + d + ty)
    if denom == 0:
        raise UndefinedCorrelation("Kendall's tau is undefined when every pair is tied")
    t = (c - d) / math.sqrt(denom)
    return min(1.0, max(-1.0, t))


def correlate(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    s = PairedSample(tuple(x), tuple(y))
    return CorrelationResult(spearman_rho(s), kendall_tau(s), len(s))


def seed_aggregate(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (divisor ``n - 1``; 0 for one value)."""
    xs = [float(v) for v in values]
    if not xs:
        raise InvalidInput("cannot aggregate an empty list")
    mean = math.fsum(xs) / len(xs)
    if len(xs) == 1:
        return mean, 0.0
    return mean, statistics.stdev(xs)
