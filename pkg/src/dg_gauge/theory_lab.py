"""Closed forms and Monte Carlo checks for the max of uniform errors.

Covers three results about the worst of ``N`` i.i.d. ``U(a, b)`` errors:

* the mean ``(a + bK)/(K + 1)`` and variance ``(b-a)^2 K/((K+2)(K+1)^2)`` of
  the max of ``K`` draws;
* Chebyshev coverage: ``|max - mu_N| <= (b - a)/(N delta)`` holds with
  probability at least ``1 - delta^2``;
* under the decreasing-range assumption, ``b <= max + (max - min)/(N - 2)``.

Trials are drawn in fixed blocks of :data:`~dg_gauge.rng.BLOCK_SIZE`, each
from its own counter-based stream, so results do not depend on the number of
worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng as _rng
from .errors import GeneratorStarvation, InvalidInput
from .measures import (
    FullErrorVector,
    LooErrorVector,
    ideal_measure,
    worst_gap_measure,
)

#: rejection sampling below this acceptance rate is reported, not retried
MIN_ACCEPTANCE = 1e-4
#: draws to observe before judging the acceptance rate
_STARVATION_WINDOW = 100_000
# tiny slack so ``b <= max + gap/(N-2)`` is not failed by a last-bit rounding
_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class UniformErrorModel:
    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (0.0 <= a < b <= 1.0):
            raise InvalidInput(f"need 0 <= a < b <= 1, got a={a}, b={b}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def width(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class MaxOrderStats:
    k: int
    mean: float
    variance: float


@dataclass(frozen=True)
class ChebyshevTrialConfig:
    n_envs: int
    delta: float
    trials: int
    seed: int

    def __post_init__(self):
        if self.n_envs < 1:
            raise InvalidInput(f"n_envs must be >= 1, got {self.n_envs}")
        if not (0.0 < self.delta < 1.0):
            raise InvalidInput(f"delta must lie strictly inside (0, 1), got {self.delta}")
        _check_trials_seed(self.trials, self.seed)


@dataclass(frozen=True)
class DecreasingRangeConfig:
    n_envs: int
    model: UniformErrorModel
    trials: int
    seed: int

    def __post_init__(self):
        if self.n_envs < 3:
            raise InvalidInput(f"n_envs must be >= 3, got {self.n_envs}")
        _check_trials_seed(self.trials, self.seed)


def _check_trials_seed(trials: int, seed: int) -> None:
    if trials < 1:
        raise InvalidInput(f"trials must be >= 1, got {trials}")
    if seed < 0:
        raise InvalidInput(f"seed must be non-negative, got {seed}")


def _uniform_block(model: UniformErrorModel, k: int, n: int, seed: int, tag: str, j: int) -> np.ndarray:
    g = _rng.stream(seed, tag, k, j)
    return model.a + model.width * g.random((n, k))


def _blockwise(fn: Callable[[int, int], np.ndarray], trials: int) -> np.ndarray:
    """Run ``fn(block_index, n)`` over all blocks and concatenate in block order."""
    parts = list(_rng.blocks(trials))
    workers = min(_rng.thread_count(), len(parts))
    if workers <= 1:
        out = [fn(j, n) for j, n in parts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda p: fn(*p), parts))
    return np.concatenate(out)


def sample_max(model: UniformErrorModel, k: int, trials: int, seed: int, tag: str = "max") -> np.ndarray:
    """``trials`` realisations of the max of ``k`` i.i.d. draws from ``model``."""
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    _check_trials_seed(trials, seed)
    return _blockwise(lambda j, n: _uniform_block(model, k, n, seed, tag, j).max(axis=1), trials)


def lemma_closed_form(model: UniformErrorModel, k: int) -> MaxOrderStats:
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    a, b = model.a, model.b
    mean = (a + b * k) / (k + 1)
    var = (b - a) ** 2 * k / ((k + 2) * (k + 1) ** 2)
    return MaxOrderStats(k, mean, var)


def lemma_monte_carlo(model: UniformErrorModel, k: int, trials: int, seed: int) -> MaxOrderStats:
    m = sample_max(model, k, trials, seed, tag="lemma")
    var = float(m.var(ddof=1)) if trials > 1 else 0.0
    return MaxOrderStats(k, float(m.mean()), var)


def chebyshev_coverage(cfg: ChebyshevTrialConfig, model: UniformErrorModel) -> float:
    """Fraction of trials with ``|max - mu_N| <= (b - a)/(N delta)``."""
    n = cfg.n_envs
    mu = (model.a + model.b * n) / (n + 1)
    radius = model.width / (n * cfg.delta)
    m = sample_max(model, n, cfg.trials, cfg.seed, tag="chebyshev")
    return float(np.count_nonzero(np.abs(m - mu) <= radius)) / cfg.trials


def chebyshev_floor(delta: float, trials: int, z: float = 3.0) -> float:
    """Lowest coverage consistent with ``1 - delta^2`` at ``z`` binomial SEs."""
    p = 1.0 - delta * delta
    return p - z * math.sqrt(delta * delta * p / trials)


def theorem1_residual(
    model: UniformErrorModel, n_grid: Sequence[int], trials: int, seed: int
) -> list[tuple[int, float]]:
    """Mean of ``|b - (N+1)/N * max|`` over ``trials`` for each ``N`` in the grid."""
    out = []
    for n in n_grid:
        if n < 1:
            raise InvalidInput(f"grid entries must be >= 1, got {n}")
        m = sample_max(model, n, trials, seed, tag="theorem1")
        out.append((int(n), float(np.abs(model.b - (n + 1) / n * m).mean())))
    return out


def _draw_tuples(model: UniformErrorModel, n_envs: int, size: int, seed: int, j: int) -> np.ndarray:
    return _uniform_block(model, n_envs, size, seed, "theorem2", j)


def theorem2_bound_check(cfg: DecreasingRangeConfig) -> tuple[int, int]:
    """Count violations of ``b <= max + (max - min)/(N - 2)`` on accepted tuples.

    Tuples are i.i.d. uniform draws kept only when ``max >= b - (b-a)/N`` and
    ``min <= a + (b-a)/N``. Returns ``(violations, trials)``.
    """
    model, n = cfg.model, cfg.n_envs
    hi_floor = model.b - model.width / n
    lo_ceil = model.a + model.width / n

    accepted: list[np.ndarray] = []
    n_accepted = 0
    drawn = 0
    j = 0
    while n_accepted < cfg.trials:
        # block size depends only on the config, never on thread count
        size = min(_rng.BLOCK_SIZE, max(4096, 4 * (cfg.trials - n_accepted)))
        x = _draw_tuples(model, n, size, cfg.seed, j)
        j += 1
        hi = x.max(axis=1)
        lo = x.min(axis=1)
        keep = (hi >= hi_floor) & (lo <= lo_ceil)
        drawn += len(x)
        if keep.any():
            accepted.append(np.stack([hi[keep], lo[keep]], axis=1))
            n_accepted += int(keep.sum())
        if drawn >= _STARVATION_WINDOW and n_accepted / drawn < MIN_ACCEPTANCE:
            raise GeneratorStarvation(
                f"acceptance rate {n_accepted / drawn:.2e} below {MIN_ACCEPTANCE:g} "
                f"after {drawn} draws (N={n}, a={model.a}, b={model.b})"
            )
    pairs = np.concatenate(accepted)[: cfg.trials]
    hi, lo = pairs[:, 0], pairs[:, 1]
    bound = hi + (hi - lo) / (n - 2)
    violations = int(np.count_nonzero(model.b > bound + _BOUND_SLACK))
    return violations, cfg.trials


def reconnection_bound_check(oracle_errors: FullErrorVector, loo: LooErrorVector) -> bool:
    """Whether the ideal measure is bounded by the worst+gap measure.

    The bound only holds when the given environments satisfy the
    decreasing-range assumption, so this is a diagnostic.
    """
    return ideal_measure(oracle_errors).value <= worst_gap_measure(loo).value
