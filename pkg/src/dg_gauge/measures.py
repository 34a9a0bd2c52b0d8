"""Evaluation measures over leave-one-environment-out and full-environment errors.

Practical measures (average, worst+gap, worst only, gap only) consume the
held-out errors of the LOO protocol. The ideal measure consumes the errors of
a model trained on every given environment, evaluated on all environments.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from .errors import InsufficientEnvironments, InvalidInput

#: slack for floating round-off when validating error rates
RANGE_TOL = 1e-12


class MeasureKind(str, enum.Enum):
    AVERAGE = "average"
    IDEAL = "ideal"
    WORST_GAP = "worst_gap"
    WORST_ONLY = "worst_only"
    GAP_ONLY = "gap_only"


PRACTICAL_KINDS = (
    MeasureKind.AVERAGE,
    MeasureKind.WORST_GAP,
    MeasureKind.WORST_ONLY,
    MeasureKind.GAP_ONLY,
)


def _check_entries(entries) -> tuple[tuple[str, float], ...]:
    out = []
    seen = set()
    for env_id, err in entries:
        env_id = str(env_id)
        if env_id in seen:
            raise InvalidInput(f"duplicate env_id {env_id!r}")
        seen.add(env_id)
        err = float(err)
        if not math.isfinite(err) or err < -RANGE_TOL or err > 1.0 + RANGE_TOL:
            raise InvalidInput(f"error for {env_id!r} outside [0, 1]: {err!r}")
        out.append((env_id, min(max(err, 0.0), 1.0)))
    return tuple(out)


@dataclass(frozen=True)
class _ErrorVector:
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", _check_entries(self.entries))

    @classmethod
    def from_errors(cls, errors: Iterable[float], prefix: str = "e"):
        """Build a vector with synthetic ids ``e0, e1, ...``."""
        return cls(tuple((f"{prefix}{i}", x) for i, x in enumerate(errors)))

    @property
    def errors(self) -> tuple[float, ...]:
        return tuple(e for _, e in self.entries)

    @property
    def env_ids(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


class LooErrorVector(_ErrorVector):
    """Held-out errors: entry ``n`` is the error on env ``n`` of a model
    trained on every other given environment."""


class FullErrorVector(_ErrorVector):
    """Errors over all environments of one model trained on every given env."""


@dataclass(frozen=True)
class MeasureValue:
    kind: MeasureKind
    value: float

    def __post_init__(self):
        object.__setattr__(self, "kind", MeasureKind(self.kind))


ErrorsLike = Union[_ErrorVector, Sequence[float]]


def _values(v: ErrorsLike) -> tuple[float, ...]:
    if isinstance(v, _ErrorVector):
        return v.errors
    return LooErrorVector.from_errors(v).errors


def average_measure(v: ErrorsLike) -> MeasureValue:
    xs = _values(v)
    if not xs:
        raise InvalidInput("average measure needs at least one environment")
    # fsum is exactly rounded, so the result does not depend on entry order
    return MeasureValue(MeasureKind.AVERAGE, math.fsum(xs) / len(xs))


def ideal_measure(v: ErrorsLike) -> MeasureValue:
    xs = _values(v)
    if not xs:
        raise InvalidInput("ideal measure needs at least one environment")
    return MeasureValue(MeasureKind.IDEAL, max(xs))


def worst_gap_measure(v: ErrorsLike) -> MeasureValue:
    """Worst held-out error plus the worst-best gap weighted by ``1/(N-2)``."""
    xs = _values(v)
    if len(xs) < 3:
        raise InsufficientEnvironments(f"worst+gap needs N >= 3 environments, got {len(xs)}")
    hi, lo = max(xs), min(xs)
    return MeasureValue(MeasureKind.WORST_GAP, hi + (hi - lo) / (len(xs) - 2))


def worst_only_measure(v: ErrorsLike) -> MeasureValue:
    xs = _values(v)
    if not xs:
        raise InvalidInput("worst-only measure needs at least one environment")
    return MeasureValue(MeasureKind.WORST_ONLY, max(xs))


def gap_only_measure(v: ErrorsLike) -> MeasureValue:
    xs = _values(v)
    if len(xs) < 2:
        raise InsufficientEnvironments(f"gap-only needs N >= 2 environments, got {len(xs)}")
    return MeasureValue(MeasureKind.GAP_ONLY, max(xs) - min(xs))


MEASURE_FUNCTIONS = {
    MeasureKind.AVERAGE: average_measure,
    MeasureKind.WORST_GAP: worst_gap_measure,
    MeasureKind.WORST_ONLY: worst_only_measure,
    MeasureKind.GAP_ONLY: gap_only_measure,
}


def select_best(values: Sequence[tuple[str, MeasureValue]]) -> str:
    """Return the algorithm id with the lowest measure value.

    Ties go to the earliest entry in ``values``.
    """
    if not values:
        raise InvalidInput("cannot select from an empty list")
    kinds = {m.kind for _, m in values}
    if len(kinds) > 1:
        raise InvalidInput(f"mixed measure kinds: {sorted(k.value for k in kinds)}")
    best_id, best = values[0][0], values[0][1].value
    for alg, m in values[1:]:
        if m.value < best:
            best_id, best = alg, m.value
    return best_id
