"""Synthetic environments and analytic stand-ins for trained models.

An environment is identified by its spurious-feature flip probability ``e``:
the colour label equals the class label except with probability ``e``.
Class labels themselves are the digit-group bit flipped with probability
0.25, so a model reading only the digit group errs 25% of the time on every
environment, while a model reading only colour errs ``e`` or ``1 - e``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import rng as _rng
from .errors import InvalidInput

LABEL_FLIP = 0.25
INVARIANT_ERROR = LABEL_FLIP
MAJOR_RANGE = (0.8, 0.9)
MINOR_RANGE = (0.1, 0.2)
GRID_STEP = 0.01
OFF_GRID_DECIMALS = 6

FIXED_GIVEN = {
    "c_cats_dogs": (0.05, 0.10, 0.15, 0.20, 0.50),
    "l_cifar10": (0.50, 0.80, 0.85, 0.90, 0.95),
}


# -- environment sets ---------------------------------------------------------


def _step_decimals(step: float) -> int:
    for d in range(13):
        if abs(round(step, d) - step) < 1e-12:
            return d
    return 12


def _on_grid(e: float, step: float) -> bool:
    return abs(e / step - round(e / step)) < 1e-9


def format_env_id(e: float, step: float = GRID_STEP) -> str:
    """Grid values use the grid's precision; off-grid values use 6 decimals."""
    if _on_grid(e, step):
        return f"{e:.{_step_decimals(step)}f}"
    return f"{e:.{OFF_GRID_DECIMALS}f}"


@dataclass(frozen=True)
class EnvironmentSet:
    """All environments plus the given subset split into major and minor groups.

    ``all_envs`` is sorted by ``e``. Given environments that fall off the
    evaluation grid are merged into ``all_envs`` so that every given env is
    also an environment of the world.
    """

    all_envs: tuple[tuple[str, float], ...]
    major_ids: tuple[str, ...] = ()
    minor_ids: tuple[str, ...] = ()

    def __post_init__(self):
        ids = [i for i, _ in self.all_envs]
        if len(set(ids)) != len(ids):
            raise InvalidInput("duplicate env_id in all_envs")
        for i, e in self.all_envs:
            if not 0.0 <= e <= 1.0:
                raise InvalidInput(f"flip probability for {i!r} outside [0, 1]: {e}")
        known = set(ids)
        major, minor = set(self.major_ids), set(self.minor_ids)
        if len(major) != len(self.major_ids) or len(minor) != len(self.minor_ids):
            raise InvalidInput("duplicate env_id in major/minor groups")
        if major & minor:
            raise InvalidInput(f"major and minor overlap: {sorted(major & minor)}")
        if not (major | minor) <= known:
            raise InvalidInput(f"given envs not in all_envs: {sorted((major | minor) - known)}")
        if len(major) < len(minor):
            raise InvalidInput(f"need |major| >= |minor|, got {len(major)} < {len(minor)}")

    @property
    def given_ids(self) -> tuple[str, ...]:
        return self.major_ids + self.minor_ids

    @property
    def all_ids(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.all_envs)

    def e_of(self, env_id: str) -> float:
        for i, e in self.all_envs:
            if i == env_id:
                return e
        raise InvalidInput(f"unknown env_id {env_id!r}")

    @property
    def given_envs(self) -> tuple[tuple[str, float], ...]:
        lookup = dict(self.all_envs)
        return tuple((i, lookup[i]) for i in self.given_ids)

    def group_of(self, env_id: str) -> str:
        if env_id in self.major_ids:
            return "major"
        if env_id in self.minor_ids:
            return "minor"
        return "all"

    def with_given(
        self, major: Sequence[tuple[str, float]], minor: Sequence[tuple[str, float]] = ()
    ) -> "EnvironmentSet":
        """Copy with a new given set; unknown given envs are merged into ``all_envs``."""
        merged = dict(self.all_envs)
        for i, e in list(major) + list(minor):
            if i in merged and not math.isclose(merged[i], e, abs_tol=1e-12):
                raise InvalidInput(f"env_id {i!r} already bound to e={merged[i]}, not {e}")
            merged.setdefault(i, e)
        all_envs = tuple(sorted(merged.items(), key=lambda kv: (kv[1], kv[0])))
        return EnvironmentSet(all_envs, tuple(i for i, _ in major), tuple(i for i, _ in minor))

    def partitioned(self, major_ids: Sequence[str]) -> "EnvironmentSet":
        """Reassign the given set: ``major_ids`` become major, the rest minor."""
        given = self.given_ids
        unknown = set(major_ids) - set(given)
        if unknown:
            raise InvalidInput(f"not given envs: {sorted(unknown)}")
        major = tuple(i for i in given if i in set(major_ids))
        minor = tuple(i for i in given if i not in set(major_ids))
        return EnvironmentSet(self.all_envs, major, minor)


@dataclass(frozen=True)
class ScaleRatio:
    scale: int
    ratio_major: int
    ratio_minor: int

    def __post_init__(self):
        if self.scale < 1:
            raise InvalidInput(f"scale must be >= 1, got {self.scale}")
        if self.ratio_major < 1 or self.ratio_minor < 0:
            raise InvalidInput(f"bad ratio {self.ratio_major}:{self.ratio_minor}")
        if self.ratio_major < self.ratio_minor:
            raise InvalidInput(f"ratio major must be >= minor, got {self.ratio_major}:{self.ratio_minor}")

    @property
    def n_major(self) -> int:
        return self.ratio_major * self.scale

    @property
    def n_minor(self) -> int:
        return self.ratio_minor * self.scale


def parse_ratio(text: str) -> tuple[int, int]:
    """``"5:1"`` -> ``(5, 1)``."""
    parts = text.split(":")
    if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
        raise InvalidInput(f"ratio must look like A:B, got {text!r}")
    return int(parts[0]), int(parts[1])


def build_e_all(step: float = GRID_STEP) -> EnvironmentSet:
    """Evenly spaced environments ``0, step, ..., 1`` with no given subset."""
    if not step > 0 or not math.isfinite(step):
        raise InvalidInput(f"step must be positive, got {step}")
    n = round(1.0 / step)
    if n < 1 or abs(n * step - 1.0) > 1e-12:
        raise InvalidInput(f"step {step} does not divide 1 evenly")
    d = _step_decimals(step)
    envs = tuple((f"{k / n:.{d}f}", k / n) for k in range(n + 1))
    return EnvironmentSet(envs)


def _even_spacing(lo: float, hi: float, count: int) -> list[float]:
    if count == 0:
        return []
    if count == 1:
        return [lo]
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def _labelled(values: Sequence[float], step: float = GRID_STEP) -> list[tuple[str, float]]:
    return [(format_env_id(e, step), e) for e in values]


def build_given_srcmnist(sr: ScaleRatio, step: float = GRID_STEP) -> EnvironmentSet:
    """SR-CMNIST given set: ``N_major`` envs evenly in [0.8, 0.9] and
    ``N_minor`` evenly in [0.1, 0.2]; a single env sits at the lower end."""
    major = _labelled(_even_spacing(*MAJOR_RANGE, sr.n_major), step)
    minor = _labelled(_even_spacing(*MINOR_RANGE, sr.n_minor), step)
    return build_e_all(step).with_given(major, minor)


def fixed_given_set(dataset: str) -> EnvironmentSet:
    """Given environments of C-Cats&Dogs or L-CIFAR10 over the 101-env grid.

    The major/minor split of these datasets is not known, so every given env
    is placed in the major group; use :meth:`EnvironmentSet.partitioned` to
    assign one.
    """
    try:
        values = FIXED_GIVEN[dataset]
    except KeyError:
        raise InvalidInput(f"unknown dataset {dataset!r}; choose from {sorted(FIXED_GIVEN)}") from None
    return build_e_all().with_given(_labelled(values))


@dataclass(frozen=True)
class CorruptedWorldConfig:
    """Base domains crossed with corruption variants (variant 0 is clean)."""

    envs_pattern: tuple[int, ...]
    n_base_envs: int = 4
    n_variants: int = 16

    def __post_init__(self):
        object.__setattr__(self, "envs_pattern", tuple(int(c) for c in self.envs_pattern))
        if len(self.envs_pattern) != self.n_base_envs:
            raise InvalidInput(
                f"pattern has {len(self.envs_pattern)} entries for {self.n_base_envs} base envs"
            )
        for c in self.envs_pattern:
            if c < 0 or c > self.n_variants:
                raise InvalidInput(f"pattern count {c} outside [0, {self.n_variants}]")

    @classmethod
    def from_pattern(cls, text: str, **kw) -> "CorruptedWorldConfig":
        """``"1-0-1-1"`` -> config."""
        try:
            counts = tuple(int(p) for p in text.split("-"))
        except ValueError:
            raise InvalidInput(f"bad envs pattern {text!r}") from None
        return cls(counts, n_base_envs=kw.pop("n_base_envs", len(counts)), **kw)

    def all_env_ids(self) -> list[str]:
        return [corrupted_env_id(i, j) for i in range(self.n_base_envs) for j in range(self.n_variants)]


def corrupted_env_id(base: int, variant: int) -> str:
    return f"base{base}:variant{variant}"


def sample_corrupted_given(cfg: CorruptedWorldConfig, seed: int) -> list[str]:
    g = _rng.stream(seed, "corrupted")
    out = []
    for i, count in enumerate(cfg.envs_pattern):
        picks = g.choice(cfg.n_variants, size=count, replace=False) if count else []
        out.extend(corrupted_env_id(i, int(j)) for j in picks)
    return out


# -- abstract samples ---------------------------------------------------------


@dataclass(frozen=True)
class AbstractSample:
    invariant_feature: int
    label: int
    spurious_feature: int


@dataclass(frozen=True, eq=False)
class SampleBatch(Sequence[AbstractSample]):
    """Column-stored samples; indexing yields :class:`AbstractSample`."""

    invariant_feature: np.ndarray
    label: np.ndarray
    spurious_feature: np.ndarray

    def __len__(self) -> int:
        return len(self.label)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return SampleBatch(self.invariant_feature[i], self.label[i], self.spurious_feature[i])
        return AbstractSample(
            int(self.invariant_feature[i]), int(self.label[i]), int(self.spurious_feature[i])
        )

    def __iter__(self) -> Iterator[AbstractSample]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_samples(cls, samples: Sequence[AbstractSample]) -> "SampleBatch":
        cols = np.array(
            [(s.invariant_feature, s.label, s.spurious_feature) for s in samples], dtype=np.uint8
        ).reshape(-1, 3)
        return cls(cols[:, 0], cols[:, 1], cols[:, 2])


def generate_environment(e: float, n: int, seed: int) -> SampleBatch:
    if not 0.0 <= e <= 1.0:
        raise InvalidInput(f"flip probability must lie in [0, 1], got {e}")
    if n < 1:
        raise InvalidInput(f"n must be >= 1, got {n}")
    g = _rng.stream(seed, "environment", format_env_id(e, 1e-6))
    inv = (g.random(n) < 0.5).astype(np.uint8)
    label = inv ^ (g.random(n) < LABEL_FLIP).astype(np.uint8)
    spur = label ^ (g.random(n) < e).astype(np.uint8)
    return SampleBatch(inv, label, spur)


class Rule(str, enum.Enum):
    USE_INVARIANT = "use_invariant"
    USE_SPURIOUS = "use_spurious"
    USE_SPURIOUS_FLIPPED = "use_spurious_flipped"


def classify_and_score(samples: Sequence[AbstractSample], rule: Rule | str) -> float:
    """Error rate of a fixed prediction rule on ``samples``."""
    rule = Rule(rule)
    batch = samples if isinstance(samples, SampleBatch) else SampleBatch.from_samples(samples)
    if len(batch) == 0:
        raise InvalidInput("cannot score an empty sample")
    if rule is Rule.USE_INVARIANT:
        pred = batch.invariant_feature
    elif rule is Rule.USE_SPURIOUS:
        pred = batch.spurious_feature
    else:
        pred = 1 - batch.spurious_feature
    return float(np.count_nonzero(pred != batch.label)) / len(batch)


# -- oracles ------------------------------------------------------------------


class OracleKind(str, enum.Enum):
    INVARIANT = "invariant"
    SPURIOUS = "spurious"
    MIXTURE = "mixture"


@dataclass(frozen=True)
class AlgorithmOracle:
    """Analytic model: maps (training envs, test env) to an error rate.

    ``mixture`` blends the spurious and invariant errors with weight ``lam``
    and adds clamped Gaussian noise of std ``noise_std``.
    """

    kind: OracleKind
    lam: float = 0.0
    noise_std: float = 0.0
    name: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "kind", OracleKind(self.kind))
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidInput(f"lambda must lie in [0, 1], got {self.lam}")
        if self.noise_std < 0:
            raise InvalidInput(f"noise_std must be >= 0, got {self.noise_std}")
        if not self.name:
            object.__setattr__(self, "name", self._default_name())

    def _default_name(self) -> str:
        if self.kind is OracleKind.MIXTURE:
            return f"mixture-{self.lam:.4f}"
        return self.kind.value

    @classmethod
    def invariant(cls) -> "AlgorithmOracle":
        return cls(OracleKind.INVARIANT)

    @classmethod
    def spurious(cls) -> "AlgorithmOracle":
        return cls(OracleKind.SPURIOUS)

    @classmethod
    def mixture(cls, lam: float, noise_std: float = 0.0, name: str = "") -> "AlgorithmOracle":
        return cls(OracleKind.MIXTURE, lam, noise_std, name)


def spurious_error(training_es: Sequence[float], test_e: float) -> float:
    """Colour-only model: learns the colour mapping the training majority suggests."""
    if len(training_es) == 0:
        raise InvalidInput("spurious model needs at least one training environment")
    if math.fsum(training_es) / len(training_es) > 0.5:
        return 1.0 - test_e
    return test_e


def oracle_error(
    o: AlgorithmOracle,
    training_es: Sequence[float],
    test_e: float,
    rng_stream: np.random.Generator | None = None,
) -> float:
    if not 0.0 <= test_e <= 1.0 or any(not 0.0 <= e <= 1.0 for e in training_es):
        raise InvalidInput("environment flip probabilities must lie in [0, 1]")
    if o.kind is OracleKind.INVARIANT:
        return INVARIANT_ERROR
    s = spurious_error(training_es, test_e)
    if o.kind is OracleKind.SPURIOUS:
        return s
    value = o.lam * s + (1.0 - o.lam) * INVARIANT_ERROR
    if o.noise_std > 0:
        if rng_stream is None:
            raise InvalidInput("a noisy oracle needs an rng stream")
        value += o.noise_std * float(rng_stream.standard_normal())
    return min(1.0, max(0.0, value))


def mixture_family(lambdas: Sequence[float], noise_std: float = 0.0) -> list[AlgorithmOracle]:
    return [AlgorithmOracle.mixture(lam, noise_std) for lam in lambdas]
