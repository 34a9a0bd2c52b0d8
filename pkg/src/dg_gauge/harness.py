"""Leave-one-environment-out protocol and the studies built on it.

The harness turns an :class:`ErrorMatrix` (ingested from CSV, or produced by
running oracles through the LOO protocol) into per-(algorithm, seed) measure
reports, then correlates each practical measure with the ideal measure across
algorithms, selects the best algorithm under each measure, and computes the
resulting performance degradation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import rng as _rng
from .errors import IncompleteMatrix, InsufficientEnvironments, InvalidInput, UndefinedCorrelation
from .measures import (
    MEASURE_FUNCTIONS,
    PRACTICAL_KINDS,
    RANGE_TOL,
    FullErrorVector,
    LooErrorVector,
    MeasureKind,
    MeasureValue,
    ideal_measure,
    select_best,
)
from .rank_correlation import kendall_tau, seed_aggregate, spearman_rho, CorrelationResult
from .synthetic_worlds import (
    AlgorithmOracle,
    EnvironmentSet,
    ScaleRatio,
    build_given_srcmnist,
    mixture_family,
    oracle_error,
)

DEFAULT_LAMBDAS = tuple(k / 10 for k in range(11))


# -- protocol -----------------------------------------------------------------


def run_loo(env_set: EnvironmentSet, oracle: AlgorithmOracle, seed: int) -> LooErrorVector:
    """Hold out each given env in turn; the oracle trains on the rest."""
    given = env_set.given_envs
    if len(given) < 2:
        raise InsufficientEnvironments(f"LOO needs at least 2 given environments, got {len(given)}")
    g = _rng.stream(seed, "loo", oracle.name)
    entries = []
    for n, (env_id, e) in enumerate(given):
        training = [x for m, (_, x) in enumerate(given) if m != n]
        entries.append((env_id, oracle_error(oracle, training, e, g)))
    return LooErrorVector(tuple(entries))


def run_full(env_set: EnvironmentSet, oracle: AlgorithmOracle, seed: int) -> FullErrorVector:
    """Train on every given env and evaluate on every env of the world."""
    if not env_set.all_envs:
        raise InvalidInput("the environment set has no environments")
    training = [e for _, e in env_set.given_envs]
    g = _rng.stream(seed, "full", oracle.name)
    return FullErrorVector(
        tuple((env_id, oracle_error(oracle, training, e, g)) for env_id, e in env_set.all_envs)
    )


# -- error matrices and reports -------------------------------------------------


Cell = tuple[str, int]


@dataclass
class ErrorMatrix:
    """LOO and full-training errors keyed by ``(algorithm, seed)`` then env id.

    ``given_env_ids`` / ``all_env_ids`` pin the expected coverage; when left
    as ``None`` the union of env ids seen across cells is expected.
    """

    loo: dict[Cell, dict[str, float]] = field(default_factory=dict)
    full: dict[Cell, dict[str, float]] = field(default_factory=dict)
    given_env_ids: tuple[str, ...] | None = None
    all_env_ids: tuple[str, ...] | None = None

    def _add(self, table, algorithm, seed, env_id, error):
        error = float(error)
        if not math.isfinite(error) or error < -RANGE_TOL or error > 1 + RANGE_TOL:
            raise InvalidInput(f"error outside [0, 1] for ({algorithm}, {seed}, {env_id}): {error}")
        row = table.setdefault((str(algorithm), int(seed)), {})
        if env_id in row:
            raise InvalidInput(f"duplicate record ({algorithm}, {seed}, {env_id})")
        row[str(env_id)] = min(1.0, max(0.0, error))

    def add_loo(self, algorithm: str, seed: int, env_id: str, error: float) -> None:
        self._add(self.loo, algorithm, seed, env_id, error)

    def add_full(self, algorithm: str, seed: int, env_id: str, error: float) -> None:
        self._add(self.full, algorithm, seed, env_id, error)

    def add_vectors(self, algorithm: str, seed: int, loo: LooErrorVector, full: FullErrorVector | None = None):
        for env_id, err in loo.entries:
            self.add_loo(algorithm, seed, env_id, err)
        if full is not None:
            for env_id, err in full.entries:
                self.add_full(algorithm, seed, env_id, err)

    @property
    def cells(self) -> list[Cell]:
        return sorted(set(self.loo) | set(self.full))

    def records(self) -> list[tuple[str, str, int, str, float]]:
        """``(record_type, algorithm, seed, env_id, error)`` in a stable order."""
        out = []
        for kind, table in (("loo", self.loo), ("full", self.full)):
            for (alg, seed) in sorted(table):
                for env_id in sorted(table[(alg, seed)]):
                    out.append((kind, alg, seed, env_id, table[(alg, seed)][env_id]))
        return out

    def _expected(self, table, pinned) -> tuple[str, ...]:
        if pinned is not None:
            return tuple(pinned)
        return tuple(sorted({e for row in table.values() for e in row}))

    def missing(self) -> list[tuple[str, int, str]]:
        gaps = []
        given = self._expected(self.loo, self.given_env_ids)
        for cell in self.cells:
            row = self.loo.get(cell, {})
            gaps += [(cell[0], cell[1], e) for e in given if e not in row]
        if self.full:
            every = self._expected(self.full, self.all_env_ids)
            for cell in self.cells:
                row = self.full.get(cell, {})
                gaps += [(cell[0], cell[1], e) for e in every if e not in row]
        return gaps

    def loo_vector(self, cell: Cell) -> LooErrorVector:
        order = self._expected(self.loo, self.given_env_ids)
        row = self.loo[cell]
        return LooErrorVector(tuple((e, row[e]) for e in order))

    def full_vector(self, cell: Cell) -> FullErrorVector | None:
        if cell not in self.full:
            return None
        order = self._expected(self.full, self.all_env_ids)
        row = self.full[cell]
        return FullErrorVector(tuple((e, row[e]) for e in order))


@dataclass(frozen=True)
class MeasureRow:
    algorithm: str
    seed: int
    average: float
    worst_gap: float
    worst_only: float
    gap_only: float
    ideal: float | None = None

    def value(self, kind: MeasureKind | str) -> float | None:
        return getattr(self, MeasureKind(kind).value)

    def measure(self, kind: MeasureKind | str) -> MeasureValue:
        v = self.value(kind)
        if v is None:
            raise InvalidInput(f"no {MeasureKind(kind).value} value for ({self.algorithm}, {self.seed})")
        return MeasureValue(MeasureKind(kind), v)


REPORT_FIELDS = ("algorithm", "seed", "average", "worst_gap", "worst_only", "gap_only", "ideal")


@dataclass(frozen=True)
class MeasureReport:
    rows: tuple[MeasureRow, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(sorted(self.rows, key=lambda r: (r.algorithm, r.seed))))

    @property
    def algorithms(self) -> list[str]:
        return sorted({r.algorithm for r in self.rows})

    @property
    def seeds(self) -> list[int]:
        return sorted({r.seed for r in self.rows})

    @property
    def has_ideal(self) -> bool:
        return bool(self.rows) and all(r.ideal is not None for r in self.rows)

    def by_seed(self, seed: int) -> list[MeasureRow]:
        return [r for r in self.rows if r.seed == seed]


def measure_row(algorithm: str, seed: int, loo: LooErrorVector, full: FullErrorVector | None = None) -> MeasureRow:
    vals = {k.value: MEASURE_FUNCTIONS[k](loo).value for k in PRACTICAL_KINDS}
    ideal = ideal_measure(full).value if full is not None else None
    return MeasureRow(algorithm, seed, ideal=ideal, **vals)


def compute_report(m: ErrorMatrix) -> MeasureReport:
    gaps = m.missing()
    if gaps:
        raise IncompleteMatrix(gaps)
    return MeasureReport(tuple(measure_row(a, s, m.loo_vector((a, s)), m.full_vector((a, s))) for a, s in m.cells))


# -- correlation study ----------------------------------------------------------


@dataclass(frozen=True)
class MeasureCorrelation:
    """Seed-aggregated correlation of one practical measure with the ideal one.

    Means and stds are ``None`` when every seed had an undefined correlation.
    """

    measure: str
    rho_mean: float | None
    rho_std: float | None
    tau_mean: float | None
    tau_std: float | None
    n_seeds: int
    excluded_seeds: int
    per_seed: tuple[tuple[int, float | None, float | None], ...] = ()


@dataclass(frozen=True)
class StudyResult:
    correlations: tuple[MeasureCorrelation, ...]
    # measure -> seed -> algorithm (ideal included)
    selected: dict[str, dict[int, str]]
    # measure -> seed -> degradation
    degradation: dict[str, dict[int, float]]
    # selection and degradation on seed-averaged measure values
    selected_seed_averaged: dict[str, str]
    degradation_seed_averaged: dict[str, float]

    def correlation(self, kind: MeasureKind | str) -> MeasureCorrelation:
        kind = MeasureKind(kind).value
        for c in self.correlations:
            if c.measure == kind:
                return c
        raise KeyError(kind)


def _check_study_input(report: MeasureReport) -> tuple[list[str], list[int]]:
    algs = report.algorithms
    if len(algs) < 2:
        raise InvalidInput(f"a correlation study needs at least 2 algorithms, got {len(algs)}")
    if not report.has_ideal:
        raise InvalidInput("a correlation study needs ideal values for every row")
    seeds = report.seeds
    if not seeds:
        raise InvalidInput("a correlation study needs at least one seed")
    have = {(r.algorithm, r.seed) for r in report.rows}
    holes = [(a, s) for a in algs for s in seeds if (a, s) not in have]
    if holes:
        raise InvalidInput(f"algorithms are missing seeds: {holes[:10]}")
    return algs, seeds


def _column(rows: Sequence[MeasureRow], kind: MeasureKind) -> list[float]:
    return [r.value(kind) for r in rows]


def _try(fn, x, y) -> float | None:
    try:
        return fn(x, y)
    except UndefinedCorrelation:
        return None


def _select(rows: Sequence[MeasureRow], kind: MeasureKind) -> str:
    return select_best([(r.algorithm, r.measure(kind)) for r in rows])


def _degradation(rows: Sequence[MeasureRow], kind: MeasureKind) -> float:
    ideal = {r.algorithm: r.ideal for r in rows}
    return abs(ideal[_select(rows, MeasureKind.IDEAL)] - ideal[_select(rows, kind)])


def _seed_averaged_rows(report: MeasureReport) -> list[MeasureRow]:
    out = []
    for alg in report.algorithms:
        rows = [r for r in report.rows if r.algorithm == alg]
        mean = {k: math.fsum(r.value(k) for r in rows) / len(rows) for k in (*PRACTICAL_KINDS, MeasureKind.IDEAL)}
        out.append(MeasureRow(alg, -1, **{k.value: v for k, v in mean.items()}))
    return out


def performance_degradation(report: MeasureReport, measure_kind: MeasureKind | str) -> dict[int, float]:
    """Per seed, ``|ideal(best by ideal) - ideal(best by measure)|``."""
    kind = MeasureKind(measure_kind)
    if not report.has_ideal:
        raise InvalidInput("performance degradation needs ideal values")
    return {s: _degradation(report.by_seed(s), kind) for s in report.seeds}


def performance_degradation_seed_averaged(report: MeasureReport, measure_kind: MeasureKind | str) -> float:
    """Degradation after averaging every measure over seeds per algorithm."""
    if not report.has_ideal:
        raise InvalidInput("performance degradation needs ideal values")
    return _degradation(_seed_averaged_rows(report), MeasureKind(measure_kind))


def correlation_study(report: MeasureReport) -> StudyResult:
    """Correlate each practical measure with the ideal measure, per seed.

    Seeds whose measure column is constant (undefined correlation) are left
    out of the mean/std and counted in ``excluded_seeds``.
    """
    _, seeds = _check_study_input(report)
    correlations = []
    for kind in PRACTICAL_KINDS:
        per_seed = []
        for s in seeds:
            rows = report.by_seed(s)
            x, y = _column(rows, kind), _column(rows, MeasureKind.IDEAL)
            per_seed.append((s, _try(spearman_rho, x, y), _try(kendall_tau, x, y)))
        ok = [(r, t) for _, r, t in per_seed if r is not None and t is not None]
        if ok:
            rho_mean, rho_std = seed_aggregate([r for r, _ in ok])
            tau_mean, tau_std = seed_aggregate([t for _, t in ok])
        else:
            rho_mean = rho_std = tau_mean = tau_std = None
        correlations.append(
            MeasureCorrelation(
                kind.value, rho_mean, rho_std, tau_mean, tau_std,
                n_seeds=len(ok), excluded_seeds=len(seeds) - len(ok), per_seed=tuple(per_seed),
            )
        )

    kinds = (*PRACTICAL_KINDS, MeasureKind.IDEAL)
    selected = {k.value: {s: _select(report.by_seed(s), k) for s in seeds} for k in kinds}
    degradation = {k.value: performance_degradation(report, k) for k in PRACTICAL_KINDS}
    averaged = _seed_averaged_rows(report)
    return StudyResult(
        correlations=tuple(correlations),
        selected=selected,
        degradation=degradation,
        selected_seed_averaged={k.value: _select(averaged, k) for k in kinds},
        degradation_seed_averaged={k.value: _degradation(averaged, k) for k in PRACTICAL_KINDS},
    )


def pooled_correlation(report: MeasureReport) -> dict[str, CorrelationResult | None]:
    """One correlation per measure over every (algorithm, seed) row at once."""
    if not report.has_ideal or len(report.rows) < 2:
        raise InvalidInput("pooled correlation needs at least 2 rows with ideal values")
    y = _column(report.rows, MeasureKind.IDEAL)
    out = {}
    for kind in PRACTICAL_KINDS:
        x = _column(report.rows, kind)
        rho, tau = _try(spearman_rho, x, y), _try(kendall_tau, x, y)
        out[kind.value] = None if rho is None or tau is None else CorrelationResult(rho, tau, len(x))
    return out


# -- synthetic end-to-end runs ----------------------------------------------------


def _map(fn, items: Sequence) -> list:
    workers = min(_rng.thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def build_error_matrix(
    env_set: EnvironmentSet, oracles: Sequence[AlgorithmOracle], seeds: Iterable[int]
) -> ErrorMatrix:
    """Run every oracle through LOO and full training for every seed."""
    names = [o.name for o in oracles]
    if len(set(names)) != len(names):
        raise InvalidInput(f"oracle names must be unique: {names}")
    cells = [(o, s) for o in oracles for s in seeds]
    results = _map(lambda c: (run_loo(env_set, *c), run_full(env_set, *c)), cells)
    m = ErrorMatrix(given_env_ids=env_set.given_ids, all_env_ids=env_set.all_ids)
    for (o, s), (loo, full) in zip(cells, results):
        m.add_vectors(o.name, s, loo, full)
    return m


def synthetic_report(
    sr: ScaleRatio, oracles: Sequence[AlgorithmOracle], seeds: Iterable[int]
) -> MeasureReport:
    return compute_report(build_error_matrix(build_given_srcmnist(sr), oracles, list(seeds)))


def bench(
    scale: int,
    ratio: tuple[int, int],
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    noise: float = 0.0,
    seeds: Sequence[int] = (0,),
) -> tuple[MeasureReport, StudyResult]:
    """Mixture-oracle correlation study on one SR-CMNIST given set."""
    report = synthetic_report(ScaleRatio(scale, *ratio), mixture_family(lambdas, noise), seeds)
    return report, correlation_study(report)


@dataclass(frozen=True)
class AsymptoticResult:
    scales: tuple[int, ...]
    # measure -> normalized |ideal - measure| per scale (None if every oracle was excluded)
    curves: dict[str, tuple[float | None, ...]]
    # measure -> oracle -> raw mean |ideal - measure| per scale
    raw: dict[str, dict[str, tuple[float, ...]]]
    warnings: tuple[str, ...] = ()


def asymptotic_study(
    scales: Sequence[int],
    ratio: tuple[int, int],
    oracles: Sequence[AlgorithmOracle],
    seeds: Sequence[int],
) -> AsymptoticResult:
    """How far each practical measure sits from the ideal one as N grows.

    For every oracle, ``|ideal - measure|`` is averaged over seeds, divided by
    its value at the first scale, and the normalized curves are averaged over
    oracles. Oracles whose base value is zero are dropped with a warning.
    """
    scales = tuple(int(s) for s in scales)
    if not scales:
        raise InvalidInput("need at least one scale")
    if list(scales) != sorted(scales):
        raise InvalidInput(f"scales must be ascending, got {scales}")
    if not seeds:
        raise InvalidInput("need at least one seed")
    reports = [synthetic_report(ScaleRatio(s, *ratio), oracles, seeds) for s in scales]

    raw: dict[str, dict[str, tuple[float, ...]]] = {}
    curves: dict[str, tuple[float | None, ...]] = {}
    warnings = []
    for kind in PRACTICAL_KINDS:
        per_oracle = {}
        for o in oracles:
            per_scale = []
            for rep in reports:
                rows = [r for r in rep.rows if r.algorithm == o.name]
                per_scale.append(math.fsum(abs(r.ideal - r.value(kind)) for r in rows) / len(rows))
            per_oracle[o.name] = tuple(per_scale)
        raw[kind.value] = per_oracle
        kept = []
        for name in sorted(per_oracle):
            base = per_oracle[name][0]
            if base == 0.0:
                warnings.append(f"{kind.value}: oracle {name} excluded, zero gap at scale {scales[0]}")
                continue
            kept.append([v / base for v in per_oracle[name]])
        if kept:
            curves[kind.value] = tuple(math.fsum(c[i] for c in kept) / len(kept) for i in range(len(scales)))
        else:
            curves[kind.value] = tuple(None for _ in scales)
    return AsymptoticResult(scales, curves, raw, tuple(warnings))
