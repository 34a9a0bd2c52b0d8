"""CSV/JSON ingestion and emission, and the ``dg-gauge`` command line.

File formats
------------
``errors.csv``::

    record_type,algorithm,seed,env_id,error
    loo,ERM,0,0.80,0.300
    full,ERM,0,0.00,0.910

``envs.csv``::

    env_id,e,group          # group is major, minor or all

Exit codes: 0 success, 1 validation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from pathlib import Path
from typing import Sequence

from . import harness, theory_lab
from .errors import DGGaugeError, DuplicateRecord, InvalidInput, IoError, ParseError, ValidationError
from .harness import REPORT_FIELDS, ErrorMatrix, MeasureReport, MeasureRow, StudyResult
from .measures import RANGE_TOL
from .synthetic_worlds import (
    EnvironmentSet,
    ScaleRatio,
    build_e_all,
    build_given_srcmnist,
    fixed_given_set,
    mixture_family,
    parse_ratio,
)

ERRORS_HEADER = ("record_type", "algorithm", "seed", "env_id", "error")
ENVS_HEADER = ("env_id", "e", "group")
STUDY_FIELDS = ("measure", "rho_mean", "rho_std", "tau_mean", "tau_std", "n_seeds", "excluded_seeds")

# dot decimal separator, no grouping, no inf/nan
_DECIMAL = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")
_INTEGER = re.compile(r"^[+-]?\d+$")


def parse_decimal(text: str, line: int | None = None) -> float:
    text = text.strip()
    if not _DECIMAL.match(text):
        raise ParseError(f"not a decimal number: {text!r}", line)
    return float(text)


def format_real(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def _round(x: float | None) -> float | None:
    return None if x is None else float(f"{x:.6f}")


def _read_rows(path, header: Sequence[str]):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or tuple(c.strip() for c in rows[0]) != tuple(header):
        raise ParseError(f"expected header {','.join(header)}", 1)
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        yield lineno, [c.strip() for c in row]


def parse_error_csv(path, envs_path=None) -> ErrorMatrix:
    """Read ``errors.csv`` (and optionally ``envs.csv`` to pin coverage)."""
    m = ErrorMatrix()
    seen = set()
    for lineno, (kind, alg, seed, env_id, err) in _read_rows(path, ERRORS_HEADER):
        if kind not in ("loo", "full"):
            raise ParseError(f"record_type must be loo or full, got {kind!r}", lineno)
        if not alg or not env_id:
            raise ParseError("empty algorithm or env_id", lineno)
        if not _INTEGER.match(seed):
            raise ParseError(f"seed must be an integer, got {seed!r}", lineno)
        value = parse_decimal(err, lineno)
        if value < -RANGE_TOL or value > 1 + RANGE_TOL:
            raise ValidationError(f"error {err} outside [0, 1]", lineno)
        key = (kind, alg, int(seed), env_id)
        if key in seen:
            raise DuplicateRecord(f"duplicate record {key}", lineno)
        seen.add(key)
        (m.add_loo if kind == "loo" else m.add_full)(alg, int(seed), env_id, value)
    if envs_path is not None:
        envs = parse_envs_csv(envs_path)
        m.given_env_ids = envs.given_ids
        m.all_env_ids = envs.all_ids
    return m


def parse_envs_csv(path) -> EnvironmentSet:
    envs, major, minor = [], [], []
    for lineno, (env_id, e, group) in _read_rows(path, ENVS_HEADER):
        value = parse_decimal(e, lineno)
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"e={e} outside [0, 1]", lineno)
        if group not in ("major", "minor", "all"):
            raise ParseError(f"group must be major, minor or all, got {group!r}", lineno)
        envs.append((env_id, value))
        if group == "major":
            major.append(env_id)
        elif group == "minor":
            minor.append(env_id)
    return EnvironmentSet(tuple(envs), tuple(major), tuple(minor))


def parse_report_csv(path) -> MeasureReport:
    rows = []
    for lineno, cols in _read_rows(path, REPORT_FIELDS):
        alg, seed, *vals = cols
        if not _INTEGER.match(seed):
            raise ParseError(f"seed must be an integer, got {seed!r}", lineno)
        nums = [None if v == "" else parse_decimal(v, lineno) for v in vals]
        rows.append(MeasureRow(alg, int(seed), *nums))
    return MeasureReport(tuple(rows))


# -- emission -----------------------------------------------------------------


def _csv_bytes(header: Sequence[str], rows: Sequence[Sequence]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=False) + "\n").encode("utf-8")


def emit_error_matrix(m: ErrorMatrix) -> bytes:
    rows = [(k, a, s, e, format_real(x)) for k, a, s, e, x in m.records()]
    return _csv_bytes(ERRORS_HEADER, rows)


def emit_envs(env_set: EnvironmentSet, include_all: bool = False) -> bytes:
    lookup = dict(env_set.all_envs)
    rows = [(i, format_real(lookup[i]), env_set.group_of(i)) for i in env_set.given_ids]
    if include_all:
        given = set(env_set.given_ids)
        rows += [(i, format_real(e), "all") for i, e in env_set.all_envs if i not in given]
    return _csv_bytes(ENVS_HEADER, rows)


def _report_records(report: MeasureReport) -> list[dict]:
    return [
        {
            "algorithm": r.algorithm,
            "seed": r.seed,
            **{k: _round(getattr(r, k)) for k in REPORT_FIELDS[2:]},
        }
        for r in report.rows
    ]


def _study_records(study: StudyResult) -> list[dict]:
    return [
        {
            "measure": c.measure,
            "rho_mean": _round(c.rho_mean),
            "rho_std": _round(c.rho_std),
            "tau_mean": _round(c.tau_mean),
            "tau_std": _round(c.tau_std),
            "n_seeds": c.n_seeds,
            "excluded_seeds": c.excluded_seeds,
        }
        for c in study.correlations
    ]


def _study_json(study: StudyResult) -> dict:
    def by_seed(table):
        return {str(s): v for s, v in sorted(table.items())}

    return {
        "correlations": _study_records(study),
        "selected": {k: by_seed(v) for k, v in study.selected.items()},
        "degradation": {k: {s: _round(x) for s, x in by_seed(v).items()} for k, v in study.degradation.items()},
        "selected_seed_averaged": dict(study.selected_seed_averaged),
        "degradation_seed_averaged": {k: _round(v) for k, v in study.degradation_seed_averaged.items()},
    }


def emit_report(report: MeasureReport | StudyResult, format: str = "csv") -> bytes:
    """Serialize a measure report or a study result as CSV or JSON bytes.

    Rows are sorted by algorithm then seed; reals carry 6 decimals.
    """
    if format not in ("csv", "json"):
        raise InvalidInput(f"format must be csv or json, got {format!r}")
    if isinstance(report, MeasureReport):
        recs = _report_records(report)
        if format == "json":
            return _json_bytes(recs)
        return _csv_bytes(
            REPORT_FIELDS,
            [[r["algorithm"], r["seed"], *(format_real(r[k]) for k in REPORT_FIELDS[2:])] for r in recs],
        )
    if isinstance(report, StudyResult):
        if format == "json":
            return _json_bytes(_study_json(report))
        rows = [
            [c["measure"], *(format_real(c[k]) for k in STUDY_FIELDS[1:5]), c["n_seeds"], c["excluded_seeds"]]
            for c in _study_records(report)
        ]
        return _csv_bytes(STUDY_FIELDS, rows)
    raise InvalidInput(f"cannot emit {type(report).__name__}")


def write_output(data: bytes, path=None) -> None:
    if path is None or str(path) == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        return
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# -- command line ---------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    """``"0,1,5"`` or ``"0-9"`` or a mix of both."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if re.fullmatch(r"\d+-\d+", part):
                lo, hi = map(int, part.split("-"))
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return out


def _float_list(text: str) -> list[float]:
    try:
        return [parse_decimal(p) for p in text.split(",")]
    except ParseError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _ratio(text: str) -> tuple[int, int]:
    try:
        return parse_ratio(text)
    except InvalidInput as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _decimal(text: str) -> float:
    try:
        return parse_decimal(text)
    except ParseError:
        raise argparse.ArgumentTypeError(f"not a decimal number: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dg-gauge", description="Domain generalization evaluation measures.")
    sub = p.add_subparsers(dest="command", required=True)

    def out_opts(sp, default_format="csv"):
        sp.add_argument("--output", "-o", default=None, help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=default_format)

    sp = sub.add_parser("envs", help="print a given environment set as envs.csv")
    sp.add_argument("--scale", type=int)
    sp.add_argument("--ratio", type=_ratio)
    sp.add_argument("--dataset", choices=("c_cats_dogs", "l_cifar10"))
    sp.add_argument("--all", action="store_true", help="also list the evaluation grid")
    sp.add_argument("--output", "-o", default=None)

    sp = sub.add_parser("measure", help="compute measures from errors.csv")
    sp.add_argument("--input", required=True)
    sp.add_argument("--envs", default=None, help="envs.csv pinning the expected coverage")
    out_opts(sp)

    sp = sub.add_parser("correlate", help="correlate practical measures with the ideal one")
    sp.add_argument("--input", required=True)
    sp.add_argument("--envs", default=None)
    out_opts(sp, "json")

    sp = sub.add_parser("simulate", help="Monte Carlo checks of the max-of-uniforms results")
    sim = sp.add_subparsers(dest="which", required=True)
    for name in ("lemma", "chebyshev", "theorem1", "theorem2"):
        s = sim.add_parser(name)
        s.add_argument("--a", type=_decimal, default=0.0)
        s.add_argument("--b", type=_decimal, default=1.0)
        s.add_argument("--trials", type=int, default=100_000)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--output", "-o", default=None)
        if name == "lemma":
            s.add_argument("--k", type=int, required=True)
        elif name == "chebyshev":
            s.add_argument("--n", type=int, required=True)
            s.add_argument("--delta", type=_decimal, required=True)
        elif name == "theorem1":
            s.add_argument("--n-grid", type=_int_list, default=[5, 10, 20, 40])
        else:
            s.add_argument("--n", type=int, required=True)

    sp = sub.add_parser("bench", help="synthetic mixture-oracle correlation study")
    sp.add_argument("--scale", type=_int_list, required=True, help="one scale, or several with --asymptotic")
    sp.add_argument("--ratio", type=_ratio, required=True)
    sp.add_argument("--lambdas", type=_float_list, default=list(harness.DEFAULT_LAMBDAS))
    sp.add_argument("--noise", type=_decimal, default=0.0)
    sp.add_argument("--seeds", type=_int_list, default=[0])
    sp.add_argument("--asymptotic", action="store_true", help="normalized |ideal - measure| over scales")
    sp.add_argument("--report", default=None, help="also write the measure report CSV here")
    out_opts(sp, "json")
    return p


def _cmd_envs(args) -> bytes:
    if args.dataset:
        if args.scale is not None or args.ratio is not None:
            raise InvalidInput("--dataset cannot be combined with --scale/--ratio")
        env_set = fixed_given_set(args.dataset)
    elif args.scale is not None and args.ratio is not None:
        env_set = build_given_srcmnist(ScaleRatio(args.scale, *args.ratio))
    elif args.scale is None and args.ratio is None and args.all:
        env_set = build_e_all()
    else:
        raise _Usage("envs needs --scale and --ratio, or --dataset")
    return emit_envs(env_set, include_all=args.all)


def _cmd_simulate(args) -> bytes:
    model = theory_lab.UniformErrorModel(args.a, args.b)
    base = {"a": model.a, "b": model.b, "trials": args.trials, "seed": args.seed}
    if args.which == "lemma":
        mc = theory_lab.lemma_monte_carlo(model, args.k, args.trials, args.seed)
        cf = theory_lab.lemma_closed_form(model, args.k)
        out = {"k": args.k, **base, "mean": mc.mean, "variance": mc.variance,
               "closed_form_mean": cf.mean, "closed_form_variance": cf.variance}
    elif args.which == "chebyshev":
        cfg = theory_lab.ChebyshevTrialConfig(args.n, args.delta, args.trials, args.seed)
        cov = theory_lab.chebyshev_coverage(cfg, model)
        out = {"n": args.n, "delta": args.delta, **base, "coverage": cov,
               "bound": 1 - args.delta ** 2}
    elif args.which == "theorem1":
        res = theory_lab.theorem1_residual(model, args.n_grid, args.trials, args.seed)
        out = {**base, "residuals": [{"n": n, "mean_abs_residual": r} for n, r in res]}
    else:
        cfg = theory_lab.DecreasingRangeConfig(args.n, model, args.trials, args.seed)
        violations, trials = theory_lab.theorem2_bound_check(cfg)
        out = {"n": args.n, **base, "violations": violations, "accepted_trials": trials}
    return _json_bytes(out)


def _cmd_bench(args) -> bytes:
    if args.asymptotic:
        oracles = mixture_family(args.lambdas, args.noise)
        res = harness.asymptotic_study(args.scale, args.ratio, oracles, args.seeds)
        out = {
            "scales": list(res.scales),
            "curves": {k: [_round(v) for v in vals] for k, vals in res.curves.items()},
            "warnings": list(res.warnings),
        }
        if args.format == "csv":
            rows = [[k, *(format_real(v) for v in vals)] for k, vals in res.curves.items()]
            return _csv_bytes(["measure", *(f"scale_{s}" for s in res.scales)], rows)
        return _json_bytes(out)
    if len(args.scale) != 1:
        raise _Usage("bench takes a single --scale unless --asymptotic is given")
    report, study = harness.bench(args.scale[0], args.ratio, args.lambdas, args.noise, args.seeds)
    if args.report:
        write_output(emit_report(report, "csv"), args.report)
    return emit_report(study, args.format)


class _Usage(Exception):
    pass


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "envs":
            data = _cmd_envs(args)
        elif args.command == "measure":
            report = harness.compute_report(parse_error_csv(args.input, args.envs))
            data = emit_report(report, args.format)
        elif args.command == "correlate":
            report = harness.compute_report(parse_error_csv(args.input, args.envs))
            data = emit_report(harness.correlation_study(report), args.format)
        elif args.command == "simulate":
            data = _cmd_simulate(args)
        else:
            data = _cmd_bench(args)
        write_output(data, args.output)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"dg-gauge: error: {exc}", file=sys.stderr)
        return 2
    except DGGaugeError as exc:
        print(f"dg-gauge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
