"""Command-line front end: ``paa fit | elbow | simulate | viz | match``.

Every command prints one ``key=value`` line for scripts, then a short
human-readable summary. Exit status is 0 on success, 1 when reading,
fitting or writing fails and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .core import (
    ArchetypalModel,
    DataMatrix,
    Domain,
    DomainMismatch,
    FitConfig,
    InvalidConfig,
    ModelKind,
    PAAError,
    ShapeMismatch,
    check_domain,
)
from .model_selection import default_jobs, elbow_curve, run_restarts
from .obs_models import deviance
from . import simgen, viz

SCHEMA_VERSION = 1
ROWS = "rows-are-observations"
COLUMNS = "columns-are-observations"

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flag combination detected after argument parsing."""


class IngestError(PAAError):
    pass


# ---------------------------------------------------------------------------
# CSV ingestion


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv_table(path, header: str = "auto", id_column: str = "auto") -> np.ndarray:
    """Numeric table from a CSV file, in file orientation.

    ``header`` and ``id_column`` are ``"auto"``, ``"yes"`` or ``"no"``. In
    auto mode a first row with any non-numeric cell is a header, and a
    non-numeric first cell in the first data row marks an id column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise IngestError(f"{path}: no data rows")
    rows = [[c.strip() for c in r] for r in rows]
    has_header = (header == "yes" or
                  (header == "auto" and not all(_is_number(c) for c in rows[0])))
    body = rows[1:] if has_header else rows
    if not body:
        raise IngestError(f"{path}: header but no data rows")
    has_id = (id_column == "yes" or
              (id_column == "auto" and not _is_number(body[0][0])))
    if has_id:
        body = [r[1:] for r in body]
    width = len(body[0])
    if width == 0:
        raise IngestError(f"{path}: no numeric columns")
    offset = 2 if has_header else 1
    for i, r in enumerate(body):
        if len(r) != width:
            raise IngestError(
                f"{path}: ragged rows, line {i + offset} has {len(r)} numeric "
                f"fields, expected {width}")
    values = np.empty((len(body), width))
    for i, r in enumerate(body):
        for j, cell in enumerate(r):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise IngestError(
                    f"{path}: non-numeric value {cell!r} at row {i}, column {j}") from None
    return values


def ingest_csv(path, orientation: str = ROWS, domain=Domain.REAL, header: str = "auto",
               id_column: str = "auto") -> DataMatrix:
    """Read a CSV into a features x observations DataMatrix.

    Row and column numbers in domain errors refer to the numeric block of
    the file (0-based, header and id column excluded).
    """
    if orientation not in (ROWS, COLUMNS):
        raise InvalidConfig(f"unknown orientation {orientation!r}")
    table = read_csv_table(path, header, id_column)
    domain = Domain(domain)
    try:
        check_domain(table, domain)
    except DomainMismatch as err:
        raise DomainMismatch(f"{path}: {err}") from None
    return DataMatrix(table.T if orientation == ROWS else table, domain)


def write_csv(path, values: np.ndarray) -> None:
    """Write a matrix without header; integral values are written as ints."""
    values = np.asarray(values, dtype=float)
    integral = bool(np.all(values == np.round(values)))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in values:
            writer.writerow([str(int(v)) if integral else repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# model documents


def data_fingerprint(x: DataMatrix) -> str:
    """64-bit BLAKE2b digest of the shape and float64 contents, as hex."""
    h = hashlib.blake2b(digest_size=8)
    h.update(np.asarray(x.shape, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(x.values, dtype="<f8").tobytes())
    return h.hexdigest()


def _pack(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _unpack(obj: dict) -> np.ndarray:
    shape = tuple(int(s) for s in obj["shape"])
    data = np.asarray(obj["data"], dtype=float)
    if data.size != math.prod(shape):
        raise ShapeMismatch(f"array of shape {shape} holds {data.size} values")
    return data.reshape(shape)


@dataclass(frozen=True)
class ModelDocument:
    kind: ModelKind
    w: np.ndarray
    h: np.ndarray
    z: np.ndarray
    nll_trace: tuple
    config: dict
    seed_used: int
    stream_id: Optional[int]
    final_nll: float
    converged: bool
    iterations: int
    data_fingerprint: str
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        n, k = self.w.shape
        if self.h.shape != (k, n) or self.z.ndim != 2 or self.z.shape[1] != k:
            raise ShapeMismatch(
                f"inconsistent document shapes w={self.w.shape} h={self.h.shape} "
                f"z={self.z.shape}")

    @property
    def k(self) -> int:
        return self.w.shape[1]

    @classmethod
    def from_report(cls, report, x: DataMatrix) -> "ModelDocument":
        m: ArchetypalModel = report.model
        return cls(m.kind, m.w.values, m.h.values, m.z, m.nll_trace, m.config.to_dict(),
                   m.seed_used, m.stream_id, float(report.final_nll), bool(report.converged),
                   int(report.iterations), data_fingerprint(x))

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind.value,
            "k": self.k,
            "w": _pack(self.w),
            "h": _pack(self.h),
            "z": _pack(self.z),
            "nll_trace": [float(v) for v in self.nll_trace],
            "final_nll": self.final_nll,
            "converged": self.converged,
            "iterations": self.iterations,
            "config": self.config,
            "seed_used": self.seed_used,
            "stream_id": self.stream_id,
            "data_fingerprint": self.data_fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDocument":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise InvalidConfig(f"unsupported schema_version {d.get('schema_version')!r}")
        doc = cls(ModelKind.parse(d["kind"]), _unpack(d["w"]), _unpack(d["h"]),
                  _unpack(d["z"]), tuple(d["nll_trace"]), dict(d["config"]),
                  int(d["seed_used"]), d.get("stream_id"), float(d["final_nll"]),
                  bool(d["converged"]), int(d["iterations"]), str(d["data_fingerprint"]))
        if doc.k != int(d["k"]):
            raise ShapeMismatch(f"document says k={d['k']} but w has {doc.k} columns")
        return doc

    @classmethod
    def load(cls, path) -> "ModelDocument":
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except (KeyError, TypeError, ValueError) as err:
                if isinstance(err, PAAError):
                    raise
                raise InvalidConfig(f"{path}: malformed model document ({err})") from None


# ---------------------------------------------------------------------------
# helpers


def _summary(**fields) -> str:
    parts = []
    for key, value in fields.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        parts.append(f"{key}={value}")
    return " ".join(parts)


def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _positive(name):
    def parse(s):
        try:
            v = int(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer, got {s!r}") from None
        if v < 1:
            raise argparse.ArgumentTypeError(f"{name} must be >= 1, got {v}")
        return v
    return parse


def _lambda(s: str):
    if s == "auto":
        return "auto"
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--lambda must be 'auto' or a number, got {s!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"--lambda must be > 0, got {v}")
    return v


def _jobs(args) -> int:
    return args.jobs if args.jobs is not None else default_jobs()


def _config(args, k: int) -> FitConfig:
    try:
        return FitConfig(k=k, max_iter=args.max_iter, tol=args.tol, lambda_mode=args.lam,
                         restarts=args.restarts, seed=args.seed)
    except InvalidConfig as err:
        raise UsageError(str(err)) from None


def _load_data(args, kind: ModelKind) -> DataMatrix:
    return ingest_csv(args.input, args.orientation, kind.domain, args.header, args.id_column)


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    kind = ModelKind.parse(args.model)
    config = _config(args, args.k)
    x = _load_data(args, kind)
    if args.k > x.cols:
        raise UsageError(f"--k {args.k} exceeds the number of observations {x.cols}")
    report = run_restarts(x, kind, config, jobs=_jobs(args))
    doc = ModelDocument.from_report(report, x)
    _write_text(args.output, doc.to_json())
    print(_summary(command="fit", status="ok", kind=kind.value, k=doc.k,
                   final_nll=doc.final_nll, converged=doc.converged,
                   iterations=doc.iterations, stream=doc.stream_id,
                   fingerprint=doc.data_fingerprint))
    print(f"Fitted {doc.k} {kind.value} archetypes to {x.cols} observations "
          f"({x.rows} features), best of {config.restarts} restarts; "
          f"model written to {args.output}")
    return EXIT_OK


def cmd_elbow(args) -> int:
    if args.k_min > args.k_max:
        raise UsageError(f"--k-min {args.k_min} exceeds --k-max {args.k_max}")
    kind = ModelKind.parse(args.model)
    config = _config(args, args.k_min)
    x = _load_data(args, kind)
    if args.k_max > x.cols:
        raise UsageError(f"--k-max {args.k_max} exceeds the number of observations {x.cols}")
    curve = elbow_curve(x, kind, args.k_min, args.k_max, config, jobs=_jobs(args),
                        warm_start=not args.no_warm_start)
    out = Path(args.output)
    if out.suffix.lower() == ".csv":
        with open(out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", "best_nll", "seed_of_best"])
            for e in curve.entries:
                writer.writerow([e.k, repr(e.best_nll), e.seed_of_best])
    else:
        _write_text(out, json.dumps(curve.to_dict(), indent=2, sort_keys=True) + "\n")
    if args.plot:
        _write_text(args.plot, viz.render_curve_svg(curve.ks(), curve.nlls()))
    sug = curve.suggestion()
    print(_summary(command="elbow", status="ok", kind=kind.value, k_min=args.k_min,
                   k_max=args.k_max, rows=len(curve.entries),
                   monotone=curve.is_monotone(),
                   heuristic_k=sug["k"] if sug else "none"))
    print("k  best_nll")
    for e in curve.entries:
        print(f"{e.k:<3d}{e.best_nll:.6g}")
    if sug:
        print(f"kneedle suggests k={sug['k']} (heuristic; inspect the curve)")
    return EXIT_OK


_GENERATORS = {
    "binary": (simgen.gen_binary, ("K", "d", "n", "p_s", "alpha")),
    "poisson": (simgen.gen_poisson, ("K", "d", "n", "rate_max", "alpha")),
    "multinomial": (simgen.gen_multinomial, ("K", "d", "n", "count_min", "count_max", "alpha")),
}


def cmd_simulate(args) -> int:
    gen, allowed = _GENERATORS[args.kind]
    overrides = {}
    for name in ("K", "d", "n", "p_s", "alpha", "rate_max", "count_min", "count_max"):
        value = getattr(args, name)
        if value is None:
            continue
        if name not in allowed:
            raise UsageError(f"--{name.replace('_', '-')} does not apply to --kind {args.kind}")
        overrides[name] = value
    ds = gen(args.seed, **overrides)
    write_csv(args.output, ds.x.values.T)
    truth = {
        "kind": ds.kind.value,
        "true_archetypes": _pack(ds.true_archetypes),
        "true_h": _pack(ds.true_h.values),
        "gen_config": ds.gen_config,
        "orientation": ROWS,
    }
    _write_text(args.truth, json.dumps(truth, indent=2, sort_keys=True) + "\n")
    print(_summary(command="simulate", status="ok", kind=args.kind, seed=args.seed,
                   observations=ds.x.cols, features=ds.x.rows,
                   archetypes=ds.true_archetypes.shape[1]))
    print(f"Wrote {ds.x.cols} observations x {ds.x.rows} features to {args.output} "
          f"and the generating archetypes to {args.truth}")
    return EXIT_OK


def cmd_viz(args) -> int:
    if args.deviance and not args.input:
        raise UsageError("--deviance needs --input with the original data")
    doc = ModelDocument.load(args.model)
    devs = None
    if args.deviance:
        x = ingest_csv(args.input, args.orientation, doc.kind.domain, args.header,
                       args.id_column)
        if data_fingerprint(x) != doc.data_fingerprint:
            raise ShapeMismatch(
                f"{args.input} does not match the data the model was fitted to "
                "(fingerprint differs)")
        means = doc.z @ doc.h
        floor = float(doc.config.get("prob_floor", 1e-6))
        devs = np.array([deviance(x.values[:, n], means[:, n], doc.kind, floor)
                         for n in range(x.cols)])
    layout = viz.build_layout(doc.z, doc.h, devs, whiskers=args.whiskers, order=args.order)
    svg = viz.render_svg(layout, show_deviance=args.deviance, show_whiskers=args.whiskers)
    out = Path(args.out)
    layout_path = Path(args.layout) if args.layout else out.with_suffix(".json")
    _write_text(out, svg)
    _write_text(layout_path, json.dumps(layout.to_dict(), indent=2, sort_keys=True) + "\n")
    print(_summary(command="viz", status="ok", k=doc.k, points=doc.h.shape[1],
                   order=",".join(str(v) for v in layout.vertex_order),
                   warnings=len(layout.warnings)))
    print(f"Simplex plot written to {out}, layout to {layout_path}")
    for w in layout.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def cmd_match(args) -> int:
    doc = ModelDocument.load(args.model)
    with open(args.truth, encoding="utf-8") as fh:
        truth_doc = json.load(fh)
    truth = _unpack(truth_doc["true_archetypes"])
    if args.metric == "jaccard" and not np.isin(truth, (0.0, 1.0)).all():
        raise UsageError("--metric jaccard needs binary true archetypes")
    z = simgen.normalize_profiles(doc.z) if args.normalize else doc.z
    result = simgen.match_archetypes(z, truth, args.metric)
    payload = {
        "metric": args.metric,
        "assignment": result.assignment,
        "distances": _pack(result.distances),
        "matched_count": result.matched_count,
        "matched_distances": result.matched_distances(),
        "true_count": int(truth.shape[1]),
    }
    if args.output:
        _write_text(args.output, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    md = result.matched_distances()
    print(_summary(command="match", status="ok", metric=args.metric,
                   matched_count=result.matched_count, true_count=int(truth.shape[1]),
                   max_distance=max(md) if md else "none"))
    blanks = [r for r, t in enumerate(result.assignment) if t is None]
    print(f"{result.matched_count} of {truth.shape[1]} true archetypes matched; "
          f"unmatched recovered archetypes: {blanks if blanks else 'none'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_ingest(p, required=True):
    p.add_argument("--input", required=required, help="CSV data file")
    p.add_argument("--orientation", choices=(ROWS, COLUMNS), default=ROWS)
    p.add_argument("--header", choices=("auto", "yes", "no"), default="auto")
    p.add_argument("--id-column", dest="id_column", choices=("auto", "yes", "no"),
                   default="auto")


def _add_fit_flags(p):
    p.add_argument("--model", required=True, choices=[k.value for k in ModelKind])
    _add_ingest(p)
    p.add_argument("--output", required=True)
    p.add_argument("--restarts", type=_positive("--restarts"), default=10)
    p.add_argument("--max-iter", dest="max_iter", type=_positive("--max-iter"), default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=_lambda, default="auto")
    p.add_argument("--jobs", type=_positive("--jobs"), default=None,
                   help="worker processes (default: $PAA_JOBS, else CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit archetypes with random restarts")
    _add_fit_flags(p)
    p.add_argument("--k", type=_positive("--k"), required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("elbow", help="best NLL for a range of K")
    _add_fit_flags(p)
    p.add_argument("--k-min", dest="k_min", type=_positive("--k-min"), required=True)
    p.add_argument("--k-max", dest="k_max", type=_positive("--k-max"), required=True)
    p.add_argument("--plot", help="optional SVG line plot of the curve")
    p.add_argument("--no-warm-start", dest="no_warm_start", action="store_true",
                   help="only random restarts (the curve may then fail to be monotone)")
    p.set_defaults(func=cmd_elbow)

    p = sub.add_parser("simulate", help="write a synthetic dataset and its truth")
    p.add_argument("--kind", required=True, choices=sorted(_GENERATORS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="data CSV, one observation per row")
    p.add_argument("--truth", required=True, help="truth JSON")
    p.add_argument("--K", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--p-s", dest="p_s", type=float)
    p.add_argument("--rate-max", dest="rate_max", type=int)
    p.add_argument("--count-min", dest="count_min", type=int)
    p.add_argument("--count-max", dest="count_max", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("viz", help="simplex plot of a fitted model")
    p.add_argument("--model", required=True, help="model JSON written by fit")
    p.add_argument("--deviance", action="store_true", help="colour points by deviance")
    _add_ingest(p, required=False)
    p.add_argument("--whiskers", action="store_true")
    p.add_argument("--order", choices=("tsp", "given"), default="tsp")
    p.add_argument("--out", default="simplex.svg")
    p.add_argument("--layout", help="layout JSON (default: --out with .json suffix)")
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("match", help="match fitted archetypes to true ones")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--metric", choices=("jaccard", "l1"), default="l1")
    p.add_argument("--normalize", action="store_true",
                   help="rescale archetypes to unit column sums before l1 matching")
    p.add_argument("--output", help="MatchResult JSON")
    p.set_defaults(func=cmd_match)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as err:
        print(f"paa {args.command}: usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (PAAError, OSError, ValueError, KeyError) as err:
        print(_summary(command=args.command, status="error", error=type(err).__name__),
              file=sys.stderr)
        print(f"paa {args.command}: {err}", file=sys.stderr)
        return EXIT_FAILURE


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
