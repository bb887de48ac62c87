"""The ``volfield`` command line.

Subcommands: volume, residuals, index, compare-region, minimize,
field-sample, sweep.  Every subcommand writes one report (JSON, CSV or a
plain table) to stdout or to ``--out``.

Exit codes: 0 success, 2 domain or input error, 3 non-convergence or
exhausted budget, 64 command-line usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .fields import (
    AngleField,
    LatitudeField,
    LatitudeSpec,
    MeridianField,
    TTypeField,
    TTypeSpec,
    ZetaSpec,
    load_field,
)
from .first_order import GRID_EPS, GRID_SIZE, ResidualGrid, residual_report
from .geometry import FD_STEP, ConvergenceError, DomainError
from .minimizer import (
    BudgetExhausted,
    FamilyConfig,
    GridAngleField,
    GridConfig,
    GridField,
    grid_report,
    minimize_grid,
    minimize_in_family,
)
from .quadrature import (
    DomainRegion,
    QuadratureSpec,
    bcj_lower_bound,
    bounds_check,
    omega_compare,
    omega_region,
    sweep_rows,
    volume,
    volume_meridian_closed,
)
from .topology import CONVENTIONS, PoleIndexError, UnwrapError, index_at_poles, poincare_hopf_check

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_NONCONVERGENCE = 3
EXIT_USAGE = 64

JSON_DIGITS = 12
TABLE_DIGITS = 9

FAMILIES = ("meridian", "latitude", "ttype", "grid")
INLINE_FIELD_FLAGS = ("family", "k", "phi0", "fourier", "T", "transversal", "transversal_at", "grid_file")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits with 64 (EX_USAGE) instead of 2 and takes no abbreviated flags."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- value parsing ---------------------------------------------------------------

def _floats(text: str, count: int | None = None, what: str = "value list"):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what} must be comma-separated numbers, got {text!r}")
    if count is not None and len(values) != count:
        raise argparse.ArgumentTypeError(f"{what} needs {count} numbers, got {len(values)}")
    return values


def parse_fourier(text: str):
    values = _floats(text, what="--fourier")
    if len(values) % 2:
        raise argparse.ArgumentTypeError("--fourier takes pairs c1,s1,c2,s2,...")
    return tuple(zip(values[0::2], values[1::2]))


def parse_region(text: str):
    t0, t1, p0, p1 = _floats(text, 4, "--region")
    return DomainRegion.rectangle((t0, t1), (p0, p1))


def parse_direction(text: str):
    return tuple(_floats(text, 2, "--T"))


def parse_grid(text: str):
    try:
        n, m = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--grid must look like NxM, got {text!r}")
    if n < 1 or m < 1:
        raise argparse.ArgumentTypeError("--grid sizes must be positive")
    return n, m


def parse_k_range(text: str):
    try:
        if ":" in text:
            lo, hi = (int(v) for v in text.split(":"))
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k-range must look like 0:10 or 0,1,2, got {text!r}")


def thread_count() -> int:
    """Worker cap from VOLFIELD_THREADS (default 1: everything runs in-process)."""
    raw = os.environ.get("VOLFIELD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# -- output ----------------------------------------------------------------------

def _round(obj, digits):
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(f"{v:.{digits}g}") if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _round(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v, digits) for v in obj]
    return str(obj)


def _fmt(v, digits):
    if isinstance(v, bool) or isinstance(v, (int, np.integer)):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{digits}g}"
    return str(v)


def render(payload, rows, fmt: str) -> str:
    """JSON renders ``payload``; csv and table render ``rows`` (a list of dicts)."""
    if fmt == "json":
        return json.dumps(_round(payload, JSON_DIGITS), indent=2) + "\n"
    if not rows:
        return ""
    header = list(rows[0].keys())
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h], JSON_DIGITS) for h in header])
        return buf.getvalue()
    cells = [header] + [[_fmt(row[h], TABLE_DIGITS) for h in header] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "".join("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in cells)


def _join(values) -> str:
    """Comma-joined scalars; nested sequences are separated by semicolons."""
    if values and isinstance(values[0], (list, tuple)):
        return ";".join(_join(v) for v in values)
    return ",".join(_fmt(v, TABLE_DIGITS) for v in values)


def _flat_rows(payload: dict):
    """A key/value table for reports that are single records."""
    rows = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k, v in obj.items():
                walk(f"{prefix}.{k}" if prefix else str(k), v)
        elif isinstance(obj, (list, tuple)):
            rows.append({"key": prefix, "value": _join(obj)})
        else:
            rows.append({"key": prefix, "value": obj})

    walk("", payload)
    return rows


def emit(text: str, out) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- field construction ----------------------------------------------------------

def field_from_args(args) -> AngleField:
    if getattr(args, "spec", None):
        given = [f for f in INLINE_FIELD_FLAGS if getattr(args, f, None) is not None]
        if given:
            raise UsageError(f"--spec cannot be combined with inline field flags ({', '.join(given)})")
        return load_field(args.spec)
    family = args.family or "meridian"
    k = 0 if args.k is None else args.k
    phi0 = 0.0 if args.phi0 is None else args.phi0
    fourier = args.fourier or ()
    if family == "meridian":
        return MeridianField(ZetaSpec(k, phi0, fourier))
    if family == "latitude":
        return LatitudeField(LatitudeSpec(phi0))
    if family == "ttype":
        transversal = args.transversal or "equator"
        at = math.pi if args.transversal_at is None else args.transversal_at
        return TTypeField(TTypeSpec(args.T or (1.0, 0.0), ZetaSpec(k, phi0, fourier), transversal, at))
    if family == "grid":
        if not args.grid_file:
            raise UsageError("--family grid needs --grid-file")
        return GridAngleField(GridField.load(args.grid_file))
    raise UsageError(f"unknown family {family!r}")


def _add_field_flags(p):
    g = p.add_argument_group("field")
    g.add_argument("--family", choices=FAMILIES, default=None, help="field family (default meridian)")
    g.add_argument("-k", type=int, default=None, help="winding number (default 0)")
    g.add_argument("--phi0", type=float, default=None, help="phase (default 0)")
    g.add_argument("--fourier", type=parse_fourier, default=None, metavar="c1,s1,...",
                   help="Fourier perturbation of zeta for meridian and ttype fields")
    g.add_argument("--T", type=parse_direction, default=None, metavar="a,b",
                   help="loxodrome direction for ttype fields (default 1,0)")
    g.add_argument("--transversal", choices=("equator", "meridian"), default=None,
                   help="initial curve for ttype fields (default equator)")
    g.add_argument("--transversal-at", type=float, default=None,
                   help="longitude of the meridian transversal (default pi)")
    g.add_argument("--grid-file", default=None, help="VFGRID01 file for --family grid")
    g.add_argument("--spec", default=None, metavar="FILE",
                   help="volfield-spec/1 JSON field document (excludes the inline field flags)")


def _add_output_flags(p, default_format):
    p.add_argument("--format", choices=("json", "csv", "table"), default=default_format,
                   help=f"output format (default {default_format})")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")


# -- subcommands -----------------------------------------------------------------

def _region_from_args(args) -> DomainRegion:
    if getattr(args, "omega", False):
        return omega_region()
    return args.region or DomainRegion.full()


def cmd_volume(args) -> int:
    field = field_from_args(args)
    region = _region_from_args(args)
    spec = QuadratureSpec(panels=(args.panels, args.panels)) if args.panels else QuadratureSpec()
    result = volume(field, region, spec, args.radius)
    bounds = {}
    if isinstance(field, MeridianField) and region.kind != "predicate" and args.radius == 1.0:
        k = abs(field.winding)
        area = region.euclidean_area
        bounds["euclidean_area"] = area
        if k >= 1:
            bounds["lower_sandwich"] = (k - 1) * area
            bounds["upper_sandwich"] = (k + 1) * area
        if region.kind == "full-D":
            bounds["bcj"] = bcj_lower_bound(1 + k, abs(1 - k))
            if not field.spec.fourier:
                bounds["closed_form"] = volume_meridian_closed(field.winding)
    payload = result.to_dict()
    payload["field"] = field.to_dict() if hasattr(field, "to_dict") else {"family": field.family}
    payload["radius"] = args.radius
    payload["bounds"] = bounds
    row = {"family": field.family, "value": result.value, "error": result.error}
    row.update(bounds)
    emit(render(payload, [row], args.format), args.out)
    return EXIT_OK


def cmd_residuals(args) -> int:
    field = field_from_args(args)
    n_t, n_p = args.grid or (GRID_SIZE, GRID_SIZE)
    offset = 0.0 if field.full_circle else 0.5
    grid = ResidualGrid(n_t, n_p, GRID_EPS, offset)
    report = residual_report(field, args.radius, grid, args.step)
    summary = report.summary()
    summary["step"] = args.step
    summary["family"] = field.family
    if args.format == "csv":
        emit(report.to_csv(JSON_DIGITS), args.out)
    elif args.format == "table":
        rows = [{"residual": name, "sup": summary[f"sup_{name}"],
                 "theta": summary[f"argsup_{name}"][0], "phi": summary[f"argsup_{name}"][1]}
                for name in ("cr", "el", "realpart")]
        emit(render(None, rows, "table"), args.out)
    else:
        emit(render(summary, None, "json"), args.out)
    return EXIT_OK


def cmd_index(args) -> int:
    field = field_from_args(args)
    report = index_at_poles(field, convention=args.convention)
    payload = report.to_dict()
    payload["k"] = field.winding
    payload["poincare_hopf"] = poincare_hopf_check(report)
    row = {"k": field.winding, "index_N": report.index_N, "index_S": report.index_S, "sum": report.euler_sum}
    emit(render(payload, [row], args.format), args.out)
    return EXIT_OK


def cmd_compare_region(args) -> int:
    if args.region is not None:
        k = 1 if args.k is None else args.k
        check = bounds_check(k, args.region)
        payload = check.to_dict()
        payload["region"] = args.region.describe()
    else:
        payload = omega_compare(LatitudeSpec(0.0 if args.phi0 is None else args.phi0),
                                n_pointwise=args.samples, seed=args.seed).to_dict()
    emit(render(payload, _flat_rows(payload), args.format), args.out)
    return EXIT_OK


def cmd_minimize(args) -> int:
    k = 0 if args.k is None else args.k
    status = EXIT_OK
    if args.method == "family":
        config = FamilyConfig(n_modes=args.modes, seed=args.seed)
        if args.max_iter:
            config.max_evals = args.max_iter
        try:
            best, trace = minimize_in_family(k, config)
        except BudgetExhausted as exc:
            best, trace, status = exc.best, exc.trace, EXIT_NONCONVERGENCE
        field = MeridianField(best)
        payload = {
            "method": "family", "k": k, "volume": trace.objective[-1],
            "meridian_volume": volume_meridian_closed(k),
            "perturbation_norm": best.perturbation_norm, "field": field.to_dict(),
            "trace": trace.summary(), "converged": status == EXIT_OK,
        }
        if args.save_field:
            with open(args.save_field, "w") as fh:
                json.dump(field.to_dict(), fh, indent=2)
                fh.write("\n")
    else:
        n_t, n_p = args.grid or (64, 64)
        config = GridConfig(n_theta=n_t, n_phi=n_p, seed=args.seed)
        if args.max_iter:
            config.max_iter = args.max_iter
        try:
            best, trace = minimize_grid(k, config)
        except BudgetExhausted as exc:
            best, trace, status = exc.best, exc.trace, EXIT_NONCONVERGENCE
        payload = {"method": "grid", "grid": [n_t, n_p], **grid_report(best).to_dict(),
                   "trace": trace.summary(), "converged": status == EXIT_OK}
        if args.save_field:
            best.save(args.save_field)
    if status != EXIT_OK:
        print("volfield: did not converge: iteration budget exhausted, reporting the best field found",
              file=sys.stderr)
    if not args.timing:
        payload["trace"].pop("wall_clock", None)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace.to_csv())
    emit(render(payload, _flat_rows(payload), args.format), args.out)
    return status


def sample_rows(field, n_t: int, n_p: int) -> list:
    """(theta, phi, a, b) at the cell centres of an n_t x n_p grid.

    Cell centres keep the samples off the punctures and off the phi = 0 slit.
    """
    theta = math.pi * (np.arange(n_t) + 0.5) / n_t
    phi = 2 * math.pi * (np.arange(n_p) + 0.5) / n_p
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    a, b = field.coefficients(tt, pp)
    return [{"theta": float(t), "phi": float(p), "a": float(x), "b": float(y)}
            for t, p, x, y in zip(tt.ravel(), pp.ravel(), np.ravel(a), np.ravel(b))]


def cmd_field_sample(args) -> int:
    field = field_from_args(args)
    n_t, n_p = args.grid or (24, 48)
    rows = sample_rows(field, n_t, n_p)
    payload = {"family": field.family, "grid": [n_t, n_p], "rows": rows}
    emit(render(payload, rows, args.format), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    ks = args.k_range
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        rows = list(pool.map(lambda k: next(sweep_rows([k])), ks))
    if args.indices:
        for row in rows:
            rep = index_at_poles(MeridianField(ZetaSpec(row["k"])))
            row.update(index_N=rep.index_N, index_S=rep.index_S, sum=rep.euler_sum)
    emit(render({"rows": rows}, rows, args.format), args.out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="volfield", description="Volume of unit vector fields on the punctured sphere.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("volume", help="volume of a field over a region")
    _add_field_flags(p)
    where = p.add_mutually_exclusive_group()
    where.add_argument("--region", type=parse_region, default=None, metavar="t1,t2,p1,p2",
                       help="rectangle in (theta, phi); default the whole domain")
    where.add_argument("--omega", action="store_true", help="integrate over the Omega region")
    p.add_argument("--radius", type=float, default=1.0, help="sphere radius (default 1)")
    p.add_argument("--panels", type=int, default=None, help="Gauss-Legendre nodes per axis (default 256)")
    _add_output_flags(p, "json")
    p.set_defaults(func=cmd_volume)

    p = sub.add_parser("residuals", help="CR, Euler-Lagrange and real-part residuals on a grid")
    _add_field_flags(p)
    p.add_argument("--grid", type=parse_grid, default=None, metavar="NxM",
                   help=f"interior grid (default {GRID_SIZE}x{GRID_SIZE})")
    p.add_argument("--step", type=float, default=FD_STEP, help=f"finite-difference step (default {FD_STEP:g})")
    p.add_argument("--radius", type=float, default=1.0, help="sphere radius (default 1)")
    _add_output_flags(p, "json")
    p.set_defaults(func=cmd_residuals)

    p = sub.add_parser("index", help="indices at the two punctures")
    _add_field_flags(p)
    p.add_argument("--convention", choices=CONVENTIONS, default="antipodal",
                   help="orientation convention (default antipodal: indices 1-k, 1+k)")
    _add_output_flags(p, "table")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("compare-region", help="Omega comparison or sandwich bounds on a rectangle")
    where = p.add_mutually_exclusive_group()
    where.add_argument("--omega", action="store_true", help="latitude field against the Euclidean area of Omega (default)")
    where.add_argument("--region", type=parse_region, default=None, metavar="t1,t2,p1,p2",
                       help="check the sandwich bounds of the meridian field on a rectangle")
    p.add_argument("-k", type=int, default=None, help="winding for --region (default 1)")
    p.add_argument("--phi0", type=float, default=None, help="latitude field phase for --omega")
    p.add_argument("--samples", type=int, default=10_000, help="pointwise-check samples (default 10000)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed (default 0)")
    _add_output_flags(p, "json")
    p.set_defaults(func=cmd_compare_region)

    p = sub.add_parser("minimize", help="search for a small-volume field at fixed winding")
    p.add_argument("-k", type=int, default=None, help="winding number (default 0)")
    p.add_argument("--method", choices=("family", "grid"), default="family",
                   help="meridian-parallel family or grid relaxation (default family)")
    p.add_argument("--grid", type=parse_grid, default=None, metavar="NxM", help="grid size (default 64x64)")
    p.add_argument("--modes", type=int, default=6, help="Fourier modes for the family search (default 6)")
    p.add_argument("--max-iter", type=int, default=None,
                   help="evaluation budget (family) or iteration budget (grid)")
    p.add_argument("--seed", type=int, default=0, help="random start seed (default 0)")
    p.add_argument("--save-field", default=None, metavar="FILE",
                   help="write the result (JSON spec for family, VFGRID01 for grid)")
    p.add_argument("--trace", default=None, metavar="FILE", help="write the objective trace as CSV")
    p.add_argument("--timing", action="store_true", help="include wall-clock time (breaks byte-identical output)")
    _add_output_flags(p, "json")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("field-sample", help="(theta, phi, a, b) rows on a cell-centred grid for plotting")
    _add_field_flags(p)
    p.add_argument("--grid", type=parse_grid, default=None, metavar="NxM", help="grid (default 24x48)")
    _add_output_flags(p, "csv")
    p.set_defaults(func=cmd_field_sample)

    p = sub.add_parser("sweep", help="meridian volumes and bounds over a range of k")
    p.add_argument("--k-range", type=parse_k_range, default=list(range(0, 11)), metavar="LO:HI",
                   help="inclusive range or comma list (default 0:10)")
    p.add_argument("--indices", action="store_true", help="add pole-index columns")
    _add_output_flags(p, "csv")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(EXIT_USAGE, f"volfield: error: {exc}\n")
    except DomainError as exc:
        print(f"volfield: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ConvergenceError, BudgetExhausted, PoleIndexError, UnwrapError) as exc:
        print(f"volfield: did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ValueError, OSError) as exc:
        print(f"volfield: invalid input: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
