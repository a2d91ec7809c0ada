"""Command line front end.

Exit status: 0 on success, 1 for invalid input or a failed verification,
2 when a completed computation does not stabilize within the slice budget.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import List, Optional

from . import models
from .complex import complex_from_dict, equivariantize, validate
from .cubes import NoStabilization, check_coherence, cube_from_dict, telescope
from .novikov import INF
from .reduction import Reduction, spectral_pages


class InputError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (exit 1); 2 is reserved for non-stabilization
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _load(path: str, kind: str):
    data = _load_json(path)
    try:
        if kind == "model":
            return models.spec_from_dict(data)
        if kind == "complex":
            return complex_from_dict(data)
        return cube_from_dict(data)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def _rat(q) -> str:
    if q == INF:
        return "inf"
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _precision(text: str) -> Fraction:
    try:
        r = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise InputError(f"--precision: not a rational number: {text!r}") from None
    if r <= 0:
        raise InputError("--precision must be positive")
    return r


def _spec(args) -> models.ModelSpec:
    spec = _load(args.model, "model")
    if args.orbits is not None:
        spec = _with_truncation(spec, args.orbits)
    return spec


def _with_truncation(spec: models.ModelSpec, k: int) -> models.ModelSpec:
    from dataclasses import replace

    if k < 1:
        raise InputError("--orbits must be positive")
    if spec.variant == "disjoint_union":
        return replace(spec, parts=tuple(_with_truncation(p, k) for p in spec.parts), orbit_truncation=k)
    if spec.variant == "scaled":
        return replace(spec, base=_with_truncation(spec.base, k), orbit_truncation=k)
    return replace(spec, orbit_truncation=k)


def _need(args, *names):
    given = [n for n in names if getattr(args, n) is not None]
    if len(given) != 1:
        flags = " or ".join("--" + n for n in names)
        raise InputError(f"{args.verb} needs exactly one of {flags}")
    return given[0]


# -- verbs ------------------------------------------------------------------------------------

def cmd_verify(args):
    which = _need(args, "complex", "cube", "model")
    if which == "complex":
        c = _load(args.complex, "complex")
        probs = validate(c)
    elif which == "cube":
        probs = check_coherence(_load(args.cube, "cube"))
    else:
        spec = _load(args.model, "model")
        model = models.build(spec)
        probs = []
        for k in range(1, min(spec.orbit_truncation, 3) + 1):
            probs += [f"slice {k}: {p}" for p in validate(model.ray.slice(k))]
    return {"valid": not probs, "violations": probs}, (0 if not probs else 1)


def cmd_homology(args):
    which = _need(args, "complex", "model")
    r = _precision(args.precision)
    if which == "complex":
        c = _load(args.complex, "complex")
        bc = Reduction(c).barcode(r, args.coeff)
    else:
        bc = models.sh(_spec(args), r, args.coeff)
    out = bc.to_dict()
    out["total_infinite"] = bc.total_infinite()
    if bc.meta:
        out["slices"] = bc.meta.get("slices")
        if "convention" in bc.meta:
            out["convention"] = bc.meta["convention"]
    return out, 0


def cmd_equivariant(args):
    which = _need(args, "complex", "model")
    r = _precision(args.precision)
    N = args.u_trunc
    if which == "complex":
        c = _load(args.complex, "complex")
        bc = Reduction(equivariantize(c, N).complex).barcode(r, args.coeff)
    else:
        bc = models.sh_equivariant(_spec(args), r, N, args.coeff)
    out = bc.to_dict()
    out["total_infinite"] = bc.total_infinite()
    out["u_truncation"] = N
    if "convention" in bc.meta:
        out["convention"] = bc.meta["convention"]
    return out, 0


def _levels(args) -> list:
    levels: list = [None]
    if args.levels:
        for item in args.levels.split(","):
            try:
                levels.append(Fraction(item.strip()))
            except (ValueError, ZeroDivisionError):
                raise InputError(f"--levels: not a rational number: {item!r}") from None
    return levels


def cmd_gysin(args):
    _need(args, "model")
    r = _precision(args.precision)
    N = max(args.u_trunc, 1)
    reports = models.gysin_check(_spec(args), N, r, _levels(args), coefficients=args.coeff)
    out = {"u_truncation": N, "levels": {k: v.to_dict() for k, v in reports.items()}}
    out["exact"] = all(v.exact for v in reports.values())
    return out, (0 if out["exact"] else 1)


def _pages_json(pages) -> dict:
    out = {}
    for s, page in sorted(pages.items()):
        name = "inf" if s == 0 else str(s)
        out[name] = [{"p": p, "q": q, "rank": n} for (p, q), n in sorted(page.items())]
    return out


def cmd_spectral(args):
    which = _need(args, "complex", "model")
    N = args.u_trunc
    if which == "complex":
        ec = equivariantize(_load(args.complex, "complex"), N)
        pages = spectral_pages(ec, max_page=args.pages)
    else:
        pages = models.sh_spectral_pages(_spec(args), N, _precision(args.precision), args.pages)
    return {"u_truncation": N, "pages": _pages_json(pages)}, 0


def cmd_telescope(args):
    _need(args, "model")
    spec = _spec(args)
    r = _precision(args.precision)
    k = args.orbits or min(spec.orbit_truncation, 4)
    ray = models.working_ray(models.build(spec))
    tel = telescope(ray, k)
    bc = Reduction(tel).barcode(r, args.coeff)
    last = Reduction(ray.slice(k)).barcode(r, args.coeff)
    return {
        "slices": k,
        "generators": len(tel.generators),
        "telescope": bc.to_dict(),
        "last_slice": last.to_dict(),
    }, 0


def cmd_capacity(args):
    _need(args, "model")
    spec = _spec(args)
    r = _precision(args.precision)
    if args.kind == "csh":
        rep = models.csh(spec, r)
    else:
        N = args.u_trunc if args.u_trunc is not None and args.u_trunc >= args.k - 1 else args.k - 1
        rep = models.cgh(spec, args.k, r, N)
    return rep.to_dict(args.verbose), 0


# -- sweep -----------------------------------------------------------------------------------------

MODEL_PARAMS = ("delta", "factor", "orbit_truncation")
RUN_PARAMS = ("precision", "k", "u_trunc")
COMPUTE = ("infinite", "equivariant_infinite", "csh", "cgh")


def _cell(payload):
    base, params, compute = payload
    data = json.loads(json.dumps(base))
    factor = None
    for key, value in params.items():
        if key == "factor":
            factor = value
        elif key in ("delta", "orbit_truncation"):
            data[key] = value
    spec = models.spec_from_dict(data)
    if factor is not None:
        spec = models.scaled(spec, Fraction(str(factor)))
    r = Fraction(str(params.get("precision", 1)))
    k = int(params.get("k", 1))
    N = int(params.get("u_trunc", max(k - 1, 0)))
    row = {key: str(v) for key, v in params.items()}
    try:
        for item in compute:
            if item == "infinite":
                row[item] = str(models.sh(spec, r).total_infinite())
            elif item == "equivariant_infinite":
                row[item] = str(models.sh_equivariant(spec, r, N).total_infinite())
            elif item == "csh":
                row[item] = _rat(models.csh(spec, r).value)
            elif item == "cgh":
                row[item] = _rat(models.cgh(spec, k, r, max(N, k - 1)).value)
    except NoStabilization:
        for item in compute:
            row.setdefault(item, "no stabilization")
    return row


def cmd_sweep(args):
    if args.grid is None:
        raise InputError("sweep needs --grid PATH")
    grid = _load_json(args.grid)
    if not isinstance(grid, dict) or "model" not in grid:
        raise InputError(f"{args.grid}: grid spec needs 'model', 'parameters' and 'compute'")
    params = grid.get("parameters", {})
    compute = grid.get("compute", ["infinite"])
    for key in params:
        if key not in MODEL_PARAMS + RUN_PARAMS:
            raise InputError(f"{args.grid}: parameters.{key}: unknown parameter")
    for item in compute:
        if item not in COMPUTE:
            raise InputError(f"{args.grid}: compute: unknown column {item!r}")
    try:
        models.spec_from_dict(grid["model"])
    except ValueError as exc:
        raise InputError(f"{args.grid}: model: {exc}") from None
    keys = list(params)
    columns = grid.get("columns", keys + list(compute))
    cells = [dict(zip(keys, combo)) for combo in itertools.product(*(params[k] for k in keys))] if keys else []
    payloads = [(grid["model"], c, compute) for c in cells]
    if args.jobs and args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_cell, payloads))
    else:
        rows = [_cell(p) for p in payloads]
    return {"columns": columns, "rows": [[row.get(c, "") for c in columns] for row in rows]}, 0


# -- output -------------------------------------------------------------------------------------------

def _table(out: dict) -> str:
    if "columns" in out and "rows" in out:
        header, rows = out["columns"], out["rows"]
    elif "degrees" in out:
        header = ["degree", "infinite", "finite"]
        rows = [[q, str(d["infinite"]), " ".join(d["finite"]) or "-"] for q, d in out["degrees"].items()]
    else:
        header = ["key", "value"]
        rows = [[k, json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else str(v)] for k, v in out.items()]
    widths = [max([len(str(h))] + [len(str(r[i])) for r in rows]) for i, h in enumerate(header)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths)).rstrip()]
    for r in rows:
        lines.append("  ".join(str(x).ljust(w) for x, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


VERBS = {
    "verify": cmd_verify,
    "homology": cmd_homology,
    "equivariant": cmd_equivariant,
    "gysin": cmd_gysin,
    "spectral": cmd_spectral,
    "telescope": cmd_telescope,
    "capacity": cmd_capacity,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="artifact", description="Novikov-weighted Floer toy computations")
    p.add_argument("verb", choices=sorted(VERBS))
    p.add_argument("--model")
    p.add_argument("--complex")
    p.add_argument("--cube")
    p.add_argument("--grid")
    p.add_argument("--precision", default="1")
    p.add_argument("--u-trunc", dest="u_trunc", type=int, default=None)
    p.add_argument("--orbits", type=int, default=None)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--kind", choices=["csh", "cgh"], default="csh")
    p.add_argument("--coeff", choices=["ring", "lambda"], default="lambda")
    p.add_argument("--levels", help="extra action levels for gysin, comma separated (use --levels=-1/2,-2 for negative values)")
    p.add_argument("--pages", type=int, default=2)
    p.add_argument("--format", choices=["json", "table"], default="json")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--verbose", action="store_true")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.u_trunc is None:
        args.u_trunc = 0 if args.verb != "gysin" else 1
    if args.u_trunc < 0:
        print("error: --u-trunc must be nonnegative", file=sys.stderr)
        return 1
    try:
        out, status = VERBS[args.verb](args)
    except NoStabilization as exc:
        print(json.dumps({"error": str(exc), "diagnostics": exc.diagnostics}, sort_keys=True, indent=2))
        return 2
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.format == "table":
        print(_table(out))
    else:
        print(json.dumps(out, sort_keys=True, indent=2))
    return status


if __name__ == "__main__":
    sys.exit(main())
