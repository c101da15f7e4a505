"""Command-line entry point.

Exit codes: 0 computed and every embedded check passed, 1 computed but a check failed,
2 bad input.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import apps, geometry, plseq
from .core import SequenceSpec, escape_radius
from .dynamics import GridSpec, RegionMask, disc_mask, filled_julia, invariance_check, write_pgm

OK, CHECK_FAILED, BAD_INPUT = 0, 1, 2


class InputError(ValueError):
    pass


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def dumps(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def _emit(args, report: dict) -> None:
    text = dumps(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _seq(args) -> SequenceSpec:
    if not args.seq:
        raise InputError("--seq is required")
    try:
        return SequenceSpec.load(args.seq)
    except OSError as exc:
        raise InputError(f"cannot read {args.seq}: {exc.strerror}") from None


def _grid(args, radius: float) -> GridSpec:
    hw = args.half_width if args.half_width else radius
    return GridSpec(0j, hw, args.grid)


def _n(value: str):
    return None if value in (None, "limit") else int(value)


# ---------------------------------------------------------------------------
# commands


def cmd_render(args) -> int:
    seq = _seq(args)
    grid = _grid(args, escape_radius(seq.bounds) + 1.0)
    ja = filled_julia(seq, args.time, grid, args.depth, sampling=args.sampling)
    out = args.out or "render.pgm"
    write_pgm(ja, out)
    print(dumps({"out": out, "cells_in_K": ja.k_mask.cell_count, "j_cells": len(ja.j_cells)}), end="")
    return OK


def cmd_invariance(args) -> int:
    seq = _seq(args)
    grid = _grid(args, escape_radius(seq.bounds) + 1.0)
    n = args.n if args.n is not None else args.time + 3
    a = filled_julia(seq, args.time, grid, args.depth)
    b = filled_julia(seq, n, grid, args.depth)
    dev = invariance_check(seq, args.time, n, a, b, args.samples, np.random.default_rng(args.seed))
    ok = dev <= 3.0
    _emit(args, {"m": args.time, "n": n, "samples": args.samples, "max_cell_deviation": dev,
                 "tolerance_cells": 3.0, "pass": ok})
    return OK if ok else CHECK_FAILED


def _pl(args):
    seq = _seq(args)
    rho = args.rho if args.rho else 2 * escape_radius(seq.bounds)
    grid = _grid(args, 1.1 * rho)
    return plseq.disc_pl_from_polys(seq, rho, args.depth + 5, grid)


def cmd_plbuild(args) -> int:
    pl = _pl(args)
    rep = plseq.verify_pl(pl, args.seed)
    rep["spec"] = pl.source
    _emit(args, rep)
    return OK if rep["pass"] else CHECK_FAILED


def _restriction_ok(report: dict) -> bool:
    steps_ok = all(all(s["containments"].values()) and s["degrees"]["original"] == s["degrees"]["restricted"]
                   for s in report["steps"])
    return steps_ok and report["pl_report"]["pass"]


def cmd_restrict(args) -> int:
    pl = _pl(args)
    r, res = plseq.restrict(pl, args.B, args.seed)
    rep = plseq.restriction_report(pl, r, res, args.seed)
    ok = _restriction_ok(rep)
    rep["pass"] = ok
    _emit(args, rep)
    return OK if ok else CHECK_FAILED


def cmd_lemma51(args) -> int:
    pl = _pl(args)
    r, _ = plseq.restrict(pl, args.B, args.seed)
    frac = plseq.restriction_preserves_K(pl, r, args.time, args.depth)
    ok = frac <= 0.01
    _emit(args, {"m": args.time, "depth": args.depth, "B": args.B, "symmetric_difference_fraction": frac,
                 "tolerance": 0.01, "pass": ok})
    return OK if ok else CHECK_FAILED


def annulus_family(grid: GridSpec, n_values) -> list[RegionMask]:
    """D minus the closed disc D(1 - 2/n, 1/n), pointed at 0."""
    out = []
    for n in n_values:
        def pred(z, n=n):
            return (np.abs(z) < 1) & (np.abs(z - (1 - 2 / n)) > 1 / n)
        out.append(RegionMask.from_predicate(grid, pred, basepoint=0j))
    return out


def caratheodory_report(resolution: int, n_max: int = 64) -> dict:
    grid = GridSpec(0j, 1.1, resolution)
    disc = disc_mask(grid, 0j, 1.0, basepoint=0j)
    lim = geometry.caratheodory_limit(annulus_family(grid, range(4, n_max + 1)))
    if isinstance(lim, geometry.DegeneratePoint):
        sym = math.inf
    else:
        sym = float((lim.bits ^ disc.bits).sum() / disc.bits.sum())
    shrink = geometry.caratheodory_limit([disc_mask(grid, 0j, 1.0 / n, basepoint=0j) for n in range(1, 65)])
    bound = geometry.caratheodory_bound_disc(disc)
    agrid = GridSpec(0j, 2.2, resolution)
    ann = geometry.annulus_potential(RegionMask.from_predicate(agrid, lambda z: (np.abs(z) > 1) & (np.abs(z) < 2)))
    eq = geometry.equator(ann)
    checks = {
        "annulus_family_limit_is_disc": sym <= 0.01,
        "shrinking_discs_degenerate": isinstance(shrink, geometry.DegeneratePoint),
        "disc_bound": abs(bound - math.log(math.pi ** 2 / 8)) <= 0.01,
        "round_modulus": abs(ann.modulus / (math.log(2) / (2 * math.pi)) - 1) <= 0.02,
    }
    return {"annulus_family_symmetric_difference": sym, "caratheodory_bound": bound, "modulus": ann.modulus,
            "equator_length_cells": eq.length() / agrid.cell, "checks": checks, "pass": all(checks.values())}


def cmd_caratheodory(args) -> int:
    rep = caratheodory_report(args.grid, int(args.n) if args.n else 64)
    _emit(args, rep)
    return OK if rep["pass"] else CHECK_FAILED


def cmd_thm71(args) -> int:
    seq = _seq(args)
    apps.check_quadratic_hypothesis(seq)
    grid = _grid(args, escape_radius(seq.bounds) + 1.0)
    rep = apps.thm71_quasicircle(seq, grid, args.depth)
    ok = math.isfinite(rep["constant"])
    rep["pass"] = ok
    _emit(args, rep)
    return OK if ok else CHECK_FAILED


def thm72_checks(rep: dict, n: int | None = None) -> dict:
    """Piece counts are only claimed while a (z-3)^2 step is still ahead, i.e. j < n or the limit."""
    rows = rep["rows"]
    ratios = rep["violation_ratios"]
    counted = [r for r in rows if n is None or r["j"] < n]
    return {
        "component_counts": all(r["component_count"] == 2 ** (r["j"] + 1) for r in counted),
        "diameter_window": all(0.25 <= r["max_diameter"] / 2.0 ** (-r["j"] - 1) <= 4 for r in rows),
        "derivative_on_J": all(r["min_single_step_derivative_on_J"] > 1.9 for r in rows),
        "ratios_increasing": all(b > a for a, b in zip(ratios, ratios[1:])),
    }


def cmd_thm72(args) -> int:
    n = _n(args.n)
    jmax = args.j if args.j else (n if n is not None else 3)
    grid = _grid(args, 21.0)
    rep = apps.thm72_report(n, list(range(1, jmax + 1)), grid, args.depth)
    rep["containment"] = [apps.thm72_containment(j, grid, args.depth, n) for j in range(1, jmax + 1)]
    checks = thm72_checks(rep, n)
    checks["containment"] = all(c["pass"] for c in rep["containment"])
    rep["checks"] = checks
    rep["pass"] = all(checks.values())
    _emit(args, rep)
    return OK if rep["pass"] else CHECK_FAILED


def cmd_separation(args) -> int:
    rep = apps.z2plus2_separation(_grid(args, 7.0), args.depth)
    ok = rep["circle_escaped"] == rep["circle_points"] and rep["delta"] > 0 and rep["components"] == 2 \
        and rep["gap_ok"]
    rep["pass"] = ok
    _emit(args, rep)
    return OK if ok else CHECK_FAILED


def cmd_convergence(args) -> int:
    n_max = int(args.n) if args.n and args.n != "limit" else 4
    grid = _grid(args, 21.0)
    ns = list(range(1, n_max + 1))
    sph = apps.hausdorff_convergence(ns, args.time, grid, args.depth)
    cells = apps.hausdorff_convergence(ns, args.time, grid, args.depth, unit="cells")
    ok = all(b <= a for a, b in zip(cells, cells[1:])) and cells[-1] <= 5
    _emit(args, {"m": args.time, "n": ns, "hausdorff_spherical": sph, "hausdorff_cells": cells, "pass": ok})
    return OK if ok else CHECK_FAILED


COMMANDS = {
    "render": cmd_render,
    "invariance": cmd_invariance,
    "plbuild": cmd_plbuild,
    "restrict": cmd_restrict,
    "lemma51": cmd_lemma51,
    "caratheodory": cmd_caratheodory,
    "thm71": cmd_thm71,
    "thm72": cmd_thm72,
    "separation": cmd_separation,
    "convergence": cmd_convergence,
}

DEFAULT_DEPTH = {"render": 40, "invariance": 30, "thm71": 40, "thm72": 40, "convergence": 40}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nonautojulia", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--seq", help="sequence spec JSON")
        p.add_argument("--time", type=int, default=0, help="time index m")
        p.add_argument("--depth", type=int, default=DEFAULT_DEPTH.get(name, 30))
        p.add_argument("--grid", type=int, default=512, help="cells per side (power of two, 128..4096)")
        p.add_argument("--half-width", type=float, default=None, help="chart half-width (default: automatic)")
        p.add_argument("--out", help="output path (default: stdout for JSON)")
        p.add_argument("--B", type=float, default=4.0, help="restriction parameter")
        p.add_argument("--rho", type=float, default=None, help="radius of V_m")
        p.add_argument("--n", default=None, help="counterexample truncation, target time, or 'limit'")
        p.add_argument("--j", type=int, default=None)
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--samples", type=int, default=200)
        p.add_argument("--sampling", choices=("cell", "center"), default="cell")
    return ap


def _validate(args) -> None:
    r = args.grid
    if r < 128 or r > 4096 or r & (r - 1):
        raise InputError(f"--grid must be a power of two in [128, 4096], got {r}")
    if not 1 <= args.depth <= 500:
        raise InputError(f"--depth must be in [1, 500], got {args.depth}")
    if args.time < 0:
        raise InputError("--time must be >= 0")
    if args.command == "invariance" and args.n is not None:
        args.n = int(args.n)
    if args.command == "thm72" and args.n not in (None, "limit"):
        int(args.n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _validate(args)
        return COMMANDS[args.command](args)
    except ValueError as exc:
        # spec, hypothesis, grid and resolution faults all derive from ValueError
        print(f"error: {exc}", file=sys.stderr)
        return BAD_INPUT

if __name__ == "__main__":
    sys.exit(main())
