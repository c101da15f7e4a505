"""End-to-end pipelines: the quadratic quasicircle family and the (z-3)^2 counterexample."""
from __future__ import annotations

import math

import numpy as np
from skimage import measure

from .core import KIND_EXPLICIT, Polynomial, SequenceSpec, constant_seq, counterexample_seq
from .dynamics import (GridSpec, RegionMask, component_gap, components, escape_time, filled_julia,
                       hausdorff_dist)
from .geometry import hausdorff_cells


class OutsideHypothesis(ValueError):
    pass


class InsufficientResolution(ValueError):
    pass


def thm72_time(j: int) -> int:
    if j < 1:
        raise ValueError("j must be >= 1")
    return (j + 1) * (j + 2) // 2 - 1


def _adjacent_gap(comps, grid: GridSpec) -> float:
    if len(comps) < 2:
        return math.inf
    order = sorted(comps, key=lambda c: math.atan2(c.centroid.imag, c.centroid.real))
    pairs = list(zip(order, order[1:] + order[:1])) if len(order) > 2 else [(order[0], order[1])]
    return min(component_gap(a, b, grid) for a, b in pairs)


def thm72_geometry(n: int | None, j: int, grid: GridSpec, depth: int, levels: int = 8) -> dict:
    """Component statistics of J at time (j+1)(j+2)/2 - 1 for the counterexample sequence.

    n = None selects the limit sequence.
    """
    if n is not None and j > n:
        raise ValueError(f"j = {j} exceeds n = {n}")
    seq = counterexample_seq(n)
    t = thm72_time(j)
    ja = filled_julia(seq, t, grid, depth, levels=levels)
    comps = components(ja.k_mask)
    if not comps:
        raise InsufficientResolution(f"empty mask at time {t}; double the resolution or lower the depth")
    gap = _adjacent_gap(comps, grid)
    if len(comps) > 1 and gap <= 2 * grid.cell:
        raise InsufficientResolution(f"components at time {t} are within 2 cells of each other; "
                                     "double the resolution")
    if grid.resolution >= 256:
        # pieces that merge on the half-resolution grid are not yet separated robustly
        coarse = GridSpec(grid.center, grid.half_width, grid.resolution // 2)
        n_coarse = len(components(filled_julia(seq, t, coarse, depth, levels=levels).k_mask))
        if n_coarse != len(comps):
            raise InsufficientResolution(f"component count at time {t} changes from {n_coarse} to {len(comps)} "
                                         f"between {coarse.resolution}^2 and {grid.resolution}^2; "
                                         "double the resolution")
    p = seq.term(t + 1)
    deriv = np.abs(p.deriv(ja.j_points()))
    return {
        "j": j,
        "time_index": t,
        "component_count": len(comps),
        "max_diameter": max(c.diameter for c in comps),
        "min_diameter": min(c.diameter for c in comps),
        "min_single_step_derivative_on_J": float(deriv.min()) if deriv.size else math.nan,
        "adjacent_gap": gap,
    }


def thm72_containment(j: int, grid: GridSpec, depth: int, n: int | None = None, levels: int = 8) -> dict:
    """J avoids D(3, 1) just before time t_j and D(0, 1) at t_j and t_j + 1 (2-cell margin)."""
    seq = counterexample_seq(n)
    t = thm72_time(j)
    margin = 2 * grid.cell
    checks = []
    for time, center in ((t - 1, 3.0), (t, 0.0), (t + 1, 0.0)):
        ja = filled_julia(seq, time, grid, depth, levels=levels)
        pts = ja.j_points()
        inside = int((np.abs(pts - center) < 1 - margin).sum())
        checks.append({"time": time, "disc_center": center, "cells_inside": inside, "pass": inside == 0})
    return {"j": j, "checks": checks, "pass": all(c["pass"] for c in checks)}


Z2_PLUS_2 = Polynomial([2, 0, 1])


def z2plus2_separation(grid: GridSpec, depth: int, levels: int = 8, circle_points: int = 512,
                       circle_depth: int = 50) -> dict:
    seq = constant_seq(Z2_PLUS_2)
    ja = filled_julia(seq, 0, grid, depth, levels=levels)
    pts = ja.k_mask.points()
    if pts.size == 0:
        raise InsufficientResolution("empty mask")
    rmax = float(np.abs(pts).max())
    if rmax >= 2:
        raise ValueError(f"mask reaches |z| = {rmax:.3f} >= 2; increase the depth")
    R = max(101, math.floor(rmax * 100) + 1) / 100.0
    delta = 2 * math.sqrt(2 - R)
    pre = RegionMask.from_predicate(grid, lambda z: np.abs(Z2_PLUS_2(z)) < R)
    comps = components(pre)
    gap = component_gap(comps[0], comps[1], grid) if len(comps) == 2 else math.nan
    ring = 2 * np.exp(2j * math.pi * np.arange(circle_points) / circle_points)
    escaped = sum(escape_time(seq, 0, z, circle_depth).escaped for z in ring)
    return {
        "R": R,
        "delta": delta,
        "components": len(comps),
        "gap": gap,
        "gap_ok": bool(len(comps) == 2 and gap >= delta - 4 * grid.cell),
        "circle_escaped": int(escaped),
        "circle_points": circle_points,
    }


def equiconjugacy_violation(j_list, grid: GridSpec, depth: int, levels: int = 8,
                            separation: dict | None = None, rows: list[dict] | None = None) -> list[float]:
    """delta / adjacent gap at each t_j for the limit sequence."""
    j_list = list(j_list)
    if any(b <= a for a, b in zip(j_list, j_list[1:])):
        raise ValueError("j_list must be increasing")
    sep = separation or z2plus2_separation(grid, depth, levels)
    by_j = {r["j"]: r for r in rows or []}
    out = []
    for j in j_list:
        row = by_j.get(j) or thm72_geometry(None, j, grid, depth, levels)
        out.append(sep["delta"] / row["adjacent_gap"])
    return out


def thm72_report(n: int | None, j_list, grid: GridSpec, depth: int, levels: int = 8) -> dict:
    rows = [thm72_geometry(n, j, grid, depth, levels) for j in j_list]
    sep = z2plus2_separation(grid, depth, levels)
    lim_rows = rows if n is None else None
    ratios = equiconjugacy_violation(j_list, grid, depth, levels, sep, lim_rows)
    return {"n": n if n is not None else "limit", "rows": rows,
            "z2plus2": {"R": sep["R"], "delta": sep["delta"]}, "violation_ratios": ratios}


# ---------------------------------------------------------------------------
# Quasicircles


def check_quadratic_hypothesis(seq: SequenceSpec) -> list[complex]:
    """Constants c of a sequence of z^2 + c with sup |c| < 1/4, else OutsideHypothesis."""
    msg = "outside Theorem 7.1 hypothesis"
    if seq.kind != KIND_EXPLICIT:
        raise OutsideHypothesis(f"{msg}: sequence is not of the form z^2 + c_m")
    cs = []
    for p in list(seq.prefix) + list(seq.tail):
        a = p.coeffs
        if p.degree != 2 or abs(a[2] - 1) > 1e-12 or abs(a[1]) > 1e-12:
            raise OutsideHypothesis(f"{msg}: {p} is not a monic centered quadratic")
        if abs(a[0]) >= 0.25:
            raise OutsideHypothesis(f"{msg}: |c| = {abs(a[0]):g} >= 1/4")
        cs.append(a[0])
    return cs


def boundary_curve(mask: RegionMask) -> np.ndarray:
    """Longest closed marching-squares contour of the mask, as ordered complex points."""
    padded = np.pad(mask.bits.astype(float), 1)
    cs = [c for c in measure.find_contours(padded, 0.5) if np.allclose(c[0], c[-1])]
    if not cs:
        raise InsufficientResolution("boundary does not close at this resolution")
    c = max(cs, key=len)[:-1] - 1.0
    return mask.grid.cell_center(c[:, 0], c[:, 1])


def resample_closed(points: np.ndarray, n: int) -> np.ndarray:
    p = np.append(points, points[:1])
    s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(p)))])
    t = np.linspace(0.0, s[-1], n, endpoint=False)
    return np.interp(t, s, p.real) + 1j * np.interp(t, s, p.imag)


def turning_constant(points: np.ndarray, min_sep: int = 8) -> float:
    """max over pairs of diam(smaller arc) / |z1 - z2| for a closed polygon's vertices."""
    z = np.asarray(points, dtype=complex)
    n = len(z)
    dist = np.abs(z[:, None] - z[None, :])
    half = n // 2
    best = 0.0
    for i in range(n):
        idx = (i + np.arange(half + 1)) % n
        sub = dist[np.ix_(idx, idx)]
        diam = np.maximum.accumulate(np.tril(sub, -1).max(axis=1))
        chord = sub[:, 0]
        L = np.arange(min_sep, half + 1)
        best = max(best, float((diam[L] / chord[L]).max()))
    return best


def thm71_quasicircle(c_seq: SequenceSpec, grid: GridSpec, depth: int, n_points: int = 512) -> dict:
    check_quadratic_hypothesis(c_seq)
    ja = filled_julia(c_seq, 0, grid, depth)
    curve = resample_closed(boundary_curve(ja.k_mask), n_points)
    return {"constant": turning_constant(curve), "resolution": grid.resolution, "depth": depth,
            "n_points": n_points}


# ---------------------------------------------------------------------------
# Hausdorff convergence


def hausdorff_convergence(n_list, m: int, grid: GridSpec, depth: int, unit: str = "spherical",
                          levels: int = 8) -> list[float]:
    """d_H(J_m of the truncated counterexample, J_m of the limit) for each n.

    unit = "cells" measures on the raster (Euclidean, in cell widths) instead of the sphere.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    lim = filled_julia(counterexample_seq(None), m, grid, depth, levels=levels)
    out = []
    for n in n_list:
        ja = filled_julia(counterexample_seq(n), m, grid, depth, levels=levels)
        if unit == "cells":
            a = np.zeros(grid.shape, dtype=bool)
            b = np.zeros(grid.shape, dtype=bool)
            a[tuple(ja.j_cells.T)] = True
            b[tuple(lim.j_cells.T)] = True
            out.append(hausdorff_cells(a, b))
        else:
            out.append(hausdorff_dist(ja.j_points(), lim.j_points()))
    return out


__all__ = ["counterexample_seq", "thm72_time", "thm72_geometry", "thm72_containment", "z2plus2_separation",
           "equiconjugacy_violation", "thm72_report", "thm71_quasicircle", "turning_constant",
           "hausdorff_convergence", "OutsideHypothesis", "InsufficientResolution"]
