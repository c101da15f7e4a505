"""Polynomial-like mapping sequences on a raster: construction, checks, restriction, filled Julia sets."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import Polynomial, SequenceSpec, critical_points
from .dynamics import (EIGHT, GridSpec, JuliaApprox, RegionMask, boundary_cells, cell_cover,
                       disc_mask, disc_sieve)
from .geometry import (AnnulusData, Curve, DomainError, annulus_potential, caratheodory_bound_disc,
                       equator, hyperbolic_dist_bounds, quasihyperbolic_field, _level_curve)


class PLError(ValueError):
    pass


@dataclass
class PLSeq:
    """Triples f_{m+1}: U_m -> V_{m+1} for m = 0..horizon, plus V_0."""
    U: list[RegionMask]
    V: list[RegionMask]            # V_0 .. V_{horizon+1}
    maps: list[Polynomial]         # maps[m] = f_{m+1}
    degree_bound: int
    constant: float
    source: dict | None = None

    def __post_init__(self):
        if len(self.maps) != len(self.U) or len(self.V) != len(self.U) + 1:
            raise ValueError("need len(V) = len(U) + 1 = len(maps) + 1")
        if self.constant < 1:
            raise ValueError("constant K must be >= 1")

    @property
    def horizon(self) -> int:
        return len(self.U) - 1

    @property
    def grid(self) -> GridSpec:
        return self.U[0].grid

    def triple(self, m: int) -> tuple[RegionMask, RegionMask, Polynomial]:
        return self.U[m], self.V[m + 1], self.maps[m]


def _key(mask: RegionMask) -> str:
    h = hashlib.sha1(np.packbits(mask.bits).tobytes()).hexdigest()
    return f"{h}:{mask.basepoint!r}:{mask.contains_infinity}"


def compactly_inside(inner: np.ndarray, outer: np.ndarray, cells: int = 2) -> bool:
    """inner dilated by ``cells`` (8-connected) stays inside outer and off the chart edge."""
    grown = ndimage.binary_dilation(inner, EIGHT, iterations=cells)
    edge = np.zeros_like(inner)
    edge[:cells, :] = edge[-cells:, :] = edge[:, :cells] = edge[:, -cells:] = True
    return bool(not (grown & ~outer).any() and not (inner & edge).any())


def base_point(p: Polynomial) -> complex:
    """Smallest-modulus critical point."""
    return complex(critical_points(p)[0])


def disc_pl_from_polys(seq: SequenceSpec, rho: float, horizon: int, grid: GridSpec | None = None,
                       K: float | None = None) -> PLSeq:
    """V_m = D(0, rho), U_m = P_{m+1}^{-1}(V_{m+1}) for m = 0..horizon.

    K defaults to the measured constant (see measured_constant), at least 1.
    """
    if rho <= 0 or horizon < 0:
        raise ValueError("need rho > 0 and horizon >= 0")
    grid = grid or GridSpec(0j, 1.1 * rho, 512)
    maps = seq.terms(1, horizon + 2)
    z = grid.centers()
    U, V = [], []
    cache: dict[tuple, np.ndarray] = {}
    for m in range(horizon + 2):
        u = base_point(maps[m]) if m <= horizon else base_point(seq.term(m + 1))
        V.append(disc_mask(grid, 0j, rho, basepoint=u))
    vbits = V[0].bits
    for m, p in enumerate(maps[: horizon + 1]):
        key = tuple(p.coeffs)
        if key not in cache:
            cache[key] = np.abs(p(z)) < rho
        bits = cache[key]
        u = V[m].basepoint
        idx = grid.index_of(u)
        if idx is None or not bits[idx]:
            raise PLError(f"base point {u} is not in U_{m}")
        if not compactly_inside(bits, vbits):
            raise PLError(f"U_{m} is not compactly inside V_{m} (rho too small)")
        U.append(RegionMask(grid, bits, False, u))
    pl = PLSeq(U, V, maps[: horizon + 1], seq.bounds.d, 1.0,
               {"from_sequence": seq.to_json(), "rho": rho, "horizon": horizon})
    pl.constant = K if K is not None else max(1.0, measured_constant(pl))
    return pl


# ---------------------------------------------------------------------------
# PL1-PL3


def _targets(V: RegionMask, count: int, rng: np.random.Generator, margin: int = 8) -> np.ndarray:
    inner = ndimage.binary_erosion(V.bits, EIGHT, iterations=margin, border_value=0)
    cells = np.argwhere(inner if inner.any() else V.bits)
    pick = cells[rng.choice(len(cells), size=min(count, len(cells)), replace=False)]
    return V.grid.cell_center(pick[:, 0], pick[:, 1])


def preimage_counts(f: Polynomial, U: RegionMask, targets) -> list[int]:
    out = []
    for t in np.atleast_1d(targets):
        c = np.array(f.coeffs, dtype=complex)
        c[0] -= t
        roots = np.roots(c[::-1])
        n = 0
        for z in roots:
            idx = U.grid.index_of(z)
            n += idx is not None and bool(U.bits[idx])
        out.append(n)
    return out


def _pl_stats(pl: PLSeq, rng: np.random.Generator, targets: int = 50) -> dict:
    cache: dict[str, float] = {}

    def bound(mask):
        k = _key(mask)
        if k not in cache:
            cache[k] = caratheodory_bound_disc(mask)
        return cache[k]

    rows: dict[tuple, tuple] = {}
    pl1, pl2, pl3 = [], [], []
    for m in range(pl.horizon + 1):
        U, Vn, f = pl.triple(m)
        key = (_key(U), _key(pl.V[m]), _key(Vn), tuple(f.coeffs))
        if key not in rows:
            rows[key] = _triple_stats(U, pl.V[m], Vn, f, bound, rng, targets)
        r1, r2, r3 = rows[key]
        pl1.append({"m": m, **r1})
        pl2.append({"m": m, **r2})
        pl3.append({"m": m, **r3})
    last = pl.V[-1]
    pl1.append({"m": pl.horizon + 1, "V": bound(last)})
    return {"PL1": pl1, "PL2": pl2, "PL3": pl3}


def _triple_stats(U, V, Vn, f, bound, rng, targets):
    grid = U.grid
    r1 = {"U": bound(U), "V": bound(V), "compact": compactly_inside(U.bits, V.bits)}
    counts = preimage_counts(f, U, _targets(Vn, targets, rng))
    r2 = {"counts": sorted(set(counts)), "critical_derivative": abs(f.deriv(U.basepoint))}
    worst = (0.0, 0.0)
    for c in critical_points(f):
        ic = grid.index_of(c)
        if ic is None or not U.bits[ic]:
            continue
        cv = complex(f(c))
        if grid.index_of(cv) == grid.index_of(Vn.basepoint):
            b = (0.0, 0.0)
        else:
            try:
                b = hyperbolic_dist_bounds(Vn, Vn.basepoint, cv)
            except DomainError:
                b = (math.inf, math.inf)
        if b[1] > worst[1]:
            worst = (float(b[0]), float(b[1]))
    return r1, r2, {"bracket": list(worst)}


def measured_constant(pl: PLSeq, seed: int = 42) -> float:
    s = _pl_stats(pl, np.random.default_rng(seed), targets=8)
    vals = [r.get("U", 0.0) for r in s["PL1"]] + [r["V"] for r in s["PL1"]]
    vals += [r["bracket"][1] for r in s["PL3"]]
    return float(max(vals))


def verify_pl(pl: PLSeq, seed: int = 42) -> dict:
    K = pl.constant
    s = _pl_stats(pl, np.random.default_rng(seed))
    pl1_ok = all(r.get("U", 0.0) <= K and r["V"] <= K and r.get("compact", True) for r in s["PL1"])
    counts = {tuple(r["counts"]) for r in s["PL2"]}
    pl2_ok = all(len(r["counts"]) == 1 and 2 <= r["counts"][0] <= pl.degree_bound
                 and r["critical_derivative"] <= 1e-9 for r in s["PL2"])
    pl3_ok = all(r["bracket"][1] <= K for r in s["PL3"])
    return {
        "K": K,
        "PL1": {"pass": pl1_ok,
                "max_U_bound": max(r.get("U", 0.0) for r in s["PL1"]),
                "max_V_bound": max(r["V"] for r in s["PL1"]),
                "compact": all(r.get("compact", True) for r in s["PL1"])},
        "PL2": {"pass": pl2_ok, "degrees": sorted({c for t in counts for c in t}),
                "max_critical_derivative": max(r["critical_derivative"] for r in s["PL2"])},
        "PL3": {"pass": pl3_ok, "max_bracket": max((r["bracket"] for r in s["PL3"]), key=lambda b: b[1])},
        "pass": pl1_ok and pl2_ok and pl3_ok,
    }


# ---------------------------------------------------------------------------
# Restriction


@dataclass
class RestrictionStep:
    T: AnnulusData
    Gamma: Curve
    V_prime: RegionMask
    S: RegionMask | None = None
    gamma: Curve | None = None
    U_prime: RegionMask | None = None
    L: AnnulusData | None = None


@dataclass
class RestrictionResult:
    B: float
    steps: list[RestrictionStep] = field(default_factory=list)
    report: list[dict] = field(default_factory=list)


def _t_annulus(V: RegionMask, B: float, K: float) -> RegionMask:
    q = quasihyperbolic_field(V, V.basepoint)
    mid = 1.25 * q                     # midpoint of the bracket (Q/2, 2Q)
    bits = V.bits & (mid > B * K) & (mid < 2 * B * K)
    return RegionMask(V.grid, bits, False, None)


def _enclosed(curve: Curve, within: RegionMask, basepoint) -> RegionMask:
    bits = curve.enclosed(within.grid) & within.bits
    return RegionMask(within.grid, bits, False, basepoint)


def _pullback_curve(f: Polynomial, U: RegionMask, T: AnnulusData) -> Curve:
    grid = U.grid
    img = f(grid.centers())
    row, col = grid.fractional_index(img)
    ok = np.isfinite(row) & np.isfinite(col)
    row = np.where(ok, row, -1e9)
    col = np.where(ok, col, -1e9)
    pulled = ndimage.map_coordinates(T.potential, [row.ravel(), col.ravel()], order=1, mode="constant",
                                     cval=1.0).reshape(grid.shape)
    u = U.basepoint
    cands = [c for c in _level_curve(pulled, grid, 0.5) if c.closed and c.winding_number(u) != 0]
    if len(cands) != 1:
        raise PLError(f"pullback of the equator has {len(cands)} closed piece(s) around the base point; "
                      "try a larger B or a finer grid")
    return cands[0]


def _separates_point(curve: Curve, u: complex, grid: GridSpec) -> bool:
    far = grid.center + 10.0 * grid.half_width
    return curve.closed and abs(curve.winding_number(u)) == 1 and curve.winding_number(far) == 0


def restrict(pl: PLSeq, B: float = 4.0, seed: int = 42) -> tuple[PLSeq, RestrictionResult]:
    if B <= 1:
        raise ValueError("B must be > 1")
    K = pl.constant
    res = RestrictionResult(B)
    cache: dict[str, tuple] = {}
    for V in pl.V:
        k = _key(V)
        if k not in cache:
            T = _t_annulus(V, B, K)
            if not T.bits.any():
                raise PLError("annulus T is empty; try a smaller B or a finer grid")
            try:
                ann = annulus_potential(T)
                gam = equator(ann)
            except DomainError as e:
                raise PLError(f"{e}; try a larger B or a finer grid") from e
            cache[k] = (ann, gam, _enclosed(gam, V, V.basepoint))
        ann, gam, vp = cache[k]
        res.steps.append(RestrictionStep(ann, gam, vp))
    rng = np.random.default_rng(seed)
    U2 = []
    for m in range(pl.horizon + 1):
        U, Vn, f = pl.triple(m)
        nxt = res.steps[m + 1]
        st = res.steps[m]
        k = (_key(U), _key(Vn), tuple(f.coeffs))
        if k not in cache:
            img = f(U.grid.centers())
            idx = U.grid.fractional_index(img)
            r = np.rint(idx[0])
            c = np.rint(idx[1])
            inside = np.isfinite(r) & np.isfinite(c) & (r >= 0) & (r < U.grid.resolution) \
                & (c >= 0) & (c < U.grid.resolution)
            s_bits = np.zeros(U.grid.shape, dtype=bool)
            s_bits[inside] = nxt.T.mask.bits[r[inside].astype(int), c[inside].astype(int)]
            S = RegionMask(U.grid, s_bits & U.bits, False, None)
            g = _pullback_curve(f, U, nxt.T)
            up = _enclosed(g, U, U.basepoint)
            if not _separates_point(g, U.basepoint, U.grid):
                raise PLError(f"gamma_{m} does not separate; try a larger B or a finer grid")
            L = RegionMask(U.grid, st.V_prime.bits & ~up.bits, False, None)
            try:
                Ld = annulus_potential(L)
            except DomainError as e:
                raise PLError(f"L_{m}: {e}") from e
            cache[k] = (S, g, up, Ld)
        S, g, up, Ld = cache[k]
        st.S, st.gamma, st.U_prime, st.L = S, g, up, Ld
        U2.append(up)
        targets = _targets(nxt.V_prime, 50, rng)
        before = preimage_counts(f, U, targets)
        after = preimage_counts(f, up, targets)
        res.report.append({
            "m": m,
            "B": B,
            "modulus_of_L": Ld.modulus,
            "degrees": {"original": sorted(set(before)), "restricted": sorted(set(after))},
            "containments": {
                "U_prime_in_U": bool(not (up.bits & ~U.bits).any()),
                "V_prime_in_V": bool(not (st.V_prime.bits & ~pl.V[m].bits).any()),
                "closure_U_prime_in_V_prime": compactly_inside(up.bits, st.V_prime.bits, 1),
                "Gamma_separates": True,
                "gamma_separates": True,
            },
        })
    V2 = [s.V_prime for s in res.steps]
    out = PLSeq(U2, V2, list(pl.maps), pl.degree_bound, 2.0 * K, pl.source)
    return out, res


def restriction_report(pl: PLSeq, restricted: PLSeq, res: RestrictionResult, seed: int = 42) -> dict:
    rep = verify_pl(restricted, seed)
    return {"B": res.B, "K": pl.constant, "steps": res.report, "pl_report": rep}


# ---------------------------------------------------------------------------
# Filled Julia sets


def pl_filled_julia(pl: PLSeq, m: int, depth: int, sampling: str = "cell", levels: int = 8) -> JuliaApprox:
    """Cells that stay in U_n for n = m..m+depth.

    ``sampling="cell"`` drops a cell only when every piece of it is certified to leave some U_n;
    ``"center"`` follows cell centers.
    """
    if depth < 0 or m < 0:
        raise ValueError("need m, depth >= 0")
    if m + depth > pl.horizon:
        raise PLError(f"horizon {pl.horizon} exhausted before time {m + depth}")
    grid = pl.grid
    maps = pl.maps[m: m + depth]
    masks = pl.U[m: m + depth + 1]
    z = grid.centers()
    steps = _center_steps(maps, masks, z)
    if sampling == "center" or depth == 0:
        bits = steps < 0
    elif sampling == "cell":
        dist = {}
        for U in masks:
            k = _key(U)
            if k not in dist:
                dist[k] = ndimage.distance_transform_edt(~U.bits) if U.bits.any() \
                    else np.full(grid.shape, np.inf)
        fields = [dist[_key(U)] for U in masks]
        h = grid.cell

        def certify(k, c, r):
            lo = _dist_lower(grid, fields[k], c)
            return lo - math.sqrt(2.0) * h / 2 > r

        bits = cell_cover(z, h, lambda c, r: disc_sieve(maps, c, r, certify, grid.half_width), levels)
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    mask = RegionMask(grid, bits)
    return JuliaApprox(m, depth, mask, np.argwhere(boundary_cells(bits)), steps)


def _dist_lower(grid: GridSpec, edt: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Lower bound on the distance from c to the nearest masked cell center."""
    n = grid.resolution
    h = grid.cell
    row, col = grid.fractional_index(c)
    ok = np.isfinite(row) & np.isfinite(col)
    ri = np.clip(np.rint(np.where(ok, row, 0)), 0, n - 1).astype(int)
    ci = np.clip(np.rint(np.where(ok, col, 0)), 0, n - 1).astype(int)
    snap = np.abs(c - grid.cell_center(ri, ci))
    out = edt[ri, ci] * h - np.where(ok, snap, 0.0)
    out = np.where(ok, out, np.inf)
    return out


def _center_steps(maps, masks, z) -> np.ndarray:
    grid = masks[0].grid
    z = z.ravel().copy()
    steps = np.full(z.shape, -1, dtype=np.int32)
    alive = np.ones(z.shape, dtype=bool)

    def outside(w, U):
        idx = grid.fractional_index(w)
        r, c = np.rint(idx[0]), np.rint(idx[1])
        ok = np.isfinite(r) & np.isfinite(c) & (r >= 0) & (r < grid.resolution) & (c >= 0) \
            & (c < grid.resolution)
        hit = np.zeros(w.shape, dtype=bool)
        hit[ok] = U.bits[r[ok].astype(int), c[ok].astype(int)]
        return ~hit

    out = outside(z, masks[0])
    steps[out] = 0
    alive &= ~out
    with np.errstate(over="ignore", invalid="ignore"):
        for k, (p, U) in enumerate(zip(maps, masks[1:]), start=1):
            idx = np.nonzero(alive)[0]
            if idx.size == 0:
                break
            w = p(z[idx])
            z[idx] = w
            out = outside(w, U)
            steps[idx[out]] = k
            alive[idx[out]] = False
    return steps.reshape(grid.shape)


def restriction_preserves_K(pl: PLSeq, restricted: PLSeq, m: int, depth: int) -> float:
    """|K_m symmetric-difference K'_m| / |K_m| in cells."""
    a = pl_filled_julia(pl, m, depth).k_mask.bits
    b = pl_filled_julia(restricted, m, depth).k_mask.bits
    if not a.any():
        return 0.0 if not b.any() else math.inf
    return float((a ^ b).sum() / a.sum())


__all__ = ["PLError", "PLSeq", "RestrictionResult", "RestrictionStep", "disc_pl_from_polys", "verify_pl",
           "restrict", "restriction_report", "pl_filled_julia", "restriction_preserves_K",
           "preimage_counts", "measured_constant", "compactly_inside", "base_point"]
