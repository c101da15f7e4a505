"""Pointed domains on a raster: hyperbolic brackets, annuli, Carathéodory limits and bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import pyamg
from scipy import ndimage, sparse
from scipy.sparse.csgraph import dijkstra
from skimage import measure

from .core import Polynomial, is_inf, spherical_derivative, spherical_dist, spherical_dist_array
from .dynamics import EIGHT, FOUR, GridSpec, RegionMask, boundary_cells, spherical_diameter


class DomainError(ValueError):
    pass


class NotDoublyConnected(DomainError):
    def __init__(self, count: int):
        super().__init__(f"mask is not doubly connected: complement has {count} component(s)")
        self.count = count


class NotConvergent(DomainError):
    pass


class DistBounds(NamedTuple):
    lower: float
    upper: float

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


@dataclass
class Curve:
    points: np.ndarray            # complex, ordered; closed curves do not repeat the first point
    closed: bool = True
    basepoint_index: int = 0

    @property
    def basepoint(self) -> complex:
        return complex(self.points[self.basepoint_index])

    def length(self) -> float:
        p = np.append(self.points, self.points[:1]) if self.closed else self.points
        return float(np.abs(np.diff(p)).sum())

    def winding_number(self, z: complex) -> int:
        p = np.append(self.points, self.points[:1]) - z
        ang = np.angle(p[1:] / p[:-1])
        return int(round(ang.sum() / (2 * math.pi)))

    def enclosed(self, grid: GridSpec) -> np.ndarray:
        """Cells whose centers the curve winds around."""
        verts = np.column_stack(grid.fractional_index(self.points))
        rows, cols = np.indices(grid.shape)
        pts = np.column_stack([rows.ravel(), cols.ravel()])
        return measure.points_in_poly(pts, verts).reshape(grid.shape)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# closed={str(self.closed).lower()} basepoint_index={self.basepoint_index}\n")
            fh.write("re,im\n")
            for z in self.points:
                fh.write(f"{z.real!r},{z.imag!r}\n")


@dataclass
class AnnulusData:
    mask: RegionMask
    modulus: float
    potential: np.ndarray = field(repr=False)   # 0 on the inner complement, 1 on the outer
    inner: np.ndarray = field(repr=False)
    outer: np.ndarray = field(repr=False)
    equator: Curve | None = None


@dataclass
class DegeneratePoint:
    point: complex


# ---------------------------------------------------------------------------
# Distance to the boundary and the quasihyperbolic graph


def _padded(mask: RegionMask) -> np.ndarray:
    return np.pad(mask.bits, 1, constant_values=mask.contains_infinity)


def boundary_distance(mask: RegionMask) -> np.ndarray:
    """Euclidean distance from each masked cell center to the complement (0 elsewhere)."""
    edt = ndimage.distance_transform_edt(_padded(mask))[1:-1, 1:-1]
    return np.where(mask.bits, (edt - 0.5) * mask.grid.cell, 0.0)


_STEPS = ((0, 1), (1, 0), (1, 1), (1, -1))


def _qh_graph(mask: RegionMask, delta: np.ndarray):
    bits = mask.bits
    n = bits.shape[0]
    ids = np.full(bits.shape, -1, dtype=np.int64)
    ids[bits] = np.arange(int(bits.sum()))
    inv = np.where(bits, 1.0 / np.where(bits, delta, 1.0), 0.0)
    rows, cols, wts = [], [], []
    h = mask.grid.cell
    for dr, dc in _STEPS:
        r0 = slice(0, n - dr)
        r1 = slice(dr, n)
        c0 = slice(max(0, -dc), n - max(0, dc))
        c1 = slice(max(0, dc), n + min(0, dc))
        both = bits[r0, c0] & bits[r1, c1]
        a, b = ids[r0, c0][both], ids[r1, c1][both]
        step = h * math.hypot(dr, dc)
        rows.append(a)
        cols.append(b)
        wts.append(step * 0.5 * (inv[r0, c0][both] + inv[r1, c1][both]))
    m = int(bits.sum())
    g = sparse.csr_matrix((np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
    return g, ids


def _snap(mask: RegionMask, z) -> tuple[int, int]:
    idx = mask.grid.index_of(z)
    if idx is None or not mask.bits[idx]:
        raise DomainError(f"point {z} is not in the domain")
    return idx


def quasihyperbolic_field(mask: RegionMask, z) -> np.ndarray:
    """Quasihyperbolic distance (density 1/delta) from z to every masked cell center; inf outside."""
    delta = boundary_distance(mask)
    src = _snap(mask, z)
    g, ids = _qh_graph(mask, delta)
    d = dijkstra(g, directed=False, indices=int(ids[src]))
    out = np.full(mask.grid.shape, np.inf)
    out[mask.bits] = d
    offset = abs(complex(z) - mask.grid.cell_center(*src)) / delta[src]
    return out + offset


def hyperbolic_dist_bounds(domain: RegionMask, z, w) -> DistBounds:
    """Bracket (Q/2, 2Q) on the hyperbolic distance, Q the quasihyperbolic graph distance.

    Valid for simply connected domains (curvature -1 normalization).
    """
    z, w = complex(z), complex(w)
    edge = boundary_cells(domain.bits)
    for p in (z, w):
        if edge[_snap(domain, p)]:
            raise DomainError(f"point {p} lies on a boundary cell")
    if z == w:
        return DistBounds(0.0, 0.0)
    delta = boundary_distance(domain)
    q = quasihyperbolic_field(domain, z)
    iw = _snap(domain, w)
    Q = float(q[iw] + abs(w - domain.grid.cell_center(*iw)) / delta[iw])
    return DistBounds(Q / 2.0, 2.0 * Q)


# ---------------------------------------------------------------------------
# Annuli


def complement_parts(mask: RegionMask) -> tuple[np.ndarray, np.ndarray, int]:
    """Split the complement into the part reaching the chart edge and the rest.

    Returns (inner, outer, number of 8-connected complement components).
    """
    comp = ~_padded(mask)
    if mask.contains_infinity:
        comp[0, :] = comp[-1, :] = comp[:, 0] = comp[:, -1] = True
    labels, n = ndimage.label(comp, EIGHT)
    edge_label = labels[0, 0]
    labels = labels[1:-1, 1:-1]
    outer = labels == edge_label
    inner = (labels > 0) & ~outer
    return inner, outer, n


def annulus_potential(mask: RegionMask, tol: float = 1e-8) -> AnnulusData:
    """Discrete harmonic measure of the outer boundary (5-point stencil) and the modulus 1/energy.

    With this normalization the round annulus A(0, r, R) has modulus log(R/r) / (2 pi).
    """
    inner, outer, n = complement_parts(mask)
    if n != 2 or not inner.any():
        raise NotDoublyConnected(n)
    bits = mask.bits
    m = int(bits.sum())
    ids = np.full(bits.shape, -1, dtype=np.int64)
    ids[bits] = np.arange(m)
    fixed = np.where(outer, 1.0, 0.0)
    size = bits.shape[0]
    diag = np.zeros(m)
    rhs = np.zeros(m)
    rows, cols = [], []
    for dr, dc in ((0, 1), (1, 0)):
        a_sl = (slice(0, size - dr), slice(0, size - dc))
        b_sl = (slice(dr, size), slice(dc, size))
        for s, t in ((a_sl, b_sl), (b_sl, a_sl)):
            src = bits[s]
            ia = ids[s][src]
            diag += np.bincount(ia, minlength=m)
            nb_in = bits[t][src]
            rows.append(ia[nb_in])
            cols.append(ids[t][src][nb_in])
            rhs += np.bincount(ia[~nb_in], weights=fixed[t][src][~nb_in], minlength=m)
    # cells on the chart edge see the outside of the chart as outer complement
    for sl in ((0, slice(None)), (-1, slice(None)), (slice(None), 0), (slice(None), -1)):
        edge = np.zeros_like(bits)
        edge[sl] = True
        e = ids[edge & bits]
        diag[e] += 1
        rhs[e] += 1.0
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    A = sparse.csr_matrix((np.full(len(r), -1.0), (r, c)), shape=(m, m)) + sparse.diags(diag)
    A = A.tocsr()
    ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
    u = ml.solve(rhs, tol=tol, accel="cg", maxiter=500)
    pot = fixed.copy()
    pot[bits] = u
    energy = _dirichlet_energy(pot, bits, outer)
    return AnnulusData(mask, 1.0 / energy, pot, inner, outer)


def _dirichlet_energy(pot: np.ndarray, bits: np.ndarray, outer: np.ndarray) -> float:
    p = np.pad(pot, 1, constant_values=1.0)
    b = np.pad(bits, 1, constant_values=False)
    e = 0.0
    for axis in (0, 1):
        d = np.diff(p, axis=axis)
        touch = (b[:-1] | b[1:]) if axis == 0 else (b[:, :-1] | b[:, 1:])
        e += float((d[touch] ** 2).sum())
    return e


def annulus_modulus(mask: RegionMask) -> float:
    return annulus_potential(mask).modulus


def _level_curve(field_: np.ndarray, grid: GridSpec, level: float) -> list[Curve]:
    curves = []
    for c in measure.find_contours(field_, level):
        closed = bool(np.allclose(c[0], c[-1]))
        pts = grid.cell_center(c[:, 0], c[:, 1])
        if closed:
            pts = pts[:-1]
        curves.append(Curve(np.asarray(pts), closed, 0))
    return curves


def separates(curve: Curve, inner: np.ndarray, outer: np.ndarray, grid: GridSpec) -> bool:
    """Winding-number test: |wind| = 1 about inner complement cells, 0 about outer ones."""
    if not curve.closed:
        return False
    ii = np.argwhere(inner)
    oo = np.argwhere(outer)
    if len(ii) == 0:
        return False
    pick_i = ii[np.linspace(0, len(ii) - 1, min(len(ii), 5)).astype(int)]
    w_in = {abs(curve.winding_number(grid.cell_center(*p))) for p in pick_i}
    far = grid.center + 10.0 * grid.half_width
    w_out = {curve.winding_number(far)}
    if len(oo):
        pick_o = oo[np.linspace(0, len(oo) - 1, min(len(oo), 5)).astype(int)]
        w_out |= {curve.winding_number(grid.cell_center(*p)) for p in pick_o}
    return w_in == {1} and w_out == {0}


def equator(mask: RegionMask | AnnulusData) -> Curve:
    """Half-level curve of the annulus potential, extracted by marching squares."""
    ann = mask if isinstance(mask, AnnulusData) else annulus_potential(mask)
    grid = ann.mask.grid
    curves = [c for c in _level_curve(ann.potential, grid, 0.5) if c.closed]
    sep = [c for c in curves if separates(c, ann.inner, ann.outer, grid)]
    if len(sep) != 1 or len(curves) != 1:
        raise DomainError(f"equator level set has {len(curves)} closed piece(s) at this resolution; "
                          "try doubling the resolution")
    ann.equator = sep[0]
    return sep[0]


# ---------------------------------------------------------------------------
# Carathéodory topology


def hausdorff_cells(A: np.ndarray, B: np.ndarray) -> float:
    """Hausdorff distance between two cell sets in cell units (inf if exactly one is empty)."""
    if not A.any() and not B.any():
        return 0.0
    if not A.any() or not B.any():
        return math.inf
    dA = ndimage.distance_transform_edt(~A)
    dB = ndimage.distance_transform_edt(~B)
    return float(max(dB[A].max(), dA[B].max()))


def caratheodory_limit(domains: Sequence[RegionMask], tol_cells: float = 2.0) -> RegionMask | DegeneratePoint:
    """Carathéodory limit of pointed domains, read off from the Hausdorff limit of complements.

    The limit of the complements is estimated over the trailing half of the sequence by
    extrapolating their distance functions linearly in the index; the limit domain is the
    component of its complement containing the limiting base point.
    """
    if len(domains) == 0:
        raise ValueError("need at least one domain")
    grid = domains[0].grid
    if any(d.grid != grid for d in domains):
        raise ValueError("all domains must share a grid")
    if any(d.basepoint is None for d in domains):
        raise ValueError("all domains need base points")
    N = len(domains)
    tail = domains[-max(1, N // 4):]
    b = tail[-1].basepoint
    scale = spherical_dist(b, b + tol_cells * grid.cell) if not is_inf(b) else tol_cells * grid.cell
    for i in range(len(tail)):
        for j in range(i + 1, len(tail)):
            if spherical_dist(tail[i].basepoint, tail[j].basepoint) > scale + 1e-15:
                raise DomainError("base points do not converge")
    half = domains[N // 2:] if N > 1 else domains
    comps = [~_padded(d) for d in half]
    for c, d in zip(comps[:-1], comps[1:]):
        if hausdorff_cells(c, d) > tol_cells:
            raise NotConvergent("complements oscillate by more than "
                                f"{tol_cells:g} cells: not convergent at this resolution")
    dist = [ndimage.distance_transform_edt(~c) if c.any() else np.full(c.shape, np.inf) for c in comps]
    limit = 2.0 * dist[-1] - dist[0] if len(dist) > 1 else dist[-1]
    lim_domain = ~(limit < 0.5)
    labels, _ = ndimage.label(lim_domain, FOUR)
    inf_label = labels[0, 0] if tail[-1].contains_infinity else 0
    if is_inf(b):
        lab = inf_label
    else:
        idx = grid.index_of(b)
        lab = labels[idx[0] + 1, idx[1] + 1] if idx is not None else inf_label
    if lab == 0:
        return DegeneratePoint(b)
    region = labels == lab
    contains_inf = bool(inf_label and lab == inf_label)
    return RegionMask(grid, region[1:-1, 1:-1], contains_inf, b)


def _boundary_points(mask: RegionMask) -> np.ndarray:
    """Midpoints of edges between masked and unmasked cells (chart edges included)."""
    grid = mask.grid
    p = _padded(mask)
    pts = []
    for axis in (0, 1):
        d = np.diff(p.astype(np.int8), axis=axis) != 0
        r, c = np.nonzero(d)
        if axis == 0:
            pts.append(grid.cell_center(r - 0.5, c - 1))
        else:
            pts.append(grid.cell_center(r - 1, c - 0.5))
    return np.concatenate(pts)


def caratheodory_bound_disc(domain: RegionMask) -> float:
    """|log(spherical distance from u to the boundary * spherical diameter of the complement)|."""
    u = domain.basepoint
    comp_cells = domain.grid.cell_center(*np.nonzero(~domain.bits))
    bpts = _boundary_points(domain)
    pieces = [np.asarray(comp_cells, dtype=complex).ravel(), bpts]
    if not domain.contains_infinity:
        pieces.append(np.array([complex(math.inf, 0)]))
        anti = -1.0 / np.conj(np.concatenate(pieces[:2]))
        ri, ci = domain.grid.fractional_index(anti)
        n = domain.grid.resolution
        outside = ~((ri > -0.5) & (ri < n - 0.5) & (ci > -0.5) & (ci < n - 0.5))
        pieces.append(anti[outside & np.isfinite(anti)])
    comp = np.concatenate(pieces)
    if comp.size == 0 or (bpts.size == 0 and domain.contains_infinity):
        raise DomainError("domain has empty complement")
    delta = float(spherical_dist_array(np.full(bpts.shape, u), bpts).min())
    diam = spherical_diameter(comp)
    return abs(math.log(delta * diam))


def lipschitz_profile(p: Polynomial | complex, domain: RegionMask, R_hyp: float, samples: int,
                      rng: np.random.Generator | None = None) -> float:
    """Largest spherical derivative over sampled points within hyperbolic radius R_hyp of u."""
    if R_hyp <= 0:
        raise ValueError("R_hyp must be positive")
    rng = rng or np.random.default_rng(42)
    q = quasihyperbolic_field(domain, domain.basepoint)
    cand = np.argwhere(2.0 * q <= R_hyp)
    if len(cand) == 0:
        raise DomainError("no sample points within the requested hyperbolic radius")
    pick = cand[rng.choice(len(cand), size=min(samples, len(cand)), replace=False)]
    pts = np.append(domain.grid.cell_center(pick[:, 0], pick[:, 1]), domain.basepoint)
    if not isinstance(p, Polynomial):
        return 0.0
    return float(np.max(spherical_derivative(p, pts)))


# ---------------------------------------------------------------------------
# Round annuli in closed form


def round_annulus_hyperbolic_dist(r: float, R: float, z: complex, w: complex, lifts: int = 3) -> float:
    """Hyperbolic distance in A(0, r, R), via the logarithm onto a vertical strip."""
    W = math.log(R / r)
    x0 = 0.5 * math.log(r * R)

    def to_disc(zeta):
        # strip |Re zeta| < pi/2 -> unit disc
        return np.tanh(-1j * zeta / 2.0)

    lz = complex(math.log(abs(z)), math.atan2(z.imag, z.real))
    best = math.inf
    for k in range(-lifts, lifts + 1):
        lw = complex(math.log(abs(w)), math.atan2(w.imag, w.real) + 2 * math.pi * k)
        a = to_disc(math.pi * (lz - x0) / W)
        b = to_disc(math.pi * (lw - x0) / W)
        t = abs(a - b) / abs(1 - np.conj(a) * b)
        best = min(best, 2 * math.atanh(min(t, 1 - 1e-16)))
    return best


def annulus_qh_constant(r: float, R: float, grid: GridSpec, pairs: int = 20,
                        rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Calibrate the lower constant c with c Q <= rho on a round annulus.

    Returns (c, worst upper ratio rho / (2 Q)); the latter must not exceed 1.
    """
    rng = rng or np.random.default_rng(42)
    mask = RegionMask.from_predicate(grid, lambda z: (np.abs(z) > r) & (np.abs(z) < R))
    mid = math.sqrt(r * R)
    delta = boundary_distance(mask)
    ratios, upper = [], []
    for _ in range(pairs):
        z = mid * np.exp(2j * math.pi * rng.uniform())
        rad = math.exp(rng.uniform(math.log(r), math.log(R)) * 0.6 + 0.4 * math.log(mid))
        w = rad * np.exp(2j * math.pi * rng.uniform())
        iz, iw = grid.index_of(z), grid.index_of(w)
        if iz is None or iw is None or not (mask.bits[iz] and mask.bits[iw]):
            continue
        q = quasihyperbolic_field(mask, z)
        Q = q[iw] + abs(w - grid.cell_center(*iw)) / delta[iw]
        rho = round_annulus_hyperbolic_dist(r, R, complex(z), complex(w))
        ratios.append(rho / Q)
        upper.append(rho / (2 * Q))
    return float(min(ratios)), float(max(upper))
