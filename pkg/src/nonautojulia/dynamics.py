"""Escape-time sieves for iterated filled Julia sets on a square raster."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .core import (
    INF,
    Polynomial,
    SequenceSpec,
    chord_to_spherical,
    compose_array,
    escape_radius,
    is_inf,
    to_sphere,
)

EIGHT = np.ones((3, 3), dtype=bool)
FOUR = ndimage.generate_binary_structure(2, 1)


class GridTooSmall(ValueError):
    def __init__(self, half_width: float, required: float):
        super().__init__(f"grid half_width {half_width:g} does not cover the escape disc; "
                         f"need half_width >= {required:g}")
        self.required = required


@dataclass(frozen=True)
class GridSpec:
    """Square chart ``center +- half_width`` cut into ``resolution``^2 cells.

    Arrays on the grid are indexed ``[row, col]`` with rows along the imaginary axis.
    """

    center: complex = 0j
    half_width: float = 3.0
    resolution: int = 512

    def __post_init__(self):
        r = self.resolution
        if r < 2 or r & (r - 1):
            raise ValueError(f"resolution must be a power of two, got {r}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        object.__setattr__(self, "center", complex(self.center))

    @property
    def cell(self) -> float:
        return 2.0 * self.half_width / self.resolution

    @property
    def shape(self) -> tuple[int, int]:
        return (self.resolution, self.resolution)

    def axis(self) -> tuple[np.ndarray, np.ndarray]:
        t = -self.half_width + (np.arange(self.resolution) + 0.5) * self.cell
        return self.center.real + t, self.center.imag + t

    def centers(self) -> np.ndarray:
        x, y = self.axis()
        return x[None, :] + 1j * y[:, None]

    def cell_center(self, row, col):
        x0 = self.center.real - self.half_width
        y0 = self.center.imag - self.half_width
        return (x0 + (np.asarray(col) + 0.5) * self.cell) + 1j * (y0 + (np.asarray(row) + 0.5) * self.cell)

    def fractional_index(self, z):
        """(row, col) as floats; cell centers land on integers."""
        z = np.asarray(z, dtype=complex)
        col = (z.real - (self.center.real - self.half_width)) / self.cell - 0.5
        row = (z.imag - (self.center.imag - self.half_width)) / self.cell - 0.5
        return row, col

    def index_of(self, z) -> tuple[int, int] | None:
        row, col = self.fractional_index(z)
        r, c = int(np.floor(row + 0.5)), int(np.floor(col + 0.5))
        if 0 <= r < self.resolution and 0 <= c < self.resolution:
            return r, c
        return None

    def covers_disc(self, radius: float) -> bool:
        return (abs(self.center.real) + radius <= self.half_width
                and abs(self.center.imag) + radius <= self.half_width)

    def required_half_width(self, radius: float) -> float:
        return max(abs(self.center.real), abs(self.center.imag)) + radius


@dataclass
class RegionMask:
    """A raster set, optionally together with the point at infinity, with a base point."""

    grid: GridSpec
    bits: np.ndarray
    contains_infinity: bool = False
    basepoint: complex | None = None

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != self.grid.shape:
            raise ValueError(f"mask shape {self.bits.shape} does not match grid {self.grid.shape}")
        if self.basepoint is not None:
            self.basepoint = complex(self.basepoint)
            if is_inf(self.basepoint):
                if not self.contains_infinity:
                    raise ValueError("basepoint at infinity requires contains_infinity")
            else:
                idx = self.grid.index_of(self.basepoint)
                if idx is None:
                    if not self.contains_infinity:
                        raise ValueError(f"basepoint {self.basepoint} lies outside the chart")
                elif not self.bits[idx]:
                    raise ValueError(f"basepoint {self.basepoint} is not in the masked set")

    @classmethod
    def from_predicate(cls, grid: GridSpec, pred: Callable[[np.ndarray], np.ndarray],
                       basepoint=None, contains_infinity: bool = False) -> "RegionMask":
        return cls(grid, pred(grid.centers()), contains_infinity, basepoint)

    @property
    def cell_count(self) -> int:
        return int(self.bits.sum())

    @property
    def area(self) -> float:
        return self.cell_count * self.grid.cell ** 2

    def points(self) -> np.ndarray:
        r, c = np.nonzero(self.bits)
        return self.grid.cell_center(r, c)

    def complement_bits(self) -> np.ndarray:
        return ~self.bits

    def with_basepoint(self, b) -> "RegionMask":
        return RegionMask(self.grid, self.bits, self.contains_infinity, b)


def disc_mask(grid: GridSpec, center: complex, radius: float, basepoint=None, closed=False) -> RegionMask:
    z = grid.centers()
    bits = np.abs(z - center) <= radius if closed else np.abs(z - center) < radius
    return RegionMask(grid, bits, False, basepoint)


def boundary_cells(bits: np.ndarray) -> np.ndarray:
    """Cells of ``bits`` with a 4-neighbour outside (the chart edge counts as outside)."""
    padded = np.pad(bits, 1, constant_values=False)
    interior = ndimage.binary_erosion(padded, FOUR, border_value=0)[1:-1, 1:-1]
    return bits & ~interior


@dataclass
class JuliaApprox:
    time: int
    depth: int
    k_mask: RegionMask
    j_cells: np.ndarray            # (N, 2) array of (row, col)
    steps: np.ndarray | None = field(default=None, repr=False)   # center escape step, -1 = bounded

    @property
    def grid(self) -> GridSpec:
        return self.k_mask.grid

    def j_points(self) -> np.ndarray:
        return self.grid.cell_center(self.j_cells[:, 0], self.j_cells[:, 1])


class EscapeResult(NamedTuple):
    escaped: bool
    steps: int | None


def escape_time(seq: SequenceSpec, m: int, z, max_depth: int) -> EscapeResult:
    """First orbit index k with |Q_{m,m+k}(z)| > R, looking at k = 0 .. max_depth."""
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    R = escape_radius(seq.bounds)
    z = complex(z)
    for k in range(max_depth + 1):
        if is_inf(z) or abs(z) > R:
            return EscapeResult(True, k)
        if k < max_depth:
            try:
                z = seq.term(m + k + 1)(z)
            except OverflowError:
                z = INF
    return EscapeResult(False, None)


# ---------------------------------------------------------------------------
# Sieves


def center_steps(maps: Sequence[Polynomial], z: np.ndarray, R: float) -> np.ndarray:
    """Escape index of each point under the maps (-1 if bounded through all of them)."""
    z = np.asarray(z, dtype=complex).ravel().copy()
    steps = np.full(z.shape, -1, dtype=np.int32)
    alive = np.ones(z.shape, dtype=bool)
    esc = np.abs(z) > R
    steps[esc] = 0
    alive &= ~esc
    with np.errstate(over="ignore", invalid="ignore"):
        for k, p in enumerate(maps, start=1):
            idx = np.nonzero(alive)[0]
            if idx.size == 0:
                break
            w = p(z[idx])
            z[idx] = w
            esc = ~(np.abs(w) <= R)
            steps[idx[esc]] = k
            alive[idx[esc]] = False
    return steps


ESCAPED, SURVIVED, UNRESOLVED = 0, 1, 2


def disc_sieve(maps: Sequence[Polynomial], c: np.ndarray, r: np.ndarray,
               certify: Callable[[int, np.ndarray, np.ndarray], np.ndarray],
               blowup: float) -> np.ndarray:
    """Push discs D(c, r) through the maps with disc arithmetic.

    ``certify(k, c, r)`` flags discs known to lie outside the set after k steps.
    A disc whose radius exceeds ``blowup`` before being certified is UNRESOLVED.
    """
    c = c.astype(complex).copy()
    r = r.astype(float).copy()
    status = np.full(c.shape, SURVIVED, dtype=np.int8)
    status[certify(0, c, r)] = ESCAPED
    active = status == SURVIVED
    with np.errstate(over="ignore", invalid="ignore"):
        for k, p in enumerate(maps, start=1):
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            tay = p.taylor(c[idx])
            rr = r[idx]
            nr = np.zeros_like(rr)
            for i in range(len(tay) - 1, 0, -1):
                nr = (nr + np.abs(tay[i])) * rr
            nc = tay[0]
            c[idx] = nc
            r[idx] = nr
            esc = certify(k, nc, nr)
            blown = ~esc & ~(nr <= blowup)
            status[idx[esc]] = ESCAPED
            status[idx[blown]] = UNRESOLVED
            active[idx[esc | blown]] = False
    return status


_QUAD = np.array([-1 - 1j, -1 + 1j, 1 - 1j, 1 + 1j]) / 4.0


def cell_cover(centers: np.ndarray, cell: float, run: Callable[[np.ndarray, np.ndarray], np.ndarray],
               levels: int) -> np.ndarray:
    """Cells whose square may meet the set, by disc sieving with adaptive quad refinement.

    A cell is dropped only when every piece of it is certified to leave the set.
    """
    flat = centers.ravel()
    keep = np.zeros(flat.size, dtype=bool)
    owner = np.arange(flat.size)
    c = flat
    size = cell
    for level in range(levels + 1):
        st = run(c, np.full(c.shape, size / math.sqrt(2.0)))
        keep[owner[st == SURVIVED]] = True
        if level == levels:
            keep[owner[st == UNRESOLVED]] = True
            break
        todo = (st == UNRESOLVED) & ~keep[owner]
        c, owner = c[todo], owner[todo]
        if c.size == 0:
            break
        c = (c[:, None] + _QUAD[None, :] * size).ravel()
        owner = np.repeat(owner, 4)
        size /= 2.0
    return keep.reshape(centers.shape)


def filled_julia(seq: SequenceSpec, m: int, grid: GridSpec, depth: int,
                 sampling: str = "cell", levels: int = 8, check_grid: bool = True) -> JuliaApprox:
    """Depth-``depth`` approximation of K_m and its boundary cells.

    ``sampling="center"`` keeps cells whose center orbit stays within the escape radius;
    ``"cell"`` keeps cells that cannot be certified to escape, so zero-area
    (Cantor) filled Julia sets still show up at raster scale.
    """
    R = escape_radius(seq.bounds)
    if check_grid and not grid.covers_disc(R + 1.0):
        raise GridTooSmall(grid.half_width, grid.required_half_width(R + 1.0))
    if depth < 0:
        raise ValueError("depth must be >= 0")
    maps = seq.terms(m + 1, m + depth + 1)
    z = grid.centers()
    steps = center_steps(maps, z, R).reshape(grid.shape)
    if sampling == "center" or depth == 0:
        bits = steps < 0
    elif sampling == "cell":
        def certify(k, c, r):
            return np.abs(c) - r > R

        bits = cell_cover(z, grid.cell, lambda c, r: disc_sieve(maps, c, r, certify, R), levels)
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    mask = RegionMask(grid, bits)
    jc = np.argwhere(boundary_cells(bits))
    return JuliaApprox(m, depth, mask, jc, steps)


def refine_to_julia(seq: SequenceSpec, m: int, points, width: float, depth: int,
                    sub: int = 8, zooms: int = 12, bisections: int = 50) -> np.ndarray:
    """Move each point to a nearby point of the depth-limited boundary of K_m.

    Each point is zoomed towards the slowest-escaping sample of a sub x sub patch;
    the first patch that straddles the boundary gives a bracket which is then bisected.
    Points that never straddle it stay at the last zoom center.
    """
    R = escape_radius(seq.bounds)
    maps = seq.terms(m + 1, m + depth + 1)
    off = (np.arange(sub) + 0.5) / sub - 0.5
    patch = (off[None, :] + 1j * off[:, None]).ravel()
    c = np.asarray(points, dtype=complex).ravel().copy()
    rows = np.arange(c.size)
    inside = np.full(c.shape, np.nan + 0j)
    outside = np.full(c.shape, np.nan + 0j)
    w = width
    for _ in range(zooms):
        P = c[:, None] + patch[None, :] * w
        st = center_steps(maps, P.ravel(), R).reshape(P.shape)
        key = np.where(st < 0, np.iinfo(np.int32).max, st)
        best = key.max(axis=1)
        pick = np.where(key == best[:, None], np.abs(patch)[None, :], np.inf).argmin(axis=1)
        c = P[rows, pick]
        new = (st < 0).any(1) & (st >= 0).any(1) & np.isnan(inside)
        for i in np.nonzero(new)[0]:
            ii = np.nonzero(st[i] < 0)[0]
            oo = np.nonzero(st[i] >= 0)[0]
            d = np.abs(P[i, ii][:, None] - P[i, oo][None, :])
            a, b = np.unravel_index(d.argmin(), d.shape)
            inside[i], outside[i] = P[i, ii[a]], P[i, oo[b]]
        w /= sub / 2
    ok = ~np.isnan(inside)
    a, b = inside[ok], outside[ok]
    for _ in range(bisections):
        mid = (a + b) / 2
        bounded = center_steps(maps, mid, R) < 0
        a = np.where(bounded, mid, a)
        b = np.where(bounded, b, mid)
    c[ok] = a
    return c


def invariance_check(seq: SequenceSpec, m: int, n: int, ja_m: JuliaApprox, ja_n: JuliaApprox,
                     samples: int, rng: np.random.Generator | None = None) -> float:
    """Largest Chebyshev cell distance from Q_{m,n}(sampled J_m cells) to the nearest J_n cell.

    Sampled cells are represented by a nearby boundary point found by refine_to_julia, since a
    boundary cell of a coarse cover need not contain any point of K_m itself.
    """
    if ja_m.grid != ja_n.grid:
        raise ValueError("approximations must share a grid")
    if len(ja_m.j_cells) == 0 or len(ja_n.j_cells) == 0:
        raise ValueError("empty Julia approximation")
    rng = rng or np.random.default_rng(42)
    k = min(samples, len(ja_m.j_cells))
    pick = ja_m.j_cells[rng.choice(len(ja_m.j_cells), size=k, replace=False)]
    grid = ja_m.grid
    pts = refine_to_julia(seq, m, grid.cell_center(pick[:, 0], pick[:, 1]), grid.cell, ja_m.depth)
    img = compose_array(seq, m, n, pts)
    row, col = grid.fractional_index(img)
    finite = np.isfinite(row) & np.isfinite(col)
    res = grid.resolution
    inside = finite & (row > -0.5) & (row < res - 0.5) & (col > -0.5) & (col < res - 0.5)
    if not inside.all():
        return math.inf
    tree = cKDTree(ja_n.j_cells.astype(float))
    d, _ = tree.query(np.column_stack([row, col]), p=np.inf)
    return float(d.max())


# ---------------------------------------------------------------------------
# Point-set geometry


def _as_points(A) -> np.ndarray:
    a = np.atleast_1d(np.asarray(A, dtype=complex))
    if a.size == 0:
        raise ValueError("point list must be nonempty")
    return a


def hausdorff_dist(A, B) -> float:
    """Spherical Hausdorff distance between two finite point lists (infinity allowed)."""
    a, b = to_sphere(_as_points(A)), to_sphere(_as_points(B))
    dab = cKDTree(b).query(a)[0].max()
    dba = cKDTree(a).query(b)[0].max()
    return float(chord_to_spherical(max(dab, dba)))


def spherical_diameter(points) -> float:
    """Exact spherical diameter of a finite point set.

    On the unit sphere |p - q|^2 + |p + q|^2 = 4, so the point farthest from p is the one nearest
    to -p. A double sweep gives a lower bound on the chord; each antipode query is then capped by
    the distance any improving pair would need, which keeps the kd-tree search local.
    """
    p = np.unique(to_sphere(_as_points(points)), axis=0)
    if len(p) < 2:
        return 0.0
    best, i = 0.0, 0
    for _ in range(4):
        d = np.sqrt(((p - p[i]) ** 2).sum(axis=1))
        i = int(d.argmax())
        best = max(best, float(d[i]))
    cap = math.sqrt(max(4.0 - best * best, 0.0)) * (1 + 1e-9) + 1e-12
    d, _ = cKDTree(p).query(-p, distance_upper_bound=cap)
    d = d[np.isfinite(d)]
    if d.size:
        best = max(best, float(np.sqrt(np.maximum(4.0 - d.min() ** 2, 0.0))))
    return float(chord_to_spherical(min(best, 2.0)))


@dataclass
class Component:
    cell_count: int
    diameter: float
    centroid: complex
    cells: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {"cells": self.cell_count, "diameter": self.diameter,
                "centroid": [self.centroid.real, self.centroid.imag]}


def components(mask: RegionMask | np.ndarray, grid: GridSpec | None = None) -> list[Component]:
    """8-connected components, largest first (ties broken by position)."""
    if isinstance(mask, RegionMask):
        bits, grid = mask.bits, mask.grid
    else:
        bits = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(bits, EIGHT)
    out = []
    for sl, lab in zip(ndimage.find_objects(labels), range(1, n + 1)):
        rr, cc = np.nonzero(labels[sl] == lab)
        rr, cc = rr + sl[0].start, cc + sl[1].start
        pts = grid.cell_center(rr, cc)
        out.append(Component(len(rr), spherical_diameter(pts), complex(pts.mean()), np.column_stack([rr, cc])))
    out.sort(key=lambda c: (-c.cell_count, c.centroid.real, c.centroid.imag))
    return out


def component_gap(a: Component, b: Component, grid: GridSpec) -> float:
    """Smallest Euclidean distance between cell centers of two components."""
    pa = grid.cell_center(a.cells[:, 0], a.cells[:, 1])
    pb = grid.cell_center(b.cells[:, 0], b.cells[:, 1])
    d, _ = cKDTree(np.column_stack([pb.real, pb.imag])).query(np.column_stack([pa.real, pa.imag]))
    return float(d.min())


def write_pgm(ja: JuliaApprox, path) -> None:
    """Binary PGM: 255 inside K, escape-time grey elsewhere; row 0 is the top (largest imaginary part)."""
    depth = max(ja.depth, 1)
    steps = ja.steps if ja.steps is not None else np.where(ja.k_mask.bits, -1, 0)
    img = np.clip(255.0 * np.maximum(steps, 0) / depth, 0, 254).astype(np.uint8)
    img[ja.k_mask.bits] = 255
    img = img[::-1]
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())
