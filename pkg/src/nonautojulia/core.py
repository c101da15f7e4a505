"""Polynomials, bounded sequences, compositions and spherical geometry."""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

INF = complex(math.inf, 0.0)

KIND_EXPLICIT = "explicit-prefix-with-periodic-tail"
KIND_THM72 = "builtin-thm72"
KIND_THM72_LIMIT = "builtin-thm72-limit"
KINDS = (KIND_EXPLICIT, KIND_THM72, KIND_THM72_LIMIT)


class SpecError(ValueError):
    """Malformed polynomial, bounds or sequence description."""


class RootFindingError(RuntimeError):
    pass


def is_inf(z) -> bool:
    return cmath.isinf(complex(z))


@dataclass(frozen=True)
class Polynomial:
    """Complex polynomial with ascending coefficients ``a_0 .. a_d``."""

    coeffs: tuple[complex, ...]

    def __init__(self, coeffs: Sequence[complex]):
        cs = tuple(complex(c) for c in coeffs)
        if len(cs) < 2:
            raise SpecError("polynomial needs degree >= 1")
        if cs[-1] == 0:
            raise SpecError("leading coefficient must be nonzero")
        object.__setattr__(self, "coeffs", cs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> complex:
        return self.coeffs[-1]

    def __call__(self, z):
        acc = self.coeffs[-1]
        for a in reversed(self.coeffs[:-1]):
            acc = acc * z + a
        return acc

    def derivative(self) -> "Polynomial | complex":
        dc = [k * a for k, a in enumerate(self.coeffs)][1:]
        if len(dc) == 1:
            return dc[0]
        return Polynomial(dc)

    def deriv(self, z):
        """Value of p'(z); works elementwise on arrays."""
        d = self.degree
        acc = d * self.coeffs[-1]
        for k in range(d - 1, 0, -1):
            acc = acc * z + k * self.coeffs[k]
        if np.ndim(z):
            return acc + np.zeros_like(z, dtype=complex)
        return acc

    def taylor(self, c):
        """Taylor coefficients of p about c, ascending, by repeated synthetic division."""
        b = list(self.coeffs)
        out = []
        for _ in range(len(b)):
            acc = b[-1]
            quot = [acc]
            for a in reversed(b[:-1]):
                acc = acc * c + a
                quot.append(acc)
            out.append(quot[-1])
            b = list(reversed(quot[:-1]))
        return out

    def to_json(self) -> list:
        return [[c.real, c.imag] for c in self.coeffs]

    @classmethod
    def from_json(cls, data) -> "Polynomial":
        try:
            return cls([complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c) for c in data])
        except (TypeError, IndexError) as exc:
            raise SpecError(f"bad coefficient list {data!r}") from exc

    def __repr__(self) -> str:
        return f"Polynomial({list(self.coeffs)})"


Z2 = Polynomial([0, 0, 1])
Z_MINUS_3_SQ = Polynomial([9, -6, 1])


@dataclass(frozen=True)
class Bounds:
    d: int
    K: float
    M: float

    def __post_init__(self):
        if self.d < 2 or self.K < 1 or self.M < 0:
            raise SpecError(f"invalid bounds d={self.d} K={self.K} M={self.M}")

    def admits(self, p: Polynomial) -> bool:
        if not 2 <= p.degree <= self.d:
            return False
        lead = abs(p.leading)
        if not 1.0 / self.K - 1e-12 <= lead <= self.K + 1e-12:
            return False
        return all(abs(a) <= self.M + 1e-12 for a in p.coeffs[:-1])


def escape_radius(b: Bounds) -> float:
    """Radius beyond which every in-bounds polynomial satisfies |P(z)| >= 2|z|.

    For |z| >= 1, |P(z)| >= |z|^(d-1) (|z|/K - d M), so |z| >= K (d M + 2) suffices.
    """
    return max(1.0, b.K * (b.d * b.M + 2.0))


def thm72_times(n: int | None, upto: int) -> set[int]:
    """Times m <= upto of the form (j+1)(j+2)/2 - 1, j >= 1 (and j <= n if n given)."""
    out = set()
    j = 1
    while True:
        t = (j + 1) * (j + 2) // 2 - 1
        if t > upto or (n is not None and j > n):
            return out
        out.add(t)
        j += 1


@dataclass(frozen=True)
class SequenceSpec:
    """An infinite polynomial sequence P_1, P_2, ... given by a finite rule."""

    kind: str
    bounds: Bounds
    prefix: tuple[Polynomial, ...] = ()
    tail: tuple[Polynomial, ...] = ()
    n: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown sequence kind {self.kind!r}")
        object.__setattr__(self, "prefix", tuple(self.prefix))
        object.__setattr__(self, "tail", tuple(self.tail))
        if self.kind == KIND_EXPLICIT:
            if not self.tail:
                raise SpecError("explicit sequence needs a nonempty tail")
            for p in self.prefix + self.tail:
                if not self.bounds.admits(p):
                    raise SpecError(f"{p!r} violates bounds {self.bounds}")
        elif self.kind == KIND_THM72 and (self.n is None or self.n < 1):
            raise SpecError("builtin-thm72 needs n >= 1")

    def term(self, m: int) -> Polynomial:
        if m < 1:
            raise ValueError("sequence terms are indexed from 1")
        if self.kind == KIND_EXPLICIT:
            if m <= len(self.prefix):
                return self.prefix[m - 1]
            return self.tail[(m - len(self.prefix) - 1) % len(self.tail)]
        j_max = self.n if self.kind == KIND_THM72 else None
        # m = (j+1)(j+2)/2 - 1  <=>  (j+1)(j+2) = 2(m+1)
        j = int((math.isqrt(8 * (m + 1) + 1) - 3) // 2)
        if j >= 1 and (j + 1) * (j + 2) == 2 * (m + 1) and (j_max is None or j <= j_max):
            return Z_MINUS_3_SQ
        return Z2

    def terms(self, start: int, stop: int) -> list[Polynomial]:
        """P_start .. P_{stop-1}."""
        return [self.term(k) for k in range(start, stop)]

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "bounds": {"d": self.bounds.d, "K": self.bounds.K, "M": self.bounds.M},
            "prefix": [p.to_json() for p in self.prefix],
            "tail": [p.to_json() for p in self.tail],
        }
        if self.n is not None:
            out["n"] = self.n
        return out

    @classmethod
    def from_json(cls, data: dict) -> "SequenceSpec":
        if not isinstance(data, dict):
            raise SpecError("sequence spec must be a JSON object")
        try:
            kind = data["kind"]
        except KeyError:
            raise SpecError("missing field 'kind'") from None
        if kind == KIND_THM72:
            if not isinstance(data.get("n"), int) or data["n"] < 1:
                raise SpecError("field 'n' must be an integer >= 1 for builtin-thm72")
            return counterexample_seq(data["n"])
        if kind == KIND_THM72_LIMIT:
            return counterexample_seq(None)
        try:
            b = data["bounds"]
            bounds = Bounds(int(b["d"]), float(b["K"]), float(b["M"]))
        except (KeyError, TypeError) as exc:
            raise SpecError(f"bad or missing field 'bounds': {exc}") from None
        prefix = [Polynomial.from_json(p) for p in data.get("prefix", [])]
        if "tail" not in data:
            raise SpecError("missing field 'tail'")
        tail = [Polynomial.from_json(p) for p in data["tail"]]
        return cls(kind, bounds, tuple(prefix), tuple(tail), data.get("n"))

    @classmethod
    def load(cls, path) -> "SequenceSpec":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SpecError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        return cls.from_json(data)


def constant_seq(p: Polynomial, bounds: Bounds | None = None) -> SequenceSpec:
    """The constant sequence P_m = p, with the tightest natural bounds if none given."""
    if bounds is None:
        lead = abs(p.leading)
        K = max(1.0, lead, 1.0 / lead)
        M = max((abs(a) for a in p.coeffs[:-1]), default=0.0)
        bounds = Bounds(max(2, p.degree), K, M)
    return SequenceSpec(KIND_EXPLICIT, bounds, (), (p,))


def periodic_seq(polys: Sequence[Polynomial], bounds: Bounds) -> SequenceSpec:
    return SequenceSpec(KIND_EXPLICIT, bounds, (), tuple(polys))


def counterexample_seq(n: int | None) -> SequenceSpec:
    """(z-3)^2 at times (j+1)(j+2)/2 - 1 for 1 <= j <= n (all j when n is None), z^2 elsewhere."""
    b = Bounds(2, 1.0, 9.0)
    if n is None:
        return SequenceSpec(KIND_THM72_LIMIT, b)
    return SequenceSpec(KIND_THM72, b, n=n)


def random_bounded_seq(bounds: Bounds, rng: np.random.Generator, length: int = 64,
                       degree: int | None = None) -> SequenceSpec:
    """Random sequence within ``bounds``: explicit prefix of ``length`` terms, period-4 tail."""

    def draw() -> Polynomial:
        d = degree or int(rng.integers(2, bounds.d + 1))
        lead_mod = rng.uniform(1.0 / bounds.K, bounds.K) if bounds.K > 1 else 1.0
        lead = lead_mod * cmath.exp(2j * math.pi * rng.uniform())
        rad = bounds.M * np.sqrt(rng.uniform(size=d))
        lower = rad * np.exp(2j * np.pi * rng.uniform(size=d))
        return Polynomial(list(lower) + [lead])

    polys = [draw() for _ in range(length + 4)]
    return SequenceSpec(KIND_EXPLICIT, bounds, tuple(polys[:length]), tuple(polys[length:]))


def eval_poly(p: Polynomial, z) -> complex:
    if is_inf(z):
        return INF
    return p(complex(z))


def composition_degree(seq: SequenceSpec, m: int, n: int) -> int:
    return math.prod(seq.term(k).degree for k in range(m + 1, n + 1))


def compose_eval(seq: SequenceSpec, m: int, n: int, z) -> complex:
    """Q_{m,n}(z) = P_n o ... o P_{m+1}(z); returns INF once the orbit overflows."""
    if not 0 <= m <= n:
        raise ValueError("need 0 <= m <= n")
    z = complex(z)
    for k in range(m + 1, n + 1):
        if is_inf(z):
            return INF
        try:
            z = seq.term(k)(z)
        except OverflowError:
            return INF
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            return INF
    return z


def compose_array(seq: SequenceSpec, m: int, n: int, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex).copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(m + 1, n + 1):
            z = seq.term(k)(z)
    z[~np.isfinite(z)] = INF
    return z


def critical_points(p: Polynomial, tol: float = 1e-9) -> list[complex]:
    """Roots of p' with multiplicity: companion-matrix eigenvalues, then Newton polishing."""
    if p.degree < 2:
        raise ValueError("critical points need degree >= 2")
    dp = p.derivative()
    if not isinstance(dp, Polynomial):
        raise ValueError("degenerate derivative")
    roots = np.roots(list(reversed(dp.coeffs)))
    ddp = dp.derivative()
    scale = max(1.0, max(abs(c) for c in dp.coeffs))
    out = []
    for r in roots:
        r = complex(r)
        for _ in range(50):
            f = dp(r)
            g = ddp(r) if isinstance(ddp, Polynomial) else ddp
            if f == 0 or g == 0:
                break
            step = f / g
            r -= step
            if abs(step) <= 1e-12 * max(1.0, abs(r)):
                break
        if abs(dp(r)) > tol * scale:
            raise RootFindingError(f"critical point of {p!r} did not converge (|p'|={abs(dp(r)):.3g})")
        out.append(r)
    return sorted(out, key=lambda c: (abs(c), c.real, c.imag))


def spherical_dist(z, w) -> float:
    """Distance for the density |dz|/(1+|z|^2); the whole sphere has diameter pi/2."""
    zi, wi = is_inf(z), is_inf(w)
    if zi and wi:
        return 0.0
    if zi or wi:
        a = complex(w if zi else z)
        return math.asin(min(1.0, 1.0 / math.sqrt(1.0 + abs(a) ** 2)))
    z, w = complex(z), complex(w)
    q = abs(z - w) / math.sqrt((1.0 + abs(z) ** 2) * (1.0 + abs(w) ** 2))
    return math.asin(min(1.0, q))


def to_sphere(z) -> np.ndarray:
    """Stereographic image on the unit sphere; infinite entries go to the north pole."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(z.shape + (3,))
    inf = ~np.isfinite(z)
    zz = np.where(inf, 0, z)
    s = 1.0 + np.abs(zz) ** 2
    out[..., 0] = 2 * zz.real / s
    out[..., 1] = 2 * zz.imag / s
    out[..., 2] = (np.abs(zz) ** 2 - 1) / s
    out[inf] = (0.0, 0.0, 1.0)
    return out


def chord_to_spherical(chord):
    """Unit-sphere chord length to spherical distance (half the great-circle angle)."""
    return np.arcsin(np.clip(np.asarray(chord) / 2.0, 0.0, 1.0))


def spherical_dist_array(z, w) -> np.ndarray:
    return chord_to_spherical(np.linalg.norm(to_sphere(z) - to_sphere(w), axis=-1))


def spherical_derivative(p, z) -> float:
    """|f'(z)| / (1 + |f(z)|^2); ``p`` may be a Polynomial or a constant."""
    if not isinstance(p, Polynomial):
        return 0.0
    fz = p(z)
    return abs(p.deriv(z)) / (1.0 + abs(fz) ** 2)
