import math

import numpy as np
import pytest
from scipy.integrate import quad

from nonautojulia.core import Polynomial
from nonautojulia.dynamics import GridSpec, RegionMask, disc_mask
from nonautojulia.geometry import (Curve, DegeneratePoint, DistBounds, DomainError, NotConvergent,
                                   NotDoublyConnected, annulus_modulus, annulus_potential,
                                   annulus_qh_constant, boundary_distance, caratheodory_bound_disc,
                                   caratheodory_limit, equator, hausdorff_cells, hyperbolic_dist_bounds,
                                   lipschitz_profile, quasihyperbolic_field, round_annulus_hyperbolic_dist,
                                   separates)

DISC_GRID = GridSpec(0j, 1.05, 512)


@pytest.fixture(scope="module")
def disc():
    return disc_mask(DISC_GRID, 0j, 1.0, basepoint=0j)


def ring(grid, r, R, basepoint=None):
    return RegionMask.from_predicate(grid, lambda z: (np.abs(z) > r) & (np.abs(z) < R), basepoint=basepoint)


def exact_disc(r):
    # curvature -1: density 2|dz|/(1-|z|^2)
    return math.log((1 + r) / (1 - r))


class TestHyperbolicBounds:
    def test_same_point(self, disc):
        assert hyperbolic_dist_bounds(disc, 0.2, 0.2) == DistBounds(0.0, 0.0)

    @pytest.mark.parametrize("r", [0.1, 0.3, 0.5, 0.7, 0.9])
    def test_disc_bracket(self, disc, r):
        b = hyperbolic_dist_bounds(disc, 0, r)
        assert b.contains(exact_disc(r))
        assert b.upper == 4 * b.lower

    def test_quasihyperbolic_oracle(self, disc):
        # along a radius the quasihyperbolic distance is -log(1 - r)
        b = hyperbolic_dist_bounds(disc, 0, 0.5)
        assert b.upper / 2 == pytest.approx(math.log(2), rel=0.02)

    def test_rotation(self, disc):
        a = hyperbolic_dist_bounds(disc, 0, 0.6)
        b = hyperbolic_dist_bounds(disc, 0, 0.6j)
        assert a.upper == pytest.approx(b.upper, rel=1e-3)

    def test_outside(self, disc):
        with pytest.raises(DomainError):
            hyperbolic_dist_bounds(disc, 0, 1.02)

    def test_boundary_cell(self, disc):
        with pytest.raises(DomainError):
            hyperbolic_dist_bounds(disc, 0, 0.9995)

    def test_boundary_distance(self, disc):
        d = boundary_distance(disc)
        i = DISC_GRID.index_of(0.5)
        assert d[i] == pytest.approx(0.5, abs=DISC_GRID.cell)

    def test_field_monotone_along_radius(self, disc):
        q = quasihyperbolic_field(disc, 0)
        vals = [q[DISC_GRID.index_of(r)] for r in (0.1, 0.4, 0.7, 0.95)]
        assert vals == sorted(vals)


class TestModulus:
    def test_round(self):
        g = GridSpec(0j, 2.2, 1024)
        assert annulus_modulus(ring(g, 1, 2)) == pytest.approx(math.log(2) / (2 * math.pi), rel=0.02)

    def test_unit_modulus(self):
        R = math.exp(2 * math.pi)
        g = GridSpec(0j, 1.05 * R, 1024)
        assert annulus_modulus(ring(g, 1, R)) == pytest.approx(1.0, rel=0.05)

    def test_inversion(self):
        g1 = GridSpec(0j, 2.2, 1024)
        g2 = GridSpec(0j, 1.1, 1024)
        m1 = annulus_modulus(ring(g1, 1, 2))
        m2 = annulus_modulus(ring(g2, 0.5, 1))
        assert m2 == pytest.approx(m1, rel=0.02)

    def test_off_center(self):
        # conformal invariance under a Mobius map fixing the unit disc
        g = GridSpec(0j, 1.05, 1024)
        a = 0.3

        def pred(z):
            w = (z - a) / (1 - a * z)
            return (np.abs(z) < 1) & (np.abs(w) > 0.3)
        m = annulus_modulus(RegionMask.from_predicate(g, pred))
        assert m == pytest.approx(math.log(1 / 0.3) / (2 * math.pi), rel=0.03)

    def test_disc_not_annulus(self):
        with pytest.raises(NotDoublyConnected) as exc:
            annulus_modulus(disc_mask(GridSpec(0j, 2.0, 128), 0j, 1.0))
        assert exc.value.count == 1

    def test_two_holes(self):
        g = GridSpec(0j, 2.0, 256)
        m = RegionMask.from_predicate(g, lambda z: (np.abs(z) < 1.5) & (np.abs(z - 0.7) > 0.3)
                                      & (np.abs(z + 0.7) > 0.3))
        with pytest.raises(NotDoublyConnected) as exc:
            annulus_modulus(m)
        assert exc.value.count == 3


class TestEquator:
    def test_round(self):
        g = GridSpec(0j, 4.4, 1024)
        eq = equator(ring(g, 1, 4))
        assert np.abs(np.abs(eq.points) - 2).max() <= 2 * g.cell
        assert eq.closed and eq.basepoint == eq.points[0]

    def test_conjugation_symmetric(self):
        g = GridSpec(0j, 2.2, 512)
        m = RegionMask.from_predicate(g, lambda z: (np.abs(z) < 2) & (np.abs(z - 0.5) > 0.5))
        eq = equator(m)
        d = np.abs(np.conj(eq.points)[:, None] - eq.points[None, :]).min(axis=1)
        assert d.max() <= g.cell

    def test_separates(self):
        g = GridSpec(0j, 2.2, 512)
        ann = annulus_potential(RegionMask.from_predicate(g, lambda z: (np.abs(z) < 2) & (np.abs(z - 0.5) > 0.5)))
        eq = equator(ann)
        assert separates(eq, ann.inner, ann.outer, g)
        assert abs(eq.winding_number(0.5)) == 1
        assert eq.winding_number(5) == 0

    def test_consecutive_points_close(self):
        g = GridSpec(0j, 4.4, 512)
        eq = equator(ring(g, 1, 4))
        p = np.append(eq.points, eq.points[:1])
        assert np.abs(np.diff(p)).max() <= 2 * g.cell

    def test_csv(self, tmp_path):
        c = Curve(np.array([0, 1, 1j]), True, 0)
        path = tmp_path / "c.csv"
        c.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# closed=true")
        assert lines[1] == "re,im" and len(lines) == 5

    def test_enclosed(self):
        g = GridSpec(0j, 2.0, 128)
        t = np.exp(2j * np.pi * np.arange(400) / 400)
        inside = Curve(t, True).enclosed(g)
        assert inside.sum() * g.cell ** 2 == pytest.approx(math.pi, rel=0.03)


class TestCaratheodoryBound:
    def test_unit_disc(self, disc):
        assert caratheodory_bound_disc(disc) == pytest.approx(abs(math.log(math.pi ** 2 / 8)), abs=0.01)

    def test_rotation_invariant(self):
        g = GridSpec(0j, 2.0, 256)
        ell = RegionMask.from_predicate(g, lambda z: (z.real / 1.5) ** 2 + (z.imag / 0.7) ** 2 < 1, basepoint=0j)
        rot = RegionMask(g, np.rot90(ell.bits).copy(), False, 0j)
        assert caratheodory_bound_disc(rot) == pytest.approx(caratheodory_bound_disc(ell), abs=1e-12)

    def test_shrinking_discs_diverge(self):
        g = GridSpec(0j, 1.05, 512)
        vals = [caratheodory_bound_disc(disc_mask(g, 0j, 1.0 / n, basepoint=0j)) for n in (1, 2, 4, 8, 16, 32)]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        # oracle: |log(arctan(1/n) * pi/2)| with the complement diameter pi/2
        assert vals[-1] == pytest.approx(abs(math.log(math.atan(1 / 32) * math.pi / 2)), abs=0.1)

    def test_empty_complement(self):
        g = GridSpec(0j, 1.0, 64)
        with pytest.raises(DomainError):
            caratheodory_bound_disc(RegionMask(g, np.ones(g.shape, dtype=bool), True, 0j))


class TestCaratheodoryLimit:
    def test_constant(self, disc):
        lim = caratheodory_limit([disc] * 10)
        assert np.array_equal(lim.bits, disc.bits) and lim.basepoint == 0

    def test_annulus_family(self, disc):
        fam = [RegionMask.from_predicate(DISC_GRID, lambda z, n=n: (np.abs(z) < 1)
                                         & (np.abs(z - (1 - 2 / n)) > 1 / n), basepoint=0j) for n in range(4, 65)]
        lim = caratheodory_limit(fam)
        assert (lim.bits ^ disc.bits).sum() <= 0.01 * disc.bits.sum()

    def test_shrinking(self):
        fam = [disc_mask(DISC_GRID, 0j, 1.0 / n, basepoint=0j) for n in range(1, 65)]
        out = caratheodory_limit(fam)
        assert isinstance(out, DegeneratePoint) and out.point == 0

    def test_basepoints_diverge(self, disc):
        fam = [disc.with_basepoint(0.5 * (k % 2)) for k in range(16)]
        with pytest.raises(DomainError):
            caratheodory_limit(fam)

    def test_oscillation(self, disc):
        holed = RegionMask.from_predicate(DISC_GRID, lambda z: (np.abs(z) < 1) & (np.abs(z - 0.5) > 0.3),
                                          basepoint=0j)
        with pytest.raises(NotConvergent, match="at this resolution"):
            caratheodory_limit([disc, holed] * 8)

    def test_hausdorff_cells(self):
        a = np.zeros((20, 20), dtype=bool)
        b = np.zeros((20, 20), dtype=bool)
        a[5, 5] = True
        b[5, 8] = True
        assert hausdorff_cells(a, b) == 3
        assert hausdorff_cells(a, a) == 0


class TestLipschitz:
    def test_identity(self, disc):
        assert lipschitz_profile(Polynomial([0, 1]), disc, 1.0, 200) == pytest.approx(1.0)

    def test_constant(self, disc):
        assert lipschitz_profile(2.0, disc, 1.0, 50) == 0

    def test_square(self, disc):
        vals = [lipschitz_profile(Polynomial([0, 0, 1]), disc, 1.0, 400, np.random.default_rng(s))
                for s in range(4)]
        assert max(vals) <= 2
        assert max(vals) <= 1.05 * min(vals)
        # oracle: 2|z|/(1+|z|^4) increases on [0, 1); the sampled region reaches hyperbolic radius ~1
        r = math.tanh(0.25)
        assert min(vals) >= 2 * r / (1 + r ** 4) * 0.9

    def test_bad_radius(self, disc):
        with pytest.raises(ValueError):
            lipschitz_profile(Polynomial([0, 1]), disc, 0.0, 10)


class TestRoundAnnulus:
    def test_radial_oracle(self):
        # density in the strip |Re x| < pi/2 is pi/W sec(...) along the real axis
        r, R = 1.0, 3.0
        W = math.log(R / r)
        x0 = 0.5 * math.log(r * R)

        def dens(t):
            x = math.pi * (math.log(t) - x0) / W
            return (math.pi / W) / math.cos(x) / t
        a, b = 1.3, 2.6
        assert round_annulus_hyperbolic_dist(r, R, a, b) == pytest.approx(quad(dens, a, b)[0], rel=1e-9)

    def test_symmetric(self):
        d1 = round_annulus_hyperbolic_dist(1, 2, 1.4, 1.5j)
        d2 = round_annulus_hyperbolic_dist(1, 2, 1.5j, 1.4)
        assert d1 == pytest.approx(d2)

    @pytest.mark.parametrize("R", [math.exp(0.2 * math.pi), math.exp(math.pi), math.exp(2 * math.pi * 0.5)])
    def test_bracket_consistency(self, R):
        # modulus in [0.1, 1]: the upper weight 2/delta always dominates; c is calibrated
        g = GridSpec(0j, 1.1 * R, 512)
        c, upper = annulus_qh_constant(1.0, R, g, pairs=6, rng=np.random.default_rng(0))
        assert upper <= 1.0
        assert 0 < c <= 2
