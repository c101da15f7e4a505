import cmath
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from nonautojulia.core import (INF, Bounds, Polynomial, RootFindingError, SequenceSpec, SpecError,
                               composition_degree, compose_array, compose_eval, constant_seq,
                               counterexample_seq, critical_points, escape_radius, eval_poly, is_inf,
                               periodic_seq, random_bounded_seq, spherical_derivative, spherical_dist,
                               spherical_dist_array, thm72_times)

Z2 = Polynomial([0, 0, 1])
ZM3 = Polynomial([9, -6, 1])


def radial_spherical(a, b):
    # oracle: integrate |dz|/(1+|z|^2) along the ray from a to b (same argument)
    return quad(lambda t: 1.0 / (1.0 + t * t), a, b)[0]


class TestPolynomial:
    def test_eval_root(self):
        assert eval_poly(ZM3, 3) == 0

    def test_eval_square(self):
        assert eval_poly(Z2, 1 + 1j) == 2j

    def test_eval_z2_plus_2(self):
        assert eval_poly(Polynomial([2, 0, 1]), 0) == 2

    def test_eval_infinity(self):
        assert is_inf(eval_poly(Z2, INF))

    def test_derivative_value(self):
        p = Polynomial([1, 2, 3, 4])
        z = 0.3 - 0.7j
        assert p.deriv(z) == pytest.approx(2 + 6 * z + 12 * z * z)

    def test_array_eval(self):
        z = np.array([0, 1j, 2])
        np.testing.assert_allclose(Z2(z), z * z)

    def test_rejects_zero_leading(self):
        with pytest.raises(SpecError):
            Polynomial([1, 0])

    def test_rejects_constant(self):
        with pytest.raises(SpecError):
            Polynomial([1])

    def test_taylor_matches_expansion(self):
        p = Polynomial([1 - 1j, 2, -0.5j, 1])
        c = 0.4 + 0.2j
        t = p.taylor(c)
        h = 0.01 - 0.03j
        assert sum(a * h ** k for k, a in enumerate(t)) == pytest.approx(p(c + h))

    def test_json_roundtrip(self):
        p = Polynomial([1 - 2j, 0, 3])
        assert Polynomial.from_json(json.loads(json.dumps(p.to_json()))) == p


class TestBounds:
    def test_invalid(self):
        for args in ((1, 1, 0), (2, 0.5, 0), (2, 1, -1)):
            with pytest.raises(SpecError):
                Bounds(*args)

    def test_admits(self):
        b = Bounds(2, 1, 0.25)
        assert b.admits(Polynomial([0.2, 0, 1]))
        assert not b.admits(Polynomial([0.3, 0, 1]))
        assert not b.admits(Polynomial([0, 0, 0, 1]))


class TestEscapeRadius:
    @pytest.mark.parametrize("bounds,expected", [((2, 1, 0), 2.0), ((2, 1, 0.25), 2.5), ((2, 1, 9), 20.0)])
    def test_values(self, bounds, expected):
        assert escape_radius(Bounds(*bounds)) == expected

    @pytest.mark.parametrize("bounds", [Bounds(2, 1, 0), Bounds(2, 1, 0.25), Bounds(2, 1, 9), Bounds(2, 2, 1),
                                        Bounds(3, 1.5, 2)])
    def test_escape_guarantee(self, bounds):
        rng = np.random.default_rng(0)
        R = escape_radius(bounds)
        z = R * np.exp(2j * np.pi * rng.uniform(size=10_000))
        for _ in range(100):
            p = random_bounded_seq(bounds, rng, length=1).term(1)
            assert bounds.admits(p)
            assert (np.abs(p(z)) >= 2 * np.abs(z) - 1e-9).all()

    def test_extreme_coefficients(self):
        # worst case for the bound: all lower coefficients at modulus M pointing against z^d
        b = Bounds(2, 1, 9)
        R = escape_radius(b)
        z = R * np.exp(2j * np.pi * np.linspace(0, 1, 4096, endpoint=False))
        for phase in np.linspace(0, 2 * np.pi, 16, endpoint=False):
            p = Polynomial([9 * cmath.exp(1j * phase), -9, 1])
            assert (np.abs(p(z)) >= 2 * np.abs(z)).all()


class TestSequences:
    def test_explicit_terms(self):
        s = SequenceSpec("explicit-prefix-with-periodic-tail", Bounds(2, 1, 9), (Z2,), (ZM3, Z2))
        assert [s.term(m) for m in range(1, 6)] == [Z2, ZM3, Z2, ZM3, Z2]

    def test_empty_tail_rejected(self):
        with pytest.raises(SpecError):
            SequenceSpec("explicit-prefix-with-periodic-tail", Bounds(2, 1, 0), (Z2,), ())

    def test_out_of_bounds_rejected(self):
        with pytest.raises(SpecError):
            constant_seq(ZM3, Bounds(2, 1, 1))

    def test_counterexample_n1(self):
        s = counterexample_seq(1)
        assert [m for m in range(1, 40) if s.term(m) == ZM3] == [2]

    def test_counterexample_limit(self):
        s = counterexample_seq(None)
        assert [m for m in range(1, 40) if s.term(m) == ZM3] == [2, 5, 9, 14, 20, 27, 35]
        assert s.term(5) == ZM3

    def test_counterexample_bounds(self):
        b = counterexample_seq(3).bounds
        assert (b.d, b.K, b.M) == (2, 1.0, 9.0)

    def test_thm72_times(self):
        assert sorted(thm72_times(None, 20)) == [2, 5, 9, 14, 20]
        assert sorted(thm72_times(2, 100)) == [2, 5]

    def test_json_roundtrip(self):
        s = periodic_seq([Polynomial([0.2, 0, 1]), Polynomial([-0.1, 0, 1])], Bounds(2, 1, 0.25))
        back = SequenceSpec.from_json(json.loads(json.dumps(s.to_json())))
        assert back == s
        assert SequenceSpec.from_json({"kind": "builtin-thm72", "n": 2}) == counterexample_seq(2)
        assert SequenceSpec.from_json({"kind": "builtin-thm72-limit"}) == counterexample_seq(None)

    @pytest.mark.parametrize("data", [{}, {"kind": "nope"}, {"kind": "builtin-thm72", "n": 0},
                                      {"kind": "explicit-prefix-with-periodic-tail", "bounds": {"d": 2}},
                                      {"kind": "explicit-prefix-with-periodic-tail",
                                       "bounds": {"d": 2, "K": 1, "M": 0}}])
    def test_bad_json(self, data):
        with pytest.raises(SpecError):
            SequenceSpec.from_json(data)

    def test_load_reports_line(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"kind": 1,\n "x" 2}')
        with pytest.raises(SpecError, match="line 2"):
            SequenceSpec.load(p)

    def test_random_within_bounds(self):
        b = Bounds(3, 2, 1)
        s = random_bounded_seq(b, np.random.default_rng(1))
        assert all(b.admits(s.term(m)) for m in range(1, 100))


class TestComposition:
    def test_two_steps(self):
        s = SequenceSpec("explicit-prefix-with-periodic-tail", Bounds(2, 1, 9), (Z2, ZM3), (Z2,))
        assert compose_eval(s, 0, 2, 2) == 1

    def test_identity(self):
        s = counterexample_seq(None)
        assert compose_eval(s, 4, 4, 0.3 + 0.1j) == 0.3 + 0.1j

    def test_degree(self):
        s = counterexample_seq(None)
        assert composition_degree(s, 0, 2) == 4

    def test_overflow_is_infinite(self):
        assert is_inf(compose_eval(constant_seq(Z2), 0, 40, 3.0))

    def test_bad_range(self):
        with pytest.raises(ValueError):
            compose_eval(constant_seq(Z2), 3, 2, 0)

    def test_array_agrees(self):
        s = counterexample_seq(None)
        z = np.array([0.1 + 0.2j, 1.1, -0.9j])
        np.testing.assert_allclose(compose_array(s, 1, 6, z), [compose_eval(s, 1, 6, w) for w in z])

    @pytest.mark.parametrize("m,n", [(0, 1), (0, 2), (1, 3), (0, 3)])
    def test_degree_via_growth(self, m, n):
        s = random_bounded_seq(Bounds(3, 1.5, 1), np.random.default_rng(7))
        z = 1e6 * cmath.exp(0.3j)
        D = composition_degree(s, m, n)
        # log|Q| / log|z| = D + O(log K / log|z|); at |z| = 1e6 this is within 0.01 only for D log K small
        est = math.log(abs(compose_eval(s, m, n, z))) / math.log(abs(z))
        lead = 0.0
        for k in range(m + 1, n + 1):
            lead = lead * s.term(k).degree + math.log(abs(s.term(k).leading))
        assert est - lead / math.log(abs(z)) == pytest.approx(D, abs=0.01)


class TestCriticalPoints:
    def test_quadratic(self):
        assert critical_points(Polynomial([0.3, 0, 1])) == [0]

    def test_shifted(self):
        assert critical_points(ZM3) == [pytest.approx(3)]

    def test_cubic(self):
        cps = critical_points(Polynomial([0, -3, 0, 1]))
        assert sorted(c.real for c in cps) == [pytest.approx(-1), pytest.approx(1)]

    def test_multiplicity(self):
        # p' = 4 (z - 1)^3
        p = Polynomial([0, -4, 6, -4, 1])
        cps = critical_points(p, tol=1e-6)
        assert len(cps) == 3

    def test_residual(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = random_bounded_seq(Bounds(8, 2, 3), rng, length=1).term(1)
            dp = p.derivative()
            for c in critical_points(p):
                assert abs(dp(c)) <= 1e-9 * max(1, max(abs(a) for a in dp.coeffs))

    def test_degree_one(self):
        with pytest.raises(ValueError):
            critical_points(Polynomial([0, 1]))

    def test_error_type(self):
        assert issubclass(RootFindingError, Exception)


class TestSpherical:
    def test_zero_infinity(self):
        assert spherical_dist(0, INF) == pytest.approx(math.pi / 2)

    def test_identity(self):
        assert spherical_dist(1 + 2j, 1 + 2j) == 0

    def test_zero_one(self):
        assert spherical_dist(0, 1) == pytest.approx(math.pi / 4)
        assert spherical_dist(0, 1) == pytest.approx(radial_spherical(0, 1), abs=1e-12)

    @pytest.mark.parametrize("a,b", [(0.0, 0.5), (0.3, 2.0), (1.0, 1.1), (2.0, 50.0)])
    def test_radial_oracle(self, a, b):
        assert spherical_dist(a, b) == pytest.approx(radial_spherical(a, b), abs=1e-10)

    def test_infinity_limit(self):
        assert spherical_dist(3, INF) == pytest.approx(spherical_dist(3, 1e12), abs=1e-10)
        assert spherical_dist(INF, INF) == 0

    def test_array_agrees(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=50) + 1j * rng.normal(size=50)
        w = 3 * (rng.normal(size=50) + 1j * rng.normal(size=50))
        np.testing.assert_allclose(spherical_dist_array(z, w), [spherical_dist(a, b) for a, b in zip(z, w)],
                                   atol=1e-12)

    def test_metric_axioms(self):
        rng = np.random.default_rng(1)
        n = 100_000
        pts = [np.exp(rng.normal(size=n) * 2) * np.exp(2j * np.pi * rng.uniform(size=n)) for _ in range(3)]
        x, y, z = pts
        dxy = spherical_dist_array(x, y)
        assert np.array_equal(dxy, spherical_dist_array(y, x))
        assert (dxy <= spherical_dist_array(x, z) + spherical_dist_array(z, y) + 1e-12).all()

    @given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
           st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
    @settings(max_examples=200, deadline=None)
    def test_symmetric_bounded(self, z, w):
        d = spherical_dist(z, w)
        assert d == spherical_dist(w, z)
        assert 0 <= d <= math.pi / 2


class TestSphericalDerivative:
    def test_identity(self):
        assert spherical_derivative(Polynomial([0, 1]), 0) == 1

    def test_constant(self):
        assert spherical_derivative(3.0, 1.5) == 0

    def test_square_at_one(self):
        assert spherical_derivative(Z2, 1) == pytest.approx(1.0)

    def test_finite_difference(self):
        rng = np.random.default_rng(5)
        h = 1e-6
        for _ in range(40):
            p = random_bounded_seq(Bounds(4, 1.5, 1), rng, length=1).term(1)
            z = complex(*rng.uniform(-1.4, 1.4, size=2))
            u = cmath.exp(2j * math.pi * rng.uniform())
            fd = spherical_dist(p(z + h * u), p(z - h * u)) / (2 * h)
            assert fd == pytest.approx(spherical_derivative(p, z), abs=1e-5)
