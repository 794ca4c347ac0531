"""Exact-scalar plumbing: parsing, dyadics, root envelopes, piecewise
linear algebra, and the net flattener they feed."""

import math

import pytest
from gmpy2 import mpq
from hypothesis import given, strategies as st

from nestnet import (
    BackendMismatchError,
    ValidationError,
    as_exact,
    format_rational,
    parse_rational,
    pwl_eval,
    pwl_from_points,
    pwl_of_net,
    rat,
    to_float,
)
from nestnet.numerics import (
    EXACT,
    FLOAT,
    PiecewiseLinear1D,
    backend_of,
    common_backend,
    iroot_floor,
    isqrt_floor,
    largest_dyadic_leq,
    pow_lower,
    pow_upper,
    pwl_affine,
    pwl_max_on,
    pwl_prune,
    root_lower,
    root_upper,
)

rationals = st.fractions(min_value=-10**9, max_value=10**9,
                         max_denominator=10**9)


class TestRationalParsing:
    """Command-line rational syntax and its round trip."""

    def test_basic_forms(self):
        assert parse_rational("3/4") == mpq(3, 4)
        assert parse_rational("-7") == mpq(-7)
        assert parse_rational(" 22/7 ") == mpq(22, 7)

    @pytest.mark.parametrize("bad", ["0.5", "1e-3", "3.0/4", "", "a/b"])
    def test_decimals_rejected(self, bad):
        """Decimal or malformed text is refused, never rounded."""
        with pytest.raises(ValueError):
            parse_rational(bad)

    @given(rationals)
    def test_round_trip(self, q):
        v = mpq(q.numerator, q.denominator)
        assert parse_rational(format_rational(v)) == v


class TestBackends:
    """Scalar backend tagging keeps exact and float values apart."""

    def test_as_exact_accepts_ints(self):
        assert as_exact(5) == mpq(5)
        assert as_exact(mpq(1, 3)) == mpq(1, 3)

    @pytest.mark.parametrize("bad", [0.5, float("nan"), True])
    def test_as_exact_refuses(self, bad):
        with pytest.raises(BackendMismatchError):
            as_exact(bad)

    def test_backend_of(self):
        assert backend_of(mpq(1, 2)) == EXACT
        assert backend_of(0.5) == FLOAT

    def test_common_backend_rejects_mixture(self):
        with pytest.raises(BackendMismatchError):
            common_backend([mpq(1), 0.5])


class TestDyadicsAndRoots:
    """Dyadic snapping and one-sided rational root envelopes."""

    def test_largest_dyadic(self):
        assert largest_dyadic_leq(mpq(3, 7)) == mpq(1, 4)
        assert largest_dyadic_leq(mpq(1, 4)) == mpq(1, 4)
        assert largest_dyadic_leq(mpq(9)) == 8

    def test_largest_dyadic_needs_positive(self):
        with pytest.raises(ValueError):
            largest_dyadic_leq(mpq(0))

    @given(st.integers(1, 10**12), st.integers(2, 5))
    def test_root_envelopes_bracket(self, n, k):
        x = mpq(n, 997)
        lo, hi = root_lower(x, k), root_upper(x, k)
        assert lo**k <= x <= hi**k
        assert hi - lo <= mpq(1, 1 << 90)

    def test_roots_exact_on_perfect_powers(self):
        assert root_lower(mpq(9, 4), 2) == mpq(3, 2)
        assert root_upper(mpq(9, 4), 2) == mpq(3, 2)

    def test_pow_envelopes(self):
        x = mpq(5, 3)
        lo, hi = pow_lower(x, 2, 3), pow_upper(x, 2, 3)
        assert lo**3 <= x**2 <= hi**3
        assert pow_upper(x, 2, 1) == x**2

    def test_integer_roots(self):
        assert isqrt_floor(17) == 4
        assert iroot_floor(26, 3) == 2
        assert iroot_floor(27, 3) == 3


class TestPiecewiseLinear:
    """Exact piecewise-linear containers and queries."""

    def test_eval_interpolates_and_extends(self):
        f = pwl_from_points([(0, 0), (1, 2), (3, 0)],
                            left_slope=rat(-1), right_slope=rat(1))
        assert pwl_eval(f, rat(1, 2)) == 1
        assert pwl_eval(f, 2) == 1
        assert pwl_eval(f, -2) == 2
        assert pwl_eval(f, 5) == 2

    def test_breakpoints_must_increase(self):
        with pytest.raises(ValidationError):
            pwl_from_points([(0, 0), (0, 1)])

    def test_floats_rejected(self):
        with pytest.raises(ValidationError):
            PiecewiseLinear1D((mpq(0),), (0.5,), mpq(0), mpq(0))

    def test_max_on_hits_interior_breakpoint(self):
        f = pwl_from_points([(0, 0), (1, -5), (2, 0)])
        assert pwl_max_on(f, rat(0), rat(2)) == 5
        assert pwl_max_on(f, rat(3, 2), rat(2)) == rat(5, 2)

    def test_prune_drops_collinear_knots(self):
        f = pwl_from_points([(0, 0), (1, 1), (2, 2), (3, 0)],
                            left_slope=rat(1))
        g = pwl_prune(f)
        assert g.breakpoint_count == 2
        for t in range(-4, 8):
            x = rat(t, 2)
            assert pwl_eval(g, x) == pwl_eval(f, x)

    def test_affine_constructor(self):
        f = pwl_affine(rat(2), rat(-1))
        assert pwl_eval(f, rat(5, 2)) == 4

    def test_slopes_include_rays(self):
        f = pwl_from_points([(0, 0), (1, 1)], left_slope=rat(-3),
                            right_slope=rat(7))
        assert f.slopes() == (mpq(-3), mpq(1), mpq(7))


class TestFlatten:
    """Flattening a scalar net yields the same function it computes."""

    def test_relu_chain(self):
        from nestnet import RELU, AffineMap, NestNet

        net = NestNet(
            affines=(
                AffineMap(((mpq(1),), (mpq(-1),)), (mpq(0), mpq(1))),
                AffineMap(((mpq(1), mpq(1)),), (mpq(-1),)),
            ),
            activations=(((RELU, RELU)),),
        )
        f = pwl_of_net(net)
        from nestnet import eval_scalar

        for t in range(-8, 12):
            x = rat(t, 3)
            assert pwl_eval(f, x) == eval_scalar(net, x)

    def test_windowed_flatten_matches_on_window(self):
        from nestnet import eval_scalar, floor_base

        net = floor_base(2, rat(1, 8))
        f = pwl_of_net(net, interval=(rat(0), rat(3)))
        for t in range(0, 25):
            x = rat(t, 8)
            assert pwl_eval(f, x) == eval_scalar(net, x)


class TestFloatBridge:
    """to_float is the single sanctioned crossing to float."""

    def test_exact_to_float(self):
        assert to_float(mpq(1, 2)) == 0.5
        assert math.isclose(to_float(mpq(1, 3)), 1 / 3)
