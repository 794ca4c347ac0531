"""Builders: every constructed net is checked against the exact values
it promises on its stated input set, plus parameter-count identities."""

import random

import pytest
from gmpy2 import mpq

from nestnet import (
    GapConditionError,
    TriflingRegion,
    ValidationError,
    bit_extract_net,
    bit_pair_net,
    build_full,
    build_interior,
    cpl_to_net,
    eval_scalar,
    floor_base,
    floor_nested,
    g_builder,
    height,
    indexed_bit_sum_net,
    max_pair_net,
    mid_net,
    min_pair_net,
    net_eval,
    param_count,
    phi1_grid_net,
    point_fit_net,
    psi1_map,
    pwl_eval,
    pwl_from_points,
    rat,
    step_function_net,
    target_abs_shift,
    target_const,
    target_hinge2,
)
from nestnet.constructive import bit_extract_base

Q = mpq


def margin(n: int, r: int) -> int:
    """Product of the per-level gap amplifications."""
    return 1 << sum(n**i for i in range(1, r + 1))


class TestSelectionGadgets:
    """min / max / exact three-way median."""

    def test_min_max(self):
        vals = [rat(-2), rat(0), rat(3), rat(-1, 3)]
        for a in vals:
            for b in vals:
                assert net_eval(min_pair_net(), (a, b))[0] == min(a, b)
                assert net_eval(max_pair_net(), (a, b))[0] == max(a, b)

    def test_mid_is_median(self):
        vals = [rat(-3), rat(0), rat(1), rat(7, 3)]
        m = mid_net()
        for a in vals:
            for b in vals:
                for c in vals:
                    assert net_eval(m, (a, b, c))[0] == sorted((a, b, c))[1]

    def test_mid_param_count(self):
        assert param_count(mid_net()) == 42


class TestCplRealization:
    """A continuous piecewise-linear profile becomes a width-limited net."""

    def test_matches_profile_everywhere(self):
        f = pwl_from_points([(0, 0), (rat(1, 3), 1), (1, rat(1, 2))],
                            left_slope=rat(2), right_slope=rat(-1))
        net = cpl_to_net(f)
        for t in range(-6, 16):
            x = rat(t, 7)
            assert eval_scalar(net, x) == pwl_eval(f, x)


class TestFloorBase:
    """Single-level floor: exact on [l, l+1-delta], 20n-7 parameters."""

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_exact_values(self, n):
        delta = rat(1, 8)
        net = floor_base(n, delta)
        for level in range(1 << n):
            for t in (rat(0), rat(1, 2), 1 - delta):
                assert eval_scalar(net, level + t) == level

    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_param_identity(self, n):
        assert param_count(floor_base(n, rat(1, 16))) == 20 * n - 7

    def test_delta_validated(self):
        with pytest.raises(ValidationError):
            floor_base(2, rat(3, 2))


class TestFloorNested:
    """Height-r floor: exact wherever the amplified margin leaves room."""

    @pytest.mark.parametrize("n,r", [(1, 2), (2, 2), (3, 2), (2, 3)])
    def test_exact_values(self, n, r):
        C = margin(n, r)
        delta = rat(1, 2 * C)
        net = floor_nested(n, r, delta)
        assert height(net) == r
        rng = random.Random(7)
        for _ in range(25):
            level = rng.randrange(1 << n**r)
            t = Q(rng.randrange(0, 65), 128)  # stays below 1 - C*delta
            assert eval_scalar(net, level + t) == level

    def test_margin_edge_is_exact(self):
        n, r = 2, 2
        C = margin(n, r)
        delta = rat(1, 4 * C)
        net = floor_nested(n, r, delta)
        x = 5 + 1 - C * delta  # right edge of the good interval
        assert eval_scalar(net, x) == 5

    def test_budget(self):
        for n, r in ((2, 2), (3, 2)):
            net = floor_nested(n, r, rat(1, 1 << 30))
            assert param_count(net) <= (12 * r + 68) * n

    def test_delta_cap_validated(self):
        with pytest.raises(ValidationError):
            floor_nested(2, 2, rat(1, 64))  # C(2,2)*delta = 1


class TestStepFunction:
    """Clamped staircase: floor below J, the constant J on [J, J+2]."""

    @pytest.mark.parametrize("n,r,J", [(2, 1, 3), (2, 2, 11), (3, 1, 8)])
    def test_exact_values(self, n, r, J):
        delta = rat(1, 8)
        net = step_function_net(n, r, delta, J)
        for j in range(J):
            for t in (rat(0), rat(1, 2), 1 - delta):
                assert eval_scalar(net, j + t) == j
        for t in (rat(0), rat(1), rat(3, 2), rat(2)):
            assert eval_scalar(net, J + t) == J

    def test_budget(self):
        for n, r, J in ((2, 1, 3), (2, 2, 11), (3, 1, 8)):
            net = step_function_net(n, r, rat(1, 8), J)
            assert param_count(net) <= 36 * (r + 7) * n

    def test_step_count_capped(self):
        with pytest.raises(ValidationError):
            step_function_net(2, 1, rat(1, 8), 5)  # 2^(n^r) = 4 < 5


class TestGridQuantizer:
    """phi1(x) = k on the k-th shrunken cell, K-1 out to 1 + 1/K."""

    @pytest.mark.parametrize("K,n,s", [(4, 2, 1), (5, 2, 2)])
    def test_cell_labels(self, K, n, s):
        delta = rat(1, 64 * K)
        net = phi1_grid_net(K, delta, n, s)
        for k in range(K):
            left = rat(k, K)
            right = rat(k + 1, K) - delta if k < K - 1 else rat(1)
            for x in (left, (left + right) / 2, right):
                assert eval_scalar(net, x) == k
        assert eval_scalar(net, 1 + rat(1, K)) == K - 1

    def test_single_cell_collapses(self):
        net = phi1_grid_net(1, rat(1, 4), 2, 1)
        assert eval_scalar(net, rat(1, 3)) == 0
        assert param_count(net) == 2

    def test_gap_validated(self):
        with pytest.raises(ValidationError):
            phi1_grid_net(4, rat(1, 2), 2, 1)


class TestBitExtraction:
    """Prefix sums of binary expansions read by nets."""

    def test_pair_net_values_and_params(self):
        n = 3
        net = bit_pair_net(n)
        for packed in range(1 << n):
            bits = [(packed >> (n - 1 - i)) & 1 for i in range(n)]
            x = sum(Q(bits[i], 1 << (i + 1)) for i in range(n))
            for k in range(n + 1):
                assert net_eval(net, (x, rat(k)))[0] == sum(bits[:k])
        assert param_count(net) == 82 * n - 15

    def test_base_extractor(self):
        n = 3
        net = bit_extract_base(n)
        for packed in range(1 << n):
            bits = [(packed >> (n - 1 - i)) & 1 for i in range(n)]
            x = sum(Q(bits[i], 1 << (i + 1)) for i in range(n))
            for p in range(n + 1):
                assert eval_scalar(net, p + x) == sum(bits[:p])

    def test_nested_extractor_sampled(self):
        n, s = 2, 2
        m = n**s
        net = bit_extract_net(n, s)
        assert height(net) == s
        rng = random.Random(3)
        for _ in range(40):
            bits = [rng.randint(0, 1) for _ in range(m)]
            x = sum(Q(bits[i], 1 << (i + 1)) for i in range(m))
            p = rng.randint(0, m)
            assert eval_scalar(net, p + x) == sum(bits[:p])

    def test_extractor_is_cached(self):
        assert bit_extract_net(2, 2) is bit_extract_net(2, 2)

    def test_indexed_sum(self):
        theta = [[1, 0, 1, 1], [0, 1, 1, 0]]
        net = indexed_bit_sum_net(theta, 2, 2)
        for i in range(2):
            for k in range(4):
                want = sum(theta[i][: k + 1])
                assert eval_scalar(net, rat(4 * i + k)) == want

    def test_indexed_sum_validates_matrix(self):
        with pytest.raises(ValidationError):
            indexed_bit_sum_net([[1, 0], [0, 1]], 2, 2)  # rows must be n^s
        with pytest.raises(ValidationError):
            indexed_bit_sum_net([[2, 0, 0, 0], [0, 0, 0, 0]], 2, 2)


class TestPointFit:
    """Quantized interpolation with a two-sided clamp."""

    def test_fit_values_and_clamp(self):
        ys = [Q(1, 3), Q(1, 2), Q(1, 4), Q(1, 4), Q(3, 8), Q(5, 8),
              Q(7, 8), Q(1)]
        eps = Q(1, 4)
        net = point_fit_net(ys, eps, 2, 2)
        for j, y in enumerate(ys):
            ratio = y / eps
            want = (ratio.numerator // ratio.denominator) * eps
            assert eval_scalar(net, rat(j)) == want
            assert abs(eval_scalar(net, rat(j)) - y) <= eps
        top = max(ys)
        for t in range(-8, 25):
            v = eval_scalar(net, rat(t, 2))
            assert 0 <= v <= top

    def test_gap_condition_enforced(self):
        with pytest.raises(GapConditionError):
            point_fit_net([Q(0), Q(1)], Q(1, 4), 2, 1)

    def test_count_capped_by_grid(self):
        with pytest.raises(ValidationError):
            point_fit_net([Q(0)] * 5, Q(1, 4), 2, 1)  # 5 > n^(s+1) = 4

    def test_negative_values_rejected(self):
        with pytest.raises(ValidationError):
            point_fit_net([Q(0), Q(-1, 8)], Q(1, 4), 2, 1)

    def test_budget(self):
        ys = [Q(j, 16) for j in range(8)]
        net = point_fit_net(ys, Q(1, 16), 2, 2)
        assert param_count(net) <= 350 * (2 + 7) ** 2 * (2 + 1)


class TestTriflingRegion:
    """Open bands just below each interior grid line."""

    def test_band_membership(self):
        reg = TriflingRegion(1, 4, rat(1, 64))
        assert not reg.contains((rat(1, 4),))       # grid line itself
        assert reg.contains((rat(1, 4) - rat(1, 300),))
        assert not reg.contains((rat(1, 4) - rat(1, 64),))  # left edge closed
        assert not reg.contains((rat(1, 8),))
        assert not reg.contains((rat(0),))          # j = 0 has no band

    def test_any_coordinate_triggers(self):
        reg = TriflingRegion(2, 4, rat(1, 64))
        inside = rat(1, 2) - rat(1, 300)
        assert reg.contains((rat(1, 8), inside))
        assert not reg.contains((rat(1, 8), rat(1, 8)))

    def test_single_cell_has_no_bands(self):
        assert not TriflingRegion(1, 1, rat(1, 4)).contains((rat(1, 2),))


class TestLabelFlattening:
    """The grid-label embedding and its fitted profile."""

    def test_psi1_is_injective_on_labels(self):
        d, K = 2, 3
        aff = psi1_map(d, K)
        images = set()
        from itertools import product

        for beta in product(range(K), repeat=d):
            vec = tuple(rat(b) for b in beta)
            val = sum(w * v for w, v in zip(aff.weights[0], vec))
            images.add(val)
        assert len(images) == K**d

    def test_g_hits_anchor_values(self):
        K, d = 2, 1
        values = {(0,): rat(1, 4), (1,): rat(3, 4), (2,): rat(1, 2)}
        prof = g_builder(values, K, d)
        T = 2 * K**d
        assert pwl_eval(prof, rat(0)) == rat(1, 4)
        assert pwl_eval(prof, rat(1, T)) == rat(3, 4)
        assert pwl_eval(prof, rat(1)) == rat(1, 2)


class TestInteriorBuild:
    """Grid-quantize-fit assembly: anatomy fields and error on a probe grid."""

    def test_fields_and_error(self):
        f = target_abs_shift(rat(1, 3))
        build = build_interior(f, 3, 1)
        assert build.K == 9 and build.dim == 1
        assert 0 < build.delta <= rat(1, 1 << 25)
        worst = max(
            abs(eval_scalar(build.net, x) - f((x,)))
            for t in range(101)
            for x in (rat(t, 100),)
            if not build.trifling.contains((x,))
        )
        assert worst <= 6 * rat(1, 9)

    def test_constant_target_is_exact(self):
        c = target_const(rat(2, 7))
        build = build_interior(c, 2, 1)
        for t in range(11):
            assert eval_scalar(build.net, rat(t, 10)) == rat(2, 7)

    def test_dim2_grid_size(self):
        g = target_hinge2()
        build = build_interior(g, 2, 1)
        assert build.K == 2 and build.dim == 2  # floor(2^(2/2))


class TestFullBuild:
    """Median wrapping for the sup norm; pass-through for finite p."""

    def test_sup_norm_chain_covers_bands(self):
        f = target_abs_shift(rat(1, 3))
        build = build_full(f, 3, 1, "inf")
        assert build.p_value is None
        worst = max(
            abs(eval_scalar(build.net, rat(t, 100)) - f((rat(t, 100),)))
            for t in range(101)
        )
        assert worst <= 7 * rat(1, 9)

    def test_finite_p_reuses_interior(self):
        f = target_abs_shift(rat(1, 3))
        build = build_full(f, 3, 1, 2)
        assert build.net is build.interior.net
        assert build.p_value == 2

    def test_norm_order_validated(self):
        f = target_abs_shift(rat(1, 3))
        with pytest.raises(ValidationError):
            build_full(f, 3, 1, rat(1, 2))
        with pytest.raises(ValidationError):
            build_full(f, 3, 1, "0.5")
        assert build_full(f, 3, 1, "sup").p_value is None  # alias for inf
