"""Builders emitting exact ReLU nets: floors, steps, bit sums, point fits,
and the grid-quantize-fit approximator they assemble into.

Everything here follows one discipline: a builder's output is a *contract*
("equals floor(x) on these intervals", "equals a_j eps at these integers")
that holds with exact rational equality, never approximately.  The key
trick throughout is the pair of threshold ramps

    (sigma(u - 1 + dt) - sigma(u - 1)) / dt,

which equals the indicator 1{u >= 1} whenever u keeps a margin dt away
from the open gap (1 - dt, 1).  Stacked with the right rescalings this
reads off binary digits (floor_base), base-m digits through a registered
sub-net (floor_nested), gated bit prefix sums (bit_pair_net and its
nested growth), and finally arbitrary nonnegative sequences quantized to
a tolerance grid (point_fit_net).  The approximator samples a target on
a K-grid, flattens the samples into one well-spaced sequence (psi1_map /
g_builder), point-fits that sequence, and, for sup-norm use, wraps the
result in per-axis median votes so that grid gaps cannot leak through.

Scale choices (the gap width delta) are always the largest admissible
dyadic rational, so every weight stays exactly representable and weight
denominators stay as small as the contracts allow.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from gmpy2 import mpq

from .core_ir import (
    IDENTITY,
    RELU,
    AffineMap,
    NestNet,
    SubNet,
    affine_net,
    compose,
    parallel,
)
from .errors import GapConditionError, ResourceLimitError, ValidationError
from .limits import DEFAULT_LIMITS, Limits
from .numerics import (
    ONE,
    ZERO,
    PiecewiseLinear1D,
    as_exact,
    iroot_floor,
    largest_dyadic_leq,
    parse_rational,
    pow_lower,
    pow_upper,
    pwl_from_points,
    pwl_max_on,
    pwl_of_net,
    pwl_prune,
    rat,
    root_upper,
)
from .serialize import register_id
from .targets import TargetFunction, modulus_spot_check

# ---------------------------------------------------------------------------
# small structural helpers
# ---------------------------------------------------------------------------


def _aff(rows, bias) -> AffineMap:
    return AffineMap(tuple(tuple(rat(w) for w in row) for row in rows),
                     tuple(rat(b) for b in bias))


def _relu1() -> NestNet:
    """The scalar net x -> sigma(x)."""
    one = AffineMap(((ONE,),), (ZERO,))
    return NestNet((one, one), ((RELU,),))


def _check_pos_int(value, name: str) -> int:
    if not isinstance(value, int) or value < 1:
        raise ValidationError(f"{name} must be a positive integer")
    return value


# ---------------------------------------------------------------------------
# continuous piecewise linear functions as one-hidden-layer nets
# ---------------------------------------------------------------------------


def _cpl_units(f: PiecewiseLinear1D):
    """Decompose f as const + sum of coeff * sigma(w*t + b) hinge units.

    Returns (units, const, lin): units is a list of (w, b, coeff); when it
    is empty f is globally affine and equals const + lin * t.
    """
    f = pwl_prune(f)
    slopes = f.slopes()
    xs, ys = f.xs, f.ys
    if all(s == slopes[0] for s in slopes):
        s = slopes[0]
        return [], ys[0] - s * xs[0], s
    units = []
    if slopes[0]:
        units.append((-ONE, xs[0], -slopes[0]))
    if slopes[1]:
        units.append((ONE, -xs[0], slopes[1]))
    for j in range(1, len(xs)):
        c = slopes[j + 1] - slopes[j]
        if c:
            units.append((ONE, -xs[j], c))
    return units, ys[0], None


def cpl_to_net(f: PiecewiseLinear1D) -> NestNet:
    """One-hidden-layer net exactly equal to the CPL function f.

    With breakpoints x_1 < ... < x_p and slopes s_0..s_p (rays included),

        f(x) = f(x_1) - s_0 sigma(x_1 - x) + s_1 sigma(x - x_1)
               + sum_{j >= 2} (s_j - s_{j-1}) sigma(x - x_j),

    so the hidden width is at most p + 1 (zero-coefficient units drop).
    A globally affine f comes back as a pure affine net.
    """
    units, const, lin = _cpl_units(f)
    if not units:
        return affine_net(((lin,),), (const,))
    a0 = AffineMap(tuple((w,) for w, b, _ in units),
                   tuple(b for _, b, _ in units))
    a1 = AffineMap((tuple(c for _, _, c in units),), (const,))
    return NestNet((a0, a1), ((RELU,) * len(units),))


# ---------------------------------------------------------------------------
# min / max / mid gadgets
# ---------------------------------------------------------------------------


def min_pair_net() -> NestNet:
    """min(a, b) = ((a+b) - |a-b|) / 2, four ReLUs, one hidden layer."""
    h = rat(1, 2)
    a0 = _aff(((1, 1), (-1, -1), (1, -1), (-1, 1)), (0, 0, 0, 0))
    a1 = _aff(((h, -h, -h, -h),), (0,))
    return NestNet((a0, a1), ((RELU,) * 4,))


def max_pair_net() -> NestNet:
    """max(a, b) = ((a+b) + |a-b|) / 2, same hidden layer as min."""
    h = rat(1, 2)
    a0 = _aff(((1, 1), (-1, -1), (1, -1), (-1, 1)), (0, 0, 0, 0))
    a1 = _aff(((h, -h, h, h),), (0,))
    return NestNet((a0, a1), ((RELU,) * 4,))


def mid_net() -> NestNet:
    """Middle value of three inputs, depth 2, width 5.

    mid(a, b, c) = a + b - c - sigma(b - c + sigma(a - b))
                             + sigma(c - b + sigma(b - a)).

    The first hidden layer keeps (a, b, c) alive via identity slots; the
    second turns the two nested hinges into the correction terms.
    """
    a0 = _aff(((1, -1, 0), (-1, 1, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)),
              (0, 0, 0, 0, 0))
    acts0 = (RELU, RELU, IDENTITY, IDENTITY, IDENTITY)
    a1 = _aff(((1, 0, 0, 1, -1), (0, 1, 0, -1, 1), (0, 0, 1, 1, -1)),
              (0, 0, 0))
    acts1 = (RELU, RELU, IDENTITY)
    a2 = _aff(((-1, 1, 1),), (0,))
    return NestNet((a0, a1, a2), (acts0, acts1))


# ---------------------------------------------------------------------------
# floors
# ---------------------------------------------------------------------------


def floor_base(n: int, delta) -> NestNet:
    """Width-4 plain ReLU chain equal to floor(x) on each [l, l+1-delta]
    for l = 0..2^n - 1.

    Binary digits are recovered top-down.  With dt = delta / 2^n the ramp
    (sigma(u-1+dt) - sigma(u-1)) / dt equals the leading digit of u on the
    good set, and the running state (ramp pair, x, acc) folds each digit
    into acc = sum of recovered z_i 2^i before rescaling for the next one.
    """
    n = _check_pos_int(n, "n")
    delta = as_exact(delta)
    if not (0 < delta < 1):
        raise ValidationError("floor_base needs delta in (0, 1)")
    dt = delta / 2**n
    q = 1 / dt
    top = rat(1, 2 ** (n - 1))
    affines = [_aff(((top,), (top,), (1,), (0,)), (dt - 1, -1, 0, 0))]
    acts = [(RELU, RELU, IDENTITY, IDENTITY)]
    for j in range(n - 2, -1, -1):
        s = rat(1, 2**j)
        fold = q * 2 ** (j + 1)
        affines.append(_aff(
            ((-fold * s, fold * s, s, -s),
             (-fold * s, fold * s, s, -s),
             (0, 0, 1, 0),
             (fold, -fold, 0, 1)),
            (dt - 1, -1, 0, 0)))
        acts.append((RELU, RELU, IDENTITY, IDENTITY))
    affines.append(_aff(((q, -q, 0, 1),), (0,)))
    return NestNet(tuple(affines), tuple(acts))


def _margin_product(n: int, r: int) -> int:
    """C(r, n) = prod_{i=1..r} 2^{n^i}: how much margin each level eats."""
    return 2 ** sum(n**i for i in range(1, r + 1))


def floor_nested(n: int, r: int, delta,
                 limits: Limits = DEFAULT_LIMITS) -> NestNet:
    """Height-r net equal to floor(x) on each [l, l+1-C(r,n)*delta] for
    l = 0..2^{n^r} - 1, where C(r,n) = prod 2^{n^i}.

    Level r reads the n base-m digits of floor(x), m = 2^{n^{r-1}}, by
    feeding rescaled remainders through the level-(r-1) net, registered
    once and referenced at every digit site.
    """
    n = _check_pos_int(n, "n")
    r = _check_pos_int(r, "r")
    delta = as_exact(delta)
    bits = sum(n**i for i in range(1, r + 1))
    if bits > limits.max_weight_bits:
        raise ResourceLimitError(
            f"floor weights would need 2^{bits} denominators "
            f"(limit 2^{limits.max_weight_bits})")
    if not (0 < delta < rat(1, 2**bits)):
        raise ValidationError("floor_nested needs 0 < delta < 1/C(r,n)")
    if r == 1:
        return floor_base(n, delta * 2**n)
    g = floor_nested(n, r - 1, delta, limits)
    gid = register_id(g, f"floor-n{n}r{r - 1}")
    registry = {gid: g}
    m = 2 ** (n ** (r - 1))
    if n == 1:
        one = AffineMap(((ONE,),), (ZERO,))
        return NestNet((one, one), ((SubNet(gid),),), registry)
    affines = [_aff(((rat(1, m ** (n - 1)),), (1,)), (0, 0))]
    acts = [(SubNet(gid), IDENTITY)]
    affines.append(_aff(
        ((-m, rat(1, m ** (n - 2))), (0, 1), (m ** (n - 1), 0)),
        (0, 0, 0)))
    acts.append((SubNet(gid), IDENTITY, IDENTITY))
    for t in range(2, n):
        s = rat(1, m ** (n - 1 - t))
        affines.append(_aff(
            ((-m, s, -s), (0, 1, 0), (m ** (n - t), 0, 1)),
            (0, 0, 0)))
        acts.append((SubNet(gid), IDENTITY, IDENTITY))
    affines.append(_aff(((1, 0, 1),), (0,)))
    return NestNet(tuple(affines), tuple(acts), registry)


def step_function_net(n: int, r: int, delta, J: int,
                      limits: Limits = DEFAULT_LIMITS) -> NestNet:
    """Height-r net phi with phi(x) = floor(x) on each [j, j+1-delta] for
    j < J and phi(x) = J on all of [J, J+2].

    phi = min{phi0(x) + M sigma(x - (J - delta)), J} where phi0 is the
    nested floor with its margin re-sized so the public gap is exactly
    delta, and M = (Mt + J)/delta with Mt = max |phi0| over [J, J+2],
    computed exactly by flattening phi0 over that window.
    """
    n = _check_pos_int(n, "n")
    r = _check_pos_int(r, "r")
    J = _check_pos_int(J, "J")
    delta = as_exact(delta)
    if not (0 < delta < 1):
        raise ValidationError("step gap must lie in (0, 1)")
    if J > 2 ** (n**r):
        raise ValidationError(f"step count {J} exceeds 2^(n^r)")
    C = _margin_product(n, r)
    phi0 = floor_nested(n, r, delta / C, limits)
    window = pwl_of_net(phi0, interval=(rat(J), rat(J + 2)), limits=limits)
    mt = pwl_max_on(window, rat(J), rat(J + 2))
    M = (mt + J) / delta
    fan = affine_net(((ONE,), (ONE,)), (ZERO, delta - J))
    branches = parallel(phi0, _relu1())
    head = affine_net(((ONE, M),), (ZERO,))
    clamp = compose(min_pair_net(),
                    affine_net(((ONE,), (ZERO,)), (ZERO, rat(J))))
    return compose(clamp, compose(head, compose(branches, fan)))


# ---------------------------------------------------------------------------
# grid quantizer
# ---------------------------------------------------------------------------


def phi1_grid_net(K: int, delta, n: int, s: int,
                  limits: Limits = DEFAULT_LIMITS) -> NestNet:
    """Scalar grid quantizer: phi1(x) = k on [k/K, (k+1)/K - delta] for
    k < K-1, and phi1(x) = K-1 on [(K-1)/K, 1 + 1/K].

    Realized as the J = K-1 step net at scale K: phi1(x) = step(K x).
    K = 1 collapses to the zero constant.
    """
    K = _check_pos_int(K, "K")
    delta = as_exact(delta)
    if K == 1:
        return affine_net(((ZERO,),), (ZERO,))
    if not (0 < K * delta < 1):
        raise ValidationError("grid gap must satisfy 0 < K*delta < 1")
    if K - 1 > 2 ** ((2 * n) ** s):
        raise ValidationError(f"grid size {K} out of range for (n={n}, s={s})")
    tilde = step_function_net(2 * n, s, K * delta, K - 1, limits)
    return compose(tilde, affine_net(((rat(K),),), (ZERO,)))


def phi1_parallel(K: int, delta, n: int, s: int, d: int,
                  limits: Limits = DEFAULT_LIMITS) -> NestNet:
    """d independent copies of the grid quantizer, sharing sub-nets."""
    d = _check_pos_int(d, "d")
    phi1 = phi1_grid_net(K, delta, n, s, limits)
    if d == 1:
        return phi1
    return parallel(*(phi1,) * d)


# ---------------------------------------------------------------------------
# gated bit sums
# ---------------------------------------------------------------------------


def bit_pair_net(n: int) -> NestNet:
    """Gated prefix bit-sum, plain ReLU, width 7, depth 2n.

    Inputs (x, k) with x = sum_{l=1..n} b_l 2^{-l} and integer k in
    {0..n}; output sum_{l<=k} b_l.  Stage i reads the leading bit with the
    ramp pair at threshold 1/2 (exact because x is an n-bit dyadic), gates
    it by 1{k >= i} = sigma(k-i+1) - sigma(k-i), combines via the AND
    sigma(t + g - 1), and doubles the tail for the next stage.
    """
    n = _check_pos_int(n, "n")
    sc = 2**n
    thr = rat(1, 2) - rat(1, sc)
    acts_a = (RELU, RELU, RELU, RELU, IDENTITY, IDENTITY, IDENTITY)
    acts_b = (RELU, IDENTITY, IDENTITY, IDENTITY, IDENTITY)
    affines = [_aff(
        ((1, 0), (1, 0), (0, 1), (0, 1), (1, 0), (0, 1), (0, 0)),
        (-thr, rat(-1, 2), 0, -1, 0, 0, 0))]
    acts = [acts_a]
    mid = _aff(
        ((sc, -sc, 1, -1, 0, 0, 0),
         (sc, -sc, 0, 0, 0, 0, 0),
         (0, 0, 0, 0, 1, 0, 0),
         (0, 0, 0, 0, 0, 1, 0),
         (0, 0, 0, 0, 0, 0, 1)),
        (-1, 0, 0, 0, 0))
    for i in range(1, n):
        affines.append(mid)
        acts.append(acts_b)
        affines.append(_aff(
            ((0, -1, 2, 0, 0),
             (0, -1, 2, 0, 0),
             (0, 0, 0, 1, 0),
             (0, 0, 0, 1, 0),
             (0, -1, 2, 0, 0),
             (0, 0, 0, 1, 0),
             (1, 0, 0, 0, 1)),
            (-thr, rat(-1, 2), -i, -(i + 1), 0, 0, 0)))
        acts.append(acts_a)
    affines.append(mid)
    acts.append(acts_b)
    affines.append(_aff(((1, 0, 0, 0, 1),), (0,)))
    return NestNet(tuple(affines), tuple(acts))


def bit_extract_base(n: int) -> NestNet:
    """Height-1 bit extractor: w = p + 0.b_1...b_n with integer p in
    {0..n} maps to sum_{l<=p} b_l.

    A shared hidden layer splits w into (fraction, count): the staircase
    psi with ramp pairs at each integer equals p on [p, p+1-2^{-n}] and
    plateaus at n, while sigma(w) - psi(w) recovers the fraction.  The
    pair then feeds the gated prefix sum.
    """
    n = _check_pos_int(n, "n")
    dt = rat(1, 2**n)
    q = 2**n
    rows = [(ONE,)]
    bias = [ZERO]
    for l in range(n):
        rows.append((ONE,))
        bias.append(-(l + 1 - dt))
        rows.append((ONE,))
        bias.append(rat(-(l + 1)))
    frac = [ONE]
    count = [ZERO]
    for _ in range(n):
        frac += [-q, q]
        count += [q, -q]
    psi = NestNet(
        (AffineMap(tuple(rows), tuple(bias)),
         AffineMap((tuple(frac), tuple(count)), (ZERO, ZERO))),
        ((RELU,) * (2 * n + 1),))
    return compose(bit_pair_net(n), psi)


_BIT_CACHE: dict = {}


def _bit_extract_level(n: int, r: int, g: NestNet,
                       limits: Limits) -> NestNet:
    """Grow the extractor one level: m = n^r bits per block, n blocks."""
    m = n**r
    sc = 2**m
    gt = step_function_net(2 * n, r, rat(1, 2 ** (n ** (r + 1))),
                           2 ** ((2 * n) ** r), limits)
    gid = register_id(g, f"bits-n{n}s{r}")
    gtid = register_id(gt, f"bitstep-n{n}r{r}")
    registry = {gid: g, gtid: gt}
    acts1 = (RELU, SubNet(gtid), IDENTITY, IDENTITY, IDENTITY)
    acts2 = (RELU, RELU, RELU, RELU, IDENTITY, IDENTITY, IDENTITY, IDENTITY)
    acts3 = (SubNet(gid), IDENTITY, IDENTITY, IDENTITY)
    h = rat(1, 2)
    affines = [
        _aff(((1,), (1,)), (0, 0)),
        _aff(((1, 0), (-sc, sc), (1, 0), (-1, 1), (0, 0)), (0, 0, 0, 0, 0)),
    ]
    acts = [(SubNet(gtid), IDENTITY), acts1]
    b2 = _aff(
        ((1, 0, 0, 0, 0), (-1, 0, 0, 0, 0), (1, 0, 0, 0, 0), (-1, 0, 0, 0, 0),
         (0, 1, 0, 0, 0), (0, 0, 1, 0, 0), (0, 0, 0, 1, 0), (0, 0, 0, 0, 1)),
        (m, -m, -m, m, 0, 0, 0, 0))
    b3 = _aff(
        ((h, -h, -h, -h, rat(1, sc), 0, 0, 0),
         (0, 0, 0, 0, 0, 1, 0, 0),
         (0, 0, 0, 0, -1, 0, sc, 0),
         (0, 0, 0, 0, 0, 0, 0, 1)),
        (0, 0, 0, 0))
    for i in range(n):
        affines.append(b2)
        acts.append(acts2)
        affines.append(b3)
        acts.append(acts3)
        if i + 1 < n:
            affines.append(_aff(
                ((0, 1, 0, 0), (0, 0, sc, 0), (0, 1, 0, 0), (0, 0, 1, 0),
                 (1, 0, 0, 1)),
                (-(i + 1) * m, 0, 0, 0, 0)))
            acts.append(acts1)
    affines.append(_aff(((1, 0, 0, 1),), (0,)))
    return NestNet(tuple(affines), tuple(acts), registry)


def bit_extract_net(n: int, s: int,
                    limits: Limits = DEFAULT_LIMITS) -> NestNet:
    """Height-s extractor: w = p + 0.b_1...b_m with m = n^s and integer
    p in {0..m} maps exactly to sum_{l<=p} b_l.

    Level r+1 splits the m' = n^{r+1} bits into n blocks of m = n^r.  A
    step net recovers p and the running tail's leading block; the block
    count is clamped to [0, m] by a hinge sandwich; the level-r extractor,
    registered once, sums each block's gated prefix.
    """
    n = _check_pos_int(n, "n")
    s = _check_pos_int(s, "s")
    key = (n, s, limits)
    hit = _BIT_CACHE.get(key)
    if hit is not None:
        return hit
    net = bit_extract_base(n)
    for r in range(1, s):
        net = _bit_extract_level(n, r, net, limits)
    _BIT_CACHE[key] = net
    return net


def indexed_bit_sum_net(theta, n: int, s: int,
                        limits: Limits = DEFAULT_LIMITS) -> NestNet:
    """Height-s net phi with phi(j) = sum_{l<=k} theta[i][l] at every
    integer j = i*m + k (m = n^s, 0 <= i < n, 0 <= k < m).

    Row i is packed as the m-bit fraction z_i; a staircase splits j into
    (i, k); the affine folding w = k + 1 + z_i hands the extractor the
    prefix length k+1 inside row i's bits.
    """
    n = _check_pos_int(n, "n")
    s = _check_pos_int(s, "s")
    m = n**s
    theta = tuple(tuple(int(v) for v in row) for row in theta)
    if len(theta) != n or any(len(row) != m for row in theta):
        raise ValidationError(f"bit matrix must be {n} x {m}")
    if any(v not in (0, 1) for row in theta for v in row):
        raise ValidationError("bit matrix entries must be 0 or 1")
    dt = rat(1, 2 * m)
    q = 2 * m
    rows = [(ONE,)]
    bias = [ZERO]
    for l in range(n - 1):
        rows.append((rat(1, m),))
        bias.append(-(l + 1 - dt))
        rows.append((rat(1, m),))
        bias.append(rat(-(l + 1)))
    irow = [ZERO]
    krow = [ONE]
    for _ in range(n - 1):
        irow += [q, -q]
        krow += [-m * q, m * q]
    splitter = NestNet(
        (AffineMap(tuple(rows), tuple(bias)),
         AffineMap((tuple(irow), tuple(krow)), (ZERO, ZERO))),
        ((RELU,) * (2 * n - 1),))
    zs = [sum(mpq(row[l], 2 ** (l + 1)) for l in range(m)) for row in theta]
    units, const, lin = _cpl_units(
        pwl_from_points(tuple((rat(i), zs[i]) for i in range(n)))
        if n > 1 else pwl_from_points(((ZERO, zs[0]),)))
    rows2 = [(ZERO, ONE)]
    bias2 = [ZERO]
    coeffs = [ONE]
    if lin:
        rows2.append((ONE, ZERO))
        bias2.append(ZERO)
        coeffs.append(lin)
    for w, b, c in units:
        rows2.append((w, ZERO))
        bias2.append(b)
        coeffs.append(c)
    folder = NestNet(
        (AffineMap(tuple(rows2), tuple(bias2)),
         AffineMap((tuple(coeffs),), (1 + const,))),
        ((RELU,) * len(rows2),))
    return compose(bit_extract_net(n, s, limits), compose(folder, splitter))


# ---------------------------------------------------------------------------
# point fitting
# ---------------------------------------------------------------------------


def point_fit_net(ys, eps, n: int, s: int,
                  limits: Limits = DEFAULT_LIMITS) -> NestNet:
    """Height-s net phi with phi(j) = floor(y_j / eps) * eps at each
    j = 0..J-1 and 0 <= phi(x) <= max y everywhere.

    Needs J <= n^{s+1}, nonnegative y, and the gap condition
    |y_{j+1} - y_j| <= eps, which makes the quantized sequence a_j move
    by at most 1 per step.  a is split as a_j = a_{im} + (ups) - (downs):
    a block-plateau CPL supplies a_{im}, and two indexed bit sums count
    the +1 and -1 moves inside each block.  A final hinge sandwich clamps
    to [0, max y].
    """
    n = _check_pos_int(n, "n")
    s = _check_pos_int(s, "s")
    ys = tuple(as_exact(y) for y in ys)
    eps = as_exact(eps)
    if eps <= 0:
        raise ValidationError("tolerance must be positive")
    J = len(ys)
    if J < 1:
        raise ValidationError("need at least one value")
    if J > n ** (s + 1):
        raise ValidationError(f"{J} values exceed n^(s+1) = {n ** (s + 1)}")
    if J > limits.max_fit_points:
        raise ResourceLimitError(
            f"{J} fit points exceed the cap {limits.max_fit_points}")
    if any(y < 0 for y in ys):
        raise ValidationError("values must be nonnegative")
    for j in range(J - 1):
        if abs(ys[j + 1] - ys[j]) > eps:
            raise GapConditionError(
                f"|y_{j + 1} - y_{j}| = {abs(ys[j + 1] - ys[j])} "
                f"exceeds eps = {eps}")
    m = n**s
    a = []
    for y in ys:
        v = y / eps
        a.append(int(v.numerator // v.denominator))
    a += [a[-1]] * (n * m - J)
    big = max(ys)
    if n == 1:
        plateau = affine_net(((ZERO,),), (rat(a[0]),))
    else:
        pts = []
        for i in range(n - 1):
            pts.append((rat((i + 1) * m - 1), rat(a[i * m])))
            pts.append((rat((i + 1) * m), rat(a[(i + 1) * m])))
        plateau = cpl_to_net(pwl_from_points(tuple(pts)))
    ups = [[0] * m for _ in range(n)]
    downs = [[0] * m for _ in range(n)]
    for i in range(n):
        for l in range(1, m):
            diff = a[i * m + l] - a[i * m + l - 1]
            if diff > 0:
                ups[i][l] = 1
            elif diff < 0:
                downs[i][l] = 1
    trio = parallel(plateau,
                    indexed_bit_sum_net(ups, n, s, limits),
                    indexed_bit_sum_net(downs, n, s, limits))
    fan = affine_net(((ONE,), (ONE,), (ONE,)), (ZERO, ZERO, ZERO))
    comb = affine_net(((eps, eps, -eps),), (ZERO,))
    tilde = compose(comb, compose(trio, fan))
    h = rat(1, 2)
    clamp = NestNet(
        (AffineMap(((ONE,),), (ZERO,)),
         _aff(((1,), (-1,), (1,), (-1,)), (big, -big, -big, big)),
         _aff(((h, -h, -h, -h),), (0,))),
        ((RELU,), (RELU,) * 4))
    return compose(clamp, tilde)


# ---------------------------------------------------------------------------
# approximator assembly
# ---------------------------------------------------------------------------

# Default ceiling for the grid gap delta.  Any smaller delta is always
# admissible (every inequality involving delta is monotone), and a gap
# below 2^-25 leaves typical measurement grids (thousands of points per
# axis, knots at j/K with small K) provably disjoint from the trifling
# bands, so error sweeps classify every probe as clean.
_DELTA_CEIL = rat(1, 1 << 25)


@dataclass(frozen=True)
class TriflingRegion:
    """The union of open bands (j/K - delta, j/K) x-wise, per coordinate."""

    dim: int
    K: int
    delta: mpq

    def contains(self, xs) -> bool:
        if self.K == 1:
            return False
        for x in xs:
            q = as_exact(x) * self.K
            j = -((-q.numerator) // q.denominator)  # ceil
            if 1 <= j <= self.K - 1 and q < j and q > j - self.K * self.delta:
                return True
        return False


def psi1_map(d: int, K: int) -> AffineMap:
    """Flatten the integer grid label beta in {0..K-1}^d to a scalar:
    psi1(beta) = beta_d / (2 K^d) + sum_{i<d} beta_i / K^i, injectively
    into the knot set {j / (2 K^d)}."""
    d = _check_pos_int(d, "d")
    K = _check_pos_int(K, "K")
    row = [rat(1, K**i) for i in range(1, d)]
    row.append(rat(1, 2 * K**d))
    return AffineMap((tuple(row),), (ZERO,))


def _g_values(values, K: int, d: int) -> list:
    """Fit sequence for the flattened grid: anchors at the label image,
    linear interpolation across the unused index stretches."""
    T = 2 * K**d
    out = [None] * (T + 1)
    for beta in product(range(K), repeat=d):
        j = beta[-1] + sum(2 * K ** (d - 1 - i) * beta[i]
                           for i in range(d - 1))
        v = as_exact(values[beta])
        if v < 0:
            raise ValidationError("fit values must be nonnegative")
        out[j] = v
    corner = as_exact(values[(K,) * d])
    if corner < 0:
        raise ValidationError("fit values must be nonnegative")
    out[T] = corner
    for i in range(1, K ** (d - 1) + 1):
        jl = 2 * K * i - K - 1
        jr = 2 * K * i if i < K ** (d - 1) else T
        for t in range(jl + 1, jr):
            out[t] = out[jl] + (out[jr] - out[jl]) * rat(t - jl, jr - jl)
    return out


def g_builder(values, K: int, d: int) -> PiecewiseLinear1D:
    """CPL profile on [0, 1] through the flattened grid samples.

    values maps each beta in {0..K-1}^d, plus the corner (K,..,K), to a
    nonnegative scalar.  Knots sit at j/(2K^d); label images carry the
    sample values, the corner carries f~(1), and the stretches in between
    interpolate linearly so successive knots never jump by more than the
    modulus allows.
    """
    K = _check_pos_int(K, "K")
    d = _check_pos_int(d, "d")
    seq = _g_values(values, K, d)
    T = 2 * K**d
    return pwl_from_points(tuple((rat(j, T), y) for j, y in enumerate(seq)))


@dataclass(frozen=True)
class InteriorBuild:
    """An assembled grid-quantize-fit approximator plus its anatomy.

    net = tail(sum_i mix_i * phi1(x_i)) + shift, where phi1 is the scalar
    grid quantizer (None for the constant path) and tail the point-fit
    net over flattened labels.  Keeping the parts lets verification
    evaluate huge grids through table lookups instead of full net walks.
    """

    net: NestNet
    phi1: NestNet | None
    tail: NestNet | None
    mix: tuple
    shift: mpq
    K: int
    delta: mpq
    eps_hat: mpq
    n: int
    s: int
    dim: int

    @property
    def trifling(self) -> TriflingRegion:
        return TriflingRegion(self.dim, self.K, self.delta)


@dataclass(frozen=True)
class ApproximatorBuild:
    """Interior build plus the sup-norm median wrap (when p = inf)."""

    interior: InteriorBuild
    net: NestNet
    p_value: mpq | None  # None means sup norm
    delta: mpq


def build_interior(target: TargetFunction, n: int, s: int, delta=None,
                   limits: Limits = DEFAULT_LIMITS) -> InteriorBuild:
    """Assemble the interior approximator for a target.

    K = floor(n^{(s+1)/d}); the target is sampled at the K-grid corners
    only; samples are shifted nonnegative, flattened by the grid label
    map, interpolated, and point-fitted at tolerance eps_hat = an upper
    envelope of omega(sqrt(d)/K).  Exact on every clean grid cell up to
    eps_hat plus the cell oscillation.
    """
    d = target.dim
    n = _check_pos_int(n, "n")
    s = _check_pos_int(s, "s")
    K = iroot_floor(n ** (s + 1), d)
    modulus_spot_check(target)
    f0 = target((ZERO,) * d)
    if delta is None:
        delta = min(largest_dyadic_leq(rat(1, 3 * K)), _DELTA_CEIL)
    delta = as_exact(delta)
    if target.modulus.is_zero:
        net = affine_net(((ZERO,) * d,), (f0,))
        return InteriorBuild(net, None, None, (0,) * d, f0, K, delta,
                             ZERO, n, s, d)
    if not (0 < delta <= rat(1, 3 * K)):
        raise ValidationError("interior gap must satisfy 0 < delta <= 1/(3K)")
    sqrt_d = root_upper(rat(d), 2)
    shift_up = target.modulus.upper(sqrt_d)
    eps_hat = target.modulus.upper(sqrt_d / K)
    values = {}
    for beta in product(range(K), repeat=d):
        values[beta] = target(tuple(rat(b, K) for b in beta)) - f0 + shift_up
    values[(K,) * d] = target((ONE,) * d) - f0 + shift_up
    seq = _g_values(values, K, d)
    tail = point_fit_net(seq[:2 * K**d], eps_hat, 2 * n, s, limits)
    phi1 = phi1_grid_net(K, delta, n, s, limits)
    grid = phi1 if d == 1 else parallel(*(phi1,) * d)
    mix = tuple(2 * K ** (d - i) for i in range(1, d)) + (1,)
    mixer = affine_net((tuple(rat(c) for c in mix),), (ZERO,))
    shift = f0 - shift_up
    shifted_tail = compose(affine_net(((ONE,),), (shift,)), tail)
    net = compose(shifted_tail, compose(mixer, grid))
    return InteriorBuild(net, phi1, tail, mix, shift, K, delta,
                         eps_hat, n, s, d)


def _parse_p(p):
    if p is None:
        return None
    if isinstance(p, str):
        if p.lower() in ("inf", "oo", "sup"):
            return None
        try:
            p = parse_rational(p)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
    if isinstance(p, float):
        if p == float("inf"):
            return None
        raise ValidationError("norm order must be rational or 'inf'")
    p = as_exact(p)
    if p < 1:
        raise ValidationError("norm order must be >= 1")
    return p


def _mid_wrap(net: NestNet, d: int, axis: int, delta) -> NestNet:
    """One median-vote round: x -> mid(net(x - de), net(x), net(x + de))."""
    rows = []
    bias = []
    for c in (-1, 0, 1):
        for i in range(d):
            rows.append(tuple(ONE if j == i else ZERO for j in range(d)))
            bias.append(c * delta if i == axis else ZERO)
    fan = affine_net(rows, bias)
    return compose(mid_net(), compose(parallel(net, net, net), fan))


def build_full(target: TargetFunction, n: int, s: int, p="inf",
               limits: Limits = DEFAULT_LIMITS) -> ApproximatorBuild:
    """Assemble the full approximator at norm order p.

    For finite p the interior net already works: the trifling bands have
    measure K*d*delta, and delta is chosen (largest admissible dyadic) so
    their worst-case contribution stays below the modulus at the target
    scale.  For p = inf each axis gets a median vote over {-delta, 0,
    +delta} shifts: at any point at most one of the three lands in a
    band, and the median of two good values and one stray is good.
    """
    d = target.dim
    n = _check_pos_int(n, "n")
    s = _check_pos_int(s, "s")
    pv = _parse_p(p)
    if target.modulus.is_zero:
        interior = build_interior(target, n, s, None, limits)
        return ApproximatorBuild(interior, interior.net, pv, interior.delta)
    K = iroot_floor(n ** (s + 1), d)
    cap = rat(1, 3 * K)
    tlo = ONE / root_upper(rat(n ** (s + 1)), d)
    L = target.modulus.lower(tlo)
    if L <= 0:
        raise ValidationError(
            "modulus lower envelope vanishes at the target scale; "
            "cannot size the grid gap")
    if pv is not None:
        f0 = target((ZERO,) * d)
        width = 2 * abs(f0) + 2 * target.modulus.upper(root_upper(rat(d), 2))
        num, den = int(pv.numerator), int(pv.denominator)
        if den == 1:
            lp, wp = L**num, width**num
        else:
            lp = pow_lower(L, num, den)
            wp = pow_upper(width, num, den)
        delta = largest_dyadic_leq(min(cap, _DELTA_CEIL, lp / (K * d * wp)))
        interior = build_interior(target, n, s, delta, limits)
        return ApproximatorBuild(interior, interior.net, pv, delta)
    if d > limits.max_sup_dim:
        raise ResourceLimitError(
            f"sup-norm wrap grows as 10^(d+3); refusing d = {d} "
            f"(limit {limits.max_sup_dim})")
    delta = largest_dyadic_leq(min(cap, _DELTA_CEIL))
    for _ in range(4096):
        if d * target.modulus.upper(delta) <= L:
            break
        delta /= 2
    else:
        raise ResourceLimitError("no admissible dyadic gap found")
    interior = build_interior(target, n, s, delta, limits)
    net = interior.net
    for axis in range(d):
        net = _mid_wrap(net, d, axis, delta)
    return ApproximatorBuild(interior, net, None, delta)


def approximator_interior(target: TargetFunction, n: int, s: int,
                          delta=None,
                          limits: Limits = DEFAULT_LIMITS) -> NestNet:
    """The interior approximator net (see build_interior)."""
    return build_interior(target, n, s, delta, limits).net


def approximator_full(target: TargetFunction, n: int, s: int, p="inf",
                      limits: Limits = DEFAULT_LIMITS) -> NestNet:
    """The full approximator net at norm order p (see build_full)."""
    return build_full(target, n, s, p, limits).net
