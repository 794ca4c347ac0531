"""Exact measurement harness: grid error sweeps, parameter-budget checks,
brute-force oracles, and the scaling study.

Everything bound-facing runs on the Exact backend.  Floats appear only
in informational columns (L^p quadrature values, log-log slopes); every
pass/fail comparison is a rational inequality.

The error sweep has two engines.  The generic one walks the grid and
evaluates the net symbolically at every point — always available,
symbolically exact, and far too slow for approximator-scale nets on
millions of points.  The fast engine uses the anatomy recorded by the
approximator builders: the scalar grid quantizer is flattened once to
an exact piecewise-linear function, each axis of the grid is classified
to its cell index, and the fitted tail is evaluated only at the handful
of reachable integer labels.  A point's value is then a table lookup
(plus an exact 3-way median tree when the net carries the sup-norm
smoothing wrap).  Points the table cannot certify — a coordinate inside
a trifling band — fall back to direct symbolic evaluation, and a spot
check asserts exact agreement between the two engines on every sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

from gmpy2 import mpq

from .constructive import (
    ApproximatorBuild,
    TriflingRegion,
    bit_extract_net,
    build_full,
)
from .core_ir import NestNet, eval_scalar, net_eval, param_count
from .errors import ResourceLimitError, ValidationError
from .limits import DEFAULT_LIMITS, Limits, max_cases
from .numerics import (ZERO, as_exact, parse_rational, pwl_eval, pwl_of_net,
                       rat, root_lower, root_upper, to_float)
from .targets import TargetFunction

FULL_CUBE = "full-cube"
OUTSIDE_TRIFLING = "outside-trifling"


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """A uniform probe grid over [0,1]^d.

    ``mode`` is either FULL_CUBE (every lattice point, including points
    inside trifling bands) or OUTSIDE_TRIFLING (lattice points with any
    coordinate inside a band of ``region`` are skipped).
    """

    d: int
    points_per_axis: int
    mode: str = FULL_CUBE
    region: TriflingRegion | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError("dimension must be positive")
        if self.points_per_axis < 1:
            raise ValidationError("need at least one point per axis")
        if self.mode not in (FULL_CUBE, OUTSIDE_TRIFLING):
            raise ValidationError(f"unknown grid mode {self.mode!r}")
        if self.mode == OUTSIDE_TRIFLING:
            if self.region is None:
                raise ValidationError("outside-trifling mode needs a region")
            if self.region.dim != self.d:
                raise ValidationError("region dimension mismatch")
        elif self.region is not None:
            raise ValidationError("full-cube mode takes no region")

    @classmethod
    def full_cube(cls, d: int, points_per_axis: int) -> "GridSpec":
        return cls(d, points_per_axis)

    @classmethod
    def outside_trifling(cls, d: int, points_per_axis: int,
                         region: TriflingRegion) -> "GridSpec":
        return cls(d, points_per_axis, OUTSIDE_TRIFLING, region)

    def axis_points(self) -> tuple:
        n = self.points_per_axis
        if n == 1:
            return (ZERO,)
        return tuple(rat(t, n - 1) for t in range(n))


@dataclass(frozen=True)
class ErrorReport:
    """Measured grid errors plus the matching theorem bound.

    ``sup_error`` is exact; ``lp_error`` maps each requested p to a
    float quadrature value (informational).  ``decomposition`` splits
    the interior error budget into its two proofs-side contributions:
    the fit quantum and the within-cell oscillation envelope.
    """

    sup_error: mpq
    lp_error: dict
    bound: mpq | None
    n: int | None
    s: int | None
    d: int
    K: int | None
    delta: mpq | None
    param_count: int
    points: int
    decomposition: tuple | None = None


def theorem_bound(f: TargetFunction, n: int, s: int, d: int,
                  full_chain: bool) -> mpq:
    """Rational upper envelope of the error bound c*sqrt(d)*omega(n^-(s+1)/d),
    c = 7 on the whole cube (smoothed chain), 6 outside the bands."""
    coef = 7 if full_chain else 6
    if f.modulus.is_zero:
        return ZERO
    t_up = 1 / root_lower(rat(n) ** (s + 1), d)
    return coef * root_upper(rat(d), 2) * f.modulus.upper(t_up)


# ---------------------------------------------------------------------------
# the fast table-driven evaluator for built approximators
# ---------------------------------------------------------------------------


class _FastEval:
    """Evaluate a built approximator on grid points via cell tables.

    value(point) is exactly net_eval(net, point) whenever every probe the
    net's structure touches lands outside the trifling bands; otherwise
    it falls back to direct symbolic evaluation of the stored net.
    """

    def __init__(self, build, limits: Limits):
        if isinstance(build, ApproximatorBuild):
            self.interior = build.interior
            self.wrapped = build.net is not build.interior.net
        else:
            self.interior = build
            self.wrapped = False
        self.net = build.net
        self.delta = build.delta
        self.dim = self.interior.dim
        self.mix = tuple(int(c) for c in self.interior.mix)
        self.shift = self.interior.shift
        self._tail_cache: dict = {}
        self.fallbacks = 0
        if self.interior.phi1 is None:
            self.pwl = None
        else:
            self.pwl = pwl_of_net(self.interior.phi1,
                                  interval=(rat(-1), rat(2)), limits=limits)

    def cell(self, x) -> int | None:
        """Exact quantizer cell at x, or None inside a band."""
        if self.pwl is None:
            return 0
        v = pwl_eval(self.pwl, x)
        return int(v) if v.denominator == 1 else None

    def axis_cells(self, xs) -> list:
        """Per grid coordinate: (k(x-delta), k(x), k(x+delta), uniform).

        Without the smoothing wrap the shifted entries duplicate k(x).
        """
        out = []
        for x in xs:
            k0 = self.cell(x)
            if not self.wrapped:
                out.append((k0, k0, k0, True))
                continue
            km = self.cell(x - self.delta)
            kp = self.cell(x + self.delta)
            out.append((km, k0, kp, km == k0 == kp))
        return out

    def tail_at(self, u: int):
        got = self._tail_cache.get(u)
        if got is None:
            if self.interior.tail is None:
                got = self.shift
            else:
                got = eval_scalar(self.interior.tail, rat(u)) + self.shift
            self._tail_cache[u] = got
        return got

    def value(self, point, triples):
        """Exact net value at the point given its per-axis cell triples."""
        if all(tr[3] for tr in triples):
            k = [tr[1] for tr in triples]
            if None in k:
                return self._direct(point)
            return self.tail_at(sum(m * c for m, c in zip(self.mix, k)))
        if not self.wrapped:
            if any(tr[1] is None for tr in triples):
                return self._direct(point)
            return self.tail_at(sum(m * tr[1]
                                    for m, tr in zip(self.mix, triples)))
        if any(None in tr[:3] for tr in triples):
            return self._direct(point)

        def walk(axis, ks):
            if axis < 0:
                return self.tail_at(sum(m * c for m, c in zip(self.mix, ks)))
            vals = sorted(
                walk(axis - 1, ks[:axis] + (triples[axis][j],)
                     + ks[axis + 1:])
                for j in (0, 1, 2)
            )
            return vals[1]

        start = tuple(tr[1] for tr in triples)
        return walk(self.dim - 1, start)

    def _direct(self, point):
        self.fallbacks += 1
        return net_eval(self.net, point, _check=False)[0]


# ---------------------------------------------------------------------------
# error measurement
# ---------------------------------------------------------------------------


def _parse_plist(p_list) -> tuple:
    out = []
    for p in p_list:
        if isinstance(p, str):
            try:
                p = parse_rational(p)
            except ValueError as exc:
                raise ValidationError(str(exc)) from None
        q = as_exact(p) if not isinstance(p, float) else None
        if q is None or q < 1:
            raise ValidationError(f"norm order must be a rational >= 1, got {p!r}")
        out.append(q)
    return tuple(out)


def measure_error(net: NestNet, f: TargetFunction, grid: GridSpec,
                  p_list=(), *, build=None, n: int | None = None,
                  s: int | None = None, cross_check: int = 5,
                  limits: Limits = DEFAULT_LIMITS) -> ErrorReport:
    """Sweep the grid and report sup (exact) and L^p (float) errors.

    With ``build`` (the value returned by build_interior / build_full,
    whose ``.net`` must be this net) the sweep runs on exact cell/label
    tables instead of per-point symbolic evaluation; ``cross_check``
    points are still evaluated both ways and must agree bit-for-bit.
    The theorem bound is attached when (n, s) are known — taken from
    ``build`` or passed explicitly.
    """
    d = grid.d
    if net.input_dim != d or f.dim != d or net.output_dim != 1:
        raise ValidationError("net/target/grid dimensions disagree")
    ps = _parse_plist(p_list)
    fast = None
    K = delta = None
    decomposition = None
    if build is not None:
        if build.net is not net:
            raise ValidationError("build does not describe this net")
        interior = build.interior if isinstance(build, ApproximatorBuild) \
            else build
        n = interior.n if n is None else n
        s = interior.s if s is None else s
        K, delta = interior.K, interior.delta
        if not f.modulus.is_zero:
            decomposition = (
                interior.eps_hat,
                f.modulus.upper(root_upper(rat(d), 2) / K),
            )
        fast = _FastEval(build, limits)

    axis = grid.axis_points()
    region = grid.region
    worst = ZERO
    sums = [0.0] * len(ps)
    pf = [to_float(p) for p in ps]
    count = 0
    checked = []
    check_step = max(1, (len(axis) ** d) // cross_check) if cross_check else 0
    if fast is not None:
        triples_per_axis = fast.axis_cells(axis)

    for idx in product(range(len(axis)), repeat=d):
        point = tuple(axis[i] for i in idx)
        if region is not None and region.contains(point):
            continue
        if fast is not None:
            triples = tuple(triples_per_axis[i] for i in idx)
            got = fast.value(point, triples)
        else:
            got = net_eval(net, point)[0]
        err = abs(got - as_exact(f.evaluate(point)))
        if err > worst:
            worst = err
        if ps:
            e = to_float(err)
            for j, pv in enumerate(pf):
                sums[j] += e ** pv
        count += 1
        if fast is not None and check_step and len(checked) < cross_check \
                and count % check_step in (0, 1):
            checked.append((point, got))

    if count == 0:
        raise ValidationError("grid produced no points")
    for point, got in checked:
        direct = net_eval(net, point, _check=False)[0]
        if direct != got:
            raise ValidationError(
                f"fast-path value {got} disagrees with symbolic evaluation "
                f"{direct} at {point}")

    lp = {}
    for p, pv, acc in zip(ps, pf, sums):
        lp[str(p)] = (acc / count) ** (1.0 / pv)
    bound = None
    if n is not None and s is not None:
        bound = theorem_bound(f, n, s, d, grid.mode == FULL_CUBE)
    return ErrorReport(
        sup_error=worst, lp_error=lp, bound=bound, n=n, s=s, d=d, K=K,
        delta=delta, param_count=param_count(net), points=count,
        decomposition=decomposition)


# ---------------------------------------------------------------------------
# parameter budgets
# ---------------------------------------------------------------------------

_BOUNDS = {
    "step": lambda n, s, d: 36 * (s + 7) * n,
    "floor_nested": lambda n, s, d: (12 * s + 68) * n,
    "bit_extract": lambda n, s, d: 57 * (s + 7) ** 2 * (n + 1),
    "indexed_bit_sum": lambda n, s, d: 58 * (s + 7) ** 2 * (n + 1),
    "point_fit": lambda n, s, d: 350 * (s + 7) ** 2 * (n + 1),
    "interior": lambda n, s, d: 355 * d**2 * (s + 7) ** 2 * (2 * n + 1),
    "full_p_finite": lambda n, s, d: 10**3 * d**2 * (s + 7) ** 2 * (n + 1),
    "full_p_infty": lambda n, s, d:
        10 ** (d + 3) * d**2 * (s + 7) ** 2 * (n + 1),
}


@dataclass(frozen=True)
class BoundCheck:
    ok: bool
    count: int
    bound: int
    bound_id: str


def check_param_bound(net: NestNet, bound_id: str, n: int, s: int,
                      d: int = 1) -> BoundCheck:
    """Compare param_count(net) against the named budget formula.

    For the single-parameter families (step, floor_nested) ``s`` plays
    the nesting-depth role.  Comparison is integer-exact.
    """
    formula = _BOUNDS.get(bound_id)
    if formula is None:
        raise ValidationError(
            f"unknown bound id {bound_id!r}; expected one of "
            f"{sorted(_BOUNDS)}")
    bound = formula(n, s, d)
    count = param_count(net)
    return BoundCheck(count <= bound, count, bound, bound_id)


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------


def oracle_bit_sum(theta, k: int) -> int:
    """Prefix sum of a bit vector by direct summation."""
    bits = tuple(int(b) for b in theta)
    if any(b not in (0, 1) for b in bits):
        raise ValidationError("bit vector entries must be 0 or 1")
    if not 0 <= k <= len(bits):
        raise ValidationError(f"prefix length {k} out of range")
    return sum(bits[:k])


@dataclass(frozen=True)
class BitCheckResult:
    ok: bool
    cases: int
    counterexample: tuple | None  # (theta, k, got, want)


def exhaustive_bit_check(n: int, s: int,
                         limits: Limits = DEFAULT_LIMITS) -> BitCheckResult:
    """Compare bit_extract_net(n, s) against the oracle on EVERY (theta, k).

    The case count is 2^m * (m+1) with m = n^s; refuses beyond the
    configured budget (default 2^20, lowered by NESTNET_MAX_CASES).
    """
    m = n**s
    total = (m + 1) << m
    budget = max_cases(1 << 20)
    if total > budget:
        raise ResourceLimitError(
            f"{total} cases exceed the budget {budget}")
    net = bit_extract_net(n, s, limits)
    for packed in range(1 << m):
        theta = tuple((packed >> (m - 1 - i)) & 1 for i in range(m))
        x = mpq(packed, 1 << m)
        for k in range(m + 1):
            got = eval_scalar(net, k + x)
            want = oracle_bit_sum(theta, k)
            if got != want:
                return BitCheckResult(False, total, (theta, k, got, want))
    return BitCheckResult(True, total, None)


# ---------------------------------------------------------------------------
# scaling study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingRow:
    n: int
    K: int
    param_count: int
    measured: mpq
    bound: mpq


@dataclass(frozen=True)
class ScalingStudy:
    rows: tuple
    slope: float | None  # log-log slope of measured error vs param count


def scaling_study(f: TargetFunction, s: int, p, n_list,
                  points_per_axis: int = 201,
                  limits: Limits = DEFAULT_LIMITS) -> ScalingStudy:
    """Build the full approximator for each n and sweep its grid error.

    Rows report exact (measured, bound) pairs; the log-log slope of
    measured error against parameter count is informational only (the
    theory proves an upper rate, not a per-instance lower one).
    """
    ns = list(n_list)
    if ns != sorted(ns) or len(set(ns)) != len(ns):
        raise ValidationError("n_list must be strictly ascending")
    rows = []
    for n in ns:
        build = build_full(f, n, s, p, limits)
        grid = GridSpec.full_cube(f.dim, points_per_axis)
        report = measure_error(build.net, f, grid, build=build,
                               limits=limits)
        if report.bound is not None and report.sup_error > report.bound:
            raise ValidationError(
                f"measured error {report.sup_error} exceeds the bound "
                f"{report.bound} at n={n}")
        rows.append(ScalingRow(n, report.K, report.param_count,
                               report.sup_error, report.bound))
    pts = [(r.param_count, to_float(r.measured)) for r in rows
           if r.measured > 0]
    slope = None
    if len(pts) >= 2:
        xs = [math.log(c) for c, _ in pts]
        ys = [math.log(e) for _, e in pts]
        mx = sum(xs) / len(xs)
        my = sum(ys) / len(ys)
        den = sum((x - mx) ** 2 for x in xs)
        if den > 0:
            slope = sum((x - mx) * (y - my)
                        for x, y in zip(xs, ys)) / den
    return ScalingStudy(tuple(rows), slope)
