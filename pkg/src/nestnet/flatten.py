"""Exact flattening of scalar nets to piecewise-linear functions.

The engine pushes a *strip* through the net: a shared, strictly
increasing breakpoint grid plus one value column per live neuron (with
end slopes for the rays beyond the grid).  Affine maps act on columns
exactly; ReLU inserts the zero crossings of each column into the grid;
a sub-net activation is flattened recursively over the column's value
range and pulled back through every monotone linear piece.

Two modes:

* full line (``interval=None``): the result equals the net everywhere,
  rays included.  Only sane for shallow nets.
* windowed (``interval=(lo, hi)``): the result equals the net on the
  closed window only.  Because every recursive sub-net flatten is
  restricted to the exact value range attained over the window, deeply
  nested step constructions stay a few active pieces wide even when
  their full-line form would have astronomically many.

Everything runs on the Exact backend; flattening a float net refuses
rather than pretending f64 arithmetic can resolve the ramp widths
these constructions use.
"""

from __future__ import annotations

import bisect

from .core_ir import NestNet, Prim, SubNet, height, net_backend
from .errors import BackendMismatchError, ValidationError
from .limits import DEFAULT_LIMITS, Limits
from .numerics import (
    EXACT,
    ZERO,
    ONE,
    PiecewiseLinear1D,
    as_exact,
    pwl_eval,
    pwl_prune,
)


class _Strip:
    """Shared grid + per-neuron (values, left slope, right slope)."""

    __slots__ = ("xs", "cols", "windowed")

    def __init__(self, xs, cols, windowed):
        self.xs = xs
        self.cols = cols
        self.windowed = windowed


def _col_eval(strip, col, x):
    """Evaluate one column at a point (ray extension beyond the grid)."""
    ys, ls, rs = col
    xs = strip.xs
    i = bisect.bisect_right(xs, x)
    if i == 0:
        return ys[0] + ls * (x - xs[0])
    if i == len(xs):
        return ys[-1] + rs * (x - xs[-1])
    x0, x1 = xs[i - 1], xs[i]
    y0, y1 = ys[i - 1], ys[i]
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


def _refine(strip, new_points, limits: Limits):
    """Insert points into the shared grid, re-interpolating every column."""
    pts = sorted(p for p in set(new_points) if p not in set(strip.xs))
    if not pts:
        return
    limits.require(
        len(strip.xs) + len(pts) <= limits.max_breakpoints,
        f"flatten grid would exceed {limits.max_breakpoints} breakpoints",
    )
    values = [[_col_eval(strip, col, p) for p in pts] for col in strip.cols]
    merged = []
    per_col = [[] for _ in strip.cols]
    i = j = 0
    xs = strip.xs
    while i < len(xs) or j < len(pts):
        if j >= len(pts) or (i < len(xs) and xs[i] < pts[j]):
            merged.append(xs[i])
            for c, col in enumerate(strip.cols):
                per_col[c].append(col[0][i])
            i += 1
        else:
            merged.append(pts[j])
            for c in range(len(strip.cols)):
                per_col[c].append(values[c][j])
            j += 1
    strip.xs = merged
    for col, ys in zip(strip.cols, per_col):
        col[0] = ys


def _prune(strip):
    """Drop interior grid points that are collinear in *every* column."""
    xs = strip.xs
    if len(xs) <= 2:
        return
    keep = [0]
    for k in range(1, len(xs) - 1):
        dx0 = xs[k] - xs[k - 1]
        dx1 = xs[k + 1] - xs[k]
        for ys, _ls, _rs in strip.cols:
            if (ys[k] - ys[k - 1]) * dx1 != (ys[k + 1] - ys[k]) * dx0:
                keep.append(k)
                break
    keep.append(len(xs) - 1)
    if len(keep) == len(xs):
        return
    strip.xs = [xs[k] for k in keep]
    for col in strip.cols:
        ys = col[0]
        col[0] = [ys[k] for k in keep]


def _affine_step(strip, aff):
    n = len(strip.xs)
    new_cols = []
    for row, b in zip(aff.weights, aff.bias):
        ys = [b] * n
        ls = ZERO
        rs = ZERO
        for w, (cys, cls, crs) in zip(row, strip.cols):
            if w:
                ys = [acc + w * v for acc, v in zip(ys, cys)]
                ls = ls + w * cls
                rs = rs + w * crs
        new_cols.append([ys, ls, rs])
    strip.cols = new_cols


def _relu_crossings(strip, col):
    """Zero crossings of a column, rays included on the full line."""
    ys, ls, rs = col
    xs = strip.xs
    pts = []
    for k in range(len(xs) - 1):
        y0, y1 = ys[k], ys[k + 1]
        if (y0 < 0 < y1) or (y1 < 0 < y0):
            pts.append(xs[k] + y0 * (xs[k] - xs[k + 1]) / (y1 - y0))
    if not strip.windowed:
        y0 = ys[0]
        if ls and y0 and (y0 > 0) == (ls > 0):
            pts.append(xs[0] - y0 / ls)
        yn = ys[-1]
        if rs and yn and (yn > 0) != (rs > 0):
            pts.append(xs[-1] - yn / rs)
    return pts


def _apply_relu(strip, col):
    ys, ls, rs = col
    col[0] = [y if y > 0 else ZERO for y in ys]
    y0, yn = col[0][0], col[0][-1]
    col[1] = ls if (y0 > 0 or (y0 == 0 and ls < 0)) else ZERO
    col[2] = rs if (yn > 0 or (yn == 0 and rs > 0)) else ZERO


def _pullback_points(strip, col, knots):
    """Grid points where the column hits any of the sorted knot values."""
    ys, ls, rs = col
    xs = strip.xs
    pts = []
    for k in range(len(xs) - 1):
        y0, y1 = ys[k], ys[k + 1]
        if y0 == y1:
            continue
        lo, hi = (y0, y1) if y0 < y1 else (y1, y0)
        for c in knots[bisect.bisect_right(knots, lo):bisect.bisect_left(knots, hi)]:
            pts.append(xs[k] + (c - y0) * (xs[k + 1] - xs[k]) / (y1 - y0))
    if not strip.windowed:
        if ls:
            for c in knots:
                if c != ys[0] and (c - ys[0]) / ls < 0:
                    pts.append(xs[0] + (c - ys[0]) / ls)
        if rs:
            for c in knots:
                if c != ys[-1] and (c - ys[-1]) / rs > 0:
                    pts.append(xs[-1] + (c - ys[-1]) / rs)
    return pts


def _apply_subnet(strip, idx, sub, limits, memo):
    col = strip.cols[idx]
    ys, ls, rs = col
    if strip.windowed or (not ls and not rs):
        wlo = min(ys)
        whi = max(ys)
        g = _flatten_memo(sub, (wlo, whi), limits, memo)
    else:
        g = _flatten_memo(sub, None, limits, memo)
    if len(g.xs) > 1 or g.left_slope or g.right_slope:
        _refine(strip, _pullback_points(strip, col, list(g.xs)), limits)
        col = strip.cols[idx]
    cache = {}
    new_ys = []
    for v in col[0]:
        got = cache.get(v)
        if got is None:
            got = cache[v] = pwl_eval(g, v)
        new_ys.append(got)
    col[0] = new_ys
    ls, rs = col[1], col[2]
    col[1] = (g.left_slope if ls > 0 else g.right_slope) * ls if ls else ZERO
    col[2] = (g.right_slope if rs > 0 else g.left_slope) * rs if rs else ZERO


def _flatten_memo(net, interval, limits, memo):
    key = (id(net), interval)
    got = memo.get(key)
    if got is None:
        got = memo[key] = _flatten(net, interval, limits, memo)
    return got


def _flatten(net, interval, limits, memo) -> PiecewiseLinear1D:
    if net.input_dim != 1 or net.output_dim != 1:
        raise ValidationError("flatten needs a scalar (1 -> 1) net")
    if interval is None:
        strip = _Strip([ZERO], [[[ZERO], ONE, ONE]], windowed=False)
    else:
        lo, hi = interval
        if lo > hi:
            raise ValidationError("empty flatten window")
        if lo == hi:
            from .core_ir import eval_scalar

            return PiecewiseLinear1D((lo,), (eval_scalar(net, lo),), ZERO, ZERO)
        strip = _Strip([lo, hi], [[[lo, hi], ZERO, ZERO]], windowed=True)

    _affine_step(strip, net.affines[0])
    for acts, aff in zip(net.activations, net.affines[1:]):
        crossings = []
        for a, col in zip(acts, strip.cols):
            if a is Prim.RELU:
                crossings.extend(_relu_crossings(strip, col))
        if crossings:
            _refine(strip, crossings, limits)
        for j, a in enumerate(acts):
            if a is Prim.RELU:
                _apply_relu(strip, strip.cols[j])
            elif isinstance(a, SubNet):
                _apply_subnet(strip, j, net.registry[a.ref], limits, memo)
        _affine_step(strip, aff)
        _prune(strip)
    ys, ls, rs = strip.cols[0]
    return pwl_prune(
        PiecewiseLinear1D(tuple(strip.xs), tuple(ys), ls, rs)
    )


def flatten_net(net: NestNet, interval=None, limits: Limits | None = None
                ) -> PiecewiseLinear1D:
    """Flatten a scalar Exact net to the PiecewiseLinear1D it computes.

    ``interval=None`` demands equality on all of R; ``interval=(lo, hi)``
    (exact scalars) demands it on the window only, which is the mode
    that scales to nested constructions.
    """
    limits = limits or DEFAULT_LIMITS
    if net_backend(net) != EXACT:
        raise BackendMismatchError("only Exact nets can be flattened")
    limits.require(
        height(net) <= limits.max_flatten_height,
        f"flatten is limited to height {limits.max_flatten_height}",
    )
    if interval is not None:
        interval = (as_exact(interval[0]), as_exact(interval[1]))
    return _flatten(net, interval, limits, {})
