"""Scalar backends and exact piecewise-linear function algebra.

Two scalar backends coexist and never mix silently:

* **Exact** — arbitrary-precision rationals (``gmpy2.mpq``), always in
  lowest terms with positive denominator.  This is the backend all
  constructive guarantees are stated in: the constructed nets contain
  ramp widths far below the f64 ulp at their operating magnitude, so
  float evaluation of them is *wrong*, not merely inaccurate.
* **Float** — plain ``float`` (f64), used by the trainer.

Mixing the two in a single net or evaluation raises
``BackendMismatchError``; there is no silent coercion anywhere in the
package (gmpy2 would happily coerce, so boundaries are checked here).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import gmpy2
from gmpy2 import mpq, mpz

from .errors import BackendMismatchError, ValidationError

Scalar = Union[mpq, float]

EXACT = "exact"
FLOAT = "f64"

ZERO = mpq(0)
ONE = mpq(1)


# ---------------------------------------------------------------------------
# scalar helpers
# ---------------------------------------------------------------------------

def rat(num, den=1) -> mpq:
    """Exact rational from ints (or an int-valued string)."""
    return mpq(num, den)


def parse_rational(text: str) -> mpq:
    """Parse 'p/q' or 'p'.  Decimal notation is rejected on purpose:
    a decimal literal on an Exact flag almost always means the caller
    wanted a binary float, which is a different number."""
    text = text.strip()
    if any(c in text for c in ".eE") and not text.lstrip("+-").isdigit():
        raise ValueError(f"expected a rational like 'p/q', got {text!r}")
    try:
        return mpq(text)
    except ValueError as exc:
        raise ValueError(f"expected a rational like 'p/q', got {text!r}") from exc


def format_rational(value: mpq) -> str:
    return str(value)


def is_exact(value) -> bool:
    return isinstance(value, (mpq, mpz, int)) and not isinstance(value, bool)


def backend_of(value) -> str:
    if isinstance(value, bool):
        raise ValidationError("bool is not a scalar")
    if isinstance(value, float):
        return FLOAT
    if isinstance(value, (mpq, mpz, int)):
        return EXACT
    raise ValidationError(f"not a scalar: {value!r}")


def common_backend(values: Iterable) -> str:
    """Backend of a collection; raises on a mix."""
    backend = None
    for v in values:
        b = backend_of(v)
        if backend is None:
            backend = b
        elif backend != b:
            raise BackendMismatchError(
                f"mixed scalar backends: {backend} and {b}"
            )
    if backend is None:
        raise ValidationError("empty scalar collection has no backend")
    return backend


def to_float(value: Scalar) -> float:
    return float(value)


def as_exact(value) -> mpq:
    """Coerce ints/mpz to mpq; floats are refused (no silent rounding)."""
    if isinstance(value, mpq):
        return value
    if isinstance(value, (int, mpz)) and not isinstance(value, bool):
        return mpq(value)
    raise BackendMismatchError(f"expected an exact scalar, got {value!r}")


# ---------------------------------------------------------------------------
# dyadics and rational root envelopes
# ---------------------------------------------------------------------------

def largest_dyadic_leq(x: mpq) -> mpq:
    """Largest power of two 2**e (e may be negative) with 2**e <= x."""
    x = as_exact(x)
    if x <= 0:
        raise ValueError("need a positive bound")
    p, q = x.numerator, x.denominator
    e = p.bit_length() - q.bit_length()
    # 2**e is within a factor of two of x; fix up by comparison
    if (mpq(2) ** e) > x:
        e -= 1
    assert mpq(2) ** e <= x < mpq(2) ** (e + 2)
    return mpq(2) ** e


def root_lower(x: mpq, k: int, bits: int = 96) -> mpq:
    """Rational L with L <= x**(1/k), within 2**-bits relative slack."""
    x = as_exact(x)
    if x < 0:
        raise ValueError("negative radicand")
    if x == 0:
        return ZERO
    scale = mpz(1) << bits
    n = (x.numerator * scale**k) // x.denominator
    r, _ = gmpy2.iroot(n, k)
    return mpq(r, scale)


def root_upper(x: mpq, k: int, bits: int = 96) -> mpq:
    """Rational U with U >= x**(1/k), within 2**-bits relative slack."""
    x = as_exact(x)
    if x < 0:
        raise ValueError("negative radicand")
    if x == 0:
        return ZERO
    scale = mpz(1) << bits
    n = (x.numerator * scale**k) // x.denominator
    r, exact = gmpy2.iroot(n, k)
    u = mpq(r, scale)
    if u**k >= x:
        return u
    return mpq(r + 1, scale)


def pow_upper(x: mpq, num: int, den: int, bits: int = 96) -> mpq:
    """Rational upper bound for x**(num/den), x >= 0, num >= 0, den >= 1."""
    if den == 1:
        return as_exact(x) ** num
    return root_upper(as_exact(x) ** num, den, bits)


def pow_lower(x: mpq, num: int, den: int, bits: int = 96) -> mpq:
    if den == 1:
        return as_exact(x) ** num
    return root_lower(as_exact(x) ** num, den, bits)


def isqrt_floor(n: int) -> int:
    r, _ = gmpy2.iroot(mpz(n), 2)
    return int(r)


def iroot_floor(n: int, k: int) -> int:
    r, _ = gmpy2.iroot(mpz(n), k)
    return int(r)


# ---------------------------------------------------------------------------
# exact piecewise-linear functions of one variable
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseLinear1D:
    """A continuous piecewise-linear function R -> R over the Exact backend.

    ``xs`` are strictly increasing breakpoints with values ``ys``;
    outside [xs[0], xs[-1]] the function continues with ``left_slope``
    and ``right_slope``.  An affine function is a single anchor point.
    Instances produced by a *windowed* flatten are only meaningful on
    the window (the end slopes extend the boundary pieces).
    """

    xs: tuple
    ys: tuple
    left_slope: mpq
    right_slope: mpq

    def __post_init__(self):
        if len(self.xs) != len(self.ys) or not self.xs:
            raise ValidationError("breakpoint/value length mismatch")
        for v in (*self.xs, *self.ys, self.left_slope, self.right_slope):
            if not isinstance(v, mpq):
                raise ValidationError(
                    "piecewise-linear data must be exact rationals"
                )
        for a, b in zip(self.xs, self.xs[1:]):
            if not a < b:
                raise ValidationError("breakpoints must strictly increase")

    # -- basic queries ---------------------------------------------------

    @property
    def breakpoint_count(self) -> int:
        return len(self.xs)

    def slopes(self) -> tuple:
        """Slopes of all pieces, left ray first, right ray last."""
        inner = tuple(
            (y1 - y0) / (x1 - x0)
            for (x0, x1, y0, y1) in zip(self.xs, self.xs[1:], self.ys, self.ys[1:])
        )
        return (self.left_slope, *inner, self.right_slope)

    def knots(self):
        return zip(self.xs, self.ys)


def pwl_from_points(points, left_slope=ZERO, right_slope=ZERO) -> PiecewiseLinear1D:
    xs, ys = zip(*((as_exact(x), as_exact(y)) for x, y in points))
    return PiecewiseLinear1D(xs, ys, as_exact(left_slope), as_exact(right_slope))


def pwl_affine(slope, intercept) -> PiecewiseLinear1D:
    slope = as_exact(slope)
    return PiecewiseLinear1D((ZERO,), (as_exact(intercept),), slope, slope)


def pwl_eval(f: PiecewiseLinear1D, x) -> mpq:
    x = as_exact(x)
    xs, ys = f.xs, f.ys
    i = bisect.bisect_right(xs, x)
    if i == 0:
        return ys[0] + f.left_slope * (x - xs[0])
    if i == len(xs):
        return ys[-1] + f.right_slope * (x - xs[-1])
    x0, x1 = xs[i - 1], xs[i]
    y0, y1 = ys[i - 1], ys[i]
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


def pwl_max_on(f: PiecewiseLinear1D, lo, hi) -> mpq:
    """Exact max of |f| over the closed interval [lo, hi].

    A linear piece attains its extreme absolute value at an endpoint,
    so scanning interval ends plus interior breakpoints is exact.
    """
    lo, hi = as_exact(lo), as_exact(hi)
    if lo > hi:
        raise ValueError("empty interval")
    best = abs(pwl_eval(f, lo))
    v = abs(pwl_eval(f, hi))
    if v > best:
        best = v
    i = bisect.bisect_right(f.xs, lo)
    j = bisect.bisect_left(f.xs, hi)
    for k in range(i, j):
        v = abs(f.ys[k])
        if v > best:
            best = v
    return best


def pwl_prune(f: PiecewiseLinear1D) -> PiecewiseLinear1D:
    """Drop breakpoints where the slope does not change (canonical form)."""
    if len(f.xs) == 1:
        return f
    sl = f.slopes()
    xs, ys = [], []
    for idx in range(len(f.xs)):
        if sl[idx] != sl[idx + 1]:
            xs.append(f.xs[idx])
            ys.append(f.ys[idx])
    if not xs:  # globally affine
        return PiecewiseLinear1D((f.xs[0],), (f.ys[0],), sl[0], sl[0])
    return PiecewiseLinear1D(tuple(xs), tuple(ys), f.left_slope, f.right_slope)


def pwl_of_net(net, interval=None, limits=None) -> PiecewiseLinear1D:
    """Flatten a scalar Exact net to the piecewise-linear function it
    computes (pointwise equal everywhere; with ``interval=(lo, hi)``,
    equal on the closed window, which prunes aggressively and is the
    only feasible mode for deeply nested nets).  See ``flatten``."""
    from .flatten import flatten_net

    return flatten_net(net, interval=interval, limits=limits)
