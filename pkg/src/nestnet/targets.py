"""Target functions on the unit cube with exact rational interfaces.

The approximator pipeline never touches floats: it samples the target at
rational grid points and sizes every tolerance from a *declared* modulus
of continuity rather than an estimated one.  A :class:`ModulusSpec` is
either ``Lipschitz(lam, alpha)`` -- meaning omega(r) = lam * r^alpha for
the L2 metric -- or a finite monotone table.  Both expose rational upper
and lower envelopes: ``upper`` feeds shift constants and fit tolerances
(which must dominate omega), ``lower`` feeds scale selection (which must
stay below omega).  For alpha = 1 the two coincide exactly; fractional
alpha goes through directed root bounds at 96 fractional bits.

Targets may also carry an exact ``box_range`` hook -- the min/max over an
axis-aligned box -- which the error-measurement fast path uses to avoid
evaluating the target at every grid point of a constant run.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

from gmpy2 import mpq

from .errors import ValidationError
from .numerics import (
    ONE,
    ZERO,
    as_exact,
    parse_rational,
    pow_lower,
    pow_upper,
    root_upper,
)

LIPSCHITZ = "lipschitz"
TABLE = "table"


@dataclass(frozen=True)
class ModulusSpec:
    """A declared modulus of continuity omega with rational envelopes."""

    kind: str
    lam: mpq = ZERO
    alpha: mpq = ONE
    table: tuple = ()  # ((r, omega(r)), ...) with r strictly increasing

    def __post_init__(self):
        if self.kind == LIPSCHITZ:
            if self.lam < 0:
                raise ValidationError("negative modulus coefficient")
            if not (0 < self.alpha <= 1):
                raise ValidationError("exponent must lie in (0, 1]")
        elif self.kind == TABLE:
            if not self.table or self.table[0] != (ZERO, ZERO):
                raise ValidationError("modulus table must start at (0, 0)")
            for (r0, w0), (r1, w1) in zip(self.table, self.table[1:]):
                if r1 <= r0 or w1 < w0:
                    raise ValidationError("modulus table must be monotone")
        else:
            raise ValidationError(f"unknown modulus kind {self.kind!r}")

    @classmethod
    def lipschitz(cls, lam, alpha=1) -> "ModulusSpec":
        return cls(LIPSCHITZ, as_exact(lam), as_exact(alpha))

    @classmethod
    def from_table(cls, pairs) -> "ModulusSpec":
        table = tuple((as_exact(r), as_exact(w)) for r, w in pairs)
        return cls(TABLE, table=table)

    @property
    def is_zero(self) -> bool:
        if self.kind == LIPSCHITZ:
            return self.lam == 0
        return all(w == 0 for _, w in self.table)

    def _power(self, t: mpq, up: bool) -> mpq:
        if self.alpha == 1:
            return t
        num = int(self.alpha.numerator)
        den = int(self.alpha.denominator)
        return pow_upper(t, num, den) if up else pow_lower(t, num, den)

    def upper(self, t) -> mpq:
        """Rational value >= omega(t)."""
        t = as_exact(t)
        if t < 0:
            raise ValidationError("modulus argument must be nonnegative")
        if t == 0:
            return ZERO
        if self.kind == LIPSCHITZ:
            return self.lam * self._power(t, up=True)
        for r, w in self.table:
            if r >= t:
                return w
        raise ValidationError(f"modulus table does not cover r = {t}")

    def lower(self, t) -> mpq:
        """Rational value <= omega(t)."""
        t = as_exact(t)
        if t < 0:
            raise ValidationError("modulus argument must be nonnegative")
        if self.kind == LIPSCHITZ:
            if t == 0:
                return ZERO
            return self.lam * self._power(t, up=False)
        best = ZERO
        for r, w in self.table:
            if r <= t:
                best = w
        return best


@dataclass(frozen=True)
class TargetFunction:
    """An exactly evaluable function [0, 1]^d -> R with declared modulus."""

    name: str
    dim: int
    evaluate: Callable  # tuple[mpq, ...] -> mpq
    modulus: ModulusSpec
    box_range: Callable | None = None  # (lo_vec, hi_vec) -> (min, max)

    def __call__(self, xs) -> mpq:
        xs = tuple(as_exact(x) for x in xs)
        if len(xs) != self.dim:
            raise ValidationError(
                f"{self.name} expects {self.dim} coordinates, got {len(xs)}")
        return self.evaluate(xs)

    def modulus_upper(self, t) -> mpq:
        return self.modulus.upper(t)

    def modulus_lower(self, t) -> mpq:
        return self.modulus.lower(t)


def modulus_spot_check(target: TargetFunction, samples: int = 24,
                       seed: int = 108301, tol=mpq(1, 10**9)) -> None:
    """Probabilistic consistency check: |f(x)-f(y)| <= omega(|x-y|) + tol.

    The distance enters through a rational upper bound, so an honest
    (evaluator, modulus) pair never trips this.  Raises ValidationError
    on the first violating pair.
    """
    rng = random.Random(seed)
    d = target.dim

    def point():
        return tuple(mpq(rng.randint(0, 1 << 12), 1 << 12) for _ in range(d))

    for _ in range(samples):
        x, y = point(), point()
        gap = abs(target(x) - target(y))
        dist_sq = sum((a - b) ** 2 for a, b in zip(x, y))
        bound = target.modulus.upper(root_upper(dist_sq, 2)) + tol
        if gap > bound:
            raise ValidationError(
                f"target {target.name!r} moves {gap} over a step its "
                f"modulus caps at {bound}")


def target_abs_shift(c, dim: int = 1) -> TargetFunction:
    """x -> |x_1 - c|; 1-Lipschitz."""
    c = as_exact(c)
    if not (0 <= c <= 1):
        raise ValidationError("shift must lie in [0, 1]")

    def evaluate(xs):
        return abs(xs[0] - c)

    def box_range(lo, hi):
        a, b = lo[0] - c, hi[0] - c
        top = max(abs(a), abs(b))
        return (ZERO if a <= 0 <= b else min(abs(a), abs(b))), top

    return TargetFunction(f"abs-shift:{c}", dim, evaluate,
                          ModulusSpec.lipschitz(ONE), box_range)


def target_hinge2(dim: int = 2) -> TargetFunction:
    """x -> |x_1 - x_2|; sqrt(2)-Lipschitz in L2."""
    if dim < 2:
        raise ValidationError("needs at least two coordinates")

    def evaluate(xs):
        return abs(xs[0] - xs[1])

    def box_range(lo, hi):
        a = lo[0] - hi[1]
        b = hi[0] - lo[1]
        top = max(abs(a), abs(b))
        return (ZERO if a <= 0 <= b else min(abs(a), abs(b))), top

    lam = root_upper(mpq(2), 2)
    return TargetFunction("hinge2", dim, evaluate,
                          ModulusSpec.lipschitz(lam), box_range)


def target_const(c, dim: int = 1) -> TargetFunction:
    c = as_exact(c)

    def evaluate(xs):
        return c

    def box_range(lo, hi):
        return c, c

    return TargetFunction(f"const:{c}", dim, evaluate,
                          ModulusSpec.lipschitz(ZERO), box_range)


def parse_target(text: str, dim: int) -> TargetFunction:
    """Parse CLI syntax: 'abs-shift:1/3', 'hinge2', 'const:2/5'."""
    name, _, arg = text.partition(":")
    if name == "abs-shift":
        if not arg:
            raise ValidationError("abs-shift needs a shift, e.g. abs-shift:1/3")
        return target_abs_shift(parse_rational(arg), dim)
    if name == "hinge2":
        if arg:
            raise ValidationError("hinge2 takes no argument")
        return target_hinge2(dim)
    if name == "const":
        if not arg:
            raise ValidationError("const needs a value, e.g. const:1/2")
        return target_const(parse_rational(arg), dim)
    raise ValidationError(f"unknown target {text!r}")
