"""Resource guards.

Every potentially explosive operation takes an optional ``Limits`` and
refuses (``ResourceLimitError``) up front instead of degrading silently.
The defaults are sized for desk-scale verification work; callers that
enumerate (exhaustive checks, CLI sweeps) additionally honor the
``NESTNET_MAX_CASES`` environment variable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

DEFAULT_MAX_CASES = 1 << 16


@dataclass(frozen=True)
class Limits:
    # piecewise-linear flattening
    max_breakpoints: int = 10**6
    max_flatten_height: int = 4
    # enumeration guards: work that scales with the number of step
    # intervals / fit points must stay below these
    max_enum_steps: int = 1 << 12
    max_fit_points: int = 1 << 12
    # construction guards: weight magnitudes are capped by bit size
    # (constructing a floor net is O(r*n) work regardless of 2**(n**r),
    # so step count itself is not a build-time limit)
    max_weight_bits: int = 1 << 20
    # sup-norm smoothing chain is exponential in the dimension
    max_sup_dim: int = 3

    def require(self, ok: bool, what: str) -> None:
        if not ok:
            from .errors import ResourceLimitError

            raise ResourceLimitError(what)

    def with_(self, **kw) -> "Limits":
        return replace(self, **kw)


DEFAULT_LIMITS = Limits()


def max_cases(default: int = DEFAULT_MAX_CASES) -> int:
    """Exhaustive-test case budget, overridable via NESTNET_MAX_CASES."""
    raw = os.environ.get("NESTNET_MAX_CASES")
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"NESTNET_MAX_CASES must be an integer, got {raw!r}") from exc
    if value <= 0:
        raise ValueError("NESTNET_MAX_CASES must be positive")
    return min(default, value) if default else value
