"""Executable IR for nested ReLU networks.

A net is an alternating chain  L_0, g_1, L_1, ..., g_m, L_m  of affine
maps and activation vectors.  Every entry of an activation vector is
the identity, the ReLU, or a reference to a *registered* scalar net
that is applied as the activation of that neuron.  Nesting activations
this way is what lets a fixed parameter budget buy doubly/triply
exponential step counts downstream.

Conventions
-----------
* A net owns a registry mapping id -> sub-net for the ids its own
  activation vectors mention (direct references only; sub-nets carry
  their own registries, so every net is self-contained).
* Parameters: an affine map R^a -> R^b counts (a+1)*b (zeros included;
  the count is about stored entries, not sparsity).  A net counts its
  own affine maps plus each *distinct registered sub-net id* in its
  transitive closure exactly once — sharing is by registry identity,
  never by structural comparison, so two structurally equal nets
  registered under different ids count twice.
* Height: identity/ReLU have height 0; a net is 1 + the max height of
  the sub-nets it references (1 if none, including affine-only nets).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import (
    BackendMismatchError,
    RegistryCollisionError,
    ValidationError,
)
from .numerics import EXACT, FLOAT, ZERO, backend_of


class Prim(enum.Enum):
    """Primitive activations."""

    IDENTITY = "id"
    RELU = "relu"


IDENTITY = Prim.IDENTITY
RELU = Prim.RELU


@dataclass(frozen=True)
class SubNet:
    """Activation entry referring to a registered scalar net."""

    ref: str


@dataclass(frozen=True)
class AffineMap:
    """x -> W x + b with W stored row-major as tuples."""

    weights: tuple  # d_out rows, each a tuple of d_in scalars
    bias: tuple  # d_out scalars

    def __post_init__(self):
        if len(self.weights) != len(self.bias) or not self.weights:
            raise ValidationError("affine map needs one bias per row")
        width = len(self.weights[0])
        if width == 0:
            raise ValidationError("affine map needs at least one input")
        for row in self.weights:
            if len(row) != width:
                raise ValidationError("ragged weight rows")

    @property
    def in_dim(self) -> int:
        return len(self.weights[0])

    @property
    def out_dim(self) -> int:
        return len(self.weights)

    @property
    def param_count(self) -> int:
        return (self.in_dim + 1) * self.out_dim


@dataclass(frozen=True)
class NestNet:
    affines: tuple  # m+1 AffineMaps
    activations: tuple = ()  # m tuples of Prim | SubNet
    registry: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.affines) != len(self.activations) + 1:
            raise ValidationError("need exactly one more affine map than "
                                  "activation vectors")
        for i, acts in enumerate(self.activations):
            d = self.affines[i].out_dim
            if len(acts) != d:
                raise ValidationError(
                    f"activation vector {i} has {len(acts)} entries for "
                    f"width {d}")
            if self.affines[i + 1].in_dim != d:
                raise ValidationError(f"dimension mismatch after layer {i}")
            for a in acts:
                if isinstance(a, SubNet):
                    if a.ref not in self.registry:
                        raise ValidationError(f"unregistered sub-net {a.ref!r}")
                elif not isinstance(a, Prim):
                    raise ValidationError(f"bad activation entry {a!r}")

    @property
    def input_dim(self) -> int:
        return self.affines[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.affines[-1].out_dim

    @property
    def depth(self) -> int:
        """Number of activation layers."""
        return len(self.activations)

    @property
    def width(self) -> int:
        """Maximum intermediate layer width (input/output excluded)."""
        return max((a.out_dim for a in self.affines[:-1]), default=0)


# ---------------------------------------------------------------------------
# structural queries
# ---------------------------------------------------------------------------

def net_backend(net: NestNet) -> str:
    """Scalar backend of a net's own weights ('exact' or 'f64')."""
    backend = None
    for aff in net.affines:
        for row in aff.weights:
            for w in row:
                b = backend_of(w)
                if backend is None:
                    backend = b
                elif backend != b:
                    raise BackendMismatchError("net mixes scalar backends")
        for w in aff.bias:
            b = backend_of(w)
            if backend != b:
                raise BackendMismatchError("net mixes scalar backends")
    return backend


def closure(net: NestNet) -> dict:
    """All transitively referenced sub-nets as {id: net}.

    Raises RegistryCollisionError if one id resolves to structurally
    different nets along different branches.
    """
    out: dict = {}
    seen_objs: set = set()

    def walk(n: NestNet, stack: tuple) -> None:
        if id(n) in stack:
            raise ValidationError("cyclic sub-net reference")
        if id(n) in seen_objs:
            return
        seen_objs.add(id(n))
        for ref, sub in n.registry.items():
            cur = out.get(ref)
            if cur is None:
                out[ref] = sub
            elif cur is not sub and cur != sub:
                raise RegistryCollisionError(
                    f"id {ref!r} bound to two different nets")
            walk(sub, stack + (id(n),))

    walk(net, ())
    return out


def height(net: NestNet) -> int:
    memo: dict = {}

    def rec(n: NestNet, stack: tuple) -> int:
        if id(n) in stack:
            raise ValidationError("cyclic sub-net reference")
        got = memo.get(id(n))
        if got is not None:
            return got
        subs = {
            a.ref for acts in n.activations for a in acts
            if isinstance(a, SubNet)
        }
        if not subs:
            h = 1
        else:
            h = 1 + max(rec(n.registry[r], stack + (id(n),)) for r in subs)
        memo[id(n)] = h
        return h

    return rec(net, ())


def param_count(net: NestNet) -> int:
    own = sum(a.param_count for a in net.affines)
    return own + sum(
        sum(a.param_count for a in sub.affines) for sub in closure(net).values()
    )


def validate(net: NestNet) -> None:
    """Full validation: dataclass invariants are rechecked transitively,
    sub-nets must be scalar, backends must agree across the closure."""
    subs = closure(net)  # also proves acyclicity / id consistency
    backend = net_backend(net)
    for ref, sub in subs.items():
        if sub.input_dim != 1 or sub.output_dim != 1:
            raise ValidationError(f"sub-net {ref!r} is not scalar")
        if net_backend(sub) != backend:
            raise BackendMismatchError(
                f"sub-net {ref!r} uses a different scalar backend")
    for acts in net.activations:
        for a in acts:
            if isinstance(a, SubNet) and a.ref not in net.registry:
                raise ValidationError(f"unregistered sub-net {a.ref!r}")
    h = height(net)
    if h < 1:
        raise ValidationError("impossible height")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _apply_affine(aff: AffineMap, vec) -> list:
    out = []
    for row, b in zip(aff.weights, aff.bias):
        acc = b
        for w, v in zip(row, vec):
            if w:  # interned zeros from block-diagonal stacking skip fast
                acc = acc + w * v
        out.append(acc)
    return out


def net_eval(net: NestNet, xs, _check: bool = True):
    """Evaluate the net at a point (tuple of scalars) -> tuple of scalars.

    The input backend must match the weight backend; mixing raises
    instead of coercing.
    """
    if len(xs) != net.input_dim:
        raise ValidationError(
            f"expected {net.input_dim} inputs, got {len(xs)}")
    if _check:
        in_backend = {backend_of(x) for x in xs}
        if len(in_backend) != 1 or in_backend.pop() != net_backend(net):
            raise BackendMismatchError(
                "input scalars do not match the net's backend")
    vec = _apply_affine(net.affines[0], xs)
    for acts, aff in zip(net.activations, net.affines[1:]):
        nxt = []
        for a, v in zip(acts, vec):
            if a is Prim.RELU:
                nxt.append(v if v > 0 else v * 0)
            elif a is Prim.IDENTITY:
                nxt.append(v)
            else:
                nxt.append(net_eval(net.registry[a.ref], (v,), _check=False)[0])
        vec = _apply_affine(aff, nxt)
    return tuple(vec)


def eval_scalar(net: NestNet, x):
    """Convenience wrapper for 1 -> 1 nets."""
    return net_eval(net, (x,))[0]


# ---------------------------------------------------------------------------
# affine algebra helpers
# ---------------------------------------------------------------------------

def _zero_like(backend: str):
    return 0.0 if backend == FLOAT else ZERO


def identity_affine(dim: int, backend: str = EXACT) -> AffineMap:
    zero = _zero_like(backend)
    one = 1.0 if backend == FLOAT else ZERO + 1
    rows = tuple(
        tuple(one if i == j else zero for j in range(dim)) for i in range(dim)
    )
    return AffineMap(rows, (zero,) * dim)


def fuse_affine(after: AffineMap, before: AffineMap) -> AffineMap:
    """(after . before) as one map: W = Wa Wb, b = Wa bb + ba."""
    if after.in_dim != before.out_dim:
        raise ValidationError("affine fusion dimension mismatch")
    rows = []
    bias = []
    for arow, ab in zip(after.weights, after.bias):
        new_row = []
        for j in range(before.in_dim):
            acc = None
            for aw, brow in zip(arow, before.weights):
                if aw:
                    term = aw * brow[j]
                    acc = term if acc is None else acc + term
            new_row.append(acc if acc is not None else aw * 0)
        acc_b = ab
        for aw, bb in zip(arow, before.bias):
            if aw:
                acc_b = acc_b + aw * bb
        rows.append(tuple(new_row))
        bias.append(acc_b)
    return AffineMap(tuple(rows), tuple(bias))


def affine_net(weights, bias, registry=None) -> NestNet:
    """A depth-0 (affine only) net."""
    return NestNet((AffineMap(tuple(map(tuple, weights)), tuple(bias)),),
                   (), dict(registry or {}))


def merge_registries(*regs) -> dict:
    out: dict = {}
    for reg in regs:
        for ref, sub in reg.items():
            cur = out.get(ref)
            if cur is None:
                out[ref] = sub
            elif cur is not sub and cur != sub:
                raise RegistryCollisionError(
                    f"id {ref!r} bound to two different nets")
    return out


# ---------------------------------------------------------------------------
# composition operators
# ---------------------------------------------------------------------------

def compose(outer: NestNet, inner: NestNet) -> NestNet:
    """outer . inner, fusing the boundary affine maps into one."""
    if outer.input_dim != inner.output_dim:
        raise ValidationError(
            f"compose: inner emits {inner.output_dim}, outer wants "
            f"{outer.input_dim}")
    fused = fuse_affine(outer.affines[0], inner.affines[-1])
    return NestNet(
        inner.affines[:-1] + (fused,) + outer.affines[1:],
        inner.activations + outer.activations,
        merge_registries(inner.registry, outer.registry),
    )


def _pad_depth(net: NestNet, target: int, backend: str) -> NestNet:
    """Append identity activation layers until depth == target."""
    if net.depth == target:
        return net
    affines = list(net.affines)
    acts = list(net.activations)
    d = net.output_dim
    for _ in range(target - net.depth):
        acts.append((Prim.IDENTITY,) * d)
        affines.append(identity_affine(d, backend))
    return NestNet(tuple(affines), tuple(acts), net.registry)


def parallel(*nets: NestNet) -> NestNet:
    """Block-diagonal stacking: inputs concatenate, outputs concatenate.

    Nets of unequal depth are padded with identity layers; registries
    merge, so sub-nets shared by id are counted once downstream.
    """
    if not nets:
        raise ValidationError("parallel of nothing")
    if len(nets) == 1:
        return nets[0]
    backend = net_backend(nets[0])
    for n in nets[1:]:
        if net_backend(n) != backend:
            raise BackendMismatchError("parallel across backends")
    depth = max(n.depth for n in nets)
    padded = [_pad_depth(n, depth, backend) for n in nets]
    zero = _zero_like(backend)

    affines = []
    for k in range(depth + 1):
        maps = [n.affines[k] for n in padded]
        in_dims = [m.in_dim for m in maps]
        rows = []
        bias = []
        for idx, m in enumerate(maps):
            before = sum(in_dims[:idx])
            after = sum(in_dims[idx + 1:])
            for row, b in zip(m.weights, m.bias):
                rows.append((zero,) * before + tuple(row) + (zero,) * after)
                bias.append(b)
        affines.append(AffineMap(tuple(rows), tuple(bias)))

    activations = tuple(
        tuple(a for n in padded for a in n.activations[k])
        for k in range(depth)
    )
    registry = merge_registries(*(n.registry for n in padded))
    return NestNet(tuple(affines), activations, registry)


# ---------------------------------------------------------------------------
# expansion to height 1
# ---------------------------------------------------------------------------

def _as_splice(entry, registry, backend, expand_cache):
    """Per-neuron standard chain (affines, activations) realizing the
    activation entry; primitives become one activation layer so that a
    spliced stage never vanishes."""
    one = identity_affine(1, backend)
    if entry is Prim.IDENTITY:
        return (one, one), ((Prim.IDENTITY,),)
    if entry is Prim.RELU:
        return (one, one), ((Prim.RELU,),)
    sub = _expand(registry[entry.ref], expand_cache)
    return sub.affines, sub.activations


def _blockdiag(maps, backend) -> AffineMap:
    zero = _zero_like(backend)
    in_dims = [m.in_dim for m in maps]
    rows = []
    bias = []
    for idx, m in enumerate(maps):
        before = sum(in_dims[:idx])
        after = sum(in_dims[idx + 1:])
        for row, b in zip(m.weights, m.bias):
            rows.append((zero,) * before + tuple(row) + (zero,) * after)
            bias.append(b)
    return AffineMap(tuple(rows), tuple(bias))


def _expand(net: NestNet, cache: dict) -> NestNet:
    got = cache.get(id(net))
    if got is not None:
        return got
    if not closure(net):
        # already a standard ReLU/Identity net: expansion is the identity
        cache[id(net)] = net
        return net
    backend = net_backend(net)
    one = identity_affine(1, backend)

    new_affines = [net.affines[0]]
    new_acts = []
    for acts, nxt in zip(net.activations, net.affines[1:]):
        chains = [_as_splice(a, net.registry, backend, cache) for a in acts]
        t = max(len(c[1]) for c in chains)
        # pad shorter chains with identity stages at the end
        padded = []
        for affs, avs in chains:
            affs, avs = list(affs), list(avs)
            while len(avs) < t:
                avs.append((Prim.IDENTITY,))
                affs.append(one)
            padded.append((affs, avs))
        # the host affines stay intact (identity bands separate them from
        # the spliced stages), so every use site contributes its sub-net's
        # parameters in full: expansion never hides the cost of sharing
        new_acts.append((Prim.IDENTITY,) * new_affines[-1].out_dim)
        for k in range(t):
            new_affines.append(_blockdiag([c[0][k] for c in padded], backend))
            new_acts.append(tuple(a for c in padded for a in c[1][k]))
        new_affines.append(_blockdiag([c[0][t] for c in padded], backend))
        new_acts.append((Prim.IDENTITY,) * nxt.in_dim)
        new_affines.append(nxt)
    out = NestNet(tuple(new_affines), tuple(new_acts), {})
    cache[id(net)] = out
    return out


def expand(net: NestNet, max_height: int = 4) -> NestNet:
    """Inline every sub-net activation per use site.

    The result has height 1 and computes exactly the same function
    (bit-for-bit under the Exact backend).  Shared sub-nets are
    duplicated per use site, which is precisely why the nested form is
    cheaper: param_count can only grow under expansion, strictly when
    any sub-net has two or more use sites.  Nets with no sub-nets are
    returned unchanged.  Refuses nets taller than ``max_height``.
    """
    if height(net) > max_height:
        raise ValidationError(
            f"refusing to expand a net of height {height(net)} "
            f"(limit {max_height})")
    return _expand(net, {})
