"""Net documents: a flat, deterministic JSON interchange format.

A document stores the transitive closure of a net keyed by registry
id, plus the root's id, so sub-net sharing survives a round trip (the
loader materializes one object per id).  Scalars are encoded either as
exact rational strings ("p/q" with integer parts) or as f64 numbers;
the two are never mixed in one document.
"""

from __future__ import annotations

import hashlib
import json

from .core_ir import AffineMap, NestNet, Prim, SubNet, closure, net_backend
from .errors import ValidationError
from .numerics import (
    EXACT,
    FLOAT,
    format_rational,
    is_exact,
    parse_rational,
    to_float,
)

FORMAT = "nestnet/1"
RATIONAL = "rational"


# ---------------------------------------------------------------------------
# fingerprints (content-addressed registry ids)
# ---------------------------------------------------------------------------

def _scalar_key(v) -> str:
    return format_rational(v) if is_exact(v) else repr(v)


def fingerprint(net: NestNet) -> str:
    """Stable hex digest of a net's exact structure.

    Two structurally equal nets fingerprint identically across
    processes, which is what lets independently built helpers share a
    registry slot instead of colliding.
    """
    memo: dict = {}

    def fp(n: NestNet) -> str:
        got = memo.get(id(n))
        if got is not None:
            return got
        h = hashlib.blake2b(digest_size=16)

        def feed(s: str) -> None:
            h.update(s.encode())
            h.update(b"\x00")

        for aff in n.affines:
            feed(f"A{aff.out_dim}x{aff.in_dim}")
            for row in aff.weights:
                for w in row:
                    feed(_scalar_key(w))
            for b in aff.bias:
                feed(_scalar_key(b))
        for acts in n.activations:
            feed("|")
            for a in acts:
                if isinstance(a, SubNet):
                    feed("S" + fp(n.registry[a.ref]))
                else:
                    feed("P" + a.value)
        out = h.hexdigest()
        memo[id(n)] = out
        return out

    return fp(net)


def register_id(net: NestNet, hint: str) -> str:
    """Registry id for a helper net: readable hint + content hash."""
    return f"{hint}-{fingerprint(net)[:12]}"


# ---------------------------------------------------------------------------
# documents
# ---------------------------------------------------------------------------

def _encode_scalar(v, encoding: str):
    if encoding == RATIONAL:
        return format_rational(v)
    return to_float(v)


def _encode_net(net: NestNet, encoding: str) -> dict:
    affines = [
        {
            "weights": [[_encode_scalar(w, encoding) for w in row]
                        for row in aff.weights],
            "bias": [_encode_scalar(b, encoding) for b in aff.bias],
        }
        for aff in net.affines
    ]
    activations = [
        [a.value if isinstance(a, Prim) else {"sub": a.ref} for a in acts]
        for acts in net.activations
    ]
    return {"affines": affines, "activations": activations}


def net_to_document(net: NestNet, encoding: str | None = None) -> dict:
    """Serialize a net (and its whole sub-net closure) to a JSON-safe dict."""
    backend = net_backend(net)
    if encoding is None:
        encoding = RATIONAL if backend == EXACT else FLOAT
    if encoding not in (RATIONAL, FLOAT):
        raise ValidationError(f"unknown encoding {encoding!r}")
    if encoding == RATIONAL and backend != EXACT:
        raise ValidationError("cannot emit a rational document from an f64 net")
    subs = closure(net)
    root_id = "net-" + fingerprint(net)[:16]
    if root_id in subs:
        raise ValidationError("root id collides with a registry id")
    nets = {root_id: _encode_net(net, encoding)}
    for ref, sub in subs.items():
        nets[ref] = _encode_net(sub, encoding)
    return {
        "format": FORMAT,
        "encoding": encoding,
        "root": root_id,
        "nets": nets,
    }


def _decode_scalar(v, encoding: str):
    if encoding == RATIONAL:
        if not isinstance(v, str):
            raise ValidationError("rational documents store scalars as strings")
        return parse_rational(v)
    return float(v)


def _decode_net(payload: dict, encoding: str, resolve) -> NestNet:
    affines = tuple(
        AffineMap(
            tuple(tuple(_decode_scalar(w, encoding) for w in row)
                  for row in aff["weights"]),
            tuple(_decode_scalar(b, encoding) for b in aff["bias"]),
        )
        for aff in payload["affines"]
    )
    registry = {}
    activations = []
    for acts in payload["activations"]:
        row = []
        for a in acts:
            if isinstance(a, str):
                try:
                    row.append(Prim(a))
                except ValueError:
                    raise ValidationError(
                        f"unknown activation tag {a!r}") from None
            else:
                ref = a["sub"]
                registry[ref] = resolve(ref)
                row.append(SubNet(ref))
        activations.append(tuple(row))
    return NestNet(affines, tuple(activations), registry)


def document_to_net(doc: dict) -> NestNet:
    if doc.get("format") != FORMAT:
        raise ValidationError(f"unsupported document format {doc.get('format')!r}")
    encoding = doc.get("encoding")
    if encoding not in (RATIONAL, FLOAT):
        raise ValidationError(f"unknown encoding {encoding!r}")
    nets = doc["nets"]
    made: dict = {}
    building: set = set()

    def resolve(ref: str) -> NestNet:
        got = made.get(ref)
        if got is not None:
            return got
        if ref in building:
            raise ValidationError(f"cyclic reference through {ref!r}")
        if ref not in nets:
            raise ValidationError(f"dangling sub-net reference {ref!r}")
        building.add(ref)
        made[ref] = _decode_net(nets[ref], encoding, resolve)
        building.discard(ref)
        return made[ref]

    return resolve(doc["root"])


def serialize_net(net: NestNet, encoding: str | None = None) -> dict:
    """Canonical name for net -> document (see net_to_document)."""
    return net_to_document(net, encoding)


def deserialize_net(doc: dict) -> NestNet:
    """Canonical name for document -> net (see document_to_net)."""
    return document_to_net(doc)


def save_net(net: NestNet, path, encoding: str | None = None) -> None:
    doc = net_to_document(net, encoding)
    with open(path, "w") as fh:
        json.dump(doc, fh, allow_nan=False, indent=None, separators=(",", ":"))
        fh.write("\n")


def load_net(path) -> NestNet:
    with open(path) as fh:
        return document_to_net(json.load(fh))


# ---------------------------------------------------------------------------
# backend conversion
# ---------------------------------------------------------------------------

def net_to_f64(net: NestNet) -> NestNet:
    """Round every weight to f64 (sub-net sharing preserved).

    Useful for export and training experiments only: f64 evaluation of
    the step constructions is meaningless because their ramp widths
    sit far below one ulp.
    """
    memo: dict = {}

    def conv(n: NestNet) -> NestNet:
        got = memo.get(id(n))
        if got is not None:
            return got
        affines = tuple(
            AffineMap(
                tuple(tuple(to_float(w) for w in row) for row in a.weights),
                tuple(to_float(b) for b in a.bias),
            )
            for a in n.affines
        )
        registry = {ref: conv(sub) for ref, sub in n.registry.items()}
        out = NestNet(affines, n.activations, registry)
        memo[id(n)] = out
        return out

    return conv(net)
