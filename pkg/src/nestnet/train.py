"""Float-backend training: reverse-mode gradients over nets whose hidden
activations may be a shared trainable scalar sub-net, plus the two-spiral
toy experiment.

The trainable view flattens a net into one parameter vector.  Each
distinct registered sub-net owns a single slot block no matter how many
activation positions reference it, so the gradient of a shared
activation parameter is the sum of the chain-rule terms from every use
site — the parameter-sharing scheme that separates the nested
architecture from an ordinary MLP of the same shape.

Supported topology: an affine chain whose activation entries are
identity, ReLU, or references to height-1 scalar sub-nets of the form
affine -> ReLU row -> affine.  That covers the experiment pair (plain
MLP vs. same MLP with every hidden activation replaced by one shared
scalar net) while keeping the backward pass small enough to audit.

All reductions run in a fixed order (numpy single-threaded sums), so a
(seed, config, dataset) triple reproduces its history bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_ir import (
    IDENTITY,
    RELU,
    AffineMap,
    NestNet,
    Prim,
    SubNet,
    net_backend,
    param_count,
    validate,
)
from .errors import DivergenceError, ValidationError
from .numerics import FLOAT
from .serialize import register_id

STANDARD = "standard"
NESTED = "nested"
SGD = "sgd"
ADAM = "adam"


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpiralConfig:
    """Two interleaved Archimedean spirals squeezed into the unit square."""

    samples: int  # per class
    seed: int = 0
    a0: float = 0.0
    a1: float = 1.0
    b: float = 1.0 / math.pi
    s_turns: int = 30
    tube: float = 0.005

    def __post_init__(self):
        if self.samples < 1:
            raise ValidationError("need at least one sample per class")
        if self.tube <= 0:
            raise ValidationError("tube radius must be positive")


@dataclass
class LabeledSet:
    """Points (n, 2) with integer class labels (n,)."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        if len(self.xs) != len(self.ys):
            raise ValidationError("points and labels disagree in length")

    def __len__(self) -> int:
        return len(self.ys)


def spiral_point(cls: int, theta: float, cfg: SpiralConfig) -> tuple:
    """Exact curve map: class spiral at angle theta, normalized, no tube."""
    a = cfg.a0 if cls == 0 else cfg.a1
    r = a + cfg.b * theta
    scale = 2.0 * (cfg.s_turns + 2)
    return (r * math.cos(theta) / scale + 0.5,
            r * math.sin(theta) / scale + 0.5)


def spiral_dataset(cfg: SpiralConfig) -> LabeledSet:
    """Sample both spiral classes: uniform theta along the curve, then a
    uniform offset in the closed tube disk.  Deterministic per seed."""
    rng = np.random.default_rng(cfg.seed)
    scale = 2.0 * (cfg.s_turns + 2)
    xs, ys = [], []
    for cls, a in ((0, cfg.a0), (1, cfg.a1)):
        theta = rng.uniform(0.0, cfg.s_turns * math.pi, cfg.samples)
        r = a + cfg.b * theta
        px = r * np.cos(theta) / scale + 0.5
        py = r * np.sin(theta) / scale + 0.5
        rad = cfg.tube * np.sqrt(rng.uniform(0.0, 1.0, cfg.samples))
        ang = rng.uniform(0.0, 2.0 * math.pi, cfg.samples)
        xs.append(np.stack([px + rad * np.cos(ang),
                            py + rad * np.sin(ang)], axis=1))
        ys.append(np.full(cfg.samples, cls, dtype=np.int64))
    return LabeledSet(np.concatenate(xs), np.concatenate(ys))


def standardize(reference: LabeledSet, *others: LabeledSet) -> tuple:
    """Shift/scale every set by the reference set's per-feature mean/std."""
    mean = reference.xs.mean(axis=0)
    std = reference.xs.std(axis=0)
    if np.any(std == 0):
        raise ValidationError("degenerate feature: zero standard deviation")
    out = tuple(LabeledSet((s.xs - mean) / std, s.ys.copy())
                for s in (reference,) + others)
    return out


# ---------------------------------------------------------------------------
# the trainable view
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _SubBlock:
    """Slot arrays of one shared scalar activation net (affine-ReLU-affine)."""

    w0: np.ndarray  # (h,)   first affine weights (input dim 1)
    b0: np.ndarray  # (h,)
    w1: np.ndarray  # (h,)   second affine weights (output dim 1)
    b1: int         # scalar slot


class TrainableNet:
    """A float-backend net flattened to one parameter vector.

    ``params`` is the live state; ``net`` is the construction-time
    snapshot (use :meth:`current_net` for a net carrying the trained
    weights).  ``index_map`` sends (net-id, layer, 'w', i, j) and
    (net-id, layer, 'b', i) to slots; every use site of a shared
    sub-net maps into the same block, so the number of distinct slots
    equals param_count of the net.
    """

    def __init__(self, net: NestNet):
        if net_backend(net) is not FLOAT:
            raise ValidationError("training requires a float-backend net")
        validate(net)
        self.net = net
        self.index_map: dict = {}
        values: list = []

        def add_affine(net_id: str, layer: int, aff: AffineMap) -> tuple:
            wslots = np.empty((aff.out_dim, aff.in_dim), dtype=np.int64)
            bslots = np.empty(aff.out_dim, dtype=np.int64)
            for i, row in enumerate(aff.weights):
                for j, w in enumerate(row):
                    self.index_map[(net_id, layer, "w", i, j)] = len(values)
                    wslots[i, j] = len(values)
                    values.append(float(w))
            for i, b in enumerate(aff.bias):
                self.index_map[(net_id, layer, "b", i)] = len(values)
                bslots[i] = len(values)
                values.append(float(b))
            return wslots, bslots

        self._affines = [add_affine("root", k, aff)
                         for k, aff in enumerate(net.affines)]

        self._subs: dict = {}
        sub_slot_lo = len(values)

        def add_sub(ref: str):
            if ref in self._subs:
                return
            sub = net.registry[ref]
            if (sub.input_dim, sub.output_dim) != (1, 1) \
                    or len(sub.affines) != 2 \
                    or any(a is not RELU for a in sub.activations[0]) \
                    or sub.registry:
                raise ValidationError(
                    f"sub-net {ref!r} is not affine-ReLU-affine scalar; "
                    "the trainer does not support it")
            w0s, b0s = add_affine(ref, 0, sub.affines[0])
            w1s, b1s = add_affine(ref, 1, sub.affines[1])
            self._subs[ref] = _SubBlock(w0s[:, 0], b0s, w1s[0], int(b1s[0]))

        # Per activation vector: contiguous groups of positions by kind.
        self._acts = []
        for acts in net.activations:
            groups: dict = {}
            for pos, act in enumerate(acts):
                key = act.ref if isinstance(act, SubNet) else act
                groups.setdefault(key, []).append(pos)
                if isinstance(act, SubNet):
                    add_sub(act.ref)
            self._acts.append(
                [(key, np.asarray(idx, dtype=np.int64))
                 for key, idx in groups.items()])

        self.params = np.asarray(values, dtype=np.float64)
        if len(self.params) != param_count(net):
            raise ValidationError("slot count disagrees with param_count")
        self.subnet_mask = np.zeros(len(self.params), dtype=bool)
        self.subnet_mask[sub_slot_lo:] = True

    # -- forward / backward ------------------------------------------------

    def _affine(self, k: int):
        wslots, bslots = self._affines[k]
        return self.params[wslots], self.params[bslots]

    def forward(self, xs: np.ndarray, cache: list | None = None) -> np.ndarray:
        """Batch forward pass; ``cache`` (if a list) collects what the
        backward pass needs."""
        z = np.asarray(xs, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.net.input_dim:
            raise ValidationError("batch shape disagrees with input dim")
        for k in range(len(self._affines)):
            w, b = self._affine(k)
            pre = z @ w.T + b
            if k == len(self._affines) - 1:
                if cache is not None:
                    cache.append((z, pre))
                return pre
            out = np.empty_like(pre)
            sub_caches = {}
            for key, idx in self._acts[k]:
                if key is IDENTITY:
                    out[:, idx] = pre[:, idx]
                elif key is RELU:
                    out[:, idx] = np.maximum(pre[:, idx], 0.0)
                else:
                    blk = self._subs[key]
                    w0 = self.params[blk.w0]
                    b0 = self.params[blk.b0]
                    w1 = self.params[blk.w1]
                    b1 = self.params[blk.b1]
                    a = pre[:, idx]
                    hidden = np.maximum(a[:, :, None] * w0 + b0, 0.0)
                    out[:, idx] = hidden @ w1 + b1
                    sub_caches[key] = (a, hidden)
            if cache is not None:
                cache.append((z, pre, sub_caches))
            z = out
        raise AssertionError("unreachable")

    def backward(self, cache: list, dlogits: np.ndarray) -> np.ndarray:
        """Gradient of the cached forward pass; shared sub-net slots
        accumulate one term per use site."""
        grad = np.zeros_like(self.params)
        d = dlogits
        for k in range(len(self._affines) - 1, -1, -1):
            if k < len(self._affines) - 1:
                z_in, pre, sub_caches = cache[k]
                dpre = np.empty_like(d)
                for key, idx in self._acts[k]:
                    if key is IDENTITY:
                        dpre[:, idx] = d[:, idx]
                    elif key is RELU:
                        dpre[:, idx] = d[:, idx] * (pre[:, idx] > 0)
                    else:
                        blk = self._subs[key]
                        w0 = self.params[blk.w0]
                        w1 = self.params[blk.w1]
                        a, hidden = sub_caches[key]
                        dout = d[:, idx]
                        live = hidden > 0
                        dhid = dout[:, :, None] * w1 * live
                        np.add.at(grad, blk.w1,
                                  np.einsum("bsh,bs->h", hidden, dout))
                        grad[blk.b1] += dout.sum()
                        np.add.at(grad, blk.w0,
                                  np.einsum("bsh,bs->h", dhid, a))
                        np.add.at(grad, blk.b0, dhid.sum(axis=(0, 1)))
                        dpre[:, idx] = dhid @ w0
                d = dpre
            else:
                z_in, _ = cache[k]
            wslots, bslots = self._affines[k]
            w = self.params[wslots]
            np.add.at(grad, wslots, d.T @ z_in)
            np.add.at(grad, bslots, d.sum(axis=0))
            if k:
                d = d @ w
        return grad

    # -- export -------------------------------------------------------------

    def current_net(self) -> NestNet:
        """Rebuild a net carrying the live parameter values."""

        def rebuild(net_id: str, template: NestNet, registry: dict,
                    rename: dict) -> NestNet:
            affs = []
            for k, aff in enumerate(template.affines):
                rows = tuple(
                    tuple(float(self.params[self.index_map[(net_id, k, "w",
                                                            i, j)]])
                          for j in range(aff.in_dim))
                    for i in range(aff.out_dim))
                bias = tuple(float(self.params[self.index_map[(net_id, k,
                                                               "b", i)]])
                             for i in range(aff.out_dim))
                affs.append(AffineMap(rows, bias))
            acts = tuple(
                tuple(SubNet(rename[a.ref]) if isinstance(a, SubNet) else a
                      for a in vec)
                for vec in template.activations)
            return NestNet(tuple(affs), acts, registry)

        registry: dict = {}
        rename: dict = {}
        for ref in self._subs:
            sub = rebuild(ref, self.net.registry[ref], {}, {})
            rename[ref] = register_id(sub, ref.rsplit("-", 1)[0])
            registry[rename[ref]] = sub
        return rebuild("root", self.net, registry, rename)


# ---------------------------------------------------------------------------
# the experiment pair
# ---------------------------------------------------------------------------


def _shared_activation() -> NestNet:
    """The trainable scalar activation at its published starting point:
    sigma(x - 0.2) + sigma(x - 0.1) - sigma(x)."""
    first = AffineMap(((1.0,), (1.0,), (1.0,)), (-0.2, -0.1, 0.0))
    second = AffineMap(((1.0, 1.0, -1.0),), (0.0,))
    return NestNet((first, second), ((RELU, RELU, RELU),))


def build_experiment_nets(width: int, kind: str, seed: int = 0,
                          depth: int = 4) -> TrainableNet:
    """One classifier of the experiment pair: 2 -> width^depth -> 2.

    ``standard`` uses ReLU hidden activations; ``nested`` replaces every
    hidden activation with ONE shared scalar sub-net (10 extra
    parameters total, regardless of width and depth).  Dense weights are
    seeded uniform He-style; biases start at zero.
    """
    if width < 1 or depth < 1:
        raise ValidationError("width and depth must be positive")
    if kind not in (STANDARD, NESTED):
        raise ValidationError(f"kind must be {STANDARD!r} or {NESTED!r}")
    rng = np.random.default_rng(seed)
    dims = [2] + [width] * depth + [2]
    affines = []
    for din, dout in zip(dims, dims[1:]):
        limit = math.sqrt(6.0 / din)
        w = rng.uniform(-limit, limit, (dout, din))
        affines.append(AffineMap(tuple(tuple(row) for row in w.tolist()),
                                 (0.0,) * dout))
    registry: dict = {}
    if kind == NESTED:
        rho = _shared_activation()
        ref = register_id(rho, "rho")
        registry[ref] = rho
        act: Prim | SubNet = SubNet(ref)
    else:
        act = RELU
    activations = tuple(((act,) * width) for _ in range(depth))
    return TrainableNet(NestNet(tuple(affines), activations, registry))


# ---------------------------------------------------------------------------
# loss, optimizer, loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 128
    optimizer: str = ADAM
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    base_lr: float = 0.002
    subnet_lr_multiplier: float = 0.2
    decay: float = 0.9
    decay_every: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.decay_every < 1:
            raise ValidationError("bad epoch/batch/decay settings")
        if self.base_lr <= 0 or self.subnet_lr_multiplier <= 0:
            raise ValidationError("learning rates must be positive")
        if not 0 < self.decay <= 1:
            raise ValidationError("decay must lie in (0, 1]")
        if self.optimizer not in (SGD, ADAM):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Staircase schedule: base_lr * decay^floor((epoch-1)/decay_every)."""
    return cfg.base_lr * cfg.decay ** ((epoch - 1) // cfg.decay_every)


def forward_backward(tnet: TrainableNet, batch) -> tuple:
    """Mean softmax cross-entropy over the batch and its full gradient."""
    xs, ys = batch
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    if len(xs) == 0:
        raise ValidationError("empty batch")
    cache: list = []
    logits = tnet.forward(xs, cache)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=1, keepdims=True)
    n = len(xs)
    loss = float(-np.log(probs[np.arange(n), ys]).mean())
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss!r}")
    dlogits = probs
    dlogits[np.arange(n), ys] -= 1.0
    dlogits /= n
    return loss, tnet.backward(cache, dlogits)


def evaluate_accuracy(tnet: TrainableNet, dataset: LabeledSet) -> float:
    """Argmax-class accuracy; ties resolve to the lower class index."""
    if len(dataset) == 0:
        raise ValidationError("empty dataset")
    logits = tnet.forward(dataset.xs)
    pred = logits.argmax(axis=1)  # first maximum wins: lower index on ties
    return float((pred == dataset.ys).mean())


def train(tnet: TrainableNet, dataset, cfg: TrainConfig) -> list:
    """Run the schedule; returns [(epoch, mean train loss, test accuracy)].

    ``dataset`` is a (train set, test set) pair, already standardized.
    Shared-activation slots train at subnet_lr_multiplier * the base
    schedule.  Deterministic for a fixed (seed, config, dataset).
    """
    train_set, test_set = dataset
    rng = np.random.default_rng(cfg.seed)
    scale = np.where(tnet.subnet_mask, cfg.subnet_lr_multiplier, 1.0)
    m = np.zeros_like(tnet.params)
    v = np.zeros_like(tnet.params)
    step = 0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        lr = learning_rate(cfg, epoch) * scale
        order = rng.permutation(len(train_set))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grad = forward_backward(
                tnet, (train_set.xs[idx], train_set.ys[idx]))
            losses.append(loss)
            if cfg.optimizer == SGD:
                tnet.params -= lr * grad
            else:
                step += 1
                m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
                v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
                mhat = m / (1.0 - cfg.beta1 ** step)
                vhat = v / (1.0 - cfg.beta2 ** step)
                tnet.params -= lr * mhat / (np.sqrt(vhat) + cfg.eps)
        history.append((epoch, float(np.mean(losses)),
                        evaluate_accuracy(tnet, test_set)))
    return history
