"""Guaranteed model reduction: augmented difference networks and precision bounds.

Given a network ``big`` and a smaller replacement ``small`` that read the same
inputs, :func:`augment` builds a single network whose output is exactly
``big(x) - small(x)``.  Pushing an input box through it with interval
reachability bounds the worst-case output gap, :func:`precision`.  That bound
is what lets a verifier reason with ``small`` and still cover ``big``.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import PreconditionError, TrainingError
from .network import Activation, Layer, Network
from .reach import PartitionConfig, partition, propagate
from .sets import BoxUnion, IntervalBox


# -- augmentation -------------------------------------------------------------


def _check_pair(big: Network, small: Network) -> None:
    big.check()
    small.check()
    if big.input_dim != small.input_dim:
        raise PreconditionError(
            "the number of inputs of the two networks must be the same: "
            f"{big.input_dim} vs {small.input_dim}"
        )
    if big.output_dim != small.output_dim:
        raise PreconditionError(
            "the number of outputs of the two networks must be the same: "
            f"{big.output_dim} vs {small.output_dim}"
        )
    if big.depth < small.depth:
        raise PreconditionError(
            "the number of layers of the original network must be at least that of the "
            f"reduced one: {big.depth} < {small.depth}"
        )


def _block_diag(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]))
    out[: a.shape[0], : a.shape[1]] = a
    out[a.shape[0] :, a.shape[1] :] = b
    return out


def _kinds(layer: Layer) -> list[Activation]:
    return [Activation.RELU if m else Activation.LINEAR for m in layer.relu_mask]


def augment(big: Network, small: Network) -> Network:
    """Network with ``big.depth + 1`` layers computing ``big(x) - small(x)``.

    Layer ``l`` of the result runs layer ``l`` of ``big`` next to layer ``l``
    of ``small`` (stacked on the shared input for ``l = 1``, block diagonal
    afterwards).  When ``small`` is shallower its last hidden output is
    carried forward by identity blocks with linear activation until both
    output layers line up at ``l = L``; a final ``[I, -I]`` layer subtracts.
    """
    _check_pair(big, small)
    depth, small_depth = big.depth, small.depth
    carry_dim = small.widths[small_depth - 1]
    layers = []
    for ell in range(1, depth + 1):
        b_layer = big.layers[ell - 1]
        if ell <= small_depth - 1:
            s_layer = small.layers[ell - 1]
        elif ell < depth:
            s_layer = Layer(np.eye(carry_dim), np.zeros(carry_dim), Activation.LINEAR)
        else:
            s_layer = small.layers[small_depth - 1]
        if ell == 1:
            w = np.vstack([b_layer.weights, s_layer.weights])
        else:
            w = _block_diag(b_layer.weights, s_layer.weights)
        bias = np.concatenate([b_layer.bias, s_layer.bias])
        layers.append(Layer(w, bias, _kinds(b_layer) + _kinds(s_layer)))
    m = big.output_dim
    layers.append(Layer(np.hstack([np.eye(m), -np.eye(m)]), np.zeros(m), Activation.LINEAR))
    return Network(layers, big.input_dim)


# -- precision ----------------------------------------------------------------


@dataclass(frozen=True)
class Precision:
    """Certified bound ``rho >= sup_{x in input_set} |big(x) - small(x)|_inf``.

    ``sampled_lower_bound`` is the largest gap actually observed on probe
    points, so ``rho - sampled_lower_bound`` measures interval looseness.
    """

    rho: float
    input_set: IntervalBox
    partition_used: PartitionConfig = field(default_factory=PartitionConfig)
    norm: str = "inf"
    sampled_lower_bound: float = 0.0
    cell_count: int = 1
    wall_time: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.rho) and self.rho >= 0):
            raise PreconditionError(f"precision must be finite and nonnegative, got {self.rho}")

    def covers(self, box: IntervalBox) -> bool:
        return self.input_set.contains_box(box)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "norm": self.norm,
            "cell_count": self.cell_count,
            "sampled_lower_bound": self.sampled_lower_bound,
            "wall_time": self.wall_time,
            "input_lower": self.input_set.lower.tolist(),
            "input_upper": self.input_set.upper.tolist(),
            "partition": self.partition_used.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Precision":
        part = doc.get("partition") or {}
        return cls(
            rho=float(doc["rho"]),
            input_set=IntervalBox(doc["input_lower"], doc["input_upper"]),
            partition_used=PartitionConfig(**part),
            norm=doc.get("norm", "inf"),
            sampled_lower_bound=float(doc.get("sampled_lower_bound", 0.0)),
            cell_count=int(doc.get("cell_count", 1)),
            wall_time=float(doc.get("wall_time", 0.0)),
        )


def sampled_gap(big: Network, small: Network, box: IntervalBox, n: int = 10_000, rng=0) -> float:
    """Largest observed ``|big(x) - small(x)|_inf`` over random points and corners."""
    pts = [box.sample(n, rng), box.center[None, :]]
    if box.dim <= 12:
        pts.append(box.corners())
    x = np.vstack(pts)
    return float(np.max(np.abs(big(x) - small(x))))


def precision(big: Network, small: Network, box: IntervalBox, cfg: PartitionConfig | None = None,
              *, samples: int = 10_000, seed: int = 0, chunk: int = 65_536) -> Precision:
    """Bound the output gap of ``big`` and ``small`` over ``box``.

    The augmented network is propagated cell by cell (in chunks to bound
    memory); ``rho`` is the largest absolute endpoint over all output boxes.
    """
    cfg = cfg or PartitionConfig()
    start = time.perf_counter()
    aug = augment(big, small)
    lowers, uppers = partition(box, cfg)
    rho = 0.0
    for i in range(0, len(lowers), chunk):
        lo, hi = propagate(aug, lowers[i : i + chunk], uppers[i : i + chunk])
        rho = max(rho, float(np.max(np.abs(lo))), float(np.max(np.abs(hi))))
    lower_bound = sampled_gap(big, small, box, samples, seed) if samples > 0 else 0.0
    return Precision(
        rho=rho,
        input_set=box,
        partition_used=cfg,
        sampled_lower_bound=lower_bound,
        cell_count=len(lowers),
        wall_time=time.perf_counter() - start,
    )


# -- inflation ----------------------------------------------------------------


class InflationMode(str, enum.Enum):
    """Radius of the padding ball: the full bound, or half of it."""

    SOUND_FULL_RHO = "sound_full_rho"
    PAPER_HALF_RHO = "paper_half_rho"

    def radius(self, rho: float) -> float:
        return rho if self is InflationMode.SOUND_FULL_RHO else 0.5 * rho

    @classmethod
    def parse(cls, name: str) -> "InflationMode":
        aliases = {"sound": cls.SOUND_FULL_RHO, "paper": cls.PAPER_HALF_RHO}
        return aliases[name] if name in aliases else cls(name)


def inflate(sets: BoxUnion | IntervalBox, p: Precision | float,
            mode: InflationMode = InflationMode.SOUND_FULL_RHO) -> BoxUnion:
    """Pad every box by the inflation radius on both sides of each component."""
    rho = p.rho if isinstance(p, Precision) else float(p)
    r = InflationMode(mode).radius(rho)
    if isinstance(sets, IntervalBox):
        sets = BoxUnion(sets.lower, sets.upper)
    if r == 0:
        return sets
    return BoxUnion(sets.lowers - r, sets.uppers + r)


# -- distillation -------------------------------------------------------------


Teacher = Union[Network, Callable[[np.ndarray], np.ndarray]]


@dataclass
class DistillResult:
    network: Network
    mse: float
    history: list[float]


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads, lr=None):
        self.t += 1
        lr = self.lr if lr is None else lr
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _forward(ws, bs, z):
    acts = [z]
    for i, (w, b) in enumerate(zip(ws, bs)):
        pre = acts[-1] @ w.T + b
        acts.append(np.maximum(pre, 0.0) if i < len(ws) - 1 else pre)
    return acts


def distill(teacher: Teacher, hidden_dims: Sequence[int], train_box: IntervalBox, sample_count: int,
            seed: int = 0, *, init: Network | None = None, epochs: int = 3000,
            learning_rate: float = 3e-3, batch_size: int | None = 512) -> DistillResult:
    """Fit a ReLU network with the given hidden widths to ``teacher`` on ``train_box``.

    Deterministic for a fixed ``seed``.  Inputs and targets are standardized
    during training and the scaling is folded back into the first and last
    layers; the output layer is finally refit by linear least squares on the
    learned hidden features.  No accuracy is guaranteed; use :func:`precision`
    for a certified gap.
    """
    if sample_count < 1:
        raise PreconditionError("sample_count must be at least 1")
    hidden_dims = [int(h) for h in hidden_dims]
    if any(h < 1 for h in hidden_dims):
        raise PreconditionError("hidden widths must be positive")
    n_in = train_box.dim
    if isinstance(teacher, Network):
        if teacher.input_dim != n_in:
            raise PreconditionError("train_box dimension differs from the teacher's input count")
        if len(hidden_dims) + 1 > teacher.depth:
            raise PreconditionError(
                f"reduced network would have {len(hidden_dims) + 1} layers, teacher has {teacher.depth}"
            )
    rng = np.random.default_rng(seed)
    x = train_box.sample(sample_count, rng)
    y = np.asarray(teacher(x), dtype=float).reshape(sample_count, -1)
    n_out = y.shape[1]
    widths = [n_in] + hidden_dims + [n_out]

    if init is not None:
        if init.widths != widths:
            raise PreconditionError(f"init widths {init.widths} differ from requested {widths}")
        err = init(x) - y
        if not np.any(err):
            return DistillResult(init, 0.0, [0.0])

    x_mid = train_box.center
    x_scale = np.where(train_box.radius > 0, train_box.radius, 1.0)
    y_mid = y.mean(axis=0)
    y_scale = y.std(axis=0)
    y_scale = np.where(y_scale > 1e-12, y_scale, 1.0)
    z = (x - x_mid) / x_scale
    t = (y - y_mid) / y_scale

    if init is not None:
        ws = [np.array(l.weights) for l in init.layers]
        bs = [np.array(l.bias) for l in init.layers]
        bs[0] = bs[0] + ws[0] @ x_mid
        ws[0] = ws[0] * x_scale
        ws[-1] = ws[-1] / y_scale[:, None]
        bs[-1] = (bs[-1] - y_mid) / y_scale
    else:
        ws, bs = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / fan_in)
            ws.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))

    def loss_of(ws, bs):
        return float(np.mean((_forward(ws, bs, z)[-1] - t) ** 2))

    history = [loss_of(ws, bs)]
    opt = _Adam(ws + bs, learning_rate)
    n_layers = len(ws)
    batch = sample_count if not batch_size else min(batch_size, sample_count)
    steps_per_epoch = int(np.ceil(sample_count / batch))
    for epoch in range(epochs):
        # cosine decay keeps the final iterates from rattling
        lr = learning_rate * 0.5 * (1 + np.cos(np.pi * epoch / epochs))
        order = rng.permutation(sample_count)
        for s in range(steps_per_epoch):
            sel = order[s * batch : (s + 1) * batch]
            acts = _forward(ws, bs, z[sel])
            delta = 2.0 * (acts[-1] - t[sel]) / (sel.size * n_out)
            gw, gb = [None] * n_layers, [None] * n_layers
            for i in range(n_layers - 1, -1, -1):
                gw[i] = delta.T @ acts[i]
                gb[i] = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ ws[i]) * (acts[i] > 0)
            opt.step(gw + gb, lr)
        if epoch % 50 == 49 or epoch == epochs - 1:
            current = loss_of(ws, bs)
            if not np.isfinite(current):
                raise TrainingError(
                    f"training diverged at epoch {epoch + 1}: loss {current}, "
                    f"initial {history[0]:.6g}; try a smaller learning_rate"
                )
            history.append(current)

    # least-squares refit of the output layer on the learned features
    feats = _forward(ws, bs, z)[-2]
    design = np.hstack([feats, np.ones((sample_count, 1))])
    sol, *_ = np.linalg.lstsq(design, t, rcond=None)
    ws[-1], bs[-1] = sol[:-1].T.copy(), sol[-1].copy()
    final = loss_of(ws, bs)
    history.append(final)
    if not np.isfinite(final) or (history[0] > 0 and final >= history[0]):
        raise TrainingError(
            f"loss did not decrease: initial {history[0]:.6g}, final {final:.6g} "
            f"after {epochs} epochs (widths {widths}, lr {learning_rate})"
        )

    # fold the standardization back into the outer layers
    ws[0] = ws[0] / x_scale
    bs[0] = bs[0] - ws[0] @ x_mid
    ws[-1] = ws[-1] * y_scale[:, None]
    bs[-1] = bs[-1] * y_scale + y_mid
    acts = [Activation.RELU] * (n_layers - 1) + [Activation.LINEAR]
    net = Network([Layer(w, b, a) for w, b, a in zip(ws, bs, acts)], n_in)
    mse = float(np.mean((net(x) - y) ** 2))
    return DistillResult(net, mse, history)
