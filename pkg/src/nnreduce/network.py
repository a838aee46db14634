"""Feedforward ReLU/linear networks: evaluation, validation and a JSON file format.

A network is an ordered list of affine layers, each followed by an elementwise
activation.  The activation of a layer is either a single kind applied to every
neuron, or a per-neuron tuple of kinds (needed for augmented networks that
carry a pass-through block next to a ReLU block).

File format (UTF-8 JSON)::

    {"format": 1,
     "input_dim": 5,
     "layers": [{"weights": [[...], ...], "bias": [...], "activation": "relu"}, ...]}

Format 2 is identical except that ``activation`` may also be a list with one
entry per neuron.  Floats are written with Python's shortest round-trip repr,
so ``load_network(save_network(net))`` reproduces every weight bit for bit.
"""

from __future__ import annotations

import enum
import json

from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import InputShapeError, NetworkParseError, PreconditionError

FORMAT_VERSIONS = (1, 2)


class Activation(str, enum.Enum):
    RELU = "relu"
    LINEAR = "linear"

    def apply(self, z):
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        return z


ActivationSpec = Union[Activation, str, Sequence[Union[Activation, str]]]


def _as_activation(spec: ActivationSpec):
    if isinstance(spec, (Activation, str)):
        return Activation(spec)
    kinds = tuple(Activation(s) for s in spec)
    if kinds and all(k is kinds[0] for k in kinds):
        # a uniform mask collapses to the plain form
        return kinds[0]
    return kinds


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


class Layer:
    """One affine map ``W x + b`` followed by an activation.

    Construction never checks shapes; use :meth:`Network.validate` for that,
    so that malformed inputs can still be inspected and reported.
    """

    __slots__ = ("weights", "bias", "activation", "_relu_mask", "_w_pos", "_w_neg")

    def __init__(self, weights, bias, activation: ActivationSpec = Activation.RELU):
        w = _frozen(weights)
        if w.ndim == 1:
            w = _frozen(w.reshape(1, -1))
        self.weights = w
        self.bias = _frozen(bias).reshape(-1)
        self.activation = _as_activation(activation)
        if isinstance(self.activation, Activation):
            mask = np.full(w.shape[0], self.activation is Activation.RELU)
        else:
            mask = np.array([k is Activation.RELU for k in self.activation], dtype=bool)
        mask.setflags(write=False)
        self._relu_mask = mask
        self._w_pos = _frozen(np.maximum(w, 0.0).T)
        self._w_neg = _frozen(np.minimum(w, 0.0).T)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def relu_mask(self) -> np.ndarray:
        """Boolean vector, True where the neuron applies ReLU."""
        return self._relu_mask

    @property
    def split_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Transposed positive and negative parts of the weights, ``(W+^T, W-^T)``."""
        return self._w_pos, self._w_neg

    @property
    def is_mixed(self) -> bool:
        return not isinstance(self.activation, Activation)

    def activate(self, z: np.ndarray) -> np.ndarray:
        if isinstance(self.activation, Activation):
            return self.activation.apply(z)
        return np.where(self._relu_mask, np.maximum(z, 0.0), z)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.activate(x @ self.weights.T + self.bias)

    def __eq__(self, other):
        if not isinstance(other, Layer):
            return NotImplemented
        return (
            self.weights.shape == other.weights.shape
            and self.bias.shape == other.bias.shape
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
            and np.array_equal(self._relu_mask, other._relu_mask)
        )

    def __hash__(self):
        return hash((self.weights.tobytes(), self.weights.shape, self.bias.tobytes(), self._relu_mask.tobytes()))

    def __repr__(self):
        act = self.activation.value if not self.is_mixed else "mixed"
        return f"Layer({self.in_dim}->{self.out_dim}, {act})"


class Network:
    """Immutable feedforward network ``eta_l = act_l(W_l eta_{l-1} + b_l)``."""

    __slots__ = ("layers", "input_dim")

    def __init__(self, layers: Sequence[Layer], input_dim: int | None = None):
        self.layers = tuple(layers)
        if input_dim is None:
            if not self.layers:
                raise PreconditionError("cannot infer input_dim of a network without layers")
            input_dim = self.layers[0].in_dim
        self.input_dim = int(input_dim)

    @classmethod
    def from_arrays(cls, weights, biases, activations) -> "Network":
        return cls([Layer(w, b, a) for w, b, a in zip(weights, biases, activations)])

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> list[int]:
        """``[n_0, n_1, ..., n_L]``."""
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.input_dim == other.input_dim
            and len(self.layers) == len(other.layers)
            and all(a == b for a, b in zip(self.layers, other.layers))
        )

    def __hash__(self):
        return hash((self.input_dim, self.layers))

    def __repr__(self):
        return "Network(" + "->".join(str(w) for w in self.widths) + ")"

    def validate(self) -> list[str]:
        return validate(self)

    def check(self) -> "Network":
        """Raise :class:`PreconditionError` listing every violated invariant."""
        problems = validate(self)
        if problems:
            raise PreconditionError("malformed network: " + "; ".join(problems))
        return self

    def lipschitz_bound(self) -> float:
        """Product of the layers' spectral norms (ReLU is 1-Lipschitz)."""
        return float(np.prod([np.linalg.norm(layer.weights, 2) for layer in self.layers]))


def evaluate(net: Network, x) -> np.ndarray:
    """Forward pass for one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (net.input_dim,) or x.ndim > 2:
        raise InputShapeError(
            f"network expects input of length {net.input_dim}, got shape {x.shape}"
        )
    eta = x
    for layer in net.layers:
        eta = layer(eta)
    return eta


def validate(net: Network) -> list[str]:
    """Return a list of human-readable invariant violations (empty if well-formed)."""
    findings = []
    try:
        layers = list(net.layers)
    except Exception as exc:  # pragma: no cover - defensive
        return [f"layers are not iterable: {exc}"]
    if not layers:
        return ["network has no layers"]
    if not isinstance(net.input_dim, (int, np.integer)) or net.input_dim <= 0:
        findings.append(f"input_dim must be a positive integer, got {net.input_dim!r}")
    prev = net.input_dim
    for i, layer in enumerate(layers):
        w, b = layer.weights, layer.bias
        if w.ndim != 2:
            findings.append(f"layers[{i}].weights: expected a matrix, got {w.ndim}-d array")
            prev = None
            continue
        if b.shape[0] != w.shape[0]:
            findings.append(
                f"layers[{i}]: dimension mismatch, bias length {b.shape[0]} "
                f"vs {w.shape[0]} weight rows"
            )
        if prev is not None and w.shape[1] != prev:
            findings.append(
                f"layers[{i}]: dimension mismatch, {w.shape[1]} weight columns "
                f"vs {prev} incoming values"
            )
        if layer.relu_mask.shape[0] != w.shape[0]:
            findings.append(
                f"layers[{i}].activation: {layer.relu_mask.shape[0]} entries for {w.shape[0]} neurons"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            findings.append(f"layers[{i}]: non-finite entry in weights or bias")
        prev = w.shape[0]
    return findings


# -- serialization ------------------------------------------------------------


def network_to_dict(net: Network) -> dict:
    mixed = any(layer.is_mixed for layer in net.layers)
    layers = []
    for layer in net.layers:
        if layer.is_mixed:
            act = [k.value for k in layer.activation]
        else:
            act = layer.activation.value
        layers.append(
            {"weights": layer.weights.tolist(), "bias": layer.bias.tolist(), "activation": act}
        )
    return {"format": 2 if mixed else 1, "input_dim": net.input_dim, "layers": layers}


def save_network(net: Network, path) -> None:
    # NaN/Inf cannot be stored losslessly in strict JSON
    text = json.dumps(network_to_dict(net), allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _float_vector(value, where: str) -> list[float]:
    if not isinstance(value, list):
        raise NetworkParseError(f"{where}: expected a list of numbers")
    out = []
    for j, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise NetworkParseError(f"{where}[{j}]: expected a number, got {v!r}")
        out.append(float(v))
    return out


def network_from_dict(doc) -> Network:
    if not isinstance(doc, dict):
        raise NetworkParseError("top level: expected a JSON object")
    fmt = doc.get("format")
    if fmt not in FORMAT_VERSIONS:
        raise NetworkParseError(f"format: unsupported version {fmt!r}")
    input_dim = doc.get("input_dim")
    if isinstance(input_dim, bool) or not isinstance(input_dim, int):
        raise NetworkParseError(f"input_dim: expected an integer, got {input_dim!r}")
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list):
        raise NetworkParseError("layers: expected a list")
    layers = []
    for i, raw in enumerate(raw_layers):
        where = f"layers[{i}]"
        if not isinstance(raw, dict):
            raise NetworkParseError(f"{where}: expected an object")
        rows = raw.get("weights")
        if not isinstance(rows, list) or not rows:
            raise NetworkParseError(f"{where}.weights: expected a non-empty list of rows")
        weights = [_float_vector(r, f"{where}.weights[{j}]") for j, r in enumerate(rows)]
        if len({len(r) for r in weights}) != 1:
            raise NetworkParseError(f"{where}.weights: ragged rows")
        bias = _float_vector(raw.get("bias"), f"{where}.bias")
        act = raw.get("activation")
        if isinstance(act, list) and fmt < 2:
            raise NetworkParseError(f"{where}.activation: per-neuron activations need format 2")
        try:
            if isinstance(act, list):
                activation = [Activation(a) for a in act]
            else:
                activation = Activation(act)
        except ValueError:
            raise NetworkParseError(f"{where}.activation: unknown activation {act!r}") from None
        layers.append(Layer(weights, bias, activation))
    if not layers:
        raise NetworkParseError("layers: network has no layers")
    return Network(layers, input_dim)


def load_network(path) -> Network:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return network_from_dict(doc)


def random_network(widths: Sequence[int], rng=None, scale: float = 1.0,
                   output_activation: ActivationSpec = Activation.LINEAR) -> Network:
    """ReLU network with the given widths ``[n_0, ..., n_L]`` and Gaussian weights."""
    rng = np.random.default_rng(rng)
    layers = []
    for i in range(1, len(widths)):
        fan_in = widths[i - 1]
        w = rng.normal(0.0, scale / np.sqrt(fan_in), size=(widths[i], fan_in))
        b = rng.normal(0.0, 0.1 * scale, size=widths[i])
        act = output_activation if i == len(widths) - 1 else Activation.RELU
        layers.append(Layer(w, b, act))
    return Network(layers, widths[0])
