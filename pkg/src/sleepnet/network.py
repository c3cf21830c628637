"""Bias-free fully connected ReLU networks trained with plain SGD.

The network is a value type: every operation that changes weights returns a
new :class:`Network` and leaves its argument untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]

NETWORK_FORMAT = "sleepnet.network"
STATS_FORMAT = "sleepnet.activation_stats"
FORMAT_VERSION = 1
LOSSES = ("cross_entropy", "mse")


@dataclass(frozen=True)
class Network:
    """Layer widths plus one ``(arch[l+1], arch[l])`` matrix per layer pair."""

    arch: tuple[int, ...]
    weights: tuple[Array, ...]

    def __post_init__(self) -> None:
        arch = tuple(int(a) for a in self.arch)
        object.__setattr__(self, "arch", arch)
        weights = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        object.__setattr__(self, "weights", weights)
        if len(arch) < 2 or min(arch) < 1:
            raise ValueError(f"architecture needs >= 2 layers of width >= 1, got {arch}")
        if len(weights) != len(arch) - 1:
            raise ValueError(f"expected {len(arch) - 1} weight matrices, got {len(weights)}")
        for l, w in enumerate(weights):
            if w.shape != (arch[l + 1], arch[l]):
                raise ValueError(
                    f"weight matrix {l} has shape {w.shape}, expected {(arch[l + 1], arch[l])}"
                )
            if not np.all(np.isfinite(w)):
                raise ValueError(f"weight matrix {l} contains non-finite entries")

    @property
    def n_layers(self) -> int:
        return len(self.arch)

    @property
    def n_classes(self) -> int:
        return self.arch[-1]

    def copy(self) -> Network:
        return Network(self.arch, tuple(w.copy() for w in self.weights))

    def scaled(self, factors: Sequence[float]) -> Network:
        """Return a network with matrix ``l`` multiplied by ``factors[l]``."""
        return Network(self.arch, tuple(w * f for w, f in zip(self.weights, factors)))

    def allclose(self, other: Network, atol: float = 1e-12) -> bool:
        return self.arch == other.arch and all(
            np.allclose(a, b, rtol=0.0, atol=atol) for a, b in zip(self.weights, other.weights)
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    dropout: float = 0.0
    epochs: int = 1
    batch_size: int = 1
    seed: int = 0
    loss: str = "cross_entropy"

    def __post_init__(self) -> None:
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    @classmethod
    def patches(cls, seed: int = 0) -> TrainConfig:
        return cls(learning_rate=0.1, dropout=0.0, epochs=1, batch_size=1, seed=seed)

    @classmethod
    def mnist(cls, seed: int = 0) -> TrainConfig:
        return cls(learning_rate=0.065, dropout=0.2, epochs=2, batch_size=100, seed=seed)


@dataclass
class ActivationStats:
    """Per-layer maximum activations and the cumulative mean training input.

    ``max_activation[0]`` is the largest input value seen; entry ``l`` is the
    largest post-ReLU activation of layer ``l``.
    """

    max_activation: Array
    mean_input: Array
    n_examples_seen: int = 0

    @classmethod
    def empty(cls, arch: Sequence[int]) -> ActivationStats:
        return cls(np.zeros(len(arch)), np.zeros(arch[0]), 0)

    def copy(self) -> ActivationStats:
        return ActivationStats(
            self.max_activation.copy(), self.mean_input.copy(), self.n_examples_seen
        )

    def check(self, arch: Sequence[int]) -> None:
        if self.max_activation.shape != (len(arch),) or self.mean_input.shape != (arch[0],):
            raise ValueError("activation stats do not match network architecture")

    def to_dict(self) -> dict:
        return {
            "format": STATS_FORMAT,
            "version": FORMAT_VERSION,
            "max_activation": self.max_activation.tolist(),
            "mean_input": self.mean_input.tolist(),
            "n_examples_seen": self.n_examples_seen,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ActivationStats:
        _check_header(d, STATS_FORMAT)
        return cls(
            np.asarray(d["max_activation"], dtype=np.float64),
            np.asarray(d["mean_input"], dtype=np.float64),
            int(d["n_examples_seen"]),
        )


@dataclass(frozen=True)
class ActivationTrace:
    """Activations of every layer, input first, plus the raw output drive."""

    layers: tuple[Array, ...]
    logits: Array

    @property
    def output(self) -> Array:
        return self.layers[-1]


@dataclass
class Metrics:
    accuracy: float
    confusion: NDArray[np.int64]
    per_class_accuracy: Array = field(repr=False)


def init_network(arch: Sequence[int], seed: int | None = 0) -> Network:
    """Uniform init in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
    arch = tuple(int(a) for a in arch)
    if len(arch) < 2 or min(arch) < 1:
        raise ValueError(f"architecture needs >= 2 layers of width >= 1, got {arch}")
    rng = np.random.default_rng(seed)
    weights = []
    for n_in, n_out in zip(arch[:-1], arch[1:]):
        bound = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
    return Network(arch, tuple(weights))


def _as_batch(net: Network, x: NDArray) -> tuple[Array, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != net.arch[0]:
        raise ValueError(f"input has shape {x.shape}, network expects width {net.arch[0]}")
    return xb, single


def forward(net: Network, x: NDArray) -> ActivationTrace:
    """Propagate one vector or a batch (rows) through the network."""
    xb, single = _as_batch(net, x)
    acts = [xb]
    h = xb
    z = xb
    for w in net.weights:
        z = h @ w.T
        h = np.maximum(z, 0.0)
        acts.append(h)
    if single:
        return ActivationTrace(tuple(a[0] for a in acts), z[0])
    return ActivationTrace(tuple(acts), z)


def predict(net: Network, x: NDArray) -> NDArray[np.int64]:
    """Class with the largest output drive; ties go to the lowest index.

    The readout uses the signed output drive so that a network whose output
    units are all silent still ranks the classes (``np.argmax`` already
    resolves ties to the first index).
    """
    xb, single = _as_batch(net, x)
    h = xb
    for w in net.weights[:-1]:
        h = np.maximum(h @ w.T, 0.0)
    pred = np.argmax(h @ net.weights[-1].T, axis=1)
    return pred[0] if single else pred


def _softmax(z: Array) -> Array:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(
    net: Network | Sequence[Array],
    x: Array,
    y: NDArray[np.int64],
    masks: Sequence[Array | None] | None = None,
    loss: str = "cross_entropy",
) -> tuple[float, list[Array]]:
    """Mean batch loss on the output pre-activations and its weight gradients.

    ``loss="cross_entropy"`` is softmax cross-entropy; ``"mse"`` is half the
    squared distance to the one-hot target. ``masks[l]`` (already divided by
    the keep probability) multiplies the activation of hidden layer ``l + 1``.
    """
    weights = net.weights if isinstance(net, Network) else net
    n_hidden = len(weights) - 1
    if masks is None:
        masks = [None] * n_hidden
    acts = [x]
    zs = []
    h = x
    for l, w in enumerate(weights):
        z = h @ w.T
        zs.append(z)
        if l < n_hidden:
            h = np.maximum(z, 0.0)
            if masks[l] is not None:
                h = h * masks[l]
            acts.append(h)
    logits = zs[-1]
    n = x.shape[0]
    if loss == "mse":
        delta = logits.copy()
        delta[np.arange(n), y] -= 1.0
        value = float(0.5 * np.sum(delta**2) / n)
    else:
        p = _softmax(logits)
        value = float(-np.mean(np.log(p[np.arange(n), y] + 1e-300)))
        delta = p
        delta[np.arange(n), y] -= 1.0
    delta /= n
    grads: list[Array] = [np.empty(0)] * len(weights)
    for l in range(len(weights) - 1, -1, -1):
        grads[l] = delta.T @ acts[l]
        if l > 0:
            back = delta @ weights[l]
            if masks[l - 1] is not None:
                back = back * masks[l - 1]
            delta = back * (zs[l - 1] > 0)
    return value, grads


def _labels_inputs(data) -> tuple[Array, NDArray[np.int64]]:
    if isinstance(data, tuple):
        x, y = data
    else:
        x, y = data.inputs, data.labels
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)


def train_task(
    net: Network,
    data,
    cfg: TrainConfig,
    stats: ActivationStats | None = None,
) -> tuple[Network, ActivationStats]:
    """Mini-batch SGD on one task; also folds the task into ``stats``.

    ``data`` is a dataset with ``inputs``/``labels`` or an ``(x, y)`` tuple.
    Maximum activations are taken over the dropout-free activations of every
    training forward pass; the mean input is a running mean over all examples
    of all tasks passed in so far.
    """
    x, y = _labels_inputs(data)
    if x.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    if x.ndim != 2 or x.shape[1] != net.arch[0]:
        raise ValueError(f"inputs have shape {x.shape}, network expects width {net.arch[0]}")
    if y.min() < 0 or y.max() >= net.n_classes:
        raise ValueError(f"labels must lie in [0, {net.n_classes})")
    stats = ActivationStats.empty(net.arch) if stats is None else stats.copy()
    stats.check(net.arch)

    rng = np.random.default_rng(cfg.seed)
    weights = [w.copy() for w in net.weights]
    keep = 1.0 - cfg.dropout
    n = x.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            _record_max(weights, xb, stats)
            masks = None
            if cfg.dropout > 0:
                masks = [
                    (rng.random((len(idx), width)) < keep) / keep for width in net.arch[1:-1]
                ]
            _, grads = loss_and_grads(weights, xb, yb, masks, cfg.loss)
            if cfg.learning_rate > 0:
                for w, g in zip(weights, grads):
                    w -= cfg.learning_rate * g

    total = stats.n_examples_seen + n
    stats.mean_input = stats.mean_input + (x.sum(axis=0) - n * stats.mean_input) / total
    stats.n_examples_seen = total
    return Network(net.arch, tuple(weights)), stats


def _record_max(weights: Sequence[Array], xb: Array, stats: ActivationStats) -> None:
    h = xb
    stats.max_activation[0] = max(stats.max_activation[0], float(h.max()))
    for l, w in enumerate(weights, start=1):
        h = np.maximum(h @ w.T, 0.0)
        stats.max_activation[l] = max(stats.max_activation[l], float(h.max()))


def evaluate(net: Network, data) -> Metrics:
    x, y = _labels_inputs(data)
    if x.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = predict(net, x)
    k = net.n_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    counts = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(counts > 0, np.diag(confusion) / counts, np.nan)
    return Metrics(float(np.trace(confusion) / len(y)), confusion, per_class)


def _check_header(d: dict, fmt: str) -> None:
    if d.get("format") != fmt:
        raise ValueError(f"not a {fmt} document")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported {fmt} version {d.get('version')}")


def network_to_dict(net: Network) -> dict:
    return {
        "format": NETWORK_FORMAT,
        "version": FORMAT_VERSION,
        "arch": list(net.arch),
        "weights": [w.ravel().tolist() for w in net.weights],
    }


def network_from_dict(d: dict) -> Network:
    _check_header(d, NETWORK_FORMAT)
    arch = [int(a) for a in d["arch"]]
    weights = [
        np.asarray(flat, dtype=np.float64).reshape(arch[l + 1], arch[l])
        for l, flat in enumerate(d["weights"])
    ]
    return Network(tuple(arch), tuple(weights))


def save_network(net: Network, path: str | Path) -> Path:
    """Write ``.json`` (text) or anything else as ``.npz`` (bit-exact binary)."""
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(network_to_dict(net)))
        return path
    arrays = {f"w{l}": w for l, w in enumerate(net.weights)}
    header = np.array([FORMAT_VERSION, *net.arch], dtype=np.int64)
    with open(path, "wb") as fh:
        np.savez(fh, header=header, **arrays)
    return path


def load_network(path: str | Path) -> Network:
    path = Path(path)
    if path.suffix == ".json":
        return network_from_dict(json.loads(path.read_text()))
    with np.load(path) as z:
        header = z["header"]
        if int(header[0]) != FORMAT_VERSION:
            raise ValueError(f"unsupported network file version {int(header[0])}")
        arch = tuple(int(a) for a in header[1:])
        weights = tuple(z[f"w{l}"] for l in range(len(arch) - 1))
    return Network(arch, weights)


def save_stats(stats: ActivationStats, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(stats.to_dict()))
    return path


def load_stats(path: str | Path) -> ActivationStats:
    return ActivationStats.from_dict(json.loads(Path(path).read_text()))
