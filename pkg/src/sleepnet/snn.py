"""Spiking twin of a :class:`~sleepnet.network.Network` and the sleep phase.

The conversion rescales each weight matrix by the ratio of maximum
activations of the layers it connects. Sleep drives the spiking network with
Poisson spikes derived from the mean training input and lets a weight
dependent STDP rule rewrite the weights, which are then scaled back.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from sleepnet.network import ActivationStats, Array, Network

INPUT_MODES = ("full_mean", "masked_mean", "active_union")
MAX_DEFAULT_STEPS = 50_000


@dataclass(frozen=True)
class SleepConfig:
    """Parameters of one sleep phase.

    ``thresholds`` and ``synaptic_scales`` hold one entry per non-input layer.
    ``n_steps=None`` means 100 steps per training example seen, capped at
    50,000. The per-step spike probability of an input unit is
    ``min(1, intensity * input_rate * dt)``.
    """

    input_rate: float = 64.0
    thresholds: tuple[float, ...] = (1.045,)
    synaptic_scales: tuple[float, ...] = (4.25,)
    inc_factor: float = 0.0035
    dec_factor: float = 0.0002
    n_steps: int | None = None
    decay: float = 0.95
    stdp_beta: float = 5.0
    w_bound: float = 1.0
    input_mode: str = "full_mean"
    dt: float = 0.001
    mask_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        object.__setattr__(self, "synaptic_scales", tuple(float(a) for a in self.synaptic_scales))
        if len(self.thresholds) != len(self.synaptic_scales):
            raise ValueError("thresholds and synaptic_scales need one entry per layer")
        if min(self.thresholds, default=1.0) <= 0 or min(self.synaptic_scales, default=1.0) <= 0:
            raise ValueError("thresholds and synaptic scales must be positive")
        if self.inc_factor < 0 or self.dec_factor < 0:
            raise ValueError("inc_factor and dec_factor must be >= 0")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.n_steps is not None and self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.input_rate < 0 or self.dt <= 0:
            raise ValueError("input_rate must be >= 0 and dt > 0")
        if self.input_mode not in INPUT_MODES:
            raise ValueError(f"input_mode must be one of {INPUT_MODES}")
        if not 0.0 < self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must lie in (0, 1]")

    def steps_for(self, stats: ActivationStats) -> int:
        if self.n_steps is not None:
            return self.n_steps
        return min(100 * stats.n_examples_seen, MAX_DEFAULT_STEPS)

    def with_seed(self, seed: int) -> SleepConfig:
        return replace(self, seed=seed)

    @classmethod
    def patches(cls, **overrides) -> SleepConfig:
        return replace(cls(), **overrides)

    @classmethod
    def mnist(cls, **overrides) -> SleepConfig:
        base = cls(
            input_rate=130.0,
            thresholds=(2.1772, 1.5217, 0.9599),
            synaptic_scales=(3.4723, 25.52, 2.4186),
            inc_factor=0.0197,
            dec_factor=0.0016,
        )
        return replace(base, **overrides)


@dataclass
class SpikingNetwork:
    """Mutable LIF state for one sleep run.

    ``weights[l]`` equals the ANN matrix times ``scale_record[l]``;
    ``membrane[l]`` and ``last_spikes[l]`` belong to layer ``l + 1``.
    """

    arch: tuple[int, ...]
    weights: list[Array]
    scale_record: Array
    thresholds: Array
    synaptic_scales: Array
    decay: float
    membrane: list[Array] = field(default_factory=list)
    last_spikes: list[NDArray[np.bool_]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.membrane:
            self.membrane = [np.zeros(n) for n in self.arch[1:]]
        if not self.last_spikes:
            self.last_spikes = [np.zeros(n, dtype=bool) for n in self.arch]

    def reset(self) -> None:
        for v in self.membrane:
            v[:] = 0.0
        for s in self.last_spikes:
            s[:] = False


def ann_to_snn(net: Network, stats: ActivationStats, cfg: SleepConfig) -> SpikingNetwork:
    """Scale matrix ``l`` by ``max_activation[l] / max_activation[l + 1]``."""
    stats.check(net.arch)
    if len(cfg.thresholds) != net.n_layers - 1:
        raise ValueError(
            f"sleep config has {len(cfg.thresholds)} layer parameters, "
            f"network has {net.n_layers - 1} weight layers"
        )
    m = np.asarray(stats.max_activation, dtype=np.float64)
    if np.any(m <= 0):
        silent = np.flatnonzero(m <= 0).tolist()
        raise ValueError(f"layers {silent} have zero maximum activation; conversion undefined")
    factors = m[:-1] / m[1:]
    return SpikingNetwork(
        arch=net.arch,
        weights=[w * f for w, f in zip(net.weights, factors)],
        scale_record=factors,
        thresholds=np.asarray(cfg.thresholds),
        synaptic_scales=np.asarray(cfg.synaptic_scales),
        decay=cfg.decay,
    )


def snn_to_ann(snn: SpikingNetwork) -> Network:
    scales = np.asarray(snn.scale_record, dtype=np.float64)
    if scales.shape != (len(snn.weights),) or np.any(~(scales > 0)):
        raise ValueError("spiking network lacks a positive scale factor for every layer")
    return Network(snn.arch, tuple(w / f for w, f in zip(snn.weights, scales)))


def normalized_mean_input(stats: ActivationStats) -> Array:
    """Mean training input divided by the largest input value seen."""
    top = stats.max_activation[0]
    if top <= 0:
        raise ValueError("no input activity recorded")
    return stats.mean_input / top


def sleep_input(
    mean_input: Array, cfg: SleepConfig, rng: np.random.Generator
) -> Array:
    """Intensity image presented at one sleep step, according to ``cfg.input_mode``."""
    if cfg.input_mode == "full_mean":
        return mean_input
    if cfg.input_mode == "active_union":
        return (mean_input > 0).astype(np.float64)
    side = int(round(np.sqrt(mean_input.size)))
    if side * side != mean_input.size:
        raise ValueError("masked_mean needs a square input image")
    k = max(1, int(round(side * np.sqrt(cfg.mask_fraction))))
    r, c = rng.integers(0, side - k + 1, size=2)
    mask = np.zeros((side, side))
    mask[r : r + k, c : c + k] = 1.0
    return mean_input * mask.ravel()


def poisson_encode(
    intensity: Array, cfg: SleepConfig, rng: np.random.Generator
) -> NDArray[np.bool_]:
    """One timestep of independent Bernoulli spikes."""
    intensity = np.asarray(intensity, dtype=np.float64)
    if np.any(intensity < 0):
        raise ValueError("spike intensities must be nonnegative")
    p = np.minimum(1.0, intensity * (cfg.input_rate * cfg.dt))
    return rng.random(intensity.shape) < p


def lif_step(snn: SpikingNetwork, input_spikes: NDArray) -> list[NDArray[np.bool_]]:
    """Advance every layer by one step; returns spikes of all layers, input first.

    Each layer integrates the spikes its predecessor emitted in this same
    call, so activity crosses the whole network within one step.
    """
    x = np.asarray(input_spikes, dtype=bool)
    if x.shape != (snn.arch[0],):
        raise ValueError(f"input spikes have shape {x.shape}, expected ({snn.arch[0]},)")
    spikes = [x]
    for l, w in enumerate(snn.weights):
        v = snn.membrane[l]
        v *= snn.decay
        if x.any():
            v += snn.synaptic_scales[l] * w[:, x].sum(axis=1)
        fired = v > snn.thresholds[l]
        v[fired] = 0.0
        spikes.append(fired)
        x = fired
    snn.last_spikes = spikes
    return spikes


def potentiation(w: Array, cfg: SleepConfig) -> Array:
    """Step size for a causal pre/post pair; reaches zero at ``+w_bound``."""
    return cfg.inc_factor * np.maximum(0.0, np.tanh(-0.5 * cfg.stdp_beta * (w - cfg.w_bound)))


def depression(w: Array, cfg: SleepConfig) -> Array:
    """Magnitude for a post spike without pre spike; reaches zero at ``-w_bound``."""
    return cfg.dec_factor * np.maximum(0.0, np.tanh(0.5 * cfg.stdp_beta * (w + cfg.w_bound)))


def stdp_update(
    snn: SpikingNetwork,
    pre: NDArray,
    post: NDArray,
    layer: int,
    cfg: SleepConfig,
) -> None:
    """Apply the STDP rule in place to the rows of neurons that fired.

    ``tanh(u / 2) = 2 * sigmoid(u) - 1``: both steps follow a sigmoid of the
    weight, shifted so that repeated updates stop at the soft bound.
    """
    rows = np.flatnonzero(post)
    if rows.size == 0:
        return
    pre = np.asarray(pre, dtype=bool)
    w = snn.weights[layer]
    block = w[rows]
    delta = np.where(pre, potentiation(block, cfg), -depression(block, cfg))
    w[rows] = block + delta


def _input_spikes(mean_input: Array, cfg: SleepConfig, rng: np.random.Generator, n_steps: int):
    """Yield the input spike vector of every step.

    Same stream as calling :func:`sleep_input` then :func:`poisson_encode`
    each step. When the intensity image is fixed the uniforms are drawn in
    blocks, which the generator produces in the same order.
    """
    if cfg.input_mode == "masked_mean":
        for _ in range(n_steps):
            yield poisson_encode(sleep_input(mean_input, cfg, rng), cfg, rng)
        return
    intensity = sleep_input(mean_input, cfg, rng)
    if np.any(intensity < 0):
        raise ValueError("spike intensities must be nonnegative")
    p = np.minimum(1.0, intensity * (cfg.input_rate * cfg.dt))
    block = 1024
    for start in range(0, n_steps, block):
        u = rng.random((min(block, n_steps - start), p.size))
        yield from u < p


def run_sleep(
    net: Network,
    stats: ActivationStats,
    cfg: SleepConfig,
    trace: list | None = None,
) -> Network:
    """Convert, run ``cfg.steps_for(stats)`` sleep steps with STDP, convert back.

    If ``trace`` is a list, the per-step spike counts of every layer are
    appended to it. Without plasticity the weights come back unchanged, so
    the simulation only runs when a trace is requested.
    """
    n_steps = cfg.steps_for(stats)
    plastic = cfg.inc_factor > 0 or cfg.dec_factor > 0
    if n_steps == 0 or (not plastic and trace is None):
        return net.copy()
    snn = ann_to_snn(net, stats, cfg)
    rng = np.random.default_rng(cfg.seed)
    mean_input = normalized_mean_input(stats)
    for x in _input_spikes(mean_input, cfg, rng, n_steps):
        spikes = lif_step(snn, x)
        if plastic:
            for l in range(len(snn.weights)):
                stdp_update(snn, spikes[l], spikes[l + 1], l, cfg)
        if trace is not None:
            trace.append([int(s.sum()) for s in spikes])
    return snn_to_ann(snn) if plastic else net.copy()

