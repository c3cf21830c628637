"""Diagnostics: weight spread, class correlations, hidden-unit partitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from sleepnet.datasets import Dataset
from sleepnet.experiments import ExperimentConfig, incremental_trial, load_data
from sleepnet.network import (
    Array,
    Network,
    TrainConfig,
    forward,
    init_network,
    train_task,
)
from sleepnet.snn import SleepConfig, run_sleep


@dataclass(frozen=True)
class SpreadStats:
    on_mean: Array
    off_mean: Array
    spread: Array

    @property
    def mean_spread(self) -> float:
        return float(self.spread.mean())


def weight_spread(net: Network, patches: Dataset) -> SpreadStats:
    """Mean weight from each image's on-pixels vs off-pixels to its output unit."""
    if net.n_layers != 2 or net.arch[0] != patches.n_features:
        raise ValueError("weight_spread needs a single-layer network over the patch pixels")
    w = net.weights[0]
    on_mean, off_mean = [], []
    for x, k in zip(patches.inputs, patches.labels):
        on = x > 0
        on_mean.append(w[k, on].mean())
        off_mean.append(w[k, ~on].mean() if (~on).any() else 0.0)
    on_arr, off_arr = np.array(on_mean), np.array(off_mean)
    return SpreadStats(on_arr, off_arr, on_arr - off_arr)


@dataclass
class CorrelationMatrix:
    matrix: Array
    skipped_pairs: int

    def mean_diagonal(self) -> float:
        return float(np.nanmean(np.diag(self.matrix)))

    def mean_off_diagonal(self) -> float:
        m = self.matrix
        return float(np.nanmean(m[~np.eye(len(m), dtype=bool)]))


def activation_correlation(
    net: Network,
    data: Dataset,
    layer: int,
    max_per_class: int = 200,
    seed: int = 0,
) -> CorrelationMatrix:
    """Average Pearson correlation of layer activations between classes.

    Entry ``(i, j)`` averages over pairs of examples from classes ``i`` and
    ``j``; the diagonal uses distinct pairs only. Each class is subsampled to
    at most ``max_per_class`` examples. Activation vectors with zero variance
    are left out and counted in ``skipped_pairs``.
    """
    if not 1 <= layer < net.n_layers:
        raise ValueError(f"layer must index a hidden or output layer, got {layer}")
    rng = np.random.default_rng(seed)
    acts = forward(net, data.inputs).layers[layer]
    k = data.n_classes
    centered: list[Array] = []
    dead: list[int] = []
    for c in range(k):
        idx = np.flatnonzero(data.labels == c)
        if idx.size > max_per_class:
            idx = np.sort(rng.choice(idx, size=max_per_class, replace=False))
        a = acts[idx]
        a = a - a.mean(axis=1, keepdims=True)
        norm = np.linalg.norm(a, axis=1)
        alive = norm > 0
        dead.append(int((~alive).sum()))
        centered.append(a[alive] / norm[alive, None])
    matrix = np.full((k, k), np.nan)
    skipped = 0
    for i in range(k):
        ni = len(centered[i]) + dead[i]
        for j in range(i, k):
            nj = len(centered[j]) + dead[j]
            r = centered[i] @ centered[j].T
            if i == j:
                n_alive = len(centered[i])
                total_pairs = ni * (ni - 1) // 2
                vals = r[np.triu_indices(n_alive, 1)]
            else:
                total_pairs = ni * nj
                vals = r.ravel()
            skipped += total_pairs - vals.size
            if vals.size:
                matrix[i, j] = matrix[j, i] = float(np.clip(vals, -1.0, 1.0).mean())
    return CorrelationMatrix(matrix, skipped)


@dataclass
class PartitionReport:
    """Hidden units of a one-hidden-layer, two-output net split by firing.

    ``A`` fire only for pattern 1, ``B`` only for pattern 2, ``C`` for both,
    ``D`` for neither. ``a`` and ``p`` decide the readout on pattern 1
    (output 1 wins iff ``a <= p``, ties going to output 1); ``b`` and ``q``
    decide it on pattern 2 (output 2 wins iff ``q < b``).
    """

    A: NDArray[np.int64]
    B: NDArray[np.int64]
    C: NDArray[np.int64]
    D: NDArray[np.int64]
    a: float
    b: float
    p: float
    q: float
    output1_drive: float
    output2_drive: float

    @property
    def a_lt_p(self) -> bool:
        return self.a < self.p

    @property
    def q_lt_b(self) -> bool:
        return self.q < self.b

    @property
    def predicted(self) -> tuple[int, int]:
        """Predicted category (0 or 1) for pattern 1 and pattern 2."""
        return (0 if self.a <= self.p else 1, 1 if self.q < self.b else 0)

    @property
    def output1_fires(self) -> bool:
        """Output 1 is positive and wins on pattern 1."""
        return self.output1_drive > 0 and self.a < self.p


def hidden_partition(net: Network, cat1: Array, cat2: Array) -> PartitionReport:
    if net.n_layers != 3 or net.arch[-1] != 2:
        raise ValueError("hidden_partition needs a [n, h, 2] network")
    h1 = forward(net, cat1).layers[1]
    h2 = forward(net, cat2).layers[1]
    f1, f2 = h1 > 0, h2 > 0
    A = np.flatnonzero(f1 & ~f2)
    B = np.flatnonzero(~f1 & f2)
    C = np.flatnonzero(f1 & f2)
    D = np.flatnonzero(~f1 & ~f2)
    out = net.weights[1]
    diff = out[1] - out[0]
    # Pattern-2 evidence is carried by B; A is silent on pattern 2.
    a = float(diff[A] @ h1[A])
    b = float(diff[B] @ h2[B])
    p = float(-diff[C] @ h1[C])
    q = float(-diff[C] @ h2[C])
    return PartitionReport(A, B, C, D, a, b, p, q, float(out[0] @ h1), float(out[1] @ h2))


def category_pair(
    rng: np.random.Generator, n_bits: int = 10, overlap: int = 5
) -> tuple[Array, Array]:
    """Uniformly random pair of binary vectors sharing exactly ``overlap`` on-bits.

    Every other bit is on in the first vector only, the second only, or
    neither, with equal odds. Identical pairs are redrawn.
    """
    if not 0 <= overlap < n_bits:
        raise ValueError("need 0 <= overlap < n_bits so the categories can differ")
    while True:
        perm = rng.permutation(n_bits)
        x1, x2 = np.zeros(n_bits), np.zeros(n_bits)
        x1[perm[:overlap]] = x2[perm[:overlap]] = 1.0
        rest = perm[overlap:]
        who = rng.integers(0, 3, size=rest.size)
        x1[rest[who == 0]] = 1.0
        x2[rest[who == 1]] = 1.0
        if not np.array_equal(x1, x2):
            return x1, x2


def forgot_category1(net: Network, cat1: Array) -> bool:
    """Output 1 is negative or below output 2 on pattern 1."""
    z = forward(net, cat1).logits
    return bool(z[0] < 0 or z[0] < z[1])


@dataclass
class ForgettingResult:
    rate: float
    forgotten: NDArray[np.bool_]
    nets: list[Network]
    patterns: list[tuple[Array, Array]]


def sequential_pair_training(
    seed: int,
    n_bits: int = 10,
    n_hidden: int = 30,
    overlap: int = 5,
    learning_rate: float = 0.1,
    epochs: int = 4,
):
    """Train category 1 then category 2 on a fresh ``[n_bits, n_hidden, 2]`` net."""
    rng = np.random.default_rng(seed)
    cat1, cat2 = category_pair(rng, n_bits, overlap)
    net = init_network([n_bits, n_hidden, 2], seed)
    cfg = TrainConfig(learning_rate=learning_rate, epochs=epochs, batch_size=1, seed=seed)
    net, stats = train_task(net, (cat1[None], np.array([0])), cfg)
    net, stats = train_task(net, (cat2[None], np.array([1])), cfg, stats)
    return net, stats, cat1, cat2


def forgetting_rate(
    trials: int = 100,
    n_bits: int = 10,
    n_hidden: int = 30,
    overlap: int = 5,
    learning_rate: float = 0.1,
    epochs: int = 4,
    seed: int = 0,
) -> ForgettingResult:
    """Fraction of trials in which training category 2 makes category 1 forgotten."""
    seeds = np.random.SeedSequence(seed).generate_state(trials)
    forgotten, nets, patterns = [], [], []
    for s in seeds:
        net, _, cat1, cat2 = sequential_pair_training(
            int(s), n_bits, n_hidden, overlap, learning_rate, epochs
        )
        forgotten.append(forgot_category1(net, cat1))
        nets.append(net)
        patterns.append((cat1, cat2))
    flags = np.array(forgotten)
    return ForgettingResult(float(flags.mean()), flags, nets, patterns)


def partition_study(sleep: SleepConfig, trials: int = 100, seed: int = 0) -> dict:
    """Partition reports and forgetting before and after one sleep, per trial."""
    seeds = np.random.SeedSequence(seed).generate_state(trials)
    rows = []
    for s in seeds:
        net, stats, cat1, cat2 = sequential_pair_training(int(s))
        slept = run_sleep(net, stats, sleep.with_seed(int(s)))
        row: dict = {"seed": int(s)}
        for tag, n in (("before", net), ("after", slept)):
            rep = hidden_partition(n, cat1, cat2)
            row[tag] = {
                "sizes": [len(rep.A), len(rep.B), len(rep.C), len(rep.D)],
                "a": rep.a,
                "b": rep.b,
                "p": rep.p,
                "q": rep.q,
                "predicted": list(rep.predicted),
                "forgot_category1": forgot_category1(n, cat1),
            }
        rows.append(row)

    def frac(tag: str, pred) -> float:
        return float(np.mean([pred(r[tag]) for r in rows]))

    summary = {
        tag: {
            "forgetting_rate": frac(tag, lambda r: r["forgot_category1"]),
            "both_correct": frac(tag, lambda r: r["predicted"] == [0, 1]),
            "c_empty": frac(tag, lambda r: r["sizes"][2] == 0),
        }
        for tag in ("before", "after")
    }
    return {"summary": summary, "trials": rows}


def spread_study(cfg: ExperimentConfig) -> dict:
    """Mean on/off weight spread of a Patches network after every phase."""
    per_trial = []
    labels: list[str] = []
    for s in cfg.trial_seeds():
        data, _ = load_data(cfg, s)
        spreads: list[float] = []
        labels, _, _ = incremental_trial(
            cfg, s, data, data,
            on_phase=lambda label, net, stats: spreads.append(weight_spread(net, data).mean_spread),
        )
        per_trial.append(spreads)
    arr = np.array(per_trial)
    return {"phases": labels, "mean_spread": arr.mean(axis=0).tolist(), "per_trial": arr.tolist()}
