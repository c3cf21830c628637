"""Incremental-learning, generalization and transfer protocols, plus a GA.

Every protocol is a pure function of its config: trial seeds are derived from
``ExperimentConfig.seed`` so that the sleeping run and its no-sleep baseline
share initial weights, data and training order.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from sleepnet.datasets import (
    CorruptionSpec,
    Dataset,
    corrupt,
    gen_patches,
    load_mnist_split,
    split_tasks,
)
from sleepnet.network import (
    ActivationStats,
    Network,
    TrainConfig,
    evaluate,
    init_network,
    train_task,
)
from sleepnet.snn import SleepConfig, run_sleep

log = logging.getLogger(__name__)

SCHEDULES = ("after_each_task", "final_only", "none")
REPORT_FORMAT = "sleepnet.run_report"


@dataclass(frozen=True)
class DatasetSpec:
    """Where the data comes from.

    ``kind="patches"`` regenerates a fresh Patches layout for every trial;
    ``kind="mnist"`` reads the standard IDX files from ``root`` (or the
    ``SLEEPNET_DATA`` directory when ``root`` is None).
    """

    kind: str = "patches"
    n_side: int = 10
    n_images: int = 4
    overlap: int = 15
    on_count: int = 25
    root: str | None = None
    train_limit: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("patches", "mnist"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "patches"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    arch: tuple[int, ...] = (100, 4)
    task_groups: tuple[tuple[int, ...], ...] = ((0, 1), (2, 3))
    train: TrainConfig = field(default_factory=TrainConfig.patches)
    sleep: SleepConfig = field(default_factory=SleepConfig.patches)
    n_trials: int = 1
    sleep_schedule: str = "after_each_task"
    task_orders: int = 0
    corruption_kinds: tuple[str, ...] = ("gaussian_noise", "gaussian_blur")
    corruption_levels: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    overlap_values: tuple[int, ...] = (0, 5, 10, 15, 20, 25)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "arch", tuple(int(a) for a in self.arch))
        object.__setattr__(
            self, "task_groups", tuple(tuple(int(c) for c in g) for g in self.task_groups)
        )
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.sleep_schedule not in SCHEDULES:
            raise ValueError(f"sleep_schedule must be one of {SCHEDULES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        if "dataset" in d:
            d["dataset"] = DatasetSpec(**d["dataset"])
        if "train" in d:
            d["train"] = TrainConfig(**d["train"])
        if "sleep" in d:
            d["sleep"] = SleepConfig(**d["sleep"])
        for key in ("arch", "corruption_kinds", "corruption_levels", "overlap_values"):
            if key in d:
                d[key] = tuple(d[key])
        if "task_groups" in d:
            d["task_groups"] = tuple(tuple(g) for g in d["task_groups"])
        return cls(**d)

    def trial_seeds(self) -> list[int]:
        return [int(s) for s in np.random.SeedSequence(self.seed).generate_state(self.n_trials)]


@dataclass
class RunReport:
    """Accuracy per task (rows, last row overall) and phase (columns)."""

    name: str
    phases: list[str]
    task_labels: list[str]
    trial_accuracy: np.ndarray
    confusion: np.ndarray
    config: dict
    seeds: list[int]
    extras: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> np.ndarray:
        return self.trial_accuracy.mean(axis=0)

    @property
    def accuracy_std(self) -> np.ndarray:
        return self.trial_accuracy.std(axis=0)

    @property
    def row_labels(self) -> list[str]:
        return [*self.task_labels, "overall"]

    def final(self) -> np.ndarray:
        """Mean accuracy of every row after the last phase."""
        return self.accuracy[:, -1]

    def column(self, phase: str) -> np.ndarray:
        return self.accuracy[:, self.phases.index(phase)]

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": 1,
            "name": self.name,
            "phases": self.phases,
            "rows": self.row_labels,
            "accuracy": self.accuracy.tolist(),
            "accuracy_std": self.accuracy_std.tolist(),
            "trial_accuracy": self.trial_accuracy.tolist(),
            "confusion": self.confusion.tolist(),
            "config": self.config,
            "seeds": self.seeds,
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunReport:
        if d.get("format") != REPORT_FORMAT:
            raise ValueError("not a run report document")
        return cls(
            d["name"],
            list(d["phases"]),
            list(d["rows"][:-1]),
            np.asarray(d["trial_accuracy"], dtype=np.float64),
            np.asarray(d["confusion"], dtype=np.int64),
            d["config"],
            list(d["seeds"]),
            d.get("extras", {}),
        )

    def write_accuracy_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", *self.phases])
            for label, row in zip(self.row_labels, self.accuracy):
                w.writerow([label, *(f"{v:.6f}" for v in row)])
        return path

    def save(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "report.json", self.write_accuracy_csv(out / "accuracy.csv")]
        paths[0].write_text(json.dumps(self.to_dict(), indent=1))
        for phase, conf in zip(self.phases, self.confusion):
            p = out / f"confusion_{phase}.csv"
            np.savetxt(p, conf, fmt="%d", delimiter=",")
            paths.append(p)
        return paths


def _patches_for(spec: DatasetSpec, seed: int) -> Dataset:
    return gen_patches(spec.n_side, spec.n_images, spec.overlap, spec.on_count, seed)


def load_data(cfg: ExperimentConfig, trial_seed: int = 0) -> tuple[Dataset, Dataset]:
    """Train and test sets for one trial (Patches train and test coincide)."""
    spec = cfg.dataset
    if spec.kind == "patches":
        data = _patches_for(spec, trial_seed)
        return data, data
    train, test = load_mnist_split(spec.root)
    if spec.train_limit is not None and spec.train_limit < len(train):
        # fixed draw so every trial and schedule sees the same subset
        keep = np.random.default_rng(0).choice(len(train), spec.train_limit, replace=False)
        train = train.subset(np.sort(keep))
    return train, test


class _DataCache:
    """Loads MNIST once per protocol call; Patches are regenerated per trial."""

    def __init__(self, cfg: ExperimentConfig, data: tuple[Dataset, Dataset] | None):
        self.cfg = cfg
        self.data = data

    def get(self, trial_seed: int) -> tuple[Dataset, Dataset]:
        if self.data is not None:
            return self.data
        if self.cfg.dataset.kind == "patches":
            return load_data(self.cfg, trial_seed)
        self.data = load_data(self.cfg)
        return self.data


def _task_order(cfg: ExperimentConfig, trial_seed: int) -> list[int]:
    order = list(range(len(cfg.task_groups)))
    if cfg.task_orders > 0:
        rng = np.random.default_rng([trial_seed, 17])
        order = [int(i) for i in rng.permutation(order)]
    return order


def _sleep_cfg(cfg: ExperimentConfig, trial_seed: int, phase: int) -> SleepConfig:
    return cfg.sleep.with_seed(int(np.random.SeedSequence([trial_seed, 101, phase]).generate_state(1)[0]))


def _train_cfg(cfg: ExperimentConfig, trial_seed: int, task_pos: int) -> TrainConfig:
    seed = int(np.random.SeedSequence([trial_seed, 7, task_pos]).generate_state(1)[0])
    return replace(cfg.train, seed=seed)


def _evaluate_tasks(net: Network, tasks, test_all: Dataset) -> tuple[list[float], np.ndarray]:
    accs = [evaluate(net, t.data).accuracy for t in tasks]
    overall = evaluate(net, test_all)
    return [*accs, overall.accuracy], overall.confusion


def incremental_trial(
    cfg: ExperimentConfig,
    trial_seed: int,
    train: Dataset,
    test: Dataset,
    schedule: str | None = None,
    on_phase: Callable[[str, Network, ActivationStats], None] | None = None,
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """One pass over the task sequence; returns phase labels, accuracies, confusions.

    ``on_phase`` is called with ``(label, net, stats)`` after every phase.
    """
    schedule = cfg.sleep_schedule if schedule is None else schedule
    classes = sorted({c for g in cfg.task_groups for c in g})
    train_tasks = split_tasks(train.with_classes(classes), cfg.task_groups)
    test_all = test.with_classes(classes)
    test_tasks = split_tasks(test_all, cfg.task_groups)
    order = _task_order(cfg, trial_seed)

    net = init_network(cfg.arch, trial_seed)
    stats = ActivationStats.empty(cfg.arch)
    labels, accs, confs = [], [], []

    def record(label: str) -> None:
        a, c = _evaluate_tasks(net, test_tasks, test_all)
        labels.append(label)
        accs.append(a)
        confs.append(c)
        if on_phase is not None:
            on_phase(label, net, stats)

    for pos, task_idx in enumerate(order):
        net, stats = train_task(net, train_tasks[task_idx].data, _train_cfg(cfg, trial_seed, pos), stats)
        record(f"T{pos + 1}")
        last = pos == len(order) - 1
        if schedule == "after_each_task" or (schedule == "final_only" and last):
            net = run_sleep(net, stats, _sleep_cfg(cfg, trial_seed, pos))
            record(f"S{pos + 1}")
    return labels, np.array(accs).T, np.array(confs)


def run_incremental(
    cfg: ExperimentConfig,
    data: tuple[Dataset, Dataset] | None = None,
    schedule: str | None = None,
) -> RunReport:
    """Sequential training over ``cfg.task_groups`` with sleep per ``schedule``.

    ``data`` overrides the dataset named in the config with an explicit
    ``(train, test)`` pair.
    """
    cache = _DataCache(cfg, data)
    seeds = cfg.trial_seeds()
    per_trial, confusion, phases = [], None, None
    for s in seeds:
        train, test = cache.get(s)
        phases, acc, conf = incremental_trial(cfg, s, train, test, schedule)
        per_trial.append(acc)
        confusion = conf if confusion is None else confusion + conf
        log.info("trial %d final accuracies %s", s, np.round(acc[:, -1], 3).tolist())
    task_labels = ["-".join(str(c) for c in g) for g in cfg.task_groups]
    snapshot = cfg.to_dict()
    snapshot["sleep_schedule"] = schedule or cfg.sleep_schedule
    return RunReport(
        cfg.name, phases, task_labels, np.array(per_trial), confusion, snapshot, seeds
    )


@dataclass
class OverlapSweep:
    """Mean accuracy curves per overlap value for each sleep schedule."""

    overlaps: list[int]
    reports: dict[str, list[RunReport]]

    def curve(self, schedule: str, phase: str, row: int) -> np.ndarray:
        return np.array([r.column(phase)[row] for r in self.reports[schedule]])

    def rows(self) -> list[dict]:
        out = []
        for schedule, reports in self.reports.items():
            for ov, rep in zip(self.overlaps, reports):
                for j, phase in enumerate(rep.phases):
                    acc = rep.accuracy[:, j]
                    out.append(
                        {
                            "overlap": ov,
                            "schedule": schedule,
                            "phase": phase,
                            **{f"acc_{lab}": float(a) for lab, a in zip(rep.row_labels, acc)},
                        }
                    )
        return out

    def write_csv(self, path: str | Path) -> Path:
        rows = self.rows()
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        return path


def run_overlap_sweep(
    cfg: ExperimentConfig,
    overlaps: Sequence[int] | None = None,
    schedules: Sequence[str] = SCHEDULES,
) -> OverlapSweep:
    """Repeat the Patches protocol for every overlap value and schedule."""
    if cfg.dataset.kind != "patches":
        raise ValueError("the overlap sweep needs a patches dataset")
    spec = cfg.dataset
    kept: list[int] = []
    for ov in overlaps if overlaps is not None else cfg.overlap_values:
        unique = spec.on_count - ov
        if ov < 0 or unique < 0 or spec.n_images * unique + ov > spec.n_side**2:
            warnings.warn(f"skipping infeasible overlap {ov}", stacklevel=2)
            continue
        kept.append(int(ov))
    reports: dict[str, list[RunReport]] = {s: [] for s in schedules}
    for ov in kept:
        sub = replace(cfg, dataset=replace(spec, overlap=ov), name=f"{cfg.name}-overlap{ov}")
        for s in schedules:
            reports[s].append(run_incremental(sub, schedule=s))
    return OverlapSweep(kept, reports)


@dataclass
class GeneralizationResult:
    kinds: list[str]
    levels: list[float]
    before: np.ndarray
    after: np.ndarray
    confusion_before: np.ndarray
    confusion_after: np.ndarray
    clean_before: np.ndarray
    clean_after: np.ndarray
    seeds: list[int]

    def mean_before(self) -> np.ndarray:
        """Mean accuracy, shape ``(len(kinds), len(levels))``."""
        return self.before.mean(axis=0)

    def mean_after(self) -> np.ndarray:
        return self.after.mean(axis=0)

    def rows(self) -> list[dict]:
        b, a = self.mean_before(), self.mean_after()
        return [
            {"kind": k, "level": lv, "before": float(b[i, j]), "after": float(a[i, j])}
            for i, k in enumerate(self.kinds)
            for j, lv in enumerate(self.levels)
        ]

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["kind", "level", "before", "after"])
            w.writeheader()
            w.writerows(self.rows())
        return path


def run_generalization(
    cfg: ExperimentConfig,
    data: tuple[Dataset, Dataset] | None = None,
) -> GeneralizationResult:
    """Train once on every class, then test on corrupted copies before/after one sleep."""
    cache = _DataCache(cfg, data)
    seeds = cfg.trial_seeds()
    classes = sorted({c for g in cfg.task_groups for c in g})
    kinds, levels = list(cfg.corruption_kinds), list(cfg.corruption_levels)
    shape = (len(seeds), len(kinds), len(levels))
    before, after = np.zeros(shape), np.zeros(shape)
    k = cfg.arch[-1]
    conf_b = np.zeros((len(kinds), len(levels), k, k), dtype=np.int64)
    conf_a = np.zeros_like(conf_b)
    clean_b, clean_a = np.zeros(len(seeds)), np.zeros(len(seeds))
    for t, s in enumerate(seeds):
        train, test = cache.get(s)
        train, test = train.with_classes(classes), test.with_classes(classes)
        net = init_network(cfg.arch, s)
        net, stats = train_task(net, train, _train_cfg(cfg, s, 0))
        slept = run_sleep(net, stats, _sleep_cfg(cfg, s, 0))
        clean_b[t] = evaluate(net, test).accuracy
        clean_a[t] = evaluate(slept, test).accuracy
        for i, kind in enumerate(kinds):
            for j, level in enumerate(levels):
                noisy = corrupt(test, CorruptionSpec(kind, level, seed=s + j))
                mb, ma = evaluate(net, noisy), evaluate(slept, noisy)
                before[t, i, j], after[t, i, j] = mb.accuracy, ma.accuracy
                conf_b[i, j] += mb.confusion
                conf_a[i, j] += ma.confusion
    return GeneralizationResult(kinds, levels, before, after, conf_b, conf_a, clean_b, clean_a, seeds)


@dataclass
class TransferResult:
    """Accuracy on the second task, which the network never trained on."""

    untrained: np.ndarray
    after_training: np.ndarray
    after_sleep: np.ndarray
    first_task_after_sleep: np.ndarray
    seeds: list[int]

    @property
    def chance(self) -> float:
        return float(self.untrained.mean())

    def summary(self) -> dict:
        return {
            "chance": self.chance,
            "task2_after_training": float(self.after_training.mean()),
            "task2_after_sleep": float(self.after_sleep.mean()),
            "task1_after_sleep": float(self.first_task_after_sleep.mean()),
            "n_trials": len(self.seeds),
        }


def run_forward_transfer(
    cfg: ExperimentConfig,
    data: tuple[Dataset, Dataset] | None = None,
) -> TransferResult:
    """Train the first task, sleep once, and score the unseen second task."""
    if len(cfg.task_groups) < 2:
        raise ValueError("forward transfer needs at least two tasks")
    cache = _DataCache(cfg, data)
    seeds = cfg.trial_seeds()
    untrained, trained, slept, first = [], [], [], []
    for s in seeds:
        train, test = cache.get(s)
        train_tasks = split_tasks(train, cfg.task_groups[:2])
        test_tasks = split_tasks(test, cfg.task_groups[:2])
        net = init_network(cfg.arch, s)
        untrained.append(evaluate(net, test_tasks[1].data).accuracy)
        net, stats = train_task(net, train_tasks[0].data, _train_cfg(cfg, s, 0), stats=None)
        trained.append(evaluate(net, test_tasks[1].data).accuracy)
        net = run_sleep(net, stats, _sleep_cfg(cfg, s, 0))
        slept.append(evaluate(net, test_tasks[1].data).accuracy)
        first.append(evaluate(net, test_tasks[0].data).accuracy)
    return TransferResult(
        np.array(untrained), np.array(trained), np.array(slept), np.array(first), seeds
    )


@dataclass
class GAResult:
    best: SleepConfig
    best_fitness: float
    best_trace: list[float]
    mean_trace: list[float]
    best_genes: dict[str, float]


def _set_gene(values: dict, base: SleepConfig, name: str, value: float) -> None:
    if "[" in name:
        field_name, idx = name[:-1].split("[")
        current = list(values.get(field_name, getattr(base, field_name)))
        current[int(idx)] = value
        values[field_name] = tuple(current)
    else:
        values[name] = value


def _genes_to_config(base: SleepConfig, names: Sequence[str], genes: np.ndarray) -> SleepConfig:
    int_fields = {f.name for f in fields(SleepConfig) if f.type in ("int", "int | None")}
    values: dict = {}
    for name, g in zip(names, genes):
        v = int(round(g)) if name in int_fields else float(g)
        _set_gene(values, base, name, v)
    return replace(base, **values)


def ga_search(
    space: dict[str, tuple[float, float]],
    fitness: Callable,
    budget: int,
    *,
    base: SleepConfig | None = None,
    run: Callable[[SleepConfig], RunReport] | None = None,
    population: int = 20,
    tournament: int = 3,
    mutation_scale: float = 0.1,
    seed: int = 0,
) -> GAResult:
    """Generational GA over numeric :class:`SleepConfig` fields.

    ``space`` maps field names (``"thresholds[1]"`` addresses a tuple entry)
    to ``(low, high)``. Candidates are scored as ``fitness(run(cfg))`` when
    ``run`` is given, otherwise as ``fitness(cfg)``. ``budget`` counts fitness
    evaluations. Selection is by tournament, crossover is uniform, mutation
    adds Gaussian noise with standard deviation ``mutation_scale`` times the
    gene's range; the best individual always survives.
    """
    if not space:
        raise ValueError("search space is empty")
    names = list(space)
    lo = np.array([space[n][0] for n in names], dtype=np.float64)
    hi = np.array([space[n][1] for n in names], dtype=np.float64)
    if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)) or np.any(hi < lo):
        raise ValueError("every range needs finite bounds with low <= high")
    if population < 2:
        raise ValueError("population must be >= 2")
    if budget < population:
        raise ValueError(f"budget {budget} is smaller than the population {population}")
    base = SleepConfig() if base is None else base
    rng = np.random.default_rng(seed)

    def score(genes: np.ndarray) -> float:
        cand = _genes_to_config(base, names, genes)
        return float(fitness(run(cand)) if run is not None else fitness(cand))

    pop = lo + rng.random((population, len(names))) * (hi - lo)
    fit = np.array([score(g) for g in pop])
    used = population
    best_i = int(np.argmax(fit))
    best_genes, best_fit = pop[best_i].copy(), float(fit[best_i])
    best_trace, mean_trace = [best_fit], [float(fit.mean())]

    def pick() -> np.ndarray:
        idx = rng.choice(population, size=min(tournament, population), replace=False)
        return pop[idx[np.argmax(fit[idx])]]

    while used + population - 1 <= budget:
        children = [best_genes.copy()]
        while len(children) < population:
            a, b = pick(), pick()
            child = np.where(rng.random(len(names)) < 0.5, a, b)
            child = child + rng.normal(0.0, mutation_scale * (hi - lo))
            children.append(np.clip(child, lo, hi))
        pop = np.array(children)
        fit = np.concatenate([[best_fit], [score(g) for g in pop[1:]]])
        used += population - 1
        i = int(np.argmax(fit))
        if fit[i] > best_fit:
            best_genes, best_fit = pop[i].copy(), float(fit[i])
        best_trace.append(best_fit)
        mean_trace.append(float(fit.mean()))
    return GAResult(
        _genes_to_config(base, names, best_genes),
        best_fit,
        best_trace,
        mean_trace,
        dict(zip(names, best_genes.tolist())),
    )
