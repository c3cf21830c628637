"""Command-line frontend.

    sleepnet train      --config C --out DIR
    sleepnet sleep      --config C --network N --stats S --out DIR
    sleepnet eval       --config C --network N --out DIR
    sleepnet experiment {incremental,generalization,overlap,transfer,ga} --config C --out DIR
    sleepnet analyze    {spread,correlation,partition,forgetting} [--config C] --out DIR

Exit status is 0 on success, 2 for bad input or configuration and 1 for
anything else.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from sleepnet import analysis, presets
from sleepnet.datasets import split_tasks
from sleepnet.experiments import (
    ExperimentConfig,
    ga_search,
    load_data,
    run_forward_transfer,
    run_generalization,
    run_incremental,
    run_overlap_sweep,
)
from sleepnet.network import (
    ActivationStats,
    evaluate,
    init_network,
    load_network,
    load_stats,
    save_network,
    save_stats,
    train_task,
)
from sleepnet.reports import (
    line_chart_svg,
    write_json,
    write_manifest,
    write_matrix_csv,
    write_svg,
)
from sleepnet.snn import run_sleep

log = logging.getLogger("sleepnet")


class UsageError(Exception):
    """Bad input or configuration; maps to exit status 2."""


def load_config(path: str | None, trials: int | None = None, seed: int | None = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a TOML file.

    The optional top-level ``preset`` key selects defaults from
    :mod:`sleepnet.presets`; tables ``[dataset]``, ``[train]`` and ``[sleep]``
    override individual fields.
    """
    doc: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file {p} does not exist")
        try:
            doc = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"{p}: {exc}") from exc
    preset_name = doc.pop("preset", "patches")
    try:
        base = presets.get(preset_name)
        merged = base.to_dict()
        for key, value in doc.items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = {**merged[key], **value}
            else:
                merged[key] = value
        if trials is not None:
            merged["n_trials"] = trials
        if seed is not None:
            merged["seed"] = seed
        return ExperimentConfig.from_dict(merged)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def _data(cfg: ExperimentConfig):
    try:
        return load_data(cfg, cfg.seed)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc


def _load(loader, path: str, label: str):
    if not Path(path).is_file():
        raise UsageError(f"{label} file {path} does not exist")
    try:
        return loader(path)
    except (ValueError, KeyError, OSError) as exc:
        raise UsageError(f"cannot read {label} file {path}: {exc}") from exc


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> None:
    cfg = load_config(args.config, seed=args.seed)
    train, _ = _data(cfg)
    out = _out(args)
    net = init_network(cfg.arch, cfg.seed)
    stats = ActivationStats.empty(cfg.arch)
    for pos, task in enumerate(split_tasks(train, cfg.task_groups)):
        tc = replace(cfg.train, seed=cfg.seed + pos)
        net, stats = train_task(net, task.data, tc, stats)
        log.info("trained task %s", task.classes)
    save_network(net, out / "network.npz")
    save_stats(stats, out / "stats.json")
    write_manifest(out, cfg.to_dict(), [cfg.seed], args.argv)


def cmd_sleep(args) -> None:
    cfg = load_config(args.config, seed=args.seed)
    net = _load(load_network, args.network, "network")
    stats = _load(load_stats, args.stats, "stats")
    out = _out(args)
    slept = run_sleep(net, stats, cfg.sleep.with_seed(cfg.seed))
    save_network(slept, out / "network.npz")
    write_manifest(out, cfg.to_dict(), [cfg.seed], args.argv)


def cmd_eval(args) -> None:
    cfg = load_config(args.config, seed=args.seed)
    net = _load(load_network, args.network, "network")
    _, test = _data(cfg)
    out = _out(args)
    m = evaluate(net, test)
    tasks = split_tasks(test, cfg.task_groups)
    doc = {
        "accuracy": m.accuracy,
        "per_class_accuracy": [None if np.isnan(v) else float(v) for v in m.per_class_accuracy],
        "per_task_accuracy": {
            "-".join(map(str, t.classes)): evaluate(net, t.data).accuracy for t in tasks
        },
    }
    write_json(out / "metrics.json", doc)
    write_matrix_csv(out / "confusion.csv", m.confusion)
    print(f"accuracy {m.accuracy:.4f}")


def _accuracy_chart(report) -> str:
    x = list(range(len(report.phases)))
    series = {lab: (x, row) for lab, row in zip(report.row_labels, report.accuracy)}
    return line_chart_svg(series, report.name, "phase", "accuracy", xticks=report.phases)


def cmd_experiment(args) -> None:
    cfg = load_config(args.config, trials=args.trials, seed=args.seed)
    if cfg.dataset.kind == "mnist":
        _data(cfg)
    out = _out(args)
    kind = args.kind
    seeds = cfg.trial_seeds()
    if kind == "incremental":
        report = run_incremental(cfg)
        report.save(out)
        write_svg(out / "accuracy.svg", _accuracy_chart(report))
        if cfg.sleep_schedule != "none":
            base = run_incremental(cfg, schedule="none")
            base.save(out / "baseline")
            write_svg(out / "baseline" / "accuracy.svg", _accuracy_chart(base))
    elif kind == "overlap":
        sweep = run_overlap_sweep(cfg)
        sweep.write_csv(out / "overlap.csv")
        for schedule, reports in sweep.reports.items():
            phases = reports[0].phases
            series = {
                f"task1 {ph}": (sweep.overlaps, sweep.curve(schedule, ph, 0)) for ph in phases
            }
            write_svg(
                out / f"overlap_{schedule}.svg",
                line_chart_svg(series, f"overlap sweep ({schedule})", "overlap", "accuracy"),
            )
    elif kind == "generalization":
        res = run_generalization(cfg)
        res.write_csv(out / "generalization.csv")
        b, a = res.mean_before(), res.mean_after()
        for i, k in enumerate(res.kinds):
            series = {"before sleep": (res.levels, b[i]), "after sleep": (res.levels, a[i])}
            write_svg(out / f"generalization_{k}.svg", line_chart_svg(series, k, "level", "accuracy"))
            for j, lv in enumerate(res.levels):
                write_matrix_csv(out / f"confusion_{k}_{lv:g}_before.csv", res.confusion_before[i, j])
                write_matrix_csv(out / f"confusion_{k}_{lv:g}_after.csv", res.confusion_after[i, j])
    elif kind == "transfer":
        res = run_forward_transfer(cfg)
        write_json(out / "transfer.json", res.summary())
        print(res.summary())
    elif kind == "ga":
        space = presets.GA_SPACES.get(cfg.dataset.kind, presets.GA_SPACES["patches"])
        search_cfg = replace(cfg, n_trials=min(cfg.n_trials, 3))

        def fitness(report):
            return float(report.final()[-1])

        res = ga_search(
            space,
            fitness,
            budget=args.budget,
            base=cfg.sleep,
            run=lambda sc: run_incremental(replace(search_cfg, sleep=sc)),
            population=min(20, args.budget),
            seed=cfg.seed,
        )
        write_json(
            out / "ga.json",
            {
                "best_genes": res.best_genes,
                "best_fitness": res.best_fitness,
                "best_trace": res.best_trace,
                "mean_trace": res.mean_trace,
            },
        )
    write_manifest(out, cfg.to_dict(), seeds, args.argv)


def cmd_analyze(args) -> None:
    out = _out(args)
    kind = args.kind
    if kind == "forgetting":
        seed = 0 if args.seed is None else args.seed
        res = analysis.forgetting_rate(trials=args.trials or 100, seed=seed)
        write_json(out / "forgetting.json", {"rate": res.rate, "trials": len(res.forgotten)})
        write_manifest(out, {"analysis": "forgetting", "trials": len(res.forgotten)}, [seed], args.argv)
        print(f"forgetting rate {res.rate:.3f}")
        return
    if kind == "partition":
        if args.config:
            cfg = load_config(args.config, trials=args.trials, seed=args.seed)
        else:
            cfg = presets.get("partition")
            cfg = replace(cfg, n_trials=args.trials or cfg.n_trials, seed=args.seed or 0)
        rows = analysis.partition_study(cfg.sleep, trials=cfg.n_trials, seed=cfg.seed)
        write_json(out / "partition.json", rows)
        write_manifest(out, cfg.to_dict(), cfg.trial_seeds(), args.argv)
        return
    cfg = load_config(args.config, trials=args.trials, seed=args.seed)
    if kind == "spread":
        rows = analysis.spread_study(cfg)
        write_json(out / "spread.json", rows)
    elif kind == "correlation":
        if not args.network:
            raise UsageError("correlation analysis needs at least one --network file")
        _, test = _data(cfg)
        for p in args.network:
            net = _load(load_network, p, "network")
            layers = [args.layer] if args.layer is not None else list(range(1, net.n_layers))
            for layer in layers:
                corr = analysis.activation_correlation(net, test, layer, seed=cfg.seed)
                write_matrix_csv(out / f"correlation_{Path(p).stem}_layer{layer}.csv", corr.matrix)
    write_manifest(out, cfg.to_dict(), cfg.trial_seeds(), args.argv)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sleepnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="TOML experiment config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("train", help="train on every task group in order")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sleep", help="run one sleep phase on a saved network")
    common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--stats", required=True)
    p.set_defaults(func=cmd_sleep)

    p = sub.add_parser("eval", help="evaluate a saved network on the test set")
    common(p)
    p.add_argument("--network", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run an experiment protocol")
    p.add_argument("kind", choices=["incremental", "generalization", "overlap", "transfer", "ga"])
    common(p)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--budget", type=int, default=60, help="GA fitness evaluations")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("analyze", help="run a diagnostic analysis")
    p.add_argument("kind", choices=["spread", "correlation", "partition", "forgetting"])
    common(p)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--network", action="append", default=[])
    p.add_argument("--layer", type=int, default=None)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    return 0


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
