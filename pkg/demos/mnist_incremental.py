"""Five two-digit MNIST tasks learned in sequence, with and without sleep.

Needs the four MNIST IDX files in ``$SLEEPNET_DATA`` or in the directory
given as the first argument. Prints the phase-by-phase accuracy table and
the class-correlation summary before and after the last sleep.

    python demos/mnist_incremental.py [data_dir]
"""

import sys
from dataclasses import replace

from sleepnet import presets
from sleepnet.analysis import activation_correlation
from sleepnet.experiments import DatasetSpec, incremental_trial, load_data


def show(labels, phases, acc) -> None:
    print(f"{'':>8}" + "".join(f"{p:>6}" for p in phases))
    for label, row in zip(labels, acc):
        print(f"{label:>8}" + "".join(f"{v:6.2f}" for v in row))


def main() -> None:
    cfg = presets.mnist()
    if len(sys.argv) > 1:
        cfg = replace(cfg, dataset=DatasetSpec("mnist", root=sys.argv[1]))
    train, test = load_data(cfg)
    seed = cfg.trial_seeds()[0]
    labels = ["-".join(map(str, g)) for g in cfg.task_groups] + ["overall"]

    phases, acc, _ = incremental_trial(cfg, seed, train, test, schedule="none")
    print("== no sleep")
    show(labels, phases, acc)

    nets = {}
    phases, acc, _ = incremental_trial(
        cfg, seed, train, test, on_phase=lambda p, net, stats: nets.__setitem__(p, net)
    )
    print("\n== sleep after each task")
    show(labels, phases, acc)

    print("\nmean class correlation (diagonal / off-diagonal), last task before and after sleep")
    for layer in (1, 3):
        for tag in ("T5", "S5"):
            c = activation_correlation(nets[tag], test, layer)
            print(f"  layer {layer} {tag}: {c.mean_diagonal():.3f} / {c.mean_off_diagonal():.3f}")


if __name__ == "__main__":
    main()
