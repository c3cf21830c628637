"""Forgetting and recovery on the 10x10 Patches task.

Trains task 1 (images 0, 1), then task 2 (images 2, 3), once with a sleep
phase after each task and once without, and prints the accuracy table plus
the on/off weight spread after every phase.

    python demos/patches_sleep.py [n_trials]
"""

import sys
from dataclasses import replace

from sleepnet import presets
from sleepnet.analysis import spread_study
from sleepnet.experiments import run_forward_transfer, run_incremental


def show(report) -> None:
    print(f"{'':>8}" + "".join(f"{p:>7}" for p in report.phases))
    for label, row in zip(report.row_labels, report.accuracy):
        print(f"{label:>8}" + "".join(f"{v:7.2f}" for v in row))


def main() -> None:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 10
    cfg = replace(presets.patches(), n_trials=n)

    print(f"== no sleep ({n} trials)")
    show(run_incremental(cfg, schedule="none"))
    print(f"\n== sleep after each task ({n} trials)")
    show(run_incremental(cfg))

    spread = spread_study(cfg)
    print("\nmean on-pixel minus off-pixel weight, per phase:")
    print("  " + "  ".join(f"{p}={s:+.3f}" for p, s in zip(spread["phases"], spread["mean_spread"])))

    t = run_forward_transfer(cfg).summary()
    print(
        f"\ntask 2 before any task-2 training: untrained {t['chance']:.2f}, "
        f"after task 1 {t['task2_after_training']:.2f}, after sleep {t['task2_after_sleep']:.2f}"
    )
    print(f"task 1 after that sleep: {t['task1_after_sleep']:.2f}")


if __name__ == "__main__":
    main()
