"""Why sequential training forgets, on a [10, 30, 2] network.

Two 10-bit patterns sharing 5 on-bits are learned one after the other. The
script reports how often the first category is lost and how the hidden
units split into those firing for pattern 1 only (A), pattern 2 only (B),
both (C) or neither (D), before and after one sleep phase.

    python demos/two_categories.py [n_trials]
"""

import sys

import numpy as np

from sleepnet import presets
from sleepnet.analysis import forgetting_rate, partition_study


def main() -> None:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 100
    print(f"category 1 forgotten after learning category 2: {forgetting_rate(trials=n).rate:.0%}")

    study = partition_study(presets.PARTITION_SLEEP, trials=n)
    for tag in ("before", "after"):
        sizes = np.mean([t[tag]["sizes"] for t in study["trials"]], axis=0)
        s = study["summary"][tag]
        print(
            f"{tag:>6} sleep: mean |A|,|B|,|C|,|D| = {np.round(sizes, 1).tolist()}, "
            f"C empty in {s['c_empty']:.0%}, both categories correct in {s['both_correct']:.0%}"
        )


if __name__ == "__main__":
    main()
