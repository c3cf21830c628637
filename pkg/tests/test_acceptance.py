"""End-to-end acceptance checks.

Each test prints one ``[PASS]``/``[FAIL]`` line with the measured numbers
before asserting, so ``pytest -v tests/test_acceptance.py`` doubles as the
report. The MNIST checks run on ``$SLEEPNET_DATA`` when it holds the IDX
files and fall back to the 5,000-image sample otherwise (see conftest).
"""

from dataclasses import replace

import numpy as np
import pytest

from sleepnet import presets
from sleepnet.analysis import activation_correlation, forgetting_rate
from sleepnet.experiments import (
    DatasetSpec,
    incremental_trial,
    load_data,
    run_forward_transfer,
    run_generalization,
    run_incremental,
    run_overlap_sweep,
)

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")

    return emit


def test_1_patches_pipeline(report):
    cfg = presets.patches()
    slept = run_incremental(cfg)
    base = run_incremental(cfg, schedule="none")
    final = slept.trial_accuracy[:, :2, -1]
    perfect = int(np.sum(np.all(final == 1.0, axis=1)))
    base_task1 = float(base.final()[0])
    ok = perfect >= 95 and base_task1 < 1.0
    report(1, ok, f"{perfect}/100 trials perfect after sleep; baseline task-1 mean {base_task1:.3f}")
    assert ok


def test_2_overlap_sweep(report):
    cfg = replace(presets.patches(), n_trials=5)
    sweep = run_overlap_sweep(cfg, schedules=["none", "final_only"])
    base = sweep.curve("none", "T2", 0)
    slept = sweep.curve("final_only", "S2", 0)
    ov = np.array(sweep.overlaps)
    no_forgetting_low = bool(np.all(base[ov <= 15] == 1.0))
    forgetting_high = bool(np.all(base[ov > 15] < 1.0))
    ordered = bool(np.all(slept >= base))
    ok = no_forgetting_low and forgetting_high and ordered
    pairs = ", ".join(f"{o}:{b:.2f}/{s:.2f}" for o, b, s in zip(ov, base, slept))
    report(2, ok, f"task-1 accuracy overlap:baseline/final-sleep {pairs}")
    assert ok


def test_3_forward_transfer(report):
    res = run_forward_transfer(presets.patches())
    acc = float(res.after_sleep.mean())
    ok = abs(acc - 0.5) <= 0.15
    report(3, ok, f"task-2 accuracy after task-1 training + sleep {acc:.3f} (chance {res.chance:.3f})")
    assert ok


def test_4_forgetting_rate(report):
    rate = forgetting_rate(trials=100).rate
    ok = abs(rate - 0.78) <= 0.10
    report(4, ok, f"category 1 forgotten in {rate:.0%} of 100 trials")
    assert ok


@pytest.fixture(scope="module")
def mnist_runs(mnist_root):
    """Incremental MNIST with and without sleep; keeps the last task's nets."""
    cfg = replace(presets.mnist(), dataset=DatasetSpec("mnist", root=str(mnist_root)), n_trials=3)
    train, test = load_data(cfg)
    out = {"cfg": cfg, "test": test, "sleep": [], "none": [], "nets": []}
    for s in cfg.trial_seeds():
        nets = {}
        _, acc, _ = incremental_trial(
            cfg, s, train, test, on_phase=lambda label, net, stats: nets.__setitem__(label, net)
        )
        out["sleep"].append(acc[:, -1])
        out["nets"].append((nets["T5"], nets["S5"]))
        out["none"].append(incremental_trial(cfg, s, train, test, schedule="none")[1][:, -1])
    return out


def test_5_incremental_mnist(report, mnist_runs):
    slept = np.mean(mnist_runs["sleep"], axis=0)
    base = np.mean(mnist_runs["none"], axis=0)
    tasks_alive = int(np.sum(slept[:5] > 0.10))
    gain = slept[-1] - base[-1]
    ok = base[-1] <= 0.25 and gain >= 0.15 and tasks_alive >= 4
    report(
        5,
        ok,
        f"overall baseline {base[-1]:.3f} -> sleep {slept[-1]:.3f} (+{gain * 100:.1f} pts); "
        f"per-task after sleep {np.round(slept[:5], 2).tolist()}",
    )
    assert ok


def _contiguous_run(mask: np.ndarray, idx: int) -> int:
    if not mask[idx]:
        return 0
    lo, hi = idx, idx
    while lo > 0 and mask[lo - 1]:
        lo -= 1
    while hi < len(mask) - 1 and mask[hi + 1]:
        hi += 1
    return hi - lo + 1


def test_6_generalization(report, mnist_root):
    cfg = replace(
        presets.mnist_generalization(),
        dataset=DatasetSpec("mnist", root=str(mnist_root)),
        corruption_kinds=("gaussian_noise",),
        n_trials=5,
    )
    res = run_generalization(cfg)
    before, after = res.mean_before()[0], res.mean_after()[0]
    # level whose before/after pair sits closest to 20% -> 50%
    dev = np.maximum(np.abs(before - 0.2), np.abs(after - 0.5))
    best = int(np.argmin(dev))
    run = _contiguous_run(after >= before, best)
    ok = dev[best] <= 0.10 and run >= 3
    report(
        6,
        ok,
        f"noise level {res.levels[best]}: {before[best]:.3f} -> {after[best]:.3f}; "
        f"after>=before over {run} contiguous levels; "
        f"before {np.round(before, 2).tolist()} after {np.round(after, 2).tolist()}",
    )
    assert ok


def test_7_correlations(report, mnist_runs):
    test = mnist_runs["test"]
    lines, ok = [], True
    for layer in (1, 3):
        off_b, off_a, dia_b, dia_a = [], [], [], []
        for pre, post in mnist_runs["nets"]:
            cb = activation_correlation(pre, test, layer)
            ca = activation_correlation(post, test, layer)
            off_b.append(cb.mean_off_diagonal())
            off_a.append(ca.mean_off_diagonal())
            dia_b.append(cb.mean_diagonal())
            dia_a.append(ca.mean_diagonal())
        ob, oa, db, da = map(np.mean, (off_b, off_a, dia_b, dia_a))
        layer_ok = oa < ob and abs(da - db) <= 0.10 * abs(db)
        ok &= bool(layer_ok)
        lines.append(f"layer {layer}: off-diag {ob:.3f}->{oa:.3f}, diag {db:.3f}->{da:.3f}")
    report(7, ok, "; ".join(lines))
    assert ok


PROPERTY_TESTS = [
    "tests/test_properties.py::test_conversion_round_trip",
    "tests/test_properties.py::test_zero_plasticity_sleep_is_identity",
    "tests/test_properties.py::test_stdp_signs_and_soft_bound",
    "tests/test_network.py::test_gradients_match_central_differences",
    "tests/test_properties.py::test_poisson_rate_within_three_standard_errors",
    "tests/test_properties.py::test_sleep_is_deterministic",
    "tests/test_network.py::test_train_does_not_mutate_inputs_and_is_deterministic",
]


def test_8_property_suites(report, pytestconfig):
    root = pytestconfig.rootpath
    code = pytest.main(["-q", "-p", "no:cacheprovider", *(str(root / t) for t in PROPERTY_TESTS)])
    ok = code == 0
    report(8, ok, f"{len(PROPERTY_TESTS)} property checks, pytest exit code {int(code)}")
    assert ok
