import json
from dataclasses import replace

import numpy as np
import pytest

import sleepnet.experiments as ex
from sleepnet.datasets import Dataset
from sleepnet.experiments import (
    DatasetSpec,
    ExperimentConfig,
    RunReport,
    ga_search,
    run_forward_transfer,
    run_generalization,
    run_incremental,
    run_overlap_sweep,
)
from sleepnet.network import TrainConfig
from sleepnet.snn import SleepConfig


def quick(**kw) -> ExperimentConfig:
    sleep = SleepConfig.patches(n_steps=300, dt=0.0004, input_mode="active_union")
    return replace(ExperimentConfig(sleep=sleep, n_trials=2, seed=3), **kw)


def test_config_round_trip_through_json():
    cfg = quick(task_groups=((0, 1), (2, 3)), overlap_values=(0, 15))
    back = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(n_trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(sleep_schedule="nap")
    with pytest.raises(ValueError):
        DatasetSpec(kind="cifar")


def test_phase_bookkeeping_and_report_round_trip(tmp_path):
    rep = run_incremental(quick())
    assert rep.phases == ["T1", "S1", "T2", "S2"]
    assert rep.trial_accuracy.shape == (2, 3, 4)
    assert rep.confusion.shape == (4, 4, 4)
    assert np.all((rep.accuracy >= 0) & (rep.accuracy <= 1))
    assert run_incremental(quick(), schedule="final_only").phases == ["T1", "T2", "S2"]
    assert run_incremental(quick(), schedule="none").phases == ["T1", "T2"]

    paths = rep.save(tmp_path)
    doc = json.loads(paths[0].read_text())
    back = RunReport.from_dict(doc)
    np.testing.assert_array_equal(back.trial_accuracy, rep.trial_accuracy)
    assert back.row_labels == ["0-1", "2-3", "overall"]
    lines = (tmp_path / "accuracy.csv").read_text().splitlines()
    assert lines[0] == "task,T1,S1,T2,S2" and len(lines) == 4


def test_runs_are_deterministic():
    a, b = run_incremental(quick()), run_incremental(quick())
    np.testing.assert_array_equal(a.trial_accuracy, b.trial_accuracy)
    np.testing.assert_array_equal(a.confusion, b.confusion)


def test_baseline_and_sleep_share_training(monkeypatch):
    seen = []
    real = ex.train_task

    def spy(net, data, cfg, stats=None):
        seen.append((cfg.seed, net.weights[0].copy()))
        return real(net, data, cfg, stats)

    monkeypatch.setattr(ex, "train_task", spy)
    run_incremental(quick(n_trials=1), schedule="none")
    run_incremental(quick(n_trials=1), schedule="final_only")
    # identical seeds and identical weights entering the first task
    assert [s for s, _ in seen[:2]] == [s for s, _ in seen[2:]]
    np.testing.assert_array_equal(seen[0][1], seen[2][1])
    # sleep only happens at the end, so the second task starts from the same net
    np.testing.assert_array_equal(seen[1][1], seen[3][1])


def test_sleep_uses_training_inputs_only(monkeypatch):
    rng = np.random.default_rng(0)
    train = Dataset(rng.random((40, 100)) * 0.5, np.repeat(np.arange(4), 10), 4)
    test = Dataset(rng.random((20, 100)) * 0.5 + 0.5, np.repeat(np.arange(4), 5), 4)
    means = []
    real = ex.run_sleep

    def spy(net, stats, cfg, trace=None):
        means.append(stats.mean_input.copy())
        return real(net, stats, cfg)

    monkeypatch.setattr(ex, "run_sleep", spy)
    run_incremental(quick(n_trials=1), data=(train, test))
    np.testing.assert_allclose(means[0], train.inputs[:20].mean(axis=0))
    np.testing.assert_allclose(means[1], train.inputs.mean(axis=0))


def test_task_order_permutation_is_seeded():
    cfg = quick(task_groups=((0,), (1,), (2,), (3,)), task_orders=1, n_trials=6)
    orders = [ex._task_order(cfg, s) for s in cfg.trial_seeds()]
    assert all(sorted(o) == [0, 1, 2, 3] for o in orders)
    assert len({tuple(o) for o in orders}) > 1
    assert orders == [ex._task_order(cfg, s) for s in cfg.trial_seeds()]


def test_overlap_sweep_skips_infeasible_values():
    cfg = quick(n_trials=1)
    with pytest.warns(UserWarning, match="30"):
        sweep = run_overlap_sweep(cfg, overlaps=[0, 30], schedules=["none"])
    assert sweep.overlaps == [0]
    with pytest.raises(ValueError):
        run_overlap_sweep(replace(cfg, dataset=DatasetSpec("mnist")))


def test_zero_overlap_has_no_forgetting(tmp_path):
    sweep = run_overlap_sweep(quick(n_trials=3), overlaps=[0], schedules=["none"])
    assert sweep.curve("none", "T2", 0)[0] == 1.0
    rows = sweep.write_csv(tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("overlap,schedule,phase")


def test_transfer_reports_untrained_chance_and_needs_two_tasks():
    res = run_forward_transfer(quick(n_trials=3))
    assert 0.0 <= res.chance <= 1.0
    assert res.summary()["n_trials"] == 3
    with pytest.raises(ValueError):
        run_forward_transfer(quick(task_groups=((0, 1, 2, 3),)))


def test_disjoint_patches_give_no_transfer():
    cfg = quick(dataset=DatasetSpec(overlap=0), n_trials=10)
    res = run_forward_transfer(cfg)
    # After training on task 1 the unseen images only drive their own silent units.
    assert res.after_sleep.mean() <= 0.5


def test_generalization_level_zero_matches_clean_accuracy():
    cfg = quick(
        n_trials=1,
        task_groups=((0, 1, 2, 3),),
        corruption_kinds=("gaussian_noise",),
        corruption_levels=(0.0, 0.5),
    )
    res = run_generalization(cfg)
    assert res.before.shape == (1, 1, 2)
    assert res.before[0, 0, 0] == res.clean_before[0]
    assert res.after[0, 0, 0] == res.clean_after[0]


def test_ga_finds_one_dimensional_optimum():
    target = 0.42
    res = ga_search(
        {"decay": (0.05, 0.95)},
        lambda cfg: -((cfg.decay - target) ** 2),
        budget=20 + 19 * 20,
        seed=1,
    )
    assert len(res.best_trace) == 21
    assert abs(res.best.decay - target) <= 0.05 * target


def test_ga_elitism_and_determinism():
    space = {"thresholds[0]": (0.5, 3.0), "n_steps": (10, 500)}

    def fit(cfg):
        return -abs(cfg.thresholds[0] - 1.7) - abs(cfg.n_steps - 123) / 100

    a = ga_search(space, fit, budget=120, population=10, seed=4)
    b = ga_search(space, fit, budget=120, population=10, seed=4)
    assert a.best_trace == b.best_trace and a.best == b.best
    assert np.all(np.diff(a.best_trace) >= 0)
    assert isinstance(a.best.n_steps, int)


def test_ga_constant_fitness_returns_initial_member():
    seen = []

    def fit(cfg):
        seen.append(cfg)
        return 1.0

    res = ga_search({"decay": (0.1, 0.9)}, fit, budget=40, population=10, seed=0)
    assert res.best in seen[:10]
    assert res.best_trace == [1.0] * len(res.best_trace)


def test_ga_scores_reports_when_given_a_runner():
    res = ga_search(
        {"decay": (0.1, 0.9)},
        lambda r: r,
        budget=4,
        population=4,
        run=lambda cfg: 1 - cfg.decay,
    )
    assert res.best_fitness == pytest.approx(1 - res.best.decay)


@pytest.mark.parametrize(
    "space, budget",
    [({}, 20), ({"decay": (0.9, 0.1)}, 20), ({"decay": (0.1, np.inf)}, 20), ({"decay": (0.1, 0.9)}, 5)],
)
def test_ga_rejects_bad_arguments(space, budget):
    with pytest.raises(ValueError):
        ga_search(space, lambda c: 0.0, budget, population=10)


def test_mnist_preset_trains_on_idx_files(mnist_root):
    cfg = ExperimentConfig(
        name="tiny-mnist",
        dataset=DatasetSpec("mnist", root=str(mnist_root), train_limit=300),
        arch=(784, 20, 10),
        task_groups=((0, 1, 2, 3, 4, 5, 6, 7, 8, 9),),
        train=TrainConfig(learning_rate=0.1, epochs=1, batch_size=10),
        sleep=SleepConfig(thresholds=(1.0, 1.0), synaptic_scales=(1.0, 1.0), n_steps=50),
        sleep_schedule="none",
    )
    rep = run_incremental(cfg)
    assert rep.final()[-1] > 0.3
