from dataclasses import replace

import numpy as np
import pytest

from sleepnet import presets
from sleepnet.analysis import (
    activation_correlation,
    category_pair,
    forgetting_rate,
    forgot_category1,
    hidden_partition,
    partition_study,
    spread_study,
    weight_spread,
)
from sleepnet.datasets import Dataset, gen_patches
from sleepnet.network import Network, forward, init_network, predict
from sleepnet.presets import PARTITION_SLEEP


def test_spread_of_random_nets_is_near_zero():
    data = gen_patches(seed=0)
    spreads = [weight_spread(init_network([100, 4], seed=s), data).mean_spread for s in range(200)]
    # Each spread is a difference of means of U(-0.1, 0.1) weights.
    assert abs(np.mean(spreads)) < 3 * np.std(spreads) / np.sqrt(len(spreads))


def test_hand_built_spread_is_two():
    data = gen_patches(seed=1)
    w = np.where(data.inputs > 0, 1.0, -1.0)
    s = weight_spread(Network((100, 4), (w,)), data)
    np.testing.assert_allclose(s.spread, 2.0)
    assert s.mean_spread == 2.0


def test_spread_is_equivariant_under_class_permutation():
    data = gen_patches(seed=2)
    net = init_network([100, 4], seed=2)
    perm = np.array([2, 0, 3, 1])
    permuted_net = Network((100, 4), (net.weights[0][perm],))
    inverse = np.argsort(perm)
    permuted_data = Dataset(data.inputs, inverse[data.labels], 4)
    a = weight_spread(net, data).spread
    b = weight_spread(permuted_net, permuted_data).spread
    np.testing.assert_allclose(a, b)


def test_spread_rejects_deep_nets():
    with pytest.raises(ValueError):
        weight_spread(init_network([100, 5, 4]), gen_patches())


def _clustered(seed=0, per_class=12, k=3, dim=20):
    rng = np.random.default_rng(seed)
    protos = rng.random((k, dim))
    x = np.clip(np.repeat(protos, per_class, axis=0) + 0.05 * rng.normal(size=(k * per_class, dim)), 0, 1)
    return Dataset(x, np.repeat(np.arange(k), per_class), k)


def test_correlation_matrix_is_symmetric_and_bounded():
    data = _clustered()
    net = init_network([20, 15, 3], seed=0)
    for layer in (1, 2):
        m = activation_correlation(net, data, layer).matrix
        finite = m[np.isfinite(m)]
        np.testing.assert_allclose(m, m.T, equal_nan=True)
        assert finite.min() >= -1.0 and finite.max() <= 1.0


def test_duplicated_examples_give_unit_diagonal():
    rng = np.random.default_rng(1)
    base = rng.random((2, 8))
    x = np.repeat(base, 5, axis=0)
    data = Dataset(x, np.repeat([0, 1], 5), 2)
    net = Network((8, 8), (np.eye(8),))
    m = activation_correlation(net, data, 1).matrix
    np.testing.assert_allclose(np.diag(m), 1.0)


def test_zero_variance_activations_are_skipped_and_counted():
    data = Dataset(np.ones((4, 3)), np.array([0, 0, 1, 1]), 2)
    net = Network((3, 2), (np.zeros((2, 3)),))
    res = activation_correlation(net, data, 1)
    assert np.isnan(res.matrix).all()
    # one diagonal pair per class plus four cross pairs
    assert res.skipped_pairs == 6


def test_correlation_subsampling_cap():
    data = _clustered(per_class=30)
    net = init_network([20, 15, 3], seed=0)
    a = activation_correlation(net, data, 1, max_per_class=10, seed=4)
    b = activation_correlation(net, data, 1, max_per_class=10, seed=4)
    np.testing.assert_array_equal(a.matrix, b.matrix)
    with pytest.raises(ValueError):
        activation_correlation(net, data, 0)


def test_zero_hidden_weights_put_everything_in_d():
    net = Network((10, 30, 2), (np.zeros((30, 10)), np.zeros((2, 30))))
    x1, x2 = category_pair(np.random.default_rng(0))
    rep = hidden_partition(net, x1, x2)
    assert len(rep.D) == 30 and not (len(rep.A) or len(rep.B) or len(rep.C))
    assert rep.a == rep.b == rep.p == rep.q == 0.0


def test_partition_requires_two_output_three_layer_net():
    x = np.ones(10)
    with pytest.raises(ValueError):
        hidden_partition(init_network([10, 2]), x, x)
    with pytest.raises(ValueError):
        hidden_partition(init_network([10, 30, 3]), x, x)


def test_partition_inequalities_match_forward_on_random_nets():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        net = Network(
            (10, 30, 2), (rng.normal(size=(30, 10)), rng.normal(size=(2, 30)))
        )
        x1, x2 = category_pair(rng, overlap=int(rng.integers(0, 10)))
        rep = hidden_partition(net, x1, x2)
        sets = np.concatenate([rep.A, rep.B, rep.C, rep.D])
        assert np.array_equal(np.sort(sets), np.arange(30))
        assert all(np.isfinite([rep.a, rep.b, rep.p, rep.q]))
        assert rep.predicted == (int(predict(net, x1)), int(predict(net, x2)))
        z1 = forward(net, x1).logits
        assert rep.output1_fires == bool(z1[0] > 0 and z1[0] > z1[1])


def test_category_pair_overlap_is_exact():
    rng = np.random.default_rng(3)
    for ov in range(10):
        x1, x2 = category_pair(rng, 10, ov)
        assert int((x1 * x2).sum()) == ov
        assert not np.array_equal(x1, x2)
    with pytest.raises(ValueError):
        category_pair(rng, 10, 10)


def test_forgot_category1_rule():
    net = Network((1, 1, 2), (np.ones((1, 1)), np.array([[1.0], [2.0]])))
    assert forgot_category1(net, np.ones(1))
    net = Network((1, 1, 2), (np.ones((1, 1)), np.array([[2.0], [1.0]])))
    assert not forgot_category1(net, np.ones(1))


def test_disjoint_categories_are_rarely_forgotten():
    assert forgetting_rate(trials=40, overlap=0).rate <= 0.1


def test_forgetting_rate_is_deterministic():
    a, b = forgetting_rate(trials=10, seed=5), forgetting_rate(trials=10, seed=5)
    assert a.rate == b.rate and np.array_equal(a.forgotten, b.forgotten)


def test_sleep_empties_shared_units_in_most_trials():
    s = partition_study(PARTITION_SLEEP, trials=50, seed=1)["summary"]
    assert s["after"]["c_empty"] > 0.5
    assert s["after"]["forgetting_rate"] < s["before"]["forgetting_rate"]


def test_sleep_widens_weight_spread_on_patches():
    cfg = replace(presets.patches(), n_trials=3)
    res = spread_study(cfg)
    spread = dict(zip(res["phases"], res["mean_spread"]))
    assert spread["S1"] > spread["T1"] and spread["S2"] > spread["T2"]
