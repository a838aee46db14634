import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_box, random_pair
from nnreduce.errors import PreconditionError
from nnreduce.network import Activation, Layer, Network, evaluate, random_network
from nnreduce.reach import PartitionConfig
from nnreduce.reduction import (InflationMode, Precision, augment, distill, inflate, precision,
                                sampled_gap)
from nnreduce.sets import BoxUnion, IntervalBox


def toy_pair():
    big = Network([Layer([[2.0]], [0.0], "linear")])
    small = Network([Layer([[1.0]], [0.0], "linear")])
    return big, small


def test_self_difference_is_zero():
    net = random_network([3, 5, 4, 2], 0)
    x = np.random.default_rng(1).normal(size=(100, 3))
    assert np.all(evaluate(augment(net, net), x) == 0.0)


def test_case_table_dimensions():
    rng = np.random.default_rng(0)
    big = random_network([2, 4, 3, 1], rng)
    small = random_network([2, 2, 1], rng)
    aug = augment(big, small)
    assert aug.widths == [2, 6, 5, 2, 1]
    # layer 2 runs W_2 of big next to an identity carrying small's hidden layer
    w2 = aug.layers[1]
    np.testing.assert_array_equal(w2.weights[:3, :4], big.layers[1].weights)
    np.testing.assert_array_equal(w2.weights[3:, 4:], np.eye(2))
    assert w2.relu_mask.tolist() == [True, True, True, False, False]
    assert aug.layers[-1].weights.tolist() == [[1.0, -1.0]]


def test_single_layer_pair_hand_value():
    big, small = toy_pair()
    assert evaluate(augment(big, small), [0.7]) == pytest.approx([2 * 0.7 - 0.7], abs=1e-15)


def test_shallow_small_stacks_identity():
    rng = np.random.default_rng(3)
    big = random_network([2, 3, 3, 1], rng)
    small = random_network([2, 1], rng)
    aug = augment(big, small)
    np.testing.assert_array_equal(aug.layers[0].weights[3:], np.eye(2))
    x = rng.normal(size=(50, 2))
    np.testing.assert_allclose(evaluate(aug, x), evaluate(big, x) - evaluate(small, x), atol=1e-12)


def test_precondition_messages():
    rng = np.random.default_rng(0)
    with pytest.raises(PreconditionError, match="number of inputs"):
        augment(random_network([2, 3, 1], rng), random_network([3, 1], rng))
    with pytest.raises(PreconditionError, match="number of outputs"):
        augment(random_network([2, 3, 1], rng), random_network([2, 2], rng))
    with pytest.raises(PreconditionError, match="number of layers"):
        augment(random_network([2, 1], rng), random_network([2, 3, 1], rng))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.booleans())
def test_augmentation_exact(seed, mixed):
    rng = np.random.default_rng(seed)
    big, small = random_pair(rng, mixed=mixed)
    aug = augment(big, small)
    assert aug.depth == big.depth + 1
    x = rng.normal(scale=2.0, size=(100, big.input_dim))
    err = np.abs(evaluate(aug, x) - (evaluate(big, x) - evaluate(small, x))).max()
    assert err <= 1e-9


def test_toy_precision_one_cell():
    big, small = toy_pair()
    p = precision(big, small, IntervalBox([-1.0], [1.0]))
    assert p.rho == 3.0
    assert p.cell_count == 1
    assert p.sampled_lower_bound == 1.0


def test_toy_precision_refined():
    big, small = toy_pair()
    p = precision(big, small, IntervalBox([-1.0], [1.0]), PartitionConfig(splits=64))
    # exact rational per-cell bound: max |[2a - b, 2b - a]| over the 64 cells is 33/32
    assert p.rho == 33 / 32
    assert 1.0 <= p.rho <= 1 + 3 / 64 * 1.5


def test_identical_nets_sampled_gap_zero():
    net = random_network([2, 4, 1], 0)
    p = precision(net, net, IntervalBox([-1.0, -1.0], [1.0, 1.0]), PartitionConfig(splits=8))
    assert p.sampled_lower_bound == 0.0
    assert p.rho >= 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_precision_sound_against_samples(seed):
    rng = np.random.default_rng(seed)
    big, small = random_pair(rng, max_in=3)
    box = random_box(rng, big.input_dim, spread=1.0)
    p = precision(big, small, box, PartitionConfig(splits=2), samples=0)
    gap = sampled_gap(big, small, box, 20_000, rng)
    assert p.rho >= gap


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_precision_monotone_under_bisection(seed):
    rng = np.random.default_rng(seed)
    big, small = random_pair(rng, max_in=3)
    box = random_box(rng, big.input_dim, spread=1.0)
    rhos = [precision(big, small, box, PartitionConfig(bisection_depth=d), samples=0).rho for d in range(5)]
    assert all(b <= a for a, b in zip(rhos, rhos[1:]))


def test_inflation_containment():
    rng = np.random.default_rng(4)
    big = random_network([2, 8, 8, 1], rng)
    small = random_network([2, 3, 1], rng)
    box = IntervalBox([-1.0, -1.0], [1.0, 1.0])
    p = precision(big, small, box, PartitionConfig(splits=16))
    x = box.sample(5000, rng)
    yb, ys = evaluate(big, x), evaluate(small, x)
    padded = inflate(BoxUnion(ys, ys), p)
    assert np.all((padded.lowers <= yb) & (yb <= padded.uppers))


def test_inflate_modes():
    box = IntervalBox([0.0, 0.0], [1.0, 1.0])
    full = inflate(box, 0.4)
    assert np.allclose(full.lowers, -0.4) and np.allclose(full.uppers, 1.4)
    half = inflate(box, 0.4, InflationMode.PAPER_HALF_RHO)
    assert np.allclose(half.lowers, -0.2) and np.allclose(half.uppers, 1.2)
    u = BoxUnion([[0.0], [2.0]], [[1.0], [3.0]])
    assert inflate(u, 0.0) == u


def test_inflation_mode_parse():
    assert InflationMode.parse("sound") is InflationMode.SOUND_FULL_RHO
    assert InflationMode.parse("paper") is InflationMode.PAPER_HALF_RHO
    assert InflationMode.parse("paper_half_rho") is InflationMode.PAPER_HALF_RHO
    with pytest.raises(ValueError):
        InflationMode.parse("half")


def test_precision_report_round_trip():
    big, small = toy_pair()
    p = precision(big, small, IntervalBox([-1.0], [1.0]), PartitionConfig(splits=4))
    q = Precision.from_dict(p.to_dict())
    assert q.rho == p.rho and q.input_set == p.input_set and q.partition_used == p.partition_used
    assert q.covers(IntervalBox([-0.5], [1.0]))
    assert not q.covers(IntervalBox([-0.5], [1.5]))


def test_negative_precision_rejected():
    with pytest.raises(PreconditionError):
        Precision(-1.0, IntervalBox([0.0], [1.0]))


def test_self_distillation_returns_init():
    big = random_network([2, 4, 4, 1], 0)
    box = IntervalBox([-1.0, -1.0], [1.0, 1.0])
    res = distill(big, [4, 4], box, 200, init=big)
    assert res.mse == 0.0
    assert res.network == big
    assert sampled_gap(big, res.network, box) == 0.0
    assert precision(big, res.network, box, PartitionConfig(splits=8)).rho >= 0.0


def test_distill_zero_samples():
    with pytest.raises(PreconditionError):
        distill(random_network([2, 3, 1], 0), [2], IntervalBox([0.0, 0.0], [1.0, 1.0]), 0)


def test_distill_deterministic_and_learns():
    box = IntervalBox([-1.0, -1.0], [1.0, 1.0])

    def teacher(x):
        return np.abs(x[:, :1]) + 0.5 * x[:, 1:]

    a = distill(teacher, [8, 8], box, 500, seed=3, epochs=200)
    b = distill(teacher, [8, 8], box, 500, seed=3, epochs=200)
    assert a.network == b.network
    assert a.network.widths == [2, 8, 8, 1]
    assert a.network.layers[-1].activation is Activation.LINEAR
    assert a.history[-1] < 0.1 * a.history[0]
    x = box.sample(1000, 9)
    rms = np.sqrt(np.mean((evaluate(a.network, x) - teacher(x)) ** 2))
    assert rms < 0.15


def test_distilled_acc_controller_shape(acc_nets):
    big, small = acc_nets
    assert big.widths == [5, 20, 20, 20, 20, 20, 1]
    assert small.widths == [5, 5, 5, 1]
    assert np.all(np.isfinite(small.layers[0].weights))
