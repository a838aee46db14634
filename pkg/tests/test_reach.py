import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_box
from nnreduce.errors import BudgetError, InputShapeError
from nnreduce.network import Layer, Network, evaluate, random_network
from nnreduce.reach import PartitionConfig, interval_layer, partition, propagate, reach_nn
from nnreduce.sets import IntervalBox, hull


def test_relu_layer_interval():
    out = interval_layer(Layer([[1.0]], [0.0], "relu"), IntervalBox([-1.0], [2.0]))
    assert out == IntervalBox([0.0], [2.0])


def test_difference_layer_interval():
    out = interval_layer(Layer([[1.0, -1.0]], [0.0], "linear"), IntervalBox([0.0, 0.0], [1.0, 1.0]))
    # brute force over a corner grid gives the same range
    grid = np.array(list(itertools.product(np.linspace(0, 1, 11), repeat=2)))
    vals = grid[:, 0] - grid[:, 1]
    assert out == IntervalBox([vals.min()], [vals.max()]) == IntervalBox([-1.0], [1.0])


def test_affine_interval():
    out = interval_layer(Layer([[2.0]], [1.0], "linear"), IntervalBox([-1.0], [1.0]))
    assert out == IntervalBox([-1.0], [3.0])


def test_identity_one_cell():
    net = Network([Layer([[1.0]], [0.0], "linear")])
    u = reach_nn(net, IntervalBox([0.0], [1.0]))
    assert len(u) == 1 and u[0] == IntervalBox([0.0], [1.0])


def dependency_net():
    return Network([Layer([[2.0], [1.0]], [0.0, 0.0], "linear"), Layer([[1.0, -1.0]], [0.0], "linear")])


def test_dependency_loss_one_cell():
    # [2x] - [x] over [-1, 1] is [-2, 2] - [-1, 1] = [-3, 3]; the true range is [-1, 1]
    u = reach_nn(dependency_net(), IntervalBox([-1.0], [1.0]))
    assert hull(u) == IntervalBox([-3.0], [3.0])


def test_dependency_loss_four_cells():
    # cells of width 1/2: the cell [a, a + 1/2] gives [2a - (a + 1/2), 2(a + 1/2) - a] = [a - 1/2, a + 1];
    # over a in {-1, -1/2, 0, 1/2} the hull is [-3/2, 3/2]
    u = reach_nn(dependency_net(), IntervalBox([-1.0], [1.0]), PartitionConfig(splits=4))
    assert len(u) == 4
    assert hull(u) == IntervalBox([-1.5], [1.5])


def test_partition_order_and_bounds():
    lo, hi = partition(IntervalBox([0.0, 0.0], [1.0, 3.0]), PartitionConfig(splits=(2, 3)))
    assert lo.tolist() == [[0.0, 0.0], [0.0, 1.0], [0.0, 2.0], [0.5, 0.0], [0.5, 1.0], [0.5, 2.0]]
    assert hi[-1].tolist() == [1.0, 3.0]


def test_zero_width_dims_not_split():
    cfg = PartitionConfig(splits=4)
    box = IntervalBox([0.0, 5.0], [1.0, 5.0])
    assert cfg.grid_shape(box) == (4, 1)
    assert len(partition(box, cfg)[0]) == 4


def test_max_cell_width():
    cfg = PartitionConfig(max_cell_width=0.3)
    assert cfg.grid_shape(IntervalBox([0.0, 0.0], [1.0, 0.6])) == (4, 2)


def test_bisection_halves_widest_side():
    lo, hi = partition(IntervalBox([0.0, 0.0], [4.0, 1.0]), PartitionConfig(bisection_depth=1))
    assert lo.tolist() == [[0.0, 0.0], [2.0, 0.0]]
    assert hi.tolist() == [[2.0, 1.0], [4.0, 1.0]]


def test_budget():
    with pytest.raises(BudgetError):
        partition(IntervalBox([0.0, 0.0], [1.0, 1.0]), PartitionConfig(splits=2000, max_cells=1000))


def test_bad_partition_config():
    with pytest.raises(ValueError):
        PartitionConfig(splits=0)
    with pytest.raises(ValueError):
        PartitionConfig(splits=2, max_cell_width=0.1)


def test_input_dimension_checked():
    with pytest.raises(InputShapeError):
        reach_nn(random_network([2, 3, 1], 0), IntervalBox([0.0], [1.0]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_soundness_fuzz(seed):
    rng = np.random.default_rng(seed)
    widths = [int(rng.integers(1, 4))] + [int(rng.integers(1, 7)) for _ in range(int(rng.integers(0, 3)))] + [2]
    net = random_network(widths, rng)
    box = random_box(rng, widths[0])
    cfg = PartitionConfig(splits=int(rng.integers(1, 4)))
    lo, hi = partition(box, cfg)
    out_lo, out_hi = propagate(net, lo, hi)
    for c in range(len(lo)):
        x = IntervalBox(lo[c], hi[c]).sample(10_000 // len(lo), rng)
        y = evaluate(net, x)
        assert np.all(y >= out_lo[c] - 1e-12) and np.all(y <= out_hi[c] + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_refinement_shrinks_boxes(seed):
    rng = np.random.default_rng(seed)
    net = random_network([3, 5, 4, 2], rng)
    box = random_box(rng, 3)
    parent_lo, parent_hi = propagate(net, box.lower[None], box.upper[None])
    u = reach_nn(net, box, PartitionConfig(bisection_depth=3))
    assert np.all(u.lowers >= parent_lo) and np.all(u.uppers <= parent_hi)


def test_monotone_single_layer_is_exact():
    rng = np.random.default_rng(5)
    for _ in range(20):
        w = rng.normal(size=(1, 3))
        net = Network([Layer(w, rng.normal(size=1), "relu")])
        box = random_box(rng, 3)
        out = reach_nn(net, box)[0]
        vals = evaluate(net, box.corners())
        assert out.lower[0] == pytest.approx(vals.min(), abs=1e-12)
        assert out.upper[0] == pytest.approx(vals.max(), abs=1e-12)
