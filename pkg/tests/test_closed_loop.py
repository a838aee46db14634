import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nnreduce import acc
from nnreduce.closed_loop import Halfspace, ReachConfig, SafetySpec, SampledNNCS, reach_nncs, verify
from nnreduce.errors import PrecisionDomainError, PreconditionError
from nnreduce.network import Layer, Network, random_network
from nnreduce.ode import ReachTube, linear_dynamics
from nnreduce.reach import PartitionConfig
from nnreduce.reduction import InflationMode, Precision
from nnreduce.sets import IntervalBox

EMPTY = IntervalBox(np.zeros(0), np.zeros(0))


def scalar_loop(a=0.0, controller=None, reduced=None, rho=None):
    controller = controller or Network([Layer([[-1.0]], [0.0], "linear")])
    return SampledNNCS(linear_dynamics([[a]], [[1.0]]), controller, 0.1, EMPTY, [("y", 0)],
                       reduced_controller=reduced, precision=rho)


def test_zero_field_keeps_box():
    sys_ = scalar_loop(controller=random_network([1, 4, 1], 0))
    sys_.plant = linear_dynamics([[0.0]], [[0.0]])
    tube = reach_nncs(sys_, IntervalBox([1.0], [2.0]), 1.0)
    assert len(tube) == 40
    assert np.all(tube.lowers == 1.0) and np.all(tube.uppers == 2.0)


def test_zero_rho_matches_original():
    net = random_network([1, 5, 1], 2)
    rho = Precision(0.0, IntervalBox([-10.0], [10.0]))
    sys_ = scalar_loop(-0.5, net, net, rho)
    x0 = IntervalBox([0.5], [1.0])
    cfg = ReachConfig(partition=PartitionConfig(splits=4))
    a = reach_nncs(sys_, x0, 1.0, cfg)
    b = reach_nncs(sys_, x0, 1.0, ReachConfig(partition=PartitionConfig(splits=4), use_reduced=True))
    assert a.same_boxes(b)


def test_horizon_must_be_whole_periods():
    with pytest.raises(PreconditionError):
        reach_nncs(scalar_loop(), IntervalBox([0.0], [1.0]), 0.25)


def test_reduced_needs_precision():
    net = Network([Layer([[-1.0]], [0.0], "linear")])
    with pytest.raises(PreconditionError):
        scalar_loop(reduced=net)


def test_layout_checked():
    with pytest.raises(PreconditionError):
        SampledNNCS(linear_dynamics([[0.0]], [[1.0]]), Network([Layer([[1.0, 1.0]], [0.0], "linear")]),
                    0.1, EMPTY, [("y", 0)])
    with pytest.raises(PreconditionError):
        SampledNNCS(linear_dynamics([[0.0]], [[1.0]]), Network([Layer([[1.0]], [0.0], "linear")]),
                    0.1, EMPTY, [("r", 0)])


def test_leaving_precision_domain():
    small = Network([Layer([[-1.0]], [0.0], "linear")])
    sys_ = scalar_loop(1.0, small, small, Precision(0.1, IntervalBox([-1.0], [1.5])))
    with pytest.raises(PrecisionDomainError, match="precision domain"):
        reach_nncs(sys_, IntervalBox([1.0], [1.4]), 5.0, ReachConfig(use_reduced=True))


def test_larger_rho_gives_larger_tube():
    net = Network([Layer([[-1.0]], [0.0], "linear")])
    x0 = IntervalBox([0.5], [1.0])
    tubes = []
    for r in (0.0, 0.1, 0.3):
        sys_ = scalar_loop(-0.5, net, net, Precision(r, IntervalBox([-5.0], [5.0])))
        tubes.append(reach_nncs(sys_, x0, 2.0, ReachConfig(use_reduced=True)))
    for small, big in zip(tubes, tubes[1:]):
        assert np.all(big.lowers <= small.lowers) and np.all(small.uppers <= big.uppers)


def test_half_rho_is_tighter():
    net = Network([Layer([[-1.0]], [0.0], "linear")])
    sys_ = scalar_loop(-0.5, net, net, Precision(0.2, IntervalBox([-5.0], [5.0])))
    x0 = IntervalBox([0.5], [1.0])
    full = reach_nncs(sys_, x0, 1.0, ReachConfig(use_reduced=True))
    half = reach_nncs(sys_, x0, 1.0, ReachConfig(use_reduced=True, inflation=InflationMode.PAPER_HALF_RHO))
    assert full.stats["inflation_radius"] == 0.2 and half.stats["inflation_radius"] == 0.1
    assert np.all(full.lowers <= half.lowers) and np.all(half.uppers <= full.uppers)


def box_tube(lo, hi):
    lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
    n = len(lo)
    times = np.column_stack([np.arange(n), np.arange(1, n + 1)]).astype(float)
    return ReachTube(times, lo, hi, IntervalBox(lo[-1], hi[-1]))


NONPOSITIVE = SafetySpec([[Halfspace((1.0,), 0.0, "x <= 0")]])


def test_verify_safe():
    r = verify(box_tube([[5.0]], [[6.0]]), NONPOSITIVE)
    assert r.safe and r.verdict == "safe" and r.first_violation is None
    assert r.stats["min_margin"] == 5.0


def test_verify_unknown_reports_segment():
    r = verify(box_tube([[5.0], [-1.0]], [[6.0], [1.0]]), NONPOSITIVE)
    assert r.verdict == "unknown"
    assert r.first_violation["segment"] == 1
    assert list(r.first_violation["time_interval"]) == [1.0, 2.0]


def test_verify_conjunction_needs_all_inequalities():
    # unsafe: x <= 0 and y <= 0; the box meets x <= 0 but never y <= 0
    spec = SafetySpec([[Halfspace((1.0, 0.0), 0.0), Halfspace((0.0, 1.0), 0.0)]])
    assert verify(box_tube([[-1.0, 1.0]], [[1.0, 2.0]]), spec).safe
    assert not verify(box_tube([[-1.0, -1.0]], [[1.0, 2.0]]), spec).safe


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_verify_monotone_in_tube(seed):
    rng = np.random.default_rng(seed)
    lo = rng.normal(size=(5, 2))
    hi = lo + rng.uniform(0, 1, size=(5, 2))
    spec = SafetySpec([[Halfspace(tuple(rng.normal(size=2)), float(rng.normal()))]
                       for _ in range(int(rng.integers(1, 3)))])
    grow = rng.uniform(0, 0.5, size=(2, 5, 2))
    small, big = verify(box_tube(lo, hi), spec), verify(box_tube(lo - grow[0], hi + grow[1]), spec)
    if big.safe:
        assert small.safe
    assert big.stats["min_margin"] <= small.stats["min_margin"] + 1e-12


def test_acc_safety_spec_coefficients():
    spec = acc.safety_spec()
    assert len(spec.unsafe) == 1 and len(spec.unsafe[0]) == 1
    h = spec.unsafe[0][0]
    assert h.coeffs == (1.0, 0.0, 0.0, -1.0, -1.4, 0.0)
    assert h.bound == 10.0


def test_acc_defaults(acc_nets):
    big, small = acc_nets
    sc = acc.acc_scenario(controller=big, with_reduced=False)
    assert sc.system.sampling_period == 0.01
    assert round(sc.horizon / sc.system.sampling_period) == 300
    d_rel = sc.system.plant.output_box(sc.x0)
    assert (d_rel.lower[1], d_rel.upper[1]) == (83.0, 86.0)
    assert sc.system.reference_box.lower[1] == acc.T_GAP == -acc.safety_spec().unsafe[0][0].coeffs[4]
    assert sc.system.reduced_controller is None


def test_acc_tube_original(acc_nets):
    big, _ = acc_nets
    sc = acc.acc_scenario(controller=big, with_reduced=False)
    cfg = ReachConfig(partition=PartitionConfig(splits=acc.REACH_SPLITS))
    tube = reach_nncs(sc.system, sc.x0, sc.horizon, cfg)
    assert len(tube) == 300 * 4
    assert tube.stats["intervals"] == 300
    # d_rel lower bound on the first interval
    assert tube.lowers[0, 0] - tube.uppers[0, 3] > 0
    assert verify(tube, sc.spec).safe


def test_acc_reduced_zero_rho_identical(acc_nets):
    big, _ = acc_nets
    sc = acc.acc_scenario(controller=big, with_reduced=False)
    sys_ = sc.system.with_reduced(big, Precision(0.0, acc.PRECISION_BOX))
    part = PartitionConfig(splits=(1, 1, 4, 4, 4))
    a = reach_nncs(sys_, sc.x0, 0.5, ReachConfig(partition=part))
    b = reach_nncs(sys_, sc.x0, 0.5, ReachConfig(partition=part, use_reduced=True))
    assert a.same_boxes(b)
