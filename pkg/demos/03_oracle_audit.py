"""Throw simulated trajectories at the reduced-controller tube.

The simulator runs the ORIGINAL controller; the tube was built from the
reduced one.  With full-rho padding no trajectory may leave the tube.  The
half-rho padding is tighter and carries no such guarantee, so the audit is
repeated for comparison.
"""

from nnreduce import InflationMode, PartitionConfig, ReachConfig, containment_audit, reach_nncs
from nnreduce import acc
from nnreduce.simulate import sample_inputs, simulate_batch

big, small = acc.synthesize_controllers(seed=0)
sc = acc.acc_scenario(controller=big, reduced=small)
x0s, refs = sample_inputs(sc.system, sc.x0, 300, seed=1)
trajs = simulate_batch(sc.system, x0s, refs, sc.horizon)
trajs[0].to_csv("acc_trajectory_0.csv", acc.STATE_NAMES, ["a_e"])

for mode in (InflationMode.SOUND_FULL_RHO, InflationMode.PAPER_HALF_RHO):
    cfg = ReachConfig(partition=PartitionConfig(splits=acc.REACH_SPLITS), inflation=mode, use_reduced=True)
    tube = reach_nncs(sc.system, sc.x0, sc.horizon, cfg)
    report = containment_audit(trajs, tube)
    print(f"{mode.value:15s} radius {tube.stats['inflation_radius']:.4f}: "
          f"{report.checked_points} points, {len(report.violations)} outside the tube")

print("\n" + report.note)
