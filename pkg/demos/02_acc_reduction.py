"""Adaptive cruise control: verify with a 2x5 controller instead of a 5x20 one.

The 5x20 controller realizes a saturated spacing law; the 2x5 network is
distilled from it.  The certified gap rho between the two pads the small
network's output sets, so the resulting tube also covers the big controller.
"""

import time

from nnreduce import PartitionConfig, ReachConfig, precision, reach_nncs, verify
from nnreduce import acc
from nnreduce.cli import format_table

t = time.perf_counter()
big, small = acc.synthesize_controllers(seed=0)
print(f"controllers {big.widths} and {small.widths} ready in {time.perf_counter() - t:.1f} s")

p = precision(big, small, acc.PRECISION_BOX, PartitionConfig(splits=acc.PRECISION_SPLITS))
print(f"rho = {p.rho:.4f} over {p.cell_count} cells ({p.wall_time:.1f} s); "
      f"largest sampled gap {p.sampled_lower_bound:.4f}")

sc = acc.acc_scenario(controller=big, reduced=small, rho=p)
part = PartitionConfig(splits=acc.REACH_SPLITS)
rows = []
for label, use_reduced in (("original", False), ("reduced", True)):
    tube = reach_nncs(sc.system, sc.x0, sc.horizon, ReachConfig(partition=part, use_reduced=use_reduced))
    res = verify(tube, sc.spec)
    tube.to_csv(f"acc_tube_{label}.csv", acc.STATE_NAMES)
    rows.append({"c": label, "nn": tube.stats["controller_reach_time"], "ode": tube.stats["ode_reach_time"],
                 "v": res.verdict, "m": res.stats["min_margin"]})

print("\nComparison of ACC reachable set calculation times")
print(format_table(rows, [("c", "controller"), ("nn", "NN reach (s)"), ("ode", "ODE reach (s)"),
                          ("v", "verdict"), ("m", "min margin (m)")]))
print("\ntubes written to acc_tube_original.csv and acc_tube_reduced.csv")
