"""How tight is a certified gap between two networks?

Two one-neuron linear nets, 2x and x, differ by exactly |x| <= 1 on [-1, 1].
Interval arithmetic on their difference network forgets that both branches
see the same x, so a single cell gives 3.  Cutting the input into cells
shrinks the bound towards the true value.
"""

import numpy as np

from nnreduce import IntervalBox, Layer, Network, PartitionConfig, augment, evaluate, precision, random_network

big = Network([Layer([[2.0]], [0.0], "linear")])
small = Network([Layer([[1.0]], [0.0], "linear")])
box = IntervalBox([-1.0], [1.0])

diff = augment(big, small)
print("difference network widths:", diff.widths)
print("diff(0.7) =", evaluate(diff, [0.7])[0])

for cells in (1, 4, 16, 64, 256):
    p = precision(big, small, box, PartitionConfig(splits=cells))
    print(f"{cells:4d} cells  rho = {p.rho:.5f}   sampled max gap = {p.sampled_lower_bound:.5f}")

# the same construction works for any depth pair; here a 3-layer net against a 2-layer one
rng = np.random.default_rng(0)
deep, shallow = random_network([2, 4, 3, 1], rng), random_network([2, 2, 1], rng)
aug = augment(deep, shallow)
print("\n3-layer vs 2-layer difference network widths:", aug.widths)
for layer in aug.layers:
    kinds = "".join("r" if m else "l" for m in layer.relu_mask)
    print(f"  {layer.in_dim:2d} -> {layer.out_dim:2d}  activations {kinds}")
