"""The from-scratch CNN: forward pass, loss, and a gradient check.

Builds the tiny stock network, pushes a random patch through it, and compares
analytic backpropagation gradients against central finite differences — the
standard sanity check for hand-written backward passes.
"""

import numpy as np

from funcscene import neuralnet as nn
from funcscene.imaging import Image

net = nn.tiny_network(32)
print("layers:")
for layer in net.layers:
    print(f"  {layer}")

params = nn.init_parameters(net, seed=0)
rng = np.random.default_rng(0)
patch = Image(rng.uniform(0, 1, (32, 32, 3)))

probs, _ = nn.forward(net, params, patch)
print(f"\noutput is a distribution over {net.class_count} classes "
      f"(sum {probs.sum():.12f}, max {probs.max():.3f})")
print(f"cross-entropy vs class 7: {nn.cross_entropy(probs, 7):.4f}")

# a smaller net keeps the finite-difference loop quick
small = nn.NetworkSpec(
    input=(3, 10, 10),
    layers=(nn.Conv(3, 4, 3, 3), nn.ReLU(), nn.MaxPool(2, 2),
            nn.FullyConnected(64, 8), nn.ReLU(),
            nn.FullyConnected(8, 4), nn.Softmax()),
    class_count=4,
)
err = nn.gradient_check(small, nn.init_parameters(small, seed=1),
                        Image(rng.uniform(0, 1, (10, 10, 3))), target=2)
print(f"\ngradient check max relative error: {err:.2e} (must be < 1e-4)")
