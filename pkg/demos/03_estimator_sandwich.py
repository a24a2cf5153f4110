"""Three numerical Lipschitz estimates that bracket the truth on small ReLU nets.

empirical       max Jacobian norm over sampled inputs (too low, never too high)
pattern_exact   max over every on/off pattern of the hidden units
spectral        product of layer norms (too high, never too low)
"""

import numpy as np

from liprobust.lipschitz import all_estimates
from liprobust.network import MlpNetwork, NetworkSpec, xavier_init
from liprobust.rng import Rng

# hand example: identity then a summing row, the four patterns give 0, 1, 1, sqrt(2)
net = MlpNetwork.from_layers([np.eye(2), [[1.0, 1.0]]])
for est in all_estimates(net, samples=1000, rng=Rng(0)):
    name = est.method + (" (trained alpha)" if "alpha_tilde" in est.detail else "")
    print(f"{name:32s} {est.value:.6f}")

print("\nrandom nets (n=2):  empirical <= pattern <= spectral")
for seed in range(5):
    r = Rng(seed)
    net = xavier_init(NetworkSpec(3, 2, 6, 2, alpha=1.5), r)
    est = {e.method: e.value for e in all_estimates(net, samples=10_000, rng=r)}
    print(f"seed {seed}: {est['empirical']:.4f} <= {est['pattern_exact']:.4f} <= {est['spectral_product']:.4f}")
