"""Certifying a small classifier two ways and trying to break the certificates.

A margin m and a global Lipschitz bound L give an l2 radius of
sqrt(2) m / (2 L).  Interval bound propagation pushes the whole perturbation
ball through the network instead.  A random attack then looks for any
certified point whose prediction can be flipped.  It should find none.
"""

import math

import numpy as np

from liprobust.data import synthetic_blobs
from liprobust.lipschitz import pattern_exact_relu, spectral_product_bound
from liprobust.network import NetworkSpec
from liprobust.robustness import PerturbationSpec, accuracy, certified_accuracy, certified_mask, random_attack
from liprobust.rng import Rng
from liprobust.training import TrainConfig, train

data = synthetic_blobs(3, 150, 2, 5.0, Rng(11))
net, _ = train(NetworkSpec(2, 2, 10, 3), data, TrainConfig(epochs=30, batch_size=16, track_metrics=False))
tight, loose = pattern_exact_relu(net), spectral_product_bound(net)
print(f"accuracy {accuracy(net, data):.3f}, L pattern {tight.value:.3f}, L spectral {loose.value:.3f}")

print("\neps    ibp    margin(pattern)  margin(spectral)")
for eps in (0.0, 0.1, 0.25, 0.5, 1.0):
    pert = PerturbationSpec(2, eps)
    print(f"{eps:4.2f}  {certified_accuracy(net, data, pert):.3f}  "
          f"{certified_accuracy(net, data, pert, 'lipschitz_margin', tight):15.3f}  "
          f"{certified_accuracy(net, data, pert, 'lipschitz_margin', loose):16.3f}")

pert = PerturbationSpec(math.inf, 0.2)
mask = certified_mask(net, data, pert) | certified_mask(net, data, pert, "lipschitz_margin", tight)
flips = sum(random_attack(net, data.inputs[i], int(data.labels[i]), pert, 1000, Rng(int(i)))
            for i in np.flatnonzero(mask))
print(f"\nl_inf eps=0.2: {mask.sum()} certified points, {flips} flips from 1000 random perturbations each")
