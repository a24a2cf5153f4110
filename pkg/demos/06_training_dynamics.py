"""The Lipschitz constant climbs while a network learns.

Per-epoch metrics from plain SGD on a three-class toy task, smoothed with a
trailing window of 5 the way one would before plotting.
"""

from liprobust.data import synthetic_blobs
from liprobust.experiments import moving_average
from liprobust.network import NetworkSpec
from liprobust.robustness import PerturbationSpec
from liprobust.rng import Rng
from liprobust.training import TrainConfig, train

data = synthetic_blobs(3, 150, 4, 4.0, Rng(5))
config = TrainConfig(epochs=30, batch_size=16, early_stop_tol=None, eval_perturbation=PerturbationSpec(2, 0.1))
_, metrics = train(NetworkSpec(3, 4, 32, 3), data, config)

emp = moving_average([m.L_empirical for m in metrics])
spec = moving_average([m.L_spectral for m in metrics])
print("epoch  loss    acc    cert   L_emp  L_spec")
for m, e, s in zip(metrics, emp, spec):
    if m.epoch % 5 == 0:
        print(f"{m.epoch:5}  {m.loss:.4f}  {m.accuracy:.3f}  {m.certified_accuracy:.3f}  {e:5.2f}  {s:6.2f}")
