"""Mini-batch SGD with cross-entropy loss, weight decay and per-epoch metrics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset, batches
from .errors import InvalidInputError, TrainingDivergedError
from .lipschitz import empirical_lipschitz, posttrain_analytical_lipschitz, spectral_product_bound
from .network import MlpNetwork, NetworkSpec, activation_derivative, forward, logits, xavier_init
from .robustness import PerturbationSpec, accuracy, certified_accuracy
from .rng import Rng

METRIC_COLUMNS = ["epoch", "loss", "accuracy", "certified_accuracy", "L_empirical", "L_spectral", "L_analytical_posttrain"]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 20
    batch_size: int = 64
    weight_decay: float = 0.0
    seed: int = 0
    eval_perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    early_stop_tol: Optional[float] = 1e-4
    early_stop_window: int = 5
    lipschitz_samples: int = 100
    eval_samples: int = 500
    track_metrics: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise InvalidInputError("learning_rate must be positive")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise InvalidInputError("epochs must be an integer >= 1")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise InvalidInputError("batch_size must be an integer >= 1")
        if not (math.isfinite(self.weight_decay) and self.weight_decay >= 0):
            raise InvalidInputError("weight_decay must be finite and >= 0")


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    accuracy: float
    certified_accuracy: float
    L_empirical: float
    L_spectral: float
    L_analytical_posttrain: float

    def __post_init__(self):
        for name in ("accuracy", "certified_accuracy"):
            v = getattr(self, name)
            if not (math.isnan(v) or 0.0 <= v <= 1.0):
                raise InvalidInputError(f"{name} must lie in [0, 1], got {v}")


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logit_vec, label: int) -> float:
    """-log softmax(logits)[label] with max-subtraction."""
    z = np.asarray(logit_vec, dtype=np.float64)
    if not 0 <= label < z.shape[-1]:
        raise InvalidInputError(f"label {label} out of range")
    return float(-_log_softmax(z)[label])


def mean_cross_entropy(logit_rows, labels) -> float:
    lp = _log_softmax(np.asarray(logit_rows, dtype=np.float64))
    return float(-lp[np.arange(lp.shape[0]), labels].mean())


def gradients(net: MlpNetwork, inputs, labels):
    """Mean cross-entropy gradients over a batch.

    Returns ``(weight_grads, bias_grads)`` shaped like the parameters.
    """
    return loss_and_gradients(net, inputs, labels)[1]


def loss_and_gradients(net: MlpNetwork, inputs, labels):
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if x.shape[0] == 0:
        raise InvalidInputError("batch is empty")
    if x.shape[0] != labels.shape[0]:
        raise InvalidInputError(f"{x.shape[0]} inputs but {labels.shape[0]} labels")
    trace = forward(net, x)
    logp = _log_softmax(trace.logits)
    loss = float(-logp[np.arange(x.shape[0]), labels].mean())
    delta = np.exp(logp)
    delta[np.arange(x.shape[0]), labels] -= 1.0
    delta /= x.shape[0]
    gw = [None] * net.depth
    gb = [None] * net.depth
    for l in range(net.depth - 1, -1, -1):
        prev = x if l == 0 else trace.activations[l - 1]
        gw[l] = delta.T @ prev
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ net.weights[l]) * activation_derivative(net.activation, trace.pre_activations[l - 1])
    return loss, (gw, gb)


def sgd_step(net: MlpNetwork, grads, learning_rate: float, weight_decay: float = 0.0) -> MlpNetwork:
    """W <- W - lr (grad_W + lambda W); biases get no decay."""
    gw, gb = grads
    for w, g in zip(net.weights, gw):
        if w.shape != g.shape:
            raise InvalidInputError(f"gradient shape {g.shape} does not match weight {w.shape}")
    weights = [w - learning_rate * (g + weight_decay * w) for w, g in zip(net.weights, gw)]
    biases = [b - learning_rate * g for b, g in zip(net.biases, gb)]
    return MlpNetwork(net.spec, weights, biases)


def _smoothed(series, window):
    s = np.asarray(series, dtype=np.float64)
    return np.array([s[max(0, i - window + 1):i + 1].mean() for i in range(s.size)])


def evaluate(net: MlpNetwork, epoch: int, loss: float, test: Dataset, config: TrainConfig, rng: Rng) -> EpochMetrics:
    probe = test.head(config.eval_samples)
    emp = empirical_lipschitz(net, config.lipschitz_samples, probe, rng=rng.split(epoch))
    return EpochMetrics(
        epoch=epoch,
        loss=loss,
        accuracy=accuracy(net, test),
        certified_accuracy=certified_accuracy(net, probe, config.eval_perturbation, "ibp"),
        L_empirical=emp.value,
        L_spectral=spectral_product_bound(net, rng=rng.split(epoch)).value,
        L_analytical_posttrain=posttrain_analytical_lipschitz(net).value if net.depth >= 2 else math.nan,
    )


def train(spec: NetworkSpec, dataset: Dataset, config: TrainConfig, test: Optional[Dataset] = None,
          net: Optional[MlpNetwork] = None):
    """Train from a Xavier initialisation seeded by ``config.seed``.

    Returns ``(network, metrics)``.  ``metrics[0]`` describes the untrained
    network and ``metrics[k]`` the state after epoch ``k``; the epoch loss is
    the mean batch loss.  Training stops early once the trailing mean loss
    over ``early_stop_window`` epochs improves by less than ``early_stop_tol``.
    """
    if dataset.input_dim != spec.input_dim:
        raise InvalidInputError(f"dataset has {dataset.input_dim} features, spec expects {spec.input_dim}")
    if dataset.num_classes > spec.output_dim:
        raise InvalidInputError(f"dataset has {dataset.num_classes} classes, spec outputs {spec.output_dim}")
    test = dataset if test is None else test
    master = Rng(config.seed)
    net = xavier_init(spec, master.split(0)) if net is None else net.copy()
    shuffle_rng = master.split(1)
    eval_rng = master.split(2)
    metrics = []
    if config.track_metrics:
        init_loss = mean_cross_entropy(logits(net, dataset.inputs), dataset.labels)
        metrics.append(evaluate(net, 0, init_loss, test, config, eval_rng))
    losses = []
    for epoch in range(1, config.epochs + 1):
        batch_losses = []
        for idx in batches(len(dataset), config.batch_size, shuffle_rng):
            xb, yb = dataset.inputs[idx], dataset.labels[idx]
            batch_loss, grads = loss_and_gradients(net, xb, yb)
            net = sgd_step(net, grads, config.learning_rate, config.weight_decay)
            batch_losses.append(batch_loss)
        loss = float(np.mean(batch_losses))
        if not math.isfinite(loss) or not all(np.all(np.isfinite(w)) for w in net.weights):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch} (lr={config.learning_rate}, lambda={config.weight_decay})"
            )
        losses.append(loss)
        if config.track_metrics:
            metrics.append(evaluate(net, epoch, loss, test, config, eval_rng))
        if _should_stop(losses, config):
            break
    return net, metrics


def _should_stop(losses, config: TrainConfig) -> bool:
    w = config.early_stop_window
    if config.early_stop_tol is None or len(losses) <= w:
        return False
    smooth = _smoothed(losses, w)
    return smooth[-1 - w] - smooth[-1] < config.early_stop_tol


def metrics_to_csv(metrics) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for m in metrics:
        row = asdict(m)
        writer.writerow([row["epoch"]] + [format(row[c], ".10g") for c in METRIC_COLUMNS[1:]])
    return buf.getvalue()


def write_metrics_csv(metrics, path) -> None:
    Path(path).write_text(metrics_to_csv(metrics))
