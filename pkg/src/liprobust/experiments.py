"""Experiment sweeps producing plot-ready CSV.

* :func:`run_init_sweep`   analytical vs numerical Lipschitz estimates at initialisation
* :func:`run_train_sweep`  accuracy, certified accuracy and Lipschitz estimates after training
* :func:`rmt_check`        sampled Gaussian s_max against the asymptotic law

Every run is a pure function of its :class:`SweepConfig`; trial ``t`` uses
``Rng(seed).split(t)`` so reruns give byte-identical CSV.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset, load_mnist, synthetic_blobs, train_test_split
from .errors import ConfigError, InvalidInputError, TrainingDivergedError
from .lipschitz import (
    PATTERN_MAX_HIDDEN,
    analytical_lipschitz,
    empirical_lipschitz,
    pattern_exact_relu,
    posttrain_analytical_lipschitz,
    rmt_max_singular,
    spectral_product_bound,
)
from .linalg import power_iteration, sample_gaussian_matrix
from .network import Activation, NetworkSpec, weight_std_multiplier, xavier_init
from .robustness import PerturbationSpec, accuracy, certified_accuracy
from .rng import Rng
from .training import TrainConfig, train

FLOAT_FORMAT = ".10g"


def moving_average(series, window: int = 5) -> list[float]:
    """Trailing mean over the last ``window`` points (fewer at the start)."""
    if window < 1:
        raise InvalidInputError("window must be >= 1")
    values = np.asarray(series, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, values.size + 1)
    lo = np.maximum(0, idx - window)
    return list((csum[idx] - csum[lo]) / (idx - lo))


@dataclass
class SweepConfig:
    depths: list = field(default_factory=lambda: [2])
    widths: list = field(default_factory=lambda: [128])
    alphas: list = field(default_factory=lambda: [1.0])
    lambdas: list = field(default_factory=lambda: [0.0])
    trials: int = 10
    seed: int = 0
    activation: str = "relu"
    input_dim: int = 64
    output_dim: int = 10
    empirical_samples: int = 1
    dataset: str = "mnist"
    mnist_dir: Optional[str] = None
    full_dataset: bool = False
    blob_classes: int = 2
    blob_per_class: int = 200
    blob_dim: int = 2
    blob_separation: float = 6.0
    epsilon: float = 0.01
    p: str = "2"
    l2_mode: str = "dual"
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 64
    eval_samples: Optional[int] = None
    lipschitz_samples: int = 100
    out: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if not self.lambdas:
            self.lambdas = [0.0]
        for name in ("depths", "widths", "alphas"):
            if not getattr(self, name):
                raise ConfigError(f"grid {name!r} is empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if any(int(v) != v or v < 1 for v in list(self.depths) + list(self.widths)):
            raise ConfigError("depths and widths must be positive integers")
        if any(not (a > 0) for a in self.alphas):
            raise ConfigError("alphas must be positive")
        if any(not (lam >= 0) for lam in self.lambdas):
            raise ConfigError("lambdas must be non-negative")
        if self.dataset not in ("mnist", "blobs"):
            raise ConfigError(f"dataset must be 'mnist' or 'blobs', got {self.dataset!r}")
        try:
            Activation(self.activation)
            self.perturbation
        except (ValueError, InvalidInputError) as exc:
            raise ConfigError(str(exc)) from None

    @property
    def perturbation(self) -> PerturbationSpec:
        return PerturbationSpec.parse(self.p, self.epsilon)

    def grid(self) -> list[tuple]:
        return sorted(
            (int(m), int(d), float(a), float(lam))
            for m in self.depths for d in self.widths for a in self.alphas for lam in self.lambdas
        )

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw)


@dataclass
class SweepRow:
    depth: int
    width: int
    alpha: float
    lam: float
    trials: int
    stats: dict
    status: str = "ok"


def _aggregate(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if x is not None and not math.isnan(x)], dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None or math.isnan(v) else format(float(v), FLOAT_FORMAT)


def rows_to_csv(rows: list[SweepRow], metrics: list[str], extra: tuple = ()) -> str:
    header = ["depth", "width", "alpha", "lambda", "trials"]
    for name in metrics:
        header += [f"{name}_mean", f"{name}_std"]
    header += list(extra) + ["status"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in sorted(rows, key=lambda r: (r.depth, r.width, r.alpha, r.lam)):
        line = [r.depth, r.width, r.alpha, r.lam, r.trials]
        for name in metrics:
            line += list(r.stats.get(name, (math.nan, math.nan)))
        line += [r.stats.get(e, math.nan) for e in extra] + [r.status]
        writer.writerow([_fmt(v) for v in line])
    return buf.getvalue()


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text)


INIT_METRICS = ["L_analytical", "L_empirical", "L_spectral", "L_pattern"]


def _init_point(job) -> SweepRow:
    config, (depth, width, alpha, lam) = job
    spec = NetworkSpec(depth, config.input_dim, width, config.output_dim, config.activation, alpha)
    master = Rng(config.seed)
    analytical = analytical_lipschitz(spec).value if depth >= 2 else math.nan
    emp, spec_prod, pattern = [], [], []
    for t in range(config.trials):
        rng = master.split(t)
        net = xavier_init(spec, rng)
        emp.append(empirical_lipschitz(net, config.empirical_samples, rng=rng).value)
        spec_prod.append(spectral_product_bound(net, rng=rng).value)
        if spec.activation is Activation.RELU and spec.hidden_units <= PATTERN_MAX_HIDDEN:
            pattern.append(pattern_exact_relu(net, rng=rng).value)
    stats = {
        "L_analytical": (analytical, 0.0 if depth >= 2 else math.nan),
        "L_empirical": _aggregate(emp),
        "L_spectral": _aggregate(spec_prod),
        "L_pattern": _aggregate(pattern),
        "L_empirical_median": float(np.median(emp)),
    }
    return SweepRow(depth, width, alpha, lam, config.trials, stats)


def init_sweep_rows(config: SweepConfig) -> list[SweepRow]:
    return _map(_init_point, [(config, point) for point in config.grid()], config.workers)


def run_init_sweep(config: SweepConfig) -> str:
    """Estimates for freshly initialised nets at every grid point (no training)."""
    text = rows_to_csv(init_sweep_rows(config), INIT_METRICS, extra=("L_empirical_median",))
    _write(text, config.out)
    return text


TRAIN_METRICS = ["accuracy", "certified_accuracy", "L_empirical", "L_spectral", "L_analytical_posttrain", "alpha_tilde"]


def load_datasets(config: SweepConfig) -> tuple[Dataset, Dataset]:
    if config.dataset == "blobs":
        data = synthetic_blobs(config.blob_classes, config.blob_per_class, config.blob_dim,
                               config.blob_separation, Rng(config.seed, stream=7))
        return train_test_split(data, 0.25, Rng(config.seed, stream=8))
    if not config.mnist_dir:
        raise ConfigError("dataset 'mnist' needs mnist_dir (or --mnist-dir)")
    return (load_mnist(config.mnist_dir, "train", config.full_dataset),
            load_mnist(config.mnist_dir, "test", config.full_dataset))


def _train_point(job) -> SweepRow:
    config, (depth, width, alpha, lam), train_set, test_set = job
    spec = NetworkSpec(depth, train_set.input_dim, width, config.output_dim, config.activation, alpha)
    probe = test_set if config.eval_samples is None else test_set.head(config.eval_samples)
    pert = config.perturbation
    per_metric = {name: [] for name in TRAIN_METRICS}
    status = "ok"
    for t in range(config.trials):
        tc = TrainConfig(config.learning_rate, config.epochs, config.batch_size, lam, config.seed + t,
                         pert, track_metrics=False)
        try:
            net, _ = train(spec, train_set, tc)
        except TrainingDivergedError as exc:
            status = f"diverged: {exc}"
            continue
        rng = Rng(config.seed).split(t)
        per_metric["accuracy"].append(accuracy(net, test_set))
        per_metric["certified_accuracy"].append(certified_accuracy(net, probe, pert, "ibp", l2_mode=config.l2_mode))
        per_metric["L_empirical"].append(empirical_lipschitz(net, config.lipschitz_samples, probe, rng=rng).value)
        per_metric["L_spectral"].append(spectral_product_bound(net, rng=rng).value)
        per_metric["L_analytical_posttrain"].append(
            posttrain_analytical_lipschitz(net).value if depth >= 2 else math.nan)
        per_metric["alpha_tilde"].append(weight_std_multiplier(net))
    stats = {name: _aggregate(values) for name, values in per_metric.items()}
    return SweepRow(depth, width, alpha, lam, config.trials, stats, status.replace("\n", " "))


def train_sweep_rows(config: SweepConfig, datasets=None) -> list[SweepRow]:
    train_set, test_set = datasets if datasets is not None else load_datasets(config)
    jobs = [(config, point, train_set, test_set) for point in config.grid()]
    return _map(_train_point, jobs, config.workers)


def run_train_sweep(config: SweepConfig, datasets=None) -> str:
    """Train every grid point ``trials`` times and report test metrics.

    ``datasets`` may supply an explicit ``(train, test)`` pair instead of the
    dataset named in the config.
    """
    text = rows_to_csv(train_sweep_rows(config, datasets), TRAIN_METRICS)
    _write(text, config.out)
    return text


RMT_COLUMNS = ["N", "n", "trials", "predicted_smax", "mean_smax", "predicted_ratio", "mean_ratio", "std_ratio", "rel_error"]


def rmt_check(sizes, trials: int = 10, seed: int = 0, out=None) -> str:
    """Compare s_max / sqrt(N) of standard Gaussian N x n matrices with 1 + sqrt(n/N)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RMT_COLUMNS)
    master = Rng(seed)
    for N, n in sizes:
        N, n = int(N), int(n)
        if min(N, n) < 100:
            raise InvalidInputError("rmt_check sizes must be >= 100")
        if n > N:
            N, n = n, N
        ratios = []
        for t in range(trials):
            rng = master.split(t)
            a = sample_gaussian_matrix(N, n, 1.0, rng)
            ratios.append(power_iteration(a, rng=rng).value / math.sqrt(N))
        predicted = rmt_max_singular(N, n) / math.sqrt(N)
        mean, std = _aggregate(ratios)
        row = [N, n, trials, rmt_max_singular(N, n), mean * math.sqrt(N), predicted, mean, std,
               abs(mean - predicted) / predicted]
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    _write(text, out)
    return text


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
