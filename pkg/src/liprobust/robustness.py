"""Margins, certified radii, interval bound propagation and certified accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .lipschitz import LipschitzEstimate
from .network import MlpNetwork, activation_apply, logits
from .rng import as_rng


@dataclass(frozen=True)
class PerturbationSpec:
    p: float = 2.0
    epsilon: float = 1.0

    def __post_init__(self):
        p = float(self.p)
        if p not in (2.0, math.inf):
            raise InvalidInputError(f"norm order must be 2 or inf, got {self.p}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise InvalidInputError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        object.__setattr__(self, "p", p)

    @classmethod
    def parse(cls, p, epsilon) -> "PerturbationSpec":
        if isinstance(p, str):
            p = math.inf if p.lower() in ("inf", "infinity", "linf") else float(p)
        return cls(p, float(epsilon))


@dataclass
class IntervalBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape:
            raise InvalidInputError("lower and upper bounds differ in shape")
        if np.any(self.lower > self.upper):
            raise InvalidInputError("lower bound exceeds upper bound")

    @classmethod
    def around(cls, x, radius) -> "IntervalBox":
        x = np.asarray(x, dtype=np.float64)
        return cls(x - radius, x + radius)

    def contains(self, v, slack=0.0) -> bool:
        v = np.asarray(v)
        return bool(np.all(v >= self.lower - slack) and np.all(v <= self.upper + slack))


@dataclass(frozen=True)
class RobustnessReport:
    margin: float
    radius_l2: float
    radius_linf: float
    ibp_certified: bool
    lipschitz: LipschitzEstimate

    def __post_init__(self):
        if self.margin == 0 and (self.radius_l2 or self.radius_linf):
            raise InvalidInputError("zero margin must give zero radii")


def margin(logits_vec, true_class: int) -> float:
    """max(0, y_t - max_{i != t} y_i); zero for misclassified or tied inputs."""
    y = np.asarray(logits_vec, dtype=np.float64).reshape(-1)
    if y.size < 2:
        raise InvalidInputError("margin needs at least two logits")
    if not 0 <= true_class < y.size:
        raise InvalidInputError(f"class index {true_class} out of range")
    runner_up = np.max(np.delete(y, true_class))
    return max(0.0, float(y[true_class] - runner_up))


def batch_margins(logit_rows, labels) -> np.ndarray:
    y = np.asarray(logit_rows, dtype=np.float64)
    labels = np.asarray(labels)
    rows = np.arange(y.shape[0])
    true = y[rows, labels]
    other = y.copy()
    other[rows, labels] = -np.inf
    return np.maximum(0.0, true - other.max(axis=1))


def certified_radius(margin_value: float, L: float, p=2.0) -> float:
    """Largest perturbation norm that provably keeps the prediction:
    margin / (2^((p-1)/p) * L), i.e. sqrt(2) margin / (2L) for p=2 and
    margin / (2L) for p=inf."""
    if not L > 0:
        raise InvalidInputError(f"Lipschitz constant must be positive, got {L}")
    if margin_value < 0:
        raise InvalidInputError("margin must be non-negative")
    p = float(p)
    factor = 2.0 if math.isinf(p) else 2.0 ** ((p - 1.0) / p)
    return float(margin_value) / (factor * float(L))


def _affine_box(w, b, lower, upper):
    center = 0.5 * (lower + upper)
    radius = 0.5 * (upper - lower)
    c = center @ w.T + b
    r = radius @ np.abs(w).T
    return c - r, c + r


def _propagate_from(net: MlpNetwork, lower, upper, start_layer: int):
    last = net.depth - 1
    for l in range(start_layer, net.depth):
        lower, upper = _affine_box(net.weights[l], net.biases[l], lower, upper)
        if l != last:
            lower = activation_apply(net.activation, lower)
            upper = activation_apply(net.activation, upper)
    return lower, upper


def ibp_propagate(net: MlpNetwork, box: IntervalBox) -> IntervalBox:
    """Interval bounds on the logits for every input inside ``box``.

    Affine layers map centre ``mu -> W mu + b`` and radius ``r -> |W| r``;
    the monotone activations are applied to both ends.  Batched boxes
    (samples along the first axis) are supported.
    """
    if box.lower.shape[-1] != net.spec.input_dim:
        raise InvalidInputError(f"box has {box.lower.shape[-1]} dims, network expects {net.spec.input_dim}")
    lower, upper = _propagate_from(net, box.lower, box.upper, 0)
    return IntervalBox(lower, np.maximum(upper, lower))


def ibp_bounds(net: MlpNetwork, x, pert: PerturbationSpec, l2_mode: str = "dual") -> IntervalBox:
    """Logit bounds over the norm ball of radius ``pert.epsilon`` around ``x``.

    For p=inf the ball is a box and plain IBP applies.  For p=2 the default
    ``l2_mode="dual"`` bounds the first affine layer exactly over the ball,
    ``w_i . x + b_i -/+ eps ||w_i||_2``, then continues with intervals;
    ``l2_mode="box"`` instead encloses the ball in the box ``x -/+ eps``.
    Both are sound; the first is much tighter in high dimension.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.spec.input_dim:
        raise InvalidInputError(f"input has {x.shape[-1]} dims, network expects {net.spec.input_dim}")
    eps = pert.epsilon
    if math.isinf(pert.p) or l2_mode == "box":
        return ibp_propagate(net, IntervalBox.around(x, eps))
    if l2_mode != "dual":
        raise InvalidInputError(f"unknown l2_mode {l2_mode!r}")
    w, b = net.weights[0], net.biases[0]
    center = x @ w.T + b
    radius = eps * np.linalg.norm(w, axis=1)
    lower, upper = center - radius, center + radius
    if net.depth == 1:
        return IntervalBox(lower, upper)
    lower = activation_apply(net.activation, lower)
    upper = activation_apply(net.activation, upper)
    lower, upper = _propagate_from(net, lower, upper, 1)
    return IntervalBox(lower, np.maximum(upper, lower))


def _certified_from_bounds(bounds: IntervalBox, labels) -> np.ndarray:
    lo = np.atleast_2d(bounds.lower)
    hi = np.atleast_2d(bounds.upper).copy()
    labels = np.atleast_1d(labels)
    rows = np.arange(lo.shape[0])
    true_lower = lo[rows, labels]
    hi[rows, labels] = -np.inf
    return true_lower > hi.max(axis=1)


def ibp_certify(net: MlpNetwork, x, true_class: int, pert: PerturbationSpec, l2_mode: str = "dual") -> bool:
    """True iff the true-class logit lower bound beats every other upper bound."""
    if pert.epsilon < 0:
        raise InvalidInputError("epsilon must be >= 0")
    return bool(_certified_from_bounds(ibp_bounds(net, x, pert, l2_mode), [true_class])[0])


def certified_mask(net: MlpNetwork, dataset, pert: PerturbationSpec, method: str = "ibp",
                   lipschitz: Optional[LipschitzEstimate] = None, l2_mode: str = "dual") -> np.ndarray:
    """Per-sample flag: correctly classified and certified by ``method``."""
    y = logits(net, dataset.inputs)
    correct = np.argmax(y, axis=1) == dataset.labels
    if method == "ibp":
        certified = _certified_from_bounds(ibp_bounds(net, dataset.inputs, pert, l2_mode), dataset.labels)
    elif method == "lipschitz_margin":
        if lipschitz is None:
            raise InvalidInputError("lipschitz_margin certification needs a Lipschitz estimate")
        if not lipschitz.is_upper_bound:
            raise InvalidInputError(f"{lipschitz.method} estimates are not sound upper bounds")
        m = batch_margins(y, dataset.labels)
        if lipschitz.value == 0:
            certified = m > 0
        else:
            radii = np.array([certified_radius(v, lipschitz.value, pert.p) for v in m])
            certified = (m > 0) & (radii >= pert.epsilon)
    else:
        raise InvalidInputError(f"unknown certification method {method!r}")
    return correct & certified


def certified_accuracy(net: MlpNetwork, dataset, pert: PerturbationSpec, method: str = "ibp",
                       lipschitz: Optional[LipschitzEstimate] = None, l2_mode: str = "dual") -> float:
    if len(dataset) == 0:
        raise InvalidInputError("dataset is empty")
    return float(np.mean(certified_mask(net, dataset, pert, method, lipschitz, l2_mode)))


def accuracy(net: MlpNetwork, dataset) -> float:
    return float(np.mean(np.argmax(logits(net, dataset.inputs), axis=1) == dataset.labels))


def robustness_report(net: MlpNetwork, x, true_class: int, lipschitz: LipschitzEstimate,
                      pert: PerturbationSpec, l2_mode: str = "dual") -> RobustnessReport:
    m = margin(logits(net, x), true_class)
    if m == 0 or lipschitz.value == 0:
        r2 = rinf = math.inf if (m > 0) else 0.0
    else:
        r2 = certified_radius(m, lipschitz.value, 2)
        rinf = certified_radius(m, lipschitz.value, math.inf)
    return RobustnessReport(m, r2, rinf, ibp_certify(net, x, true_class, pert, l2_mode), lipschitz)


def sample_ball(center, epsilon: float, p: float, count: int, rng=None) -> np.ndarray:
    """``count`` points in the closed l_p ball (p in {2, inf}) around ``center``.

    Half of the l2 samples lie on the sphere itself and half of the l_inf
    samples on box corners, where flips are most likely.
    """
    rng = as_rng(rng)
    center = np.asarray(center, dtype=np.float64)
    n = center.size
    if math.isinf(float(p)):
        u = rng.uniform((count, n)) * 2.0 - 1.0
        half = count // 2
        u[:half] = np.sign(u[:half])
        return center + epsilon * u
    g = rng.normal((count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radii = rng.uniform(count) ** (1.0 / n)
    radii[: count // 2] = 1.0
    return center + epsilon * radii[:, None] * g


def random_attack(net: MlpNetwork, x, true_class: int, pert: PerturbationSpec, trials: int = 1000, rng=None) -> int:
    """Number of in-ball random perturbations whose prediction differs from ``true_class``."""
    pts = sample_ball(x, pert.epsilon, pert.p, trials, rng)
    return int(np.count_nonzero(np.argmax(logits(net, pts), axis=1) != true_class))
