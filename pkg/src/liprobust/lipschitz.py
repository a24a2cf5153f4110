"""Lipschitz constant estimators for MLPs.

Five routes are provided:

* ``analytical``        closed form from the architecture (depth, widths, alpha, q)
* ``rmt``               asymptotic largest singular value of an i.i.d. matrix
* ``empirical``         max spectral norm of the Jacobian over sampled inputs (a lower estimate)
* ``pattern_exact``     max over every ReLU on/off pattern, tiny nets only (an upper bound)
* ``spectral_product``  product of layer spectral norms (an upper bound)

For ReLU nets ``empirical <= pattern_exact <= spectral_product``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .linalg import DEFAULT_MAX_ITER, DEFAULT_REL_TOL, batch_power_iteration, power_iteration
from .network import Activation, MlpNetwork, NetworkSpec, batch_jacobians, derivative_q, weight_std_multiplier
from .rng import as_rng

METHODS = ("analytical", "rmt", "empirical", "spectral_product", "pattern_exact")
UPPER_BOUND_METHODS = ("spectral_product", "pattern_exact")
PATTERN_MAX_HIDDEN = 20


@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    method: str
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown estimation method {self.method!r}")
        if not self.detail.get("warning") and not (math.isfinite(self.value) and self.value >= 0):
            raise InvalidInputError(f"Lipschitz estimate must be finite and >= 0, got {self.value}")

    @property
    def is_upper_bound(self) -> bool:
        return self.method in UPPER_BOUND_METHODS

    def __float__(self):
        return float(self.value)


def analytical_lipschitz(spec: NetworkSpec, alpha=None, q=None) -> LipschitzEstimate:
    """Expected Lipschitz constant of a Xavier-initialised MLP:

        2 sqrt(d) / sqrt((d + n)(d + m)) * alpha^M * q^(M-1) * (sqrt(n) + sqrt(m))

    ``alpha`` defaults to ``spec.alpha`` and ``q`` to sqrt(Var[s'(x)]) of the
    spec's activation.  Depth 1 is rejected: the formula needs a hidden width.
    Identity activation gives q = 0 and therefore 0, which does not describe
    a deep linear net.
    """
    if spec.depth < 2:
        raise InvalidInputError("analytical_lipschitz requires depth >= 2")
    alpha = spec.alpha if alpha is None else float(alpha)
    q = derivative_q(spec.activation) if q is None else float(q)
    if alpha < 0 or q < 0:
        raise InvalidInputError("alpha and q must be non-negative")
    n, d, m, depth = spec.input_dim, spec.hidden_dim, spec.output_dim, spec.depth
    value = (
        2.0 * math.sqrt(d) / math.sqrt((d + n) * (d + m))
        * alpha**depth * q ** (depth - 1)
        * (math.sqrt(n) + math.sqrt(m))
    )
    return LipschitzEstimate(value, "analytical", {"alpha": alpha, "q": q})


def posttrain_analytical_lipschitz(net: MlpNetwork, q=None) -> LipschitzEstimate:
    """Analytical estimate with alpha replaced by the measured weight multiplier."""
    alpha_tilde = weight_std_multiplier(net)
    est = analytical_lipschitz(net.spec, alpha_tilde, q)
    return LipschitzEstimate(est.value, "analytical", {**est.detail, "alpha_tilde": alpha_tilde})


def rmt_max_singular(N: int, n: int, alpha: float = 1.0) -> float:
    """alpha * (sqrt(N) + sqrt(n)), the large-size limit of s_max for an N x n
    matrix with i.i.d. zero-mean, variance alpha^2 entries."""
    if n < 1 or N < 1:
        raise InvalidInputError("matrix dimensions must be positive")
    if n > N:
        raise InvalidInputError(f"aspect ratio n/N must be <= 1, got n={n} > N={N}")
    return float(alpha) * (math.sqrt(N) + math.sqrt(n))


def jacobian_variance(spec: NetworkSpec, alpha=None, q=None) -> float:
    """Per-entry Jacobian variance at initialisation,
    4 d / ((d + n)(d + m)) * alpha^(2M) * q^(2M - 2); entries have mean zero."""
    alpha = spec.alpha if alpha is None else float(alpha)
    q = derivative_q(spec.activation) if q is None else float(q)
    n, d, m, depth = spec.input_dim, spec.hidden_dim, spec.output_dim, spec.depth
    return 4.0 * d / ((d + n) * (d + m)) * alpha ** (2 * depth) * q ** (2 * depth - 2)


def _sample_inputs(net, source, samples, dataset, rng):
    parts = []
    if source in ("normal", "both"):
        if samples < 1:
            raise InvalidInputError("samples must be >= 1")
        parts.append(rng.normal((samples, net.spec.input_dim)))
    if source in ("dataset", "both"):
        if dataset is None:
            raise InvalidInputError(f"input source {source!r} needs a dataset")
        inputs = getattr(dataset, "inputs", dataset)
        parts.append(np.atleast_2d(np.asarray(inputs, dtype=np.float64)))
    return np.concatenate(parts, axis=0)


def empirical_lipschitz(
    net: MlpNetwork,
    samples: int = 100,
    dataset=None,
    rng=None,
    source=None,
    rel_tol=DEFAULT_REL_TOL,
    max_iter=DEFAULT_MAX_ITER,
    chunk: int = 512,
) -> LipschitzEstimate:
    """Largest Jacobian spectral norm over probe inputs.

    ``source`` is ``"normal"`` (``samples`` standard normal inputs),
    ``"dataset"`` (every row of ``dataset``) or ``"both"``; by default it is
    ``"both"`` when a dataset is given and ``"normal"`` otherwise.
    """
    rng = as_rng(rng)
    source = source or ("both" if dataset is not None else "normal")
    if source not in ("normal", "dataset", "both"):
        raise InvalidInputError(f"unknown input source {source!r}")
    xs = _sample_inputs(net, source, samples, dataset, rng)
    best, best_index, unconverged = 0.0, -1, 0
    for start in range(0, xs.shape[0], chunk):
        jac = batch_jacobians(net, xs[start:start + chunk])
        values, done = batch_power_iteration(jac, rel_tol, max_iter, rng)
        unconverged += int(np.count_nonzero(~done))
        i = int(np.argmax(values))
        if values[i] > best:
            best, best_index = float(values[i]), start + i
    detail = {"samples": int(xs.shape[0]), "source": source, "argmax": best_index}
    if unconverged:
        detail["warning"] = f"{unconverged} power iterations hit max_iter"
    return LipschitzEstimate(best, "empirical", detail)


def _check_one_lipschitz(net: MlpNetwork):
    if Activation(net.activation) not in (Activation.RELU, Activation.SIGMOID, Activation.TANH, Activation.IDENTITY):
        raise InvalidInputError(f"activation {net.activation} is not known to be 1-Lipschitz")


def spectral_product_bound(net: MlpNetwork, rel_tol=DEFAULT_REL_TOL, max_iter=DEFAULT_MAX_ITER, rng=None) -> LipschitzEstimate:
    """Product of per-layer spectral norms, valid for 1-Lipschitz activations."""
    _check_one_lipschitz(net)
    rng = as_rng(rng)
    norms, warn = [], []
    for l, w in enumerate(net.weights):
        res = power_iteration(w, rel_tol, max_iter, rng)
        norms.append(res.value)
        if not res.converged:
            warn.append(l + 1)
    value = float(np.prod(norms))
    detail = {"layer_norms": norms}
    if warn:
        detail["warning"] = f"power iteration hit max_iter on layers {warn}"
    return LipschitzEstimate(value, "spectral_product", detail)


def pattern_exact_relu(net: MlpNetwork, chunk: int = 4096, rel_tol=1e-12, max_iter=10_000, rng=None) -> LipschitzEstimate:
    """Max of s_max(W^(M) D^(M-1) ... D^(1) W^(1)) over every 0/1 diagonal pattern.

    Feasibility of a pattern is not checked, so the value bounds the true
    Lipschitz constant from above while dominating every Jacobian norm the
    network can realise.
    """
    if Activation(net.activation) is not Activation.RELU:
        raise InvalidInputError("pattern_exact_relu needs a relu network")
    widths = [w.shape[0] for w in net.weights[:-1]]
    hidden = sum(widths)
    if hidden > PATTERN_MAX_HIDDEN:
        raise InvalidInputError(f"{hidden} hidden units exceed the enumeration limit of {PATTERN_MAX_HIDDEN}")
    rng = as_rng(rng)
    if hidden == 0:
        value = power_iteration(net.weights[0], rel_tol, max_iter, rng).value
        return LipschitzEstimate(value, "pattern_exact", {"patterns": 1})
    total = 1 << hidden
    bits = np.arange(hidden)
    best, unconverged = 0.0, 0
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        masks = ((codes[:, None] >> bits) & 1).astype(np.float64)
        acc = np.broadcast_to(net.weights[-1], (codes.size,) + net.weights[-1].shape)
        offset = hidden
        for l in range(len(widths) - 1, -1, -1):
            offset -= widths[l]
            acc = (acc * masks[:, None, offset:offset + widths[l]]) @ net.weights[l]
        values, done = batch_power_iteration(acc, rel_tol, max_iter, rng)
        unconverged += int(np.count_nonzero(~done))
        best = max(best, float(values.max()))
    detail = {"patterns": total}
    if unconverged:
        detail["warning"] = f"{unconverged} power iterations hit max_iter"
    return LipschitzEstimate(best, "pattern_exact", detail)


def all_estimates(net: MlpNetwork, samples=100, dataset=None, rng=None) -> list[LipschitzEstimate]:
    """Every estimator applicable to ``net`` (pattern enumeration only for tiny ReLU nets)."""
    rng = as_rng(rng)
    out = []
    if net.depth >= 2:
        out.append(analytical_lipschitz(net.spec))
        out.append(posttrain_analytical_lipschitz(net))
    out.append(empirical_lipschitz(net, samples, dataset, rng))
    out.append(spectral_product_bound(net, rng=rng))
    if Activation(net.activation) is Activation.RELU and net.spec.hidden_units <= PATTERN_MAX_HIDDEN:
        out.append(pattern_exact_relu(net, rng=rng))
    return out


__all__ = [
    "LipschitzEstimate",
    "analytical_lipschitz",
    "posttrain_analytical_lipschitz",
    "rmt_max_singular",
    "jacobian_variance",
    "empirical_lipschitz",
    "spectral_product_bound",
    "pattern_exact_relu",
    "all_estimates",
]
