"""Dense matrix kernel: products, spectral norms, a Jacobi SVD oracle, sampling.

Matrices are 2-D ``float64`` numpy arrays.  The power iteration and the
Jacobi eigenvalue oracle share no code so that one can check the other.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceWarning, InvalidInputError
from .rng import Rng, as_rng

DEFAULT_REL_TOL = 1e-9
DEFAULT_MAX_ITER = 1000
ORACLE_MAX_DIM = 64


def as_matrix(values, name="matrix") -> np.ndarray:
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise InvalidInputError(f"{name} must be a nonempty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise InvalidInputError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


class PowerIteration(NamedTuple):
    value: float
    iterations: int
    converged: bool


def power_iteration(m, rel_tol=DEFAULT_REL_TOL, max_iter=DEFAULT_MAX_ITER, rng=None) -> PowerIteration:
    """Largest singular value of ``m`` by power iteration on the Gram matrix.

    Iterates on whichever of ``m^T m`` / ``m m^T`` is smaller and stops when
    the relative change of the estimate drops below ``rel_tol``.
    """
    m = as_matrix(m)
    if rel_tol <= 0:
        raise InvalidInputError("rel_tol must be positive")
    if m.shape[0] < m.shape[1]:
        m = m.T
    rng = as_rng(rng)
    v = rng.normal(m.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for it in range(1, max_iter + 1):
        mv = m @ v
        new_sigma = float(np.linalg.norm(mv))
        if new_sigma == 0.0:
            return PowerIteration(0.0, it, True)
        w = m.T @ mv
        v = w / np.linalg.norm(w)
        if abs(new_sigma - sigma) <= rel_tol * new_sigma:
            return PowerIteration(new_sigma, it, True)
        sigma = new_sigma
    return PowerIteration(sigma, max_iter, False)


def max_singular_value(m, rel_tol=DEFAULT_REL_TOL, max_iter=DEFAULT_MAX_ITER, rng=None) -> float:
    """Spectral norm of ``m``; warns with :class:`ConvergenceWarning` if the cap is hit."""
    res = power_iteration(m, rel_tol, max_iter, rng)
    if not res.converged:
        warnings.warn(
            f"power iteration stopped after {max_iter} iterations; returning estimate {res.value:.6g}",
            ConvergenceWarning,
            stacklevel=2,
        )
    return res.value


def batch_power_iteration(stack, rel_tol=DEFAULT_REL_TOL, max_iter=DEFAULT_MAX_ITER, rng=None):
    """Power iteration run simultaneously on a stack of matrices of shape (B, r, c).

    Returns ``(values, converged)`` arrays of length B.
    """
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3:
        raise InvalidInputError(f"expected a (B, r, c) stack, got shape {stack.shape}")
    if stack.shape[1] < stack.shape[2]:
        stack = np.swapaxes(stack, 1, 2)
    batch, _, cols = stack.shape
    rng = as_rng(rng)
    v = rng.normal((batch, cols))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    sigma = np.zeros(batch)
    done = np.zeros(batch, dtype=bool)
    active = np.arange(batch)
    for _ in range(max_iter):
        if active.size == 0:
            break
        a = stack[active]
        mv = np.einsum("brc,bc->br", a, v[active])
        new_sigma = np.linalg.norm(mv, axis=1)
        w = np.einsum("brc,br->bc", a, mv)
        wn = np.linalg.norm(w, axis=1)
        zero = new_sigma == 0.0
        safe = np.where(wn > 0, wn, 1.0)
        v[active] = w / safe[:, None]
        finished = zero | (np.abs(new_sigma - sigma[active]) <= rel_tol * new_sigma)
        sigma[active] = new_sigma
        done[active[finished]] = True
        active = active[~finished]
    return sigma, done


def svd_oracle(m) -> list[float]:
    """All singular values, descending, from cyclic Jacobi rotations on the Gram matrix.

    Limited to ``min(rows, cols) <= 64``.
    """
    m = as_matrix(m)
    if min(m.shape) > ORACLE_MAX_DIM:
        raise InvalidInputError(f"svd_oracle supports min(rows, cols) <= {ORACLE_MAX_DIM}, got {m.shape}")
    g = m.T @ m if m.shape[1] <= m.shape[0] else m @ m.T
    eig = jacobi_eigenvalues(g)
    return sorted((float(np.sqrt(max(e, 0.0))) for e in eig), reverse=True)


def jacobi_eigenvalues(a, tol=1e-15, max_sweeps=100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by the cyclic Jacobi method."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    scale = np.linalg.norm(a)
    if scale == 0.0 or n == 1:
        return np.diag(a).copy()
    prev_off = np.inf
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        # rounding can stall the off-diagonal mass just above tol
        if off <= tol * scale or off >= prev_off:
            break
        prev_off = off
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                h = a[q, q] - a[p, p]
                if h == 0.0:
                    t = 1.0 if apq > 0 else -1.0
                else:
                    t = 2.0 * apq * np.sign(h) / (abs(h) + np.hypot(h, 2.0 * apq))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
    return np.diag(a).copy()


def sample_gaussian_matrix(rows: int, cols: int, std: float, rng: Rng) -> np.ndarray:
    if not np.isfinite(std) or std < 0:
        raise InvalidInputError(f"std must be finite and non-negative, got {std}")
    if rows < 1 or cols < 1:
        raise InvalidInputError("rows and cols must be positive")
    return rng.normal((rows, cols), std=std)
