"""Gradient projection for episodic-memory constraints.

A batch gradient is projected so it no longer points against reference
gradients computed on buffers of past-task items: the per-task form solves a
small nonnegative QP in the dual space, the averaged form has a closed-form
rank-one projection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ProjectionInfo:
    projected: bool
    converged: bool = True


def nnqp_solve(Q, c, tol: float = 1e-8, max_iter: int = 100_000):
    """Minimize 0.5*v'Qv + c'v subject to v >= 0 (Q symmetric PSD).

    Projected gradient with fixed step 1/trace(Q); stops when the projected
    KKT residual max|v - [v - grad]_+| drops to ``tol``. Returns
    (v, converged); on iteration exhaustion the best iterate is returned
    with converged=False.
    """
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or c.shape != (Q.shape[0],):
        raise ValueError("Q must be square and c must match its size")
    trace = float(np.trace(Q))
    step = 1.0 / trace if trace > 0 else 1.0
    v = np.zeros_like(c)
    for _ in range(max_iter):
        g = Q @ v + c
        residual = v - np.maximum(0.0, v - g)
        if np.abs(residual).max() <= tol:
            return v, True
        v = np.maximum(0.0, v - step * g)
    return v, False


def gem_project(grad, refs, tol: float = 1e-8, max_iter: int = 100_000):
    """Project ``grad`` so it does not point against any row of ``refs``.

    If refs @ grad is already elementwise nonnegative the input is returned
    unchanged (same object). Otherwise the dual nonnegative QP with
    Q = refs refs', c = refs grad is solved and refs' v* + grad returned.
    """
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    if refs.shape[0] == 0:
        raise ValueError("need at least one reference gradient")
    margins = refs @ grad
    if np.all(margins >= 0):
        return grad, ProjectionInfo(projected=False)
    v, converged = nnqp_solve(refs @ refs.T, margins, tol=tol, max_iter=max_iter)
    return refs.T @ v + grad, ProjectionInfo(projected=True, converged=converged)


def agem_project(grad, ref):
    """Single-reference closed form: remove the component against ``ref``.

    Returns ``grad`` unchanged (same object) when the inner product is
    already nonnegative or when ``ref`` is zero (with a warning).
    """
    ref = np.asarray(ref, dtype=float)
    denom = float(ref @ ref)
    if denom == 0.0:
        warnings.warn("zero reference gradient; skipping projection")
        return grad
    dot = float(grad @ ref)
    if dot >= 0:
        return grad
    return grad - (dot / denom) * ref
