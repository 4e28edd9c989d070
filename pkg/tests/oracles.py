"""Independent test oracles: finite differences, dense-grid projection search,
naive scoring. These deliberately avoid the library's analytic code paths."""

import math

import numpy as np


def central_diff_grad(loss_fn, bank, step=1e-5):
    """Entrywise central finite differences of a scalar loss over the bank."""
    grad = np.zeros_like(bank)
    for k in range(bank.shape[0]):
        for j in range(bank.shape[1]):
            up = bank.copy()
            up[k, j] += step
            down = bank.copy()
            down[k, j] -= step
            grad[k, j] = (loss_fn(up) - loss_fn(down)) / (2 * step)
    return grad


def relative_error(analytic, reference):
    scale = np.maximum(np.abs(reference), 1e-8)
    return float((np.abs(analytic - reference) / scale).max())


def make_gradient_instance(rng, width, memories, vertex, *, full_pattern, loss_width=4):
    """Random instance with the kernel kink and tanh saturation kept at bay.

    Returns (X, Y, bank, cols). The bank is rescaled until every field is in
    tanh's responsive range and every overlap stays clear of the kernel's
    kink at zero, then the instance is accepted or rejected.
    """
    for _ in range(200):
        X = rng.choice([-1.0, 1.0], size=(3, width))
        if full_pattern:
            cols = np.arange(width)
        else:
            cols = np.arange(width - loss_width, width)
            X[:, cols] = 0.0
        Y = rng.choice([-1.0, 1.0], size=(3, len(cols)))
        bank = rng.normal(0.0, 0.4, size=(memories, width))
        ok = False
        for _ in range(80):
            fields = _raw_fields(X, bank, vertex, cols)
            peak = np.abs(fields).max()
            if peak > 4.0:
                bank *= 0.85
            elif peak < 0.05:
                bank *= 1.2
            else:
                ok = True
                break
        if not ok:
            continue
        if _min_overlap_margin(X, bank, cols) > 1e-3:
            return X, Y, bank, cols
    raise AssertionError("could not build a well-conditioned instance")


def _kernel_ref(a, vertex, leak=0.01):
    return np.where(a > 0, np.power(np.maximum(a, 0), vertex), -leak * a)


def _raw_fields(X, bank, vertex, cols):
    S = X @ bank.T
    bc = bank[:, cols]
    xc = X[:, cols]
    ap = S[:, :, None] + bc[None] * (1.0 - xc)[:, None, :]
    am = S[:, :, None] + bc[None] * (-1.0 - xc)[:, None, :]
    return (_kernel_ref(ap, vertex) - _kernel_ref(am, vertex)).sum(axis=1)


def _min_overlap_margin(X, bank, cols):
    S = X @ bank.T
    bc = bank[:, cols]
    xc = X[:, cols]
    ap = S[:, :, None] + bc[None] * (1.0 - xc)[:, None, :]
    am = S[:, :, None] + bc[None] * (-1.0 - xc)[:, None, :]
    return float(min(np.abs(ap).min(), np.abs(am).min()))


def brute_force_primal_projection(grad, refs):
    """Dense-sampling search for min ||g - g~||^2 s.t. refs @ g~ >= 0.

    The feasible optimum differs from g only inside the span of the reference
    rows (components orthogonal to every constraint are free and optimal at
    their unconstrained values), so sample g~ = g + B @ w over an orthonormal
    basis B of that span. There the objective is exactly ||w||^2 / 2 and,
    because 0 is feasible, the optimum satisfies ||w|| <= ||g|| - a provable
    search box. Staged grids refine around the incumbent.
    """
    refs = np.atleast_2d(refs)
    basis, _ = np.linalg.qr(refs.T)  # (dim, k) orthonormal columns
    k = basis.shape[1]
    base_margins = refs @ grad
    span = refs @ basis  # margins(w) = base + span @ w, evaluated in k dims
    center = np.zeros(k)
    bound = 1.05 * np.linalg.norm(grad) + 1e-6
    radius = bound
    step = radius / 36.0
    best_w = center
    for _ in range(9):
        axes = [np.arange(c - radius, c + radius + step / 2, step) for c in center]
        mesh = np.meshgrid(*axes, indexing="ij")
        W = np.stack([m.ravel() for m in mesh], axis=1)
        # slack matches the solver's KKT tolerance; without it every grid
        # point near an active facet is discarded and the best reachable
        # objective degrades linearly in the grid step
        feasible = np.all(base_margins[None, :] + W @ span.T >= -3e-8, axis=1)
        if not feasible.any():
            raise AssertionError("no feasible grid point")
        dist = (W * W).sum(axis=1)
        dist[~feasible] = np.inf
        best = int(np.argmin(dist))
        best_w = W[best]
        center = best_w
        radius = 18.0 * step
        step = step / 4.0
    return grad + best_w @ basis.T


def primal_projection_by_enumeration(grad, refs, slack=1e-9):
    """Exact brute force over the primal problem's facial structure.

    The optimum of min ||g - g~||^2 s.t. refs @ g~ >= 0 lies on some subset A
    of active constraints, where it is the least-norm shift of g onto
    {x : refs_A @ x = 0}. Trying every one of the 2^k subsets and keeping the
    closest feasible candidate therefore finds the optimum exactly; grid
    sampling near multi-constraint corners cannot (its error decays only like
    sqrt(step) there).
    """
    refs = np.atleast_2d(refs)
    k = refs.shape[0]
    best = None
    for mask in range(2**k):
        active = [i for i in range(k) if (mask >> i) & 1]
        if not active:
            cand = grad
        else:
            sub = refs[active]
            lam, *_ = np.linalg.lstsq(sub @ sub.T, sub @ grad, rcond=None)
            cand = grad - sub.T @ lam
        if np.all(refs @ cand >= -slack):
            dist = float(np.sum((cand - grad) ** 2))
            if best is None or dist < best[0]:
                best = (dist, cand)
    assert best is not None  # the all-active candidate is always feasible
    return best[1]


def brute_force_nnqp_objective(Q, c, limit=10.0, step=1e-2):
    """Minimum of 0.5 v'Qv + c'v over the nonnegative grid [0, limit]^k."""
    k = len(c)
    axes = np.arange(0.0, limit + step / 2, step)
    best = math.inf
    if k == 1:
        vals = 0.5 * Q[0, 0] * axes**2 + c[0] * axes
        return float(vals.min())
    if k == 2:
        v1, v2 = np.meshgrid(axes, axes, indexing="ij")
        vals = (
            0.5 * (Q[0, 0] * v1**2 + Q[1, 1] * v2**2)
            + Q[0, 1] * v1 * v2
            + c[0] * v1
            + c[1] * v2
        )
        return float(vals.min())
    # k == 3: chunk over the first axis to bound memory
    v2, v3 = np.meshgrid(axes, axes, indexing="ij")
    base = 0.5 * (Q[1, 1] * v2**2 + Q[2, 2] * v3**2) + Q[1, 2] * v2 * v3 + c[1] * v2 + c[2] * v3
    for a in axes:
        vals = base + 0.5 * Q[0, 0] * a**2 + c[0] * a + a * (Q[0, 1] * v2 + Q[0, 2] * v3)
        m = float(vals.min())
        if m < best:
            best = m
    return best


def naive_macro_f1(confusion):
    """Per-class precision/recall loops over the raw matrix entries."""
    n = len(confusion)
    scores = []
    for c in range(n):
        tp = fp = fn = 0
        for i in range(n):
            for j in range(n):
                count = int(confusion[i][j])
                if i == c and j == c:
                    tp += count
                elif j == c:
                    fp += count
                elif i == c:
                    fn += count
        if 2 * tp + fp + fn == 0:
            scores.append(0.0)
        else:
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            if precision + recall == 0:
                scores.append(0.0)
            else:
                scores.append(2 * tp / (2 * tp + fp + fn))
    return math.fsum(scores) / n
