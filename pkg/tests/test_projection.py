import numpy as np
import pytest

from damcl.projection import agem_project, gem_project, nnqp_solve
from oracles import (
    brute_force_nnqp_objective,
    brute_force_primal_projection,
    primal_projection_by_enumeration,
)


def _objective(Q, c, v):
    return 0.5 * v @ Q @ v + c @ v


def test_scalar_closed_form():
    Q = np.array([[2.0]])
    for b in (-3.0, 0.5):
        v, converged = nnqp_solve(Q, np.array([b]))
        assert converged
        assert v[0] == pytest.approx(max(0.0, -b / 2.0), abs=1e-7)


def test_nonnegative_linear_term_gives_zero():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(3, 5))
    Q = G @ G.T
    c = np.abs(rng.normal(size=3))
    v, converged = nnqp_solve(Q, c)
    assert converged
    assert np.allclose(v, 0.0)


def test_three_by_three_against_grid_oracle():
    rng = np.random.default_rng(42)
    G = rng.normal(size=(3, 6))
    Q = G @ G.T
    c = rng.normal(size=3)
    v, converged = nnqp_solve(Q, c)
    assert converged
    grid_best = brute_force_nnqp_objective(Q, c, limit=10.0, step=1e-2)
    assert _objective(Q, c, v) <= grid_best + 1e-3


def test_iteration_budget_flag():
    Q = np.array([[1.0, 0.0], [0.0, 1e-6]])
    c = np.array([-1.0, -1.0])
    v, converged = nnqp_solve(Q, c, tol=1e-14, max_iter=3)
    assert not converged


def test_gem_hand_example():
    g = np.array([1.0, -1.0])
    refs = np.array([[0.0, 1.0]])
    out, info = gem_project(g, refs)
    assert info.projected and info.converged
    assert np.allclose(out, [1.0, 0.0], atol=1e-7)


def test_gem_passthrough_is_bitwise():
    rng = np.random.default_rng(1)
    g = rng.normal(size=8)
    refs = np.vstack([g, 0.5 * g + 0.01 * rng.normal(size=8)])
    out, info = gem_project(g, refs)
    assert out is g
    assert not info.projected


def test_gem_feasibility_random():
    rng = np.random.default_rng(2)
    for _ in range(50):
        k, dim = rng.integers(1, 4), rng.integers(2, 7)
        g = rng.normal(size=dim)
        refs = rng.normal(size=(k, dim))
        out, _ = gem_project(g, refs)
        norms = np.linalg.norm(out) * np.abs(refs).max()
        assert (refs @ out).min() >= -1e-6 * max(norms, 1.0)


def draw_projection_instance(rng, max_k=3, max_dim=6):
    """Random (g, refs) with unit full-rank reference rows and a bounded dual
    solution, so the grid oracle's search box provably brackets the optimum
    and the dual representation of the projection is unique."""
    while True:
        k = int(rng.integers(1, max_k + 1))
        dim = int(rng.integers(max(2, k), max_dim + 1))
        g = rng.normal(size=dim)
        refs = rng.normal(size=(k, dim))
        refs /= np.linalg.norm(refs, axis=1, keepdims=True)
        if np.linalg.svd(refs, compute_uv=False).min() < 0.25:
            continue
        margins = refs @ g
        if np.all(margins >= 0):  # want instances where the projection fires
            continue
        v, converged = nnqp_solve(refs @ refs.T, margins)
        if converged and np.abs(v).max() < 8.0:
            return g, refs


def test_gem_matches_primal_oracle():
    rng = np.random.default_rng(3)
    for _ in range(12):
        g, refs = draw_projection_instance(rng)
        out, info = gem_project(g, refs)
        assert info.projected
        exact = primal_projection_by_enumeration(g, refs)
        assert np.linalg.norm(out - exact) < 1e-3


def test_primal_oracles_agree():
    # the dense grid localizes to ~1e-2 at worst (corners); the enumeration
    # is exact, so the two independent searches must land together
    rng = np.random.default_rng(8)
    for _ in range(6):
        g, refs = draw_projection_instance(rng)
        grid = brute_force_primal_projection(g, refs)
        exact = primal_projection_by_enumeration(g, refs)
        assert np.linalg.norm(grid - exact) < 3e-2
        # the grid's feasibility slack lets it undercut the true optimum by
        # up to ~2 * slack * ||g - g~||
        assert np.sum((exact - g) ** 2) <= np.sum((grid - g) ** 2) + 3e-7


def test_gem_empty_refs_rejected():
    with pytest.raises(ValueError):
        gem_project(np.ones(3), np.zeros((0, 3)))


def test_agem_orthogonal_passthrough():
    g = np.array([1.0, 0.0])
    ref = np.array([0.0, 1.0])
    assert agem_project(g, ref) is g


def test_agem_projection_identity():
    g = np.array([1.0, -1.0])
    ref = np.array([0.0, 1.0])
    out = agem_project(g, ref)
    assert np.allclose(out, [1.0, 0.0])
    assert out @ ref == pytest.approx(0.0, abs=1e-12)


def test_agem_zero_reference_warns():
    g = np.ones(4)
    with pytest.warns(UserWarning):
        out = agem_project(g, np.zeros(4))
    assert out is g


def test_agem_agrees_with_single_constraint_gem():
    rng = np.random.default_rng(4)
    for _ in range(25):
        g = rng.normal(size=6)
        ref = rng.normal(size=6)
        a = agem_project(g, ref)
        b, _ = gem_project(g, ref[None, :])
        assert np.allclose(a, b, atol=1e-6)
