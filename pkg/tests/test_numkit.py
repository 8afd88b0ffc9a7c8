import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pregc.errors import InvalidInputError
from pregc.graph import laplacian, normalize_adjacency
from pregc.numkit import central_diff_grad, jacobi_svd, kmeans, lambda_max_sym, pinv

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_pinv_identity_and_diag():
    assert np.allclose(pinv(np.eye(3)), np.eye(3))
    assert np.allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))


def test_pinv_matches_independent_svd():
    a = np.random.default_rng(3).standard_normal((4, 2))
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    assert np.allclose(pinv(a), vt.T @ np.diag(1 / s) @ u.T, atol=1e-12)


@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 10_000))
def test_pinv_penrose_conditions(r, c, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((r, c))
    if r > 2 and c > 2:
        a[:, -1] = a[:, 0]  # force rank deficiency sometimes
    p = pinv(a)
    rel = lambda x, y: np.linalg.norm(x - y) / max(np.linalg.norm(y), 1e-300)
    assert rel(a @ p @ a, a) < 1e-8
    assert rel(p @ a @ p, p) < 1e-8
    assert rel((a @ p).T, a @ p) < 1e-8
    assert rel((p @ a).T, p @ a) < 1e-8


def test_pinv_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        pinv(np.array([[np.nan, 1.0]]))


def test_jacobi_svd_wide_and_tall():
    rng = np.random.default_rng(0)
    for shape in [(3, 5), (5, 3), (4, 4)]:
        a = rng.standard_normal(shape)
        u, s, vt = jacobi_svd(a)
        assert np.allclose(u @ np.diag(s) @ vt, a, atol=1e-12)
        assert np.all(np.diff(s) <= 0)
        assert np.allclose(s, np.linalg.svd(a, compute_uv=False))


def test_lambda_max_examples():
    assert lambda_max_sym(np.zeros((3, 3))).value == 0.0
    est = lambda_max_sym(np.array([[0.5, -0.5], [-0.5, 0.5]]))
    assert est.converged and abs(est.value - 1.0) < 1e-9


def test_lambda_max_path_laplacian():
    raw = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    lap = laplacian(normalize_adjacency(raw, True))
    oracle = np.abs(np.linalg.eigvalsh(lap)).max()
    assert abs(lambda_max_sym(lap).value - oracle) / oracle <= 1e-6


def test_lambda_max_start_vector_is_eigenvector():
    # all-ones is an eigenvector with the small eigenvalue; the seeded
    # perturbation must still find the dominant one
    a = np.array([[2.0, -1.0], [-1.0, 2.0]])
    assert abs(lambda_max_sym(a).value - 3.0) < 1e-8


def test_lambda_max_reports_nonconvergence():
    a = np.diag([1.0, -1.0 + 1e-9, 0.5])
    est = lambda_max_sym(a, max_iter=3)
    assert not est.converged and est.iterations == 3


def test_lambda_max_rejects_asymmetric():
    with pytest.raises(InvalidInputError):
        lambda_max_sym(np.array([[0.0, 1.0], [0.0, 0.0]]))


@given(arrays(float, (5, 5), elements=finite))
def test_lambda_max_bounded_by_frobenius(m):
    a = (m + m.T) / 2
    assert lambda_max_sym(a, max_iter=200).value <= np.linalg.norm(a) + 1e-9


def _best_two_partition(points):
    n = len(points)
    best = np.inf
    for mask in itertools.product([0, 1], repeat=n):
        mask = np.array(mask)
        if mask.all() or not mask.any():
            continue
        cost = sum(np.sum((points[mask == c] - points[mask == c].mean(0)) ** 2) for c in (0, 1))
        best = min(best, cost)
    return best


def test_kmeans_separated_clouds_match_bruteforce():
    rng = np.random.default_rng(1)
    pts = np.vstack([rng.normal(0, 0.1, (4, 2)), rng.normal(10, 0.1, (4, 2))])
    res = kmeans(pts, 2, seed=0)
    assert len(set(res.assignments[:4])) == 1 and len(set(res.assignments[4:])) == 1
    assert res.assignments[0] != res.assignments[4]
    assert abs(res.objective - _best_two_partition(pts)) < 1e-9


def test_kmeans_degenerate_cases():
    pts = np.random.default_rng(2).standard_normal((5, 3))
    assert kmeans(pts, 5).objective == pytest.approx(0.0, abs=1e-20)
    same = np.ones((6, 2))
    assert kmeans(same, 2).objective == 0.0
    with pytest.raises(InvalidInputError):
        kmeans(pts, 6)


@given(st.integers(0, 1000), st.integers(1, 6))
def test_kmeans_objective_monotone_and_deterministic(seed, k):
    pts = np.random.default_rng(seed).standard_normal((20, 2))
    a = kmeans(pts, k, seed=seed)
    b = kmeans(pts, k, seed=seed)
    assert np.all(np.diff(a.history) <= 1e-9)
    assert np.array_equal(a.assignments, b.assignments)


def test_central_diff_examples():
    assert np.allclose(central_diff_grad(lambda x: np.sum(x**2), np.array([1.0, 2.0])), [2, 4], atol=1e-8)
    assert np.allclose(central_diff_grad(lambda x: 3.0, np.ones((2, 2))), 0.0)
    c = np.arange(6.0).reshape(2, 3)
    assert np.allclose(central_diff_grad(lambda x: np.sum(c * x), np.zeros((2, 3))), c, atol=1e-8)


def test_central_diff_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        central_diff_grad(lambda x: np.inf, np.zeros(2))
