"""Dense matrix utilities: Jacobi SVD / pseudo-inverse, power iteration,
seeded k-means and a central-difference gradient oracle."""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidInputError


def as_finite(a, name: str = "input") -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def jacobi_svd(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100):
    """Thin SVD by one-sided Jacobi rotations.

    Returns ``(u, s, vt)`` with ``a = u @ diag(s) @ vt``; singular values are
    sorted in decreasing order. Columns of ``u`` belonging to zero singular
    values are left as zero vectors.
    """
    a = as_finite(a)
    if a.ndim != 2 or a.size == 0:
        raise InvalidInputError("jacobi_svd expects a non-empty 2-D matrix")
    transposed = a.shape[0] < a.shape[1]
    work = (a.T if transposed else a).copy()
    n = work.shape[1]
    v = np.eye(n)

    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                up = work[:, p]
                uq = work[:, q]
                alpha = up @ up
                beta = uq @ uq
                gamma = up @ uq
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                if abs(beta - alpha) > 1e300 * abs(gamma):
                    continue  # rotation angle underflows to zero
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * up - s * uq
                new_q = s * up + c * uq
                work[:, p] = new_p
                work[:, q] = new_q
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
        if not rotated:
            break

    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    v = v[:, order]
    u = np.zeros_like(work)
    nz = sigma > 0
    u[:, nz] = work[:, nz] / sigma[nz]
    if transposed:
        return v, sigma, u.T
    return u, sigma, v.T


def pinv(a, tol: float = 1e-10) -> np.ndarray:
    """Moore-Penrose pseudo-inverse.

    Singular values below ``tol * sigma_max`` are treated as zero.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    a = as_finite(a)
    if a.ndim != 2 or a.size == 0:
        raise InvalidInputError("pinv expects a non-empty 2-D matrix")
    u, s, vt = jacobi_svd(a)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    keep = s > tol * s[0]
    return (vt[keep].T / s[keep]) @ u[:, keep].T


class EigenEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def lambda_max_sym(a, tol: float = 1e-10, max_iter: int = 10000, seed: int = 0) -> EigenEstimate:
    """Largest-magnitude eigenvalue of a symmetric matrix by power iteration.

    Starts from the normalized all-ones vector. If that vector is itself an
    eigenvector (power iteration would stagnate on it), the start is perturbed
    with seeded Gaussian noise.
    """
    a = as_finite(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError("lambda_max_sym expects a square matrix")
    if max_iter < 1:
        raise InvalidInputError("max_iter must be >= 1")
    if not np.allclose(a, a.T, atol=1e-10, rtol=0.0):
        raise InvalidInputError("matrix is not symmetric within 1e-10")
    n = a.shape[0]
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return EigenEstimate(0.0, True, 0)

    x = np.ones(n) / np.sqrt(n)
    y = a @ x
    rho = x @ y
    if np.linalg.norm(y - rho * x) <= 1e-12 * scale and n > 1:
        rng = np.random.default_rng(seed)
        x = x + 0.1 * rng.standard_normal(n) / np.sqrt(n)
        x /= np.linalg.norm(x)

    rho = 0.0
    for it in range(1, max_iter + 1):
        y = a @ x
        rho = float(x @ y)
        ynorm = np.linalg.norm(y)
        if ynorm == 0.0:
            # x fell into the null space; only possible when |lambda| is tiny
            return EigenEstimate(0.0, True, it)
        resid = np.linalg.norm(y - rho * x)
        if resid <= tol * abs(rho):
            return EigenEstimate(abs(rho), True, it)
        x = y / ynorm
    return EigenEstimate(abs(rho), False, max_iter)


class KMeansResult(NamedTuple):
    assignments: np.ndarray
    centroids: np.ndarray
    objective: float
    history: list


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(points[idx])
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return np.array(centers, dtype=float)


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def kmeans(points, k: int, seed: int = 0, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm with seeded k-means++ initialization.

    An empty cluster is reseeded at the point farthest from its current
    centroid. ``history`` holds the objective after every iteration.
    """
    points = as_finite(points, "points")
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must satisfy 1 <= k <= n (got k={k}, n={n})")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(points, k, rng)
    assign = np.argmin(_sq_dists(points, centroids), axis=1)
    history: list[float] = []

    for _ in range(max_iter):
        for j in range(k):
            members = assign == j
            if members.any():
                centroids[j] = points[members].mean(axis=0)
            else:
                own = np.sum((points - centroids[assign]) ** 2, axis=1)
                far = int(np.argmax(own))
                centroids[j] = points[far]
                assign[far] = j
        d = _sq_dists(points, centroids)
        new_assign = np.argmin(d, axis=1)
        history.append(float(d[np.arange(n), assign].sum()))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign

    objective = float(np.sum((points - centroids[assign]) ** 2))
    return KMeansResult(assign, centroids, objective, history)


def central_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Entrywise (f(x + h e) - f(x - h e)) / (2h)."""
    if h <= 0:
        raise InvalidInputError("h must be positive")
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise InvalidInputError(f"f is not finite near coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
