"""Explicit-Euler graph heat diffusion and hybrid-interval sampling.

One Euler step is multiplication by ``(1 - dt) I + dt A``; ``K`` steps give the
terminal state at time ``T = K dt``. The step is stable while
``dt <= 2 / lambda_max(I - A)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, StabilityError
from .graph import laplacian
from .numkit import lambda_max_sym

# slack on the stability bound when comparing floating-point intervals
_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class DiffusionDraw:
    delta_t: float
    steps: int
    epoch: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise InvalidInputError("steps must be >= 1")
        if self.delta_t < 0:
            raise InvalidInputError("delta_t must be non-negative")

    @property
    def terminal_time(self) -> float:
        return self.steps * self.delta_t


def laplacian_lambda_max(a: np.ndarray) -> float:
    return lambda_max_sym(laplacian(a)).value


def stability_limit(lambda_max: float) -> float:
    return np.inf if lambda_max <= 0 else 2.0 / lambda_max


def euler_operator(a: np.ndarray, delta_t: float) -> np.ndarray:
    return (1.0 - delta_t) * np.eye(a.shape[0]) + delta_t * a


def propagate(
    a,
    x,
    delta_t: float,
    steps: int,
    lambda_max: float | None = None,
) -> np.ndarray:
    """Return ``[(1 - dt) I + dt a]^K x`` by K repeated products."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if steps < 0:
        raise InvalidInputError("steps must be non-negative")
    if delta_t < 0:
        raise InvalidInputError("delta_t must be non-negative")
    if delta_t > 0:
        lam = laplacian_lambda_max(a) if lambda_max is None else lambda_max
        if delta_t > stability_limit(lam) + _BOUND_SLACK:
            raise StabilityError(
                f"delta_t={delta_t:.6g} exceeds 2/lambda_max={stability_limit(lam):.6g} "
                f"(lambda_max={lam:.6g})",
                lam,
            )
    op = euler_operator(a, delta_t)
    z = x
    for _ in range(steps):
        z = op @ z
    return z


def sample_interval(lambda_max: float, delta_t_min: float, rng: np.random.Generator) -> float:
    """Uniform draw on ``[delta_t_min, 2 / lambda_max]``."""
    hi = stability_limit(lambda_max)
    if not (0 < delta_t_min < hi) or not np.isfinite(hi):
        raise InvalidInputError(
            f"need 0 < delta_t_min < 2/lambda_max (got {delta_t_min}, {hi})"
        )
    return float(rng.uniform(delta_t_min, hi))


def admissible_range(lambda_max: float, min_fraction: float = 0.01, shrink: float = 1.0):
    """``(delta_t_min, delta_t_max)`` with the upper end optionally shrunk."""
    hi = shrink * stability_limit(lambda_max)
    return min_fraction * hi, hi


def augmented_pair(g, gc, delta_t: float, steps: int, lambda_max=None):
    """Propagate both graphs with the identical ``(delta_t, steps)``.

    The interval must be stable for the more restrictive of the two graphs.
    ``lambda_max`` may carry precomputed ``(lam_g, lam_gc)``.
    """
    if lambda_max is None:
        lam_g = laplacian_lambda_max(g.operator)
        lam_c = laplacian_lambda_max(gc.operator)
    else:
        lam_g, lam_c = lambda_max
    lam = max(lam_g, lam_c)
    if delta_t > stability_limit(lam) + _BOUND_SLACK:
        raise StabilityError(
            f"delta_t={delta_t:.6g} unstable for the pair (lambda_max={lam:.6g})", lam
        )
    z = propagate(g.operator, g.features, delta_t, steps, lambda_max=lam_g)
    zc = propagate(gc.operator, gc.features, delta_t, steps, lambda_max=lam_c)
    return z, zc


def spectral_response(lam, delta_t, steps: int):
    """Heat attenuation ``exp(-K dt lambda)``; broadcasts over arrays."""
    if np.any(np.asarray(lam) < 0):
        raise InvalidInputError("eigenvalues must be non-negative")
    out = np.exp(-steps * np.asarray(delta_t, dtype=float) * np.asarray(lam, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def euler_response(lam, delta_t, steps: int):
    """Discrete counterpart ``(1 - dt lambda)^K`` of :func:`spectral_response`."""
    return (1.0 - np.asarray(delta_t) * np.asarray(lam)) ** steps


def coverage_gap(
    eigenvalues,
    sampled_intervals,
    grid_resolution: int = 1000,
    steps: int = 5,
    delta_t_min: float | None = None,
    detail: bool = False,
):
    """Worst-case distance between the response curve and its sampled points.

    For every eigenvalue, and every grid point ``dt`` of the admissible range
    ``[delta_t_min, 2/lambda_max]``, take the closest sampled response; report
    the maximum over grid points and eigenvalues. With ``detail=True`` also
    return per-eigenvalue ``(argmax grid dt, gap)`` pairs.
    """
    lam = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
    samples = np.asarray(sampled_intervals, dtype=float).ravel()
    if samples.size == 0:
        raise InvalidInputError("sampled_intervals must be non-empty")
    if lam.size == 0:
        raise InvalidInputError("eigenvalues must be non-empty")
    if grid_resolution < 2:
        raise InvalidInputError("grid_resolution must be >= 2")
    hi = stability_limit(lam.max())
    lo = 0.01 * hi if delta_t_min is None else delta_t_min
    grid = np.linspace(lo, hi, grid_resolution)

    worst = np.empty(lam.size)
    where = np.empty(lam.size)
    for i, li in enumerate(lam):
        g = np.exp(-steps * grid * li)
        s = np.exp(-steps * samples * li)
        gaps = np.abs(g[:, None] - s[None, :]).min(axis=1)
        k = int(np.argmax(gaps))
        worst[i] = gaps[k]
        where[i] = grid[k]
    total = float(worst.max())
    if detail:
        return total, list(zip(where.tolist(), worst.tolist()))
    return total


def evenly_spaced_intervals(lambda_max: float, count: int, delta_t_min: float | None = None) -> np.ndarray:
    hi = stability_limit(lambda_max)
    lo = 0.01 * hi if delta_t_min is None else delta_t_min
    return np.linspace(lo, hi, count)
