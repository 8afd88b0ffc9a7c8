"""Optimal transport kernel.

Log-domain entropic Sinkhorn (with a recorded tape for reverse-mode
differentiation), Euclidean feature costs, the structure-cost contraction
used by fused Gromov-Wasserstein, a conditional-gradient FGW solver and a
brute-force permutation oracle for tiny problems.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericalError


@dataclass(frozen=True)
class OtConfig:
    epsilon: float = 0.01
    sinkhorn_iters: int = 200
    fw_iters: int = 20
    gamma: float = 0.5
    tol: float = 1e-9
    fw_tol: float = 1e-9
    eps_scaling: bool = True  # anneal epsilon with warm starts (untaped solves only)
    round_plan: bool = True  # project the final plan onto the marginal constraints
    fw_restarts: int = 0  # extra seeded random starts for the FGW solver
    fw_seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be > 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidInputError("gamma must lie in [0, 1]")
        if self.sinkhorn_iters < 1 or self.fw_iters < 0 or self.fw_restarts < 0:
            raise InvalidInputError("iteration budgets must be positive")

    def replace(self, **kw) -> "OtConfig":
        vals = {k: getattr(self, k) for k in self.__dataclass_fields__}
        vals.update(kw)
        return OtConfig(**vals)


@dataclass(frozen=True)
class TransportPlan:
    coupling: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    objective: float
    converged: bool = True
    iterations: int = 0
    history: tuple = field(default=(), compare=False)

    @property
    def shape(self):
        return self.coupling.shape

    def marginal_residual(self) -> float:
        rows = np.abs(self.coupling.sum(axis=1) - self.mu).max()
        cols = np.abs(self.coupling.sum(axis=0) - self.nu).max()
        return float(max(rows, cols))


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _check_marginal(p, n: int, name: str) -> np.ndarray:
    p = uniform(n) if p is None else np.asarray(p, dtype=float).ravel()
    if p.size != n:
        raise InvalidInputError(f"{name} has length {p.size}, expected {n}")
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise InvalidInputError(f"{name} must be strictly positive")
    if abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"{name} must sum to 1 (sums to {p.sum():.12g})")
    return p


def feature_cost(x, xc) -> np.ndarray:
    """Pairwise Euclidean distances between rows of ``x`` and ``xc``."""
    x = np.asarray(x, dtype=float)
    xc = np.asarray(xc, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if xc.ndim == 1:
        xc = xc[:, None]
    if x.shape[1] != xc.shape[1]:
        raise InvalidInputError(
            f"feature dimensions differ ({x.shape[1]} vs {xc.shape[1]})"
        )
    diff = x[:, None, :] - xc[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def structure_cost_apply(a, ac, plan, block_bytes: int = 32 << 20) -> np.ndarray:
    """Contract the 4-index cost ``|a_ik - ac_jl|`` against ``plan``.

    Entry ``(i, j)`` of the result is ``sum_kl |a[i,k] - ac[j,l]| plan[k,l]``.
    The 4-index tensor is never materialized; rows are processed in blocks.
    """
    a = np.asarray(a, dtype=float)
    ac = np.asarray(ac, dtype=float)
    plan = np.asarray(plan, dtype=float)
    n, m = a.shape[0], ac.shape[0]
    if a.shape != (n, n) or ac.shape != (m, m):
        raise InvalidInputError("adjacency matrices must be square")
    if plan.shape != (n, m):
        raise InvalidInputError(f"plan has shape {plan.shape}, expected {(n, m)}")
    out = np.empty((n, m))
    rows = max(1, block_bytes // (8 * n * m))
    for j in range(m):
        target = ac[j]
        for start in range(0, n, rows):
            stop = min(n, start + rows)
            diff = np.abs(a[start:stop, :, None] - target[None, None, :])
            out[start:stop, j] = np.einsum("ikl,kl->i", diff, plan)
    return out


def _logsumexp(v: np.ndarray, axis: int) -> np.ndarray:
    vmax = np.max(v, axis=axis, keepdims=True)
    vmax = np.where(np.isfinite(vmax), vmax, 0.0)
    s = np.log(np.sum(np.exp(v - vmax), axis=axis, keepdims=True)) + vmax
    return np.squeeze(s, axis=axis)


@dataclass
class SinkhornTape:
    """Recorded potentials of an unrolled Sinkhorn run."""

    cost: np.ndarray
    epsilon: float
    f_hist: list
    g_hist: list  # g_hist[0] is the zero initialization
    plan: np.ndarray


def sinkhorn_potentials(cost, log_mu, log_nu, epsilon, iters, tol=0.0, record=False, g_init=None):
    """Run log-domain Sinkhorn; return ``(f, g, plan, iterations, converged, tape)``.

    Each iteration updates ``f`` (row scaling) then ``g`` (column scaling).
    With ``tol > 0`` the loop stops once the row-marginal residual drops below
    ``tol``; with ``tol = 0`` exactly ``iters`` iterations run.
    """
    n, m = cost.shape
    g = np.zeros(m) if g_init is None else np.asarray(g_init, dtype=float)
    f = np.zeros(n)
    f_hist, g_hist = [], [g]
    mu = np.exp(log_mu)
    converged = False
    it = 0
    plan = None
    for it in range(1, iters + 1):
        f = epsilon * log_mu - epsilon * _logsumexp((g[None, :] - cost) / epsilon, axis=1)
        g = epsilon * log_nu - epsilon * _logsumexp((f[:, None] - cost) / epsilon, axis=0)
        if record:
            f_hist.append(f)
            g_hist.append(g)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise NumericalError(
                f"Sinkhorn produced non-finite potentials (epsilon={epsilon})", epsilon=epsilon
            )
        if tol > 0:
            plan = np.exp((f[:, None] + g[None, :] - cost) / epsilon)
            if np.abs(plan.sum(axis=1) - mu).max() < tol:
                converged = True
                break
    if plan is None or not tol > 0:
        plan = np.exp((f[:, None] + g[None, :] - cost) / epsilon)
    if not np.all(np.isfinite(plan)):
        raise NumericalError(f"Sinkhorn plan is non-finite (epsilon={epsilon})", epsilon=epsilon)
    if tol <= 0:
        converged = bool(np.abs(plan.sum(axis=1) - mu).max() < 1e-6)
    tape = SinkhornTape(cost, epsilon, f_hist, g_hist, plan) if record else None
    return f, g, plan, it, converged, tape


def round_to_marginals(plan, mu, nu) -> np.ndarray:
    """Nearby coupling with exactly the requested marginals.

    Scales down rows, then columns, that carry too much mass and spreads the
    remaining deficit as a rank-one correction. The result stays non-negative
    and moves at most twice the L1 marginal error.
    """
    p = np.asarray(plan, dtype=float)
    rows = p.sum(axis=1)
    x = np.minimum(np.divide(mu, rows, out=np.ones_like(rows), where=rows > 0), 1.0)
    p = x[:, None] * p
    cols = p.sum(axis=0)
    y = np.minimum(np.divide(nu, cols, out=np.ones_like(cols), where=cols > 0), 1.0)
    p = p * y[None, :]
    # both deficits are non-negative up to rounding; clip that noise
    err_r = np.maximum(mu - p.sum(axis=1), 0.0)
    err_c = np.maximum(nu - p.sum(axis=0), 0.0)
    total = err_r.sum()
    if total > 0:
        p = p + np.outer(err_r, err_c) / total
    return p


def _annealed_potential(cost, log_mu, log_nu, epsilon):
    """Warm-start column potential from a geometric epsilon schedule."""
    spread = float(cost.max() - cost.min())
    eps = max(epsilon, spread)
    g = None
    while eps > 2.0 * epsilon:
        _, g, *_ = sinkhorn_potentials(cost, log_mu, log_nu, eps, 100, 1e-6, g_init=g)
        eps /= 2.0
    return g


def sinkhorn(cost, mu=None, nu=None, cfg: OtConfig | None = None, *, fixed_iters=False, record=False):
    """Entropic OT plan for ``cost`` between marginals ``mu`` and ``nu``.

    Runs at most ``cfg.sinkhorn_iters`` iterations, stopping early once the
    marginal residual is below ``cfg.tol`` unless ``fixed_iters`` is set. The
    returned objective is the linear part ``<cost, plan>``. When ``record``
    is true a :class:`SinkhornTape` is returned alongside the plan.

    Untaped, early-stopping solves warm-start from an annealed epsilon
    schedule and round the plan onto the marginals (both configurable);
    taped or fixed-iteration solves are the plain unrolled recursion.
    """
    cfg = cfg or OtConfig()
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise InvalidInputError("cost must be a matrix")
    if not np.all(np.isfinite(cost)):
        raise InvalidInputError("cost must be finite")
    n, m = cost.shape
    mu = _check_marginal(mu, n, "mu")
    nu = _check_marginal(nu, m, "nu")
    plain = fixed_iters or record
    tol = 0.0 if fixed_iters else cfg.tol
    log_mu, log_nu = np.log(mu), np.log(nu)
    g0 = None
    if cfg.eps_scaling and not plain and cost.size > 1:
        g0 = _annealed_potential(cost, log_mu, log_nu, cfg.epsilon)
    _, _, plan, it, converged, tape = sinkhorn_potentials(
        cost, log_mu, log_nu, cfg.epsilon, cfg.sinkhorn_iters, tol, record, g_init=g0
    )
    if cfg.round_plan and not plain:
        plan = round_to_marginals(plan, mu, nu)
    result = TransportPlan(plan, mu, nu, float(np.sum(cost * plan)), converged, it)
    if record:
        return result, tape
    return result


def sinkhorn_backward(tape: SinkhornTape, grad_plan: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of the unrolled plan with respect to the cost.

    ``grad_plan`` is dL/dplan; the return value is dL/dcost accumulated through
    every recorded iteration (the plan's explicit cost dependence included).
    """
    eps = tape.epsilon
    cost = tape.cost
    plan = tape.plan
    w = grad_plan * plan / eps
    grad_cost = -w
    f_bar = w.sum(axis=1)
    g_bar = w.sum(axis=0)
    steps = len(tape.f_hist)
    for t in range(steps - 1, -1, -1):
        f_t = tape.f_hist[t]
        g_prev = tape.g_hist[t]
        # g_t = eps log nu - eps LSE_i((f_t - C) / eps)
        logits = (f_t[:, None] - cost) / eps
        p = np.exp(logits - _logsumexp(logits, axis=0)[None, :])
        grad_cost += g_bar[None, :] * p
        f_bar = f_bar - p @ g_bar
        # f_t = eps log mu - eps LSE_j((g_prev - C) / eps)
        logits = (g_prev[None, :] - cost) / eps
        q = np.exp(logits - _logsumexp(logits, axis=1)[:, None])
        grad_cost += f_bar[:, None] * q
        g_bar = -(q.T @ f_bar)
        f_bar = np.zeros_like(f_bar)
    return grad_cost


def exact_ot_bruteforce(cost):
    """Exact uniform-marginal OT on a square cost by enumerating permutations.

    Returns ``(value, permutation)`` where value is ``mean_i cost[i, perm[i]]``.
    Refuses n > 6.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise InvalidInputError("exact_ot_bruteforce needs a square cost")
    n = cost.shape[0]
    if n > 6:
        raise InvalidInputError("exact_ot_bruteforce is limited to n <= 6")
    rows = np.arange(n)
    best_val, best_perm = np.inf, None
    for perm in itertools.permutations(range(n)):
        val = cost[rows, perm].sum() / n
        if val < best_val:
            best_val, best_perm = val, list(perm)
    return float(best_val), best_perm


def fgw_objective(k: np.ndarray, a, ac, plan, gamma: float) -> float:
    jp = structure_cost_apply(a, ac, plan)
    return float(gamma * np.sum(k * plan) + (1.0 - gamma) * np.sum(jp * plan))


def _frank_wolfe(pi, k, a, ac, mu, nu, cfg: OtConfig):
    gamma = cfg.gamma
    j_pi = structure_cost_apply(a, ac, pi)
    obj = float(gamma * np.sum(k * pi) + (1.0 - gamma) * np.sum(j_pi * pi))
    history = [obj]
    converged = cfg.fw_iters == 0
    it = 0
    for it in range(1, cfg.fw_iters + 1):
        grad = gamma * k + 2.0 * (1.0 - gamma) * j_pi
        target = sinkhorn(grad, mu, nu, cfg).coupling
        d = target - pi
        j_d = structure_cost_apply(a, ac, d)
        quad = (1.0 - gamma) * np.sum(j_d * d)
        lin = gamma * np.sum(k * d) + 2.0 * (1.0 - gamma) * np.sum(j_pi * d)
        if quad > 0:
            alpha = float(np.clip(-lin / (2.0 * quad), 0.0, 1.0))
        else:
            alpha = 1.0 if quad + lin < 0 else 0.0
        if alpha == 0.0:
            converged = True
            break

        new_obj = None
        for _ in range(2):
            cand_pi = pi + alpha * d
            cand_j = j_pi + alpha * j_d
            cand = float(gamma * np.sum(k * cand_pi) + (1.0 - gamma) * np.sum(cand_j * cand_pi))
            if cand <= obj:
                new_obj = cand
                break
            alpha /= 2.0
        if new_obj is None:
            converged = False
            break

        pi, j_pi = cand_pi, cand_j
        improvement = obj - new_obj
        obj = new_obj
        history.append(obj)
        if improvement <= cfg.fw_tol * max(1.0, abs(obj)):
            converged = True
            break
    return TransportPlan(np.clip(pi, 0.0, None), mu, nu, obj, converged, it, tuple(history))


def fgw_plan(g, gc, cfg: OtConfig | None = None, mu=None, nu=None) -> TransportPlan:
    """Fused Gromov-Wasserstein plan between two graphs by conditional gradient.

    Objective ``<gamma K + (1 - gamma) J (x) pi, pi>`` with ``K`` the feature
    distance and ``J`` the absolute adjacency difference. Starts at the
    product coupling; each step solves the linearized problem with Sinkhorn and
    takes an exact line search on the quadratic along the segment. The
    objective trace is kept in ``history``.

    The objective is non-convex for ``gamma < 1`` and the product coupling can
    be a stationary point (e.g. for regular graphs). ``cfg.fw_restarts`` adds
    seeded random interior starts; the lowest objective wins.
    """
    cfg = cfg or OtConfig()
    a, ac = g.operator, gc.operator
    n, m = a.shape[0], ac.shape[0]
    mu = _check_marginal(mu, n, "mu")
    nu = _check_marginal(nu, m, "nu")
    k = feature_cost(g.features, gc.features)

    best = _frank_wolfe(np.outer(mu, nu), k, a, ac, mu, nu, cfg)
    rng = np.random.default_rng(cfg.fw_seed)
    start_cfg = cfg.replace(epsilon=0.05)
    for _ in range(cfg.fw_restarts):
        start = sinkhorn(rng.random((n, m)), mu, nu, start_cfg).coupling
        run = _frank_wolfe(start, k, a, ac, mu, nu, cfg)
        if run.objective < best.objective:
            best = run
    return best


def wasserstein_plan(z, zc, cfg: OtConfig | None = None, mu=None, nu=None):
    """Entropic Wasserstein plan between point clouds; returns ``(plan, distance)``."""
    cost = feature_cost(z, zc)
    plan = sinkhorn(cost, mu, nu, cfg)
    return plan, plan.objective
