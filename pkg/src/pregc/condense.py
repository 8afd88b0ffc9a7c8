"""Condensed-graph pre-training.

The condensed graph is parameterized by a feature matrix and symmetric
adjacency logits (``A~ = sigmoid((S + S^T) / 2)``, degree-normalized before
diffusion). Each epoch draws a diffusion interval, propagates both graphs with
it, and minimizes

    L_total = W(Z_T, Z~_T) + xi * ||pi_D - pi_Z||_F^2

where ``W`` is the entropic Wasserstein cost between terminal diffusion
states, ``pi_Z`` its plan, and ``pi_D`` a periodically refreshed fused
Gromov-Wasserstein plan between the graphs (held constant). Gradients are
propagated by hand through the unrolled Sinkhorn iterations, the Euclidean
cost, the Euler steps and the sigmoid/normalization of the adjacency.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .diffusion import DiffusionDraw, laplacian_lambda_max, propagate, sample_interval, stability_limit
from .errors import InvalidInputError, NumericalError, StabilityError
from .graph import CondensedGraph, Graph, normalize_adjacency
from .numkit import kmeans
from .ot import OtConfig, TransportPlan, feature_cost, fgw_plan, sinkhorn, sinkhorn_backward

# guard on the Euclidean-norm derivative at coincident points
_NORM_FLOOR = 1e-9
# safety shrink of the admissible interval, covers a stale condensed lambda_max
_INTERVAL_SHRINK = 0.99
INIT_STRATEGIES = ("random-sample", "kmeans-centroids")


@dataclass(frozen=True)
class CondensedParams:
    features: np.ndarray
    adj_logits: np.ndarray

    @property
    def m(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    xi: float = 1.0
    ot: OtConfig = field(default_factory=OtConfig)
    epochs: int = 500
    steps_k: int = 5
    delta_t_min: float | None = None
    learning_rate: float = 0.01
    adam_betas: tuple = (0.9, 0.999)
    seed: int = 0
    plan_refresh_period: int = 20
    sparsify_threshold: float | None = 0.5
    init: str = "random-sample"
    final_sinkhorn_iters: int = 10000

    def __post_init__(self):
        if self.xi < 0:
            raise InvalidInputError("xi must be >= 0")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if self.plan_refresh_period < 1:
            raise InvalidInputError("plan_refresh_period must be >= 1")
        if self.steps_k < 1:
            raise InvalidInputError("steps_k must be >= 1")
        if self.init not in INIT_STRATEGIES:
            raise InvalidInputError(f"init must be one of {INIT_STRATEGIES}")


@dataclass(frozen=True)
class LossBreakdown:
    cost_term: float
    plan_term: float
    total: float


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def init_condensed(g: Graph, m: int, strategy: str = "random-sample", seed: int = 0) -> CondensedParams:
    """Initial condensed parameters.

    Features are ``m`` distinct source rows (``random-sample``) or k-means
    centroids of the source features. Off-diagonal logits start at 0
    (probability 0.5), diagonal logits at +2.
    """
    if not 1 <= m < g.n:
        raise InvalidInputError(f"need 1 <= m < n (got m={m}, n={g.n})")
    rng = np.random.default_rng(seed)
    if strategy == "random-sample":
        rows = np.sort(rng.choice(g.n, size=m, replace=False))
        feats = g.features[rows].copy()
    elif strategy == "kmeans-centroids":
        feats = kmeans(g.features, m, seed=seed).centroids.copy()
    else:
        raise InvalidInputError(f"unknown init strategy {strategy!r}")
    logits = np.zeros((m, m))
    np.fill_diagonal(logits, 2.0)
    return CondensedParams(feats, logits)


def materialize(params: CondensedParams, threshold: float | None = None) -> CondensedGraph:
    """Condensed graph from parameters.

    Without a threshold the adjacency is ``sigmoid((S + S^T)/2)``. With one,
    off-diagonal entries are binarized at the threshold and the result is
    normalized with self-loops; a node left without edges keeps only its
    self-loop and a warning is emitted.
    """
    s = params.adj_logits
    w = sigmoid((s + s.T) / 2.0)
    w = (w + w.T) / 2.0
    if threshold is None:
        return CondensedGraph(w, params.features.copy())
    b = (w >= threshold).astype(float)
    np.fill_diagonal(b, 0.0)
    isolated = np.flatnonzero(b.sum(axis=1) == 0)
    if isolated.size:
        warnings.warn(
            f"thresholding isolated condensed nodes {isolated.tolist()}; keeping self-loops only",
            stacklevel=2,
        )
    return CondensedGraph(normalize_adjacency(b, add_self_loops=True), params.features.copy(), normalized=True)


class _Forward(NamedTuple):
    loss: LossBreakdown
    plan: TransportPlan
    cache: dict


def _forward(z, params: CondensedParams, draw: DiffusionDraw, pi_d, xi, ot_cfg, mu=None, nu=None, keep=False):
    s = params.adj_logits
    w = sigmoid((s + s.T) / 2.0)
    deg = w.sum(axis=1)
    r = 1.0 / np.sqrt(deg)
    a_hat = w * r[:, None] * r[None, :]
    m = w.shape[0]
    op = (1.0 - draw.delta_t) * np.eye(m) + draw.delta_t * a_hat

    states = [params.features]
    for _ in range(draw.steps):
        states.append(op @ states[-1])
    zc = states[-1]

    cost = feature_cost(z, zc)
    plan, tape = sinkhorn(cost, mu, nu, ot_cfg, fixed_iters=True, record=True)
    pi = plan.coupling
    cost_term = float(np.sum(cost * pi))
    diff = pi - pi_d
    plan_term = float(np.sum(diff * diff))
    loss = LossBreakdown(cost_term, plan_term, cost_term + xi * plan_term)
    cache = {}
    if keep:
        cache = dict(w=w, deg=deg, a_hat=a_hat, op=op, states=states, cost=cost, tape=tape, diff=diff)
    return _Forward(loss, plan, cache)


def _backward(z, params: CondensedParams, draw: DiffusionDraw, xi, fwd: _Forward):
    c = fwd.cache
    pi = fwd.plan.coupling
    cost = c["cost"]
    grad_plan = cost + 2.0 * xi * c["diff"]
    grad_cost = pi + sinkhorn_backward(c["tape"], grad_plan)

    # cost_ij = ||z_i - zc_j||
    zc = c["states"][-1]
    weights = grad_cost / np.maximum(cost, _NORM_FLOOR)
    grad_z = weights.sum(axis=0)[:, None] * zc - weights.T @ z

    op = c["op"]
    states = c["states"]
    grad_op = np.zeros_like(op)
    for k in range(draw.steps, 0, -1):
        grad_op += grad_z @ states[k - 1].T
        grad_z = op.T @ grad_z
    grad_features = grad_z

    grad_a = draw.delta_t * grad_op
    w, deg, a_hat = c["w"], c["deg"], c["a_hat"]
    r = 1.0 / np.sqrt(deg)
    grad_w = grad_a * r[:, None] * r[None, :]
    grad_deg = -(np.sum((grad_a + grad_a.T) * a_hat, axis=1)) / (2.0 * deg)
    grad_w += grad_deg[:, None]
    grad_p = grad_w * w * (1.0 - w)
    grad_logits = (grad_p + grad_p.T) / 2.0
    return grad_features, grad_logits


def loss_value(g: Graph, params: CondensedParams, draw: DiffusionDraw, pi_d, cfg: TrainConfig, z=None) -> float:
    """Forward pass only; same computation as :func:`loss_and_grad`."""
    if z is None:
        z = propagate(g.operator, g.features, draw.delta_t, draw.steps)
    pi_d = pi_d.coupling if isinstance(pi_d, TransportPlan) else pi_d
    return _forward(z, params, draw, pi_d, cfg.xi, cfg.ot).loss.total


def loss_and_grad(
    g: Graph,
    params: CondensedParams,
    draw: DiffusionDraw,
    pi_d_cached,
    cfg: TrainConfig,
    z=None,
    lambda_max=None,
):
    """Loss breakdown, gradients w.r.t. features and adjacency logits, and pi_Z.

    Sinkhorn runs exactly ``cfg.ot.sinkhorn_iters`` iterations so that the
    differentiated computation is fixed. ``pi_d_cached`` is a constant target.
    ``z`` (source terminal state) and ``lambda_max = (lam_g, lam_gc)`` may be
    passed in to skip recomputation.
    """
    pi_d = pi_d_cached.coupling if isinstance(pi_d_cached, TransportPlan) else np.asarray(pi_d_cached)
    n, m = g.n, params.m
    if pi_d.shape != (n, m):
        raise InvalidInputError(f"pi_D has shape {pi_d.shape}, expected {(n, m)}")
    if lambda_max is not None:
        lam = max(lambda_max)
    else:
        lam = max(laplacian_lambda_max(g.operator), laplacian_lambda_max(materialize(params).operator))
    if draw.delta_t > stability_limit(lam) + 1e-12:
        raise StabilityError(
            f"delta_t={draw.delta_t:.6g} unstable for the pair (lambda_max={lam:.6g})", lam
        )
    if z is None:
        z = propagate(g.operator, g.features, draw.delta_t, draw.steps, lambda_max=lam)

    try:
        fwd = _forward(z, params, draw, pi_d, cfg.xi, cfg.ot, keep=True)
    except NumericalError as err:
        raise NumericalError(f"{err} at epoch {draw.epoch}", epsilon=cfg.ot.epsilon, epoch=draw.epoch) from err
    grad_f, grad_s = _backward(z, params, draw, cfg.xi, fwd)
    if not (np.all(np.isfinite(grad_f)) and np.all(np.isfinite(grad_s))):
        raise NumericalError(f"non-finite gradient at epoch {draw.epoch}", cfg.ot.epsilon, draw.epoch)
    return fwd.loss, grad_f, grad_s, fwd.plan


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_step(params, grads, state: AdamState, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
    """One bias-corrected Adam update on a list of arrays; returns (params, state)."""
    b1, b2 = betas
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


class CondenseResult(NamedTuple):
    graph: CondensedGraph
    plan: TransportPlan
    history: list
    params: CondensedParams
    draws: list


def _interval(lam_g: float, lam_c: float, cfg: TrainConfig):
    hi = _INTERVAL_SHRINK * stability_limit(max(lam_g, lam_c))
    lo = cfg.delta_t_min if cfg.delta_t_min is not None else 0.01 * hi
    if not 0 < lo < hi:
        raise InvalidInputError(f"delta_t_min={lo} outside (0, {hi})")
    return lo, hi


def reference_interval(lam_g: float, lam_c: float, cfg: TrainConfig) -> float:
    lo, hi = _interval(lam_g, lam_c, cfg)
    return 0.5 * (lo + hi)


def final_plan(g: Graph, params: CondensedParams, cfg: TrainConfig, lam_g: float | None = None) -> TransportPlan:
    """Representation plan at the deterministic reference interval, solved to convergence."""
    gc = materialize(params)
    lam_g = laplacian_lambda_max(g.operator) if lam_g is None else lam_g
    lam_c = laplacian_lambda_max(gc.operator)
    dt = reference_interval(lam_g, lam_c, cfg)
    z = propagate(g.operator, g.features, dt, cfg.steps_k, lambda_max=lam_g)
    zc = propagate(gc.operator, gc.features, dt, cfg.steps_k, lambda_max=lam_c)
    ot_cfg = cfg.ot.replace(sinkhorn_iters=max(cfg.final_sinkhorn_iters, cfg.ot.sinkhorn_iters))
    return sinkhorn(feature_cost(z, zc), None, None, ot_cfg)


def condense(g: Graph, m: int, cfg: TrainConfig | None = None, callback=None) -> CondenseResult:
    """Pre-train a condensed graph with ``m`` nodes.

    Only the adjacency and features of ``g`` are read; labels never enter.
    ``callback(epoch, loss)`` is invoked after every epoch when given.
    """
    cfg = cfg or TrainConfig()
    g = Graph(g.adjacency, g.features)
    params = init_condensed(g, m, cfg.init, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    lam_g = laplacian_lambda_max(g.operator)
    state = AdamState.zeros_like([params.features, params.adj_logits])
    history: list[LossBreakdown] = []
    draws: list[DiffusionDraw] = []
    pi_d = None
    lam_c = lo = hi = None

    for epoch in range(cfg.epochs):
        if epoch % cfg.plan_refresh_period == 0:
            gc = materialize(params)
            lam_c = laplacian_lambda_max(gc.operator)
            lo, hi = _interval(lam_g, lam_c, cfg)
            pi_d = fgw_plan(g, gc, cfg.ot)
        dt = sample_interval(2.0 / hi, lo, rng)
        draw = DiffusionDraw(dt, cfg.steps_k, epoch)
        z = propagate(g.operator, g.features, dt, cfg.steps_k, lambda_max=lam_g)
        loss, grad_f, grad_s, _ = loss_and_grad(
            g, params, draw, pi_d, cfg, z=z, lambda_max=(lam_g, lam_c)
        )
        history.append(loss)
        draws.append(draw)
        (feats, logits), state = adam_step(
            [params.features, params.adj_logits], [grad_f, grad_s], state, cfg.learning_rate, cfg.adam_betas
        )
        params = CondensedParams(feats, logits)
        if not (np.all(np.isfinite(feats)) and np.all(np.isfinite(logits))):
            raise NumericalError(f"parameters became non-finite at epoch {epoch}", cfg.ot.epsilon, epoch)
        if callback is not None:
            callback(epoch, loss)

    plan = final_plan(g, params, cfg, lam_g)
    graph = materialize(params, cfg.sparsify_threshold)
    return CondenseResult(graph, plan, history, params, draws)
