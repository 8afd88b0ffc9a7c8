"""Downstream SGC heads, task metrics and condensation diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.metrics import normalized_mutual_info_score, r2_score, roc_auc_score

from .errors import InvalidInputError
from .harmonize import aggregate
from .numkit import kmeans, pinv

TASK_METRICS = {
    "node-classification": "accuracy",
    "node-clustering": "NMI",
    "link-prediction": "AUC",
    "node-regression": "R2",
}
TASK_ALIASES = {"nc": "node-classification", "nclu": "node-clustering", "lp": "link-prediction", "nr": "node-regression"}


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    metric: str | None = None

    def __post_init__(self):
        kind = TASK_ALIASES.get(self.kind.lower(), self.kind)
        if kind not in TASK_METRICS:
            raise InvalidInputError(f"unknown task {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        expected = TASK_METRICS[kind]
        if self.metric is None:
            object.__setattr__(self, "metric", expected)
        elif self.metric != expected:
            raise InvalidInputError(f"task {kind} is scored by {expected}, not {self.metric}")

    @classmethod
    def parse(cls, name: str) -> "TaskSpec":
        return cls(name)


@dataclass(frozen=True)
class SgcModel:
    weights: np.ndarray
    steps_k: int
    trained_on: str = "original"
    bias: np.ndarray | None = None
    task: str | None = None
    step_size: float | None = None  # backtracking state, lets training resume

    def predict(self, z: np.ndarray) -> np.ndarray:
        out = z @ self.weights
        return out if self.bias is None else out + self.bias


def propagated(graph, k: int) -> np.ndarray:
    z = graph.features
    a = graph.operator
    for _ in range(k):
        z = a @ z
    return z


def sgc_closed_form(a, x, y, k: int = 2, ridge: float = 1e-6) -> SgcModel:
    """Least-squares SGC weights on ``Z = A^K X``.

    ``ridge = 0`` gives ``pinv(Z) Y``; otherwise the regularized normal
    equations are solved.
    """
    a = np.asarray(a, dtype=float)
    z = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    for _ in range(k):
        z = a @ z
    if not np.any(z):
        raise InvalidInputError("design matrix A^K X is all zeros")
    if ridge == 0:
        w = pinv(z) @ y
    else:
        gram = z.T @ z + ridge * np.eye(z.shape[1])
        w = np.linalg.solve(gram, z.T @ y)
    return SgcModel(w, k)


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def graph_edges(graph) -> np.ndarray:
    return np.argwhere(np.triu(graph.operator, 1) > 0)


def sample_non_edges(graph, count: int, rng: np.random.Generator) -> np.ndarray:
    n = graph.n
    adj = graph.operator > 0
    out = []
    tries = 0
    while len(out) < count and tries < 100 * max(count, 1):
        i, j = rng.integers(n, size=2)
        tries += 1
        if i != j and not adj[i, j]:
            out.append((min(i, j), max(i, j)))
    return np.array(out, dtype=int).reshape(-1, 2)


def _objective(task: str, z, w, b, targets, pairs=None, labels_pm=None):
    """Loss and gradients (dW, db) of the linear head."""
    if task == "node-classification":
        logits = z @ w + b
        p = _softmax(logits)
        logp = np.log(np.clip(p, 1e-300, None))
        n = z.shape[0]
        loss = -np.sum(targets * logp) / n
        d = (p * targets.sum(axis=1, keepdims=True) - targets) / n
        return loss, z.T @ d, d.sum(axis=0)
    if task == "node-regression":
        r = z @ w + b - targets
        n = z.shape[0]
        loss = np.sum(r * r) / n
        d = 2.0 * r / n
        return loss, z.T @ d, d.sum(axis=0)
    if task == "link-prediction":
        h = z @ w
        u, v = pairs[:, 0], pairs[:, 1]
        s = np.sum(h[u] * h[v], axis=1)
        loss = -np.mean(_log_sigmoid(labels_pm * s))
        ds = -labels_pm * (1.0 - np.exp(_log_sigmoid(labels_pm * s))) / s.size
        dh = np.zeros_like(h)
        np.add.at(dh, u, ds[:, None] * h[v])
        np.add.at(dh, v, ds[:, None] * h[u])
        return loss, z.T @ dh, np.zeros_like(b)
    raise InvalidInputError(f"task {task} has no trainable head")


class TrainedHead(NamedTuple):
    model: SgcModel
    losses: list


def train_head(
    graph,
    labels=None,
    coverage_mask=None,
    task: TaskSpec | str = "node-classification",
    k: int = 2,
    epochs: int = 200,
    lr: float = 1.0,
    seed: int = 0,
    rows=None,
    init: SgcModel | None = None,
    embed_dim: int = 16,
    trained_on: str = "original",
) -> TrainedHead:
    """Full-batch gradient training of a linear head on ``A^K X``.

    Classification uses softmax cross-entropy (soft targets allowed),
    regression squared error, link prediction an inner-product decoder with
    logistic loss on the graph's edges plus as many seeded non-edges. Steps
    use Armijo backtracking starting from ``lr``, so the recorded loss never
    increases. Rows outside ``rows`` or with ``coverage_mask`` False are
    ignored. Passing ``init`` resumes from an earlier model.
    """
    task = task if isinstance(task, TaskSpec) else TaskSpec(task)
    kind = "node-classification" if task.kind == "node-clustering" else task.kind
    z_all = propagated(graph, k)
    f = z_all.shape[1]
    rng = np.random.default_rng(seed)

    pairs = signs = None
    if kind == "link-prediction":
        pos = graph_edges(graph)
        if pos.shape[0] == 0:
            raise InvalidInputError("link prediction needs at least one edge")
        neg = sample_non_edges(graph, pos.shape[0], rng)
        pairs = np.vstack([pos, neg])
        signs = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
        z, targets = z_all, None
        c = min(embed_dim, f)
    else:
        if labels is None:
            raise InvalidInputError(f"{kind} needs labels")
        y = np.asarray(labels, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        keep = np.ones(z_all.shape[0], dtype=bool)
        if rows is not None:
            keep[:] = False
            keep[np.asarray(rows, dtype=int)] = True
        if coverage_mask is not None:
            keep &= np.asarray(coverage_mask, dtype=bool)
        if not keep.any():
            raise InvalidInputError("no labeled rows remain after masking")
        z, targets = z_all[keep], y[keep]
        c = y.shape[1]

    if init is not None:
        w = init.weights.copy()
        b = np.zeros(c) if init.bias is None else init.bias.copy()
        step = init.step_size if init.step_size is not None else lr
    else:
        if kind == "link-prediction":
            w = 0.1 * rng.standard_normal((f, c))
        else:
            w = np.zeros((f, c))
        b = np.zeros(c)
        step = lr

    loss, gw, gb = _objective(kind, z, w, b, targets, pairs, signs)
    losses = [float(loss)]
    for _ in range(epochs):
        gnorm2 = float(np.sum(gw * gw) + np.sum(gb * gb))
        if gnorm2 == 0.0:
            losses.append(float(loss))
            continue
        t = step
        accepted = False
        while t > 1e-12:
            w_new, b_new = w - t * gw, b - t * gb
            new_loss, ngw, ngb = _objective(kind, z, w_new, b_new, targets, pairs, signs)
            if new_loss <= loss - 0.5 * t * gnorm2:
                accepted = True
                break
            t /= 2.0
        if accepted:
            w, b, loss, gw, gb = w_new, b_new, new_loss, ngw, ngb
            step = min(2.0 * t, lr)
        losses.append(float(loss))

    model = SgcModel(w, k, trained_on, b, task.kind, step)
    return TrainedHead(model, losses)


def auc_score(pos_scores, neg_scores) -> float:
    pos = np.asarray(pos_scores, dtype=float)
    neg = np.asarray(neg_scores, dtype=float)
    y = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
    return float(roc_auc_score(y, np.concatenate([pos, neg])))


def link_pairs(graph, seed: int = 0, max_pairs: int = 200_000):
    """Positive edges and negative non-edges for AUC.

    All non-edges are used when there are at most ``max_pairs`` of them
    (order-independent); otherwise a seeded sample of equal size to the
    positives is drawn.
    """
    pos = graph_edges(graph)
    adj = graph.operator > 0
    iu = np.triu_indices(graph.n, 1)
    non = ~adj[iu]
    if non.sum() <= max_pairs:
        neg = np.column_stack([iu[0][non], iu[1][non]])
    else:
        neg = sample_non_edges(graph, pos.shape[0], np.random.default_rng(seed))
    return pos, neg


def evaluate(model: SgcModel | None, g, task: TaskSpec | str, seed: int = 0, labels=None) -> float:
    """Score a head on the original graph.

    NC: test accuracy. NR: test R^2. NClu: k-means (k = number of classes) on
    the head's embeddings (or raw propagated features without a model), NMI
    against the class labels on all nodes. LP: AUC of inner-product scores of
    edges versus non-edges.
    """
    task = task if isinstance(task, TaskSpec) else TaskSpec(task)
    k = model.steps_k if model is not None else 2
    z = propagated(g, k)
    y = g.labels if labels is None else np.asarray(labels, dtype=float)

    if task.kind in ("node-classification", "node-regression"):
        if model is None:
            raise InvalidInputError(f"{task.kind} needs a trained model")
        if g.splits is None or g.splits.test.size == 0:
            raise InvalidInputError("evaluation needs a non-empty test split")
        if y is None:
            raise InvalidInputError(f"{task.kind} needs labels")
        test = g.splits.test
        pred = model.predict(z[test])
        if task.kind == "node-classification":
            if model.task not in (None, "node-classification", "node-clustering"):
                raise InvalidInputError(f"model trained for {model.task} cannot score accuracy")
            return float(np.mean(np.argmax(pred, axis=1) == np.argmax(y[test], axis=1)))
        if pred.shape[1] != y.shape[1]:
            raise InvalidInputError("prediction and target widths differ")
        return float(r2_score(y[test].ravel(), pred.ravel()))

    if task.kind == "node-clustering":
        if y is None:
            raise InvalidInputError("clustering is scored against class labels")
        truth = np.argmax(y, axis=1)
        n_clusters = y.shape[1]
        emb = z if model is None else z @ model.weights
        res = kmeans(emb, n_clusters, seed=seed)
        return float(normalized_mutual_info_score(truth, res.assignments))

    pos, neg = link_pairs(g, seed)
    h = z if model is None else z @ model.weights
    sp = np.sum(h[pos[:, 0]] * h[pos[:, 1]], axis=1)
    sn = np.sum(h[neg[:, 0]] * h[neg[:, 1]], axis=1)
    return auc_score(sp, sn)


def lre(g, y, gc, yc, k_max: int = 5) -> float:
    """Labeled reconstruction error between class-level propagated features.

    ``(1/K) sum_{k=0..K} ||pinv(Y) A^k X - pinv(Y~) A~^k X~||_F`` with
    ``K = k_max`` (a single term when ``k_max = 0``).
    """
    y_pinv = pinv(np.asarray(y, dtype=float))
    yc_pinv = pinv(np.asarray(yc, dtype=float))
    z, zc = g.features, gc.features
    total = 0.0
    for k in range(k_max + 1):
        if k:
            z = g.operator @ z
            zc = gc.operator @ zc
        total += np.linalg.norm(y_pinv @ z - yc_pinv @ zc)
    return float(total / max(k_max, 1))


def avg_nn_distance(z, selected) -> float:
    """Mean distance from each selected row to its nearest other selected row."""
    sel = np.asarray(selected, dtype=int).ravel()
    if sel.size < 2:
        raise InvalidInputError("need at least two selected nodes")
    pts = np.asarray(z, dtype=float)[sel]
    d = np.sqrt(np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2))
    np.fill_diagonal(d, np.inf)
    return float(d.min(axis=1).mean())


class BoundCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool
    lhs_full: float
    alignment_gap: float


def prop1_bound_check(g, gc, y, yc, k: int, mapping, tol: float = 1e-9) -> BoundCheck:
    """Numeric check of the reconstruction/fitting bound on SGC weights.

    The mapping aggregates N-row objects into M rows (``D^-1 M^T``). ``lhs``
    compares the least-squares weights of the mapped original design
    ``(M(A^K X), M(Y))`` with those of the condensed graph; ``rhs`` is the
    reconstruction term times ``||M(Y)||`` plus the fitting term times
    ``||pinv(A~^K X~)||``. ``lhs_full`` uses the unmapped original weights
    and is bounded by ``rhs + alignment_gap``.
    """
    z = propagated(g, k)
    zc = propagated(gc, k)
    y = np.asarray(y, dtype=float)
    yc = np.asarray(yc, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if yc.ndim == 1:
        yc = yc[:, None]
    my = aggregate(mapping, y)
    mz = aggregate(mapping, z)
    mz_pinv = pinv(mz)
    zc_pinv = pinv(zc)
    w_mapped = mz_pinv @ my
    w_c = zc_pinv @ yc
    w_full = pinv(z) @ y
    lhs = float(np.linalg.norm(w_mapped - w_c))
    rhs = float(
        np.linalg.norm(my) * np.linalg.norm(mz_pinv - zc_pinv)
        + np.linalg.norm(my - yc) * np.linalg.norm(zc_pinv)
    )
    return BoundCheck(
        lhs,
        rhs,
        lhs <= rhs + tol,
        float(np.linalg.norm(w_full - w_c)),
        float(np.linalg.norm(w_full - w_mapped)),
    )


def random_coreset(g, m: int, seed: int = 0, pool=None):
    """Induced subgraph on ``m`` seeded random nodes (from ``pool`` if given).

    Returns ``(CondensedGraph, node indices)``; the subgraph is re-normalized
    with self-loops and carries the true labels of the chosen nodes.
    """
    from .graph import CondensedGraph, normalize_adjacency

    rng = np.random.default_rng(seed)
    candidates = np.arange(g.n) if pool is None or len(pool) < m else np.asarray(pool)
    nodes = np.sort(rng.choice(candidates, size=m, replace=False))
    sub = (g.adjacency[np.ix_(nodes, nodes)] > 0).astype(float)
    np.fill_diagonal(sub, 0.0)
    labels = None if g.labels is None else g.labels[nodes]
    return CondensedGraph(normalize_adjacency(sub, True), g.features[nodes], labels, normalized=True), nodes

