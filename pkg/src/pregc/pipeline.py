"""Post-training workflow shared by the CLI and the acceptance suite:
label transfer onto a condensed graph, the three evaluation arms and the
alternating fine-tuning loop."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError
from .evaluation import TaskSpec, evaluate, lre, propagated, random_coreset, train_head
from .graph import CondensedGraph, Graph
from .harmonize import discretize_plan, finetune_assignment, harmonize_labels
from .ot import OtConfig

ARMS = ("condensed", "whole", "random-coreset")


class Labeled(NamedTuple):
    graph: CondensedGraph
    covered: np.ndarray


def require_labels(g: Graph, task: TaskSpec) -> None:
    if task.kind == "link-prediction":
        return
    if g.labels is None:
        raise InvalidInputError(f"{task.kind} needs labels on the source graph")
    if task.kind == "node-regression" and g.label_kind == "class":
        raise InvalidInputError(
            f"node regression needs real-valued labels, got one-hot class labels with C={g.labels.shape[1]}"
        )
    if task.kind in ("node-classification", "node-clustering") and g.label_kind != "class":
        raise InvalidInputError(f"{task.kind} needs one-hot class labels, got real-valued labels")
    if task.kind != "node-clustering" and (g.splits is None or g.splits.train.size == 0):
        raise InvalidInputError(f"{task.kind} needs a non-empty train split")


def label_condensed(g: Graph, gc: CondensedGraph, assignment) -> Labeled:
    train = g.splits.train
    h = harmonize_labels(assignment, g.labels[train], train)
    return Labeled(gc.with_labels(h.labels), h.covered)


def _supervision_rows(g: Graph, task: TaskSpec):
    if task.kind == "node-clustering" or g.splits is None:
        return np.arange(g.n)
    return g.splits.train


def run_arms(g: Graph, gc: CondensedGraph, assignment, task, seed: int = 0, k: int = 2, epochs: int = 200) -> dict:
    """Train a head on each arm and score it on ``g``.

    Returns metric values keyed by arm, plus ``lre`` for class labels.
    """
    task = task if isinstance(task, TaskSpec) else TaskSpec(task)
    require_labels(g, task)
    out = {}
    m = gc.m

    if task.kind == "link-prediction":
        for arm, graph in (("condensed", gc), ("whole", g), ("random-coreset", random_coreset(g, m, seed)[0])):
            model = train_head(graph, task=task, k=k, epochs=epochs, seed=seed).model
            out[arm] = evaluate(model, g, task, seed)
        return out

    if task.kind == "node-clustering":
        # clustering is unsupervised on the source side: harmonize over every node
        h = harmonize_labels(assignment, g.labels, np.arange(g.n))
        labeled = Labeled(gc.with_labels(h.labels), h.covered)
    else:
        labeled = label_condensed(g, gc, assignment)
    rows = _supervision_rows(g, task)

    cond = train_head(labeled.graph, labeled.graph.labels, labeled.covered, task, k, epochs, seed=seed).model
    whole = train_head(g, g.labels, None, task, k, epochs, seed=seed, rows=rows).model
    coreset, nodes = random_coreset(g, m, seed, pool=rows)
    rand = train_head(coreset, coreset.labels, None, task, k, epochs, seed=seed).model
    out["condensed"] = evaluate(cond, g, task, seed)
    out["whole"] = evaluate(whole, g, task, seed)
    out["random-coreset"] = evaluate(rand, g, task, seed)
    if g.label_kind == "class":
        out["lre"] = lre(g, g.labels, labeled.graph, labeled.graph.labels)
        out["lre_random_coreset"] = lre(g, g.labels, coreset, coreset.labels)
    return out


class FinetuneTrace(NamedTuple):
    metrics: list  # entry 0 is pre-finetune, then one per round
    labels: np.ndarray
    assignment: np.ndarray


def _predictions(model, graph, task: TaskSpec) -> np.ndarray:
    out = model.predict(propagated(graph, model.steps_k))
    if task.kind == "node-classification":
        out = np.exp(out - out.max(axis=1, keepdims=True))
        out /= out.sum(axis=1, keepdims=True)
    return out


def finetune(
    g: Graph,
    gc: CondensedGraph,
    assignment,
    task="node-classification",
    tau_up: int = 10,
    decay: float = 0.9,
    epochs: int = 200,
    seed: int = 0,
    k: int = 2,
    ot: OtConfig | None = None,
) -> FinetuneTrace:
    """Alternate ``tau_up`` epochs of head training with assignment blending.

    The head keeps its weights and step size across rounds, so with
    ``decay = 1`` the final model equals a single ``epochs``-long run.
    """
    task = task if isinstance(task, TaskSpec) else TaskSpec(task)
    if task.kind not in ("node-classification", "node-regression"):
        raise InvalidInputError("fine-tuning supports node classification and regression")
    require_labels(g, task)
    if tau_up < 1:
        raise InvalidInputError("tau_up must be >= 1")
    m_cur = np.asarray(assignment, dtype=float).copy()
    labeled = label_condensed(g, gc, m_cur)

    # pre-finetune reference: the plain evaluate arm
    base = train_head(labeled.graph, labeled.graph.labels, labeled.covered, task, k, epochs, seed=seed).model
    metrics = [evaluate(base, g, task, seed)]
    if epochs == 0:
        return FinetuneTrace(metrics, labeled.graph.labels, m_cur)

    model = None
    done = 0
    while done < epochs:
        chunk = min(tau_up, epochs - done)
        model = train_head(
            labeled.graph, labeled.graph.labels, labeled.covered, task, k, chunk, seed=seed, init=model
        ).model
        done += chunk
        metrics.append(evaluate(model, g, task, seed))
        if done < epochs:
            m_cur = finetune_assignment(
                m_cur, _predictions(model, g, task), _predictions(model, labeled.graph, task), decay, ot
            )
            labeled = label_condensed(g, gc, m_cur)
    return FinetuneTrace(metrics, labeled.graph.labels, m_cur)


def hard_assignment(plan) -> np.ndarray:
    return discretize_plan(plan)
