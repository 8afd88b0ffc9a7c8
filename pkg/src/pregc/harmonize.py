"""Assignment matrices, label transfer, node significance and test-time
fine-tuning of the source-to-condensed assignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError
from .ot import OtConfig, TransportPlan, wasserstein_plan


@dataclass(frozen=True)
class SignificanceScores:
    scores: np.ndarray
    top_h: int


class HarmonizedLabels(NamedTuple):
    labels: np.ndarray
    covered: np.ndarray  # bool per condensed node; False rows carry no signal


def _coupling(plan) -> np.ndarray:
    return plan.coupling if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)


def discretize_plan(plan) -> np.ndarray:
    """Row-wise argmax one-hot; ties go to the lowest column."""
    p = _coupling(plan)
    out = np.zeros_like(p)
    out[np.arange(p.shape[0]), np.argmax(p, axis=1)] = 1.0
    return out


def harmonize_labels(assignment, y_tr, omega) -> HarmonizedLabels:
    """Average training labels over each condensed node's preimage.

    Works for soft assignments too, dividing by the column mass of the
    training rows. Condensed nodes that receive no training mass get a zero
    row and ``covered=False``.
    """
    m_full = np.asarray(assignment, dtype=float)
    omega = np.asarray(omega, dtype=int).ravel()
    y_tr = np.asarray(y_tr, dtype=float)
    if y_tr.ndim == 1:
        y_tr = y_tr[:, None]
    if omega.size == 0:
        raise InvalidInputError("omega must not be empty")
    if np.unique(omega).size != omega.size:
        raise InvalidInputError("omega indices must be distinct")
    if omega.min() < 0 or omega.max() >= m_full.shape[0]:
        raise InvalidInputError("omega indices out of range")
    if y_tr.shape[0] != omega.size:
        raise InvalidInputError("y_tr needs one row per index in omega")
    m_omega = m_full[omega]
    mass = m_omega.sum(axis=0)
    covered = mass > 0
    agg = m_omega.T @ y_tr
    labels = np.zeros_like(agg)
    labels[covered] = agg[covered] / mass[covered, None]
    return HarmonizedLabels(labels, covered)


def aggregate(assignment, values) -> np.ndarray:
    """``D^-1 M^T V`` over all source rows (zero rows where a column is empty)."""
    m_full = np.asarray(assignment, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    mass = m_full.sum(axis=0)
    inv = np.divide(1.0, mass, out=np.zeros_like(mass), where=mass > 0)
    return inv[:, None] * (m_full.T @ values)


def default_top_h(n: int, m: int) -> int:
    return int(np.ceil(n / m))


def node_significance(plan, h: int | None = None) -> SignificanceScores:
    """Row sums of the plan after keeping the ``h`` largest entries per column."""
    p = _coupling(plan)
    n, m = p.shape
    h = default_top_h(n, m) if h is None else int(h)
    if not 1 <= h <= n:
        raise InvalidInputError(f"h must satisfy 1 <= h <= N (got {h}, N={n})")
    mask = np.zeros_like(p, dtype=bool)
    # stable sort on -p keeps lower row indices first among ties
    order = np.argsort(-p, axis=0, kind="stable")[:h]
    mask[order, np.arange(m)[None, :]] = True
    return SignificanceScores(np.where(mask, p, 0.0).sum(axis=1), h)


def select_training_set(scores, budget: int) -> np.ndarray:
    s = scores.scores if isinstance(scores, SignificanceScores) else np.asarray(scores, dtype=float)
    if not 0 <= budget <= s.size:
        raise InvalidInputError(f"budget {budget} exceeds node count {s.size}")
    return np.sort(np.argsort(-s, kind="stable")[:budget])


def update_assignment(y_hat, y_hat_c, cfg: OtConfig | None = None) -> np.ndarray:
    plan, _ = wasserstein_plan(y_hat, y_hat_c, cfg)
    return discretize_plan(plan)


def finetune_assignment(assignment, y_hat, y_hat_c, decay: float, cfg: OtConfig | None = None) -> np.ndarray:
    """Blend the assignment toward the prediction-space OT assignment.

    Returns ``decay * M + (1 - decay) * M_up`` where ``M_up`` discretizes the
    Wasserstein plan between predictions on the source and condensed graphs.
    """
    if not 0.0 <= decay <= 1.0:
        raise InvalidInputError("decay must lie in [0, 1]")
    m = np.asarray(assignment, dtype=float)
    if decay == 1.0:
        return m.copy()
    m_up = update_assignment(y_hat, y_hat_c, cfg)
    if decay == 0.0:
        return m_up
    return decay * m + (1.0 - decay) * m_up


def provenance(assignment, plan=None) -> list:
    """Per condensed node: the source nodes assigned to it and their plan masses."""
    hard = discretize_plan(assignment)
    p = None if plan is None else _coupling(plan)
    rows = []
    for j in range(hard.shape[1]):
        sources = np.flatnonzero(hard[:, j] == 1.0)
        masses = p[sources, j] if p is not None else np.ones(sources.size)
        rows.append((j, sources, masses))
    return rows
