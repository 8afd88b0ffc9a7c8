"""Graph containers, adjacency normalization and synthetic SBM graphs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self, n: int) -> None:
        seen: set[int] = set()
        for name in ("train", "val", "test"):
            idx = getattr(self, name)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise InvalidInputError(f"{name} split has indices outside [0, {n})")
            as_set = set(idx.tolist())
            if len(as_set) != idx.size:
                raise InvalidInputError(f"{name} split contains duplicates")
            if seen & as_set:
                raise InvalidInputError(f"{name} split overlaps another split")
            seen |= as_set


@dataclass(frozen=True)
class Graph:
    """Attributed graph with a symmetric-normalized adjacency.

    ``labels`` is an N x C target matrix: one-hot rows for classification,
    a single real column for regression.
    """

    adjacency: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    splits: Splits | None = None
    label_kind: str | None = None  # "class" or "real"

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=float)
        x = np.asarray(self.features, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "features", x)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInputError("adjacency must be square")
        if not np.allclose(a, a.T, atol=1e-10, rtol=0.0):
            raise InvalidInputError("adjacency must be symmetric")
        if x.shape[0] != a.shape[0]:
            raise InvalidInputError("feature rows must equal node count")
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=float)
            if y.ndim == 1:
                y = y[:, None]
            if y.shape[0] != a.shape[0]:
                raise InvalidInputError("label rows must equal node count")
            object.__setattr__(self, "labels", y)
            if self.label_kind is None:
                kind = "class" if _looks_one_hot(y) else "real"
                object.__setattr__(self, "label_kind", kind)
        if self.splits is not None:
            self.splits.validate(a.shape[0])

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def operator(self) -> np.ndarray:
        """Propagation matrix used by diffusion and SGC (already normalized)."""
        return self.adjacency

    def edges(self) -> np.ndarray:
        """Undirected edge list (i < j) recovered from the adjacency support."""
        return np.argwhere(np.triu(self.adjacency, 1) > 0)

    def without_labels(self) -> "Graph":
        return Graph(self.adjacency, self.features)


@dataclass(frozen=True)
class CondensedGraph:
    """Small synthetic graph.

    ``adjacency`` is either the raw weighted adjacency in [0, 1]
    (``normalized=False``) or an already symmetric-normalized matrix
    (``normalized=True``, the thresholded export). ``operator`` always returns
    the normalized propagation matrix.
    """

    adjacency: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    normalized: bool = False
    _operator: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=float)
        x = np.asarray(self.features, dtype=float)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "features", x)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInputError("adjacency must be square")
        if x.shape[0] != a.shape[0]:
            raise InvalidInputError("feature rows must equal node count")
        if not np.allclose(a, a.T, atol=1e-12, rtol=0.0):
            raise InvalidInputError("condensed adjacency must be symmetric")
        if self.normalized:
            op = a
        else:
            op = normalize_adjacency(a, add_self_loops=False)
        object.__setattr__(self, "_operator", op)

    @property
    def m(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n(self) -> int:
        return self.m

    @property
    def operator(self) -> np.ndarray:
        return self._operator

    def with_labels(self, labels: np.ndarray) -> "CondensedGraph":
        return CondensedGraph(self.adjacency, self.features, labels, self.normalized)


def _looks_one_hot(y: np.ndarray) -> bool:
    if y.shape[1] < 2:
        return False
    return bool(np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1))


def normalize_adjacency(raw, add_self_loops: bool = True) -> np.ndarray:
    """Return D^-1/2 (raw + sI) D^-1/2 with s = 1 when ``add_self_loops``."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise InvalidInputError("adjacency must be square")
    if not np.all(np.isfinite(raw)):
        raise InvalidInputError("adjacency contains non-finite entries")
    if np.any(raw < 0):
        raise InvalidInputError("adjacency must be non-negative")
    if not np.allclose(raw, raw.T, atol=1e-10, rtol=0.0):
        raise InvalidInputError("adjacency must be symmetric")
    a = raw + np.eye(raw.shape[0]) if add_self_loops else raw
    deg = a.sum(axis=1)
    isolated = np.flatnonzero(deg <= 0)
    if isolated.size:
        raise InvalidInputError(f"node {int(isolated[0])} has zero degree")
    inv_sqrt = 1.0 / np.sqrt(deg)
    out = a * inv_sqrt[:, None] * inv_sqrt[None, :]
    return (out + out.T) / 2.0


def laplacian(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError("laplacian expects a square matrix")
    return np.eye(a.shape[0]) - a


def stratified_splits(
    block_of: np.ndarray,
    train_frac: float,
    val_frac: float,
    rng: np.random.Generator,
) -> Splits:
    train, val, test = [], [], []
    for b in np.unique(block_of):
        members = rng.permutation(np.flatnonzero(block_of == b))
        n_tr = max(1, int(round(train_frac * members.size)))
        n_va = int(round(val_frac * members.size))
        train.append(members[:n_tr])
        val.append(members[n_tr:n_tr + n_va])
        test.append(members[n_tr + n_va:])
    return Splits(
        np.sort(np.concatenate(train)),
        np.sort(np.concatenate(val)),
        np.sort(np.concatenate(test)),
    )


def sbm_generate(
    block_sizes,
    p_in: float,
    p_out: float,
    feature_centers,
    noise_sigma: float,
    seed: int = 0,
    train_frac: float = 0.3,
    val_frac: float = 0.2,
) -> Graph:
    """Stochastic block model with Gaussian node features around block centers.

    Labels are one-hot block memberships; splits are stratified per block.
    The adjacency is normalized with self-loops.
    """
    sizes = [int(s) for s in block_sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise InvalidInputError("every block must have at least one node")
    if not 0.0 <= p_out < p_in <= 1.0 and not (p_in == p_out == 0.0):
        raise InvalidInputError("require 0 <= p_out < p_in <= 1")
    centers = np.atleast_2d(np.asarray(feature_centers, dtype=float))
    if centers.shape[0] != len(sizes):
        raise InvalidInputError("need exactly one feature center per block")
    if noise_sigma < 0:
        raise InvalidInputError("noise_sigma must be non-negative")

    rng = np.random.default_rng(seed)
    block_of = np.repeat(np.arange(len(sizes)), sizes)
    n = block_of.size
    probs = np.where(block_of[:, None] == block_of[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probs, 1).astype(float)
    raw = upper + upper.T

    x = centers[block_of] + noise_sigma * rng.standard_normal((n, centers.shape[1]))
    y = np.eye(len(sizes))[block_of]
    splits = stratified_splits(block_of, train_frac, val_frac, rng)
    return Graph(normalize_adjacency(raw, add_self_loops=True), x, y, splits, "class")


def two_block_centers(dim: int, separation: float) -> np.ndarray:
    """Two centers at +/- separation/2 along the first axis."""
    c = np.zeros((2, dim))
    c[0, 0] = separation / 2.0
    c[1, 0] = -separation / 2.0
    return c
