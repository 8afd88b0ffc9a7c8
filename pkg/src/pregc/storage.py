"""Dataset ingestion and checkpoint files.

Every number is written with 17 significant digits, so reading a file back
reproduces the exact float64 values.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError
from .graph import CondensedGraph, Graph, Splits, normalize_adjacency

FLOAT_FMT = ".17g"
SPLIT_TOKENS = ("train", "val", "test")


def fmt(v: float) -> str:
    return format(float(v), FLOAT_FMT)


def _read_lines(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read file ({exc.strerror})", str(path)) from exc


def _data_lines(path):
    """Yield ``(line_number, stripped_text)`` skipping blanks and ``#`` comments."""
    for no, raw in enumerate(_read_lines(path), start=1):
        text = raw.strip()
        if text and not text.startswith("#"):
            yield no, text


def _int(token: str, path, line) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer node id, got {token!r}", str(path), line) from None


def read_features(path) -> np.ndarray:
    rows, width = [], None
    for no, text in _data_lines(path):
        cells = [c.strip() for c in text.split(",")]
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise ParseError("non-numeric feature value", str(path), no) from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"ragged row: {len(vals)} values, expected {width}", str(path), no)
        if not all(np.isfinite(vals)):
            raise ParseError("non-finite feature value", str(path), no)
        rows.append(vals)
    if not rows:
        raise ParseError("no feature rows", str(path))
    return np.array(rows, dtype=float)


def read_edges(path, n: int) -> np.ndarray:
    """Symmetric 0/1 adjacency (no diagonal) from ``src dst`` lines."""
    raw = np.zeros((n, n))
    max_id = -1
    for no, text in _data_lines(path):
        parts = text.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'src dst', got {text!r}", str(path), no)
        i, j = (_int(p, path, no) for p in parts)
        for v in (i, j):
            if not 0 <= v < n:
                raise ParseError(f"node id {v} out of range [0, {n})", str(path), no)
        max_id = max(max_id, i, j)
        if i != j:
            raw[i, j] = raw[j, i] = 1.0
    if max_id + 1 != n:
        raise ParseError(
            f"feature file has {n} rows but the largest node id is {max_id}", str(path)
        )
    return raw


def _keyed_rows(path, n: int):
    """``node_id,value`` rows; an optional header whose first cell is not numeric is skipped."""
    out = {}
    for k, (no, text) in enumerate(_data_lines(path)):
        cells = [c.strip() for c in text.split(",")]
        if k == 0 and cells[0].isidentifier():
            continue
        if len(cells) != 2:
            raise ParseError(f"expected 'node_id,value', got {text!r}", str(path), no)
        node = _int(cells[0], path, no)
        if not 0 <= node < n:
            raise ParseError(f"node id {node} out of range [0, {n})", str(path), no)
        if node in out:
            raise ParseError(f"node {node} listed twice", str(path), no)
        out[node] = (cells[1], no)
    return out


def read_labels(path, n: int) -> np.ndarray:
    """One-hot matrix for integer class labels, one real column otherwise."""
    rows = _keyed_rows(path, n)
    missing = n - len(rows)
    if missing:
        raise ParseError(f"{missing} node(s) have no label", str(path))
    tokens = [rows[i][0] for i in range(n)]
    try:
        classes = [int(t) for t in tokens]
    except ValueError:
        classes = None
    if classes is not None:
        if min(classes) < 0:
            bad = next(i for i in range(n) if classes[i] < 0)
            raise ParseError("class index must be non-negative", str(path), rows[bad][1])
        return np.eye(max(classes) + 1)[classes]
    vals = np.empty(n)
    for i in range(n):
        try:
            vals[i] = float(tokens[i])
        except ValueError:
            raise ParseError(f"label {tokens[i]!r} is neither a class index nor a real", str(path), rows[i][1]) from None
    return vals[:, None]


def read_splits(path, n: int) -> Splits:
    groups = {t: [] for t in SPLIT_TOKENS}
    for node, (token, no) in sorted(_keyed_rows(path, n).items()):
        if token not in groups:
            raise ParseError(f"unknown split {token!r} (expected train, val or test)", str(path), no)
        groups[token].append(node)
    return Splits(*(np.array(groups[t], dtype=int) for t in SPLIT_TOKENS))


def load_graph(edges_path, features_path, labels_path=None, splits_path=None, self_loops: bool = True) -> Graph:
    x = read_features(features_path)
    n = x.shape[0]
    raw = read_edges(edges_path, n)
    labels = read_labels(labels_path, n) if labels_path else None
    splits = read_splits(splits_path, n) if splits_path else None
    adjacency = normalize_adjacency(raw, add_self_loops=self_loops)
    kind = None
    if labels is not None:
        kind = "class" if labels.shape[1] > 1 else "real"
    return Graph(adjacency, x, labels, splits, kind)


def write_matrix(path, a) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in a:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_matrix(path) -> np.ndarray:
    return read_features(path)


def write_dataset(directory, g: Graph) -> dict:
    """Write ``g`` in the ``load_graph`` formats; returns the file paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {k: str(d / name) for k, name in (
        ("edges", "edges.txt"), ("features", "features.csv"), ("labels", "labels.csv"), ("splits", "splits.csv"))}
    raw = (g.adjacency > 0).astype(int)
    np.fill_diagonal(raw, 0)
    with open(paths["edges"], "w", encoding="utf-8") as fh:
        pairs = np.argwhere(np.triu(raw, 1))
        for i, j in pairs:
            fh.write(f"{i} {j}\n")
        if pairs.size == 0 or pairs.max() < g.n - 1:
            # a self-pair keeps the largest id visible when trailing nodes are isolated
            fh.write(f"{g.n - 1} {g.n - 1}\n")
    write_matrix(paths["features"], g.features)
    if g.labels is not None:
        with open(paths["labels"], "w", encoding="utf-8") as fh:
            fh.write("node_id,label\n")
            for i, row in enumerate(g.labels):
                if g.label_kind == "class":
                    value = str(int(np.argmax(row)))
                else:
                    value = fmt(row[0])
                    if value.lstrip("-").isdigit():
                        value += ".0"  # keep integral reals from reading back as class ids
                fh.write(f"{i},{value}\n")
    else:
        del paths["labels"]
    if g.splits is not None:
        with open(paths["splits"], "w", encoding="utf-8") as fh:
            fh.write("node_id,split\n")
            rows = [(int(i), t) for t in SPLIT_TOKENS for i in getattr(g.splits, t)]
            for i, t in sorted(rows):
                fh.write(f"{i},{t}\n")
    else:
        del paths["splits"]
    return paths


@dataclass(frozen=True)
class Checkpoint:
    features: np.ndarray
    adj_logits: np.ndarray
    adjacency_export: np.ndarray
    plan: np.ndarray
    history: np.ndarray  # columns: epoch, delta_t, cost, plan, total
    config_text: str

    @property
    def graph(self) -> CondensedGraph:
        return CondensedGraph(self.adjacency_export, self.features, normalized=True)


HISTORY_HEADER = "epoch,delta_t,cost_term,plan_term,total"


def write_checkpoint(directory, result, config_text: str) -> Path:
    """Persist a condensation result (see :class:`Checkpoint` for the layout)."""
    from .harmonize import discretize_plan, provenance

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "features.csv", result.params.features)
    write_matrix(d / "adj_logits.csv", result.params.adj_logits)
    write_matrix(d / "adjacency_export.csv", result.graph.adjacency)
    coupling = result.plan.coupling
    with open(d / "plan.csv", "w", encoding="utf-8") as fh:
        fh.write("row,col,mass\n")
        for i in range(coupling.shape[0]):
            for j in range(coupling.shape[1]):
                fh.write(f"{i},{j},{fmt(coupling[i, j])}\n")
    with open(d / "loss_history.csv", "w", encoding="utf-8") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for draw, loss in zip(result.draws, result.history):
            fh.write(f"{draw.epoch},{fmt(draw.delta_t)},{fmt(loss.cost_term)},{fmt(loss.plan_term)},{fmt(loss.total)}\n")
    with open(d / "provenance.csv", "w", encoding="utf-8") as fh:
        fh.write("condensed_node,source_nodes,masses\n")
        for j, sources, masses in provenance(discretize_plan(coupling), coupling):
            fh.write(f"{j},{' '.join(map(str, sources))},{' '.join(fmt(m) for m in masses)}\n")
    (d / "config.ini").write_text(config_text, encoding="utf-8")
    return d


def _read_table(path, header: str) -> list:
    lines = _read_lines(path)
    if not lines or lines[0].strip() != header:
        raise ParseError(f"expected header {header!r}", str(path), 1)
    return list(csv.reader(lines[1:]))


def read_checkpoint(directory) -> Checkpoint:
    d = Path(directory)
    if not d.is_dir():
        raise InvalidInputError(f"checkpoint directory {os.fspath(d)!r} does not exist")
    features = read_matrix(d / "features.csv")
    logits = read_matrix(d / "adj_logits.csv")
    export = read_matrix(d / "adjacency_export.csv")
    rows = _read_table(d / "plan.csv", "row,col,mass")
    n = 1 + max(int(r[0]) for r in rows)
    plan = np.zeros((n, features.shape[0]))
    for r in rows:
        plan[int(r[0]), int(r[1])] = float(r[2])
    hist_rows = _read_table(d / "loss_history.csv", HISTORY_HEADER)
    history = np.array([[float(v) for v in r] for r in hist_rows]).reshape(-1, 5)
    config_text = (d / "config.ini").read_text(encoding="utf-8")
    return Checkpoint(features, logits, export, plan, history, config_text)
