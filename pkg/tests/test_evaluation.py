import numpy as np
import pytest
from hypothesis import given, strategies as st

from pregc.errors import InvalidInputError
from pregc.evaluation import (
    SgcModel,
    TaskSpec,
    auc_score,
    avg_nn_distance,
    evaluate,
    lre,
    prop1_bound_check,
    propagated,
    random_coreset,
    sgc_closed_form,
    train_head,
)
from pregc.graph import CondensedGraph, Graph, Splits, normalize_adjacency, sbm_generate, two_block_centers
from pregc.harmonize import aggregate, discretize_plan, harmonize_labels

from conftest import random_graph


def _as_condensed(g):
    return CondensedGraph(g.adjacency, g.features, g.labels, normalized=True)


def _permuted(g, perm):
    inv = np.argsort(perm)
    splits = Splits(*(np.sort(inv[getattr(g.splits, k)]) for k in ("train", "val", "test")))
    return Graph(g.adjacency[np.ix_(perm, perm)], g.features[perm], g.labels[perm], splits, g.label_kind)


def test_task_spec():
    assert TaskSpec("nc").metric == "accuracy"
    assert TaskSpec("link-prediction").metric == "AUC"
    with pytest.raises(InvalidInputError):
        TaskSpec("node-regression", "accuracy")
    with pytest.raises(InvalidInputError):
        TaskSpec("graph-classification")


def test_sgc_closed_form_examples():
    assert np.allclose(sgc_closed_form([[1.0]], [[2.0]], [[4.0]], 1, 0).weights, [[2.0]])
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((4, 4)))
    y = np.random.default_rng(1).standard_normal((4, 2))
    assert np.allclose(sgc_closed_form(np.eye(4), q, y, 3, 0).weights, q.T @ y)
    with pytest.raises(InvalidInputError):
        sgc_closed_form(np.eye(2), np.zeros((2, 2)), np.ones((2, 1)), 1)


def test_sgc_closed_form_is_optimal():
    g = random_graph(10, f=3, seed=3)
    y = np.random.default_rng(4).standard_normal((10, 2))
    w = sgc_closed_form(g.adjacency, g.features, y, 2, 0).weights
    z = propagated(g, 2)
    best = np.linalg.norm(z @ w - y)
    rng = np.random.default_rng(5)
    assert all(np.linalg.norm(z @ (w + 0.01 * rng.standard_normal(w.shape)) - y) >= best for _ in range(100))
    ridge = sgc_closed_form(g.adjacency, g.features, y, 2, 1e-6).weights
    assert np.allclose(ridge, w, atol=1e-4)


def test_train_head_nc_separable(sbm):
    model, losses = train_head(sbm, sbm.labels, None, "nc", rows=sbm.splits.train)
    z = propagated(sbm, 2)[sbm.splits.train]
    acc = np.mean(np.argmax(model.predict(z), 1) == np.argmax(sbm.labels[sbm.splits.train], 1))
    assert acc >= 0.99
    assert np.all(np.diff(losses) <= 0)


def test_train_head_nr_recovers_linear_target(sbm):
    y = sbm.features[:, :1]
    g = Graph(np.eye(sbm.n), sbm.features, y, sbm.splits)
    model, losses = train_head(g, y, None, "nr", k=0, epochs=500, rows=g.splits.train)
    pred = model.predict(g.features[g.splits.train])[:, 0]
    tr = y[g.splits.train, 0]
    r2 = 1 - np.sum((pred - tr) ** 2) / np.sum((tr - tr.mean()) ** 2)
    assert r2 >= 0.99 and np.all(np.diff(losses) <= 0)


@pytest.mark.parametrize("seed", range(5))
def test_train_head_lp_beats_chance_on_held_out_edges(seed):
    g = sbm_generate([25, 25], 0.3, 0.02, two_block_centers(4, 3.0), 1.0, seed)
    raw = (g.adjacency > 0).astype(float)
    np.fill_diagonal(raw, 0)
    edges = np.argwhere(np.triu(raw, 1))
    rng = np.random.default_rng(seed)
    held = edges[rng.choice(len(edges), size=len(edges) // 5, replace=False)]
    kept = raw.copy()
    kept[held[:, 0], held[:, 1]] = kept[held[:, 1], held[:, 0]] = 0
    train_g = Graph(normalize_adjacency(kept, True), g.features)
    model, losses = train_head(train_g, task="lp", seed=seed)
    assert np.all(np.diff(losses) <= 0)
    h = propagated(train_g, 2) @ model.weights
    non = np.argwhere(np.triu(1 - raw - np.eye(g.n), 1) > 0)
    neg = non[rng.choice(len(non), size=len(held), replace=False)]
    score = lambda pairs: np.sum(h[pairs[:, 0]] * h[pairs[:, 1]], 1)
    assert auc_score(score(held), score(neg)) > 0.5


def test_train_head_masking_and_resume(sbm):
    with pytest.raises(InvalidInputError):
        train_head(sbm, sbm.labels, np.zeros(sbm.n, bool), "nc")
    full = train_head(sbm, sbm.labels, None, "nc", epochs=40, rows=sbm.splits.train).model
    half = train_head(sbm, sbm.labels, None, "nc", epochs=20, rows=sbm.splits.train).model
    resumed = train_head(sbm, sbm.labels, None, "nc", epochs=20, rows=sbm.splits.train, init=half).model
    assert np.array_equal(full.weights, resumed.weights)


def test_evaluate_examples():
    y = np.eye(3)[np.arange(9) % 3]
    splits = Splits(np.arange(3), np.array([], int), np.arange(3, 9))
    g = Graph(np.eye(9), y, y, splits)
    assert evaluate(SgcModel(np.eye(3), 0), g, "nc") == 1.0
    yr = np.random.default_rng(0).standard_normal((9, 1))
    gr = Graph(np.eye(9), y, yr, splits)
    const = SgcModel(np.zeros((3, 1)), 0, bias=np.array([yr[:3].mean()]))
    assert evaluate(const, gr, "nr") <= 0.0
    with pytest.raises(InvalidInputError):
        evaluate(SgcModel(np.eye(3), 0), gr, TaskSpec("nc", "R2"))


def test_random_scorer_auc_is_chance():
    rng = np.random.default_rng(0)
    n1 = n2 = 20_000
    se = np.sqrt((n1 + n2 + 1) / (12 * n1 * n2))
    assert abs(auc_score(rng.random(n1), rng.random(n2)) - 0.5) <= 3 * se


@pytest.mark.parametrize("task", ["nc", "nr", "lp", "nclu"])
def test_evaluate_permutation_invariant(sbm, task):
    g = sbm
    if task == "nr":
        g = Graph(sbm.adjacency, sbm.features, sbm.features[:, :1] + 0.1, sbm.splits)
    kind = TaskSpec(task)
    model = train_head(g, g.labels, None, kind, rows=g.splits.train, epochs=50).model
    perm = np.random.default_rng(1).permutation(g.n)
    assert evaluate(model, _permuted(g, perm), kind) == pytest.approx(evaluate(model, g, kind), abs=1e-12)


def test_lre_examples(sbm):
    for k in range(6):
        assert lre(sbm, sbm.labels, _as_condensed(sbm), sbm.labels, k) == 0.0
    cs, nodes = random_coreset(sbm, 6, 0)
    yp, ycp = np.linalg.pinv(sbm.labels), np.linalg.pinv(cs.labels)
    expected = np.linalg.norm(yp @ sbm.features - ycp @ cs.features)
    assert lre(sbm, sbm.labels, cs, cs.labels, 0) == pytest.approx(expected, rel=1e-9)


def test_avg_nn_examples():
    assert avg_nn_distance(np.array([[0.0, 0.0], [3.0, 0.0]]), [0, 1]) == 3.0
    assert avg_nn_distance(np.ones((3, 2)), [0, 1, 2]) == 0.0
    with pytest.raises(InvalidInputError):
        avg_nn_distance(np.zeros((3, 2)), [1])


@given(st.integers(0, 999), st.floats(-5, 5), st.floats(0.1, 10))
def test_avg_nn_translation_and_scale(seed, shift, scale):
    z = np.random.default_rng(seed).standard_normal((8, 3))
    sel = [0, 2, 3, 5, 7]
    base = avg_nn_distance(z, sel)
    assert avg_nn_distance(z + shift, sel) == pytest.approx(base, rel=1e-9)
    assert avg_nn_distance(scale * z, sel) == pytest.approx(scale * base, rel=1e-9)


def _bound_instance(seed, k):
    rng = np.random.default_rng(seed)
    n, m = 8, 4
    labels = np.eye(2)[rng.integers(0, 2, n)]
    g = random_graph(n, f=3, seed=seed, labels=labels)
    s = rng.random((m, m))
    gc = CondensedGraph((s + s.T) / 2, rng.standard_normal((m, 3)))
    mapping = discretize_plan(rng.random((n, m)))
    yc = harmonize_labels(mapping, labels, np.arange(n)).labels
    return g, gc, labels, yc, mapping


def test_prop1_identity_case():
    g = random_graph(6, f=3, seed=0, labels=np.eye(2)[[0, 1, 0, 1, 1, 0]])
    res = prop1_bound_check(g, _as_condensed(g), g.labels, g.labels, 2, np.eye(6))
    assert res.lhs == 0.0 and res.rhs == 0.0 and res.holds


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_prop1_bound_holds(seed, k):
    res = prop1_bound_check(*_bound_instance(seed, k)[:4], k, _bound_instance(seed, k)[4])
    assert res.holds
    assert res.lhs_full <= res.rhs + res.alignment_gap + 1e-9


def test_prop1_fitting_term_monotone():
    g, gc, y, _, mapping = _bound_instance(3, 2)
    base_y = aggregate(mapping, y)
    zc = propagated(gc, 2)
    null = np.eye(4) - zc @ np.linalg.pinv(zc)
    direction = null @ np.random.default_rng(0).standard_normal((4, 2))
    prev = prop1_bound_check(g, gc, y, base_y, 2, mapping)
    for t in (0.1, 0.5, 1.0):
        cur = prop1_bound_check(g, gc, y, base_y + t * direction, 2, mapping)
        assert cur.lhs == pytest.approx(prev.lhs, abs=1e-9)
        assert cur.rhs > prev.rhs
        prev = cur


def test_random_coreset_is_induced_subgraph(sbm):
    cs, nodes = random_coreset(sbm, 6, 3, pool=sbm.splits.train)
    assert set(nodes) <= set(sbm.splits.train) and cs.m == 6
    assert np.array_equal(cs.labels, sbm.labels[nodes])
    assert np.allclose(cs.operator, cs.operator.T)
