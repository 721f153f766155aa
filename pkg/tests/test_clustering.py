import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import as_sets, small_graphs
from oracles import preference_table
from peco.clustering import (ClusterAssignment, cluster_scores, dbscan, preference, read_assignment,
                             write_assignment)
from peco.graph import InteractionGraph
from peco.similarity import pairwise_similarity

sklearn_cluster = pytest.importorskip("sklearn.cluster")


def sklearn_partition(sim, eps, min_pts):
    n = sim.n
    dist = np.full((n, n), 10.0)  # absent pairs are never neighbours
    np.fill_diagonal(dist, 0.0)
    coo = sim.matrix.tocoo()
    dist[coo.row, coo.col] = 1.0 - coo.data
    labels = sklearn_cluster.DBSCAN(eps=eps, min_samples=min_pts, metric="precomputed").fit(dist).labels_
    groups = {}
    for node, lab in enumerate(labels):
        groups.setdefault(("n", node) if lab < 0 else ("c", lab), set()).add(node)
    return frozenset(frozenset(s) for s in groups.values())


def test_two_cliques():
    g = InteractionGraph.from_sets([[0, 1]] * 4 + [[2, 3]] * 4, num_items=4)
    ca = dbscan(pairwise_similarity(g, "users"), 0.5, 2)
    assert ca.partition() == {frozenset(range(4)), frozenset(range(4, 8))}
    assert ca.sizes.tolist() == [4, 4]


def test_tight_eps_gives_singletons(t1):
    ca = dbscan(pairwise_similarity(t1, "users"), 0.5, 2)
    assert ca.n_clusters == 3


def test_t1_chain(t1):
    ca = dbscan(pairwise_similarity(t1, "users"), 0.7, 1)
    assert ca.labels.tolist() == [0, 0, 0]


def test_rejects_bad_parameters(t1):
    sim = pairwise_similarity(t1, "users")
    with pytest.raises(ValueError):
        dbscan(sim, 0.0, 2)
    with pytest.raises(ValueError):
        dbscan(sim, 0.5, 0)


@given(small_graphs(max_users=25, max_items=10, min_users=2), st.floats(0.05, 1.0), st.integers(1, 5),
       st.sampled_from(["users", "items"]))
@settings(max_examples=120, deadline=None)
def test_matches_sklearn(g, eps, min_pts, side):
    sim = pairwise_similarity(g, side)
    ca = dbscan(sim, eps, min_pts)
    assert ca.partition() == sklearn_partition(sim, eps, min_pts)
    assert ca.sizes.sum() == sim.n and ca.sizes.min() >= 1


@given(small_graphs(max_users=20, max_items=8, min_users=2), st.floats(0.1, 1.0), st.integers(1, 4), st.data())
@settings(max_examples=60, deadline=None)
def test_partition_stable_under_relabel(g, eps, min_pts, data):
    """Core/noise structure is order free; border ties can move, so compare core clusters."""
    perm = np.array(data.draw(st.permutations(range(g.num_users))))
    rows = as_sets(g)
    h = InteractionGraph.from_sets([sorted(rows[p]) for p in perm], g.num_items)
    a = dbscan(pairwise_similarity(g, "users"), eps, min_pts)
    b = dbscan(pairwise_similarity(h, "users"), eps, min_pts)
    sim = pairwise_similarity(g, "users")
    A = sim.matrix.copy()
    A.data = (1 - A.data <= eps).astype(float)
    A.eliminate_zeros()
    core = np.diff(A.indptr) + 1 >= min_pts
    mapped = np.empty_like(b.labels)
    mapped[perm] = b.labels
    ca = {frozenset(np.flatnonzero((a.labels == c) & core).tolist()) for c in range(a.n_clusters)} - {frozenset()}
    cb = {frozenset(np.flatnonzero((mapped == c) & core).tolist()) for c in range(b.n_clusters)} - {frozenset()}
    assert ca == cb
    if not (~core & (A @ core.astype(float) > 1)).any():
        # no border point touches two clusters: the full partition must agree
        assert ClusterAssignment(mapped).partition() == a.partition()


def _components(sim):
    parent = list(range(sim.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b, _ in sim.pairs():
        parent[find(a)] = find(b)
    groups = {}
    for x in range(sim.n):
        groups.setdefault(find(x), set()).add(x)
    return frozenset(frozenset(s) for s in groups.values())


@given(small_graphs(max_users=20, max_items=10))
@settings(max_examples=60, deadline=None)
def test_eps_one_gives_components(g):
    sim = pairwise_similarity(g, "users")
    for eps in (1.0, 2.0):
        assert dbscan(sim, eps, 1).partition() == _components(sim)


def test_assignment_relabels_canonically():
    ca = ClusterAssignment(np.array([7, 3, 7, 9]))
    assert ca.labels.tolist() == [0, 1, 0, 2]
    assert ca.members(0).tolist() == [0, 2]


def test_assignment_tsv_roundtrip(tmp_path):
    ca = ClusterAssignment(np.array([0, 1, 0, 2, 2]), "items")
    write_assignment(ca, tmp_path / "c.tsv")
    assert (tmp_path / "c.tsv").read_text().splitlines()[1] == "1\t1"
    assert read_assignment(tmp_path / "c.tsv", "items").partition() == ca.partition()


def test_t1_cluster_scores(t1, t1_clusters):
    e = cluster_scores(t1, *t1_clusters)
    assert e.toarray().tolist() == [[3, 1], [0, 2]]
    assert e.total == 6 == t1.num_edges
    assert e.to_csv() == "user_cluster,item_cluster,count\n0,0,3\n0,1,1\n1,1,2\n"


def test_single_cluster_scores(t1):
    e = cluster_scores(t1, ClusterAssignment(np.zeros(3, int)), ClusterAssignment(np.zeros(4, int)))
    assert e.toarray().tolist() == [[6]]


def test_cluster_scores_dimension_mismatch(t1):
    with pytest.raises(ValueError, match="do not match"):
        cluster_scores(t1, ClusterAssignment(np.zeros(2, int)), ClusterAssignment(np.zeros(4, int)))


@given(small_graphs(max_users=15, max_items=15), st.data())
@settings(max_examples=80, deadline=None)
def test_score_total_is_edge_count(g, data):
    lu = data.draw(st.lists(st.integers(0, 4), min_size=g.num_users, max_size=g.num_users))
    li = data.draw(st.lists(st.integers(0, 4), min_size=g.num_items, max_size=g.num_items))
    e = cluster_scores(g, ClusterAssignment(np.array(lu)), ClusterAssignment(np.array(li)))
    assert e.total == g.num_edges
    assert (e.toarray() >= 0).all()


def test_t1_preference(t1, t1_clusters):
    cu, ci = t1_clusters
    q = preference(cluster_scores(t1, cu, ci), ci, t1.degrees("items"))
    np.testing.assert_allclose(q.weights(0), [0.25, 0.5, 1 / 6, 1 / 12], rtol=0, atol=1e-15)
    np.testing.assert_allclose(q.for_user(1), q.for_user(0), rtol=0, atol=0)
    np.testing.assert_allclose(q.weights(1), [0, 0, 2 / 3, 1 / 3], atol=1e-15)


def test_singleton_preference_is_own_items_by_degree(t1):
    cu = ClusterAssignment(np.arange(3))
    ci = ClusterAssignment(np.arange(4))
    q = preference(cluster_scores(t1, cu, ci), ci, t1.degrees("items"))
    deg = t1.degrees("items")
    for u in range(3):
        w = np.zeros(4)
        w[t1.items_of(u)] = deg[t1.items_of(u)]
        np.testing.assert_allclose(q.for_user(u), w / w.sum(), atol=1e-15)


def test_zero_edge_cluster_is_uniform():
    g = InteractionGraph.from_sets([[0, 1], []], num_items=3)
    cu = ClusterAssignment(np.array([0, 1]))
    ci = ClusterAssignment(np.array([0, 0, 1]))
    q = preference(cluster_scores(g, cu, ci), ci, g.degrees("items"))
    np.testing.assert_allclose(q.for_user(1), [1 / 3] * 3)


@given(small_graphs(max_users=12, max_items=12), st.data())
@settings(max_examples=60, deadline=None)
def test_preference_matches_definition(g, data):
    lu = data.draw(st.lists(st.integers(0, 3), min_size=g.num_users, max_size=g.num_users))
    li = data.draw(st.lists(st.integers(0, 3), min_size=g.num_items, max_size=g.num_items))
    cu, ci = ClusterAssignment(np.array(lu)), ClusterAssignment(np.array(li))
    q = preference(cluster_scores(g, cu, ci), ci, g.degrees("items"))
    ref = preference_table(as_sets(g), g.num_items, cu.labels.tolist(), ci.labels.tolist())
    deg = g.degrees("items")
    for a in range(cu.n_clusters):
        w = q.weights(a)
        assert abs(w.sum() - 1) <= 1e-9 and (w >= 0).all()
        np.testing.assert_allclose(w, ref[a], rtol=1e-12, atol=1e-15)
        # within one item cluster the weight is proportional to the degree
        for b in range(ci.n_clusters):
            members = ci.members(b)
            nz = members[deg[members] > 0]
            if nz.size >= 2 and q.scores.counts[a].sum() > 0:
                ratios = w[nz] / deg[nz]
                np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)


def test_dbscan_on_planted_graph_finds_blocks():
    rng = np.random.default_rng(0)
    rows = [sorted(rng.choice(np.arange(b * 6, b * 6 + 6), 5, replace=False)) for b in range(3) for _ in range(10)]
    g = InteractionGraph.from_sets(rows, num_items=18)
    ca = dbscan(pairwise_similarity(g, "users"), 0.6, 4)
    assert ca.partition() == {frozenset(range(b * 10, b * 10 + 10)) for b in range(3)}
