import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import as_sets, small_graphs
from peco.graph import (GraphFormatError, InteractionGraph, degrees, load_edge_list, read_canonical,
                        split, write_canonical)
from peco.synthetic import TABLE1, exact_standin, write_edge_list


def test_duplicate_lines_collapse(tmp_path):
    p = tmp_path / "toy.tsv"
    p.write_text("a\tx\na\ty\nb\ty\nb\tz\nc\tz\na\tx\n")
    g = load_edge_list(p)
    assert g.num_edges == 5
    assert (g.num_users, g.num_items) == (3, 3)
    assert g.user_labels == ("a", "b", "c")
    assert g.item_labels == ("x", "y", "z")
    g.check()


def test_extra_columns_ignored_and_dialects(tmp_path):
    (tmp_path / "r.csv").write_text("user,item,rating\n1,10,5\n1,11,3\n2,10,1\n")
    g = load_edge_list(tmp_path / "r.csv", "csv", header=True)
    assert g.num_edges == 3
    (tmp_path / "ratings.dat").write_text("1::1193::5::978300760\n1::661::3::978302109\n")
    g = load_edge_list(tmp_path / "ratings.dat", "movielens")
    assert (g.num_users, g.num_items, g.num_edges) == (1, 2, 2)
    assert g.item_labels == ("1193", "661")


def test_malformed_line_reports_line_number(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("a\tx\nbroken\n")
    with pytest.raises(GraphFormatError, match="line 2"):
        load_edge_list(p)


def test_empty_and_missing_files(tmp_path):
    p = tmp_path / "empty.tsv"
    p.write_text("\n# only a comment\n")
    with pytest.raises(GraphFormatError, match="no edges"):
        load_edge_list(p)
    with pytest.raises(GraphFormatError, match="cannot read"):
        load_edge_list(tmp_path / "nope.tsv")


def test_t1_item_degrees(t1):
    assert degrees(t1, "items").tolist() == [1, 2, 2, 1]
    assert degrees(t1, "users").tolist() == [2, 2, 2]


def test_isolated_node_degree_zero():
    g = InteractionGraph.from_sets([[0], []], num_items=3)
    assert degrees(g, "users").tolist() == [1, 0]
    assert degrees(g, "items").tolist() == [1, 0, 0]
    with pytest.raises(ValueError):
        degrees(g, "edges")


@given(small_graphs())
def test_handshake_and_transpose(g):
    g.check()
    assert degrees(g, "users").sum() == degrees(g, "items").sum() == g.num_edges
    cols = [set() for _ in range(g.num_items)]
    for u, row in enumerate(as_sets(g)):
        for i in row:
            cols[i].add(u)
    assert [set(c.tolist()) for c in g.item_cols] == cols


@given(small_graphs())
@settings(max_examples=30, deadline=None)
def test_canonical_roundtrip(tmp_path_factory, g):
    p = tmp_path_factory.mktemp("rt") / "g.tsv"
    write_canonical(g, p)
    h = read_canonical(p)
    assert h.same_edges(g)
    write_canonical(h, p.with_name("h.tsv"))
    assert p.read_bytes() == p.with_name("h.tsv").read_bytes()


def test_ingest_serialize_ingest_identity(tmp_path):
    src = exact_standin(TABLE1["amazon-beauty"].__class__(40, 25, 120), seed=3)
    write_edge_list(src, tmp_path / "raw.tsv", rng_seed=1)
    g = load_edge_list(tmp_path / "raw.tsv")
    write_canonical(g, tmp_path / "c.tsv")
    h = read_canonical(tmp_path / "c.tsv")
    assert h.same_edges(g) and h.user_labels == g.user_labels and h.item_labels == g.item_labels
    # relabelled edges are the source edges
    pairs = {(int(h.user_labels[u][1:]), int(h.item_labels[i][1:])) for u, i in zip(*h.edges())}
    assert pairs == set(zip(*(a.tolist() for a in src.edges())))


def test_movielens_sized_ingest(tmp_path):
    stats = TABLE1["movielens-1m"]
    g0 = exact_standin(stats, seed=0)
    write_edge_list(g0, tmp_path / "ratings.dat", "movielens")
    g = load_edge_list(tmp_path / "ratings.dat", "movielens")
    assert (g.num_users, g.num_items, g.num_edges) == (6034, 3247, 574631)


def test_beauty_density_from_counts():
    g = exact_standin(TABLE1["amazon-beauty"], seed=0)
    assert (g.num_users, g.num_items, g.num_edges) == (7068, 3750, 70506)
    # the printed 0.299% does not follow from these counts; the counts give 0.266%
    assert g.density == pytest.approx(70506 / (7068 * 3750))
    assert round(100 * g.density, 3) == 0.266


def test_split_ten_items():
    g = InteractionGraph.from_sets([list(range(10))], num_items=10)
    ds = split(g, seed=0)
    assert (ds.train.num_edges, ds.validation.num_edges, ds.test.num_edges) == (6, 2, 2)


def test_split_small_user_kept_in_train(caplog):
    g = InteractionGraph.from_sets([[3], list(range(5))], num_items=6)
    with caplog.at_level(logging.WARNING):
        ds = split(g, seed=1)
    assert ds.train.items_of(0).tolist() == [3]
    assert ds.validation.items_of(0).size == 0 and ds.test.items_of(0).size == 0
    assert "fewer than 3" in caplog.text


def test_split_rejects_bad_fractions(t1):
    with pytest.raises(ValueError):
        split(t1, (0.5, 0.2, 0.2))


@given(small_graphs(max_users=15, max_items=15), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_split_partition(g, seed):
    ds = split(g, seed=seed)
    parts = [as_sets(p) for p in (ds.train, ds.validation, ds.test)]
    for u, row in enumerate(as_sets(g)):
        tr, va, te = (p[u] for p in parts)
        assert not (tr & va or tr & te or va & te)
        assert tr | va | te == row
        if len(row) >= 3:
            assert len(va) == len(te) == int(np.floor(0.2 * len(row)))
    again = split(g, seed=seed)
    assert again.train.same_edges(ds.train) and again.test.same_edges(ds.test)
