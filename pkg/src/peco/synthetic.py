"""Synthetic interaction graphs: the hand-checkable toy graph and planted-block stand-ins."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterAssignment
from .graph import InteractionGraph


@dataclass(frozen=True)
class DatasetStats:
    users: int
    items: int
    interactions: int

    @property
    def density(self) -> float:
        return self.interactions / (self.users * self.items)

    @property
    def mean_user_degree(self) -> float:
        return self.interactions / self.users


# public benchmark sizes after preprocessing
TABLE1 = {
    "amazon-beauty": DatasetStats(7068, 3750, 70506),
    "movielens-1m": DatasetStats(6034, 3247, 574631),
    "yelp2018": DatasetStats(45919, 45538, 930030),
    "amazon-cds": DatasetStats(43169, 35648, 777426),
}


def toy_t1() -> InteractionGraph:
    """u0:{i0,i1}, u1:{i1,i2}, u2:{i2,i3}."""
    return InteractionGraph.from_sets([[0, 1], [1, 2], [2, 3]], num_items=4)


def toy_t1_clusters() -> tuple[ClusterAssignment, ClusterAssignment]:
    """Users {u0,u1}|{u2}, items {i0,i1}|{i2,i3}."""
    return ClusterAssignment(np.array([0, 0, 1]), "users"), ClusterAssignment(np.array([0, 0, 1, 1]), "items")


def planted_bipartite(n_users: int, n_items: int, n_edges: int, n_blocks: int = 50,
                      p_in: float = 0.8, degree_sigma: float = 0.6, popularity: float = 0.5,
                      seed: int = 0) -> InteractionGraph:
    """Block-structured random bipartite graph.

    Users and items get a block each.  A user's degree is lognormal around
    ``n_edges / n_users``; each of its edges lands in the user's own block with
    probability ``p_in`` and anywhere otherwise, picking items by a Zipf-like
    popularity of exponent ``popularity``.  Repeated pairs are merged, so the
    edge count comes out slightly under ``n_edges``.
    """
    rng = np.random.default_rng(seed)
    n_blocks = max(1, min(n_blocks, n_items))
    mean_deg = n_edges / n_users
    raw = rng.lognormal(0.0, degree_sigma, n_users)
    deg = np.clip(np.rint(raw / raw.mean() * mean_deg), 1, n_items).astype(np.int64)

    item_block = rng.integers(n_blocks, size=n_items)
    user_block = rng.integers(n_blocks, size=n_users)
    weight = 1.0 / np.power(1.0 + rng.permutation(n_items), popularity)
    order = np.lexsort((np.arange(n_items), item_block))
    counts = np.bincount(item_block, minlength=n_blocks)
    starts = np.r_[0, np.cumsum(counts)]
    w_sorted = weight[order]
    cum = np.cumsum(w_sorted)
    block_lo = np.r_[0.0, cum][starts[:-1]]
    block_hi = cum[np.maximum(starts[1:] - 1, 0)]

    users = np.repeat(np.arange(n_users), deg)
    inside = rng.random(users.size) < p_in
    inside &= counts[user_block[users]] > 0
    x = rng.random(users.size)
    b = user_block[users]
    target = np.where(inside, block_lo[b] + x * (block_hi[b] - block_lo[b]), x * cum[-1])
    pos = np.minimum(np.searchsorted(cum, target, side="right"), n_items - 1)
    items = order[pos]
    return InteractionGraph.from_edges(users, items, n_users, n_items)


def exact_standin(stats: DatasetStats, seed: int = 0) -> InteractionGraph:
    """Uniform random graph with exactly the given node and edge counts, no isolated nodes."""
    U, I, E = stats.users, stats.items, stats.interactions
    if E < max(U, I) or E > U * I:
        raise ValueError("edge count cannot cover every node")
    rng = np.random.default_rng(seed)
    base = np.unique(np.r_[np.arange(U) * I + rng.integers(I, size=U),
                           rng.integers(U, size=I) * I + np.arange(I)])
    need = E - base.size
    extra = np.zeros(0, dtype=np.int64)
    while extra.size < need:
        cand = rng.integers(U * I, size=2 * (need - extra.size) + 16)
        cand = cand[~np.isin(cand, base)]
        extra = np.unique(np.r_[extra, cand])
    extra = rng.permutation(extra)[:need]
    keys = np.r_[base, extra]
    return InteractionGraph.from_edges(keys // I, keys % I, U, I)


def toy_standin(name: str, scale: int = 100, seed: int = 0) -> InteractionGraph:
    """Small planted graph shaped like one of the benchmark datasets.

    Node counts shrink by ``scale``; the mean user degree is kept but capped
    at half the shrunken catalogue.
    """
    stats = TABLE1[name]
    n_users = max(stats.users // scale, 20)
    n_items = max(stats.items // scale, 20)
    deg = min(stats.mean_user_degree, n_items / 2)
    return planted_bipartite(n_users, n_items, int(round(deg * n_users)),
                             n_blocks=max(2, n_items // 15), seed=seed)


def write_edge_list(g: InteractionGraph, path, format: str = "tsv", rng_seed=None) -> None:
    """Write ``g`` in an ingestible dialect with string ids (``u<k>`` / ``i<k>``).

    Lines are shuffled when ``rng_seed`` is given so that first-seen order
    differs from index order.
    """
    sep = {"tsv": "\t", "csv": ",", "movielens": "::"}[format]
    users, items = g.edges()
    idx = np.arange(users.size)
    if rng_seed is not None:
        idx = np.random.default_rng(rng_seed).permutation(idx)
    with open(path, "w", encoding="ascii") as fh:
        for k in idx.tolist():
            fh.write(f"u{users[k]}{sep}i{items[k]}{sep}5{sep}0\n")
