"""DBSCAN over Jaccard distance, cluster-pair edge counts and the preference distribution."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .graph import InteractionGraph
from .similarity import SparseSimilarity


def _first_seen_relabel(labels: np.ndarray) -> np.ndarray:
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse]


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    """Cluster index per node of one side.

    Cluster ids are dense and numbered by the smallest node index they contain,
    so the labelling is canonical for a given partition.
    """

    labels: np.ndarray
    side: str = "users"

    def __post_init__(self):
        labels = _first_seen_relabel(np.asarray(self.labels, dtype=np.int64))
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n_nodes(self) -> int:
        return self.labels.size

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @cached_property
    def _members(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        indptr = np.zeros(self.n_clusters + 1, dtype=np.int64)
        np.cumsum(self.sizes, out=indptr[1:])
        return indptr, order

    def members(self, c: int) -> np.ndarray:
        indptr, order = self._members
        return order[indptr[c]:indptr[c + 1]]

    def partition(self) -> frozenset:
        """The clustering as a set of frozensets, for label-free comparison."""
        return frozenset(frozenset(self.members(c).tolist()) for c in range(self.n_clusters))


def dbscan(sim: SparseSimilarity, eps: float, min_pts: int) -> ClusterAssignment:
    """DBSCAN with distance ``1 - score``.

    Two nodes are neighbours when their pair is stored in ``sim`` and
    ``1 - score <= eps``; pairs without a stored score are never neighbours.
    A node's neighbourhood includes itself when counting against ``min_pts``.
    Border points join the cluster whose seed comes first in node order, which
    matches sequential region growing.  Noise points become singleton clusters.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    n = sim.n
    A = sim.matrix.tocsr(copy=True)
    A.data = ((1.0 - A.data) <= eps).astype(np.int8)
    A.eliminate_zeros()
    count = np.diff(A.indptr) + 1
    core = count >= min_pts

    labels = np.full(n, -1, dtype=np.int64)
    core_idx = np.flatnonzero(core)
    if core_idx.size:
        sub = A[core_idx][:, core_idx]
        _, comp = connected_components(sub, directed=False)
        seed = np.full(comp.max() + 1, n, dtype=np.int64)
        np.minimum.at(seed, comp, core_idx)
        # cluster id = rank of its seed in node order
        rank = np.empty(seed.size, dtype=np.int64)
        rank[np.argsort(seed)] = np.arange(seed.size)
        labels[core_idx] = rank[comp]

        coo = A.tocoo()
        border_edge = ~core[coo.row] & core[coo.col]
        if border_edge.any():
            rows, cols = coo.row[border_edge], coo.col[border_edge]
            best = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
            np.minimum.at(best, rows, labels[cols])
            border = np.unique(rows)
            labels[border] = best[border]
    noise = np.flatnonzero(labels < 0)
    base = labels.max() + 1 if n else 0
    labels[noise] = base + np.arange(noise.size)
    return ClusterAssignment(labels, sim.side)


@dataclass(frozen=True, eq=False)
class ClusterScoreMatrix:
    """Edge counts between every (user cluster, item cluster) pair, stored sparse."""

    counts: sp.csr_matrix
    user_clusters: ClusterAssignment
    item_clusters: ClusterAssignment

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def toarray(self) -> np.ndarray:
        return self.counts.toarray()

    def __getitem__(self, ab) -> int:
        return int(self.counts[ab[0], ab[1]])

    def to_csv(self) -> str:
        coo = self.counts.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = ["user_cluster,item_cluster,count"]
        lines += [f"{a},{b},{c}" for a, b, c in
                  zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist())]
        return "\n".join(lines) + "\n"


def cluster_scores(g: InteractionGraph, cu: ClusterAssignment,
                   ci: ClusterAssignment) -> ClusterScoreMatrix:
    if cu.n_nodes != g.num_users or ci.n_nodes != g.num_items:
        raise ValueError(f"assignment sizes ({cu.n_nodes}, {ci.n_nodes}) do not match graph "
                         f"({g.num_users}, {g.num_items})")
    users, items = g.edges()
    counts = sp.csr_matrix((np.ones(users.size, dtype=np.int64),
                            (cu.labels[users], ci.labels[items])),
                           shape=(cu.n_clusters, ci.n_clusters))
    counts.sum_duplicates()
    counts.sort_indices()
    return ClusterScoreMatrix(counts, cu, ci)


@dataclass(frozen=True, eq=False)
class PreferenceDistribution:
    """Per-user-cluster weights over items: ``e(a, c_i) / |c_i| * d_i``, normalised.

    Nothing is materialised per cluster up front.  ``weights(a)`` builds the
    dense probability vector for one user cluster; the sampler instead uses the
    factorised form (pick an item cluster, then an item by degree).
    """

    scores: ClusterScoreMatrix
    item_clusters: ClusterAssignment
    item_degrees: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def user_clusters(self) -> ClusterAssignment:
        return self.scores.user_clusters

    @property
    def num_items(self) -> int:
        return self.item_degrees.size

    @cached_property
    def cluster_degree(self) -> np.ndarray:
        """Total item degree per item cluster."""
        return np.bincount(self.item_clusters.labels, weights=self.item_degrees,
                           minlength=self.item_clusters.n_clusters)

    @cached_property
    def cluster_support(self) -> np.ndarray:
        """Number of positive-degree items per item cluster."""
        return np.bincount(self.item_clusters.labels, weights=self.item_degrees > 0,
                           minlength=self.item_clusters.n_clusters).astype(np.int64)

    @cached_property
    def member_cdf(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indptr, items, cumulative degree within cluster) grouped by item cluster."""
        indptr, order = self.item_clusters._members
        deg = self.item_degrees[order].astype(np.float64)
        cum = np.cumsum(deg)
        start = np.repeat(np.r_[0.0, cum][indptr[:-1]], np.diff(indptr))
        return indptr, order, cum - start

    def cluster_row(self, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Item clusters with positive score for user cluster ``a`` and their unnormalised masses."""
        e = self.scores.counts
        lo, hi = e.indptr[a], e.indptr[a + 1]
        bs = e.indices[lo:hi]
        masses = e.data[lo:hi] / self.item_clusters.sizes[bs] * self.cluster_degree[bs]
        return bs, masses

    def item_factor(self, a: int) -> np.ndarray:
        """``e(a, b) / |b|`` for every item cluster b (dense)."""
        e = self.scores.counts
        out = np.zeros(self.item_clusters.n_clusters)
        lo, hi = e.indptr[a], e.indptr[a + 1]
        out[e.indices[lo:hi]] = e.data[lo:hi] / self.item_clusters.sizes[e.indices[lo:hi]]
        return out

    def weights(self, a: int) -> np.ndarray:
        """Normalised preference over all items for user cluster ``a``; uniform if it has no mass."""
        w = self.item_factor(a)[self.item_clusters.labels] * self.item_degrees
        total = w.sum()
        if total <= 0:
            return np.full(self.num_items, 1.0 / self.num_items)
        return w / total

    def for_user(self, u: int) -> np.ndarray:
        return self.weights(int(self.user_clusters.labels[u]))


def preference(e: ClusterScoreMatrix, ci: Optional[ClusterAssignment] = None,
               item_degrees=None) -> PreferenceDistribution:
    ci = e.item_clusters if ci is None else ci
    if ci.n_clusters != e.shape[1]:
        raise ValueError("item assignment does not match score matrix columns")
    deg = np.asarray(item_degrees, dtype=np.float64)
    if deg.size != ci.n_nodes:
        raise ValueError("item_degrees length does not match item assignment")
    return PreferenceDistribution(e, ci, deg)


def write_assignment(ca: ClusterAssignment, path) -> None:
    """``node_idx<TAB>cluster_idx`` per line, in node order."""
    with open(path, "w", encoding="ascii") as fh:
        fh.writelines(f"{n}\t{c}\n" for n, c in enumerate(ca.labels.tolist()))


def read_assignment(path, side: str) -> ClusterAssignment:
    arr = np.loadtxt(path, dtype=np.int64, delimiter="\t", ndmin=2)
    if arr.size == 0:
        return ClusterAssignment(np.zeros(0, dtype=np.int64), side)
    if not np.array_equal(arr[:, 0], np.arange(arr.shape[0])):
        raise ValueError(f"{path}: node indices must run 0..n-1 in order")
    return ClusterAssignment(arr[:, 1], side)
