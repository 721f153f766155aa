"""Jaccard similarity between nodes of one side of an interaction graph.

Users are compared by their item sets and items by their user sets:
``|A & B| / |A | B|``.  The item-side matrix is the concurrence matrix used
by the sampler.  Intersection counts come from a sparse product ``B @ B.T``,
which only touches pairs that share at least one neighbour; rows are
processed in blocks so peak memory stays bounded on large graphs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

from .graph import InteractionGraph

_BLOCK_WORK = 8_000_000


@dataclass(frozen=True, eq=False)
class SparseSimilarity:
    """Symmetric sparse score matrix with no diagonal and no explicit zeros."""

    matrix: sp.csr_matrix
    side: str

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def row(self, a: int) -> tuple[np.ndarray, np.ndarray]:
        m = self.matrix
        lo, hi = m.indptr[a], m.indptr[a + 1]
        return m.indices[lo:hi], m.data[lo:hi]

    def lookup(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        cols, vals = self.row(a)
        k = np.searchsorted(cols, b)
        if k < cols.size and cols[k] == b:
            return float(vals[k])
        return 0.0

    def pairs(self):
        """Yield ``(a, b, score)`` for a < b in row-major order."""
        coo = self.matrix.tocoo()
        keep = coo.row < coo.col
        for a, b, s in zip(coo.row[keep].tolist(), coo.col[keep].tolist(), coo.data[keep].tolist()):
            yield a, b, s

    def as_dict(self) -> dict:
        return {(a, b): s for a, b, s in self.pairs()}

    def to_tsv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="ascii") as fh:
            for a, b, s in self.pairs():
                fh.write(f"{a}\t{b}\t{s:.9g}\n")
        return path

    def save(self, path) -> None:
        sp.save_npz(path, self.matrix, compressed=False)

    @classmethod
    def load(cls, path, side: str):
        return cls(sp.load_npz(path).tocsr(), side)

    def check(self) -> None:
        m = self.matrix
        assert m.has_sorted_indices
        assert np.all(m.data > 0) and np.all(m.data <= 1)
        assert m.diagonal().max(initial=0) == 0
        assert abs(m - m.T).max() == 0 if m.nnz else True


class ConcurrenceMatrix(SparseSimilarity):
    """Item-item concurrence scores; the diagonal is zero by definition."""


def _incidence(g: InteractionGraph, side: str) -> sp.csr_matrix:
    R = g.to_csr(dtype=np.int32)
    if side == "users":
        return R
    if side == "items":
        return R.T.tocsr()
    raise ValueError(f"side must be 'users' or 'items', got {side!r}")


def _row_topk(rows: np.ndarray, cols: np.ndarray, scores: np.ndarray, k: int) -> np.ndarray:
    """Mask keeping the k highest scores per row; ties go to the smaller column index."""
    order = np.lexsort((cols, -scores, rows))
    r = rows[order]
    starts = np.flatnonzero(np.r_[True, r[1:] != r[:-1]])
    lengths = np.diff(np.r_[starts, r.size])
    rank = np.arange(r.size) - np.repeat(starts, lengths)
    keep = np.zeros(rows.size, dtype=bool)
    keep[order[rank < k]] = True
    return keep


def _blocks(work: np.ndarray, budget: int) -> Iterable[tuple[int, int]]:
    n = work.size
    start = 0
    acc = 0
    for a in range(n):
        acc += work[a]
        if acc > budget and a > start:
            yield start, a
            start, acc = a, work[a]
    if start < n:
        yield start, n


def pairwise_similarity(g: InteractionGraph, side: str, topk: Optional[int] = None,
                        max_distance: Optional[float] = None) -> SparseSimilarity:
    """Jaccard scores for every pair of ``side`` nodes sharing a neighbour.

    ``max_distance`` drops pairs with ``1 - score > max_distance`` (used to
    pre-filter for DBSCAN).  ``topk`` keeps the k largest scores per row and
    then restores symmetry by keeping a pair if either endpoint kept it.
    """
    if topk is not None and topk < 1:
        raise ValueError("topk must be >= 1")
    B = _incidence(g, side)
    BT = B.T.tocsr()
    n = B.shape[0]
    deg = np.diff(B.indptr).astype(np.int64)
    other_deg = np.diff(BT.indptr).astype(np.int64)
    work = B @ other_deg
    out_r, out_c, out_s = [], [], []
    for lo, hi in _blocks(np.asarray(work).ravel(), _BLOCK_WORK):
        C = (B[lo:hi] @ BT).tocoo()
        r = C.row.astype(np.int64) + lo
        c = C.col.astype(np.int64)
        inter = C.data.astype(np.int64)
        off = r != c
        r, c, inter = r[off], c[off], inter[off]
        s = inter / (deg[r] + deg[c] - inter)
        if max_distance is not None:
            keep = (1.0 - s) <= max_distance
            r, c, s = r[keep], c[keep], s[keep]
        if topk is not None:
            keep = _row_topk(r, c, s, topk)
            r, c, s = r[keep], c[keep], s[keep]
        out_r.append(r)
        out_c.append(c)
        out_s.append(s)
    r = np.concatenate(out_r) if out_r else np.zeros(0, np.int64)
    c = np.concatenate(out_c) if out_c else np.zeros(0, np.int64)
    s = np.concatenate(out_s) if out_s else np.zeros(0)
    M = sp.csr_matrix((s, (r, c)), shape=(n, n))
    if topk is not None:
        M = M.maximum(M.T).tocsr()
    M.sort_indices()
    M.eliminate_zeros()
    cls = ConcurrenceMatrix if side == "items" else SparseSimilarity
    return cls(M, side)


def concurrence_matrix(g: InteractionGraph, topk: Optional[int] = None) -> ConcurrenceMatrix:
    """Item-item concurrence S with zero diagonal."""
    return pairwise_similarity(g, "items", topk=topk)


def set_score(S: SparseSimilarity, item: int, sampled) -> float:
    """Mean concurrence between ``item`` and the members of ``sampled``; 0 for an empty set."""
    sampled = list(sampled)
    if not sampled:
        return 0.0
    return sum(S.lookup(item, j) for j in sampled) / len(sampled)
