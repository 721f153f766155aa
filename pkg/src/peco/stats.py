"""How well sampled ensembles keep degree, concurrence and preference structure; ranking metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import spearmanr

from .clustering import ClusterAssignment, ClusterScoreMatrix, cluster_scores
from .graph import InteractionGraph
from .similarity import SparseSimilarity, concurrence_matrix


def _graphs(ensemble) -> list[InteractionGraph]:
    return [getattr(m, "graph", m) for m in ensemble]


def _spearman(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    if a.size < 2 or np.all(a == a[0]) or np.all(b == b[0]):
        return None
    return float(spearmanr(a, b).statistic)


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def key_value_lines(summary: dict) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in summary.items())


@dataclass(frozen=True)
class DegreeReport:
    """Per-item degrees, rows ordered by original degree (descending, then item index)."""

    items: np.ndarray
    original: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    spearman: Optional[float]

    def to_csv(self) -> str:
        lines = ["rank,item,original_degree,mean_degree,std_degree"]
        for r, (i, d, m, s) in enumerate(zip(self.items.tolist(), self.original.tolist(),
                                             self.mean.tolist(), self.std.tolist())):
            lines.append(f"{r},{i},{d},{m:.9g},{s:.9g}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"items": int(self.items.size),
                "degree_mean_abs_error": float(np.abs(self.mean - self.original).mean()) if self.items.size else 0.0,
                "degree_spearman": self.spearman}


def _check_nodes(g: InteractionGraph, graphs: list[InteractionGraph]) -> None:
    if not graphs:
        raise ValueError("ensemble is empty")
    for h in graphs:
        if (h.num_users, h.num_items) != (g.num_users, g.num_items):
            raise ValueError(f"node sets differ: ({h.num_users}, {h.num_items}) vs "
                             f"({g.num_users}, {g.num_items})")


def degree_report(g: InteractionGraph, ensemble) -> DegreeReport:
    graphs = _graphs(ensemble)
    _check_nodes(g, graphs)
    orig = g.degrees("items")
    sampled = np.stack([h.degrees("items") for h in graphs]).astype(np.float64)
    mean, std = sampled.mean(axis=0), sampled.std(axis=0)
    order = np.lexsort((np.arange(orig.size), -orig))
    return DegreeReport(order, orig[order], mean[order], std[order], _spearman(orig, mean))


def concurrence_report(S_orig: SparseSimilarity, ensemble, topk: Optional[int] = None) -> dict:
    """Compare the original concurrence matrix with the ensemble-mean one.

    ``mean_abs_deviation`` sums |S_hat - S| over the union of both supports
    and divides by the number of pairs in the original support, so rare
    spurious pairs add their (small) mass without moving the denominator.  ``spearman`` ranks the entries present
    in both supports and is ``None`` when fewer than two overlap or either
    side is constant.  Use the same ``topk`` that produced ``S_orig``.
    """
    graphs = _graphs(ensemble)
    if not graphs:
        raise ValueError("ensemble is empty")
    acc = None
    for h in graphs:
        m = concurrence_matrix(h, topk=topk).matrix
        acc = m if acc is None else acc + m
    mean = (acc / len(graphs)).tocsr()
    A = sp.triu(S_orig.matrix, k=1).tocsr()
    B = sp.triu(mean, k=1).tocsr()
    diff = abs(A - B).tocsr()
    union = (A != 0).astype(np.int8) + (B != 0).astype(np.int8)
    n_union = union.nnz
    denom = A.nnz or n_union
    mad = float(diff.sum() / denom) if denom else 0.0
    a_on = A.multiply(B != 0).tocsr()
    b_on = B.multiply(A != 0).tocsr()
    for m in (a_on, b_on):
        m.eliminate_zeros()
        m.sort_indices()
    a_vals, b_vals = a_on.data, b_on.data
    return {"concurrence_mean_abs_deviation": mad,
            "concurrence_spearman": _spearman(a_vals, b_vals),
            "concurrence_overlap": int(a_vals.size),
            "concurrence_union": int(n_union)}


def _tv(a: sp.spmatrix, b: sp.spmatrix) -> float:
    ta, tb = a.sum(), b.sum()
    if ta == 0 or tb == 0:
        return 0.0 if ta == tb else 1.0
    return float(0.5 * abs(a / ta - b / tb).sum())


def preference_report(e_orig: ClusterScoreMatrix, ensemble,
                      cu: Optional[ClusterAssignment] = None,
                      ci: Optional[ClusterAssignment] = None) -> dict:
    """Total-variation distance between cluster-pair edge counts, original clusters held fixed."""
    cu = e_orig.user_clusters if cu is None else cu
    ci = e_orig.item_clusters if ci is None else ci
    graphs = _graphs(ensemble)
    if not graphs:
        raise ValueError("ensemble is empty")
    mats = [cluster_scores(h, cu, ci).counts.astype(np.float64) for h in graphs]
    per = [_tv(e_orig.counts, m) for m in mats]
    mean = sum(mats[1:], mats[0]) / len(mats)
    return {"preference_tv_mean": float(np.mean(per)),
            "preference_tv_of_mean": _tv(e_orig.counts, mean),
            "preference_totals_match": all(int(m.sum()) == e_orig.total for m in mats)}


def neighborhood_concurrence(S: SparseSimilarity, g: InteractionGraph, block: int = 1024) -> np.ndarray:
    """Per-user mean pairwise concurrence within N(u); NaN for users with fewer than two items."""
    R = g.to_csr(dtype=np.float64)
    totals = np.zeros(g.num_users)
    for lo in range(0, g.num_users, block):
        Rb = R[lo:lo + block]
        totals[lo:lo + Rb.shape[0]] = np.asarray((Rb @ S.matrix).multiply(Rb).sum(axis=1)).ravel()
    n = g.degrees("users").astype(np.float64)
    out = np.full(g.num_users, np.nan)
    ok = n >= 2
    out[ok] = totals[ok] / (n[ok] * (n[ok] - 1))
    return out


@dataclass(frozen=True)
class RankingJudgment:
    ranked: Sequence
    relevant: frozenset

    def __post_init__(self):
        if len(set(self.ranked)) != len(self.ranked):
            raise ValueError("ranked list contains duplicates")
        object.__setattr__(self, "relevant", frozenset(self.relevant))


def recall_at_k(j: RankingJudgment, K: int = 20) -> Optional[float]:
    """Share of relevant items found in the top K; ``None`` when nothing is relevant."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if not j.relevant:
        return None
    hits = sum(1 for x in list(j.ranked)[:K] if x in j.relevant)
    return hits / len(j.relevant)


def ndcg_at_k(j: RankingJudgment, K: int = 20) -> Optional[float]:
    """Binary-gain NDCG with a log2(rank + 1) discount; ``None`` when nothing is relevant."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if not j.relevant:
        return None
    dcg = sum(1.0 / math.log2(r + 2) for r, x in enumerate(list(j.ranked)[:K]) if x in j.relevant)
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(K, len(j.relevant))))
    return dcg / idcg


def evaluate(judgments: Sequence[RankingJudgment], K: int = 20) -> dict:
    """Mean recall@K / NDCG@K over users with at least one relevant item."""
    recalls, ndcgs = [], []
    for j in judgments:
        r = recall_at_k(j, K)
        if r is None:
            continue
        recalls.append(r)
        ndcgs.append(ndcg_at_k(j, K))
    return {f"recall@{K}": float(np.mean(recalls)) if recalls else None,
            f"ndcg@{K}": float(np.mean(ndcgs)) if ndcgs else None,
            "users_evaluated": len(recalls),
            "users_excluded": len(judgments) - len(recalls)}
