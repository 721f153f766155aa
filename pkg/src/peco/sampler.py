"""PECO graph sampling and the Node-Copy baseline.

Each user's new neighbourhood is grown independently.  It starts from a
uniformly chosen fraction ``retain`` of the user's original items and is then
filled one item at a time, drawing from all items not yet chosen with weight

    q(i) + alpha * mean_{j in chosen} S[i, j]

where q is the user cluster's preference distribution and S the item
concurrence matrix.  The loop stops when the new set is as large as the
original one, so user degrees are preserved exactly.

Two interchangeable kernels draw from that law:

``dense``
    materialises the weight vector over the whole catalogue and inverts its
    prefix sum on every draw.  O(|I|) per draw; kept as a reference.
``fast``
    splits the mass into its preference and concurrence parts and samples
    each part through precomputed cumulative tables (item cluster -> item for
    q, chosen item -> row of S for the concurrence term), rejecting items
    already chosen.  Falls back to explicit enumeration after repeated
    rejections, so the law is exactly the same as ``dense``.

Random streams are derived per user from ``(seed, user)``, which makes a
sampled graph independent of how users are scheduled across threads.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .clustering import ClusterAssignment, PreferenceDistribution, cluster_scores, dbscan, preference
from .graph import InteractionGraph, canonical_bytes, read_canonical
from .similarity import ConcurrenceMatrix, SparseSimilarity, concurrence_matrix, pairwise_similarity

log = logging.getLogger(__name__)

# (alpha, retain) per dataset
PRESETS = {
    "amazon-beauty": (1000.0, 0.0),
    "movielens-1m": (0.0, 0.0),
    "yelp2018": (100.0, 0.5),
    "amazon-cds": (10.0, 0.0),
}

KERNELS = ("fast", "dense")
_MAX_REJECTIONS = 32
# preference supports up to this size are enumerated instead of rejection-sampled
_SMALL_SUPPORT = 1024
_PECO_STREAM = 0
_COPY_STREAM = 1


class ZeroMassError(RuntimeError):
    """All candidate weights vanished and the uniform fallback is disabled."""


class EnsembleWriteError(OSError):
    def __init__(self, index: int, path, cause: BaseException):
        super().__init__(f"failed to write ensemble member {index} to {path}: {cause}")
        self.index = index
        self.path = path


@dataclass(frozen=True)
class SamplerConfig:
    alpha: float = 0.0
    retain: float = 0.0
    ensemble_size: int = 1
    seed: int = 0
    uniform_fallback: bool = True
    kernel: str = "fast"

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be a finite non-negative number, got {self.alpha}")
        if not 0.0 <= self.retain <= 1.0:
            raise ValueError(f"retain must lie in [0, 1], got {self.retain}")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "SamplerConfig":
        try:
            alpha, retain = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(**{"alpha": alpha, "retain": retain, **overrides})

    def to_dict(self) -> dict:
        return asdict(self)


def user_rng(seed: int, u: int, stream: int = _PECO_STREAM) -> np.random.Generator:
    return np.random.default_rng([stream, seed, u])


@dataclass(frozen=True, eq=False)
class SampledGraph:
    graph: InteractionGraph
    config: dict
    seed: int
    source_digest: str

    @property
    def provenance(self) -> dict:
        return {"config": self.config, "seed": self.seed, "source_digest": self.source_digest,
                "digest": self.graph.digest()}


@dataclass(frozen=True, eq=False)
class GeneratorInputs:
    """Everything the PECO sampler needs that depends only on the source graph."""

    graph: InteractionGraph
    concurrence: ConcurrenceMatrix
    user_clusters: ClusterAssignment
    item_clusters: ClusterAssignment
    preference: PreferenceDistribution


def prepare(g: InteractionGraph, user_eps: float = 0.7, user_min_pts: int = 4,
            item_eps: float = 0.7, item_min_pts: int = 4,
            topk: Optional[int] = None) -> GeneratorInputs:
    S = concurrence_matrix(g, topk=topk)
    cu = dbscan(pairwise_similarity(g, "users", max_distance=user_eps), user_eps, user_min_pts)
    # item neighbourhoods for DBSCAN come from the untruncated scores
    ci = dbscan(pairwise_similarity(g, "items", max_distance=item_eps), item_eps, item_min_pts)
    q = preference(cluster_scores(g, cu, ci), ci, g.degrees("items"))
    return GeneratorInputs(g, S, cu, ci, q)


def inputs_from_clusters(g: InteractionGraph, cu: ClusterAssignment, ci: ClusterAssignment,
                         S: Optional[SparseSimilarity] = None) -> GeneratorInputs:
    S = concurrence_matrix(g) if S is None else S
    q = preference(cluster_scores(g, cu, ci), ci, g.degrees("items"))
    return GeneratorInputs(g, S, cu, ci, q)


@dataclass
class _ClusterTables:
    bs: np.ndarray
    cdf: np.ndarray
    factor: dict
    mass: float
    support: int
    items: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None


class SamplerContext:
    """Flat arrays shared by every user draw for one (graph, q, S) triple."""

    def __init__(self, g: InteractionGraph, q: PreferenceDistribution, S: SparseSimilarity):
        if q.num_items != g.num_items or S.n != g.num_items:
            raise ValueError("preference / concurrence sizes do not match the graph")
        self.g = g
        self.q = q
        self.n_items = g.num_items
        M = S.matrix
        self.s_indptr, self.s_indices, self.s_data = M.indptr, M.indices, M.data
        row_of = np.repeat(np.arange(self.n_items), np.diff(M.indptr))
        self.s_rowsum = np.bincount(row_of, weights=M.data, minlength=self.n_items)
        cum = np.cumsum(M.data)
        self.s_cum = cum - np.repeat(np.r_[0.0, cum][M.indptr[:-1]], np.diff(M.indptr))
        self.item_cluster = q.item_clusters.labels
        self.item_deg = q.item_degrees
        self.m_indptr, self.m_items, self.m_cum = q.member_cdf
        self.user_cluster = q.user_clusters.labels
        self._tables: dict[int, _ClusterTables] = {}

    def support_items(self, t: _ClusterTables) -> tuple[np.ndarray, np.ndarray]:
        items = np.concatenate([self.m_items[self.m_indptr[b]:self.m_indptr[b + 1]] for b in t.bs.tolist()])
        w = np.array([t.factor[int(b)] for b in self.item_cluster[items]]) * self.item_deg[items]
        return items, w

    def tables(self, a: int) -> _ClusterTables:
        t = self._tables.get(a)
        if t is None:
            bs, masses = self.q.cluster_row(a)
            keep = masses > 0
            bs, masses = bs[keep], masses[keep]
            sizes = self.q.item_clusters.sizes[bs]
            e = self.q.scores.counts
            lo, hi = e.indptr[a], e.indptr[a + 1]
            counts = dict(zip(e.indices[lo:hi].tolist(), e.data[lo:hi].tolist()))
            factor = {b: counts[b] / s for b, s in zip(bs.tolist(), sizes.tolist())}
            t = _ClusterTables(bs, np.cumsum(masses), factor, float(masses.sum()),
                               int(self.q.cluster_support[bs].sum()))
            if 0 < t.support <= _SMALL_SUPPORT:
                t.items, t.weights = self.support_items(t)
            if len(self._tables) < 65536:
                self._tables[a] = t
        return t


def _draw_cdf(cdf: np.ndarray, rng: np.random.Generator) -> int:
    """Index drawn proportionally to the increments of ``cdf``; -1 on a rounding overflow."""
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return k if k < cdf.size else -1


def _uniform_candidate(in_set: np.ndarray, n_chosen: int, rng) -> int:
    n = in_set.size
    if n_chosen <= n // 2:
        while True:
            i = int(rng.integers(n))
            if not in_set[i]:
                return i
    cands = np.flatnonzero(~in_set)
    return int(cands[rng.integers(cands.size)])


class _FastUserState:
    def __init__(self, ctx: SamplerContext, u: int, target: int):
        self.ctx = ctx
        self.t = ctx.tables(int(ctx.user_cluster[u]))
        self.in_set = np.zeros(ctx.n_items, dtype=bool)
        self.chosen: list[int] = []
        self.row_cum = np.zeros(max(target, 1))
        self.q_in = 0.0
        self.supp_in = 0
        self.t_total = 0.0
        self.t_in = 0.0
        self.cross = 0

    def add(self, k: int) -> None:
        ctx, t = self.ctx, self.t
        f = t.factor.get(int(ctx.item_cluster[k]))
        if f is not None and ctx.item_deg[k] > 0:
            self.q_in += f * ctx.item_deg[k]
            self.supp_in += 1
        lo, hi = ctx.s_indptr[k], ctx.s_indptr[k + 1]
        inside = self.in_set[ctx.s_indices[lo:hi]]
        c = int(inside.sum())
        self.t_in += 2.0 * float(ctx.s_data[lo:hi][inside].sum())
        self.t_total += float(ctx.s_rowsum[k])
        self.cross += (hi - lo) - 2 * c
        n = len(self.chosen)
        self.row_cum[n] = (self.row_cum[n - 1] if n else 0.0) + ctx.s_rowsum[k]
        self.in_set[k] = True
        self.chosen.append(k)

    def masses(self, alpha: float) -> tuple[float, float]:
        t = self.t
        if t.mass <= 0:
            q_mass = (self.ctx.n_items - len(self.chosen)) / self.ctx.n_items
        elif self.supp_in >= t.support:
            q_mass = 0.0
        else:
            q_mass = max(t.mass - self.q_in, 0.0) / t.mass
        if alpha > 0 and self.cross > 0 and self.chosen:
            c_mass = alpha * max(self.t_total - self.t_in, 0.0) / len(self.chosen)
        else:
            c_mass = 0.0
        return q_mass, c_mass

    def draw_preference(self, rng) -> int:
        ctx, t = self.ctx, self.t
        if t.mass <= 0:
            return _uniform_candidate(self.in_set, len(self.chosen), rng)
        if t.items is not None:
            return self._draw_enumerated(t.items, t.weights, rng)
        for _ in range(_MAX_REJECTIONS):
            p = _draw_cdf(t.cdf, rng)
            if p < 0:
                continue
            b = int(t.bs[p])
            lo, hi = ctx.m_indptr[b], ctx.m_indptr[b + 1]
            j = _draw_cdf(ctx.m_cum[lo:hi], rng)
            if j < 0:
                continue
            i = int(ctx.m_items[lo + j])
            if not self.in_set[i]:
                return i
        return self._draw_enumerated(*ctx.support_items(t), rng)

    def _draw_enumerated(self, items: np.ndarray, w: np.ndarray, rng) -> int:
        w = np.where(self.in_set[items], 0.0, w)
        return int(items[_draw_exact(w, rng)])

    def draw_concurrence(self, rng) -> int:
        ctx = self.ctx
        n = len(self.chosen)
        for _ in range(_MAX_REJECTIONS):
            p = _draw_cdf(self.row_cum[:n], rng)
            if p < 0:
                continue
            j = self.chosen[p]
            lo, hi = ctx.s_indptr[j], ctx.s_indptr[j + 1]
            k = _draw_cdf(ctx.s_cum[lo:hi], rng)
            if k < 0:
                continue
            i = int(ctx.s_indices[lo + k])
            if not self.in_set[i]:
                return i
        rows = [slice(ctx.s_indptr[j], ctx.s_indptr[j + 1]) for j in self.chosen]
        cols = np.concatenate([ctx.s_indices[r] for r in rows])
        vals = np.concatenate([ctx.s_data[r] for r in rows])
        items, inv = np.unique(cols, return_inverse=True)
        w = np.bincount(inv, weights=vals, minlength=items.size)
        w[self.in_set[items]] = 0.0
        return int(items[_draw_exact(w, rng)])


def _draw_exact(w: np.ndarray, rng) -> int:
    cdf = np.cumsum(w)
    while True:
        k = _draw_cdf(cdf, rng)
        if k >= 0:
            return k


def _fast_complete(ctx: SamplerContext, u: int, initial, target: int, alpha: float,
                   rng, fallback: bool) -> list[int]:
    st = _FastUserState(ctx, u, target)
    for k in initial:
        st.add(int(k))
    while len(st.chosen) < target:
        q_mass, c_mass = st.masses(alpha)
        total = q_mass + c_mass
        if total <= 0:
            if not fallback:
                raise ZeroMassError(f"user {u}: no candidate has positive weight")
            i = _uniform_candidate(st.in_set, len(st.chosen), rng)
        elif rng.random() * total < q_mass:
            i = st.draw_preference(rng)
        else:
            i = st.draw_concurrence(rng)
        st.add(i)
    return st.chosen


def _dense_complete(ctx: SamplerContext, u: int, initial, target: int, alpha: float,
                    rng, fallback: bool) -> list[int]:
    q = ctx.q.for_user(u)
    conc = np.zeros(ctx.n_items)
    chosen: list[int] = []
    in_set = np.zeros(ctx.n_items, dtype=bool)

    def add(k):
        lo, hi = ctx.s_indptr[k], ctx.s_indptr[k + 1]
        conc[ctx.s_indices[lo:hi]] += ctx.s_data[lo:hi]
        in_set[k] = True
        chosen.append(k)

    for k in initial:
        add(int(k))
    while len(chosen) < target:
        w = q + (alpha / len(chosen)) * conc if (chosen and alpha > 0) else q.copy()
        w[in_set] = 0.0
        if w.sum() <= 0:
            if not fallback:
                raise ZeroMassError(f"user {u}: no candidate has positive weight")
            i = _uniform_candidate(in_set, len(chosen), rng)
        else:
            i = _draw_exact(w, rng)
        add(i)
    return chosen


def _sample_user(ctx: SamplerContext, u: int, cfg: SamplerConfig, rng, initial=None,
                 ordered: bool = False) -> np.ndarray:
    row = ctx.g.items_of(u)
    target = row.size
    if target == ctx.n_items:
        return np.arange(ctx.n_items, dtype=np.int64)
    if initial is None:
        m = int(math.floor(cfg.retain * target))
        initial = rng.choice(row, size=m, replace=False) if m else []
    if len(initial) == target:
        chosen = np.asarray(initial, dtype=np.int64)
    else:
        complete = _fast_complete if cfg.kernel == "fast" else _dense_complete
        chosen = np.asarray(complete(ctx, u, initial, target, cfg.alpha, rng, cfg.uniform_fallback),
                            dtype=np.int64)
    return chosen if ordered else np.sort(chosen)


def peco_sample_user(u: int, g: InteractionGraph, q: PreferenceDistribution, S: SparseSimilarity,
                     cfg: SamplerConfig, rng: Optional[np.random.Generator] = None,
                     initial=None, context: Optional[SamplerContext] = None,
                     ordered: bool = False) -> np.ndarray:
    """Sampled item set for user ``u``: an array of size |N(u)|, sorted unless ``ordered``.

    ``rng`` defaults to the user's own stream for ``cfg.seed``.  ``initial``
    overrides the random retained subset, which is handy for probing the draw
    law from a fixed state.  With ``ordered=True`` the retained items come
    first, followed by the drawn items in draw order.
    """
    ctx = context or SamplerContext(g, q, S)
    rng = rng if rng is not None else user_rng(cfg.seed, u)
    return _sample_user(ctx, u, cfg, rng, initial, ordered)


def _map_users(fn, n_users: int, threads: int) -> list:
    if threads <= 1 or n_users < 2:
        return [fn(u) for u in range(n_users)]
    chunk = max(1, -(-n_users // (threads * 8)))
    bounds = [(lo, min(lo + chunk, n_users)) for lo in range(0, n_users, chunk)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda b: [fn(u) for u in range(*b)], bounds)
        return [row for part in parts for row in part]


def _assemble(g: InteractionGraph, rows: list) -> InteractionGraph:
    users = np.repeat(np.arange(g.num_users, dtype=np.int64), [r.size for r in rows])
    items = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    return InteractionGraph.from_edges(users, items, g.num_users, g.num_items,
                                       g.user_labels, g.item_labels)


def peco_sample_graph(g: InteractionGraph, q: PreferenceDistribution, S: SparseSimilarity,
                      cfg: SamplerConfig, seed: Optional[int] = None,
                      threads: int = 1) -> SampledGraph:
    seed = cfg.seed if seed is None else seed
    ctx = SamplerContext(g, q, S)
    rows = _map_users(lambda u: _sample_user(ctx, u, cfg, user_rng(seed, u)), g.num_users, threads)
    return SampledGraph(_assemble(g, rows), cfg.to_dict(), seed, g.digest())


def node_copy_sample(g: InteractionGraph, user_sim: SparseSimilarity, epsilon: float = 0.5,
                     seed: int = 0, threads: int = 1) -> SampledGraph:
    """Replace each user's items, with probability ``epsilon``, by those of a similar user.

    The donor is drawn proportionally to user-user similarity among users with
    a positive score; users without any keep their own items.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    M = user_sim.matrix

    def one(u):
        rng = user_rng(seed, u, _COPY_STREAM)
        lo, hi = M.indptr[u], M.indptr[u + 1]
        if rng.random() >= epsilon or hi == lo:
            return g.items_of(u).copy()
        v = int(M.indices[lo + _draw_exact(M.data[lo:hi], rng)])
        return g.items_of(v).copy()

    rows = _map_users(one, g.num_users, threads)
    cfg = {"model": "node-copy", "epsilon": epsilon, "seed": seed}
    return SampledGraph(_assemble(g, rows), cfg, seed, g.digest())


def generate_ensemble(g: InteractionGraph, cfg: SamplerConfig,
                      inputs: Optional[GeneratorInputs] = None, out_dir=None,
                      threads: int = 1) -> list[SampledGraph]:
    """Draw ``cfg.ensemble_size`` PECO graphs with seeds ``cfg.seed + k``.

    With ``out_dir`` each member is written as ``sample_<k>.tsv`` as soon as it
    is drawn, followed by a ``provenance.json`` describing the whole ensemble.
    """
    inputs = inputs or prepare(g)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    members = []
    for k in range(cfg.ensemble_size):
        sg = peco_sample_graph(g, inputs.preference, inputs.concurrence, cfg,
                               seed=cfg.seed + k, threads=threads)
        if out is not None:
            path = out / f"sample_{k}.tsv"
            try:
                path.write_bytes(canonical_bytes(sg.graph))
            except OSError as exc:
                raise EnsembleWriteError(k, path, exc) from exc
        members.append(sg)
    if out is not None:
        write_provenance(members, out / "provenance.json")
    return members


def write_provenance(members: list[SampledGraph], path) -> None:
    doc = {
        "config": members[0].config,
        "source_digest": members[0].source_digest,
        "samples": [{"file": f"sample_{k}.tsv", **{kk: v for kk, v in m.provenance.items()
                                                   if kk not in ("config", "source_digest")}}
                    for k, m in enumerate(members)],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_ensemble(out_dir) -> list[SampledGraph]:
    """Load an ensemble written by :func:`generate_ensemble`, checking member digests."""
    out = Path(out_dir)
    doc = json.loads((out / "provenance.json").read_text())
    members = []
    for rec in doc["samples"]:
        graph = read_canonical(out / rec["file"])
        if graph.digest() != rec["digest"]:
            raise ValueError(f"{rec['file']}: digest does not match provenance")
        members.append(SampledGraph(graph, doc["config"], rec["seed"], doc["source_digest"]))
    return members
