"""Bipartite user-item interaction graphs: storage, ingest, canonical I/O and splits."""

from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

FORMATS = ("tsv", "csv", "movielens")
_SEPARATORS = {"tsv": "\t", "csv": ",", "movielens": "::"}


class GraphFormatError(ValueError):
    """Raised for unreadable or malformed interaction files."""


def _csr_from_pairs(rows: np.ndarray, cols: np.ndarray, n_rows: int):
    order = np.lexsort((cols, rows))
    indices = cols[order].astype(np.int64)
    counts = np.bincount(rows, minlength=n_rows)
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, indices


@dataclass(frozen=True, eq=False)
class InteractionGraph:
    """Binary interaction matrix R held in both row (user) and column (item) CSR form.

    ``user_indptr``/``user_indices`` give N(u) for every user, sorted and
    duplicate free; ``item_indptr``/``item_indices`` give N(i).  Instances are
    immutable; the arrays are flagged read-only.
    """

    num_users: int
    num_items: int
    user_indptr: np.ndarray
    user_indices: np.ndarray
    item_indptr: np.ndarray
    item_indices: np.ndarray
    user_labels: Optional[tuple] = None
    item_labels: Optional[tuple] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for a in (self.user_indptr, self.user_indices, self.item_indptr, self.item_indices):
            a.setflags(write=False)

    @classmethod
    def from_edges(cls, users, items, num_users: int, num_items: int,
                   user_labels=None, item_labels=None) -> "InteractionGraph":
        users = np.asarray(users, dtype=np.int64).ravel()
        items = np.asarray(items, dtype=np.int64).ravel()
        if users.shape != items.shape:
            raise ValueError("users and items must have the same length")
        if users.size:
            if users.min() < 0 or users.max() >= num_users:
                raise ValueError("user index out of bounds")
            if items.min() < 0 or items.max() >= num_items:
                raise ValueError("item index out of bounds")
        keys = np.unique(users * num_items + items)
        users, items = np.divmod(keys, num_items) if num_items else (users, items)
        uptr, uidx = _csr_from_pairs(users, items, num_users)
        iptr, iidx = _csr_from_pairs(items, users, num_items)
        return cls(num_users, num_items, uptr, uidx, iptr, iidx,
                   None if user_labels is None else tuple(user_labels),
                   None if item_labels is None else tuple(item_labels))

    @classmethod
    def from_sets(cls, neighborhoods: Sequence, num_items: int) -> "InteractionGraph":
        """Build from one item collection per user."""
        users = [u for u, row in enumerate(neighborhoods) for _ in row]
        items = [i for row in neighborhoods for i in row]
        return cls.from_edges(users, items, len(neighborhoods), num_items)

    @property
    def num_edges(self) -> int:
        return int(self.user_indices.size)

    @property
    def density(self) -> float:
        return self.num_edges / (self.num_users * self.num_items)

    def items_of(self, u: int) -> np.ndarray:
        return self.user_indices[self.user_indptr[u]:self.user_indptr[u + 1]]

    def users_of(self, i: int) -> np.ndarray:
        return self.item_indices[self.item_indptr[i]:self.item_indptr[i + 1]]

    @property
    def user_rows(self) -> list:
        return [self.items_of(u) for u in range(self.num_users)]

    @property
    def item_cols(self) -> list:
        return [self.users_of(i) for i in range(self.num_items)]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(users, items) arrays sorted by (user, item)."""
        users = np.repeat(np.arange(self.num_users, dtype=np.int64), np.diff(self.user_indptr))
        return users, self.user_indices.copy()

    def to_csr(self, dtype=np.int32) -> sp.csr_matrix:
        """R as a |U| x |I| scipy CSR matrix with unit entries."""
        data = np.ones(self.num_edges, dtype=dtype)
        return sp.csr_matrix((data, self.user_indices, self.user_indptr),
                             shape=(self.num_users, self.num_items))

    def degrees(self, side: str) -> np.ndarray:
        return degrees(self, side)

    def digest(self) -> str:
        """SHA-256 of the canonical edge-list bytes; identifies the edge set and node counts."""
        if "digest" not in self._cache:
            self._cache["digest"] = hashlib.sha256(canonical_bytes(self)).hexdigest()
        return self._cache["digest"]

    def same_edges(self, other: "InteractionGraph") -> bool:
        return (self.num_users == other.num_users and self.num_items == other.num_items
                and np.array_equal(self.user_indptr, other.user_indptr)
                and np.array_equal(self.user_indices, other.user_indices))

    def check(self) -> None:
        """Assert the structural invariants; raises AssertionError on violation."""
        assert self.user_indptr.size == self.num_users + 1
        assert self.item_indptr.size == self.num_items + 1
        assert self.user_indptr[-1] == self.item_indptr[-1] == self.num_edges
        for u in range(self.num_users):
            row = self.items_of(u)
            assert np.all(np.diff(row) > 0), f"row {u} not strictly sorted"
        if self.num_edges:
            assert 0 <= self.user_indices.min() and self.user_indices.max() < self.num_items
        users, items = self.edges()
        iptr, iidx = _csr_from_pairs(items, users, self.num_items)
        assert np.array_equal(iptr, self.item_indptr) and np.array_equal(iidx, self.item_indices)


def degrees(g: InteractionGraph, side: str) -> np.ndarray:
    """Node degrees of one side ("users" or "items")."""
    if side == "users":
        return np.diff(g.user_indptr)
    if side == "items":
        return np.diff(g.item_indptr)
    raise ValueError(f"side must be 'users' or 'items', got {side!r}")


def _split_line(line: str, sep: str, fmt: str, lineno: int):
    parts = line.split(sep)
    if len(parts) < 2:
        raise GraphFormatError(f"line {lineno}: expected at least 2 {fmt} fields, got {line!r}")
    u, i = parts[0].strip(), parts[1].strip()
    if not u or not i:
        raise GraphFormatError(f"line {lineno}: empty user or item id")
    return u, i


def load_edge_list(path, format: str = "tsv", header: bool = False) -> InteractionGraph:
    """Read a ``user<sep>item[<sep>rating[<sep>timestamp]]`` file.

    External ids are mapped to dense 0-based indices in first-seen order.
    Extra columns are ignored and repeated pairs collapse to one edge.
    Blank lines and lines starting with ``#`` are skipped.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; choose from {FORMATS}")
    sep = _SEPARATORS[format]
    user_ids: dict[str, int] = {}
    item_ids: dict[str, int] = {}
    users: list[int] = []
    items: list[int] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise GraphFormatError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if header and lineno == 1:
                continue
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            u, i = _split_line(line, sep, format, lineno)
            users.append(user_ids.setdefault(u, len(user_ids)))
            items.append(item_ids.setdefault(i, len(item_ids)))
    if not users:
        raise GraphFormatError(f"{path}: no edges")
    return InteractionGraph.from_edges(users, items, len(user_ids), len(item_ids),
                                       user_labels=list(user_ids), item_labels=list(item_ids))


def canonical_bytes(g: InteractionGraph) -> bytes:
    users, items = g.edges()
    head = f"# num_users={g.num_users} num_items={g.num_items}\n"
    body = "".join(f"{u}\t{i}\n" for u, i in zip(users.tolist(), items.tolist()))
    return (head + body).encode("ascii")


def write_canonical(g: InteractionGraph, path, labels: bool = True) -> Path:
    """Write ``user_idx<TAB>item_idx`` sorted by (user, item) plus a label sidecar.

    The first line is a ``#`` header carrying the node counts so that isolated
    nodes survive a round trip.  The sidecar ``<stem>.labels.tsv`` holds
    ``side<TAB>idx<TAB>external_id`` rows when labels are present.
    """
    path = Path(path)
    path.write_bytes(canonical_bytes(g))
    if labels and (g.user_labels is not None or g.item_labels is not None):
        lines = []
        for side, lab in (("user", g.user_labels), ("item", g.item_labels)):
            if lab is not None:
                lines.extend(f"{side}\t{k}\t{name}\n" for k, name in enumerate(lab))
        label_path(path).write_text("".join(lines), encoding="utf-8")
    return path


def label_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".labels.tsv")


def read_canonical(path) -> InteractionGraph:
    """Inverse of :func:`write_canonical`; dense indices are kept as written."""
    path = Path(path)
    try:
        with open(path, "r", encoding="ascii") as fh:
            head = fh.readline()
            fields = dict(tok.split("=") for tok in head.lstrip("#").split())
            n_users, n_items = int(fields["num_users"]), int(fields["num_items"])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)  # header-only file
                arr = np.loadtxt(fh, dtype=np.int64, delimiter="\t", ndmin=2)
    except (OSError, KeyError, ValueError) as exc:
        raise GraphFormatError(f"{path}: not a canonical edge list ({exc})") from exc
    if arr.size == 0:
        arr = np.zeros((0, 2), dtype=np.int64)
    user_labels = item_labels = None
    lp = label_path(path)
    if lp.exists():
        ul, il = [], []
        for line in lp.read_text(encoding="utf-8").splitlines():
            side, _, name = line.split("\t", 2)
            (ul if side == "user" else il).append(name)
        user_labels, item_labels = ul or None, il or None
    try:
        return InteractionGraph.from_edges(arr[:, 0], arr[:, 1], n_users, n_items,
                                           user_labels, item_labels)
    except ValueError as exc:
        raise GraphFormatError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class DatasetSplit:
    train: InteractionGraph
    validation: InteractionGraph
    test: InteractionGraph


def split(g: InteractionGraph, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> DatasetSplit:
    """Per-user random train/validation/test partition of each neighbourhood.

    Validation and test each receive ``floor(fraction * |N(u)|)`` items; the
    remainder goes to train.  Users with fewer than three items are kept whole
    in train.
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"fractions must be three non-negative values summing to 1, got {fractions}")
    _, f_val, f_test = fractions
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    small = 0
    for u in range(g.num_users):
        row = g.items_of(u)
        n = row.size
        if n < 3:
            small += n > 0
            parts[0].append((u, row))
            continue
        perm = rng.permutation(row)
        n_val, n_test = int(np.floor(f_val * n)), int(np.floor(f_test * n))
        parts[1].append((u, perm[:n_val]))
        parts[2].append((u, perm[n_val:n_val + n_test]))
        parts[0].append((u, perm[n_val + n_test:]))
    if small:
        log.warning("%d users with fewer than 3 interactions kept entirely in train", small)

    def build(chunks):
        us = np.concatenate([np.full(r.size, u, dtype=np.int64) for u, r in chunks] or [np.zeros(0, np.int64)])
        its = np.concatenate([r for _, r in chunks] or [np.zeros(0, np.int64)])
        return InteractionGraph.from_edges(us, its, g.num_users, g.num_items,
                                           g.user_labels, g.item_labels)

    return DatasetSplit(*(build(p) for p in parts))
