"""Similarity-based completion algorithms.

Theory algorithms
    :func:`ucr`, :func:`icr`, :func:`cor` anchor each entity on its most
    similar peer (an information-rich one when the model holds), grow a
    cluster by normalized similarity to that anchor and predict by plurality
    vote inside the cluster (or inside the user x item block for CoR).

Hybrid algorithms
    :func:`hucr`, :func:`hicr`, :func:`hcor` build three candidate clusters
    per entity (via a rich anchor, by modified normalized similarity, by raw
    similarity), fuse each into a super-entity by per-position plurality and
    keep the super-entity most similar to the target. HCoR votes over the
    target's column in the user cluster, its row in the item cluster and a
    square-root weighted vote over the block.

Baseline
    :func:`paf_baseline` votes among the top-k users by raw similarity.

Ties are broken towards the smallest index and the smallest rating level.
"""

from __future__ import annotations

import csv
import zipfile
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .ratings import DomainError, RatingMatrix
from .similarity import (SimilarityTable, _rows_against_all, orient,
                         similarity_table)

__all__ = [
    "UNPREDICTED",
    "NO_MEMBER",
    "NeighborSet",
    "CompletedMatrix",
    "plurality",
    "hcor_scores",
    "ucr_neighbors",
    "hybrid_candidates",
    "ucr",
    "icr",
    "cor",
    "hucr",
    "hicr",
    "hcor",
    "paf_baseline",
    "max_gap_index",
    "estimate_T",
    "observation_rate",
    "estimate_cluster_size",
    "CompletionState",
    "fit_state",
    "add_user_incremental",
    "ALGORITHMS",
    "run_algorithm",
]

UNPREDICTED = 0
NO_MEMBER = -1

_INT_MIN = np.iinfo(np.int64).min


@dataclass(frozen=True)
class NeighborSet:
    """Members chosen for one anchor entity.

    ``provenance`` is ``"via-rich-anchor"``, ``"direct-modified-norm"`` or
    ``"direct-raw"``.
    """

    anchor: int
    members: tuple
    provenance: str


@dataclass(frozen=True, eq=False)
class CompletedMatrix:
    """Predicted levels, with :data:`UNPREDICTED` where nobody voted.

    ``scores[g - 1]`` holds the (weighted) vote for level ``g`` at each entry;
    rankings use the margin of one level over the best other level.
    """

    predictions: np.ndarray
    method: str
    params: dict
    levels: int
    scores: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self):
        return self.predictions.shape

    def transpose(self):
        scores = None if self.scores is None else self.scores.transpose(0, 2, 1)
        return replace(self, predictions=self.predictions.T, scores=scores)

    def margin(self, level=2, users=None, items=None):
        """Score of ``level`` minus the best score of any other level."""
        if self.scores is None:
            raise DomainError(f"{self.method} output carries no vote scores")
        s = self.scores if users is None else self.scores[:, users, items]
        own = s[level - 1].astype(np.float64)
        others = np.delete(s, level - 1, axis=0).max(axis=0)
        return own - others

    def to_csv(self, path_or_buf, users=None, items=None, marker="NA"):
        """``user,item,prediction`` triples; unpredicted entries get ``marker``."""
        if users is None:
            users, items = np.indices(self.shape).reshape(2, -1)
        pred = self.predictions[users, items]
        own = not hasattr(path_or_buf, "write")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user", "item", "prediction"])
            for u, m, g in zip(np.asarray(users).tolist(),
                               np.asarray(items).tolist(), pred.tolist()):
                w.writerow([u, m, marker if g == UNPREDICTED else g])
        finally:
            if own:
                fh.close()

    def save(self, path):
        arrays = {"predictions": self.predictions}
        if self.scores is not None:
            arrays["scores"] = self.scores
        arrays.update(method=np.array(self.method), levels=np.array(self.levels))
        # fixed timestamps keep the archive byte-identical across runs
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            for name, arr in arrays.items():
                info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
                info.compress_type = zipfile.ZIP_DEFLATED
                with zf.open(info, "w", force_zip64=True) as fh:
                    np.lib.format.write_array(fh, np.asarray(arr), allow_pickle=False)

    @classmethod
    def load(cls, path, params=None):
        with np.load(path) as z:
            scores = z["scores"] if "scores" in z.files else None
            return cls(z["predictions"], str(z["method"]), dict(params or {}),
                       int(z["levels"]), scores)


# -- voting ---------------------------------------------------------------

def plurality(counts):
    """Argmax over the level axis (axis 0), smallest level on ties.

    Entries whose counts are all zero become :data:`UNPREDICTED`.
    """
    counts = np.asarray(counts)
    pred = counts.argmax(axis=0).astype(np.int8) + 1
    pred[counts.max(axis=0) <= 0] = UNPREDICTED
    return pred


def hcor_scores(region1, region2, region3):
    """Per-level score: both line votes plus the square root of the block vote."""
    return (np.asarray(region1, dtype=np.float64) + region2
            + np.sqrt(np.asarray(region3, dtype=np.float64)))


def _selection(members, n_cols):
    """0/1 matrix whose row ``i`` marks the members of set ``i`` (padding skipped)."""
    members = np.asarray(members, dtype=np.int64)
    ok = members >= 0
    indptr = np.concatenate([[0], np.cumsum(ok.sum(axis=1))])
    return sp.csr_matrix((np.ones(int(ok.sum()), dtype=np.int32), members[ok],
                          indptr), shape=(members.shape[0], n_cols))


def _indicators(r):
    return [r.indicator(g) for g in range(1, r.levels + 1)]


def _row_votes(members, inds):
    """``counts[g-1, i, m]`` = members of row ``i`` who gave level ``g`` to ``m``."""
    S = _selection(members, inds[0].shape[0])
    return np.stack([(S @ X).toarray().astype(np.int32) for X in inds])


def _sigma_rows(R, P):
    """Similarity of each row of dense ``R`` with the same row of dense ``P``."""
    both = (R != 0) & (P != 0)
    phi = both.sum(axis=1, dtype=np.int64)
    agree = (both & (R == P)).sum(axis=1, dtype=np.int64)
    return 2 * agree - phi


# -- neighbor selection ---------------------------------------------------

def _ranked(scores, exclude, valid=None):
    """Indices by descending score (stable), without ``exclude`` and invalid ones."""
    order = np.argsort(-np.asarray(scores), kind="stable")
    keep = ~np.isin(order, exclude)
    if valid is not None:
        keep &= valid[order]
    return order[keep]


def _pad(members, size):
    out = np.full(size, NO_MEMBER, dtype=np.int64)
    out[:len(members)] = members[:size]
    return out


def _anchor(table, u):
    """Most similar co-rating entity, or :data:`NO_MEMBER` if none co-rates."""
    ok = table.phi[u] > 0
    ok[u] = False
    if not ok.any():
        return NO_MEMBER
    row = np.where(ok, table.sigma[u].astype(np.int64), _INT_MIN)
    return int(np.argmax(row))


class _AnchorOrders(dict):
    """Cache of entities sorted by normalized similarity to an anchor."""

    def __init__(self, table):
        super().__init__()
        self.table = table

    def __missing__(self, v):
        scores = self.table.normalized_row(v)
        order = _ranked(scores, [v], np.isfinite(scores))
        self[v] = order
        return order


def _anchor_cluster(orders, u, v, n_extra):
    if v == NO_MEMBER:
        return np.empty(0, dtype=np.int64)
    head = orders[v][:n_extra + 1]
    return head[head != u][:n_extra]


def ucr_neighbors(table, cluster_size):
    """Neighbor sets of UCR steps (i)-(ii).

    Returns an ``(n, cluster_size)`` array whose row ``u`` is
    ``[u, anchor, ...]`` followed by the ``cluster_size - 2`` entities with the
    highest normalized similarity to the anchor. Entities sharing no rating
    with the one they are compared to are never picked; missing members are
    :data:`NO_MEMBER`.
    """
    n = table.n
    if cluster_size < 2:
        raise DomainError("cluster_size must be at least 2")
    if cluster_size > n:
        raise DomainError(f"cluster_size {cluster_size} exceeds {n} {table.axis}")
    orders = _AnchorOrders(table)
    out = np.empty((n, cluster_size), dtype=np.int64)
    for u in range(n):
        v = _anchor(table, u)
        out[u, 0], out[u, 1] = u, v
        out[u, 2:] = _pad(_anchor_cluster(orders, u, v, cluster_size - 2),
                          cluster_size - 2)
    return out


def _hybrid_row(table, u, T, orders):
    v = _anchor(table, u)
    f1 = _pad(np.concatenate([[v], _anchor_cluster(orders, u, v, T - 2)]), T - 1)
    co = table.phi[u] > 0
    f2 = _pad(_ranked(table.modified_rank_key(u), [u], co), T - 1)
    f3 = _pad(_ranked(table.sigma[u], [u], co), T - 1)
    return f1, f2, f3


def hybrid_candidates(table, T):
    """The three candidate sets of every entity, each of ``T - 1`` peers.

    Returns an ``(3, n, T - 1)`` array ordered as rich-anchor cluster,
    modified-normalized neighbors, raw-similarity neighbors.
    """
    n = table.n
    if T < 2:
        raise DomainError("T must be at least 2")
    if T > n:
        raise DomainError(f"T={T} exceeds {n} {table.axis}")
    orders = _AnchorOrders(table)
    out = np.empty((3, n, T - 1), dtype=np.int64)
    for u in range(n):
        out[:, u] = _hybrid_row(table, u, T, orders)
    return out


_PROVENANCE = ("via-rich-anchor", "direct-modified-norm", "direct-raw")


def _table(r, axis, table, n_jobs):
    if table is None:
        return similarity_table(r, axis, n_jobs=n_jobs)
    if table.n != orient(r, axis).n_users:
        raise DomainError("similarity table does not match the matrix")
    return table


# -- theory algorithms ----------------------------------------------------

def ucr(r, cluster_size, table=None, n_jobs=1):
    """User clustering for recommendation.

    Each user's row is the plurality over its own neighbor set ``F_u``
    (including ``u`` and its anchor).
    """
    table = _table(r, "users", table, n_jobs)
    members = ucr_neighbors(table, cluster_size)
    counts = _row_votes(members, _indicators(r))
    return CompletedMatrix(plurality(counts), "ucr",
                           {"cluster_size": cluster_size}, r.levels,
                           counts.astype(np.float32),
                           {"members": members, "anchors": members[:, 1]})


def icr(r, cluster_size, table=None, n_jobs=1):
    """Item clustering for recommendation: :func:`ucr` on the transpose."""
    out = ucr(r.T, cluster_size, table=table, n_jobs=n_jobs).transpose()
    return replace(out, method="icr")


def cor(r, user_cluster_size, item_cluster_size, tables=(None, None), n_jobs=1):
    """Co-clustering: plurality over the ``F_u x N_m`` block of every entry."""
    ut = _table(r, "users", tables[0], n_jobs)
    it = _table(r, "items", tables[1], n_jobs)
    F = ucr_neighbors(ut, user_cluster_size)
    N = ucr_neighbors(it, item_cluster_size)
    SF = _selection(F, r.n_users)
    SN = _selection(N, r.n_items)
    counts = np.stack([_block_sum(SF, X, SN) for X in _indicators(r)])
    return CompletedMatrix(plurality(counts), "cor",
                           {"user_cluster_size": user_cluster_size,
                            "item_cluster_size": item_cluster_size},
                           r.levels, counts.astype(np.float32),
                           {"user_members": F, "item_members": N})


def _block_sum(SF, X, SN):
    """``(SF @ X @ SN.T)`` as a dense int array."""
    left = (SF @ X).toarray().astype(np.float64)
    # exact: integer-valued float64 sums far below 2**53
    return np.rint((SN @ left.T).T).astype(np.int32)


# -- hybrid algorithms ----------------------------------------------------

def _hybrid(r, T, table, n_jobs, method):
    table = _table(r, "users", table, n_jobs)
    cands = hybrid_candidates(table, T)
    inds = _indicators(r)
    R = r.to_dense()
    best_sim = np.full(r.n_users, _INT_MIN, dtype=np.int64)
    choice = np.zeros(r.n_users, dtype=np.int8)
    best_counts = None
    for z in range(3):
        counts = _row_votes(cands[z], inds)
        sim = _sigma_rows(R, plurality(counts))
        better = sim > best_sim
        best_sim[better] = sim[better]
        choice[better] = z
        if best_counts is None:
            best_counts = counts
        else:
            best_counts[:, better] = counts[:, better]
    members = cands[choice, np.arange(r.n_users)]
    return CompletedMatrix(plurality(best_counts), method, {"T": T}, r.levels,
                           best_counts.astype(np.float32),
                           {"members": members, "choice": choice,
                            "provenance": [_PROVENANCE[z] for z in choice],
                            "candidates": cands})


def hucr(r, T, table=None, n_jobs=1):
    """Hybrid user clustering; each user copies its most similar super-user."""
    return _hybrid(r, T, table, n_jobs, "hucr")


def hicr(r, T, table=None, n_jobs=1):
    """Hybrid item clustering: :func:`hucr` on the transpose."""
    out = _hybrid(r.T, T, table, n_jobs, "hicr").transpose()
    return out


def hcor(r, T_users, T_items, tables=(None, None), n_jobs=1):
    """Hybrid co-clustering with square-root weighting of the block vote.

    ``F_u`` and ``N_m`` are the member sets of the winning super-user and
    super-item. They never contain ``u`` or ``m``, so no region includes the
    target entry itself.
    """
    users = _hybrid(r, T_users, tables[0], n_jobs, "hucr")
    items = _hybrid(r.T, T_items, tables[1], n_jobs, "hicr")
    F, N = users.info["members"], items.info["members"]
    SF = _selection(F, r.n_users)
    SN = _selection(N, r.n_items)
    scores = np.empty((r.levels,) + r.shape, dtype=np.float32)
    best = np.full(r.shape, -1.0)
    pred = np.zeros(r.shape, dtype=np.int8)
    for g, X in enumerate(_indicators(r), start=1):
        region1 = (SF @ X).toarray()
        region2 = (SN @ X.T).toarray().T
        region3 = _block_sum(SF, X, SN)
        s = hcor_scores(region1, region2, region3)
        scores[g - 1] = s
        win = s > best
        best[win] = s[win]
        pred[win] = g
    pred[best <= 0] = UNPREDICTED
    return CompletedMatrix(pred, "hcor", {"T_users": T_users, "T_items": T_items},
                           r.levels, scores,
                           {"user_members": F, "item_members": N,
                            "user_choice": users.info["choice"],
                            "item_choice": items.info["choice"]})


# -- baseline -------------------------------------------------------------

def paf_neighbors(table, k):
    n = table.n
    if k < 1:
        raise DomainError("k must be at least 1")
    if k >= n:
        raise DomainError(f"k={k} must be below the number of {table.axis} ({n})")
    return np.stack([_pad(_ranked(table.sigma[u], [u], table.phi[u] > 0), k)
                     for u in range(n)])


def paf_baseline(r, k, table=None, n_jobs=1):
    """Plurality among the ``k`` users most similar to each user (self excluded)."""
    table = _table(r, "users", table, n_jobs)
    members = paf_neighbors(table, k)
    counts = _row_votes(members, _indicators(r))
    return CompletedMatrix(plurality(counts), "paf", {"k": k}, r.levels,
                           counts.astype(np.float32), {"members": members})


# -- cluster size ---------------------------------------------------------

def max_gap_index(scores, lo=2, hi=None):
    """Position of the largest drop in a descending score sequence.

    Returns ``t`` such that the drop from ``scores[t-1]`` to ``scores[t]``
    (1-based: between the t-th and (t+1)-th score) is largest, for ``t`` in
    ``[lo, hi]``. Ties go to the smaller ``t``; a flat sequence gives ``lo``.
    """
    s = np.sort(np.asarray(scores, dtype=np.float64))[::-1]
    hi = len(s) - 1 if hi is None else min(hi, len(s) - 1)
    if hi < lo:
        raise DomainError("not enough scores to search for a gap")
    finite = np.where(np.isfinite(s), s, np.nan)
    drops = finite[lo - 1:hi] - finite[lo:hi + 1]
    drops = np.where(np.isnan(drops), -np.inf, drops)
    return lo + int(np.argmax(drops))


_KINDS = ("normalized", "modified", "sigma")


def estimate_T(r, anchor, axis="users", kind="normalized", table=None):
    """Cluster size read off the largest drop of similarity to ``anchor``.

    Peers are sorted by ``kind`` of similarity to the anchor; the drop is
    searched between positions 2 and ``n / 2``. The estimate counts the
    anchor itself, i.e. it is the gap position plus one.
    """
    rr = orient(r, axis)
    n = rr.n_users
    if n - 1 < 3:
        raise DomainError("need at least 3 candidates to estimate T")
    if not 0 <= anchor < n:
        raise DomainError(f"anchor {anchor} out of range")
    if kind not in _KINDS:
        raise DomainError(f"kind must be one of {_KINDS}")
    if table is None:
        obs = rr.observed()
        inds = _indicators(rr)
        phi, agree = _rows_against_all(rr, np.array([anchor]), obs, inds)
        counts = rr.row_counts()
        table = SimilarityTable(axis, phi, 2 * agree - phi, counts)
        row = 0
    else:
        row = anchor
    if kind == "normalized":
        s = table.normalized_row(row)
    elif kind == "modified":
        s = table.modified_row(row)
    else:
        s = table.sigma[row].astype(np.float64)
    s = np.delete(s, anchor)
    return max_gap_index(s, lo=2, hi=max(2, n // 2)) + 1


def observation_rate(r):
    """Fraction of observed entries, ``X_R / (U M)``."""
    total = r.n_users * r.n_items
    if total == 0:
        raise DomainError("empty matrix")
    return r.nnz / total


def estimate_cluster_size(r, K_hint=None, axis="users", kind="normalized"):
    """Cluster size on ``axis``: ``n / K_hint`` if a cluster count is known,
    otherwise :func:`estimate_T` anchored at the entity with most ratings."""
    rr = orient(r, axis)
    if rr.nnz == 0:
        raise DomainError("empty matrix")
    if K_hint:
        return rr.n_users // K_hint
    anchor = int(np.argmax(rr.row_counts()))
    return estimate_T(rr, anchor, "users", kind)


# -- incremental additions ------------------------------------------------

@dataclass(frozen=True, eq=False)
class CompletionState:
    """Everything needed to add users without recomputing existing pairs."""

    ratings: RatingMatrix
    table: SimilarityTable
    method: str
    size: int
    completed: CompletedMatrix


_ROW_METHODS = ("ucr", "hucr", "paf")


def fit_state(r, method="ucr", size=None, n_jobs=1):
    """Run a user-axis method and keep its similarity table.

    ``size`` is the cluster size for ``ucr``, ``T`` for ``hucr`` and ``k`` for
    ``paf``.
    """
    if method not in _ROW_METHODS:
        raise DomainError(f"incremental mode supports {_ROW_METHODS}")
    table = similarity_table(r, "users", n_jobs=n_jobs)
    fn = {"ucr": ucr, "hucr": hucr, "paf": paf_baseline}[method]
    return CompletionState(r, table, method, size, fn(r, size, table=table))


def _row_counts_for(r, members):
    csr = r.csr
    counts = np.zeros((r.levels, r.n_items), dtype=np.int32)
    for w in members:
        if w == NO_MEMBER:
            continue
        lo, hi = csr.indptr[w], csr.indptr[w + 1]
        np.add.at(counts, (csr.data[lo:hi].astype(np.int64) - 1,
                           csr.indices[lo:hi]), 1)
    return counts


def _predict_row(method, r, table, u, size):
    if method == "ucr":
        v = _anchor(table, u)
        orders = _AnchorOrders(table)
        members = np.concatenate([[u, v], _anchor_cluster(orders, u, v, size - 2)])
        return members, _row_counts_for(r, members)
    if method == "paf":
        members = _ranked(table.sigma[u], [u], table.phi[u] > 0)[:size]
        return members, _row_counts_for(r, members)
    row = r.to_dense()[u]
    best, best_sim = None, None
    for members in _hybrid_row(table, u, size, _AnchorOrders(table)):
        counts = _row_counts_for(r, members)
        sim = int(_sigma_rows(row[None], plurality(counts)[None])[0])
        if best_sim is None or sim > best_sim:
            best, best_sim = (members, counts), sim
    return best


def add_user_incremental(state, new_row):
    """Append a user and predict only its row.

    ``new_row`` has one entry per item, 0 for erased. Only the pairs between
    the new user and existing users are computed; existing predictions are
    carried over unchanged. The new row equals what a full recomputation on
    the augmented matrix gives for that user.
    """
    r = state.ratings
    new_row = np.asarray(new_row)
    if new_row.shape != (r.n_items,):
        raise DomainError(f"new row must have {r.n_items} entries, "
                          f"got shape {new_row.shape}")
    items = np.nonzero(new_row)[0]
    aug = RatingMatrix(np.concatenate([r.users, np.full(len(items), r.n_users)]),
                       np.concatenate([r.items, items]),
                       np.concatenate([r.values, new_row[items]]),
                       r.n_users + 1, r.n_items, r.levels)
    table = state.table.extend(aug)
    u = r.n_users
    size = state.size
    if state.method == "paf" and size >= table.n:
        raise DomainError("k must stay below the number of users")
    members, counts = _predict_row(state.method, aug, table, u, size)
    old = state.completed
    pred = np.vstack([old.predictions, plurality(counts)[None]])
    scores = None
    if old.scores is not None:
        scores = np.concatenate([old.scores, counts[:, None].astype(np.float32)],
                                axis=1)
    completed = CompletedMatrix(pred, old.method, old.params, old.levels, scores,
                                {"new_members": np.asarray(members)})
    return CompletionState(aug, table, state.method, size, completed)


# -- registry -------------------------------------------------------------

ALGORITHMS = {
    "ucr": (ucr, ("cluster_size",)),
    "icr": (icr, ("cluster_size",)),
    "cor": (cor, ("user_cluster_size", "item_cluster_size")),
    "hucr": (hucr, ("T",)),
    "hicr": (hicr, ("T",)),
    "hcor": (hcor, ("T_users", "T_items")),
    "paf": (paf_baseline, ("k",)),
}


def run_algorithm(name, r, params, n_jobs=1):
    """Dispatch by algorithm id with a parameter dict."""
    if name not in ALGORITHMS:
        raise DomainError(f"unknown algorithm {name!r}; "
                          f"choose from {sorted(ALGORITHMS)}")
    fn, names = ALGORITHMS[name]
    missing = [p for p in names if params.get(p) is None]
    if missing:
        raise DomainError(f"{name} needs parameter(s) {missing}")
    return fn(r, *(int(params[p]) for p in names), n_jobs=n_jobs)
