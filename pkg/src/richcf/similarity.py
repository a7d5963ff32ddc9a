"""Co-rating, similarity and normalized similarity between users or items.

For two entities ``a`` and ``b`` on the same axis:

* co-rating ``phi`` counts the positions both have observed;
* similarity ``sigma`` is agreements minus disagreements over those
  positions, i.e. ``2 * agree - phi``;
* normalized similarity is ``sigma / phi``;
* the modified normalized similarity is ``sigma / sqrt(n_b)`` with ``n_b``
  the number of ratings of the *second* entity.

Ratios that are undefined (zero denominator) are reported as
:data:`UNDEFINED`, which is ``-inf`` and therefore sorts below every defined
value.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .ratings import DomainError, RatingMatrix

__all__ = [
    "UNDEFINED",
    "SimilarityTable",
    "co_rating",
    "similarity",
    "normalized_similarity",
    "modified_normalized_similarity",
    "similarity_table",
    "orient",
]

UNDEFINED = -math.inf


def orient(r, axis):
    """Return ``r`` with the requested axis as rows."""
    if axis == "users":
        return r
    if axis == "items":
        return r.T
    raise DomainError(f"axis must be 'users' or 'items', got {axis!r}")


def _pair(r, a, b, axis):
    r = orient(r, axis)
    n = r.n_users
    for x in (a, b):
        if not 0 <= x < n:
            raise DomainError(f"index {x} out of range for {n} {axis}")
    if a == b:
        raise DomainError("self-pairs are not defined")
    csr = r.csr
    ia, va = csr.indices[csr.indptr[a]:csr.indptr[a + 1]], csr.data[csr.indptr[a]:csr.indptr[a + 1]]
    ib, vb = csr.indices[csr.indptr[b]:csr.indptr[b + 1]], csr.data[csr.indptr[b]:csr.indptr[b + 1]]
    # probe the shorter support into the longer one
    if len(ia) > len(ib):
        ia, va, ib, vb = ib, vb, ia, va
    pos = np.searchsorted(ib, ia)
    pos[pos == len(ib)] = 0
    hit = (len(ib) > 0) & (ib[pos] == ia) if len(ib) else np.zeros(len(ia), bool)
    phi = int(hit.sum())
    agree = int((va[hit] == vb[pos[hit]]).sum())
    return phi, agree, len(csr.indices[csr.indptr[b]:csr.indptr[b + 1]])


def co_rating(r, a, b, axis="users"):
    """Number of positions observed for both ``a`` and ``b``."""
    return _pair(r, a, b, axis)[0]


def similarity(r, a, b, axis="users"):
    phi, agree, _ = _pair(r, a, b, axis)
    return 2 * agree - phi


def normalized_similarity(r, a, b, axis="users"):
    phi, agree, _ = _pair(r, a, b, axis)
    if phi == 0:
        return UNDEFINED
    return (2 * agree - phi) / phi


def modified_normalized_similarity(r, a, b, axis="users"):
    """``sigma(a, b) / sqrt(#ratings of b)``; note the asymmetry."""
    phi, agree, nb = _pair(r, a, b, axis)
    if nb == 0:
        return UNDEFINED
    return (2 * agree - phi) / math.sqrt(nb)


@dataclass(frozen=True, eq=False)
class SimilarityTable:
    """All pairwise co-ratings and similarities along one axis.

    ``phi`` and ``sigma`` are dense symmetric ``n x n`` integer arrays; the
    diagonal holds self-statistics and is never used for selection.
    ``counts`` is the number of ratings of each entity.
    """

    axis: str
    phi: np.ndarray
    sigma: np.ndarray
    counts: np.ndarray

    @property
    def n(self):
        return len(self.counts)

    def order(self):
        """Canonical pair enumeration ``(a, b)`` with ``a < b``."""
        return np.triu_indices(self.n, k=1)

    def normalized_row(self, a):
        phi = self.phi[a].astype(np.float64)
        out = np.full(self.n, UNDEFINED)
        ok = phi > 0
        out[ok] = self.sigma[a][ok] / phi[ok]
        return out

    def normalized(self):
        phi = self.phi.astype(np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(phi > 0, self.sigma / phi, UNDEFINED)
        return out

    def modified_row(self, a):
        out = np.full(self.n, UNDEFINED)
        ok = self.counts > 0
        out[ok] = self.sigma[a][ok] / np.sqrt(self.counts[ok])
        return out

    def modified_rank_key(self, a):
        """Order-equivalent to :meth:`modified_row` and exact for equal values.

        ``sigma * |sigma| / n_b`` is a single correctly rounded division of
        integers, so pairs with equal real scores compare equal.
        """
        s = self.sigma[a].astype(np.float64)
        out = np.full(self.n, UNDEFINED)
        ok = self.counts > 0
        out[ok] = s[ok] * np.abs(s[ok]) / self.counts[ok]
        return out

    def pairs(self):
        a, b = self.order()
        return zip(a.tolist(), b.tolist(), self.phi[a, b].tolist(),
                   self.sigma[a, b].tolist())

    def to_csv(self, path_or_buf):
        own = not hasattr(path_or_buf, "write")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "b", "phi", "sigma"])
            w.writerows(self.pairs())
        finally:
            if own:
                fh.close()

    def extend(self, r_aug):
        """Table for ``r_aug`` whose last entity is new; only its pairs are computed.

        ``r_aug`` must be the current matrix with one extra row (on this
        table's axis) appended.
        """
        r_aug = orient(r_aug, self.axis)
        n = self.n
        if r_aug.n_users != n + 1:
            raise DomainError(f"expected {n + 1} {self.axis}, got {r_aug.n_users}")
        phi_new, agree_new = _rows_against_all(r_aug, np.array([n]))
        phi = np.empty((n + 1, n + 1), dtype=self.phi.dtype)
        sigma = np.empty_like(phi)
        phi[:n, :n] = self.phi
        sigma[:n, :n] = self.sigma
        phi[n] = phi[:, n] = phi_new[0]
        sig = 2 * agree_new[0] - phi_new[0]
        sigma[n] = sigma[:, n] = sig
        counts = np.append(self.counts, int(r_aug.row_counts()[n]))
        return SimilarityTable(self.axis, phi, sigma, counts)


def _level_indicators(r):
    return [r.indicator(g).astype(np.int32) for g in range(1, r.levels + 1)]


def _rows_against_all(r, rows, obs=None, inds=None):
    """Exact ``phi`` and ``agree`` of ``rows`` against every entity."""
    obs = r.observed() if obs is None else obs
    inds = _level_indicators(r) if inds is None else inds
    obs_t = obs.T.tocsr()
    phi = (obs[rows] @ obs_t).toarray()
    agree = np.zeros_like(phi)
    for X in inds:
        agree += (X[rows] @ X.T.tocsr()).toarray()
    return phi.astype(np.int32), agree.astype(np.int32)


def similarity_table(r, axis="users", n_jobs=1, block_size=512):
    """Compute every pairwise ``phi`` and ``sigma`` along ``axis``.

    Rows are processed in blocks with sparse integer products, optionally
    on ``n_jobs`` threads. All sums are exact integers, so the table does not
    depend on the block size or the number of threads.
    """
    r = orient(r, axis)
    n = r.n_users
    if n == 0:
        raise DomainError("similarity table of an empty axis")
    obs = r.observed()
    inds = _level_indicators(r)
    phi = np.empty((n, n), dtype=np.int32)
    sigma = np.empty((n, n), dtype=np.int32)

    def work(start):
        rows = np.arange(start, min(start + block_size, n))
        p, a = _rows_against_all(r, rows, obs, inds)
        phi[rows] = p
        sigma[rows] = 2 * a - p

    starts = range(0, n, block_size)
    if n_jobs == 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            list(ex.map(work, starts))
    return SimilarityTable(axis, phi, sigma, r.row_counts())
