"""Rating matrices, ingestion, binary quantization, masking and noise.

A :class:`RatingMatrix` stores only observed entries. Anything absent is
erased. Levels are integers in ``1..G``; inside dense arrays the value
:data:`ERASED` (0) marks an erased entry.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ERASED",
    "RatingError",
    "ParseError",
    "DomainError",
    "RatingMatrix",
    "MaskSplit",
    "load_ratings",
    "quantize_binary",
    "split_mask",
    "flip_noise",
]

ERASED = 0


class RatingError(ValueError):
    """Base class for errors raised by richcf."""


class ParseError(RatingError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(RatingError):
    """An argument lies outside the domain an operation is defined on."""


def _as_index(a, name):
    a = np.asarray(a)
    if a.size == 0:
        return np.zeros(0, dtype=np.int64)
    if not np.issubdtype(a.dtype, np.integer):
        raise DomainError(f"{name} must be integer indices")
    return a.astype(np.int64, copy=False)


@dataclass(frozen=True, eq=False)
class RatingMatrix:
    """Sparse ``n_users x n_items`` matrix of observed ratings.

    Entries are kept in row-major order with no duplicates. Instances are
    immutable; derived views (CSR, dense array, level indicators) are cached.

    Parameters
    ----------
    users, items : array of int
        0-based positions of the observed entries.
    values : array of int
        Observed levels in ``1..levels``.
    n_users, n_items : int
        Matrix shape.
    levels : int
        Number of rating levels ``G`` (at least 2).
    user_ids, item_ids : array, optional
        External identifiers of each row/column, when loaded from a file.
    """

    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    n_users: int
    n_items: int
    levels: int
    user_ids: Optional[np.ndarray] = field(default=None, repr=False)
    item_ids: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        users = _as_index(self.users, "users")
        items = _as_index(self.items, "items")
        values = _as_index(self.values, "values")
        if not (len(users) == len(items) == len(values)):
            raise DomainError("users, items and values must have equal length")
        if self.levels < 2:
            raise DomainError(f"levels must be at least 2, got {self.levels}")
        if self.n_users < 0 or self.n_items < 0:
            raise DomainError("matrix shape must be non-negative")
        if len(values):
            if values.min() < 1 or values.max() > self.levels:
                bad = values[(values < 1) | (values > self.levels)][0]
                raise DomainError(f"rating {bad} outside [1, {self.levels}]")
            if users.min() < 0 or users.max() >= self.n_users:
                raise DomainError("user index out of range")
            if items.min() < 0 or items.max() >= self.n_items:
                raise DomainError("item index out of range")
        key = users * max(self.n_items, 1) + items
        order = np.argsort(key, kind="stable")
        key = key[order]
        if len(key) > 1 and np.any(key[1:] == key[:-1]):
            raise DomainError("duplicate (user, item) entries")
        for name, arr in (("users", users), ("items", items)):
            arr = arr[order]
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        values = values[order].astype(np.int8)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "n_users", int(self.n_users))
        object.__setattr__(self, "n_items", int(self.n_items))
        object.__setattr__(self, "levels", int(self.levels))

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_dense(cls, array, levels=None):
        """Build from a dense array where 0 marks an erased entry."""
        array = np.asarray(array)
        if array.ndim != 2:
            raise DomainError("dense ratings must be two-dimensional")
        users, items = np.nonzero(array != ERASED)
        values = array[users, items]
        if levels is None:
            levels = max(2, int(values.max()) if len(values) else 2)
        return cls(users, items, values, array.shape[0], array.shape[1], levels)

    @classmethod
    def empty(cls, n_users, n_items, levels=2):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, n_users, n_items, levels)

    # -- views ------------------------------------------------------------

    @property
    def shape(self):
        return (self.n_users, self.n_items)

    @property
    def nnz(self):
        return len(self.values)

    def __len__(self):
        return self.nnz

    def __repr__(self):
        return (f"RatingMatrix(n_users={self.n_users}, n_items={self.n_items}, "
                f"levels={self.levels}, nnz={self.nnz})")

    def __eq__(self, other):
        if not isinstance(other, RatingMatrix):
            return NotImplemented
        return (self.shape == other.shape and self.levels == other.levels
                and np.array_equal(self.users, other.users)
                and np.array_equal(self.items, other.items)
                and np.array_equal(self.values, other.values))

    __hash__ = None

    @cached_property
    def csr(self) -> sp.csr_matrix:
        """Values as a CSR matrix (int8, erased entries not stored)."""
        m = sp.csr_matrix((self.values, (self.users, self.items)),
                          shape=self.shape, dtype=np.int8)
        m.sort_indices()
        return m

    def to_dense(self):
        """Dense int8 array with :data:`ERASED` where nothing was observed."""
        out = np.zeros(self.shape, dtype=np.int8)
        out[self.users, self.items] = self.values
        return out

    def observed(self):
        """0/1 CSR indicator of the support."""
        return sp.csr_matrix((np.ones(self.nnz, dtype=np.int32),
                              (self.users, self.items)), shape=self.shape)

    def indicator(self, level):
        """0/1 CSR indicator of entries equal to ``level``."""
        sel = self.values == level
        return sp.csr_matrix((np.ones(int(sel.sum()), dtype=np.int32),
                              (self.users[sel], self.items[sel])),
                             shape=self.shape)

    def row_counts(self):
        return np.bincount(self.users, minlength=self.n_users)

    def col_counts(self):
        return np.bincount(self.items, minlength=self.n_items)

    def positions(self):
        """Set of observed ``(user, item)`` pairs."""
        return set(zip(self.users.tolist(), self.items.tolist()))

    @property
    def T(self):
        return RatingMatrix(self.items, self.users, self.values, self.n_items,
                            self.n_users, self.levels, self.item_ids,
                            self.user_ids)

    def select(self, mask):
        """Sub-matrix keeping the entries where ``mask`` (over nnz) is true."""
        mask = np.asarray(mask, dtype=bool)
        return RatingMatrix(self.users[mask], self.items[mask],
                            self.values[mask], self.n_users, self.n_items,
                            self.levels, self.user_ids, self.item_ids)

    def with_values(self, values):
        return RatingMatrix(self.users, self.items, values, self.n_users,
                            self.n_items, self.levels, self.user_ids,
                            self.item_ids)

    def to_csv(self, path_or_buf, one_based=False):
        """Write ``user,item,rating`` triples with a header row."""
        off = 1 if one_based else 0
        own = not hasattr(path_or_buf, "write")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user", "item", "rating"])
            w.writerows(zip((self.users + off).tolist(),
                            (self.items + off).tolist(),
                            self.values.tolist()))
        finally:
            if own:
                fh.close()


# -- ingestion ------------------------------------------------------------

def _parse_records(lines, fmt):
    sep = "::" if fmt == "movielens-dat" else ","
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(sep)]
        if fmt == "csv-triples" and lineno == 1 and not _is_number(parts[0]):
            continue  # header
        if len(parts) < 3 or len(parts) > 4:
            raise ParseError(f"expected 3 or 4 fields, got {len(parts)}",
                             lineno)
        try:
            rating = float(parts[2])
        except ValueError:
            raise ParseError(f"rating {parts[2]!r} is not numeric",
                             lineno) from None
        if rating != int(rating):
            raise ParseError(f"rating {parts[2]!r} is not an integer level",
                             lineno)
        yield lineno, parts[0], parts[1], int(rating)


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _id_key(s):
    try:
        return (0, int(s), s)
    except ValueError:
        return (1, 0, s)


def load_ratings(path, format="movielens-dat", levels=None, index="contiguous"):
    """Read a rating file into a :class:`RatingMatrix`.

    Parameters
    ----------
    path : str or Path
        MovieLens ``UserID::MovieID::Rating::Timestamp`` file or CSV triples
        ``user,item,rating`` (header optional, fourth column ignored).
    format : {"movielens-dat", "csv-triples"}
    levels : int, optional
        Number of levels ``G``. Inferred as the largest observed rating.
    index : {"contiguous", "raw"}
        ``contiguous`` maps the seen ids (sorted) onto ``0..n-1``.
        ``raw`` requires positive integer ids and uses ``id - 1`` directly,
        so the shape is the largest id seen.

    Duplicate ``(user, item)`` records keep the last occurrence.
    """
    if format not in ("movielens-dat", "csv-triples"):
        raise DomainError(f"unknown format {format!r}")
    if index not in ("contiguous", "raw"):
        raise DomainError(f"unknown index mode {index!r}")
    records = {}
    with open(path, encoding="latin-1") as fh:
        for lineno, u, m, r in _parse_records(fh, format):
            if r < 1:
                raise DomainError(f"line {lineno}: rating {r} below 1")
            if levels is not None and r > levels:
                raise DomainError(f"line {lineno}: rating {r} outside "
                                  f"[1, {levels}]")
            records.pop((u, m), None)
            records[(u, m)] = r
    if not records:
        return RatingMatrix.empty(0, 0, levels or 2)
    raw_u = [k[0] for k in records]
    raw_m = [k[1] for k in records]
    vals = np.fromiter(records.values(), dtype=np.int64, count=len(records))
    G = int(levels) if levels is not None else max(2, int(vals.max()))
    if index == "raw":
        try:
            users = np.array([int(x) for x in raw_u], dtype=np.int64) - 1
            items = np.array([int(x) for x in raw_m], dtype=np.int64) - 1
        except ValueError:
            raise DomainError("raw indexing needs integer ids") from None
        if users.min() < 0 or items.min() < 0:
            raise DomainError("raw indexing needs ids >= 1")
        nu, nm = int(users.max()) + 1, int(items.max()) + 1
        return RatingMatrix(users, items, vals, nu, nm, G,
                            np.arange(1, nu + 1), np.arange(1, nm + 1))
    uid = sorted(set(raw_u), key=_id_key)
    mid = sorted(set(raw_m), key=_id_key)
    upos = {k: i for i, k in enumerate(uid)}
    mpos = {k: i for i, k in enumerate(mid)}
    users = np.array([upos[x] for x in raw_u], dtype=np.int64)
    items = np.array([mpos[x] for x in raw_m], dtype=np.int64)
    return RatingMatrix(users, items, vals, len(uid), len(mid), G,
                        np.array(uid, dtype=object), np.array(mid, dtype=object))


# -- transforms -----------------------------------------------------------

def quantize_binary(r, threshold=3.5):
    """Map ratings above ``threshold`` to level 2 (liked, +1), others to 1.

    A rating exactly at the threshold goes to level 1.
    """
    values = np.where(r.values > threshold, 2, 1)
    return RatingMatrix(r.users, r.items, values, r.n_users, r.n_items, 2,
                        r.user_ids, r.item_ids)


@dataclass(frozen=True, eq=False)
class MaskSplit:
    """Disjoint train/test partition of a matrix's support.

    ``test`` is a boolean array aligned with the source matrix's entries.
    """

    test: np.ndarray
    hide_fraction: float
    seed: object

    @property
    def n_test(self):
        return int(self.test.sum())

    @property
    def n_train(self):
        return int(len(self.test) - self.test.sum())

    def train_of(self, r):
        self._check(r)
        return r.select(~self.test)

    def test_of(self, r):
        self._check(r)
        return r.select(self.test)

    def _check(self, r):
        if r.nnz != len(self.test):
            raise DomainError("mask does not match the matrix support")

    def to_csv(self, r, path_or_buf):
        """Audit file with one ``user,item,split`` row per support entry."""
        self._check(r)
        own = not hasattr(path_or_buf, "write")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user", "item", "split"])
            labels = np.where(self.test, "test", "train")
            w.writerows(zip(r.users.tolist(), r.items.tolist(), labels.tolist()))
        finally:
            if own:
                fh.close()

    @classmethod
    def from_csv(cls, r, path_or_buf, hide_fraction=float("nan"), seed=None):
        if isinstance(path_or_buf, (str, Path)):
            text = Path(path_or_buf).read_text()
        else:
            text = path_or_buf.read()
        rows = list(csv.DictReader(io.StringIO(text)))
        lookup = {(int(x["user"]), int(x["item"])): x["split"] == "test"
                  for x in rows}
        if len(lookup) != r.nnz:
            raise DomainError("mask file does not cover the matrix support")
        try:
            test = np.array([lookup[(u, m)] for u, m in
                             zip(r.users.tolist(), r.items.tolist())], dtype=bool)
        except KeyError as e:
            raise DomainError(f"mask file lacks entry {e.args[0]}") from None
        return cls(test, hide_fraction, seed)


def split_mask(r, hide_fraction, seed):
    """Uniform random train/test split of the support.

    ``round(hide_fraction * nnz)`` entries (halves rounded up) go to test.
    """
    if not 0.0 <= hide_fraction <= 1.0:
        raise DomainError(f"hide_fraction must be in [0, 1], got {hide_fraction}")
    n = r.nnz
    n_test = int(np.floor(hide_fraction * n + 0.5))
    rng = np.random.default_rng(seed)
    test = np.zeros(n, dtype=bool)
    test[rng.permutation(n)[:n_test]] = True
    test.setflags(write=False)
    return MaskSplit(test, float(hide_fraction), seed)


def flip_noise(r, flip_prob, seed):
    """Swap each observed binary rating to the other level w.p. ``flip_prob``."""
    if r.levels != 2:
        raise DomainError("flip_noise needs a binary matrix; use the biased "
                          "channel in richcf.synth for G > 2")
    if not 0.0 <= flip_prob <= 1.0:
        raise DomainError(f"flip_prob must be in [0, 1], got {flip_prob}")
    rng = np.random.default_rng(seed)
    flip = rng.random(r.nnz) < flip_prob
    return r.with_values(np.where(flip, 3 - r.values, r.values))
