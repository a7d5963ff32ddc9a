"""Synthetic clustered preference matrices and the observation model.

The generator follows the pipeline ``B -> biased channel -> erasure -> R``:

* ``B`` is a ``K x K`` block matrix expanded over equal, contiguous user and
  item clusters, redrawn until every pair of distinct clusters agrees on at
  most a ``mu_cap`` fraction of positions.
* The biased channel keeps each entry with probability ``p`` and otherwise
  emits one of the other ``G - 1`` levels uniformly.
* The erasure channel observes an entry with probability ``beta`` when its
  user or its item is information-rich and ``alpha`` otherwise.

Also here: the exact expectation of the number of observations, the
sample-complexity scales of the recovery regimes, and closed-form expected
similarities used as test oracles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .ratings import DomainError, RatingMatrix, RatingError

__all__ = [
    "InfeasibleError",
    "SynthConfig",
    "ClusterModel",
    "PreferenceMatrix",
    "GeneratedInstance",
    "ThresholdReport",
    "contiguous_clusters",
    "generate_preferences",
    "apply_biased_channel",
    "apply_erasure",
    "generate_instance",
    "expected_observations",
    "thresholds",
    "agreement_noise",
    "expected_similarity",
    "expected_corating",
    "read_config",
]


class InfeasibleError(RatingError):
    def __init__(self, message, best_mu=None):
        self.best_mu = best_mu
        super().__init__(message)


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of one synthetic instance.

    ``rich_per_item_cluster = 0`` gives the user-clustering model where all
    items share the same observation behaviour; likewise for users.
    """

    U: int = 400
    M: int = 400
    K: int = 4
    G: int = 2
    p: float = 0.9
    alpha: float = 0.08
    beta: float = 0.5
    eta: int = 2
    rich_per_user_cluster: int = 2
    rich_per_item_cluster: int = 0
    mu_cap: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if self.U < 1 or self.M < 1 or self.K < 1:
            raise DomainError("U, M and K must be positive")
        if self.U % self.K or self.M % self.K:
            raise DomainError(f"K={self.K} must divide U={self.U} and M={self.M}")
        if self.G < 2:
            raise DomainError("G must be at least 2")
        if not self.p > 1.0 / self.G or self.p > 1:
            raise DomainError(f"p={self.p} must lie in (1/G, 1]")
        if not 0 < self.alpha <= self.beta <= 1:
            raise DomainError(f"need 0 < alpha <= beta <= 1, got "
                              f"alpha={self.alpha}, beta={self.beta}")
        if not 0 < self.mu_cap < 1:
            raise DomainError("mu_cap must lie in (0, 1)")
        for name in ("rich_per_user_cluster", "rich_per_item_cluster"):
            n = getattr(self, name)
            if n != 0 and not 2 <= n <= self.eta:
                raise DomainError(f"{name}={n} must be 0 or in [2, eta={self.eta}]")
        if self.rich_per_user_cluster > self.U // self.K:
            raise DomainError("more rich users than cluster members")
        if self.rich_per_item_cluster > self.M // self.K:
            raise DomainError("more rich items than cluster members")

    @property
    def user_cluster_size(self):
        return self.U // self.K

    @property
    def item_cluster_size(self):
        return self.M // self.K

    def satisfies_conditions(self):
        """True when the strict model assumptions hold (``alpha < beta < 1``)."""
        return self.alpha < self.beta < 1

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)


def read_config(path, **overrides):
    """Load a :class:`SynthConfig` from ``key = value`` lines.

    Blank lines and ``#`` comments are ignored; ``overrides`` win.
    """
    types = {f.name: f.type for f in fields(SynthConfig)}
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise DomainError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = int(val) if types[key] in (int, "int") else float(val)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SynthConfig(**values)


def contiguous_clusters(n, K):
    """Cluster labels ``0..K-1`` for ``n`` entities in contiguous equal blocks."""
    return np.arange(n) * K // n


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """Cluster assignment and information-rich entities on both axes."""

    K: int
    user_clusters: np.ndarray
    item_clusters: np.ndarray
    rich_users: np.ndarray
    rich_items: np.ndarray

    @classmethod
    def contiguous(cls, U, M, K, rich_per_user_cluster=0, rich_per_item_cluster=0):
        """Rich entities are the first indices of every cluster."""
        return cls(K, contiguous_clusters(U, K), contiguous_clusters(M, K),
                   _first_of_each(U, K, rich_per_user_cluster),
                   _first_of_each(M, K, rich_per_item_cluster))

    def is_rich_user(self):
        out = np.zeros(len(self.user_clusters), dtype=bool)
        out[self.rich_users] = True
        return out

    def is_rich_item(self):
        out = np.zeros(len(self.item_clusters), dtype=bool)
        out[self.rich_items] = True
        return out

    def to_csv(self, path_or_buf):
        """``axis,index,cluster,rich`` rows for users then items."""
        own = not hasattr(path_or_buf, "write")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["axis", "index", "cluster", "rich"])
            for axis, labels, rich in (("user", self.user_clusters, self.is_rich_user()),
                                       ("item", self.item_clusters, self.is_rich_item())):
                for i, (c, r) in enumerate(zip(labels.tolist(), rich.tolist())):
                    w.writerow([axis, i, c, int(r)])
        finally:
            if own:
                fh.close()


def _first_of_each(n, K, count):
    size = n // K
    return (np.arange(K)[:, None] * size + np.arange(count)[None, :]).ravel()


@dataclass(frozen=True, eq=False)
class PreferenceMatrix:
    """Ground-truth preferences, stored as blocks plus cluster labels."""

    block: np.ndarray
    user_clusters: np.ndarray
    item_clusters: np.ndarray
    levels: int

    @property
    def shape(self):
        return (len(self.user_clusters), len(self.item_clusters))

    def dense(self):
        return self.block[np.ix_(self.user_clusters, self.item_clusters)].astype(np.int8)

    @classmethod
    def from_dense(cls, array, levels=None):
        """Wrap a full matrix (every row its own cluster)."""
        array = np.asarray(array)
        levels = levels or int(array.max())
        return cls(array.copy(), np.arange(array.shape[0]),
                   np.arange(array.shape[1]), levels)

    def agreement(self, axis="users"):
        """Largest fraction of positions on which two distinct clusters agree.

        Computed by exhaustive comparison of expanded rows (or columns) of
        representative entities, one per cluster.
        """
        B = self.dense()
        labels = self.user_clusters if axis == "users" else self.item_clusters
        if axis != "users":
            B = B.T
        _, first = np.unique(labels, return_index=True)
        reps = B[first]
        if len(reps) < 2:
            return 0.0
        eq = (reps[:, None, :] == reps[None, :, :]).mean(axis=2)
        np.fill_diagonal(eq, -1.0)
        return float(eq.max())

    def achieved_mu(self):
        return max(self.agreement("users"), self.agreement("items"))


def _block_agreement(block):
    K = block.shape[0]
    if K < 2:
        return 0.0
    rows = (block[:, None, :] == block[None, :, :]).mean(axis=2)
    cols = (block.T[:, None, :] == block.T[None, :, :]).mean(axis=2)
    np.fill_diagonal(rows, -1.0)
    np.fill_diagonal(cols, -1.0)
    return float(max(rows.max(), cols.max()))


def generate_preferences(cfg, seed=None, max_tries=1000):
    """Draw block values uniformly over ``1..G`` until separability holds.

    Returns
    -------
    (PreferenceMatrix, ClusterModel)

    Raises
    ------
    InfeasibleError
        If no draw reaches ``mu <= mu_cap`` within ``max_tries``.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    clusters = ClusterModel.contiguous(cfg.U, cfg.M, cfg.K,
                                       cfg.rich_per_user_cluster,
                                       cfg.rich_per_item_cluster)
    best = math.inf
    for _ in range(max_tries):
        block = rng.integers(1, cfg.G + 1, size=(cfg.K, cfg.K))
        mu = _block_agreement(block)
        best = min(best, mu)
        if mu <= cfg.mu_cap:
            truth = PreferenceMatrix(block, clusters.user_clusters,
                                     clusters.item_clusters, cfg.G)
            return truth, clusters
    raise InfeasibleError(f"no block draw reached mu <= {cfg.mu_cap} in "
                          f"{max_tries} tries (best {best:.3f})", best)


def apply_biased_channel(truth, p, seed):
    """Dense noisy ratings: the true level w.p. ``p``, else a uniform other level."""
    B = truth.dense() if isinstance(truth, PreferenceMatrix) else np.asarray(truth)
    G = truth.levels if isinstance(truth, PreferenceMatrix) else int(B.max())
    if not p > 1.0 / G or p > 1:
        raise DomainError(f"p={p} must lie in (1/G, 1] with G={G}")
    rng = np.random.default_rng(seed)
    keep = rng.random(B.shape) < p
    shift = rng.integers(1, G, size=B.shape)
    noisy = np.where(keep, B, (B - 1 + shift) % G + 1)
    return RatingMatrix.from_dense(noisy, levels=G)


def apply_erasure(dense, clusters, alpha, beta, seed):
    """Observe each entry independently w.p. beta (rich endpoint) or alpha."""
    for name, v in (("alpha", alpha), ("beta", beta)):
        if not 0 <= v <= 1:
            raise DomainError(f"{name}={v} must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    rich = clusters.is_rich_user()[:, None] | clusters.is_rich_item()[None, :]
    prob = np.where(rich, beta, alpha)
    keep = rng.random(dense.shape) < prob
    vals = dense.to_dense() if isinstance(dense, RatingMatrix) else np.asarray(dense)
    levels = dense.levels if isinstance(dense, RatingMatrix) else None
    return RatingMatrix.from_dense(np.where(keep, vals, 0), levels=levels)


@dataclass(frozen=True, eq=False)
class GeneratedInstance:
    truth: PreferenceMatrix
    observed: RatingMatrix
    clusters: ClusterModel
    config: SynthConfig

    def export(self, directory, prefix="instance"):
        """Write observed triples, truth triples and cluster labels as CSV."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.observed.to_csv(d / f"{prefix}_observed.csv")
        RatingMatrix.from_dense(self.truth.dense(), self.config.G).to_csv(
            d / f"{prefix}_truth.csv")
        self.clusters.to_csv(d / f"{prefix}_clusters.csv")


def generate_instance(cfg, seed=None):
    """Full pipeline from a config.

    The seed (``cfg.seed`` unless given) is split with
    ``SeedSequence.spawn(3)`` into block, channel and erasure streams.
    """
    seed = cfg.seed if seed is None else seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_block, s_channel, s_erase = ss.spawn(3)
    truth, clusters = generate_preferences(cfg, seed=s_block)
    noisy = apply_biased_channel(truth, cfg.p, s_channel)
    observed = apply_erasure(noisy, clusters, cfg.alpha, cfg.beta, s_erase)
    return GeneratedInstance(truth, observed, clusters, cfg)


# -- theory ---------------------------------------------------------------

def expected_observations(cfg):
    """Exact ``E[X_R]``: beta per rich-endpoint entry, alpha per sparse-sparse."""
    ru = cfg.K * cfg.rich_per_user_cluster
    ri = cfg.K * cfg.rich_per_item_cluster
    rich_entries = ru * cfg.M + ri * cfg.U - ru * ri
    return cfg.beta * rich_entries + cfg.alpha * (cfg.U * cfg.M - rich_entries)


@dataclass(frozen=True)
class ThresholdReport:
    """Scales of the recovery regimes for one configuration.

    Asymptotic ``omega(f)`` conditions are read as ``>= c * f`` with
    ``c = constant``.
    """

    constant: float
    expected_observations: float
    clustering_necessary_alpha: float       # K / U
    clustering_sufficient_alpha: float      # K ln M / M
    sufficient_alpha_given_beta: float      # ln M / (M beta)
    coclustering_necessary_alpha: float     # K^2 / (U M)
    coclustering_necessary_beta: float      # K / (eta (M+U) - eta^2 K)
    coclustering_sufficient_count: float    # K^2 ln M
    coclustering_alpha_scale: float         # K^2 ln M / M^2
    coclustering_beta_scale: float          # K ln M / M
    k_regime_ratio: float                   # (M / ln M) / K
    clustering_impossible: bool
    clustering_recoverable: bool
    coclustering_impossible: bool
    coclustering_recoverable: bool
    k_regime_ok: bool
    k_regime_tight: bool

    def to_dict(self):
        return asdict(self)


# integer K dividing M rarely hits M / ln M exactly
_TIGHT = 0.01


def thresholds(cfg, constant=1.0):
    """Evaluate the necessary and sufficient scales at ``cfg``."""
    U, M, K = cfg.U, cfg.M, cfg.K
    a, b, c = cfg.alpha, cfg.beta, constant
    lnM = math.log(M)
    eta = cfg.eta
    ex = expected_observations(cfg)
    beta_nec_den = eta * (M + U) - eta ** 2 * K
    beta_nec = K / beta_nec_den if beta_nec_den > 0 else math.inf
    suff_ab = lnM / (M * b)
    co_i = a >= c * K ** 2 * lnM / M ** 2 or b >= c * K * lnM / M
    co_ii = a * b >= c * lnM / M or b ** 2 >= c * lnM / K
    ratio = (M / lnM) / K if lnM > 0 else math.inf
    return ThresholdReport(
        constant=c,
        expected_observations=ex,
        clustering_necessary_alpha=K / U,
        clustering_sufficient_alpha=K * lnM / M,
        sufficient_alpha_given_beta=suff_ab,
        coclustering_necessary_alpha=K ** 2 / (U * M),
        coclustering_necessary_beta=beta_nec,
        coclustering_sufficient_count=K ** 2 * lnM,
        coclustering_alpha_scale=K ** 2 * lnM / M ** 2,
        coclustering_beta_scale=K * lnM / M,
        k_regime_ratio=ratio,
        clustering_impossible=a <= K / U,
        clustering_recoverable=a >= c * K * lnM / M and a >= c * suff_ab,
        coclustering_impossible=a <= K ** 2 / (U * M) and b <= beta_nec,
        coclustering_recoverable=co_i and co_ii,
        k_regime_ok=ratio >= 1 - _TIGHT,
        k_regime_tight=abs(ratio - 1) <= _TIGHT,
    )


def agreement_noise(p, G):
    """Probabilities that two independent noisy ratings coincide.

    Returns ``(z1, z2)``: ``z1`` when the two true preferences are equal,
    ``z2`` when they differ.
    """
    off = (1 - p) / (G - 1)
    z1 = p ** 2 + (1 - p) ** 2 / (G - 1)
    z2 = (1 - p ** 2) / (G - 1) - off ** 2
    return z1, z2


_RATES = {1: ("beta", "beta"), 2: ("alpha", "beta"), 3: ("beta", "beta"),
          4: ("alpha", "beta"), 5: ("alpha", "alpha"), 6: ("alpha", "alpha")}


def expected_similarity(case, cfg, mu):
    """Expected similarity of a user pair in one of six cases.

    ====  ======================  ===============
    case  clusters                observation
    ====  ======================  ===============
    1     same                    rich / rich
    2     same                    rich / sparse
    3     different               rich / rich
    4     different               rich / sparse
    5     same                    sparse / sparse
    6     different               sparse / sparse
    ====  ======================  ===============

    Returns ``(lower, upper)``. Same-cluster cases are exact, so both bounds
    coincide. For different clusters the pair agrees on some unknown
    fraction ``mu' <= mu`` of items; the bounds are the values at ``mu' = 0``
    and ``mu' = mu``, and passing the pair's actual agreement fraction as
    ``mu`` makes the upper bound exact.

    Only user-side heterogeneity is modelled: every item is observed at the
    user's own rate.
    """
    if case not in _RATES:
        raise DomainError(f"case must be one of 1..6, got {case!r}")
    z1, z2 = agreement_noise(cfg.p, cfg.G)
    ra, rb = (getattr(cfg, n) for n in _RATES[case])
    scale = cfg.M * ra * rb
    if case in (1, 2, 5):
        v = scale * (2 * z1 - 1)
        return v, v
    return scale * (2 * z2 - 1), scale * (2 * mu * z1 + 2 * (1 - mu) * z2 - 1)


def expected_corating(scenario, cfg):
    """Expected co-rating: rich/rich (1) is ``M beta^2``, rich/sparse (2) ``M alpha beta``."""
    if scenario == 1:
        return cfg.M * cfg.beta ** 2
    if scenario == 2:
        return cfg.M * cfg.alpha * cfg.beta
    raise DomainError(f"scenario must be 1 or 2, got {scenario!r}")
