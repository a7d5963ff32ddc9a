"""Evaluation protocol: metrics on hidden ratings, noise runs, phase sweeps.

Every metric counts an entry without a prediction as an error.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import algorithms
from .algorithms import UNPREDICTED, estimate_cluster_size
from .ratings import DomainError, flip_noise, quantize_binary, split_mask
from .synth import generate_instance, thresholds

__all__ = [
    "EvalReport",
    "outcomes",
    "overall_error",
    "top_x_error",
    "sparse_user_error",
    "evaluate",
    "default_params",
    "run_protocol",
    "phase_sweep",
    "summarize_sweep",
    "write_sweep_csv",
    "monotone_up_to",
    "TOP_X",
    "SPARSE_THRESHOLDS",
]

TOP_X = (1, 2, 3, 4, 5, 6)
SPARSE_THRESHOLDS = tuple(range(30, 201, 10))


def outcomes(pred, test):
    """Per test entry: 1 correct, 0 wrong, -1 unpredicted."""
    p = pred.predictions[test.users, test.items]
    out = np.where(p == test.values, 1, 0)
    out[p == UNPREDICTED] = -1
    return out


def overall_error(pred, test):
    """Fraction of test entries predicted wrongly or not at all."""
    if test.nnz == 0:
        raise DomainError("empty test set")
    return float(np.mean(outcomes(pred, test) != 1))


def _top_selection(pred, test, x, liked):
    if x < 1:
        raise DomainError("x must be at least 1")
    margin = pred.margin(liked, test.users, test.items)
    margin[pred.predictions[test.users, test.items] == UNPREDICTED] = -np.inf
    # users ascending, margin descending, item ascending
    order = np.lexsort((test.items, -margin, test.users))
    users = test.users[order]
    start = np.searchsorted(users, users, side="left")
    rank = np.arange(len(users)) - start
    return order[rank < x]


def top_x_error(pred, test, x, liked=None):
    """Error among the ``x`` test items ranked highest for each user.

    Items are ranked by the vote margin of the ``liked`` level; a selected
    item is an error when its hidden level is not ``liked`` or when it has no
    prediction. Users with fewer than ``x`` test items contribute all of them.
    """
    if liked is None:
        if pred.levels != 2:
            raise DomainError("non-binary ratings need an explicit liked level")
        liked = 2
    if test.nnz == 0:
        raise DomainError("empty test set")
    sel = _top_selection(pred, test, x, liked)
    p = pred.predictions[test.users[sel], test.items[sel]]
    wrong = (test.values[sel] != liked) | (p == UNPREDICTED)
    return float(wrong.mean())


def sparse_user_error(pred, test, train, thresholds=SPARSE_THRESHOLDS):
    """Overall error restricted to users with fewer than ``x`` training ratings.

    Thresholds whose bucket holds no test entry are left out of the result.
    """
    thresholds = list(thresholds)
    if not thresholds:
        raise DomainError("thresholds must be non-empty")
    counts = train.row_counts()
    bad = outcomes(pred, test) != 1
    owner = counts[test.users]
    out = {}
    for x in thresholds:
        sel = owner < x
        if sel.any():
            out[int(x)] = float(bad[sel].mean())
    return out


@dataclass
class EvalReport:
    overall_error: float
    top_x_error: dict
    sparse_user_error: dict
    counts: dict
    protocol: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["top_x_error"] = {str(k): v for k, v in self.top_x_error.items()}
        d["sparse_user_error"] = {str(k): v for k, v in self.sparse_user_error.items()}
        return d

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path_or_buf):
        """``metric,key,value`` rows."""
        own = not hasattr(path_or_buf, "write")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "key", "value"])
            w.writerow(["overall_error", "", repr(self.overall_error)])
            for k, v in self.top_x_error.items():
                w.writerow(["top_x_error", k, repr(v)])
            for k, v in self.sparse_user_error.items():
                w.writerow(["sparse_user_error", k, repr(v)])
            for k, v in self.counts.items():
                w.writerow(["count", k, v])
        finally:
            if own:
                fh.close()


def evaluate(pred, test, train, xs=TOP_X, sparse_thresholds=SPARSE_THRESHOLDS,
             liked=None, protocol=None):
    """All metrics for one completed matrix against the hidden ratings."""
    o = outcomes(pred, test)
    counts = {
        "test": int(test.nnz),
        "predicted": int((o != -1).sum()),
        "unpredicted": int((o == -1).sum()),
        "correct": int((o == 1).sum()),
        "wrong": int((o == 0).sum()),
    }
    top = {}
    if pred.scores is not None and (liked is not None or pred.levels == 2):
        top = {int(x): top_x_error(pred, test, x, liked) for x in xs}
    return EvalReport(overall_error(pred, test), top,
                      sparse_user_error(pred, test, train, sparse_thresholds),
                      counts, dict(protocol or {}))


def default_params(algo, train):
    """Fill missing size parameters from the training data.

    Cluster sizes come from :func:`~richcf.algorithms.estimate_cluster_size`
    on each axis; PAF uses one fewer neighbor than the user cluster size.
    """
    def users():
        return estimate_cluster_size(train, axis="users")

    def items():
        return estimate_cluster_size(train, axis="items")

    table = {
        "ucr": {"cluster_size": users},
        "icr": {"cluster_size": items},
        "cor": {"user_cluster_size": users, "item_cluster_size": items},
        "hucr": {"T": users},
        "hicr": {"T": items},
        "hcor": {"T_users": users, "T_items": items},
        "paf": {"k": lambda: users() - 1},
    }
    return table.get(algo, {})


def _resolve(algo, params, train):
    params = dict(params or {})
    for name, fill in default_params(algo, train).items():
        if params.get(name) is None:
            params[name] = int(fill())
    return params


def run_protocol(data, algo, params=None, hide_fraction=0.7, noise=0.0, seed=0,
                 quantize=True, threshold=3.5, xs=TOP_X,
                 sparse_thresholds=SPARSE_THRESHOLDS, n_jobs=1):
    """Quantize, split, optionally flip training ratings, complete, score.

    ``seed`` is split with ``SeedSequence.spawn(2)`` into the split stream and
    the noise stream.

    Returns
    -------
    report : EvalReport
    completed : CompletedMatrix
    split : MaskSplit
    """
    r = quantize_binary(data, threshold) if quantize else data
    s_split, s_noise = np.random.SeedSequence(seed).spawn(2)
    split = split_mask(r, hide_fraction, s_split)
    train, test = split.train_of(r), split.test_of(r)
    if noise > 0:
        train = flip_noise(train, noise, s_noise)
    params = _resolve(algo, params, train)
    completed = algorithms.run_algorithm(algo, train, params, n_jobs=n_jobs)
    protocol = {"algo": algo, "params": params, "hide_fraction": hide_fraction,
                "noise": noise, "seed": seed, "quantize": quantize,
                "threshold": threshold}
    report = evaluate(completed, test, train, xs, sparse_thresholds,
                      protocol=protocol)
    return report, completed, split


# -- phase sweeps ---------------------------------------------------------

def _synthetic_params(algo, cfg):
    cu, ci = cfg.U // cfg.K, cfg.M // cfg.K
    return {
        "ucr": {"cluster_size": cu}, "icr": {"cluster_size": ci},
        "cor": {"user_cluster_size": cu, "item_cluster_size": ci},
        "hucr": {"T": cu}, "hicr": {"T": ci},
        "hcor": {"T_users": cu, "T_items": ci}, "paf": {"k": cu - 1},
    }[algo]


def _trial(base_cfg, param, value, point, trial, seed, algo, params):
    cfg = base_cfg.replace(**{param: value})
    ss = np.random.SeedSequence(seed, spawn_key=(point, trial))
    inst = generate_instance(cfg, seed=ss)
    p = dict(_synthetic_params(algo, cfg))
    p.update(params or {})
    out = algorithms.run_algorithm(algo, inst.observed, p)
    B = inst.truth.dense()
    wrong = int((out.predictions != B).sum())
    th = thresholds(cfg)
    return {
        "param": param, "value": value, "point": point, "trial": trial,
        "seed": f"{seed}:{point}:{trial}", "algo": algo,
        "exact": int(wrong == 0), "error_rate": wrong / B.size,
        "observed": inst.observed.nnz,
        "expected_observations": th.expected_observations,
        "clustering_necessary_alpha": th.clustering_necessary_alpha,
        "clustering_sufficient_alpha": th.clustering_sufficient_alpha,
        "sufficient_alpha_given_beta": th.sufficient_alpha_given_beta,
        "coclustering_sufficient_count": th.coclustering_sufficient_count,
        "clustering_impossible": int(th.clustering_impossible),
        "clustering_recoverable": int(th.clustering_recoverable),
        "coclustering_recoverable": int(th.coclustering_recoverable),
    }


def phase_sweep(base_cfg, param, values, trials, algo="ucr", params=None,
                seed=0, n_jobs=1):
    """Exact-recovery trials over a one-parameter grid.

    Trial ``t`` at grid point ``i`` draws its instance from
    ``SeedSequence(seed, spawn_key=(i, t))``, so rows do not depend on
    ``n_jobs``. Returns one dict per (grid point, trial), in grid order.
    """
    values = list(values)
    if not values:
        raise DomainError("sweep grid is empty")
    if trials < 1:
        raise DomainError("trials must be at least 1")
    jobs = [(i, t, v) for i, v in enumerate(values) for t in range(trials)]

    def run(job):
        i, t, v = job
        return _trial(base_cfg, param, v, i, t, seed, algo, params)

    if n_jobs == 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(run, jobs))


def summarize_sweep(rows):
    """Recovery fraction per grid point: list of ``(value, fraction, trials)``."""
    by_point = {}
    for row in rows:
        by_point.setdefault(row["point"], []).append(row)
    out = []
    for point in sorted(by_point):
        rs = by_point[point]
        out.append((rs[0]["value"], sum(r["exact"] for r in rs) / len(rs), len(rs)))
    return out


def write_sweep_csv(rows, path_or_buf):
    own = not hasattr(path_or_buf, "write")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v)
                            for k, v in row.items()})
    finally:
        if own:
            fh.close()


def monotone_up_to(fractions, slack):
    """True when no later fraction falls more than ``slack`` below an earlier one."""
    best = -math.inf
    for f in fractions:
        if f < best - slack - 1e-12:
            return False
        best = max(best, f)
    return True
