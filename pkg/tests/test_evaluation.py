import io
import json

import numpy as np
import pytest

from richcf import RatingMatrix
from richcf.algorithms import UNPREDICTED, CompletedMatrix, hcor, paf_baseline, ucr
from richcf.evaluation import (evaluate, monotone_up_to, outcomes,
                               overall_error, phase_sweep, run_protocol,
                               sparse_user_error, summarize_sweep, top_x_error,
                               write_sweep_csv)
from richcf.ratings import DomainError, split_mask
from richcf.synth import SynthConfig, generate_instance

from conftest import random_ratings


def completed(pred, scores=None, levels=2):
    pred = np.asarray(pred, dtype=np.int8)
    return CompletedMatrix(pred, "manual", {}, levels,
                           None if scores is None else np.asarray(scores, np.float32))


def ratings(dense, levels=2):
    return RatingMatrix.from_dense(np.asarray(dense), levels=levels)


# -- overall error --------------------------------------------------------

def test_overall_error_extremes():
    test = ratings([[1, 2, 2, 1]])
    assert overall_error(completed([[1, 2, 2, 1]]), test) == 0.0
    assert overall_error(completed([[0, 0, 0, 0]]), test) == 1.0


def test_overall_error_counts_unpredicted_as_wrong():
    test = ratings([[1] * 10])
    pred = completed([[1] * 7 + [2, 2, UNPREDICTED]])
    assert overall_error(pred, test) == pytest.approx(0.3)
    assert outcomes(pred, test).tolist() == [1] * 7 + [0, 0, -1]


def test_overall_error_empty_test_set():
    with pytest.raises(DomainError):
        overall_error(completed([[1]]), RatingMatrix.empty(1, 1))


# -- top-x ----------------------------------------------------------------

def scores_for(margins):
    """Binary scores whose liked-level margin equals ``margins``."""
    m = np.asarray(margins, dtype=float)
    return np.stack([np.maximum(-m, 0), np.maximum(m, 0)])


def test_top_x_all_liked_user_has_no_errors():
    test = ratings([[2, 2, 2, 0]])
    pred = completed([[2, 1, 2, 2]], scores_for([[3, -1, 2, 5]]))
    for x in range(1, 5):
        assert top_x_error(pred, test, x) == 0.0


def test_top_x_single_pick_disliked():
    test = ratings([[1, 2, 2]])
    pred = completed([[2, 2, 1]], scores_for([[4, 1, -2]]))
    assert top_x_error(pred, test, 1) == 1.0
    assert top_x_error(pred, test, 2) == 0.5


def test_top_x_short_users_contribute_what_they_have():
    test = ratings([[2, 0, 0], [2, 1, 2]])
    pred = completed([[2, 2, 2], [2, 2, 2]], scores_for([[1, 1, 1], [3, 2, 1]]))
    # user 0 contributes 1 correct item, user 1 contributes 2 of 3 with one miss
    assert top_x_error(pred, test, 2) == pytest.approx(1 / 3)


def test_top_x_ties_go_to_smaller_item():
    test = ratings([[1, 2]])
    pred = completed([[2, 2]], scores_for([[1, 1]]))
    assert top_x_error(pred, test, 1) == 1.0


def test_top_x_unpredicted_selected_counts_as_error():
    test = ratings([[2]])
    pred = completed([[UNPREDICTED]], scores_for([[0]]))
    assert top_x_error(pred, test, 1) == 1.0


def test_top_x_needs_liked_level_beyond_binary():
    test = ratings([[3]], levels=3)
    pred = completed([[3]], np.zeros((3, 1, 1)), levels=3)
    with pytest.raises(DomainError):
        top_x_error(pred, test, 1)
    assert top_x_error(pred, test, 1, liked=3) == 0.0


def test_top_x_with_full_depth_matches_direct_count(rng):
    r = random_ratings(rng, 30, 20, density=0.5)
    split = split_mask(r, 0.7, 1)
    train, test = split.train_of(r), split.test_of(r)
    pred = ucr(train, 6)
    depth = int(test.row_counts().max())
    p = pred.predictions[test.users, test.items]
    direct = np.mean((test.values != 2) | (p == UNPREDICTED))
    assert top_x_error(pred, test, depth) == pytest.approx(direct)


# -- sparse users ---------------------------------------------------------

def test_sparse_user_buckets():
    train = ratings([[2, 2, 0, 0], [2, 2, 2, 0]])
    test = ratings([[0, 0, 1, 2], [0, 0, 0, 0]])
    pred = completed([[1, 1, 1, 1], [1, 1, 1, 1]])
    got = sparse_user_error(pred, test, train, thresholds=[1, 2, 3, 5])
    # user 0 has 2 training ratings: buckets "< 3" and "< 5"
    assert got == {3: 0.5, 5: 0.5}
    with pytest.raises(DomainError):
        sparse_user_error(pred, test, train, thresholds=[])


# -- reports --------------------------------------------------------------

def test_report_counts_and_serialization(rng):
    r = random_ratings(rng, 20, 15, density=0.6)
    split = split_mask(r, 0.7, 0)
    train, test = split.train_of(r), split.test_of(r)
    rep = evaluate(ucr(train, 4), test, train, protocol={"seed": 0})
    c = rep.counts
    assert c["wrong"] + c["correct"] + c["unpredicted"] == c["test"] == test.nnz
    assert rep.overall_error == pytest.approx((c["wrong"] + c["unpredicted"]) / c["test"])
    doc = json.loads(rep.to_json())
    assert set(doc["top_x_error"]) == {"1", "2", "3", "4", "5", "6"}
    buf = io.StringIO()
    rep.to_csv(buf)
    assert buf.getvalue().startswith("metric,key,value\noverall_error,,")


def test_metrics_recomputed_from_stored_predictions(tmp_path, rng):
    r = random_ratings(rng, 25, 25, density=0.5)
    rep, comp, split = run_protocol(r, "ucr", {"cluster_size": 5}, quantize=False)
    comp.save(tmp_path / "p.npz")
    again = evaluate(CompletedMatrix.load(tmp_path / "p.npz"), split.test_of(r),
                     split.train_of(r), protocol=rep.protocol)
    assert again.to_json() == rep.to_json()


# -- protocol -------------------------------------------------------------

def test_zero_noise_equals_no_noise(rng):
    r = random_ratings(rng, 30, 30, G=5, density=0.4)
    a = run_protocol(r, "paf", {"k": 5}, seed=4)[0]
    b = run_protocol(r, "paf", {"k": 5}, seed=4, noise=0.0)[0]
    assert a.to_json() == b.to_json()


def test_protocol_quantizes_and_hides():
    r = ratings([[5, 4, 1, 2, 3], [4, 5, 2, 1, 3]] * 5, levels=5)
    rep, comp, split = run_protocol(r, "ucr", {"cluster_size": 3}, seed=1)
    assert comp.levels == 2
    assert split.n_test == round(0.7 * r.nnz)


def test_recoverable_synthetic_instance_has_zero_error():
    cfg = SynthConfig(U=100, M=100, K=2, p=1.0, alpha=1.0, beta=1.0,
                      rich_per_user_cluster=0)
    inst = generate_instance(cfg, seed=0)
    rep, _, _ = run_protocol(inst.observed, "ucr", {"cluster_size": 50},
                             quantize=False, seed=3)
    assert rep.overall_error == 0.0


def test_protocol_fills_missing_sizes(rng):
    r = random_ratings(rng, 40, 30, density=0.5)
    rep, comp, _ = run_protocol(r, "hcor", None, quantize=False)
    assert comp.params["T_users"] >= 2 and comp.params["T_items"] >= 2


def test_isolated_user_counts_as_error_everywhere():
    # user 2 rates nothing in training, so nobody can vote for it
    train = ratings([[2, 2, 1, 0], [2, 2, 1, 1], [0, 0, 0, 0]])
    test = ratings([[0, 0, 0, 1], [0, 0, 0, 0], [2, 1, 0, 0]])
    algos = {"ucr": lambda: ucr(train, 2), "hcor": lambda: hcor(train, 2, 2),
             "paf": lambda: paf_baseline(train, 1)}
    for build in algos.values():
        pred = build()
        assert (pred.predictions[2] == UNPREDICTED).all()
        rep = evaluate(pred, test, train, xs=(1, 2), sparse_thresholds=(1, 5))
        assert rep.counts["unpredicted"] >= 2
        o = outcomes(pred, test)
        iso = test.users == 2
        assert (o[iso] == -1).all()
        assert rep.sparse_user_error[1] == 1.0
        assert top_x_error(pred, ratings([[0] * 4, [0] * 4, [2, 2, 0, 0]]), 2) == 1.0


# -- sweeps ---------------------------------------------------------------

def test_sweep_rows_and_determinism():
    base = SynthConfig(U=40, M=40, K=2, alpha=0.2, beta=0.6)
    a = phase_sweep(base, "alpha", [0.1, 0.3], trials=3, seed=5)
    b = phase_sweep(base, "alpha", [0.1, 0.3], trials=3, seed=5, n_jobs=3)
    assert a == b and len(a) == 6
    assert [row["point"] for row in a] == [0, 0, 0, 1, 1, 1]
    summary = summarize_sweep(a)
    assert [v for v, _, n in summary] == [0.1, 0.3] and all(n == 3 for *_, n in summary)
    buf = io.StringIO()
    write_sweep_csv(a, buf)
    assert len(buf.getvalue().splitlines()) == 7


def test_sweep_validation():
    with pytest.raises(DomainError):
        phase_sweep(SynthConfig(), "alpha", [], 2)
    with pytest.raises(DomainError):
        phase_sweep(SynthConfig(), "alpha", [0.1], 0)


def test_monotone_up_to():
    assert monotone_up_to([0, 0.1, 0.5, 0.45, 1.0], slack=0.1)
    assert not monotone_up_to([0, 0.6, 0.3, 1.0], slack=0.1)
