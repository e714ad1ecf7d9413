import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckdehr.evaluation.metrics import (PredictionSet, UndefinedMetricError, accuracy, aupr, aupr_single,
                                       auroc, auroc_single, confusion_per_label, evaluate, macro_f1,
                                       per_label_f1)


def pairwise_auroc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def enumerated_aupr(s, y):
    """Sweep every distinct threshold from the top, prediction = score >= t."""
    area, prev_recall = 0.0, 0.0
    for t in sorted(set(s.tolist()), reverse=True):
        pred = s >= t
        tp = int(np.sum(pred & (y == 1)))
        precision = tp / int(pred.sum())
        recall = tp / int(y.sum())
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


def fixture(seed, n=40, labels=25, ties=False):
    r = np.random.default_rng(seed)
    y = (r.random((n, labels)) < 0.3).astype(int)
    s = np.clip(0.35 * y + r.random((n, labels)) * 0.7, 0, 1)
    if ties:
        s = np.round(s, 1)
    return PredictionSet(s, y)


def test_accuracy_examples():
    y = np.eye(3, 25, dtype=int)
    assert accuracy(PredictionSet(y.astype(float), y)) == 1.0
    assert accuracy(PredictionSet(1.0 - y, y)) == 0.0
    s = y.astype(float)
    wrong = [(0, 3), (1, 7), (2, 2), (2, 9), (0, 0)]
    for i, j in wrong:
        s[i, j] = 1 - s[i, j]
    assert accuracy(PredictionSet(s, y)) == pytest.approx(70 / 75, abs=0)


def test_macro_f1_conventions():
    y = np.zeros((4, 25), dtype=int)
    y[:, 0] = [1, 0, 1, 0]
    assert macro_f1(PredictionSet(y.astype(float), y)) == pytest.approx(1 / 25)
    full = np.eye(25, dtype=int)
    assert macro_f1(PredictionSet(full.astype(float), full)) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_f1_matches_hand_precision_recall(seed):
    p = fixture(seed)
    pred = p.scores >= 0.5
    expected = []
    for j in range(25):
        tp = sum(1 for i in range(p.n_samples) if pred[i, j] and p.truths[i, j])
        npred, nact = int(pred[:, j].sum()), int(p.truths[:, j].sum())
        if tp == 0:
            expected.append(0.0)
            continue
        prec, rec = tp / npred, tp / nact
        expected.append(2 * prec * rec / (prec + rec))
    assert np.allclose(per_label_f1(p), expected, atol=1e-15)
    assert macro_f1(p) == pytest.approx(np.mean(expected), abs=1e-15)


def test_auroc_examples():
    y = np.array([[1, 0], [0, 1], [1, 1], [0, 0]])
    assert auroc(PredictionSet(y.astype(float), y)) == 1.0
    assert auroc(PredictionSet(np.full((4, 2), 0.3), y)) == 0.5


def test_aupr_examples():
    y = np.array([[1], [0], [1], [0]])
    assert aupr(PredictionSet(np.array([[0.9], [0.1], [0.8], [0.2]]), y)) == 1.0
    n = 7
    y = np.zeros((n, 1), dtype=int)
    y[-1] = 1
    s = np.linspace(0.9, 0.1, n)[:, None]
    assert aupr(PredictionSet(s, y)) == pytest.approx(1 / n, abs=1e-15)


@pytest.mark.parametrize("seed,n,ties", [(0, 40, False), (1, 40, True), (2, 200, False), (3, 200, True),
                                         (4, 17, True), (5, 120, False)])
def test_auroc_aupr_match_brute_force(seed, n, ties):
    p = fixture(seed, n=n, ties=ties)
    for j in range(25):
        s, y = p.scores[:, j], p.truths[:, j]
        if 0 < y.sum() < n:
            assert abs(auroc_single(s, y) - pairwise_auroc(s, y)) < 1e-12
            assert abs(aupr_single(s, y) - enumerated_aupr(s, y)) < 1e-12


def test_degenerate_labels_excluded_and_named():
    p = fixture(0, n=30)
    p.truths[:, 4] = 0
    p.truths[:, 9] = 1
    report = evaluate(p, [f"L{j}" for j in range(25)])
    assert report.excluded_labels == ["L4", "L9"]
    assert report.per_label[4].auroc is None and report.per_label[4].aupr is None
    included = [r.auroc for r in report.per_label if r.auroc is not None]
    assert report.auroc == pytest.approx(np.mean(included), abs=1e-15)
    with pytest.raises(UndefinedMetricError):
        auroc(PredictionSet(np.full((3, 25), 0.5), np.zeros((3, 25))))


def test_confusion_hand_tabulated():
    s = np.array([0.9, 0.2, 0.6, 0.4, 0.7, 0.1])[:, None]
    y = np.array([1, 1, 0, 0, 1, 0])[:, None]
    assert confusion_per_label(PredictionSet(s, y)).tolist() == [[2, 1, 1, 2]]
    z = confusion_per_label(PredictionSet(np.zeros((5, 25)), np.zeros((5, 25))))
    assert np.all(z[:, 0] == 5) and np.all(z[:, 1:] == 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(0, 10_000))
def test_confusion_partitions_and_order_invariance(n, seed):
    p = fixture(seed, n=n, labels=25, ties=seed % 2 == 0)
    conf = confusion_per_label(p)
    assert np.all(conf.sum(axis=1) == n)
    perm = np.random.default_rng(seed).permutation(n)
    q = PredictionSet(p.scores[perm], p.truths[perm])
    assert accuracy(q) == accuracy(p)
    assert macro_f1(q) == macro_f1(p)
    assert np.array_equal(confusion_per_label(q), conf)


def test_prediction_set_validation():
    with pytest.raises(ValueError, match="shapes"):
        PredictionSet(np.zeros((2, 25)), np.zeros((3, 25)))
    with pytest.raises(ValueError, match="threshold"):
        PredictionSet(np.zeros((2, 25)), np.zeros((2, 25)), threshold=1.0)
    with pytest.raises(ValueError, match="binary"):
        PredictionSet(np.zeros((2, 25)), np.full((2, 25), 2))


def test_report_serialisations_are_deterministic():
    p = fixture(7, n=50)
    a, b = evaluate(p), evaluate(p)
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert set(d) >= {"acc", "macro_f1", "auroc", "aupr", "per_label", "aggregation"}
    for row in a.per_label:
        assert row.tn + row.fp + row.fn + row.tp == 50
    table = a.to_table()
    assert table.startswith("# acc=micro") and len(table.splitlines()) == 4 + 1 + 25
    csv_lines = a.confusion_csv().splitlines()
    assert csv_lines[0] == "label,tn,fp,fn,tp" and len(csv_lines) == 26
