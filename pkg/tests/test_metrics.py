import json
import math

import numpy as np
import pytest

from oracles import hand_mcc, hand_metrics, pairwise_auc
from qmvit.metrics import (
    basic_metrics, confusion, confusion_csv, edibility_collapse, evaluate, mcc, pr_auc_binary,
    read_confusion_csv, roc_auc_binary,
)

BINARY = np.array([[50, 10], [5, 35]])
PERFECT = np.diag([4, 7, 2])


def seeded_cm(seed=3, n=5):
    return np.random.default_rng(seed).integers(0, 20, (n, n)) + np.diag(np.full(n, 15))


def test_confusion():
    assert np.array_equal(confusion([0, 1, 2], [0, 1, 2]), np.eye(3, dtype=int))
    cm = confusion([1, 1, 1, 1], [0, 1, 2, 1], 3)
    assert np.array_equal(np.nonzero(cm.sum(axis=0))[0], [1]) and cm.sum() == 4
    with pytest.raises(ValueError):
        confusion([0], [0, 1])


def test_binary_counts():
    m = basic_metrics(BINARY)
    assert m["accuracy"] == 0.85
    assert m["recall_per_class"][0] == 50 / 60
    assert m["precision_per_class"][0] == 50 / 55


def test_perfect_matrix():
    m = basic_metrics(PERFECT)
    for key in ("accuracy", "precision_macro", "recall_macro", "f1_macro", "specificity_macro",
                "balanced_accuracy_macro", "precision_weighted", "f1_weighted"):
        assert m[key] == 1.0
    assert mcc(PERFECT) == 1.0


def test_seeded_five_class_against_hand_oracle():
    cm = seeded_cm()
    m = basic_metrics(cm)
    hand = hand_metrics(cm)
    total = cm.sum()
    for name in ("precision", "recall", "f1", "specificity"):
        per = [h[name] for h in hand]
        assert np.max(np.abs(np.array(m[f"{name}_per_class"]) - per)) < 1e-12
        assert abs(m[f"{name}_macro"] - np.mean(per)) < 1e-12
        assert abs(m[f"{name}_weighted"] - sum(h[name] * h["support"] for h in hand) / total) < 1e-12
    bal = [(h["recall"] + h["specificity"]) / 2 for h in hand]
    assert abs(m["balanced_accuracy_macro"] - np.mean(bal)) < 1e-12
    assert abs(mcc(cm) - hand_mcc(cm)) < 1e-12


def test_mcc():
    assert mcc(np.array([[0, 5], [7, 0]])) == -1.0
    assert abs(mcc(BINARY) - hand_mcc(BINARY)) < 1e-12
    # a predictor independent of the truth has zero covariance
    assert mcc(np.full((4, 4), 25)) == 0.0
    cm = np.random.default_rng(1).integers(900, 1100, (4, 4))
    assert abs(mcc(cm)) < 0.05
    assert mcc(np.array([[5, 0], [3, 0]])) == 0.0


def test_zero_support_class():
    cm = np.array([[3, 1, 0], [0, 2, 0], [0, 0, 0]])
    m = basic_metrics(cm)
    assert m["zero_support"] == [2] and m["zero_predicted"] == [2]
    assert m["recall_macro"] == pytest.approx((3 / 4 + 1) / 2, abs=1e-15)


def test_roc_auc_examples():
    assert roc_auc_binary([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
    assert roc_auc_binary([0.4] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    assert math.isnan(roc_auc_binary([0.2, 0.3], [1, 1]))


def test_roc_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(10)
    for _ in range(10):
        scores = np.round(rng.uniform(0, 1, 50), 1)  # coarse grid forces ties
        labels = rng.integers(0, 2, 50).astype(bool)
        assert abs(roc_auc_binary(scores, labels) - pairwise_auc(scores, labels)) < 1e-12


def test_pr_auc():
    assert pr_auc_binary([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
    # a single tie group: precision is the positive rate everywhere
    assert abs(pr_auc_binary([0.5] * 4, [1, 0, 0, 0]) - 0.25) < 1e-15


def test_evaluate_tie_break_and_report():
    probs = np.array([[0.5, 0.5, 0.0], [0.2, 0.4, 0.4], [0.1, 0.1, 0.8]])
    rep, cm, preds = evaluate(probs, [0, 1, 2])
    assert preds.tolist() == [0, 1, 2] and rep.accuracy == 1.0
    d = json.loads(rep.to_json())
    assert d["n_samples"] == 3 and d["mcc"] == 1.0


def test_edibility_collapse():
    edible = {0: True, 1: False, 2: True, 3: False}
    rep = edibility_collapse([0, 1, 2, 3], [0, 1, 2, 3], edible)
    assert rep.accuracy == 1.0
    rep = edibility_collapse([2, 3], [0, 1], edible)
    assert rep.accuracy == 1.0 and rep.extra["species_accuracy"] == 0.0
    rep = edibility_collapse([0, 0], [1, 1], edible)
    assert rep.extra["toxic_predicted_edible"] == 2
    rng = np.random.default_rng(6)
    for _ in range(200):
        labels = rng.integers(0, 4, 30)
        preds = rng.integers(0, 4, 30)
        r = edibility_collapse(preds, labels, edible)
        assert r.accuracy >= r.extra["species_accuracy"]


def test_confusion_csv_round_trip():
    cm = seeded_cm(4, 3)
    text = confusion_csv(cm)
    assert text.splitlines()[0] == "true\\pred,0,1,2"
    assert np.array_equal(read_confusion_csv(text), cm)
