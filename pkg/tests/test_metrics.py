"""Metric formulas against hand-computed confusion matrices."""

import numpy as np
import pytest

from famae.metrics import confusion_matrix, evaluate_predictions, metrics_from_confusion


def test_perfect_predictions():
    m = evaluate_predictions([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert m.accuracy == m.precision == m.recall == m.f1 == 1.0


def test_constant_prediction_on_balanced_binary():
    y_true = [0, 0, 1, 1]
    y_pred = [0, 0, 0, 0]
    m = evaluate_predictions(y_true, y_pred, 2)
    assert m.accuracy == pytest.approx(0.5)
    # class 0: P=0.5 R=1 F1=2/3; class 1: all zero by the 0/0 convention
    assert m.precision == pytest.approx(0.25)
    assert m.recall == pytest.approx(0.5)
    assert m.f1 == pytest.approx(1.0 / 3.0)


def test_three_class_confusion_hand_oracle():
    cm = np.array([[5, 0, 0], [1, 4, 0], [0, 2, 3]])
    m = metrics_from_confusion(cm)
    assert m.accuracy == pytest.approx(12 / 15)
    precisions = [5 / 6, 4 / 6, 3 / 3]
    recalls = [5 / 5, 4 / 5, 3 / 5]
    f1s = [2 * p * r / (p + r) for p, r in zip(precisions, recalls)]
    assert m.precision == pytest.approx(np.mean(precisions))
    assert m.recall == pytest.approx(np.mean(recalls))
    assert m.f1 == pytest.approx(np.mean(f1s))


def test_confusion_layout():
    cm = confusion_matrix([0, 1, 1, 2], [1, 1, 0, 2], 3)
    np.testing.assert_array_equal(cm, [[0, 1, 0], [1, 1, 0], [0, 0, 1]])


def test_metrics_bounded_and_macro_f1_below_max():
    rng = np.random.default_rng(0)
    for _ in range(50):
        y_true = rng.integers(0, 4, size=30)
        y_pred = rng.integers(0, 4, size=30)
        m = evaluate_predictions(y_true, y_pred, 4)
        for v in m.as_dict().values():
            assert 0.0 <= v <= 1.0
        cm = confusion_matrix(y_true, y_pred, 4)
        tp = np.diag(cm).astype(float)
        prec = np.divide(tp, cm.sum(0), out=np.zeros(4), where=cm.sum(0) > 0)
        rec = np.divide(tp, cm.sum(1), out=np.zeros(4), where=cm.sum(1) > 0)
        f1 = np.divide(2 * prec * rec, prec + rec, out=np.zeros(4),
                       where=prec + rec > 0)
        assert m.f1 <= f1.max() + 1e-12


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0], 2)
