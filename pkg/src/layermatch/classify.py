"""Linear soft-margin SVM on shared-subspace projections.

The dual problem is solved by deterministic cyclic coordinate descent
(one of the backend hot kernels); the bias rides along as a constant
augmented feature.  Prediction is a plain sign rule with ties sent to
the positive class.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from ._backend import get_backend

DEFAULT_C = 1.0
DUALITY_TOL = 1e-4
MAX_PASSES = 2000


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    c: float
    class_pair: tuple = None
    dual_objective: float = None
    duality_gap: float = None
    passes: int = None


def train_svm(x, y, c=DEFAULT_C, tol=DUALITY_TOL, class_pair=None):
    """Fit the soft-margin hyperplane on rows ``x`` with labels ``y`` in ±1.

    Deterministic for a given row order.  Stops when the duality gap
    falls below ``tol`` relative to the primal value.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or len(y) != x.shape[0]:
        raise ValueError("x must be 2-D with one label per row")
    if not np.isfinite(x).all():
        raise ValueError("training rows must be finite")
    labels = set(np.unique(y).tolist())
    if labels != {-1.0, 1.0}:
        raise ValueError(f"labels must be -1/+1 with both present, got {sorted(labels)}")
    if c <= 0:
        raise ValueError("c must be positive")
    be = get_backend()
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    alpha, w, gap, passes = be.dual_cd(xb, y, c, tol, MAX_PASSES)
    dual = float(alpha.sum() - 0.5 * (w @ w))
    return SvmModel(
        weights=w[:-1].copy(),
        bias=float(w[-1]),
        c=c,
        class_pair=class_pair,
        dual_objective=dual,
        duality_gap=float(gap),
        passes=int(passes),
    )


def decision_values(model, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.weights.shape[0]:
        raise ValueError(
            f"x has shape {x.shape}, expected (n, {model.weights.shape[0]})"
        )
    return x @ model.weights + model.bias


def predict(model, x):
    """Sign of the decision value; exact zero goes to +1."""
    scores = decision_values(model, x)
    out = np.where(scores >= 0.0, 1, -1)
    return out


def accuracy(model, x, y):
    y = np.asarray(y)
    return float(np.mean(predict(model, x) == y))


def fit_binary(x, labels, class_pair, c=DEFAULT_C):
    """Train on original class labels, mapping (neg, pos) onto -1/+1."""
    neg, pos = class_pair
    labels = np.asarray(labels)
    mask = (labels == neg) | (labels == pos)
    if not mask.all():
        raise ValueError("rows outside the class pair present in training data")
    y = np.where(labels == pos, 1.0, -1.0)
    return train_svm(x, y, c=c, class_pair=(neg, pos))


def predict_classes(model, x):
    """Predicted original class labels for a model fit via fit_binary."""
    if model.class_pair is None:
        raise ValueError("model carries no class pair")
    neg, pos = model.class_pair
    return np.where(predict(model, x) > 0, pos, neg)


def class_accuracy(model, x, labels):
    labels = np.asarray(labels)
    return float(np.mean(predict_classes(model, x) == labels))


def aggregate_category_accuracy(task_results):
    """Mean accuracy per class over every task that contains it.

    ``task_results`` is a list of ((class_a, class_b), accuracy).  With a
    complete pairing of 10 classes each class averages its 9 tasks; an
    incomplete pairing warns and averages what is available.
    """
    sums = {}
    counts = {}
    for (class_a, class_b), acc in task_results:
        for cls in (class_a, class_b):
            sums[cls] = sums.get(cls, 0.0) + acc
            counts[cls] = counts.get(cls, 0) + 1
    classes = sorted(sums)
    expected = len(classes) - 1
    if any(counts[cls] != expected for cls in classes):
        warnings.warn(
            "incomplete class pairing; averaging over available tasks",
            stacklevel=2,
        )
    return {cls: sums[cls] / counts[cls] for cls in classes}
