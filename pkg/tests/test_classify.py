import numpy as np
import pytest

from layermatch import classify


def _qp_dual_reference(x, y, c):
    """Box-constrained dual solved by a generic QP solver.

    The bias rides as an augmented constant feature, so the dual has no
    equality constraint: min_a 1/2 a^T Q a - 1^T a, 0 <= a <= c.
    """
    from cvxopt import matrix, solvers

    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    q_mat = (y[:, None] * xb) @ (y[:, None] * xb).T
    n = len(y)
    p = matrix(q_mat)
    q = matrix(-np.ones(n))
    g = matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = matrix(np.hstack([np.zeros(n), np.full(n, c)]))
    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-10
    solvers.options["reltol"] = 1e-10
    sol = solvers.qp(p, q, g, h)
    alpha = np.asarray(sol["x"]).ravel()
    w = ((alpha * y)[:, None] * xb).sum(axis=0)
    return float(alpha.sum() - 0.5 * w @ w)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_dual_matches_qp_solver(seed):
    rng = np.random.default_rng(seed)
    n = 200
    x = rng.normal(size=(n, 6))
    y = np.where(x[:, 0] + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
    c = 0.5
    model = classify.train_svm(x, y, c=c, tol=1e-6)
    reference = _qp_dual_reference(x, y, c)
    assert model.dual_objective == pytest.approx(reference, rel=1e-3)


def test_separable_data_perfect(rng):
    n = 60
    x = np.vstack([
        rng.normal(size=(n, 3)) + np.array([4.0, 0, 0]),
        rng.normal(size=(n, 3)) - np.array([4.0, 0, 0]),
    ])
    y = np.hstack([np.ones(n), -np.ones(n)])
    model = classify.train_svm(x, y, c=10.0)
    assert classify.accuracy(model, x, y) == 1.0


def test_duality_gap_reported_small(rng):
    x = rng.normal(size=(100, 4))
    y = np.where(x @ np.array([1.0, -1, 0.5, 0]) > 0, 1.0, -1.0)
    model = classify.train_svm(x, y, c=1.0, tol=1e-5)
    # gap stop is relative to 1 + |primal|; reconstruct the primal bound
    primal = model.dual_objective + model.duality_gap
    assert (model.duality_gap < 1e-5 * (1.0 + abs(primal))
            or model.passes == classify.MAX_PASSES)
    assert model.passes >= 1


def test_train_svm_validates(rng):
    x = rng.normal(size=(10, 2))
    with pytest.raises(ValueError):
        classify.train_svm(x, np.ones(10))  # one class only
    with pytest.raises(ValueError):
        classify.train_svm(x, np.arange(10))  # labels not in +-1
    with pytest.raises(ValueError):
        classify.train_svm(x, np.where(np.arange(10) > 4, 1.0, -1.0), c=0.0)
    bad = x.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        classify.train_svm(bad, np.where(np.arange(10) > 4, 1.0, -1.0))


def test_tie_goes_positive():
    model = classify.SvmModel(weights=np.zeros(2), bias=0.0, c=1.0, class_pair=(3, 8))
    assert classify.predict(model, np.zeros((1, 2)))[0] == 1
    assert classify.predict_classes(model, np.zeros((1, 2)))[0] == 8


def test_fit_binary_label_mapping(rng):
    x = np.vstack([rng.normal(size=(20, 2)) + 3, rng.normal(size=(20, 2)) - 3])
    labels = np.array([7] * 20 + [2] * 20)
    model = classify.fit_binary(x, labels, (2, 7), c=5.0)
    assert model.class_pair == (2, 7)
    got = classify.predict_classes(model, x)
    assert set(got.tolist()) <= {2, 7}
    assert classify.class_accuracy(model, x, labels) == 1.0


def test_fit_binary_rejects_off_pair_rows(rng):
    x = rng.normal(size=(5, 2))
    with pytest.raises(ValueError, match="outside"):
        classify.fit_binary(x, np.array([1, 2, 3, 1, 2]), (1, 2))


def test_predict_classes_needs_pair(rng):
    model = classify.SvmModel(weights=np.zeros(2), bias=0.0, c=1.0)
    with pytest.raises(ValueError, match="class pair"):
        classify.predict_classes(model, np.zeros((1, 2)))


def test_decision_values_shape_check(rng):
    model = classify.SvmModel(weights=np.zeros(3), bias=0.0, c=1.0)
    with pytest.raises(ValueError):
        classify.decision_values(model, rng.normal(size=(4, 2)))


def test_deterministic_for_row_order(rng):
    x = rng.normal(size=(50, 3))
    y = np.where(x[:, 0] > 0, 1.0, -1.0)
    a = classify.train_svm(x, y, c=1.0)
    b = classify.train_svm(x, y, c=1.0)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


def test_aggregate_category_accuracy_complete():
    tasks = [((a, b), 0.9) for a in range(4) for b in range(a + 1, 4)]
    cats = classify.aggregate_category_accuracy(tasks)
    assert set(cats) == {0, 1, 2, 3}
    assert all(v == pytest.approx(0.9) for v in cats.values())


def test_aggregate_category_accuracy_weighted_mean():
    tasks = [((0, 1), 1.0), ((0, 2), 0.5), ((1, 2), 0.75)]
    cats = classify.aggregate_category_accuracy(tasks)
    assert cats[0] == pytest.approx(0.75)
    assert cats[1] == pytest.approx(0.875)
    assert cats[2] == pytest.approx(0.625)


def test_aggregate_category_accuracy_incomplete_warns():
    with pytest.warns(UserWarning, match="incomplete"):
        cats = classify.aggregate_category_accuracy([((0, 1), 1.0), ((0, 2), 0.0)])
    assert cats[0] == pytest.approx(0.5)
