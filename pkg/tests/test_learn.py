"""Sequential pair optimizer against an exact active-set oracle, KKT
conditions, the grid search over held-out subjects, and the ablation rows."""

import numpy as np
import pytest

from eegmon.core import LABEL_ATTENTIVE, LABEL_NONATTENTIVE
from eegmon.errors import (DegenerateData, DegenerateFold, EmptyClass,
                           FeatureMismatch, NonConvergence)
from eegmon.features import FeatureMatrix
from eegmon.learn import (SvmModel, ablation_suite, classification_metrics,
                          grid_search_loso, linear_kernel,
                          ratio_baseline_predict, rbf_kernel, smo_solve,
                          train_svm)

N_ORACLE_DATASETS = 50
OBJECTIVE_ATOL = 1e-4


def _dual_objective(alpha, kernel, y):
    q = np.outer(y, y) * kernel
    return 0.5 * alpha @ q @ alpha - alpha.sum()


def _brute_force_qp(kernel, y, c):
    """Exact minimum of the dual by enumerating every active set.

    Each variable is pinned at 0, pinned at c, or left free; the free
    block plus the equality multiplier solves a small linear system. The
    optimizer's active set is among the 3^n assignments, and every
    candidate kept here is feasible, so the smallest candidate objective
    is the exact optimum of the convex program.
    """
    n = y.size
    q = np.outer(y, y) * kernel
    best = np.inf
    best_alpha = None
    for code in range(3 ** n):
        state = np.zeros(n, dtype=int)
        k = code
        for i in range(n):
            state[i] = k % 3
            k //= 3
        alpha = np.where(state == 1, c, 0.0)
        free = np.nonzero(state == 2)[0]
        if free.size:
            m = np.zeros((free.size + 1, free.size + 1))
            m[:-1, :-1] = q[np.ix_(free, free)]
            m[:-1, -1] = -y[free]
            m[-1, :-1] = y[free]
            rhs = np.concatenate([
                1.0 - q[np.ix_(free, state == 1)].sum(axis=1) * c,
                [-np.sum(y[state == 1]) * c],
            ])
            sol, *_ = np.linalg.lstsq(m, rhs, rcond=None)
            if np.max(np.abs(m @ sol - rhs)) > 1e-8:
                continue
            a_free = sol[:-1]
            if np.any(a_free < -1e-9) or np.any(a_free > c + 1e-9):
                continue
            alpha[free] = np.clip(a_free, 0.0, c)
        if abs(np.dot(y, alpha)) > 1e-8:
            continue
        obj = _dual_objective(alpha, kernel, y)
        if obj < best:
            best, best_alpha = obj, alpha
    return best_alpha, best


def _random_problem(rng):
    n = int(rng.integers(4, 9))
    x = rng.normal(size=(n, int(rng.integers(1, 4))))
    y = rng.choice([-1.0, 1.0], size=n)
    y[0], y[1] = 1.0, -1.0  # both classes present
    c = float(rng.choice([0.1, 1.0, 10.0]))
    if rng.random() < 0.5:
        kernel = rbf_kernel(x, x, float(rng.uniform(0.1, 2.0)))
    else:
        kernel = linear_kernel(x, x)
    return kernel, y, c


def test_smo_matches_brute_force_qp():
    rng = np.random.default_rng(83)
    for _ in range(N_ORACLE_DATASETS):
        kernel, y, c = _random_problem(rng)
        alpha, _, _ = smo_solve(kernel, y, c, tol=1e-8, max_updates=20000)
        _, best = _brute_force_qp(kernel, y, c)
        got = _dual_objective(alpha, kernel, y)
        assert abs(got - best) <= OBJECTIVE_ATOL
        assert got >= best - 1e-9  # the oracle is the true minimum


def test_smo_kkt_conditions():
    rng = np.random.default_rng(89)
    for _ in range(20):
        kernel, y, c = _random_problem(rng)
        alpha, bias, _ = smo_solve(kernel, y, c, tol=1e-8, max_updates=20000)
        assert np.dot(y, alpha) == pytest.approx(0.0, abs=1e-9)
        assert np.all(alpha >= -1e-12) and np.all(alpha <= c + 1e-12)
        margins = y * (kernel @ (alpha * y) + bias)
        eps = 1e-6
        for i in range(y.size):
            if alpha[i] <= 1e-9:
                assert margins[i] >= 1.0 - eps
            elif alpha[i] >= c - 1e-9:
                assert margins[i] <= 1.0 + eps
            else:
                assert margins[i] == pytest.approx(1.0, abs=eps)


def test_smo_nonconvergence_raises():
    rng = np.random.default_rng(97)
    x = rng.normal(size=(30, 2))
    y = rng.choice([-1.0, 1.0], size=30)
    y[:2] = (1.0, -1.0)
    with pytest.raises(NonConvergence):
        smo_solve(rbf_kernel(x, x, 1.0), y, 10.0, tol=1e-12, max_updates=1)


def test_xor_rbf_training_accuracy():
    x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    labels = np.array([LABEL_ATTENTIVE, LABEL_ATTENTIVE,
                       LABEL_NONATTENTIVE, LABEL_NONATTENTIVE])
    model = train_svm(x, labels, c=10.0, gamma=1.0,
                      feature_names=("f0", "f1"))
    assert np.array_equal(model.predict(x), labels)


def test_symmetric_pair_boundary_at_origin():
    x = np.array([[-1.0], [1.0]])
    labels = np.array([LABEL_ATTENTIVE, LABEL_NONATTENTIVE])
    model = train_svm(x, labels, c=1.0, gamma=0.5, feature_names=("f",))
    assert model.decision_function(np.array([[0.0]]))[0] == pytest.approx(
        0.0, abs=1e-9)
    assert model.predict(np.array([[-0.5]]))[0] == LABEL_ATTENTIVE
    assert model.predict(np.array([[0.5]]))[0] == LABEL_NONATTENTIVE


def test_train_svm_validation():
    x = np.ones((4, 2))
    with pytest.raises(EmptyClass):
        train_svm(x, np.zeros(4, dtype=int), 1.0, 0.5, ("a", "b"))
    with pytest.raises(FeatureMismatch):
        train_svm(x, np.array([0, 1, 0, 1]), 1.0, 0.5, ("a",))
    with pytest.raises(DegenerateData):
        train_svm(np.zeros((0, 2)), np.zeros(0, dtype=int), 1.0, 0.5,
                  ("a", "b"))


def test_model_dict_round_trip():
    rng = np.random.default_rng(101)
    x = rng.normal(size=(40, 3))
    labels = (x[:, 0] + 0.2 * rng.normal(size=40) >
              0).astype(int)
    model = train_svm(x, labels, 1.0, 0.5, ("a", "b", "c"),
                      manifest_hash="h")
    back = SvmModel.from_dict(model.to_dict())
    probe = rng.normal(size=(25, 3))
    assert np.array_equal(model.decision_function(probe),
                          back.decision_function(probe))
    assert back.manifest_hash == "h"


def test_classification_metrics_hand_example():
    m = classification_metrics(np.array([1, 1, 0, 0]),
                               np.array([1, 0, 0, 1]))
    assert m["tp"] == 1 and m["fn"] == 1 and m["tn"] == 1 and m["fp"] == 1
    assert m["accuracy"] == 0.5
    assert m["precision"] == 0.5 and m["sensitivity"] == 0.5
    assert m["specificity"] == 0.5 and m["f1"] == 0.5
    empty = classification_metrics(np.zeros(3, dtype=int),
                                   np.zeros(3, dtype=int))
    assert empty["accuracy"] == 1.0 and empty["f1"] == 0.0


def _blob_matrix(rng, n_subjects=4, rows_per_class=15, separation=3.0,
                 names=("f0", "f1", "f2")):
    values, labels, subjects = [], [], []
    for s in range(n_subjects):
        for label in (LABEL_ATTENTIVE, LABEL_NONATTENTIVE):
            center = separation * (1 if label else -1)
            block = rng.normal(size=(rows_per_class, len(names)))
            block[:, 0] += center
            values.append(block)
            labels.extend([label] * rows_per_class)
            subjects.extend([f"s{s:02d}"] * rows_per_class)
    return FeatureMatrix(np.vstack(values), tuple(names), subjects,
                         np.array(labels), "mh")


def test_grid_search_loso_separable_blobs():
    rng = np.random.default_rng(103)
    matrix = _blob_matrix(rng)
    report, model = grid_search_loso(matrix, c_grid=(0.1, 1.0, 10.0),
                                     gamma_grid=(0.01, 0.1, 1.0))
    assert len(report.folds) == 4
    assert report.mean_accuracy >= 0.9
    assert report.best_mean_accuracy >= report.mean_accuracy - 1e-12
    assert (report.modal_c, report.modal_gamma) in [
        (c, g) for c in (0.1, 1.0, 10.0) for g in (0.01, 0.1, 1.0)]
    for fold in report.folds:
        assert fold.n_test == 30
        assert set(fold.modal_metrics) >= {"accuracy", "sensitivity",
                                           "specificity", "precision", "f1"}
    assert model.manifest_hash == "mh"
    assert np.mean(model.predict(matrix.values) == matrix.labels) >= 0.9


def test_grid_search_deterministic():
    rng = np.random.default_rng(107)
    matrix = _blob_matrix(rng, n_subjects=3, rows_per_class=10)
    a, _ = grid_search_loso(matrix, c_grid=(1.0,), gamma_grid=(0.1, 1.0))
    b, _ = grid_search_loso(matrix, c_grid=(1.0,), gamma_grid=(0.1, 1.0))
    assert a.to_dict() == b.to_dict()


def test_grid_search_needs_two_subjects():
    rng = np.random.default_rng(109)
    matrix = _blob_matrix(rng, n_subjects=1)
    with pytest.raises(DegenerateFold):
        grid_search_loso(matrix)


def test_ratio_baseline_rules():
    att = np.array([60.0, 30.0, 10.0, 0.0])
    med = np.array([40.0, 50.0, 0.0, 0.0])
    pred = ratio_baseline_predict(att, med)
    assert list(pred) == [LABEL_ATTENTIVE, LABEL_NONATTENTIVE,
                          LABEL_ATTENTIVE, LABEL_NONATTENTIVE]


def _score_matrix(rng, planted, n_subjects=5, rows_per_class=24):
    """attention/meditation plus two computed columns; when planted, the
    scores track the label, otherwise they are label-free noise."""
    names = ("attention", "meditation", "c0", "c1")
    values, labels, subjects = [], [], []
    for s in range(n_subjects):
        for label in (LABEL_ATTENTIVE, LABEL_NONATTENTIVE):
            rows = np.empty((rows_per_class, 4))
            if planted:
                base = 75.0 if label == LABEL_ATTENTIVE else 30.0
                rows[:, 0] = base + rng.normal(scale=5.0, size=rows_per_class)
            else:
                rows[:, 0] = 50.0 + rng.normal(scale=10.0,
                                               size=rows_per_class)
            rows[:, 1] = 50.0 + rng.normal(scale=10.0, size=rows_per_class)
            center = 2.0 * (1 if label else -1)
            rows[:, 2] = center + rng.normal(size=rows_per_class)
            rows[:, 3] = rng.normal(size=rows_per_class)
            values.append(rows)
            labels.extend([label] * rows_per_class)
            subjects.extend([f"s{s:02d}"] * rows_per_class)
    return FeatureMatrix(np.vstack(values), names, subjects,
                         np.array(labels), "mh")


def test_ablation_four_rows_planted_scores():
    rng = np.random.default_rng(113)
    matrix = _score_matrix(rng, planted=True)
    rows = ablation_suite(matrix, ["attention", "meditation", "c0"],
                          c_grid=(1.0, 10.0), gamma_grid=(0.1, 1.0))
    assert [r.name for r in rows] == ["score_ratio", "scores_svm",
                                      "computed_only", "full_selection"]
    by_name = {r.name: r for r in rows}
    assert by_name["scores_svm"].mean_accuracy >= 0.95
    assert by_name["computed_only"].feature_names == ("c0",)
    assert set(by_name["score_ratio"].per_subject) == {
        f"s{i:02d}" for i in range(5)}


def test_ablation_scores_at_chance_on_noise():
    rng = np.random.default_rng(127)
    matrix = _score_matrix(rng, planted=False, n_subjects=6,
                           rows_per_class=40)
    rows = ablation_suite(matrix, ["attention", "meditation", "c0"],
                          c_grid=(1.0,), gamma_grid=(0.1,))
    by_name = {r.name: r for r in rows}
    assert abs(by_name["scores_svm"].mean_accuracy - 0.5) <= 0.05
    assert by_name["full_selection"].mean_accuracy >= 0.9


def test_ablation_requires_computed_features():
    rng = np.random.default_rng(131)
    matrix = _score_matrix(rng, planted=True, n_subjects=2, rows_per_class=8)
    with pytest.raises(DegenerateData):
        ablation_suite(matrix, ["attention", "meditation"])
