"""Support vector classification of attention state.

The quadratic program is solved by a hand-written sequential pair optimizer
(maximal-violating-pair working set, box constraints, single equality
constraint). Model selection runs a leave-one-subject-out grid over the
penalty and kernel width; the pair chosen by most folds becomes the final
model, with the best-mean pair reported alongside.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import LABEL_ATTENTIVE, LABEL_NONATTENTIVE
from .errors import (DegenerateData, DegenerateFold, EmptyClass,
                     FeatureMismatch, NonConvergence)
from .features import FeatureMatrix

C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
GAMMA_GRID = (0.001, 0.01, 0.1, 0.5, 1.0, 10.0)
SMO_TOL = 1e-3


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * squared_distances(a, b))


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)


def linear_kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b.T


def smo_solve(kernel: np.ndarray, y: np.ndarray, c: float,
              tol: float = SMO_TOL,
              max_updates: int | None = None) -> tuple[np.ndarray, float, int]:
    """Minimize 0.5 a'Qa - sum(a) with 0 <= a <= c, y'a = 0; Q = yy' * K.

    Returns (alpha, bias, pair updates). The bias solves the decision
    function f(x) = sum_i alpha_i y_i K(x_i, x) + bias.
    """
    n = y.size
    if max_updates is None:
        max_updates = max(2000, 10 * n)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # Q @ alpha - 1
    pos = y > 0
    for it in range(max_updates):
        up = (pos & (alpha < c)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < c))
        score = -y * grad
        up_scores = np.where(up, score, -np.inf)
        low_scores = np.where(low, score, np.inf)
        i = int(np.argmax(up_scores))
        j = int(np.argmin(low_scores))
        m_up, m_low = score[i], score[j]
        if m_up - m_low <= tol:
            return alpha, float((m_up + m_low) / 2.0), it
        curvature = kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j]
        step = (m_up - m_low) / max(curvature, 1e-12)
        # direction d_i = y_i, d_j = -y_j keeps y'a = 0; clip to the box
        step = min(step,
                   c - alpha[i] if pos[i] else alpha[i],
                   alpha[j] if pos[j] else c - alpha[j])
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        grad += y * (kernel[:, i] - kernel[:, j]) * step
    raise NonConvergence(f"no convergence in {max_updates} pair updates")


@dataclass
class SvmModel:
    kernel: str
    c: float
    gamma: float
    support_vectors: np.ndarray  # standardized space
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    feature_names: tuple[str, ...]
    mean: np.ndarray
    scale: np.ndarray
    manifest_hash: str = ""

    def _kernel(self, x: np.ndarray) -> np.ndarray:
        if self.kernel == "rbf":
            return rbf_kernel(x, self.support_vectors, self.gamma)
        return linear_kernel(x, self.support_vectors)

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        z = (np.atleast_2d(x) - self.mean) / self.scale
        return self._kernel(z) @ self.dual_coef + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Label 1 (non-attentive) on the boundary and above."""
        f = self.decision_function(x)
        return np.where(f >= 0.0, LABEL_NONATTENTIVE, LABEL_ATTENTIVE)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel, "c": self.c, "gamma": self.gamma,
            "bias": self.bias,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "feature_names": list(self.feature_names),
            "mean": self.mean.tolist(), "scale": self.scale.tolist(),
            "manifest_hash": self.manifest_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        return cls(d["kernel"], float(d["c"]), float(d["gamma"]),
                   np.array(d["support_vectors"], dtype=np.float64),
                   np.array(d["dual_coef"], dtype=np.float64),
                   float(d["bias"]), tuple(d["feature_names"]),
                   np.array(d["mean"], dtype=np.float64),
                   np.array(d["scale"], dtype=np.float64),
                   d.get("manifest_hash", ""))


def standardization(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = np.mean(x, axis=0)
    scale = np.std(x, axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return mean, scale


def train_svm(x: np.ndarray, labels: np.ndarray, c: float, gamma: float,
              feature_names: tuple[str, ...], kernel: str = "rbf",
              manifest_hash: str = "", tol: float = SMO_TOL,
              max_updates: int | None = None) -> SvmModel:
    """Fit on raw feature rows; standardization is learned and stored."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise DegenerateData(f"cannot fit on matrix of shape {x.shape}")
    if x.shape[1] != len(feature_names):
        raise FeatureMismatch("feature names do not match matrix width")
    classes = set(int(v) for v in labels)
    if classes != {LABEL_ATTENTIVE, LABEL_NONATTENTIVE}:
        raise EmptyClass(f"need both labels to fit, got {sorted(classes)}")
    mean, scale = standardization(x)
    z = (x - mean) / scale
    y = np.where(labels == LABEL_NONATTENTIVE, 1.0, -1.0)
    k = rbf_kernel(z, z, gamma) if kernel == "rbf" else linear_kernel(z, z)
    alpha, bias, _ = smo_solve(k, y, c, tol, max_updates)
    sv = alpha > 1e-10
    return SvmModel(kernel, c, gamma, z[sv], (alpha * y)[sv], bias,
                    tuple(feature_names), mean, scale, manifest_hash)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def classification_metrics(y_true: np.ndarray,
                           y_pred: np.ndarray) -> dict[str, float]:
    """Positive class is label 1 (non-attentive)."""
    t = np.asarray(y_true) == LABEL_NONATTENTIVE
    p = np.asarray(y_pred) == LABEL_NONATTENTIVE
    tp = int(np.sum(t & p))
    tn = int(np.sum(~t & ~p))
    fp = int(np.sum(~t & p))
    fn = int(np.sum(t & ~p))
    total = tp + tn + fp + fn

    def safe(num: float, den: float) -> float:
        return num / den if den > 0 else 0.0

    precision = safe(tp, tp + fp)
    sensitivity = safe(tp, tp + fn)
    return {
        "accuracy": safe(tp + tn, total),
        "sensitivity": sensitivity,
        "specificity": safe(tn, tn + fp),
        "precision": precision,
        "f1": safe(2 * precision * sensitivity, precision + sensitivity),
        "tp": tp, "tn": tn, "fp": fp, "fn": fn,
    }


# ---------------------------------------------------------------------------
# Leave-one-subject-out grid search
# ---------------------------------------------------------------------------

@dataclass
class FoldResult:
    subject_id: str
    n_test: int
    best_c: float
    best_gamma: float
    best_accuracy: float
    modal_metrics: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"subject_id": self.subject_id, "n_test": self.n_test,
                "best_c": self.best_c, "best_gamma": self.best_gamma,
                "best_accuracy": self.best_accuracy,
                "modal_metrics": self.modal_metrics}


@dataclass
class LosoReport:
    feature_names: tuple[str, ...]
    folds: list[FoldResult]
    modal_c: float
    modal_gamma: float
    best_mean_c: float
    best_mean_gamma: float
    mean_accuracy: float  # modal pair, averaged over folds
    std_accuracy: float
    best_mean_accuracy: float  # best single pair, averaged over folds
    manifest_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "folds": [f.to_dict() for f in self.folds],
            "modal_c": self.modal_c, "modal_gamma": self.modal_gamma,
            "best_mean_c": self.best_mean_c,
            "best_mean_gamma": self.best_mean_gamma,
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "best_mean_accuracy": self.best_mean_accuracy,
            "manifest_hash": self.manifest_hash,
        }


def _loso_split(matrix: FeatureMatrix, subject: str):
    test = np.array([s == subject for s in matrix.subject_ids])
    return ~test, test


def grid_search_loso(matrix: FeatureMatrix,
                     c_grid: tuple[float, ...] = C_GRID,
                     gamma_grid: tuple[float, ...] = GAMMA_GRID,
                     tol: float = SMO_TOL) -> tuple[LosoReport, SvmModel]:
    """Evaluate every (C, gamma) pair per held-out subject.

    Per-fold winners vote for the deployed pair (ties to the smaller C,
    then smaller gamma); reported per-fold metrics use that modal pair so
    the summary reflects a single deployable configuration.
    """
    subjects = sorted(set(matrix.subject_ids))
    if len(subjects) < 2:
        raise DegenerateFold("leave-one-subject-out needs >= 2 subjects")
    pairs = [(c, g) for c in c_grid for g in gamma_grid]
    # fold_acc[(c, g)][fold] = held-out accuracy, nan when the fit failed
    fold_acc = {pair: np.full(len(subjects), np.nan) for pair in pairs}
    fold_metrics: dict[tuple[float, float, str], dict] = {}

    for fi, subject in enumerate(subjects):
        train_mask, test_mask = _loso_split(matrix, subject)
        x_tr, y_tr = matrix.values[train_mask], matrix.labels[train_mask]
        x_te, y_te = matrix.values[test_mask], matrix.labels[test_mask]
        if len(set(y_tr.tolist())) < 2:
            raise DegenerateFold(f"training split for {subject} is one-class")
        mean, scale = standardization(x_tr)
        z_tr = (x_tr - mean) / scale
        z_te = (x_te - mean) / scale
        d_tr = squared_distances(z_tr, z_tr)
        d_te = squared_distances(z_te, z_tr)
        y = np.where(y_tr == LABEL_NONATTENTIVE, 1.0, -1.0)
        for gamma in gamma_grid:
            k_tr = np.exp(-gamma * d_tr)
            k_te = np.exp(-gamma * d_te)
            for c in c_grid:
                try:
                    alpha, bias, _ = smo_solve(k_tr, y, c, tol)
                except NonConvergence:
                    continue
                f = k_te @ (alpha * y) + bias
                pred = np.where(f >= 0.0, LABEL_NONATTENTIVE, LABEL_ATTENTIVE)
                metrics = classification_metrics(y_te, pred)
                fold_acc[(c, gamma)][fi] = metrics["accuracy"]
                fold_metrics[(c, gamma, subject)] = metrics

    folds: list[FoldResult] = []
    votes: Counter = Counter()
    for fi, subject in enumerate(subjects):
        best_pair, best = None, -1.0
        for pair in pairs:  # grid order breaks ties: smaller C, then gamma
            acc = fold_acc[pair][fi]
            if np.isfinite(acc) and acc > best:
                best_pair, best = pair, float(acc)
        if best_pair is None:
            raise DegenerateFold(f"every grid point failed on {subject}")
        votes[best_pair] += 1
        folds.append(FoldResult(subject, int(np.sum(
            np.array(matrix.subject_ids) == subject)), best_pair[0],
            best_pair[1], best))

    top = max(votes.values())
    modal_c, modal_gamma = min(p for p, v in votes.items() if v == top)
    means = {pair: float(np.nanmean(acc)) for pair, acc in fold_acc.items()
             if np.any(np.isfinite(acc))}
    best_mean_pair = min(p for p, v in means.items()
                         if v == max(means.values()))

    modal_accs = []
    for fold in folds:
        metrics = fold_metrics.get((modal_c, modal_gamma, fold.subject_id), {})
        fold.modal_metrics = metrics
        modal_accs.append(metrics.get("accuracy", np.nan))
    modal_accs = np.array(modal_accs, dtype=np.float64)

    report = LosoReport(
        matrix.names, folds, modal_c, modal_gamma,
        best_mean_pair[0], best_mean_pair[1],
        float(np.nanmean(modal_accs)), float(np.nanstd(modal_accs)),
        means[best_mean_pair], matrix.manifest_hash)
    final = train_svm(matrix.values, matrix.labels, modal_c, modal_gamma,
                      matrix.names, manifest_hash=matrix.manifest_hash,
                      max_updates=max(2000, 50 * matrix.values.shape[0]))
    return report, final


# ---------------------------------------------------------------------------
# Baselines and ablation
# ---------------------------------------------------------------------------

def ratio_baseline_predict(attention: np.ndarray,
                           meditation: np.ndarray) -> np.ndarray:
    """Attentive iff attention/meditation > 1.

    Zero meditation with positive attention counts as attentive; a fully
    zero pair falls to non-attentive.
    """
    att = np.asarray(attention, dtype=np.float64)
    med = np.asarray(meditation, dtype=np.float64)
    safe_med = np.where(med > 0.0, med, 1.0)
    attentive = np.where(med > 0.0, att / safe_med > 1.0, att > 0.0)
    return np.where(attentive, LABEL_ATTENTIVE, LABEL_NONATTENTIVE)


@dataclass
class AblationRow:
    name: str
    feature_names: tuple[str, ...]
    mean_accuracy: float
    std_accuracy: float
    per_subject: dict[str, float]

    def to_dict(self) -> dict:
        return {"name": self.name, "n_features": len(self.feature_names),
                "feature_names": list(self.feature_names),
                "mean_accuracy": self.mean_accuracy,
                "std_accuracy": self.std_accuracy,
                "per_subject": self.per_subject}


def _ratio_row(matrix: FeatureMatrix) -> AblationRow:
    subjects = sorted(set(matrix.subject_ids))
    att = matrix.column("attention")
    med = matrix.column("meditation")
    pred = ratio_baseline_predict(att, med)
    per = {}
    for subject in subjects:
        mask = np.array([s == subject for s in matrix.subject_ids])
        per[subject] = classification_metrics(
            matrix.labels[mask], pred[mask])["accuracy"]
    accs = np.array(list(per.values()))
    return AblationRow("score_ratio", ("attention", "meditation"),
                       float(np.mean(accs)), float(np.std(accs)), per)


def _svm_row(name: str, matrix: FeatureMatrix, keep: list[str],
             c_grid, gamma_grid) -> AblationRow:
    sub = matrix.subset(keep)
    report, _ = grid_search_loso(sub, c_grid, gamma_grid)
    per = {f.subject_id: f.modal_metrics.get("accuracy", 0.0)
           for f in report.folds}
    return AblationRow(name, tuple(keep), report.mean_accuracy,
                       report.std_accuracy, per)


def ablation_suite(matrix: FeatureMatrix, selected: list[str],
                   score_names: tuple[str, str] = ("attention", "meditation"),
                   c_grid: tuple[float, ...] = C_GRID,
                   gamma_grid: tuple[float, ...] = GAMMA_GRID) -> list[AblationRow]:
    """Four rows over identical folds: headset-score ratio rule, SVM on the
    two scores, SVM on computed features only, SVM on the full selection."""
    computed = [n for n in selected if n not in score_names]
    if not computed:
        raise DegenerateData("selection holds no computed features")
    rows = [
        _ratio_row(matrix),
        _svm_row("scores_svm", matrix, list(score_names), c_grid, gamma_grid),
        _svm_row("computed_only", matrix, computed, c_grid, gamma_grid),
        _svm_row("full_selection", matrix, list(selected), c_grid, gamma_grid),
    ]
    return rows
