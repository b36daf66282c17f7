"""Feature selection: correlation pruning, per-subject recursive
elimination under a linear SVM, and a cross-subject consensus vote.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import LABEL_NONATTENTIVE
from .errors import DegenerateData, NonConvergence
from .features import FeatureMatrix
from .learn import (C_GRID, GAMMA_GRID, linear_kernel, rbf_kernel, smo_solve,
                    standardization)

PEARSON_THRESHOLD = 0.8
RFE_TARGET = 50
RFE_C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
CONSENSUS_FRACTION = 0.5


def _correlation_matrix(x: np.ndarray) -> np.ndarray:
    """Pairwise Pearson r with explicit edge rules: a zero-variance column
    correlates 0 with everything except an exact duplicate of itself (1)."""
    n, p = x.shape
    mean = np.mean(x, axis=0)
    sd = np.std(x, axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    denom = np.outer(sd, sd)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0.0, cov / np.where(denom > 0, denom, 1.0), 0.0)
    flat = np.nonzero(sd == 0.0)[0]
    for i in flat:
        for j in flat:
            if i != j and x[0, i] == x[0, j]:
                corr[i, j] = 1.0
    np.fill_diagonal(corr, 1.0)
    return corr


@dataclass
class PearsonDrop:
    kept: str
    dropped: str
    r: float


def pearson_filter(matrix: FeatureMatrix,
                   threshold: float = PEARSON_THRESHOLD
                   ) -> tuple[list[str], list[PearsonDrop]]:
    """Scan columns in catalog order; of a pair with |r| > threshold the
    later column is dropped. Result is row-order invariant."""
    corr = _correlation_matrix(matrix.values)
    kept_idx: list[int] = []
    drops: list[PearsonDrop] = []
    for j in range(len(matrix.names)):
        blocker = next((k for k in kept_idx
                        if abs(corr[k, j]) > threshold), None)
        if blocker is None:
            kept_idx.append(j)
        else:
            drops.append(PearsonDrop(matrix.names[blocker], matrix.names[j],
                                     float(corr[blocker, j])))
    return [matrix.names[j] for j in kept_idx], drops


# ---------------------------------------------------------------------------
# Recursive feature elimination
# ---------------------------------------------------------------------------

def _linear_weights(x: np.ndarray, y_pm: np.ndarray, c: float) -> np.ndarray:
    mean, scale = standardization(x)
    z = (x - mean) / scale
    # low-rank linear kernels zigzag before meeting the gap tolerance,
    # so the update budget is far above the typical few hundred
    alpha, _, _ = smo_solve(linear_kernel(z, z), y_pm, c,
                            max_updates=max(20000, 400 * y_pm.size))
    return z.T @ (alpha * y_pm)


def rfe_linear_svm(x: np.ndarray, labels: np.ndarray, names: list[str],
                   c: float, target: int = RFE_TARGET) -> list[str]:
    """Drop the feature with the smallest |weight| one at a time until
    `target` remain. Ties drop the later column."""
    if x.shape[0] == 0:
        raise DegenerateData("no rows to run elimination on")
    y_pm = np.where(np.asarray(labels) == LABEL_NONATTENTIVE, 1.0, -1.0)
    if np.all(y_pm == y_pm[0]):
        raise DegenerateData("elimination needs both classes")
    live = list(range(len(names)))
    while len(live) > max(target, 1):
        w = _linear_weights(x[:, live], y_pm, c)
        absw = np.abs(w)
        worst = int(np.nonzero(absw == absw.min())[0][-1])
        live.pop(worst)
    return [names[i] for i in live]


def _two_fold_accuracy(x: np.ndarray, labels: np.ndarray,
                       c_grid=C_GRID, gamma_grid=GAMMA_GRID) -> float:
    """Best grid-pair accuracy under a stratified half split, both ways."""
    y = np.where(np.asarray(labels) == LABEL_NONATTENTIVE, 1.0, -1.0)
    fold = np.zeros(y.size, dtype=bool)
    for cls in (-1.0, 1.0):
        idx = np.nonzero(y == cls)[0]
        fold[idx[len(idx) // 2:]] = True  # second half per class
    best = 0.0
    for gamma in gamma_grid:
        for c in c_grid:
            hits = total = 0
            for train_mask in (~fold, fold):
                x_tr, y_tr = x[train_mask], y[train_mask]
                x_te, y_te = x[~train_mask], y[~train_mask]
                if np.all(y_tr == y_tr[0]):
                    continue
                mean, scale = standardization(x_tr)
                z_tr = (x_tr - mean) / scale
                z_te = (x_te - mean) / scale
                try:
                    alpha, bias, _ = smo_solve(
                        rbf_kernel(z_tr, z_tr, gamma), y_tr, c)
                except NonConvergence:
                    continue
                f = rbf_kernel(z_te, z_tr, gamma) @ (alpha * y_tr) + bias
                hits += int(np.sum(np.sign(f + 1e-300) == y_te))
                total += y_te.size
            if total:
                best = max(best, hits / total)
    return best


@dataclass
class SubjectSelection:
    subject_id: str
    best_c: float
    best_accuracy: float
    features: list[str]

    def to_dict(self) -> dict:
        return {"subject_id": self.subject_id, "best_c": self.best_c,
                "best_accuracy": self.best_accuracy, "features": self.features}


@dataclass
class SelectionResult:
    selected: list[str]
    votes: dict[str, int]
    n_subjects: int
    pearson_dropped: list[PearsonDrop] = field(default_factory=list)
    per_subject: list[SubjectSelection] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "selected": self.selected,
            "votes": dict(sorted(self.votes.items())),
            "n_subjects": self.n_subjects,
            "pearson_dropped": [
                {"kept": d.kept, "dropped": d.dropped, "r": d.r}
                for d in self.pearson_dropped],
            "per_subject": [s.to_dict() for s in self.per_subject],
        }


def consensus_features(per_subject: list[SubjectSelection],
                       fraction: float = CONSENSUS_FRACTION
                       ) -> tuple[list[str], dict[str, int]]:
    """Features picked by at least `fraction` of subjects, ordered by vote
    count and then name."""
    votes: dict[str, int] = {}
    for sel in per_subject:
        for name in sel.features:
            votes[name] = votes.get(name, 0) + 1
    need = fraction * len(per_subject)
    chosen = [n for n, v in votes.items() if v >= need]
    chosen.sort(key=lambda n: (-votes[n], n))
    return chosen, votes


def select_features(matrix: FeatureMatrix,
                    pearson_threshold: float = PEARSON_THRESHOLD,
                    target: int = RFE_TARGET,
                    c_grid: tuple[float, ...] = RFE_C_GRID,
                    consensus_fraction: float = CONSENSUS_FRACTION
                    ) -> SelectionResult:
    """Correlation-prune on all rows, then per subject: eliminate down to
    `target` under each penalty, keep the penalty whose surviving set
    scores best in a two-fold check, and vote the survivors across
    subjects."""
    pcf_names, drops = pearson_filter(matrix, pearson_threshold)
    pruned = matrix.subset(pcf_names)
    subjects = sorted(set(matrix.subject_ids))
    per_subject: list[SubjectSelection] = []
    for subject in subjects:
        mask = np.array([s == subject for s in pruned.subject_ids])
        x, y = pruned.values[mask], pruned.labels[mask]
        best: SubjectSelection | None = None
        for c in c_grid:
            chosen = rfe_linear_svm(x, y, list(pruned.names), c,
                                    min(target, len(pruned.names)))
            idx = [pruned.names.index(n) for n in chosen]
            acc = _two_fold_accuracy(x[:, idx], y)
            if best is None or acc > best.best_accuracy:
                best = SubjectSelection(subject, c, acc, chosen)
        per_subject.append(best)
    selected, votes = consensus_features(per_subject, consensus_fraction)
    if not selected:
        raise DegenerateData("consensus vote left no features")
    return SelectionResult(selected, votes, len(subjects), drops, per_subject)
