"""Correlation pruning, recursive elimination, and the consensus vote."""

import numpy as np
import pytest

from eegmon.core import LABEL_ATTENTIVE, LABEL_NONATTENTIVE
from eegmon.errors import DegenerateData
from eegmon.features import FeatureMatrix
from eegmon.selection import (SubjectSelection, consensus_features,
                              pearson_filter, rfe_linear_svm, select_features)

N_PLANTED_RUNS = 100
PLANTED_PASS_RATE = 0.95


def _matrix(values, names, labels=None, subjects=None):
    n = values.shape[0]
    return FeatureMatrix(
        values, tuple(names),
        subjects if subjects is not None else ["s0"] * n,
        labels if labels is not None else np.zeros(n, dtype=int), "")


def test_pearson_drops_duplicates_and_negations():
    rng = np.random.default_rng(137)
    a = rng.normal(size=80)
    d = rng.normal(size=80)
    values = np.column_stack([a, a.copy(), -a, d])
    kept, drops = pearson_filter(_matrix(values, ("a", "dup", "neg", "d")))
    assert kept == ["a", "d"]
    assert {(x.kept, x.dropped) for x in drops} == {("a", "dup"), ("a", "neg")}
    by_dropped = {x.dropped: x.r for x in drops}
    assert by_dropped["dup"] == pytest.approx(1.0)
    assert by_dropped["neg"] == pytest.approx(-1.0)


def test_pearson_row_order_invariant():
    rng = np.random.default_rng(139)
    values = rng.normal(size=(60, 6))
    values[:, 3] = 0.9 * values[:, 1] + 0.1 * rng.normal(size=60)
    names = tuple(f"f{i}" for i in range(6))
    kept_a, drops_a = pearson_filter(_matrix(values, names))
    perm = rng.permutation(60)
    kept_b, drops_b = pearson_filter(_matrix(values[perm], names))
    assert kept_a == kept_b
    assert [(d.kept, d.dropped) for d in drops_a] == \
        [(d.kept, d.dropped) for d in drops_b]


def test_pearson_threshold_boundary():
    rng = np.random.default_rng(149)
    a = rng.normal(size=500)
    mild = 0.5 * a + np.sqrt(1 - 0.25) * rng.normal(size=500)
    kept, drops = pearson_filter(_matrix(np.column_stack([a, mild]),
                                         ("a", "mild")))
    assert kept == ["a", "mild"] and drops == []


def test_pearson_flat_column_rules():
    rng = np.random.default_rng(151)
    a = rng.normal(size=50)
    values = np.column_stack([a, np.full(50, 3.0), np.full(50, 3.0)])
    kept, drops = pearson_filter(_matrix(values, ("a", "flat1", "flat2")))
    # a flat column carries no correlation with a varying one, but two
    # identical flat columns are duplicates of each other
    assert kept == ["a", "flat1"]
    assert [(d.kept, d.dropped) for d in drops] == [("flat1", "flat2")]


def _planted_problem(rng, n_rows=60, n_noise=20, shift=1.5):
    x = rng.normal(size=(n_rows, n_noise + 2))
    labels = np.array([LABEL_ATTENTIVE, LABEL_NONATTENTIVE] * (n_rows // 2))
    sign = np.where(labels == LABEL_NONATTENTIVE, 1.0, -1.0)
    x[:, 0] += shift * sign
    x[:, 1] -= shift * sign
    names = ["inf0", "inf1"] + [f"noise{i:02d}" for i in range(n_noise)]
    return x, labels, names


def test_rfe_recovers_planted_features():
    rng = np.random.default_rng(157)
    hits = 0
    for _ in range(N_PLANTED_RUNS):
        x, labels, names = _planted_problem(rng)
        chosen = rfe_linear_svm(x, labels, names, c=1.0, target=2)
        hits += set(chosen) == {"inf0", "inf1"}
    assert hits >= PLANTED_PASS_RATE * N_PLANTED_RUNS


def test_rfe_target_and_order():
    rng = np.random.default_rng(163)
    x, labels, names = _planted_problem(rng, n_noise=6)
    chosen = rfe_linear_svm(x, labels, names, c=1.0, target=4)
    assert len(chosen) == 4
    # survivors keep their original relative order
    idx = [names.index(n) for n in chosen]
    assert idx == sorted(idx)
    assert {"inf0", "inf1"} <= set(chosen)


def test_rfe_validation():
    with pytest.raises(DegenerateData):
        rfe_linear_svm(np.zeros((0, 3)), np.zeros(0), ["a", "b", "c"], 1.0)
    with pytest.raises(DegenerateData):
        rfe_linear_svm(np.ones((4, 3)), np.zeros(4), ["a", "b", "c"], 1.0)


def test_consensus_vote_threshold_and_order():
    per = [
        SubjectSelection("s0", 1.0, 0.9, ["a", "b", "c"]),
        SubjectSelection("s1", 1.0, 0.9, ["b", "c", "d"]),
        SubjectSelection("s2", 1.0, 0.9, ["c", "e", "a"]),
    ]
    chosen, votes = consensus_features(per, fraction=0.5)
    # need >= 1.5 votes: a(2), b(2), c(3) stay; d, e drop
    assert chosen == ["c", "a", "b"]
    assert votes == {"a": 2, "b": 2, "c": 3, "d": 1, "e": 1}
    all_of, _ = consensus_features(per, fraction=1.0)
    assert all_of == ["c"]


def test_select_features_end_to_end():
    rng = np.random.default_rng(167)
    blocks, labels, subjects = [], [], []
    for s in range(3):
        # shift 1.2 keeps corr(inf0, inf1) near -0.59, clear of the
        # 0.8 pruning threshold (shift 2.0 would sit exactly at -0.8)
        x, y, names = _planted_problem(rng, n_rows=40, n_noise=6, shift=1.2)
        # a redundant copy of the first informative column for the filter
        x = np.column_stack([x, x[:, 0] * 2.0 + 0.01])
        blocks.append(x)
        labels.append(y)
        subjects.extend([f"s{s}"] * 40)
    names = names + ["dup_inf0"]
    matrix = FeatureMatrix(np.vstack(blocks), tuple(names), subjects,
                           np.concatenate(labels), "mh")
    result = select_features(matrix, target=4, c_grid=(1.0,))
    assert "dup_inf0" in {d.dropped for d in result.pearson_dropped}
    assert {"inf0", "inf1"} <= set(result.selected)
    assert result.n_subjects == 3
    assert len(result.per_subject) == 3
    assert all(result.votes[n] >= 2 for n in result.selected)
    again = select_features(matrix, target=4, c_grid=(1.0,))
    assert again.to_dict() == result.to_dict()
