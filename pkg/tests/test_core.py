"""Segmentation and balancing against brute-force enumeration."""

import numpy as np
import pytest

from eegmon.core import (EegRecord, Segment, SegmentationConfig,
                         balance_by_subject, segment_block)
from eegmon.errors import BlockTooShort, InvalidConfig

N_RANDOM_CONFIGS = 300
RNG_SEED = 1234


def _brute_force_starts(t_total, seg_len, step):
    starts = []
    s = 0
    while s + seg_len <= t_total:
        starts.append(s)
        s += step
    return starts


def _random_config(rng):
    # rejection-sample a config satisfying the documented constraints
    while True:
        seg_len = int(rng.integers(600, 4000))
        overlap = float(rng.uniform(0.0, 0.95))
        trim = int(rng.integers(0, 280))
        if seg_len <= 2 * trim or overlap * seg_len <= 2 * trim:
            continue
        if int(seg_len * (1.0 - overlap) + 1e-9) < 1:
            continue
        return SegmentationConfig(seg_len, overlap, trim)


def test_segment_starts_match_brute_force():
    rng = np.random.default_rng(RNG_SEED)
    for _ in range(N_RANDOM_CONFIGS):
        cfg = _random_config(rng)
        t_total = int(rng.integers(cfg.segment_len, 6 * cfg.segment_len))
        rec = EegRecord(samples=np.zeros(t_total), subject_id="s", block_id="b")
        segs = segment_block(rec, cfg)
        expect = _brute_force_starts(t_total, cfg.segment_len, cfg.step)
        assert [s.start for s in segs] == expect
        assert all(len(s) == cfg.segment_len for s in segs)


def test_single_window_when_block_equals_window():
    cfg = SegmentationConfig(1750, 0.7, 250)
    rec = EegRecord(samples=np.zeros(1750), subject_id="s", block_id="b")
    segs = segment_block(rec, cfg)
    assert len(segs) == 1 and segs[0].start == 0


def test_default_config_seven_windows_in_5000():
    cfg = SegmentationConfig(1750, 0.7, 250)
    assert cfg.step == 525
    rec = EegRecord(samples=np.zeros(5000), subject_id="s", block_id="b")
    segs = segment_block(rec, cfg)
    assert [s.start for s in segs] == [0, 525, 1050, 1575, 2100, 2625, 3150]


def test_short_block_rejected():
    cfg = SegmentationConfig(1750, 0.7, 250)
    rec = EegRecord(samples=np.zeros(1749), subject_id="s", block_id="b")
    with pytest.raises(BlockTooShort):
        segment_block(rec, cfg)


def test_segment_samples_reproduce_source():
    rng = np.random.default_rng(RNG_SEED + 1)
    rec = EegRecord(samples=rng.normal(size=7000), subject_id="s",
                    block_id="b", label=0)
    cfg = SegmentationConfig(1750, 0.7, 250)
    for seg in segment_block(rec, cfg):
        lo = seg.start
        assert np.array_equal(seg.samples, rec.samples[lo:lo + 1750])


def test_aux_snapshot_is_window_mean():
    rng = np.random.default_rng(RNG_SEED + 2)
    att = rng.uniform(0, 100, size=5000)
    rec = EegRecord(samples=np.zeros(5000), subject_id="s", block_id="b",
                    aux={"attention": att})
    cfg = SegmentationConfig(1750, 0.7, 250)
    for seg in segment_block(rec, cfg):
        lo = seg.start
        assert seg.aux["attention"] == pytest.approx(
            float(np.mean(att[lo:lo + 1750])))


def test_config_constraints_rejected():
    with pytest.raises(InvalidConfig):
        SegmentationConfig(400, 0.7, 250)  # nothing survives trimming
    with pytest.raises(InvalidConfig):
        SegmentationConfig(1750, 0.2, 250)  # windows leave trimmed gaps
    with pytest.raises(InvalidConfig):
        SegmentationConfig(1750, 1.0, 250)  # overlap must stay below 1
    with pytest.raises(InvalidConfig):
        SegmentationConfig(-5, 0.7, 0)


def test_trimmed_len():
    assert SegmentationConfig(1750, 0.7, 250).trimmed_len == 1250


def _seg(subject, label, start):
    return Segment(samples=np.zeros(4), subject_id=subject, block_id="b",
                   start=start, label=label)


def test_balance_keeps_last_of_larger_class():
    segs = [_seg("u", 0, i) for i in range(120)]
    segs += [_seg("u", 1, 1000 + i) for i in range(100)]
    ds = balance_by_subject(segs)
    assert ds.retained["u"] == 100
    kept0 = [s.start for s in ds.by_subject["u"] if s.label == 0]
    assert kept0 == list(range(20, 120))  # the 100 most recent
    kept1 = [s.start for s in ds.by_subject["u"] if s.label == 1]
    assert len(kept1) == 100


def test_balance_leaves_balanced_subject_alone():
    segs = [_seg("u", 0, i) for i in range(50)]
    segs += [_seg("u", 1, 100 + i) for i in range(50)]
    ds = balance_by_subject(segs)
    assert len(ds) == 100
    assert [s.start for s in ds.by_subject["u"]] == (
        list(range(50)) + list(range(100, 150)))


def test_balance_drops_one_class_subject_with_warning(caplog):
    segs = [_seg("gone", 0, i) for i in range(10)]
    segs += [_seg("kept", 0, i) for i in range(5)]
    segs += [_seg("kept", 1, 50 + i) for i in range(7)]
    with caplog.at_level("WARNING"):
        ds = balance_by_subject(segs)
    assert "gone" not in ds.by_subject
    assert any("gone" in r.message for r in caplog.records)
    assert ds.retained == {"kept": 5}


def test_balance_counts_equal_and_total_even():
    rng = np.random.default_rng(RNG_SEED + 3)
    segs = []
    for subj in "abcde":
        for lab in (0, 1):
            for i in range(int(rng.integers(1, 40))):
                segs.append(_seg(subj, lab, i))
    ds = balance_by_subject(segs)
    assert len(ds) % 2 == 0
    for subj, group in ds.by_subject.items():
        labs = [s.label for s in group]
        assert labs.count(0) == labs.count(1) == ds.retained[subj]


def test_unlabeled_segment_rejected():
    with pytest.raises(InvalidConfig):
        balance_by_subject([_seg("u", None, 0)])


def test_record_validation():
    with pytest.raises(InvalidConfig):
        EegRecord(samples=np.zeros(0))
    with pytest.raises(InvalidConfig):
        EegRecord(samples=np.zeros(10), sample_rate=0.0)
    with pytest.raises(InvalidConfig):
        EegRecord(samples=np.zeros(10), aux={"attention": np.zeros(5)})
