"""Offline pipeline: records to cleaned segments to features to a
validated model, with file artifacts between stages.

Every stage is a pure function of its inputs plus a RunConfig, and every
artifact written here is byte-stable across reruns (no clocks, no
environment-dependent state).
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import artifacts as art
from .core import (BalancedDataset, EegRecord, Segment, SegmentationConfig,
                   balance_by_subject, segment_block)
from .dsp import (DEFAULT_BAND, DEFAULT_NOTCH_HZ, DEFAULT_NOTCH_Q,
                  DEFAULT_ORDER, design_butterworth_bandpass, design_notch,
                  preprocess_segment)
from .features import (FeatureManifest, FeatureMatrix, build_manifest,
                       extract_matrix)
from .learn import (C_GRID, GAMMA_GRID, LosoReport, SvmModel,
                    ablation_suite, grid_search_loso)
from .realtime import AlertPolicy
from .selection import (CONSENSUS_FRACTION, PEARSON_THRESHOLD, RFE_C_GRID,
                        RFE_TARGET, SelectionResult, select_features)


@dataclass(frozen=True)
class RunConfig:
    """Pinned defaults for the whole pipeline."""
    segment_len: int = 1750
    overlap: float = 0.7
    trim: int = 250
    low_hz: float = DEFAULT_BAND[0]
    high_hz: float = DEFAULT_BAND[1]
    filter_order: int = DEFAULT_ORDER
    notch_hz: float = DEFAULT_NOTCH_HZ
    notch_q: float = DEFAULT_NOTCH_Q
    amplitude_threshold_uv: float = art.AMPLITUDE_THRESHOLD_UV
    peak_height_uv: float = art.PEAK_HEIGHT_UV
    peak_distance: int = art.PEAK_DISTANCE
    eemd_ensemble: int = art.EEMD_ENSEMBLE
    eemd_noise: float = art.EEMD_NOISE_STD
    smooth_window: int = art.SMOOTH_WINDOW
    base_seed: int = 0
    include_aux: bool = True
    wavelet: str = "db10"
    pearson_threshold: float = PEARSON_THRESHOLD
    rfe_target: int = RFE_TARGET
    rfe_c_grid: tuple[float, ...] = RFE_C_GRID
    c_grid: tuple[float, ...] = C_GRID
    gamma_grid: tuple[float, ...] = GAMMA_GRID
    consensus_fraction: float = CONSENSUS_FRACTION
    final_c: float = 0.01
    final_gamma: float = 0.5
    consecutive_required: int = 5
    cooldown_events: int | None = None
    min_duration_s: float = 8.0
    duration_convention: str = "steps"

    def segmentation(self) -> SegmentationConfig:
        return SegmentationConfig(self.segment_len, self.overlap, self.trim)

    def policy(self) -> AlertPolicy:
        return AlertPolicy(self.consecutive_required, self.cooldown_events,
                           self.min_duration_s, self.duration_convention,
                           self.amplitude_threshold_uv)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rfe_c_grid"] = list(self.rfe_c_grid)
        d["c_grid"] = list(self.c_grid)
        d["gamma_grid"] = list(self.gamma_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        for key in ("rfe_c_grid", "c_grid", "gamma_grid"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class PreprocessReport:
    n_segments: int = 0
    n_rejected: int = 0
    n_blink_regions: int = 0
    rejected: list[dict] = field(default_factory=list)
    retained_by_subject: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def clean_records(records: list[EegRecord], cfg: RunConfig,
                  deblink: bool = True
                  ) -> tuple[BalancedDataset, PreprocessReport]:
    """Segment, filter, reject, class-balance, and de-blink."""
    bandpass = design_butterworth_bandpass(
        cfg.filter_order, cfg.low_hz, cfg.high_hz, records[0].sample_rate)
    notch = design_notch(cfg.notch_hz, cfg.notch_q, records[0].sample_rate)
    seg_cfg = cfg.segmentation()
    report = PreprocessReport()
    kept: list[Segment] = []
    for record in records:
        for seg in segment_block(record, seg_cfg):
            clean = preprocess_segment(seg, bandpass, cfg.trim, notch)
            report.n_segments += 1
            if not art.reject_high_amplitude(clean, cfg.amplitude_threshold_uv):
                report.n_rejected += 1
                report.rejected.append({
                    "subject_id": seg.subject_id, "block_id": seg.block_id,
                    "start": seg.start})
                continue
            kept.append(clean)
    dataset = balance_by_subject(kept)
    if deblink:
        for subject, segs in dataset.by_subject.items():
            processed = []
            for seg in segs:
                out, info = art.remove_blinks(
                    seg, cfg.peak_height_uv, cfg.peak_distance,
                    cfg.eemd_ensemble, cfg.eemd_noise, cfg.smooth_window,
                    cfg.base_seed)
                report.n_blink_regions += len(info.regions)
                processed.append(out)
            dataset.by_subject[subject] = processed
    report.retained_by_subject = {s: len(v)
                                  for s, v in dataset.by_subject.items()}
    return dataset, report


def build_matrix(dataset: BalancedDataset,
                 manifest: FeatureManifest) -> FeatureMatrix:
    return extract_matrix(dataset.segments, manifest)


def run_selection(matrix: FeatureMatrix, cfg: RunConfig) -> SelectionResult:
    return select_features(matrix, cfg.pearson_threshold, cfg.rfe_target,
                           cfg.rfe_c_grid, cfg.consensus_fraction)


def evaluate_loso(matrix: FeatureMatrix, selected: list[str],
                  cfg: RunConfig) -> tuple[LosoReport, SvmModel]:
    return grid_search_loso(matrix.subset(selected), cfg.c_grid,
                            cfg.gamma_grid)


def run_ablation(matrix: FeatureMatrix, selected: list[str],
                 cfg: RunConfig) -> list[dict]:
    rows = ablation_suite(matrix, selected, c_grid=cfg.c_grid,
                          gamma_grid=cfg.gamma_grid)
    return [r.to_dict() for r in rows]


def predict_record(record: EegRecord, model: SvmModel,
                   manifest: FeatureManifest, cfg: RunConfig) -> list[dict]:
    """Offline window-by-window predictions mirroring the live engine."""
    from .features import compute_features  # local to avoid cycle at import

    bandpass = design_butterworth_bandpass(
        cfg.filter_order, cfg.low_hz, cfg.high_hz, record.sample_rate)
    notch = design_notch(cfg.notch_hz, cfg.notch_q, record.sample_rate)
    out = []
    for seg in segment_block(record, cfg.segmentation()):
        clean = preprocess_segment(seg, bandpass, cfg.trim, notch)
        row = {"start": seg.start, "subject_id": seg.subject_id}
        if not art.reject_high_amplitude(clean, cfg.amplitude_threshold_uv):
            row.update({"kind": "warning", "pred": None, "margin": 0.0})
        else:
            deblinked, _ = art.remove_blinks(
                clean, cfg.peak_height_uv, cfg.peak_distance,
                cfg.eemd_ensemble, cfg.eemd_noise, cfg.smooth_window,
                cfg.base_seed)
            vec = compute_features(deblinked, manifest)
            row.update({"kind": "segment",
                        "pred": int(model.predict(vec)[0]),
                        "margin": float(model.decision_function(vec)[0])})
        out.append(row)
    return out


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_manifest(cfg: RunConfig, inputs: dict[str, Path],
                 stage: str) -> dict:
    """Reproducibility sidecar: config plus input digests, no clocks."""
    return {
        "stage": stage,
        "config": cfg.to_dict(),
        "inputs": {name: {"path": str(p), "sha256": file_digest(p)}
                   for name, p in sorted(inputs.items())},
    }


def end_to_end(records: list[EegRecord], cfg: RunConfig
               ) -> tuple[LosoReport, SvmModel, SelectionResult,
                          FeatureManifest]:
    """Records in, validated model out; the acceptance path."""
    dataset, _ = clean_records(records, cfg)
    manifest = build_manifest(include_aux=cfg.include_aux,
                              wavelet=cfg.wavelet)
    matrix = build_matrix(dataset, manifest)
    selection = run_selection(matrix, cfg)
    report, model = evaluate_loso(matrix, selection.selected, cfg)
    return report, model, selection, manifest
