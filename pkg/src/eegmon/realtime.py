"""Online classification over a sliding sample buffer, alert policy, and
session statistics.

Windows are aligned exactly as offline segmentation aligns them (starts at
multiples of the hop), preprocessing is the shared canonical chain, and
blink-removal noise is seeded from window content, so a replayed session
reproduces the offline predictions bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import stdtr

from .artifacts import AMPLITUDE_THRESHOLD_UV, remove_blinks
from .core import AUX_CHANNELS, LABEL_NONATTENTIVE, Segment, SegmentationConfig
from .dsp import (DEFAULT_BAND, DEFAULT_NOTCH_HZ, DEFAULT_NOTCH_Q,
                  DEFAULT_ORDER, design_butterworth_bandpass, design_notch,
                  preprocess_segment)
from .errors import (EmptySession, InvalidConfig, SourceExhausted,
                     UnpairedLengths, ZeroVariance)
from .features import FeatureManifest, compute_features
from .learn import SvmModel

DISPLAY_DECIMATION = 4


@dataclass(frozen=True)
class AlertPolicy:
    """Alert when enough consecutive windows classify as non-attentive.

    Warnings (unusable windows) pause the count without resetting it.
    After a fire, the next `cooldown_events` classified windows cannot
    fire again; by default that equals the run length, so sustained
    non-attention re-alerts at a steady cadence.
    """
    consecutive_required: int = 5
    cooldown_events: int | None = None
    min_duration_s: float = 8.0
    duration_convention: str = "steps"  # or "span"
    warning_threshold_uv: float = AMPLITUDE_THRESHOLD_UV

    def __post_init__(self) -> None:
        if self.consecutive_required < 1:
            raise InvalidConfig("consecutive_required must be >= 1")
        if self.duration_convention not in ("steps", "span"):
            raise InvalidConfig("duration_convention: 'steps' or 'span'")

    @property
    def cooldown(self) -> int:
        return (self.consecutive_required if self.cooldown_events is None
                else self.cooldown_events)


PILOT_POLICY = AlertPolicy(consecutive_required=4)


def run_duration_s(n_segments: int, convention: str,
                   segmentation: SegmentationConfig,
                   sample_rate: float) -> float:
    """Duration of a run of n consecutive windows.

    "steps" counts one hop per window; "span" counts first-sample to
    last-sample extent of the run.
    """
    if n_segments <= 0:
        return 0.0
    if convention == "span":
        return (segmentation.segment_len
                + (n_segments - 1) * segmentation.step) / sample_rate
    return n_segments * segmentation.step / sample_rate


class AlertTracker:
    """Counter, cooldown, and firing logic for one session."""

    def __init__(self, policy: AlertPolicy):
        self.policy = policy
        self.counter = 0
        self.cooldown_remaining = 0
        self.alerts_fired = 0

    def observe_warning(self) -> None:
        """Warnings neither advance nor reset the run."""

    def observe(self, pred: int) -> bool:
        if self.cooldown_remaining > 0:
            self.cooldown_remaining -= 1
        if pred == LABEL_NONATTENTIVE:
            self.counter += 1
        else:
            self.counter = 0
        if self.counter >= self.policy.consecutive_required:
            self.counter = 0
            fired = self.cooldown_remaining == 0
            self.cooldown_remaining = self.policy.cooldown
            if fired:
                self.alerts_fired += 1
            return fired
        return False


@dataclass
class StreamEvent:
    index: int
    start_sample: int
    end_sample: int
    t_start_s: float
    t_end_s: float
    kind: str  # "segment" or "warning"
    pred: int | None = None
    margin: float = 0.0
    alert: bool = False
    counter: int = 0
    cooldown: int = 0
    scores: dict[str, float] = field(default_factory=dict)
    display: list[float] = field(default_factory=list)
    true_label: int | None = None

    def to_dict(self) -> dict:
        return {
            "type": "event", "index": self.index,
            "start_sample": self.start_sample,
            "end_sample": self.end_sample,
            "t": self.t_start_s, "t_end": self.t_end_s,
            "kind": self.kind, "pred": self.pred, "margin": self.margin,
            "alert": self.alert, "warning": self.kind == "warning",
            "counter": self.counter, "cooldown": self.cooldown,
            "scores": self.scores, "display": self.display,
            "true_label": self.true_label,
        }


class StreamEngine:
    """Push samples in, get classified window events out."""

    def __init__(self, model: SvmModel, manifest: FeatureManifest,
                 policy: AlertPolicy | None = None,
                 segmentation: SegmentationConfig | None = None,
                 sample_rate: float = 250.0,
                 subject_id: str = "live", base_seed: int = 0):
        self.model = model
        self.manifest = manifest
        self.policy = policy or AlertPolicy()
        self.segmentation = segmentation or SegmentationConfig()
        self.sample_rate = sample_rate
        self.subject_id = subject_id
        self.base_seed = base_seed
        self.tracker = AlertTracker(self.policy)
        self.events: list[StreamEvent] = []
        self._bandpass = design_butterworth_bandpass(
            DEFAULT_ORDER, DEFAULT_BAND[0], DEFAULT_BAND[1], sample_rate)
        self._notch = design_notch(DEFAULT_NOTCH_HZ, DEFAULT_NOTCH_Q,
                                   sample_rate)
        self._buf = np.zeros(0)
        self._aux = {name: np.zeros(0) for name in AUX_CHANNELS}
        self._buf_start = 0  # absolute index of _buf[0]
        self._next_window = 0  # absolute start of the next window
        self._emitted = 0

    def push_samples(self, samples: np.ndarray,
                     aux: dict[str, np.ndarray] | None = None,
                     true_label: int | None = None) -> list[StreamEvent]:
        x = np.asarray(samples, dtype=np.float64)
        self._buf = np.concatenate([self._buf, x])
        for name in AUX_CHANNELS:
            chunk = (aux or {}).get(name)
            if chunk is None:
                chunk = np.zeros(x.size)
            self._aux[name] = np.concatenate([self._aux[name],
                                              np.asarray(chunk, dtype=np.float64)])
        out: list[StreamEvent] = []
        seg_len = self.segmentation.segment_len
        while self._buf_start + self._buf.size >= self._next_window + seg_len:
            lo = self._next_window - self._buf_start
            window = self._buf[lo:lo + seg_len]
            aux_means = {name: float(np.mean(chan[lo:lo + seg_len]))
                         for name, chan in self._aux.items()}
            event = self._process_window(window, aux_means, true_label)
            out.append(event)
            self.events.append(event)
            self._next_window += self.segmentation.step
            drop = self._next_window - self._buf_start
            if drop > 0:
                self._buf = self._buf[drop:]
                self._aux = {k: v[drop:] for k, v in self._aux.items()}
                self._buf_start = self._next_window
        return out

    def _process_window(self, window: np.ndarray, aux_means: dict[str, float],
                        true_label: int | None) -> StreamEvent:
        start = self._next_window
        seg = Segment(samples=window.copy(), subject_id=self.subject_id,
                      block_id="stream", start=start, label=None,
                      aux=aux_means, sample_rate=self.sample_rate)
        clean = preprocess_segment(seg, self._bandpass,
                                   self.segmentation.trim, self._notch)
        event = StreamEvent(
            index=self._emitted, start_sample=start,
            end_sample=start + window.size,
            t_start_s=start / self.sample_rate,
            t_end_s=(start + window.size) / self.sample_rate,
            kind="segment", scores=aux_means, true_label=true_label)
        self._emitted += 1
        peak = float(np.max(np.abs(clean.samples), initial=0.0))
        if peak > self.policy.warning_threshold_uv:
            event.kind = "warning"
            self.tracker.observe_warning()
        else:
            deblinked, _ = remove_blinks(clean, base_seed=self.base_seed)
            vec = compute_features(deblinked, self.manifest)
            margin = float(self.model.decision_function(vec)[0])
            event.pred = int(self.model.predict(vec)[0])
            event.margin = margin
            event.alert = self.tracker.observe(event.pred)
            event.display = [float(v) for v in
                             deblinked.samples[::DISPLAY_DECIMATION]]
        event.counter = self.tracker.counter
        event.cooldown = self.tracker.cooldown_remaining
        return event

    def run_from_source(self, source, chunk: int | None = None,
                        max_events: int | None = None) -> list[StreamEvent]:
        """Pull from a .read(n) source until it is exhausted."""
        chunk = chunk or self.segmentation.step
        produced: list[StreamEvent] = []
        label_fn = getattr(source, "true_label_at", None)
        while max_events is None or len(produced) < max_events:
            try:
                samples, aux = source.read(chunk)
            except SourceExhausted:
                break
            true_label = None
            if label_fn is not None:
                true_label = label_fn(self._next_window
                                      + self.segmentation.segment_len - 1)
            elif hasattr(source, "current_label"):
                true_label = int(source.current_label)
            produced.extend(self.push_samples(samples, aux, true_label))
        return produced


# ---------------------------------------------------------------------------
# Session statistics
# ---------------------------------------------------------------------------

def _runs(preds: list[int]) -> list[int]:
    runs, count = [], 0
    for p in preds:
        if p == LABEL_NONATTENTIVE:
            count += 1
        elif count:
            runs.append(count)
            count = 0
    if count:
        runs.append(count)
    return runs


def session_summary(events: list[StreamEvent],
                    policy: AlertPolicy,
                    segmentation: SegmentationConfig,
                    sample_rate: float) -> dict:
    """Aggregate one session's events into reportable statistics."""
    if not events:
        raise EmptySession("no events to summarize")
    classified = [e for e in events if e.kind == "segment"]
    preds = [e.pred for e in classified]
    n_non = sum(1 for p in preds if p == LABEL_NONATTENTIVE)
    runs = _runs(preds)
    longest = max(runs, default=0)
    alerts = [{"index": e.index, "t": e.t_start_s} for e in classified
              if e.alert]
    summary = {
        "type": "summary",
        "n_events": len(events),
        "n_classified": len(classified),
        "n_warnings": sum(1 for e in events if e.kind == "warning"),
        "n_alerts": len(alerts),
        "alerts": alerts,
        "frac_nonattentive": n_non / len(classified) if classified else 0.0,
        "longest_nonattentive_run": longest,
        "longest_run_duration_s": run_duration_s(
            longest, policy.duration_convention, segmentation, sample_rate),
        "session_duration_s": events[-1].t_end_s,
        "duration_convention": policy.duration_convention,
        "mean_margin": (float(np.mean([e.margin for e in classified]))
                        if classified else 0.0),
    }
    if any(e.true_label is not None for e in classified):
        labeled = [e for e in classified if e.true_label is not None]
        hits = sum(1 for e in labeled if e.pred == e.true_label)
        summary["labeled_accuracy"] = hits / len(labeled)
        summary["phases"] = _phase_stats(labeled, policy, segmentation,
                                         sample_rate)
    return summary


def _phase_stats(labeled: list[StreamEvent], policy: AlertPolicy,
                 segmentation: SegmentationConfig,
                 sample_rate: float) -> list[dict]:
    phases: list[dict] = []
    start = 0
    for i in range(1, len(labeled) + 1):
        if i == len(labeled) or labeled[i].true_label != labeled[start].true_label:
            chunk = labeled[start:i]
            duration = run_duration_s(len(chunk), policy.duration_convention,
                                      segmentation, sample_rate)
            if duration >= policy.min_duration_s:
                hits = sum(1 for e in chunk if e.pred == e.true_label)
                phases.append({
                    "label": int(chunk[0].true_label),
                    "n_segments": len(chunk),
                    "duration_s": duration,
                    "accuracy": hits / len(chunk),
                    "t_start": chunk[0].t_start_s,
                })
            start = i
    return phases


# ---------------------------------------------------------------------------
# Paired comparison
# ---------------------------------------------------------------------------

@dataclass
class TTestResult:
    t: float
    p: float
    df: int
    mean_diff: float

    def to_dict(self) -> dict:
        return {"t": self.t, "p": self.p, "df": self.df,
                "mean_diff": self.mean_diff}


def paired_t_test(a: np.ndarray, b: np.ndarray) -> TTestResult:
    """Two-sided paired t-test, p from the Student-t CDF."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size != b.size:
        raise UnpairedLengths(f"{a.size} vs {b.size} observations")
    if a.size < 2:
        raise EmptySession("need at least two pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise ZeroVariance("paired differences are constant")
    n = d.size
    t = float(np.mean(d)) / (sd / np.sqrt(n))
    p = 2.0 * float(stdtr(n - 1, -abs(t)))
    return TTestResult(t, p, n - 1, float(np.mean(d)))


def pilot_report(pre: np.ndarray, post: np.ndarray,
                 alpha: float = 0.05) -> dict:
    """Pre/post comparison across participants (post minus pre)."""
    result = paired_t_test(post, pre)
    pre = np.asarray(pre, dtype=np.float64)
    post = np.asarray(post, dtype=np.float64)
    return {
        "n": int(pre.size),
        "pre_mean": float(np.mean(pre)),
        "post_mean": float(np.mean(post)),
        "mean_improvement": result.mean_diff,
        "t": result.t, "p": result.p, "df": result.df,
        "significant": bool(result.p < alpha),
        "per_participant_diff": (post - pre).tolist(),
    }
