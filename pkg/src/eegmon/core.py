"""Domain types, windowed segmentation, and per-subject class balancing.

All sample data is single-channel EEG in microvolts at a nominal 250 Hz.
Windowing is done in sample counts, never timestamps, so packet-timing
jitter in the source cannot shift window boundaries.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BlockTooShort, InvalidConfig

log = logging.getLogger(__name__)

LABEL_ATTENTIVE = 0
LABEL_NONATTENTIVE = 1

# Order of the auxiliary channels a headband-style source reports alongside
# the raw signal: six band values plus two proprietary-style scores.
AUX_CHANNELS = (
    "delta",
    "theta",
    "alpha",
    "low_beta",
    "high_beta",
    "gamma",
    "attention",
    "meditation",
)


@dataclass
class EegRecord:
    """One contiguous block of samples from a single subject.

    ``aux`` maps channel name -> per-sample array time-aligned with
    ``samples`` (optional; empty dict when the source has no side channels).
    """

    samples: np.ndarray
    sample_rate: float = 250.0
    subject_id: str = ""
    block_id: str = ""
    label: int | None = None  # 0 attentive, 1 non-attentive, None unlabeled
    aux: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise InvalidConfig("sample_rate must be positive")
        if self.samples.size == 0:
            raise InvalidConfig("record has no samples")
        for name, ch in self.aux.items():
            ch = np.asarray(ch, dtype=np.float64)
            if ch.shape != self.samples.shape:
                raise InvalidConfig(f"aux channel {name!r} not aligned with samples")
            self.aux[name] = ch


@dataclass
class Segment:
    """A fixed-length window cut from one record.

    ``aux`` holds one scalar per auxiliary channel (window mean of the
    source channel), frozen at segmentation time.
    """

    samples: np.ndarray
    subject_id: str
    block_id: str
    start: int
    label: int | None = None
    aux: dict[str, float] = field(default_factory=dict)
    sample_rate: float = 250.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self):
        return self.samples.size

    def with_samples(self, samples: np.ndarray) -> "Segment":
        """Copy of this segment carrying new sample data, same metadata."""
        return Segment(
            samples=samples,
            subject_id=self.subject_id,
            block_id=self.block_id,
            start=self.start,
            label=self.label,
            aux=dict(self.aux),
            sample_rate=self.sample_rate,
        )


@dataclass(frozen=True)
class SegmentationConfig:
    """Window length, overlap ratio, and per-edge trim, all in samples.

    Constraints (trim is applied after zero-phase filtering):
      segment_len > 2 * trim      -- something must survive trimming
      overlap * segment_len > 2 * trim  -- consecutive windows still cover
                                           the trimmed-away edges
      step = floor(segment_len * (1 - overlap)) >= 1
    """

    segment_len: int = 1750
    overlap: float = 0.7
    trim: int = 250

    def __post_init__(self):
        if self.segment_len <= 0 or self.trim < 0:
            raise InvalidConfig("segment_len must be positive, trim nonnegative")
        if not 0.0 <= self.overlap < 1.0:
            raise InvalidConfig("overlap must be in [0, 1)")
        if self.segment_len <= 2 * self.trim:
            raise InvalidConfig(
                f"segment_len={self.segment_len} must exceed 2*trim={2 * self.trim}"
            )
        if self.overlap * self.segment_len <= 2 * self.trim:
            raise InvalidConfig(
                "overlap * segment_len must exceed 2*trim "
                f"(got {self.overlap * self.segment_len:.1f} <= {2 * self.trim})"
            )
        if self.step < 1:
            raise InvalidConfig("step floor(segment_len*(1-overlap)) must be >= 1")

    @property
    def step(self) -> int:
        # tiny epsilon absorbs float dust so e.g. 1750*0.3 floors to 525
        return int(math.floor(self.segment_len * (1.0 - self.overlap) + 1e-9))

    @property
    def trimmed_len(self) -> int:
        return self.segment_len - 2 * self.trim


@dataclass
class BalancedDataset:
    """Segments grouped by subject with equal label counts per subject."""

    by_subject: dict[str, list[Segment]]
    retained: dict[str, int]  # subject -> per-label count kept

    @property
    def segments(self) -> list[Segment]:
        out = []
        for subj in self.by_subject:
            out.extend(self.by_subject[subj])
        return out

    @property
    def subjects(self) -> list[str]:
        return list(self.by_subject)

    def __len__(self):
        return sum(len(v) for v in self.by_subject.values())


def segment_block(record: EegRecord, cfg: SegmentationConfig) -> list[Segment]:
    """Cut a record into overlapping fixed-length windows.

    Window i starts at i*step; windows never straddle records. Raises
    BlockTooShort when the record cannot hold a single window.
    """
    t_total = record.samples.size
    if t_total < cfg.segment_len:
        raise BlockTooShort(
            f"block {record.block_id!r} has {t_total} samples, "
            f"needs >= {cfg.segment_len}"
        )
    step = cfg.step
    n_segments = (t_total - cfg.segment_len) // step + 1
    out = []
    for i in range(n_segments):
        start = i * step
        stop = start + cfg.segment_len
        aux = {
            name: float(np.mean(ch[start:stop])) for name, ch in record.aux.items()
        }
        out.append(
            Segment(
                samples=record.samples[start:stop].copy(),
                subject_id=record.subject_id,
                block_id=record.block_id,
                start=start,
                label=record.label,
                aux=aux,
                sample_rate=record.sample_rate,
            )
        )
    return out


def balance_by_subject(segments: list[Segment]) -> BalancedDataset:
    """Equalize label counts per subject by trimming the larger class.

    Keeps the last n_u = min(count0, count1) segments of each label in
    original order. Subjects missing a class entirely are dropped with a
    warning rather than failing the run.
    """
    by_subject: dict[str, dict[int, list[Segment]]] = {}
    for seg in segments:
        if seg.label not in (LABEL_ATTENTIVE, LABEL_NONATTENTIVE):
            raise InvalidConfig(
                f"segment from {seg.subject_id!r} has no usable label: {seg.label!r}"
            )
        by_subject.setdefault(seg.subject_id, {0: [], 1: []})[seg.label].append(seg)

    kept: dict[str, list[Segment]] = {}
    retained: dict[str, int] = {}
    for subj in by_subject:
        groups = by_subject[subj]
        n0, n1 = len(groups[0]), len(groups[1])
        if n0 == 0 or n1 == 0:
            log.warning(
                "subject %r dropped: %d attentive / %d non-attentive segments",
                subj, n0, n1,
            )
            continue
        n_keep = min(n0, n1)
        kept[subj] = groups[0][-n_keep:] + groups[1][-n_keep:]
        retained[subj] = n_keep
    return BalancedDataset(by_subject=kept, retained=retained)
