"""Amplitude-threshold segment rejection and blink removal.

Blink handling: locate high peaks, cut a short region around each one,
decompose the region by (ensemble) empirical mode decomposition, discard
the mode(s) tracking the region's slow trend, splice the remainder back,
and finish with a light uniform smoothing pass over the whole segment.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sp_signal
from scipy.linalg import solve_banded

from .core import Segment
from .dsp import uniform_smooth
from .errors import SegmentTooShort, SiftingDiverged

AMPLITUDE_THRESHOLD_UV = 150.0
# Frontal blinks comfortably exceed 60 uV; the distance floor stops one
# blink from spawning a run of regions.
PEAK_HEIGHT_UV = 60.0
PEAK_DISTANCE = 50
REGION_BEFORE = 40
REGION_AFTER = 80
REGION_EDGE = 120
EEMD_ENSEMBLE = 50
EEMD_NOISE_STD = 0.2
SIFT_SD_STOP = 0.2
SIFT_MAX_ITER = 100
BLINK_CORR_THRESHOLD = 0.7
BLINK_TREND_HZ = 5.0
SMOOTH_WINDOW = 11


def reject_high_amplitude(segment: Segment,
                          threshold_uv: float = AMPLITUDE_THRESHOLD_UV) -> bool:
    """True = keep. Drops iff any sample strictly exceeds the threshold."""
    return bool(np.max(np.abs(segment.samples), initial=0.0) <= threshold_uv)


def find_peaks(samples: np.ndarray, height: float = PEAK_HEIGHT_UV,
               distance: int = PEAK_DISTANCE) -> np.ndarray:
    """Local maxima above `height`, at least `distance` samples apart."""
    x = np.asarray(samples, dtype=np.float64)
    peaks, _ = sp_signal.find_peaks(x, height=height, distance=distance)
    return peaks


@dataclass(frozen=True)
class PeakRegion:
    peak_index: int
    start: int
    end: int  # half-open


def peak_region(peak_index: int, segment_len: int) -> PeakRegion:
    """Region around a peak: 40 before / 80 after, pinned to a 120-sample
    window at either segment edge."""
    if segment_len < REGION_EDGE:
        raise SegmentTooShort(f"segment of {segment_len} < {REGION_EDGE} samples")
    if not 0 <= peak_index < segment_len:
        raise ValueError(f"peak {peak_index} outside segment of {segment_len}")
    if peak_index < REGION_BEFORE:
        return PeakRegion(peak_index, 0, REGION_EDGE)
    if peak_index >= segment_len - REGION_AFTER:
        return PeakRegion(peak_index, segment_len - REGION_EDGE, segment_len)
    return PeakRegion(peak_index, peak_index - REGION_BEFORE,
                      peak_index + REGION_AFTER)


def merge_regions(regions: list[PeakRegion]) -> list[tuple[int, int]]:
    """Union of overlapping or touching [start, end) intervals."""
    if not regions:
        return []
    spans = sorted((r.start, r.end) for r in regions)
    merged = [spans[0]]
    for start, end in spans[1:]:
        if start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


# ---------------------------------------------------------------------------
# Empirical mode decomposition
# ---------------------------------------------------------------------------

def _local_extrema(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of local maxima and minima; plateaus count once at their end."""
    d = np.diff(x)
    sign = np.sign(d)
    # forward-fill zero slopes so plateaus inherit the incoming direction
    for i in range(1, sign.size):
        if sign[i] == 0:
            sign[i] = sign[i - 1]
    flips = sign[:-1] != sign[1:]
    idx = np.nonzero(flips)[0] + 1
    maxima = idx[sign[idx - 1] > 0]
    minima = idx[sign[idx - 1] < 0]
    return maxima, minima


def _natural_spline(tk: np.ndarray, yk: np.ndarray, tq: np.ndarray) -> np.ndarray:
    """Natural cubic spline through (tk, yk) evaluated at tq."""
    m = tk.size
    if m == 2:
        return np.interp(tq, tk, yk)
    h = np.diff(tk).astype(np.float64)
    slopes = np.diff(yk) / h
    rhs = 6.0 * np.diff(slopes)
    ab = np.zeros((3, m - 2))
    ab[0, 1:] = h[1:-1]
    ab[1, :] = 2.0 * (h[:-1] + h[1:])
    ab[2, :-1] = h[1:-1]
    curv = np.zeros(m)
    curv[1:-1] = solve_banded((1, 1), ab, rhs)
    j = np.clip(np.searchsorted(tk, tq, side="right") - 1, 0, m - 2)
    hj = h[j]
    dl = tq - tk[j]
    dr = tk[j + 1] - tq
    return (
        curv[j] * dr**3 / (6.0 * hj)
        + curv[j + 1] * dl**3 / (6.0 * hj)
        + (yk[j] / hj - curv[j] * hj / 6.0) * dr
        + (yk[j + 1] / hj - curv[j + 1] * hj / 6.0) * dl
    )


def _envelope_knots(pos: np.ndarray, vals: np.ndarray, x: np.ndarray,
                    upper: bool):
    """Spline knots for one envelope: extrema, endpoint anchors where the
    endpoint escapes the envelope band, and two mirrored extrema per end.

    Unconditional anchoring distorts clean oscillations; no anchoring lets
    the envelopes swing wildly at the edges of steep transients (the exact
    shape of a blink region). The conditional rule keeps both cases sane.
    """
    n = x.size
    pos = pos.astype(np.float64)
    vals = np.asarray(vals, dtype=np.float64)
    if (x[0] > vals[0]) if upper else (x[0] < vals[0]):
        pos = np.concatenate([[0.0], pos])
        vals = np.concatenate([[x[0]], vals])
    if (x[-1] > vals[-1]) if upper else (x[-1] < vals[-1]):
        pos = np.concatenate([pos, [n - 1.0]])
        vals = np.concatenate([vals, [x[-1]]])
    k = min(2, pos.size)
    left_p = (-pos[:k])[::-1]
    left_v = vals[:k][::-1]
    right_p = (2 * (n - 1) - pos[-k:])[::-1]
    right_v = vals[-k:][::-1]
    tk = np.concatenate([left_p, pos, right_p])
    yk = np.concatenate([left_v, vals, right_v])
    keep = np.concatenate([[True], np.diff(tk) > 0])
    return tk[keep], yk[keep]


def _sift_once(x: np.ndarray, tq: np.ndarray):
    maxima, minima = _local_extrema(x)
    if maxima.size < 2 or minima.size < 2:
        return None
    up_t, up_v = _envelope_knots(maxima, x[maxima], x, True)
    lo_t, lo_v = _envelope_knots(minima, x[minima], x, False)
    upper = _natural_spline(up_t, up_v, tq)
    lower = _natural_spline(lo_t, lo_v, tq)
    return x - 0.5 * (upper + lower)


def _emd(x: np.ndarray, max_imfs: int) -> tuple[list[np.ndarray], np.ndarray]:
    """Plain EMD. Returns (imfs, residue) with sum(imfs) + residue == x."""
    tq = np.arange(x.size, dtype=np.float64)
    residue = x.copy()
    imfs: list[np.ndarray] = []
    for _ in range(max_imfs):
        h = _sift_once(residue, tq)
        if h is None:
            break
        for _ in range(SIFT_MAX_ITER):
            if not np.all(np.isfinite(h)):
                raise SiftingDiverged("non-finite values during sifting")
            h_next = _sift_once(h, tq)
            if h_next is None:
                break
            denom = float(np.sum(h * h))
            sd = float(np.sum((h - h_next) ** 2)) / (denom + 1e-300)
            h = h_next
            if sd <= SIFT_SD_STOP:
                break
        imfs.append(h)
        residue = residue - h
    return imfs, residue


@dataclass
class EmdDecomposition:
    imfs: list[np.ndarray]
    residue: np.ndarray
    ensemble_size: int
    noise_std: float
    seed: int | None = None


def max_imf_count(n: int) -> int:
    return int(np.ceil(np.log2(n))) + 1


def eemd(samples: np.ndarray, ensemble_size: int = EEMD_ENSEMBLE,
         noise_std: float = EEMD_NOISE_STD,
         seed: int | None = None) -> EmdDecomposition:
    """Ensemble EMD: average of plain EMDs over noise-perturbed copies.

    ensemble_size=1 with noise_std=0 reduces to plain EMD, for which
    sum(imfs) + residue reconstructs the input to machine precision.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 10:
        raise SegmentTooShort(f"need >= 10 samples for EMD, got {x.size}")
    cap = max_imf_count(x.size)
    if ensemble_size <= 1 and noise_std == 0.0:
        imfs, residue = _emd(x, cap)
        return EmdDecomposition(imfs, residue, 1, 0.0, seed)

    rng = np.random.default_rng(seed)
    sigma = noise_std * float(np.std(x))
    acc: list[np.ndarray] = []
    acc_residue = np.zeros_like(x)
    for _ in range(ensemble_size):
        noisy = x + rng.standard_normal(x.size) * sigma
        imfs, residue = _emd(noisy, cap)
        for i, imf in enumerate(imfs):
            if i == len(acc):
                acc.append(np.zeros_like(x))
            acc[i] += imf
        acc_residue += residue
    imfs = [a / ensemble_size for a in acc]
    return EmdDecomposition(imfs, acc_residue / ensemble_size,
                            ensemble_size, noise_std, seed)


# ---------------------------------------------------------------------------
# Blink removal
# ---------------------------------------------------------------------------

def _slow_trend(region: np.ndarray, fs: float) -> np.ndarray:
    """Zero-phase low-pass (< 5 Hz) of the region; the blink template."""
    sos = sp_signal.butter(2, BLINK_TREND_HZ, btype="lowpass", fs=fs, output="sos")
    # regions are short (120+); default padding distorts the trend's ends
    return sp_signal.sosfiltfilt(sos, region, padlen=region.size - 1)


def _region_seed(region: np.ndarray, base_seed: int) -> int:
    # Content-derived seed: the same window always gets the same noise,
    # which keeps streaming and offline runs sample-identical.
    return zlib.crc32(region.tobytes()) ^ (base_seed & 0xFFFFFFFF)


@dataclass
class BlinkRemovalInfo:
    peak_indices: list[int] = field(default_factory=list)
    regions: list[tuple[int, int]] = field(default_factory=list)
    removed_modes: int = 0


def remove_blinks(segment: Segment, height: float = PEAK_HEIGHT_UV,
                  distance: int = PEAK_DISTANCE,
                  ensemble_size: int = EEMD_ENSEMBLE,
                  noise_std: float = EEMD_NOISE_STD,
                  smooth_window: int = SMOOTH_WINDOW,
                  base_seed: int = 0) -> tuple[Segment, BlinkRemovalInfo]:
    """Strip blink transients around detected peaks, then smooth.

    Samples outside the merged peak regions pass through untouched (before
    the final smoothing). Modes whose correlation with the region's slow
    trend exceeds 0.7 are treated as blink carriers and subtracted; the
    residue is a removal candidate on the same rule.
    """
    x = segment.samples
    peaks = find_peaks(x, height=height, distance=distance)
    info = BlinkRemovalInfo(peak_indices=[int(p) for p in peaks])
    out = x.copy()
    if peaks.size:
        regions = merge_regions([peak_region(int(p), x.size) for p in peaks])
        info.regions = [(int(a), int(b)) for a, b in regions]
        for a, b in regions:
            sub = x[a:b]
            dec = eemd(sub, ensemble_size, noise_std,
                       seed=_region_seed(sub, base_seed))
            trend = _slow_trend(sub, segment.sample_rate)
            trend_std = float(np.std(trend))
            blink = np.zeros_like(sub)
            for mode in dec.imfs + [dec.residue]:
                mode_std = float(np.std(mode))
                if mode_std == 0.0 or trend_std == 0.0:
                    continue
                corr = float(np.corrcoef(mode, trend)[0, 1])
                if abs(corr) > BLINK_CORR_THRESHOLD:
                    blink += mode
                    info.removed_modes += 1
            out[a:b] = sub - blink
    return segment.with_samples(uniform_smooth(out, smooth_window)), info
