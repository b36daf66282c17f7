"""Synthetic single-channel EEG with controllable class contrast.

Each block is a sum of per-band sinusoid mixtures, pink background noise,
and smooth blink transients. The attentive class raises mid-beta power and
lowers alpha/theta by a shared factor so that the beta-to-alpha-plus-theta
energy ratio differs between classes by exactly the configured contrast in
expectation. Headset-style score channels are synthesized alongside.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import AUX_CHANNELS, LABEL_ATTENTIVE, LABEL_NONATTENTIVE, EegRecord
from .errors import InvalidConfig, SourceExhausted

BAND_EDGES = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 12.0),
    "low_beta": (12.0, 20.0),
    "high_beta": (20.0, 30.0),
    "gamma": (30.0, 50.0),
}
# target RMS per band, microvolts
BASE_AMPS_UV = {
    "delta": 9.0, "theta": 7.0, "alpha": 9.0,
    "low_beta": 5.5, "high_beta": 3.5, "gamma": 2.0,
}
OSC_PER_BAND = 3
SCORE_MODES = ("surrogate", "planted", "noise")


@dataclass(frozen=True)
class GeneratorConfig:
    n_subjects: int = 20
    blocks_per_class: int = 2
    block_len: int = 7500
    sample_rate: float = 250.0
    contrast: float = 3.0
    blink_rate_hz: float = 0.12
    blink_amp_uv: tuple[float, float] = (65.0, 105.0)
    blink_width_s: tuple[float, float] = (0.2, 0.4)
    noise_uv: float = 2.0
    subject_sigma: float = 0.12
    score_mode: str = "surrogate"
    score_noise: float = 6.0
    seed: int = 7

    def __post_init__(self) -> None:
        if self.contrast <= 1.0:
            raise InvalidConfig("contrast must exceed 1.0")
        if self.score_mode not in SCORE_MODES:
            raise InvalidConfig(f"score_mode must be one of {SCORE_MODES}")
        if self.n_subjects < 1 or self.blocks_per_class < 1:
            raise InvalidConfig("need at least one subject and one block")
        if self.block_len < 4 * self.sample_rate:
            raise InvalidConfig("blocks shorter than 4 s are not useful")


def _pink_noise(rng: np.random.Generator, n: int, rms: float) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n)
    f[0] = np.inf  # kill DC
    shaped = np.fft.irfft(spectrum / np.sqrt(f), n)
    sd = float(np.std(shaped))
    return shaped * (rms / sd) if sd > 0 else shaped


def _blink_shape(width_samples: int) -> np.ndarray:
    # raised-cosine squared: smooth, strictly positive hump
    w = np.hanning(width_samples)
    return w * w


def _moving_power(x: np.ndarray, window: int) -> np.ndarray:
    kernel = np.ones(window) / window
    return np.convolve(x * x, kernel, mode="same")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class BlinkEvent:
    subject_id: str
    block_id: str
    sample: int
    amplitude_uv: float
    width_s: float

    def to_dict(self) -> dict:
        return asdict(self)


def _subject_multipliers(cfg: GeneratorConfig, subject_idx: int) -> dict[str, float]:
    rng = np.random.default_rng([cfg.seed, 101, subject_idx])
    return {band: float(np.exp(rng.normal(0.0, cfg.subject_sigma)))
            for band in BAND_EDGES}


def _class_multiplier(band: str, label: int, contrast: float) -> float:
    a = contrast ** 0.125
    if band == "low_beta":
        return a if label == LABEL_ATTENTIVE else 1.0 / a
    if band in ("alpha", "theta"):
        return 1.0 / a if label == LABEL_ATTENTIVE else a
    return 1.0


def synthesize_block(cfg: GeneratorConfig, subject_idx: int, block_idx: int,
                     label: int) -> tuple[EegRecord, list[BlinkEvent]]:
    """One labeled block plus its injected-blink ground truth."""
    rng = np.random.default_rng([cfg.seed, subject_idx, block_idx, label])
    n, fs = cfg.block_len, cfg.sample_rate
    t = np.arange(n) / fs
    multipliers = _subject_multipliers(cfg, subject_idx)

    components: dict[str, np.ndarray] = {}
    signal = _pink_noise(rng, n, cfg.noise_uv)
    for band, (low, high) in BAND_EDGES.items():
        rms = (BASE_AMPS_UV[band] * multipliers[band]
               * _class_multiplier(band, label, cfg.contrast))
        freqs = rng.uniform(low, high, OSC_PER_BAND)
        phases = rng.uniform(0.0, 2.0 * np.pi, OSC_PER_BAND)
        waves = np.sin(2.0 * np.pi * freqs[:, None] * t[None, :]
                       + phases[:, None])
        comp = waves.sum(axis=0) * (rms / np.sqrt(OSC_PER_BAND / 2.0))
        components[band] = comp
        signal = signal + comp

    subject_id = f"S{subject_idx:02d}"
    block_id = f"B{block_idx:02d}"
    blinks: list[BlinkEvent] = []
    n_blinks = rng.poisson(cfg.blink_rate_hz * n / fs)
    margin = int(0.5 * fs)
    for _ in range(n_blinks):
        center = int(rng.integers(margin, n - margin))
        amp = float(rng.uniform(*cfg.blink_amp_uv))
        width_s = float(rng.uniform(*cfg.blink_width_s))
        w = max(int(width_s * fs), 8)
        shape = _blink_shape(w) * amp
        a = center - w // 2
        signal[a:a + w] += shape
        blinks.append(BlinkEvent(subject_id, block_id, center, amp, width_s))

    aux = _score_channels(cfg, rng, components, label)
    record = EegRecord(samples=signal, sample_rate=fs, subject_id=subject_id,
                       block_id=block_id, label=label, aux=aux)
    return record, blinks


def _score_channels(cfg: GeneratorConfig, rng: np.random.Generator,
                    components: dict[str, np.ndarray],
                    label: int) -> dict[str, np.ndarray]:
    fs = int(cfg.sample_rate)
    n = next(iter(components.values())).size
    aux: dict[str, np.ndarray] = {}
    powers = {band: _moving_power(comp, fs) for band, comp in components.items()}
    for band in BAND_EDGES:
        aux[band] = powers[band]

    if cfg.score_mode == "noise":
        aux["attention"] = rng.uniform(20.0, 80.0, n)
        aux["meditation"] = rng.uniform(20.0, 80.0, n)
    elif cfg.score_mode == "planted":
        hi = 68.0 + rng.normal(0.0, 2.0, n)
        lo = 32.0 + rng.normal(0.0, 2.0, n)
        att = hi if label == LABEL_ATTENTIVE else lo
        med = lo if label == LABEL_ATTENTIVE else hi
        aux["attention"] = np.clip(att, 1.0, 99.0)
        aux["meditation"] = np.clip(med, 1.0, 99.0)
    else:
        ratio = powers["low_beta"] / (powers["alpha"] + powers["theta"] + 1e-12)
        center = float(np.log(np.median(ratio)))
        gain = 2.2 / np.log(cfg.contrast)
        drive = gain * (np.log(ratio + 1e-12) - center)
        # center the sigmoid between the two class means, not per block
        shift = 0.5 * gain * np.log(cfg.contrast)
        drive = drive + (shift if label == LABEL_ATTENTIVE else -shift)
        att = 100.0 * _sigmoid(drive) + rng.normal(0.0, cfg.score_noise, n)
        med = 100.0 * _sigmoid(-drive) + rng.normal(0.0, cfg.score_noise, n)
        aux["attention"] = np.clip(att, 1.0, 99.0)
        aux["meditation"] = np.clip(med, 1.0, 99.0)
    return aux


def generate_dataset(cfg: GeneratorConfig) -> tuple[list[EegRecord], dict]:
    """All subjects' blocks (alternating attentive/non-attentive) plus a
    ground-truth sidecar with subject multipliers and blink events."""
    records: list[EegRecord] = []
    blinks: list[BlinkEvent] = []
    for si in range(cfg.n_subjects):
        bi = 0
        for _ in range(cfg.blocks_per_class):
            for label in (LABEL_ATTENTIVE, LABEL_NONATTENTIVE):
                rec, ev = synthesize_block(cfg, si, bi, label)
                records.append(rec)
                blinks.extend(ev)
                bi += 1
    truth = {
        "config": asdict(cfg),
        "subjects": {f"S{si:02d}": _subject_multipliers(cfg, si)
                     for si in range(cfg.n_subjects)},
        "blinks": [b.to_dict() for b in blinks],
    }
    return records, truth


# ---------------------------------------------------------------------------
# Streaming sources
# ---------------------------------------------------------------------------

class ReplaySource:
    """Sample-clock playback of recorded blocks, in file order.

    read(n) hands out the next n samples and aligned score channels;
    raises SourceExhausted once nothing is left.
    """

    def __init__(self, records: list[EegRecord]):
        if not records:
            raise SourceExhausted("no records to replay")
        self.sample_rate = records[0].sample_rate
        self._samples = np.concatenate([r.samples for r in records])
        self._aux = {name: np.concatenate([
            r.aux.get(name, np.zeros(r.samples.size)) for r in records])
            for name in AUX_CHANNELS}
        self._labels = np.concatenate([
            np.full(r.samples.size, -1 if r.label is None else r.label,
                    dtype=np.int64) for r in records])
        self._pos = 0

    @property
    def position(self) -> int:
        return self._pos

    @property
    def remaining(self) -> int:
        return self._samples.size - self._pos

    def true_label_at(self, index: int) -> int:
        return int(self._labels[min(index, self._labels.size - 1)])

    def read(self, n: int) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        if self.remaining <= 0:
            raise SourceExhausted("replay depleted")
        a, b = self._pos, min(self._pos + n, self._samples.size)
        self._pos = b
        return (self._samples[a:b].copy(),
                {k: v[a:b].copy() for k, v in self._aux.items()})


class PhaseSource:
    """Endless synthetic stream alternating attention phases.

    schedule: list of (label, seconds) played in a loop; blocks are
    synthesized on demand with fresh block indices.
    """

    def __init__(self, cfg: GeneratorConfig, subject_idx: int = 0,
                 schedule: list[tuple[int, float]] | None = None):
        self.cfg = cfg
        self.sample_rate = cfg.sample_rate
        self.subject_idx = subject_idx
        self.schedule = schedule or [(LABEL_ATTENTIVE, 30.0),
                                     (LABEL_NONATTENTIVE, 30.0)]
        self._phase = 0
        self._block_counter = 0
        self._buffer = np.zeros(0)
        self._aux_buffer: dict[str, np.ndarray] = {
            name: np.zeros(0) for name in AUX_CHANNELS}
        self.current_label = self.schedule[0][0]

    def _refill(self) -> None:
        label, seconds = self.schedule[self._phase % len(self.schedule)]
        self.current_label = label
        n = int(seconds * self.cfg.sample_rate)
        cfg = GeneratorConfig(**{**asdict(self.cfg), "block_len": max(n, 1000)})
        rec, _ = synthesize_block(cfg, self.subject_idx,
                                  self._block_counter, label)
        self._buffer = np.concatenate([self._buffer, rec.samples[:n]])
        for name in AUX_CHANNELS:
            chan = rec.aux.get(name, np.zeros(rec.samples.size))
            self._aux_buffer[name] = np.concatenate(
                [self._aux_buffer[name], chan[:n]])
        self._phase += 1
        self._block_counter += 1

    def read(self, n: int) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        while self._buffer.size < n:
            self._refill()
        out = self._buffer[:n].copy()
        aux = {k: v[:n].copy() for k, v in self._aux_buffer.items()}
        self._buffer = self._buffer[n:]
        self._aux_buffer = {k: v[n:] for k, v in self._aux_buffer.items()}
        return out, aux
