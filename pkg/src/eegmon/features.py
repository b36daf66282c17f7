"""Feature extraction: wavelet packet band decomposition, time-domain
statistics, spectral shape, band powers, and headset score channels.

The packet transform is a periodized orthogonal Daubechies construction.
Filters are derived at import by spectral factorization of the binomial
half-band polynomial, so any even length stays exactly energy-preserving;
per-band reconstructions come from zeroing the complementary nodes. The
default 16-tap filter keeps a mid-band tone's energy inside its node,
which the shorter classic 8-tap filter cannot do at level 5.

The computed catalog is exactly 458 features; the eight headset channels
(six band powers, attention, meditation) bring the vector to 466.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from math import comb

import numpy as np

from .core import AUX_CHANNELS, Segment
from .dsp import PsdEstimate, welch_psd
from .errors import (FeatureMismatch, InvalidConfig, ManifestMismatch,
                     SignalTooShort)

# Classic 8-tap Daubechies scaling filter, kept as a cross-check constant:
# the derivation below must reproduce it to near machine precision.
DB4_LO = np.array([
    0.23037781330885523,
    0.7148465705525415,
    0.6308807679295904,
    -0.02798376941698385,
    -0.18703481171888114,
    0.030841381835986965,
    0.032883011666982945,
    -0.010597401784997278,
])

DEFAULT_WAVELET = "db10"
WPT_LEVEL = 5

BANDS: dict[str, tuple[float, float]] = {
    "D": (0.5, 4.0),
    "T": (4.0, 8.0),
    "A": (8.0, 12.0),
    "B1": (12.0, 20.0),
    "B2": (20.0, 30.0),
    "G": (30.0, 50.0),
}
TOTAL_BAND = (0.5, 64.0)

STAT_NAMES = ("mean", "md", "var", "skew", "kurt", "rms", "avg_pow", "ptp",
              "zcr", "ha", "hm", "hc", "n1d", "n2d", "sampen")
NODE_STAT_NAMES = ("mean", "var", "rms", "skew", "kurt")

SAMPEN_M = 2
SAMPEN_R_FRAC = 0.2

MANIFEST_VERSION = "1"


def daubechies_filter(n_moments: int) -> np.ndarray:
    """Orthogonal scaling filter with `n_moments` vanishing moments
    (2*n_moments taps), by spectral factorization; sums to sqrt(2)."""
    n = n_moments
    if n < 1:
        raise InvalidConfig("need at least one vanishing moment")
    if n == 1:
        return np.array([np.sqrt(0.5), np.sqrt(0.5)])
    # P(y) = sum C(n-1+k, k) y^k with y = (2 - z - 1/z)/4, cleared to a
    # plain polynomial in z (ascending coefficients)
    base = np.array([-0.25, 0.5, -0.25])
    total = np.zeros(2 * n - 1)
    cur = np.array([1.0])
    for k in range(n):
        shift = n - 1 - k
        total[shift:shift + 2 * k + 1] += comb(n - 1 + k, k) * cur
        cur = np.convolve(cur, base)
    roots = np.roots(total[::-1])
    inside = roots[np.abs(roots) < 1.0]
    if inside.size != n - 1:
        raise InvalidConfig(f"factorization unstable for {n} moments")
    b = np.array([1.0 + 0.0j])
    for _ in range(n):
        b = np.convolve(b, [0.5, 0.5])
    for r in inside:
        b = np.convolve(b, [-r, 1.0]) / (1.0 - r)
    h = np.sqrt(2.0) * b
    if np.max(np.abs(h.imag)) > 1e-9:
        raise InvalidConfig(f"factorization unstable for {n} moments")
    h = h.real
    if np.sum(h[:n] ** 2) < np.sum(h[n:] ** 2):
        h = h[::-1]  # minimum-phase orientation, large taps first
    return h


_FILTER_CACHE: dict[str, tuple[np.ndarray, np.ndarray]] = {}


def wavelet_filters(name: str) -> tuple[np.ndarray, np.ndarray]:
    """(lowpass, highpass) analysis pair for 'dbN'."""
    if name not in _FILTER_CACHE:
        if not name.startswith("db"):
            raise InvalidConfig(f"unknown wavelet family {name!r}")
        lo = daubechies_filter(int(name[2:]))
        hi = lo[::-1].copy()
        hi[1::2] *= -1.0
        _FILTER_CACHE[name] = (lo, hi)
    return _FILTER_CACHE[name]


# ---------------------------------------------------------------------------
# Wavelet packet transform
# ---------------------------------------------------------------------------

def _analysis_step(x: np.ndarray, lo: np.ndarray,
                   hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.size
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(lo.size)[None, :]) % n
    windows = x[idx]
    return windows @ lo, windows @ hi


def _synthesis_step(a: np.ndarray, d: np.ndarray, lo: np.ndarray,
                    hi: np.ndarray) -> np.ndarray:
    n = 2 * a.size
    idx = (2 * np.arange(a.size)[:, None] + np.arange(lo.size)[None, :]) % n
    out = np.zeros(n)
    np.add.at(out, idx.ravel(), (np.outer(a, lo) + np.outer(d, hi)).ravel())
    return out


def natural_to_frequency(node: int) -> int:
    """Position of a natural-order packet node on the frequency axis.

    Each highpass split mirrors the spectrum of its branch, so the
    natural index of the node holding frequency rank f is the Gray code
    f ^ (f >> 1); this is the inverse of that permutation (prefix XOR).
    """
    out = node
    shift = 1
    while (out >> shift) > 0:
        out ^= out >> shift
        shift <<= 1
    return out


@dataclass
class WptDecomposition:
    coeffs: list[np.ndarray]  # natural order, len == 2**level
    level: int
    sample_rate: float
    cropped_len: int
    original_len: int
    wavelet: str = DEFAULT_WAVELET

    @property
    def node_bandwidth_hz(self) -> float:
        return (self.sample_rate / 2.0) / (1 << self.level)

    def _freq_to_natural(self) -> list[int]:
        order = [0] * (1 << self.level)
        for node in range(1 << self.level):
            order[natural_to_frequency(node)] = node
        return order

    def node_coefficients(self, freq_position: int) -> np.ndarray:
        return self.coeffs[self._freq_to_natural()[freq_position]]

    def band_coefficients(self, freq_positions: set[int]) -> np.ndarray:
        """Concatenated coefficients, ascending frequency position."""
        order = self._freq_to_natural()
        return np.concatenate([self.coeffs[order[p]]
                               for p in sorted(freq_positions)])

    def node_energies(self) -> np.ndarray:
        """Energies indexed by frequency position (low to high)."""
        out = np.zeros(1 << self.level)
        for node, c in enumerate(self.coeffs):
            out[natural_to_frequency(node)] = float(np.sum(c * c))
        return out

    def node_entropies(self) -> np.ndarray:
        """Log-energy entropy per node: sum of log(c_i^2), indexed by
        frequency position. Zero coefficients contribute 0 (log 0 := 0),
        so a silent node or segment scores exactly 0."""
        out = np.zeros(1 << self.level)
        for node, c in enumerate(self.coeffs):
            e = c * c
            nz = e[e > 0.0]
            if nz.size:
                out[natural_to_frequency(node)] = float(np.sum(np.log(nz)))
        return out

    def reconstruct(self, freq_positions: set[int]) -> np.ndarray:
        """Inverse transform keeping only the given frequency positions."""
        lo, hi = wavelet_filters(self.wavelet)
        kept = []
        for node, c in enumerate(self.coeffs):
            if natural_to_frequency(node) in freq_positions:
                kept.append(c)
            else:
                kept.append(np.zeros_like(c))
        for _ in range(self.level):
            kept = [_synthesis_step(kept[i], kept[i + 1], lo, hi)
                    for i in range(0, len(kept), 2)]
        return kept[0]

    def band_nodes(self, low_hz: float, high_hz: float) -> set[int]:
        """Frequency positions whose node center lies in [low, high)."""
        width = self.node_bandwidth_hz
        centers = (np.arange(1 << self.level) + 0.5) * width
        return {int(p) for p in np.nonzero(
            (centers >= low_hz) & (centers < high_hz))[0]}


def wpt_decompose(samples: np.ndarray, level: int = WPT_LEVEL,
                  sample_rate: float = 250.0,
                  wavelet: str = DEFAULT_WAVELET) -> WptDecomposition:
    """Full packet decomposition; input is cropped to a multiple of
    2**level so every stage stays even-length (hence exactly orthogonal)."""
    x = np.asarray(samples, dtype=np.float64)
    block = 1 << level
    cropped = (x.size // block) * block
    if cropped < block:
        raise SignalTooShort(f"{x.size} samples < one block of {block}")
    x = x[:cropped]
    lo, hi = wavelet_filters(wavelet)
    nodes = [x]
    for _ in range(level):
        nxt = []
        for c in nodes:
            a, d = _analysis_step(c, lo, hi)
            nxt.extend([a, d])
        nodes = nxt
    return WptDecomposition(nodes, level, sample_rate, cropped, samples.size,
                            wavelet)


# ---------------------------------------------------------------------------
# Scalar statistics
# ---------------------------------------------------------------------------

def hjorth_parameters(x: np.ndarray) -> tuple[float, float, float]:
    """(activity, mobility, complexity); zeros when the signal is flat."""
    var0 = float(np.var(x))
    if var0 == 0.0:
        return 0.0, 0.0, 0.0
    d1 = np.diff(x)
    var1 = float(np.var(d1))
    mobility = float(np.sqrt(var1 / var0))
    if var1 == 0.0:
        return var0, mobility, 0.0
    var2 = float(np.var(np.diff(d1)))
    complexity = float(np.sqrt(var2 / var1)) / mobility
    return var0, mobility, complexity


def sample_entropy(x: np.ndarray, m: int = SAMPEN_M,
                   r_frac: float = SAMPEN_R_FRAC) -> float:
    """SampEn(m, r_frac * std). Degenerate counts fall back to 0."""
    n = x.size
    if n < m + 2:
        return 0.0
    sd = float(np.std(x))
    if sd == 0.0:
        return 0.0
    r = r_frac * sd
    close = np.abs(x[:, None] - x[None, :]) <= r
    # length-m template matches, restricted to the n-m starts shared with m+1
    match = close
    for k in range(1, m):
        match = match[:-1, :-1] & close[k:, k:]
    match_m = match[: n - m, : n - m]
    match_m1 = match_m & close[m:, m:]
    total_m = int(np.sum(match_m)) - (n - m)  # drop self matches
    total_m1 = int(np.sum(match_m1)) - (n - m)
    if total_m <= 0 or total_m1 <= 0:
        return 0.0
    return float(-np.log(total_m1 / total_m))


def _moments(x: np.ndarray) -> tuple[float, float, float]:
    """(variance, skewness, excess kurtosis) from biased moments."""
    mu = float(np.mean(x))
    d = x - mu
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        return 0.0, 0.0, 0.0
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    return m2, m3 / m2**1.5, m4 / m2**2 - 3.0


def signal_stats(x: np.ndarray) -> dict[str, float]:
    """The fixed per-signal statistic set, keyed by short stat name."""
    n = x.size
    var, skew, kurt = _moments(x)
    sd = float(np.sqrt(var))
    s = np.sign(x)
    zcr = float(np.sum(s[:-1] * s[1:] < 0)) / max(n - 1, 1)
    ha, hm, hc = hjorth_parameters(x)
    if sd > 0.0:
        n1d = float(np.mean(np.abs(np.diff(x)))) / sd
        n2d = float(np.mean(np.abs(x[2:] - x[:-2]))) / sd if n > 2 else 0.0
    else:
        n1d = n2d = 0.0
    return {
        "mean": float(np.mean(x)),
        "md": float(np.median(x)),
        "var": var,
        "skew": skew,
        "kurt": kurt,
        "rms": float(np.sqrt(np.mean(x * x))),
        "avg_pow": float(np.mean(x * x)),
        "ptp": float(np.ptp(x)) if n else 0.0,
        "zcr": zcr,
        "ha": ha,
        "hm": hm,
        "hc": hc,
        "n1d": n1d,
        "n2d": n2d,
        "sampen": sample_entropy(x),
    }


def coefficient_stats(c: np.ndarray) -> dict[str, float]:
    """Compact moment set used per packet node."""
    var, skew, kurt = _moments(c)
    return {
        "mean": float(np.mean(c)) if c.size else 0.0,
        "var": var,
        "rms": float(np.sqrt(np.mean(c * c))) if c.size else 0.0,
        "skew": skew,
        "kurt": kurt,
    }


# ---------------------------------------------------------------------------
# Spectral features
# ---------------------------------------------------------------------------

def band_powers(psd: PsdEstimate,
                bands: dict[str, tuple[float, float]] | None = None
                ) -> dict[str, float]:
    bands = bands if bands is not None else BANDS
    return {name: psd.band_integral(low, high)
            for name, (low, high) in bands.items()}


def relative_powers(psd: PsdEstimate, bp: dict[str, float] | None = None,
                    bands: dict[str, tuple[float, float]] | None = None
                    ) -> dict[str, float]:
    """Band power over the total power across the analysis band.

    A zero-power spectrum yields all-zero relative powers (cleaning rule
    rather than an error)."""
    bp = bp if bp is not None else band_powers(psd, bands)
    total = psd.band_integral(*TOTAL_BAND)
    if total <= 0.0:
        return {name: 0.0 for name in bp}
    return {name: v / total for name, v in bp.items()}


def band_ratios(bp: dict[str, float]) -> dict[str, float]:
    def ratio(num: float, den: float) -> float:
        return num / den if den > 0.0 else 0.0
    return {
        "en_b_at": ratio(bp["B1"], bp["A"] + bp["T"]),
        "en_a_tb": ratio(bp["A"], bp["T"] + bp["B1"]),
        "en_t_ab": ratio(bp["T"], bp["A"] + bp["B1"]),
        "en_d_t": ratio(bp["D"], bp["T"]),
        "en_bb": ratio(bp["B2"], bp["B1"]),
        "en_g_b": ratio(bp["G"], bp["B1"] + bp["B2"]),
    }


def spectral_shape(psd: PsdEstimate) -> dict[str, float]:
    f, p = psd.freqs, psd.power
    total = float(np.sum(p))
    out = {"sc": 0.0, "ss": 0.0, "se": 0.0, "scf": 0.0, "sf": 0.0, "sr": 0.0}
    if total <= 0.0:
        return out
    q = p / total
    centroid = float(np.sum(f * q))
    out["sc"] = centroid
    out["ss"] = float(np.sqrt(np.sum((f - centroid) ** 2 * q)))
    qi = q[q > 0.0]
    out["se"] = float(-np.sum(qi * np.log(qi)) / np.log(q.size))
    mean_p = total / p.size
    out["scf"] = float(np.max(p)) / mean_p
    out["sf"] = float(np.exp(np.mean(np.log(p + 1e-30))) / mean_p)
    out["sr"] = float(f[np.searchsorted(np.cumsum(q), 0.95)])
    return out


# ---------------------------------------------------------------------------
# Manifest and extraction
# ---------------------------------------------------------------------------

def catalog_names(level: int = WPT_LEVEL,
                  include_aux: bool = True) -> tuple[str, ...]:
    """Fixed catalog order: 458 computed names, then the aux channels."""
    names: list[str] = []
    for band in BANDS:
        names.extend(f"{stat}_{band}" for stat in STAT_NAMES)
    names.extend(f"{stat}_S" for stat in STAT_NAMES)
    for band in BANDS:
        names.extend(f"{stat}_w{band}" for stat in STAT_NAMES)
    names.extend(f"{stat}_wS" for stat in STAT_NAMES)
    for p in range(1 << level):
        names.extend(f"{stat}_n{p:02d}" for stat in NODE_STAT_NAMES)
    names.extend(f"wpe_{p:02d}" for p in range(1 << level))
    names.extend(f"wph_{p:02d}" for p in range(1 << level))
    names.extend(f"bp_{band}" for band in BANDS)
    names.extend(f"RP_{band}" for band in BANDS)
    names.extend(["sc", "ss", "se", "scf", "sf", "sr"])
    names.extend(["en_b_at", "en_a_tb", "en_t_ab", "en_d_t", "en_bb", "en_g_b"])
    if include_aux:
        names.extend(AUX_CHANNELS)
    return tuple(names)


@dataclass(frozen=True)
class FeatureManifest:
    names: tuple[str, ...]
    level: int = WPT_LEVEL
    include_aux: bool = True
    wavelet: str = DEFAULT_WAVELET
    version: str = MANIFEST_VERSION

    @property
    def hash(self) -> str:
        payload = "\n".join([self.version, str(self.level), self.wavelet,
                             str(int(self.include_aux)), *self.names])
        return hashlib.sha256(payload.encode()).hexdigest()

    def to_dict(self) -> dict:
        return {"version": self.version, "level": self.level,
                "include_aux": self.include_aux, "wavelet": self.wavelet,
                "hash": self.hash, "names": list(self.names)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureManifest":
        manifest = cls(tuple(d["names"]), int(d["level"]),
                       bool(d["include_aux"]),
                       str(d.get("wavelet", DEFAULT_WAVELET)),
                       str(d["version"]))
        if d.get("hash") and d["hash"] != manifest.hash:
            raise FeatureMismatch("manifest hash does not match its contents")
        return manifest


def build_manifest(level: int = WPT_LEVEL, include_aux: bool = True,
                   wavelet: str = DEFAULT_WAVELET) -> FeatureManifest:
    return FeatureManifest(catalog_names(level, include_aux), level,
                           include_aux, wavelet)


def clean_features(values: np.ndarray) -> np.ndarray:
    """NaN and +/-Inf become 0.0; always returns finite float64."""
    return np.nan_to_num(np.asarray(values, dtype=np.float64),
                         nan=0.0, posinf=0.0, neginf=0.0)


def compute_features(segment: Segment,
                     manifest: FeatureManifest) -> np.ndarray:
    """Feature vector aligned with manifest.names, cleaned to finite values."""
    x = segment.samples
    values: dict[str, float] = {}

    wpt = wpt_decompose(x, manifest.level, segment.sample_rate,
                        manifest.wavelet)
    all_positions = set(range(1 << manifest.level))
    for band, (low, high) in BANDS.items():
        nodes = wpt.band_nodes(low, high)
        rec = wpt.reconstruct(nodes)
        for stat, v in signal_stats(rec).items():
            values[f"{stat}_{band}"] = v
        for stat, v in signal_stats(wpt.band_coefficients(nodes)).items():
            values[f"{stat}_w{band}"] = v
    for stat, v in signal_stats(x).items():
        values[f"{stat}_S"] = v
    for stat, v in signal_stats(wpt.band_coefficients(all_positions)).items():
        values[f"{stat}_wS"] = v
    for p in range(1 << manifest.level):
        for stat, v in coefficient_stats(wpt.node_coefficients(p)).items():
            values[f"{stat}_n{p:02d}"] = v

    psd = welch_psd(x, segment.sample_rate)
    bp = band_powers(psd)
    for band, v in bp.items():
        values[f"bp_{band}"] = v
    for band, v in relative_powers(psd, bp).items():
        values[f"RP_{band}"] = v

    for p, v in enumerate(wpt.node_energies()):
        values[f"wpe_{p:02d}"] = float(v)
    for p, v in enumerate(wpt.node_entropies()):
        values[f"wph_{p:02d}"] = float(v)

    values.update(spectral_shape(psd))
    values.update(band_ratios(bp))

    if manifest.include_aux:
        missing = [name for name in AUX_CHANNELS if name not in segment.aux]
        if missing:
            raise ManifestMismatch(
                f"segment lacks aux channels {missing} required by manifest")
        for name in AUX_CHANNELS:
            values[name] = float(segment.aux[name])

    try:
        vec = np.array([values[name] for name in manifest.names])
    except KeyError as exc:
        raise FeatureMismatch(f"manifest names unknown feature {exc}") from exc
    return clean_features(vec)


@dataclass
class FeatureMatrix:
    """Rows of features plus the bookkeeping columns models need."""
    values: np.ndarray  # (n_rows, n_features)
    names: tuple[str, ...]
    subject_ids: list[str]
    labels: np.ndarray  # int, aligned with rows
    manifest_hash: str = ""

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise FeatureMismatch("value columns do not match feature names")
        if self.values.shape[0] != len(self.subject_ids) != self.labels.size:
            raise FeatureMismatch("row bookkeeping misaligned")

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError as exc:
            raise FeatureMismatch(f"no feature named {name!r}") from exc

    def subset(self, keep: list[str]) -> "FeatureMatrix":
        idx = [self.names.index(n) for n in keep]
        return FeatureMatrix(self.values[:, idx], tuple(keep),
                             list(self.subject_ids), self.labels.copy(),
                             self.manifest_hash)


def extract_matrix(segments: list[Segment],
                   manifest: FeatureManifest) -> FeatureMatrix:
    rows = np.stack([compute_features(s, manifest) for s in segments])
    labels = np.array([-1 if s.label is None else s.label for s in segments],
                      dtype=np.int64)
    return FeatureMatrix(rows, manifest.names,
                         [s.subject_id for s in segments], labels,
                         manifest.hash)
