"""RR-interval extraction and the 20 HRV features (11 time, 9 frequency).

Frequency features come from a Lomb-Scargle periodogram of the unevenly
sampled tachogram, rescaled to ms^2 so that its rectangle-rule integral
equals the interval variance.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError, InvalidWindowError
from .signal import RPeakSeries, SegmentKind

log = logging.getLogger(__name__)

RR_MIN_MS = 200.0
RR_MAX_MS = 3000.0

TIME_FEATURES = (
    "rr_min", "rr_max", "rr_diff", "rr_mean", "rr_sd", "rr_cv",
    "rmssd", "sdsd", "nn50", "pnn50", "hr",
)
FREQ_FEATURES = (
    "ulf", "vlf", "lf", "hf", "total_power",
    "lf_norm", "hf_norm", "lf_hf_ratio", "lfmf_hf_ratio",
)
FEATURE_NAMES = TIME_FEATURES + FREQ_FEATURES

BANDS = {
    "ulf": (0.0, 0.003),
    "vlf": (0.003, 0.04),
    "lf": (0.04, 0.15),
    "mf": (0.08, 0.15),
    "hf": (0.15, 0.4),
    "total_power": (0.0, 0.4),
}

GRID_STEP_HZ = 0.001
# integer multiples of the step, rounded so band edges like 0.003 compare exactly
DEFAULT_GRID_HZ = np.round(np.arange(1, 501) * GRID_STEP_HZ, 12)


@dataclass(frozen=True, eq=False)
class RrSeries:
    intervals_ms: np.ndarray
    onset_times_s: np.ndarray

    def __len__(self):
        return len(self.intervals_ms)


@dataclass(frozen=True)
class TimeFeatures:
    rr_min: float
    rr_max: float
    rr_diff: float
    rr_mean: float
    rr_sd: float
    rr_cv: float
    rmssd: float
    sdsd: float
    nn50: float
    pnn50: float
    hr: float

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in TIME_FEATURES)


@dataclass(frozen=True, eq=False)
class Psd:
    freqs_hz: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        if len(self.freqs_hz) != len(self.power):
            raise DataValidationError("PSD frequency and power arrays differ in length")

    @property
    def step_hz(self) -> float:
        return float(self.freqs_hz[1] - self.freqs_hz[0]) if len(self.freqs_hz) > 1 else GRID_STEP_HZ


@dataclass(frozen=True)
class FreqFeatures:
    ulf: float
    vlf: float
    lf: float
    hf: float
    total_power: float
    lf_norm: float
    hf_norm: float
    lf_hf_ratio: float
    lfmf_hf_ratio: float

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in FREQ_FEATURES)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """The 20 HRV features of one window, in ``FEATURE_NAMES`` order."""

    subject_id: str
    window_start_s: float
    segment_kind: SegmentKind
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (len(FEATURE_NAMES),):
            raise DataValidationError(f"feature vector needs {len(FEATURE_NAMES)} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataValidationError("feature values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "segment_kind", SegmentKind(self.segment_kind))

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, map(float, self.values)))

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.window_start_s == other.window_start_s
            and self.segment_kind == other.segment_kind
            and np.array_equal(self.values, other.values)
        )


def rr_intervals(peaks: RPeakSeries | np.ndarray) -> RrSeries:
    """Successive peak differences in ms, dropping intervals outside (200, 3000) ms."""
    times = np.asarray(getattr(peaks, "peak_times_s", peaks), dtype=float)
    if len(times) < 2:
        raise DataValidationError("insufficient beats: need at least 2 R-peaks")
    intervals = np.diff(times) * 1000.0
    keep = (intervals > RR_MIN_MS) & (intervals < RR_MAX_MS)
    return RrSeries(intervals[keep], times[:-1][keep])


def time_domain_features(rr: RrSeries) -> TimeFeatures:
    """Statistics of the intervals and of their successive differences.

    SD and SDSD use the sample (n-1) estimator.  NN50 counts successive
    differences whose magnitude exceeds 50 ms.
    """
    x = np.asarray(rr.intervals_ms, dtype=float)
    if len(x) < 3:
        raise InvalidWindowError(f"time-domain features need >= 3 intervals, got {len(x)}")
    d = np.diff(x)
    mean = float(np.mean(x))
    sd = float(np.std(x, ddof=1))
    nn50 = int(np.count_nonzero(np.abs(d) > 50.0))
    return TimeFeatures(
        rr_min=float(np.min(x)),
        rr_max=float(np.max(x)),
        rr_diff=float(np.max(x) - np.min(x)),
        rr_mean=mean,
        rr_sd=sd,
        rr_cv=sd / mean,
        rmssd=float(np.sqrt(np.mean(d**2))),
        sdsd=float(np.std(d, ddof=1)),
        nn50=float(nn50),
        pnn50=100.0 * nn50 / len(d),
        hr=60000.0 / mean,
    )


def lomb_scargle(times, values, freqs_hz) -> np.ndarray:
    """Classical Lomb-Scargle power (with the time-shift ``tau``) of ``values``.

    No centring is done here.  For uniform sampling at Fourier frequencies
    this reduces to ``|DFT|^2 / N``.
    """
    t = np.asarray(times, dtype=float)[None, :]
    x = np.asarray(values, dtype=float)[None, :]
    omega = 2 * np.pi * np.asarray(freqs_hz, dtype=float)[:, None]
    tau = np.arctan2(np.sum(np.sin(2 * omega * t), axis=1), np.sum(np.cos(2 * omega * t), axis=1))[:, None] / (
        2 * omega
    )
    arg = omega * (t - tau)
    c, s = np.cos(arg), np.sin(arg)
    cc, ss = np.sum(c * c, axis=1), np.sum(s * s, axis=1)
    xc, xs = np.sum(x * c, axis=1), np.sum(x * s, axis=1)
    tiny = 1e-12 * t.shape[1]
    cos_term = np.divide(xc**2, cc, out=np.zeros_like(cc), where=cc > tiny)
    sin_term = np.divide(xs**2, ss, out=np.zeros_like(ss), where=ss > tiny)
    return 0.5 * (cos_term + sin_term)


def lomb_psd(rr: RrSeries, freqs_hz: np.ndarray = DEFAULT_GRID_HZ) -> Psd:
    """Lomb periodogram of the mean-removed tachogram in ms^2/Hz.

    The raw periodogram is rescaled so that ``sum(power) * step`` equals the
    population variance of the intervals.
    """
    x = np.asarray(rr.intervals_ms, dtype=float)
    t = np.asarray(rr.onset_times_s, dtype=float)
    if len(x) < 4:
        raise InvalidWindowError(f"Lomb periodogram needs >= 4 intervals, got {len(x)}")
    if not np.ptp(t) > 0:
        raise InvalidWindowError("Lomb periodogram needs onset times spanning a positive duration")
    freqs = np.asarray(freqs_hz, dtype=float)
    centred = x - np.mean(x)
    raw = lomb_scargle(t, centred, freqs)
    step = float(freqs[1] - freqs[0]) if len(freqs) > 1 else GRID_STEP_HZ
    area = float(np.sum(raw)) * step
    variance = float(np.mean(centred**2))
    power = raw * (variance / area) if area > 0 and variance > 0 else np.zeros_like(raw)
    return Psd(freqs.copy(), power)


def band_power(psd: Psd, lo_hz: float, hi_hz: float) -> float:
    """Rectangle-rule power over grid points with ``lo <= f < hi``."""
    if not 0 <= lo_hz < hi_hz:
        raise DataValidationError(f"band must satisfy 0 <= lo < hi, got [{lo_hz}, {hi_hz})")
    f = psd.freqs_hz
    mask = (f >= lo_hz) & (f < hi_hz)
    return float(np.sum(psd.power[mask]) * psd.step_hz)


def frequency_domain_features(psd: Psd, lf_norm_mode: str = "lf+hf") -> FreqFeatures:
    """Band powers and the four relative features.

    ``lf_norm_mode`` picks the normalised-unit denominator: ``"lf+hf"`` or
    ``"total-vlf"``.  Zero HF power makes the ratios undefined and raises
    :class:`InvalidWindowError`.
    """
    p = {name: band_power(psd, lo, hi) for name, (lo, hi) in BANDS.items()}
    lf, hf = p["lf"], p["hf"]
    if not hf > 0:
        raise InvalidWindowError("HF band power is zero; LF/HF ratios undefined")
    if lf_norm_mode == "lf+hf":
        denom = lf + hf
    elif lf_norm_mode == "total-vlf":
        denom = p["total_power"] - p["vlf"]
    else:
        raise DataValidationError(f"unknown lf_norm_mode {lf_norm_mode!r}")
    return FreqFeatures(
        ulf=p["ulf"],
        vlf=p["vlf"],
        lf=lf,
        hf=hf,
        total_power=p["total_power"],
        lf_norm=100.0 * lf / denom,
        hf_norm=100.0 * hf / denom,
        lf_hf_ratio=lf / hf,
        lfmf_hf_ratio=(lf + p["mf"]) / hf,
    )


def window_features(
    peak_times_s,
    subject_id: str,
    window_start_s: float = 0.0,
    segment_kind: SegmentKind = SegmentKind.SIMULATION,
    lf_norm_mode: str = "lf+hf",
) -> FeatureVector:
    """All 20 features for one window's beat times.

    Raises :class:`InvalidWindowError` when the window cannot produce a
    complete, finite vector.
    """
    times = np.asarray(peak_times_s, dtype=float)
    if len(times) < 2:
        raise InvalidWindowError(f"window at {window_start_s} s has {len(times)} beats")
    rr = rr_intervals(times)
    tf = time_domain_features(rr)
    ff = frequency_domain_features(lomb_psd(rr), lf_norm_mode)
    return FeatureVector(subject_id, window_start_s, segment_kind, tf.values() + ff.values())


def normalize_features(
    window_features: FeatureVector,
    baseline_features: FeatureVector,
    mode: str = "ratio",
    eps: float = 1e-9,
    clamp: float = 1e9,
) -> FeatureVector:
    """Express window features relative to the same subject's baseline.

    ``mode="ratio"`` divides feature-wise; a baseline magnitude at or below
    ``eps`` is replaced by ``eps`` and the result clipped to ``+-clamp``
    with a warning.  ``mode="difference"`` subtracts.
    """
    if window_features.subject_id != baseline_features.subject_id:
        raise DataValidationError(
            f"baseline subject {baseline_features.subject_id!r} does not match window subject "
            f"{window_features.subject_id!r}"
        )
    w, b = window_features.values, baseline_features.values
    if mode == "difference":
        out = w - b
    elif mode == "ratio":
        tiny = np.abs(b) <= eps
        if np.any(tiny):
            names = [n for n, t in zip(FEATURE_NAMES, tiny) if t]
            warnings.warn(f"baseline near zero for {names}; dividing by {eps:g} and clamping", RuntimeWarning,
                          stacklevel=2)
        out = np.clip(w / np.where(tiny, eps, b), -clamp, clamp)
    else:
        raise DataValidationError(f"unknown normalisation mode {mode!r}")
    return FeatureVector(window_features.subject_id, window_features.window_start_s,
                         window_features.segment_kind, out)
