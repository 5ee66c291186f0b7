"""ECG preprocessing and Pan-Tompkins R-peak detection.

The chain is band-pass -> five-point derivative -> absolute value ->
moving-window integration -> adaptive dual threshold.  Detection runs on the
whole record; fixed-length analysis windows are cut afterwards from the
detected beat times.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import signal as sps

from .errors import DataValidationError

REFRACTORY_S = 0.2
WINDOW_LENGTH_S = 10.0
WINDOW_STEP_S = 5.0
MIN_WINDOW_PEAKS = 4


class SegmentKind(str, Enum):
    BASELINE = "baseline"
    SIMULATION = "simulation"


class ShortRecordWarning(UserWarning):
    """Raised (as a warning) when a record is too short to hold one window."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EcgRecord:
    """A single-channel, uniformly sampled ECG trace in millivolts."""

    subject_id: str
    samples: np.ndarray
    sampling_rate_hz: float = 500.0
    segment_kind: SegmentKind = SegmentKind.SIMULATION

    def __post_init__(self):
        samples = _frozen_array(self.samples)
        if samples.ndim != 1:
            raise DataValidationError("ECG samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise DataValidationError("ECG samples must be finite")
        if not self.sampling_rate_hz > 0:
            raise DataValidationError(f"sampling rate must be positive, got {self.sampling_rate_hz}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "segment_kind", SegmentKind(self.segment_kind))

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sampling_rate_hz

    def __eq__(self, other):
        if not isinstance(other, EcgRecord):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.sampling_rate_hz == other.sampling_rate_hz
            and self.segment_kind == other.segment_kind
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True, eq=False)
class FilterSpec:
    """Butterworth band-pass realised as cascaded second-order sections.

    ``order`` is the Butterworth order per band edge, so the cascade has
    ``2 * order`` poles and ``order`` biquads.
    """

    low_cut_hz: float
    high_cut_hz: float
    order: int
    sampling_rate_hz: float
    sos: np.ndarray = field(repr=False)

    def frequency_response(self, freqs_hz) -> np.ndarray:
        """Complex response of the cascade at the given frequencies."""
        _, h = sps.sosfreqz(self.sos, worN=np.atleast_1d(np.asarray(freqs_hz, float)), fs=self.sampling_rate_hz)
        return h

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(section[3:]) for section in self.sos])

    def group_delay_samples(self, freq_hz: float) -> float:
        step = 1e-3
        h = self.frequency_response([freq_hz - step, freq_hz + step])
        dphase = np.angle(h[1] / h[0])
        return float(-dphase / (2 * np.pi * 2 * step) * self.sampling_rate_hz)


@dataclass(frozen=True, eq=False)
class RPeakSeries:
    peak_times_s: np.ndarray
    source_record: str = ""
    duration_s: float = float("inf")

    def __post_init__(self):
        times = _frozen_array(self.peak_times_s)
        if times.ndim != 1:
            raise DataValidationError("peak times must be one-dimensional")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise DataValidationError("peak times must be strictly increasing")
        if len(times) and (times[0] < 0 or times[-1] > self.duration_s):
            raise DataValidationError("peak times must lie within the record")
        object.__setattr__(self, "peak_times_s", times)

    def __len__(self):
        return len(self.peak_times_s)

    def __eq__(self, other):
        if not isinstance(other, RPeakSeries):
            return NotImplemented
        return self.source_record == other.source_record and np.array_equal(
            self.peak_times_s, other.peak_times_s
        )


@dataclass(frozen=True, eq=False)
class Window:
    start_s: float
    peak_times_s: np.ndarray
    length_s: float = WINDOW_LENGTH_S

    def __post_init__(self):
        object.__setattr__(self, "peak_times_s", _frozen_array(self.peak_times_s))

    @property
    def center_s(self) -> float:
        return self.start_s + self.length_s / 2

    @property
    def usable(self) -> bool:
        """Whether enough beats fall inside to yield three RR intervals."""
        return len(self.peak_times_s) >= MIN_WINDOW_PEAKS


def design_bandpass(low_hz: float, high_hz: float, order: int = 4, fs: float = 500.0) -> FilterSpec:
    """Design a Butterworth band-pass via the bilinear transform.

    Raises
    ------
    DataValidationError
        If the band is inverted or not below Nyquist, the order is not a
        positive even integer, or the design comes out unstable.
    """
    if not 0 < low_hz < high_hz < fs / 2:
        raise DataValidationError(
            f"band-pass edges must satisfy 0 < low < high < fs/2, got low={low_hz}, high={high_hz}, fs={fs}"
        )
    if int(order) != order or order < 2 or order % 2:
        raise DataValidationError(f"filter order must be an even integer >= 2, got {order}")
    sos = sps.butter(int(order), [low_hz, high_hz], btype="bandpass", fs=fs, output="sos")
    spec = FilterSpec(float(low_hz), float(high_hz), int(order), float(fs), _frozen_array(sos))
    if np.any(np.abs(spec.poles()) >= 1.0):
        raise DataValidationError("band-pass design is unstable (pole on or outside the unit circle)")
    return spec


def apply_filter(record: EcgRecord, spec: FilterSpec) -> np.ndarray:
    """Causally filter ``record`` with zero initial state."""
    if len(record.samples) == 0:
        raise DataValidationError("cannot filter an empty record")
    if not np.isclose(record.sampling_rate_hz, spec.sampling_rate_hz):
        raise DataValidationError(
            f"filter designed for {spec.sampling_rate_hz} Hz applied to a {record.sampling_rate_hz} Hz record"
        )
    return sps.sosfilt(np.array(spec.sos), np.array(record.samples))


def pt_derivative(samples, fs: float) -> np.ndarray:
    """Five-point Pan-Tompkins slope estimate, delayed two samples to stay causal.

    ``y[n] = fs/8 * (x[n] + 2x[n-1] - 2x[n-3] - x[n-4])``.  A ramp rising by
    ``s`` per sample maps to ``s * fs``.  The first four outputs are zero.
    """
    x = np.asarray(samples, dtype=float)
    if len(x) < 5:
        raise DataValidationError("derivative needs at least 5 samples")
    y = np.zeros_like(x)
    y[4:] = (fs / 8.0) * (x[4:] + 2 * x[3:-1] - 2 * x[1:-3] - x[:-4])
    return y


def rectify(samples) -> np.ndarray:
    return np.abs(np.asarray(samples, dtype=float))


def moving_window_integrate(samples, window_ms: float = 150.0, fs: float = 500.0) -> np.ndarray:
    """Trailing moving average; the first ``W-1`` outputs average what is available."""
    if not window_ms > 0:
        raise DataValidationError(f"integration window must be positive, got {window_ms} ms")
    width = int(round(window_ms * fs / 1000.0))
    if width < 1:
        raise DataValidationError(f"integration window of {window_ms} ms is shorter than one sample")
    x = np.asarray(samples, dtype=float)
    csum = np.concatenate(([0.0], np.cumsum(x)))
    n = np.arange(1, len(x) + 1)
    lo = np.maximum(n - width, 0)
    return (csum[n] - csum[lo]) / (n - lo)


def _adaptive_threshold(mwi: np.ndarray, candidates: np.ndarray, fs: float, refractory: int) -> list[int]:
    """Classify integrated-signal peaks as QRS or noise with running levels."""
    init = mwi[: int(2 * fs)]
    if not np.any(init > 0):
        # flat lead-in: learn the levels from the whole record instead
        init = mwi
    spk = float(np.max(init))
    npk = float(np.mean(init))
    accepted: list[int] = []
    rr_recent: deque[int] = deque(maxlen=8)
    for i, c in enumerate(candidates):
        if accepted and rr_recent and c - accepted[-1] > 1.66 * np.mean(rr_recent):
            thr2 = 0.5 * (npk + 0.25 * (spk - npk))
            last = accepted[-1]
            missed = [p for p in candidates[:i] if p - last >= refractory and c - p >= refractory and mwi[p] > thr2]
            if missed:
                best = max(missed, key=lambda p: mwi[p])
                spk = 0.25 * mwi[best] + 0.75 * spk
                rr_recent.append(best - last)
                accepted.append(best)
        pk = mwi[c]
        thr1 = npk + 0.25 * (spk - npk)
        if pk > thr1 and (not accepted or c - accepted[-1] >= refractory):
            spk = 0.125 * pk + 0.875 * spk
            if accepted:
                rr_recent.append(c - accepted[-1])
            accepted.append(int(c))
        else:
            npk = 0.125 * pk + 0.875 * npk
    return accepted


def detect_r_peaks(
    record: EcgRecord,
    spec: FilterSpec | None = None,
    integration_ms: float = 150.0,
    refine_ms: float = 50.0,
) -> RPeakSeries:
    """Detect R-peaks with the Pan-Tompkins chain.

    Each accepted integrated-signal peak is mapped back by the chain delay
    (filter group delay at the band centre, derivative delay, half the
    integration window) and then snapped to the raw-signal maximum within
    ``refine_ms``.  A 200 ms refractory period is enforced both on the
    integrated signal and after refinement.
    """
    fs = record.sampling_rate_hz
    if record.duration_s < 2.0:
        raise DataValidationError(f"record {record.subject_id!r} is {record.duration_s:.2f} s; need >= 2 s")
    if spec is None:
        spec = design_bandpass(5.0, 15.0, 4, fs)
    raw = record.samples
    width = max(1, int(round(integration_ms * fs / 1000.0)))
    mwi = moving_window_integrate(rectify(pt_derivative(apply_filter(record, spec), fs)), integration_ms, fs)
    empty = RPeakSeries(np.empty(0), record.subject_id, record.duration_s)
    if not np.any(mwi > 0):
        return empty

    refractory = max(1, int(round(REFRACTORY_S * fs)))
    candidates, _ = sps.find_peaks(mwi, distance=refractory)
    qrs = _adaptive_threshold(mwi, candidates, fs, refractory)
    if not qrs:
        return empty

    center = np.sqrt(spec.low_cut_hz * spec.high_cut_hz)
    delay = int(round(spec.group_delay_samples(center) + 2 + (width - 1) / 2))
    half = int(round(refine_ms * fs / 1000.0))
    refined: list[int] = []
    for idx in qrs:
        guess = min(max(idx - delay, 0), len(raw) - 1)
        lo, hi = max(guess - half, 0), min(guess + half + 1, len(raw))
        peak = lo + int(np.argmax(raw[lo:hi]))
        if refined and peak - refined[-1] < refractory:
            if raw[peak] > raw[refined[-1]]:
                refined[-1] = peak
            continue
        refined.append(peak)
    return RPeakSeries(np.asarray(refined) / fs, record.subject_id, record.duration_s)


def segment_windows(
    peaks: RPeakSeries,
    record_duration_s: float,
    length_s: float = WINDOW_LENGTH_S,
    step_s: float = WINDOW_STEP_S,
) -> list[Window]:
    """Cut half-open ``[start, start + length)`` windows aligned to t = 0."""
    if record_duration_s < length_s:
        warnings.warn(
            f"record of {record_duration_s:.2f} s is shorter than one {length_s:g} s window",
            ShortRecordWarning,
            stacklevel=2,
        )
        return []
    times = peaks.peak_times_s
    n_windows = int(np.floor((record_duration_s - length_s) / step_s + 1e-9)) + 1
    windows = []
    for k in range(n_windows):
        start = k * step_s
        inside = times[(times >= start) & (times < start + length_s)]
        windows.append(Window(start, inside, length_s))
    return windows
