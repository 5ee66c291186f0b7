"""Seeded synthetic ECG and labelled cohort generators.

ECG beats are sums of Gaussian bumps (P, Q, R, S, T) centred on known beat
times, so detector output can be scored against exact ground truth.  Cohorts
are built at the RR level: each window's beat train is generated from
class-conditional parameters and pushed through the real HRV feature code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError, InvalidWindowError
from .signal import EcgRecord, RPeakSeries, SegmentKind

# (relative offset scaled by sqrt(RR), amplitude mV, width s, width scales with sqrt(RR))
_WAVES = {
    "P": (-0.17, 0.15, 0.025, False),
    "Q": (-0.025, -0.12, 0.008, False),
    "R": (0.0, 1.0, 0.010, False),
    "S": (0.025, -0.25, 0.008, False),
    "T": (0.30, 0.30, 0.045, True),
}
_EDGE_GUARD_S = 0.35


@dataclass(frozen=True)
class SynthEcgSpec:
    duration_s: float = 30.0
    mean_hr_bpm: float = 60.0
    hrv_sin_freq_hz: float = 0.1
    hrv_sin_amp_ms: float = 0.0
    noise_std_mv: float = 0.0
    sampling_rate_hz: float = 500.0
    seed: int = 0

    def validate(self):
        if not self.duration_s > 0:
            raise DataValidationError("duration must be positive")
        if not 30 <= self.mean_hr_bpm <= 220:
            raise DataValidationError(f"mean heart rate {self.mean_hr_bpm} outside [30, 220] bpm")
        if self.noise_std_mv < 0:
            raise DataValidationError("noise std must be nonnegative")
        if not self.sampling_rate_hz > 0:
            raise DataValidationError("sampling rate must be positive")
        if self.hrv_sin_amp_ms < 0 or self.hrv_sin_freq_hz < 0:
            raise DataValidationError("HRV modulation amplitude and frequency must be nonnegative")
        if self.hrv_sin_amp_ms >= 60000.0 / self.mean_hr_bpm - 200:
            raise DataValidationError("HRV modulation would push RR below 200 ms")


def beat_times(duration_s: float, mean_hr_bpm: float, sin_freq_hz: float = 0.0, sin_amp_ms: float = 0.0,
               start_s: float = _EDGE_GUARD_S, end_guard_s: float = _EDGE_GUARD_S) -> np.ndarray:
    """Beat times whose RR (ms) follows ``60000/hr + amp*sin(2*pi*f*t)`` at each beat onset."""
    base_ms = 60000.0 / mean_hr_bpm
    times = []
    t = start_s
    while t <= duration_s - end_guard_s:
        times.append(t)
        t += (base_ms + sin_amp_ms * np.sin(2 * np.pi * sin_freq_hz * t)) / 1000.0
    return np.asarray(times)


def render_ecg(times_s: np.ndarray, n_samples: int, fs: float) -> np.ndarray:
    """Sum the P-QRS-T template over all beats on a grid of ``n_samples``."""
    t = np.arange(n_samples) / fs
    out = np.zeros(n_samples)
    rr = np.diff(times_s, append=times_s[-1] + (times_s[-1] - times_s[-2] if len(times_s) > 1 else 1.0))
    for beat, interval in zip(times_s, rr):
        scale = np.sqrt(max(interval, 0.25))
        for offset, amp, width, widens in _WAVES.values():
            centre = beat + offset * (scale if offset else 0.0)
            w = width * scale if widens else width
            lo = np.searchsorted(t, centre - 5 * w)
            hi = np.searchsorted(t, centre + 5 * w)
            out[lo:hi] += amp * np.exp(-0.5 * ((t[lo:hi] - centre) / w) ** 2)
    return out


def synth_ecg(spec: SynthEcgSpec, subject_id: str = "synth",
              segment_kind: SegmentKind = SegmentKind.SIMULATION) -> tuple[EcgRecord, RPeakSeries]:
    """Generate an ECG record and its exact R-peak times."""
    spec.validate()
    fs = spec.sampling_rate_hz
    n = int(round(spec.duration_s * fs))
    times = beat_times(spec.duration_s, spec.mean_hr_bpm, spec.hrv_sin_freq_hz, spec.hrv_sin_amp_ms)
    clean = render_ecg(times, n, fs) if len(times) else np.zeros(n)
    rng = np.random.default_rng(spec.seed)
    noisy = clean + rng.normal(0.0, spec.noise_std_mv, n) if spec.noise_std_mv > 0 else clean
    record = EcgRecord(subject_id, noisy, fs, segment_kind)
    return record, RPeakSeries(times, subject_id, record.duration_s)


# rating probabilities over 1..9; experts skew low, novices skew high
EXPERT_RATINGS = (0.16, 0.20, 0.20, 0.16, 0.10, 0.07, 0.05, 0.04, 0.02)
NOVICE_RATINGS = tuple(reversed(EXPERT_RATINGS))


@dataclass(frozen=True)
class SynthCohortSpec:
    """Shape and difficulty of a synthetic study cohort.

    ``separation`` scales every class-conditional effect on the simulation
    windows (0 makes experts/novices and high/low load indistinguishable in
    feature space).  Ratings are drawn per window from the class rating
    distributions and binarised with ``load_threshold``.
    """

    n_experts: int = 5
    n_novices: int = 4
    windows_per_subject: int = 60
    separation: float = 1.0
    expert_rating_probs: tuple[float, ...] = EXPERT_RATINGS
    novice_rating_probs: tuple[float, ...] = NOVICE_RATINGS
    load_threshold: int = 5
    baseline_duration_s: float = 120.0
    window_length_s: float = 10.0
    seed: int = 0

    def validate(self):
        if self.n_experts < 1 or self.n_novices < 1 or self.windows_per_subject < 1:
            raise DataValidationError("subject and window counts must be >= 1")
        if self.separation < 0:
            raise DataValidationError("separation must be nonnegative")
        for probs in (self.expert_rating_probs, self.novice_rating_probs):
            if len(probs) != 9 or any(p < 0 for p in probs) or not np.isclose(sum(probs), 1.0):
                raise DataValidationError("rating distributions must be 9 nonnegative probabilities over 1..9")
        if not 1 <= self.load_threshold <= 9:
            raise DataValidationError("load threshold must be in 1..9")
        if self.baseline_duration_s < 30 or self.window_length_s <= 0:
            raise DataValidationError("baseline must be >= 30 s and windows positive")


@dataclass(frozen=True)
class _Physiology:
    mean_rr_ms: float
    lf_amp_ms: float
    hf_amp_ms: float
    noise_ms: float


def _rr_beats(phys: _Physiology, duration_s: float, rng: np.random.Generator) -> np.ndarray:
    """Beat times from an RR process with LF and HF sinusoids plus white jitter."""
    f_lf, f_hf = rng.uniform(0.08, 0.12), rng.uniform(0.2, 0.3)
    ph_lf, ph_hf = rng.uniform(0, 2 * np.pi, 2)
    t, times = rng.uniform(0, 0.3), []
    while t < duration_s:
        times.append(t)
        rr = (phys.mean_rr_ms
              + phys.lf_amp_ms * np.sin(2 * np.pi * f_lf * t + ph_lf)
              + phys.hf_amp_ms * np.sin(2 * np.pi * f_hf * t + ph_hf)
              + rng.normal(0, phys.noise_ms))
        t += min(max(rr, 260.0), 2000.0) / 1000.0
    return np.asarray(times)


def _window_physiology(base: _Physiology, expert: bool, high_load: bool, separation: float,
                       rng: np.random.Generator) -> _Physiology:
    load = 1.0 if high_load else -1.0
    skill = 1.0 if expert else -1.0
    jitter = rng.normal(0, [0.03, 0.15, 0.15, 0.10])
    return _Physiology(
        mean_rr_ms=base.mean_rr_ms * np.exp(separation * (-0.10 * load + 0.03 * skill) + jitter[0]),
        lf_amp_ms=base.lf_amp_ms * np.exp(separation * 0.10 * load + jitter[1]),
        hf_amp_ms=base.hf_amp_ms * np.exp(separation * 0.45 * skill + jitter[2]),
        noise_ms=base.noise_ms * np.exp(separation * 0.35 * skill + jitter[3]),
    )


def synth_cohort(spec: SynthCohortSpec = SynthCohortSpec()):
    """Generate a labelled, baseline-normalised :class:`SubjectDataset`.

    Each subject gets resting physiology drawn independently of class, a
    baseline recording of ``baseline_duration_s`` and ``windows_per_subject``
    simulation windows whose physiology is shifted by load and expertise.
    Features come from the real HRV code; windows that fail extraction are
    redrawn.
    """
    from .evaluation import SubjectData, SubjectDataset
    from .hrv import normalize_features, window_features

    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    n_subjects = spec.n_experts + spec.n_novices
    subjects = {}
    for k, child in enumerate(root.spawn(n_subjects)):
        rng = np.random.default_rng(child)
        expert = k < spec.n_experts
        subject_id = f"{'E' if expert else 'N'}{k + 1:02d}"
        base = _Physiology(
            mean_rr_ms=60000.0 / rng.uniform(62, 85),
            lf_amp_ms=rng.uniform(15, 30),
            hf_amp_ms=rng.uniform(15, 30),
            noise_ms=rng.uniform(22, 30),
        )
        baseline = None
        while baseline is None:
            try:
                baseline = window_features(_rr_beats(base, spec.baseline_duration_s, rng), subject_id, 0.0,
                                           SegmentKind.BASELINE)
            except InvalidWindowError:
                continue
        probs = np.asarray(spec.expert_rating_probs if expert else spec.novice_rating_probs)
        ratings = rng.choice(np.arange(1, 10), size=spec.windows_per_subject, p=probs / probs.sum())
        windows, labels = [], []
        for w, rating in enumerate(ratings):
            high_load = bool(rating >= spec.load_threshold)
            fv = None
            while fv is None:
                phys = _window_physiology(base, expert, high_load, spec.separation, rng)
                try:
                    fv = window_features(_rr_beats(phys, spec.window_length_s, rng), subject_id,
                                         w * spec.window_length_s / 2, SegmentKind.SIMULATION)
                except InvalidWindowError:
                    continue
            windows.append(normalize_features(fv, baseline))
            labels.append((int(expert), int(high_load)))
        subjects[subject_id] = SubjectData(subject_id, int(expert), windows, np.asarray(labels, dtype=int),
                                           baseline=baseline, ratings=ratings.astype(int))
    return SubjectDataset(subjects)


# every expert window below the default threshold, every novice window at or above it
INVERSE_EXPERT_RATINGS = (0.25, 0.25, 0.25, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0)
INVERSE_NOVICE_RATINGS = (0.0, 0.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25)


def inverse_relation_spec(**overrides) -> SynthCohortSpec:
    """Cohort where experts only report low load and novices only high load."""
    return SynthCohortSpec(**{"expert_rating_probs": INVERSE_EXPERT_RATINGS,
                              "novice_rating_probs": INVERSE_NOVICE_RATINGS,
                              "separation": 2.0, **overrides})


def synth_study(spec: SynthCohortSpec, simulation_s: float = 60.0, segment_s: float = 10.0,
                sampling_rate_hz: float = 500.0, noise_std_mv: float = 0.02):
    """Raw-ECG version of a cohort, for exercising ingestion end to end.

    Returns ``(records, roster, annotations)`` where ``records`` maps
    subject id to ``(baseline EcgRecord, simulation EcgRecord)``.  The
    simulation is a chain of ``segment_s`` blocks, each with its own
    physiology and one rating annotated at the block centre.
    """
    from .io import CognitiveLoadAnnotation

    spec.validate()
    records, roster, annotations = {}, {}, []
    n_subjects = spec.n_experts + spec.n_novices
    for k, child in enumerate(np.random.SeedSequence(spec.seed).spawn(n_subjects)):
        rng = np.random.default_rng(child)
        expert = k < spec.n_experts
        sid = f"{'E' if expert else 'N'}{k + 1:02d}"
        roster[sid] = int(expert)
        base = _Physiology(60000.0 / rng.uniform(62, 85), rng.uniform(15, 30), rng.uniform(15, 30),
                           rng.uniform(22, 30))
        probs = np.asarray(spec.expert_rating_probs if expert else spec.novice_rating_probs)
        beats = [_rr_beats(base, spec.baseline_duration_s - 0.5, rng) + 0.25]
        sim_beats = []
        n_segments = int(np.ceil(simulation_s / segment_s))
        for j in range(n_segments):
            rating = int(rng.choice(np.arange(1, 10), p=probs / probs.sum()))
            phys = _window_physiology(base, expert, rating >= spec.load_threshold, spec.separation, rng)
            start = j * segment_s
            seg = _rr_beats(phys, segment_s, rng) + start
            if sim_beats:
                seg = seg[seg - sim_beats[-1][-1] > 0.3] if len(sim_beats[-1]) else seg
            sim_beats.append(seg)
            annotations.append(CognitiveLoadAnnotation(sid, start + segment_s / 2, rating))
        sim = np.concatenate(sim_beats)
        sim = sim[(sim > 0.25) & (sim < simulation_s - 0.25)]
        pair = []
        for times, duration, kind in ((beats[0], spec.baseline_duration_s, SegmentKind.BASELINE),
                                      (sim, simulation_s, SegmentKind.SIMULATION)):
            n = int(round(duration * sampling_rate_hz))
            ecg = render_ecg(times, n, sampling_rate_hz) + rng.normal(0, noise_std_mv, n)
            pair.append(EcgRecord(sid, ecg, sampling_rate_hz, kind))
        records[sid] = tuple(pair)
    return records, roster, annotations
