"""Glue from raw recordings to a labelled, baseline-normalised dataset."""

from __future__ import annotations

import logging

import numpy as np

from .errors import DataValidationError, InvalidWindowError
from .evaluation import SubjectData, SubjectDataset
from .hrv import normalize_features, window_features
from .io import CognitiveLoadAnnotation
from .signal import EcgRecord, Window, design_bandpass, detect_r_peaks, segment_windows

log = logging.getLogger(__name__)


def label_windows(windows: list[Window], annotations: list[CognitiveLoadAnnotation], threshold: int = 5,
                  expert: int = 0) -> np.ndarray:
    """Give each window the rating of the annotation nearest its centre.

    Returns an ``(n_windows, 2)`` int array of (expert, high_load) with
    ``high_load = rating >= threshold``.  Ties go to the earlier annotation.
    """
    if not annotations:
        raise DataValidationError("no cognitive-load annotations for subject")
    if len({a.subject_id for a in annotations}) > 1:
        raise DataValidationError("annotations for label_windows must belong to one subject")
    ordered = sorted(annotations, key=lambda a: a.event_time_s)
    times = np.array([a.event_time_s for a in ordered])
    ratings = np.array([a.rating for a in ordered])
    labels = np.zeros((len(windows), 2), dtype=int)
    for i, w in enumerate(windows):
        nearest = int(np.argmin(np.abs(times - w.center_s)))
        labels[i] = (expert, int(ratings[nearest] >= threshold))
    return labels


def subject_dataset_entry(baseline: EcgRecord, simulation: EcgRecord, annotations, expert: int, config) -> SubjectData:
    """Detect, window, featurise and normalise one subject's recordings."""
    if baseline.subject_id != simulation.subject_id:
        raise DataValidationError("baseline and simulation records belong to different subjects")
    sid = simulation.subject_id
    spec = design_bandpass(config.filter_low_hz, config.filter_high_hz, config.filter_order,
                           simulation.sampling_rate_hz)
    base_spec = spec if baseline.sampling_rate_hz == simulation.sampling_rate_hz else design_bandpass(
        config.filter_low_hz, config.filter_high_hz, config.filter_order, baseline.sampling_rate_hz)
    base_peaks = detect_r_peaks(baseline, base_spec, config.integration_ms)
    try:
        base_fv = window_features(base_peaks.peak_times_s, sid, 0.0, baseline.segment_kind, config.lf_norm_mode)
    except InvalidWindowError as exc:
        raise DataValidationError(f"subject {sid}: baseline unusable: {exc}") from exc

    peaks = detect_r_peaks(simulation, spec, config.integration_ms)
    windows = segment_windows(peaks, simulation.duration_s, config.window_length_s, config.window_step_s)
    if annotations and max(a.event_time_s for a in annotations) > simulation.duration_s:
        raise DataValidationError(f"subject {sid}: annotation after end of simulation record")
    labels = label_windows(windows, annotations, config.load_threshold, expert)
    kept, kept_labels = [], []
    for w, lab in zip(windows, labels):
        if not w.usable:
            log.warning("subject %s: window at %.1f s has %d beats; skipped", sid, w.start_s, len(w.peak_times_s))
            continue
        try:
            fv = window_features(w.peak_times_s, sid, w.start_s, simulation.segment_kind, config.lf_norm_mode)
        except InvalidWindowError as exc:
            log.warning("subject %s: window at %.1f s excluded: %s", sid, w.start_s, exc)
            continue
        kept.append(normalize_features(fv, base_fv, config.normalization))
        kept_labels.append(lab)
    return SubjectData(sid, expert, kept, np.asarray(kept_labels, dtype=int).reshape(-1, 2), baseline=base_fv)


def build_dataset(records: dict, roster: dict[str, int], annotations, config) -> SubjectDataset:
    """``records`` maps subject id to ``(baseline, simulation)`` records."""
    subjects = {}
    for sid, expert in roster.items():
        if sid not in records:
            raise DataValidationError(f"subject {sid} in roster has no recordings")
        mine = [a for a in annotations if a.subject_id == sid]
        if not mine:
            raise DataValidationError(f"no annotations for subject {sid}")
        baseline, simulation = records[sid]
        subjects[sid] = subject_dataset_entry(baseline, simulation, mine, expert, config)
    return SubjectDataset(subjects)
