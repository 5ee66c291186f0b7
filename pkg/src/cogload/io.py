"""File formats: ECG, annotation, roster and feature CSVs, plus atomic writes."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataValidationError
from .hrv import FEATURE_NAMES, FeatureVector
from .signal import EcgRecord, SegmentKind

FEATURE_HEADER = ("subject_id", "window_start_s", "segment", "label_expert", "label_highload", *FEATURE_NAMES)


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rows_to_csv(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def _read_rows(path, expected_header):
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataValidationError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if tuple(header) != tuple(expected_header):
            raise DataValidationError(f"{path}: expected header {','.join(expected_header)}, got {','.join(header)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(expected_header):
                raise DataValidationError(f"{path}: line {line_no}: expected {len(expected_header)} fields, "
                                          f"got {len(row)}")
            yield line_no, row


def _number(path, line_no, text, kind=float):
    try:
        value = kind(text)
    except ValueError:
        raise DataValidationError(f"{path}: line {line_no}: cannot parse {text!r} as a number") from None
    if kind is float and not np.isfinite(value):
        raise DataValidationError(f"{path}: line {line_no}: non-finite value {text!r}")
    return value


def write_ecg_csv(path, record: EcgRecord) -> None:
    fs = record.sampling_rate_hz
    lines = ["time_s,mv"]
    lines += [f"{i / fs!r},{v!r}" for i, v in enumerate(record.samples.tolist())]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_ecg_csv(path, subject_id: str | None = None,
                 segment_kind: SegmentKind = SegmentKind.SIMULATION, channel: int = 0) -> EcgRecord:
    """Parse a ``time_s,mv`` file, checking spacing is uniform to within 1%.

    Multi-lead exports may carry several voltage columns after ``time_s``;
    ``channel`` picks one (0 = first).  The sampling rate is inferred from
    the median time step.
    """
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"{path}: file not found")
    with path.open(newline="") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise DataValidationError(f"{path}: empty file")
    header = [h.strip() for h in header]
    if len(header) < 2 or header[0] != "time_s":
        raise DataValidationError(f"{path}: expected header time_s,mv, got {','.join(header)}")
    if channel >= len(header) - 1:
        raise DataValidationError(f"{path}: channel {channel} requested but file has {len(header) - 1}")
    times, values = [], []
    for line_no, row in _read_rows(path, header):
        times.append(_number(path, line_no, row[0]))
        values.append(_number(path, line_no, row[channel + 1]))
    if len(values) < 2:
        raise DataValidationError(f"{path}: need at least 2 samples")
    dt = np.diff(np.asarray(times))
    step = float(np.median(dt))
    if not step > 0:
        raise DataValidationError(f"{path}: timestamps are not increasing")
    bad = np.flatnonzero(np.abs(dt - step) > 0.01 * step)
    if len(bad):
        raise DataValidationError(f"{path}: non-uniform sampling near line {bad[0] + 3} "
                                  f"(step {dt[bad[0]]:.6g} s vs median {step:.6g} s)")
    fs = 1.0 / step
    rounded = round(fs)
    if abs(fs - rounded) < 1e-6 * fs:
        fs = float(rounded)
    return EcgRecord(subject_id or path.stem, np.asarray(values), fs, segment_kind)


@dataclass(frozen=True)
class CognitiveLoadAnnotation:
    subject_id: str
    event_time_s: float
    rating: int

    def __post_init__(self):
        if not 1 <= self.rating <= 9:
            raise DataValidationError(f"rating {self.rating} for {self.subject_id} outside 1..9")
        if self.event_time_s < 0:
            raise DataValidationError(f"negative event time {self.event_time_s} for {self.subject_id}")


def read_annotations_csv(path) -> list[CognitiveLoadAnnotation]:
    out = []
    for line_no, (sid, t, r) in _read_rows(path, ("subject_id", "event_time_s", "rating")):
        try:
            out.append(CognitiveLoadAnnotation(sid.strip(), _number(path, line_no, t), _number(path, line_no, r, int)))
        except DataValidationError as exc:
            raise DataValidationError(f"{path}: line {line_no}: {exc}") from None
    return out


def write_annotations_csv(path, annotations) -> None:
    rows = [{"subject_id": a.subject_id, "event_time_s": float(a.event_time_s), "rating": a.rating}
            for a in annotations]
    atomic_write_text(path, rows_to_csv(rows, ("subject_id", "event_time_s", "rating")))


def read_roster_csv(path) -> dict[str, int]:
    roster = {}
    for line_no, (sid, expert) in _read_rows(path, ("subject_id", "expert")):
        flag = _number(path, line_no, expert, int)
        if flag not in (0, 1):
            raise DataValidationError(f"{path}: line {line_no}: expert flag must be 0 or 1")
        roster[sid.strip()] = flag
    return roster


def write_roster_csv(path, roster: dict[str, int]) -> None:
    rows = [{"subject_id": s, "expert": int(e)} for s, e in roster.items()]
    atomic_write_text(path, rows_to_csv(rows, ("subject_id", "expert")))


def feature_rows(dataset) -> list[dict]:
    rows = []
    for subject in dataset.subjects.values():
        for fv, (expert, high) in zip(subject.windows, subject.labels):
            row = {"subject_id": fv.subject_id, "window_start_s": float(fv.window_start_s),
                   "segment": fv.segment_kind.value, "label_expert": int(expert), "label_highload": int(high)}
            row.update(fv.as_dict())
            rows.append(row)
    return rows


def write_features_csv(path, dataset) -> None:
    atomic_write_text(path, rows_to_csv(feature_rows(dataset), FEATURE_HEADER))


def read_features_csv(path):
    """Load a features CSV back into a :class:`~cogload.evaluation.SubjectDataset`."""
    from .evaluation import SubjectData, SubjectDataset

    grouped: dict[str, tuple[list, list]] = {}
    for line_no, row in _read_rows(path, FEATURE_HEADER):
        sid, start, segment = row[0].strip(), _number(path, line_no, row[1]), row[2].strip()
        labels = (_number(path, line_no, row[3], int), _number(path, line_no, row[4], int))
        if any(v not in (0, 1) for v in labels):
            raise DataValidationError(f"{path}: line {line_no}: labels must be 0 or 1")
        values = [_number(path, line_no, v) for v in row[5:]]
        try:
            fv = FeatureVector(sid, start, SegmentKind(segment), values)
        except ValueError as exc:
            raise DataValidationError(f"{path}: line {line_no}: {exc}") from None
        windows, label_rows = grouped.setdefault(sid, ([], []))
        windows.append(fv)
        label_rows.append(labels)
    if not grouped:
        raise DataValidationError(f"{path}: no feature rows")
    subjects = {}
    for sid, (windows, label_rows) in grouped.items():
        labels = np.asarray(label_rows, dtype=int)
        experts = set(labels[:, 0].tolist())
        if len(experts) != 1:
            raise DataValidationError(f"{path}: subject {sid} has inconsistent expert labels")
        subjects[sid] = SubjectData(sid, experts.pop(), windows, labels)
    return SubjectDataset(subjects)
