"""Leave-one-subject-out evaluation of the multitask network."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CogloadError, DataValidationError
from .hrv import FeatureVector
from .nn import HEADS, NetworkConfig, config_to_dict, predict, train

log = logging.getLogger(__name__)

METRIC_NAMES = ("accuracy", "precision", "recall", "npv", "f1")


@dataclass
class SubjectData:
    subject_id: str
    expert: int
    windows: list[FeatureVector]
    labels: np.ndarray  # (n_windows, 2): expert, high_load
    baseline: FeatureVector | None = None
    ratings: np.ndarray | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1, len(HEADS))
        if len(self.labels) != len(self.windows):
            raise DataValidationError(f"subject {self.subject_id}: {len(self.windows)} windows but "
                                      f"{len(self.labels)} label rows")
        if len(self.labels) and np.any(self.labels[:, 0] != self.expert):
            raise DataValidationError(f"subject {self.subject_id}: expert label must be constant")

    def matrix(self) -> np.ndarray:
        return np.vstack([w.values for w in self.windows]) if self.windows else np.empty((0, 20))


@dataclass
class SubjectDataset:
    subjects: dict[str, SubjectData]

    def __len__(self):
        return len(self.subjects)

    @property
    def subject_ids(self) -> list[str]:
        return list(self.subjects)

    def arrays(self, subject_ids=None) -> tuple[np.ndarray, np.ndarray]:
        ids = self.subject_ids if subject_ids is None else list(subject_ids)
        x = np.vstack([self.subjects[s].matrix() for s in ids])
        y = np.vstack([self.subjects[s].labels for s in ids])
        return x, y

    def n_windows(self) -> int:
        return sum(len(s.windows) for s in self.subjects.values())


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_predictions(cls, predictions, labels) -> "Counts":
        p = np.asarray(predictions).astype(int).ravel()
        y = np.asarray(labels).astype(int).ravel()
        if p.shape != y.shape:
            raise DataValidationError(f"{len(p)} predictions but {len(y)} labels")
        if len(p) == 0:
            raise DataValidationError("cannot score an empty prediction set")
        if not (np.isin(p, (0, 1)).all() and np.isin(y, (0, 1)).all()):
            raise DataValidationError("predictions and labels must be binary")
        return cls(
            tp=int(np.sum((p == 1) & (y == 1))),
            fp=int(np.sum((p == 1) & (y == 0))),
            fn=int(np.sum((p == 0) & (y == 1))),
            tn=int(np.sum((p == 0) & (y == 0))),
        )


@dataclass(frozen=True)
class Metrics:
    """Confusion-matrix summary; ``None`` marks a metric with a zero denominator."""

    accuracy: float | None
    precision: float | None
    recall: float | None
    npv: float | None
    f1: float | None

    @classmethod
    def from_counts(cls, c: Counts) -> "Metrics":
        def ratio(num, den):
            return num / den if den else None

        precision = ratio(c.tp, c.tp + c.fp)
        recall = ratio(c.tp, c.tp + c.fn)
        f1 = None
        if precision is not None and recall is not None and precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        return cls(ratio(c.tp + c.tn, c.n), precision, recall, ratio(c.tn, c.tn + c.fn), f1)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def undefined(self) -> list[str]:
        return [name for name in METRIC_NAMES if getattr(self, name) is None]


def confusion_metrics(predictions, labels) -> Metrics:
    return Metrics.from_counts(Counts.from_predictions(predictions, labels))


def loso_split(dataset: SubjectDataset):
    """Yield ``(train_ids, test_id)`` with one fold per subject, in dataset order."""
    ids = dataset.subject_ids
    if len(ids) < 2:
        raise DataValidationError(f"LOSO needs at least 2 subjects, got {len(ids)}")
    for test_id in ids:
        yield [s for s in ids if s != test_id], test_id


@dataclass
class FoldResult:
    fold: int
    test_subject: str
    seed: int
    complete: bool
    counts: dict[str, Counts] = field(default_factory=dict)
    loss_curves: dict[str, list[float]] = field(default_factory=dict)
    scatter: list[dict] = field(default_factory=list)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "test_subject": self.test_subject,
            "seed": self.seed,
            "complete": self.complete,
            "error": self.error,
            "counts": {h: vars(c) for h, c in self.counts.items()},
            "metrics": {h: Metrics.from_counts(c).as_dict() for h, c in self.counts.items()},
        }


@dataclass
class LosoReport:
    config: dict
    folds: list[FoldResult]
    loss_curves: dict[str, list[float]]
    scatter: list[dict]

    @property
    def complete(self) -> bool:
        return all(f.complete for f in self.folds)

    def pooled_counts(self, head: str) -> Counts:
        total = Counts()
        for f in self.folds:
            if f.complete:
                total = total + f.counts[head]
        return total

    def pooled_metrics(self, head: str) -> Metrics:
        return Metrics.from_counts(self.pooled_counts(head))

    def fold_mean_metrics(self, head: str) -> dict[str, float | None]:
        """Macro average over complete folds, skipping folds where a metric is undefined."""
        out = {}
        for name in METRIC_NAMES:
            vals = [getattr(Metrics.from_counts(f.counts[head]), name) for f in self.folds if f.complete]
            vals = [v for v in vals if v is not None]
            out[name] = float(np.mean(vals)) if vals else None
        return out

    def scatter_array(self) -> np.ndarray:
        return np.array([[p["p_high_load"], p["p_expert"]] for p in self.scatter], dtype=float).reshape(-1, 2)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "complete": self.complete,
            "incomplete_folds": [f.fold for f in self.folds if not f.complete],
            "folds": [f.to_dict() for f in self.folds],
            "pooled": {h: {"counts": vars(self.pooled_counts(h)), "metrics": self.pooled_metrics(h).as_dict()}
                       for h in HEADS},
            "fold_mean": {h: self.fold_mean_metrics(h) for h in HEADS},
            "loss_curves": self.loss_curves,
            "scatter": self.scatter,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "LosoReport":
        folds = [
            FoldResult(
                fold=f["fold"], test_subject=f["test_subject"], seed=f["seed"], complete=f["complete"],
                counts={h: Counts(**c) for h, c in f["counts"].items()}, error=f["error"],
            )
            for f in d["folds"]
        ]
        return cls(d["config"], folds, d["loss_curves"], d["scatter"])

    @classmethod
    def from_json(cls, text: str) -> "LosoReport":
        return cls.from_dict(json.loads(text))


def _run_fold(dataset: SubjectDataset, train_ids: list[str], test_id: str, fold: int, config: NetworkConfig,
              threshold: float) -> FoldResult:
    seed = config.seed + fold
    try:
        x_train, y_train = dataset.arrays(train_ids)
        result = train(x_train, y_train, replace(config, seed=seed))
        subject = dataset.subjects[test_id]
        x_test, y_test = dataset.arrays([test_id])
        probs, decisions = predict(result.params, x_test, threshold)
    except CogloadError as exc:
        log.error("fold %d (%s) failed: %s", fold, test_id, exc)
        return FoldResult(fold, test_id, seed, False, error=f"{type(exc).__name__}: {exc}")
    counts = {h: Counts.from_predictions(decisions[:, k], y_test[:, k]) for k, h in enumerate(HEADS)}
    scatter = [
        {
            "subject_id": test_id,
            "window_start_s": float(w.window_start_s),
            "p_high_load": float(p[1]),
            "p_expert": float(p[0]),
            "true_expert": int(y[0]),
            "true_highload": int(y[1]),
        }
        for w, p, y in zip(subject.windows, probs, y_test)
    ]
    return FoldResult(fold, test_id, seed, True, counts, result.loss_curves, scatter)


def run_loso(dataset: SubjectDataset, config: NetworkConfig, threshold: float = 0.5, n_jobs: int = 1,
             extra_config: dict | None = None) -> LosoReport:
    """Train one model per held-out subject and pool the held-out predictions.

    Fold ``k`` trains with seed ``config.seed + k``.  Folds may run in worker
    processes; results are assembled in fold order either way.
    """
    splits = list(loso_split(dataset))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_run_fold, dataset, tr, te, k, config, threshold)
                       for k, (tr, te) in enumerate(splits)]
            folds = [f.result() for f in futures]
    else:
        folds = [_run_fold(dataset, tr, te, k, config, threshold) for k, (tr, te) in enumerate(splits)]

    done = [f for f in folds if f.complete]
    curves = {}
    if done:
        for key in done[0].loss_curves:
            curves[key] = [float(v) for v in np.mean([f.loss_curves[key] for f in done], axis=0)]
    scatter = [p for f in folds for p in f.scatter]
    echo = {"network": config_to_dict(config), "threshold": threshold, **(extra_config or {})}
    return LosoReport(echo, folds, curves, scatter)


@dataclass
class ScatterSummary:
    histogram: np.ndarray  # (20, 20): rows index p_high_load bins, columns p_expert bins
    bin_edges: np.ndarray
    centroids: np.ndarray  # (2, 2) rows of (p_high_load, p_expert)
    cluster_sizes: tuple[int, int]


def two_means(points: np.ndarray, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic 2-means: seeds at the extremes of the principal axis."""
    pts = np.asarray(points, dtype=float)
    centred = pts - pts.mean(axis=0)
    if np.allclose(centred, 0):
        c = pts.mean(axis=0)
        return np.vstack([c, c]), np.zeros(len(pts), dtype=int)
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    proj = centred @ vt[0]
    centroids = np.vstack([pts[np.argmin(proj)], pts[np.argmax(proj)]])
    assign = np.zeros(len(pts), dtype=int)
    for _ in range(max_iter):
        d = np.linalg.norm(pts[:, None, :] - centroids[None, :, :], axis=2)
        new = np.argmin(d, axis=1)
        updated = np.vstack([pts[new == k].mean(axis=0) if np.any(new == k) else centroids[k] for k in range(2)])
        if np.array_equal(new, assign) and np.allclose(updated, centroids):
            break
        assign, centroids = new, updated
    return centroids, assign


def probability_scatter_summary(report: LosoReport | np.ndarray, bins: int = 20) -> ScatterSummary:
    """2-D histogram of (p_high_load, p_expert) over the unit square plus 2-means centroids."""
    pts = report.scatter_array() if isinstance(report, LosoReport) else np.asarray(report, dtype=float)
    if len(pts) == 0:
        raise DataValidationError("scatter is empty")
    hist, edges, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=bins, range=[[0, 1], [0, 1]])
    centroids, assign = two_means(pts)
    order = np.argsort(centroids[:, 0], kind="stable")
    sizes = tuple(int(np.sum(assign == k)) for k in order)
    return ScatterSummary(hist, edges, centroids[order], sizes)


def loss_curve_rows(report: LosoReport) -> list[dict]:
    c = report.loss_curves
    return [
        {"epoch": i + 1, "l_expertise": c["l_expertise"][i], "l_cog": c["l_cognitive_load"][i],
         "l_total": c["l_total"][i]}
        for i in range(len(c.get("l_total", [])))
    ]


def scatter_rows(report: LosoReport) -> list[dict]:
    return [{k: p[k] for k in ("p_high_load", "p_expert", "true_expert", "true_highload")} for p in report.scatter]


def write_report(report: LosoReport, out_dir) -> dict[str, Path]:
    """Write ``report.json``, ``loss_curves.csv`` and ``scatter.csv`` atomically."""
    from .io import atomic_write_text, rows_to_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "loss_curves": out / "loss_curves.csv",
        "scatter": out / "scatter.csv",
    }
    atomic_write_text(paths["report"], report.to_json())
    atomic_write_text(paths["loss_curves"],
                      rows_to_csv(loss_curve_rows(report), ("epoch", "l_expertise", "l_cog", "l_total")))
    atomic_write_text(paths["scatter"],
                      rows_to_csv(scatter_rows(report), ("p_high_load", "p_expert", "true_expert", "true_highload")))
    return paths
