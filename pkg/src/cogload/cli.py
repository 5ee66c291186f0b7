"""Command-line entry point: ``cogload <subcommand> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data validation
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import CogloadError, ConfigError, DataValidationError, NumericalError
from .evaluation import probability_scatter_summary, LosoReport, loss_curve_rows, run_loso, write_report
from .io import (
    atomic_write_text,
    read_annotations_csv,
    read_ecg_csv,
    read_features_csv,
    read_roster_csv,
    rows_to_csv,
    write_annotations_csv,
    write_ecg_csv,
    write_features_csv,
    write_roster_csv,
)
from .nn import HEADS, predict, save_checkpoint, train
from .signal import SegmentKind, design_bandpass, detect_r_peaks

log = logging.getLogger("cogload")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, needs_out: bool = True):
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config field (repeatable; values parsed as JSON)")
    if needs_out:
        p.add_argument("--out", type=Path, required=True, help="run directory for outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cogload", description="ECG -> HRV -> multitask expertise / cognitive-load classifier")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate synthetic ECG or a labelled synthetic cohort")
    _add_common(p)
    p.add_argument("--kind", choices=("cohort", "ecg", "study"), default="cohort",
                   help="cohort: features.csv + roster.csv; ecg: one record + true peaks; "
                        "study: raw ECG per subject + roster + annotations")
    p.add_argument("--duration", type=float, default=60.0, help="ECG / simulation duration in seconds")
    p.add_argument("--hr", type=float, default=70.0, help="mean heart rate for --kind ecg")
    p.add_argument("--noise", type=float, default=0.02, help="noise std in mV for ECG output")

    p = sub.add_parser("detect", help="detect R-peaks in an ECG CSV")
    _add_common(p)
    p.add_argument("--ecg", type=Path, required=True)

    p = sub.add_parser("features", help="build the normalised features CSV from raw ECG")
    _add_common(p)
    p.add_argument("--ecg-dir", type=Path, required=True,
                   help="directory holding <subject>_baseline.csv and <subject>_simulation.csv")
    p.add_argument("--roster", type=Path, required=True)
    p.add_argument("--annotations", type=Path, required=True)

    p = sub.add_parser("train", help="train one model on a features CSV")
    _add_common(p)
    p.add_argument("--features", type=Path, required=True)

    p = sub.add_parser("loso", help="leave-one-subject-out evaluation on a features CSV")
    _add_common(p)
    p.add_argument("--features", type=Path, required=True)

    p = sub.add_parser("report", help="summarise a LOSO report")
    _add_common(p, needs_out=False)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--out", type=Path, help="also write summary.json here")
    return parser


def _cmd_synth(args, cfg: RunConfig) -> None:
    from .synth import (
        SynthCohortSpec, SynthEcgSpec, INVERSE_EXPERT_RATINGS, INVERSE_NOVICE_RATINGS, synth_cohort, synth_ecg,
        synth_study,
    )

    out = args.out
    if args.kind == "ecg":
        record, truth = synth_ecg(SynthEcgSpec(duration_s=args.duration, mean_hr_bpm=args.hr,
                                               noise_std_mv=args.noise, seed=cfg.seed))
        write_ecg_csv(out / "ecg.csv", record)
        atomic_write_text(out / "true_peaks.csv",
                          rows_to_csv([{"peak_time_s": float(t)} for t in truth.peak_times_s], ("peak_time_s",)))
        return
    extra = {}
    if cfg.synth_inverse:
        extra = {"expert_rating_probs": INVERSE_EXPERT_RATINGS, "novice_rating_probs": INVERSE_NOVICE_RATINGS}
    spec = SynthCohortSpec(n_experts=cfg.synth_n_experts, n_novices=cfg.synth_n_novices,
                           windows_per_subject=cfg.synth_windows_per_subject, separation=cfg.synth_separation,
                           load_threshold=cfg.load_threshold, seed=cfg.seed, **extra)
    if args.kind == "cohort":
        dataset = synth_cohort(spec)
        write_features_csv(out / "features.csv", dataset)
        write_roster_csv(out / "roster.csv", {s.subject_id: s.expert for s in dataset.subjects.values()})
        return
    records, roster, annotations = synth_study(spec, simulation_s=args.duration, noise_std_mv=args.noise)
    for sid, (baseline, simulation) in records.items():
        write_ecg_csv(out / "ecg" / f"{sid}_baseline.csv", baseline)
        write_ecg_csv(out / "ecg" / f"{sid}_simulation.csv", simulation)
    write_roster_csv(out / "roster.csv", roster)
    write_annotations_csv(out / "annotations.csv", annotations)


def _cmd_detect(args, cfg: RunConfig) -> None:
    record = read_ecg_csv(args.ecg, channel=cfg.channel)
    spec = design_bandpass(cfg.filter_low_hz, cfg.filter_high_hz, cfg.filter_order, record.sampling_rate_hz)
    peaks = detect_r_peaks(record, spec, cfg.integration_ms)
    atomic_write_text(args.out / "peaks.csv",
                      rows_to_csv([{"peak_time_s": float(t)} for t in peaks.peak_times_s], ("peak_time_s",)))
    log.info("%d peaks detected in %.1f s", len(peaks), record.duration_s)


def _cmd_features(args, cfg: RunConfig) -> None:
    from .pipeline import build_dataset

    roster = read_roster_csv(args.roster)
    annotations = read_annotations_csv(args.annotations)
    records = {}
    for sid in roster:
        records[sid] = (
            read_ecg_csv(args.ecg_dir / f"{sid}_baseline.csv", sid, SegmentKind.BASELINE, cfg.channel),
            read_ecg_csv(args.ecg_dir / f"{sid}_simulation.csv", sid, SegmentKind.SIMULATION, cfg.channel),
        )
    dataset = build_dataset(records, roster, annotations, cfg)
    write_features_csv(args.out / "features.csv", dataset)
    log.info("%d windows from %d subjects", dataset.n_windows(), len(dataset))


def _cmd_train(args, cfg: RunConfig) -> None:
    dataset = read_features_csv(args.features)
    x, y = dataset.arrays()
    result = train(x, y, cfg.network())
    save_checkpoint(args.out / "model.json", result.params, cfg.network())
    rows = loss_curve_rows(LosoReport({}, [], result.loss_curves, []))
    atomic_write_text(args.out / "loss_curves.csv", rows_to_csv(rows, ("epoch", "l_expertise", "l_cog", "l_total")))
    _, decisions = predict(result.params, x, cfg.decision_threshold)
    acc = {h: float(np.mean(decisions[:, k] == y[:, k])) for k, h in enumerate(HEADS)}
    log.info("training accuracy %s", acc)


def _cmd_loso(args, cfg: RunConfig) -> None:
    dataset = read_features_csv(args.features)
    report = run_loso(dataset, cfg.network(), cfg.decision_threshold, cfg.n_jobs,
                      extra_config={"run": cfg.to_dict()})
    write_report(report, args.out)
    if not report.complete:
        failed = [f.test_subject for f in report.folds if not f.complete]
        raise NumericalError(f"{len(failed)} fold(s) incomplete: {', '.join(failed)}")


def _fmt(v):
    return "  n/a " if v is None else f"{v:6.3f}"


def _cmd_report(args, cfg: RunConfig) -> None:
    path = args.report
    if not path.is_file():
        raise DataValidationError(f"report not found: {path}")
    try:
        report = LosoReport.from_json(path.read_text())
    except (KeyError, TypeError, ValueError) as exc:
        raise DataValidationError(f"{path}: malformed report: {exc}") from exc
    print(f"{'head':<10} {'scope':<9} accuracy precision recall    npv     f1")
    for head in HEADS:
        pooled = report.pooled_metrics(head).as_dict()
        mean = report.fold_mean_metrics(head)
        for scope, m in (("pooled", pooled), ("fold-mean", mean)):
            print(f"{head:<10} {scope:<9} " + "   ".join(_fmt(m[k]) for k in ("accuracy", "precision", "recall",
                                                                                "npv", "f1")))
    summary = {"pooled": {h: report.pooled_metrics(h).as_dict() for h in HEADS},
               "fold_mean": {h: report.fold_mean_metrics(h) for h in HEADS}}
    if report.scatter:
        s = probability_scatter_summary(report)
        print("2-means centroids (p_high_load, p_expert):",
              "; ".join(f"({c[0]:.3f}, {c[1]:.3f}) n={n}" for c, n in zip(s.centroids, s.cluster_sizes)))
        summary["scatter"] = {"centroids": s.centroids.tolist(), "cluster_sizes": list(s.cluster_sizes),
                              "bin_edges": s.bin_edges.tolist(), "histogram": s.histogram.astype(int).tolist()}
    if args.out:
        atomic_write_text(args.out / "summary.json", json.dumps(summary, indent=2))


COMMANDS = {
    "synth": _cmd_synth,
    "detect": _cmd_detect,
    "features": _cmd_features,
    "train": _cmd_train,
    "loso": _cmd_loso,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, args.overrides)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"cogload: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args, cfg)
    except CogloadError as exc:
        print(f"cogload: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
