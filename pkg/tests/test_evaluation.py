import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cogload.errors import DataValidationError
from cogload.evaluation import (
    Counts,
    LosoReport,
    SubjectData,
    SubjectDataset,
    confusion_metrics,
    loso_split,
    probability_scatter_summary,
    run_loso,
    two_means,
    write_report,
)
from cogload.hrv import FeatureVector
from cogload.nn import NetworkConfig
from cogload.signal import SegmentKind

SMALL = NetworkConfig(hidden_sizes=(16, 16), epochs=30, batch_size=32)


def make_dataset(n_subjects, windows=6, seed=0, signal=3.0):
    rng = np.random.default_rng(seed)
    subjects = {}
    for k in range(n_subjects):
        sid = f"S{k:02d}"
        expert = k % 2
        high = rng.integers(0, 2, windows)
        values = rng.normal(0, 0.3, (windows, 20))
        values[:, 0] += signal * (2 * expert - 1)
        values[:, 1] += signal * (2 * high - 1)
        fvs = [FeatureVector(sid, 5.0 * i, SegmentKind.SIMULATION, v) for i, v in enumerate(values)]
        subjects[sid] = SubjectData(sid, expert, fvs, np.column_stack([np.full(windows, expert), high]))
    return SubjectDataset(subjects)


def test_nine_subjects_nine_folds():
    ds = make_dataset(9)
    folds = list(loso_split(ds))
    assert len(folds) == 9
    assert [t for _, t in folds] == ds.subject_ids


def test_two_subjects_two_folds():
    assert len(list(loso_split(make_dataset(2)))) == 2


def test_one_subject_is_rejected():
    with pytest.raises(DataValidationError):
        list(loso_split(make_dataset(1)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.text("abcdefgh", min_size=1, max_size=4), min_size=2, max_size=12, unique=True))
def test_loso_partition(ids):
    ds = SubjectDataset({s: SubjectData(s, 0, [], np.empty((0, 2))) for s in ids})
    folds = list(loso_split(ds))
    assert sorted(t for _, t in folds) == sorted(ids)
    for train_ids, test_id in folds:
        assert test_id not in train_ids
        assert sorted(train_ids + [test_id]) == sorted(ids)


def test_all_correct_metrics():
    m = confusion_metrics([1, 0, 1, 0], [1, 0, 1, 0])
    assert (m.accuracy, m.precision, m.recall, m.npv, m.f1) == (1, 1, 1, 1, 1)


def test_hand_counted_metrics():
    pred = [1] * 3 + [1] + [0] * 2 + [0] * 4
    true = [1] * 3 + [0] + [1] * 2 + [0] * 4
    c = Counts.from_predictions(pred, true)
    assert (c.tp, c.fp, c.fn, c.tn) == (3, 1, 2, 4)
    m = confusion_metrics(pred, true)
    assert abs(m.accuracy - 0.7) <= 1e-12
    assert abs(m.precision - 0.75) <= 1e-12
    assert abs(m.recall - 0.6) <= 1e-12
    assert abs(m.npv - 2 / 3) <= 1e-12
    assert abs(m.f1 - 2 / 3) <= 1e-12


def test_no_positive_predictions_flags_precision():
    m = confusion_metrics([0, 0, 0], [1, 0, 1])
    assert m.precision is None and "precision" in m.undefined() and m.f1 is None
    assert m.accuracy == pytest.approx(1 / 3)


@pytest.mark.parametrize("pred, true", [([1, 0], [1]), ([], []), ([2, 0], [1, 0])])
def test_metric_input_validation(pred, true):
    with pytest.raises(DataValidationError):
        confusion_metrics(pred, true)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=50), st.randoms())
def test_metrics_are_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = confusion_metrics(*zip(*pairs))
    b = confusion_metrics(*zip(*shuffled))
    assert a == b


@pytest.fixture(scope="module")
def small_report():
    return run_loso(make_dataset(4, windows=8), SMALL)


def test_pooled_counts_are_fold_sums(small_report):
    for head in ("expert", "high_load"):
        total = Counts()
        for f in small_report.folds:
            total = total + f.counts[head]
        assert small_report.pooled_counts(head) == total
        assert total.n == 32


def test_fold_seeds_follow_base_seed(small_report):
    assert [f.seed for f in small_report.folds] == [0, 1, 2, 3]


def test_report_round_trip(small_report, tmp_path):
    paths = write_report(small_report, tmp_path)
    text = paths["report"].read_text()
    again = LosoReport.from_json(text)
    assert again.to_json() == text
    assert again.pooled_metrics("expert") == small_report.pooled_metrics("expert")


def test_report_files(small_report, tmp_path):
    paths = write_report(small_report, tmp_path)
    curves = paths["loss_curves"].read_text().splitlines()
    assert curves[0] == "epoch,l_expertise,l_cog,l_total" and len(curves) == 31
    scatter = paths["scatter"].read_text().splitlines()
    assert scatter[0] == "p_high_load,p_expert,true_expert,true_highload" and len(scatter) == 33
    assert json.loads(paths["report"].read_text())["config"]["network"]["epochs"] == 30


def test_parallel_matches_serial(small_report):
    parallel = run_loso(make_dataset(4, windows=8), SMALL, n_jobs=2)
    assert parallel.to_json() == small_report.to_json()


def test_failed_fold_is_marked(monkeypatch):
    import cogload.evaluation as ev
    from cogload.errors import NumericalError

    real = ev.train

    def flaky(x, y, config):
        if config.seed == 1:
            raise NumericalError("diverged")
        return real(x, y, config)

    monkeypatch.setattr(ev, "train", flaky)
    report = run_loso(make_dataset(3, windows=4), NetworkConfig(hidden_sizes=(4,), epochs=2))
    assert not report.complete
    assert report.to_dict()["incomplete_folds"] == [1]
    assert report.pooled_counts("expert").n == 8


def test_degenerate_scatter():
    summary = probability_scatter_summary(np.full((10, 2), 0.5))
    assert np.allclose(summary.centroids, 0.5)
    assert summary.histogram.shape == (20, 20) and summary.histogram.sum() == 10


def test_two_means_separates_blobs():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal([0.1, 0.9], 0.03, (30, 2)), rng.normal([0.9, 0.1], 0.03, (20, 2))])
    summary = probability_scatter_summary(pts)
    assert np.allclose(summary.centroids, [[0.1, 0.9], [0.9, 0.1]], atol=0.03)
    assert summary.cluster_sizes == (30, 20)
    c1, _ = two_means(pts)
    c2, _ = two_means(pts)
    assert np.array_equal(c1, c2)
