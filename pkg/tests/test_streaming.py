from dataclasses import replace

import numpy as np
import pytest
from adaptation import Lltm
from network import DenseLayer, MlpAdaptModel, TrainConfig, init_model
from spectra import SpectraSet
from streaming import (StreamConfig, StreamReport, ChunkRecord, prequential_run, final_model,
                       compare_reports, write_report, read_report, write_comparison)


def identity_model(c):
    eye = np.eye(c)
    return MlpAdaptModel(DenseLayer(eye, np.zeros(c)), DenseLayer(eye, np.zeros(c)),
                         DenseLayer(eye, np.zeros(c)), DenseLayer(np.zeros((c, c)), np.zeros(c)),
                         DenseLayer(np.zeros((2, c)), np.zeros(2)), dropout_rate=0.0)


def random_stream(n, dim=3, n_classes=3, seed=0):
    X = np.random.default_rng(seed).standard_normal((n, dim))
    return SpectraSet.from_arrays(X, np.arange(n) % n_classes, n_classes=n_classes)


def report(accs):
    return StreamReport([ChunkRecord(i + 1, 100, a, 0.5, 0.01) for i, a in enumerate(accs)])


@pytest.fixture
def adaptive():
    m = init_model(3, hidden=5, n_classes=3, seed=1)
    lltm = Lltm(random_stream(30, seed=2))
    cfg = StreamConfig(chunk_size=20, n_chunks=3, ustm_capacity=8,
                       retrain=TrainConfig(epochs=2, batch_size=6, seed=4))
    return m, lltm, cfg


def params_equal(a, b):
    return all(w.tobytes() == b.parameters()[n].tobytes() for n, w in a.parameters().items())


# ---------- harness ----------
def test_ten_chunk_records():
    m = init_model(2, hidden=4, n_classes=3, seed=0)
    rep = prequential_run(m, random_stream(25000, dim=2), None, StreamConfig(adapt=False))
    assert rep.n_chunks == 10
    assert [r.chunk_index for r in rep.records] == list(range(1, 11))
    assert all(r.n_samples == 2500 and 0.0 <= r.accuracy <= 1.0 for r in rep.records)
    assert abs(rep.average_accuracy - np.mean(rep.accuracies)) < 1e-12


def test_oracle_stub_scores_one():
    labels = np.arange(40) % 4
    stream = SpectraSet.from_arrays(np.eye(4)[labels], labels, n_classes=4)
    rep = prequential_run(identity_model(4), stream, None,
                          StreamConfig(chunk_size=10, n_chunks=4, adapt=False))
    assert rep.accuracies == [1.0] * 4 and rep.average_accuracy == 1.0


def test_baseline_leaves_model_untouched():
    m = init_model(3, hidden=5, n_classes=3, seed=3)
    before = m.copy()
    seen = []
    prequential_run(m, random_stream(60), None, StreamConfig(chunk_size=20, n_chunks=3, adapt=False),
                    observer=lambda e: seen.append(e))
    assert params_equal(before, m)
    assert all(e.scored_with is m and e.model_after is m and e.stats is None for e in seen)
    assert all(r.retrain_seconds == 0.0 for r in (e.record for e in seen))


def test_test_then_train_order(adaptive):
    m, lltm, cfg = adaptive
    events = []
    prequential_run(m, random_stream(60, seed=5), lltm, cfg, observer=events.append)
    assert events[0].scored_with is m
    for prev, cur in zip(events, events[1:]):
        assert cur.scored_with is prev.model_after
    assert all(e.stats.epochs == 2 for e in events)


def test_ustm_holds_chunk_tail_without_labels(adaptive):
    m, lltm, cfg = adaptive
    stream = random_stream(60, seed=6)
    events = []
    prequential_run(m, stream, lltm, cfg, observer=events.append)
    X = stream.matrix()
    assert np.array_equal(events[0].ustm_snapshot, X[12:20])
    assert np.array_equal(events[2].ustm_snapshot, X[52:60])


def test_uniform_fill_draws_from_the_chunk(adaptive):
    m, lltm, cfg = adaptive
    stream = random_stream(60, seed=6)
    events = []
    prequential_run(m, stream, lltm, replace(cfg, ustm_fill="uniform"), observer=events.append)
    chunk = {row.tobytes() for row in stream.matrix()[20:40]}
    assert all(row.tobytes() in chunk for row in events[1].ustm_snapshot)


def test_label_permutation_leaves_trajectory_identical(adaptive):
    m, lltm, cfg = adaptive
    stream = random_stream(60, seed=7)
    permuted = SpectraSet.from_arrays(stream.matrix(), (stream.labels() + 1) % 3, n_classes=3)
    runs = []
    for s in (stream, permuted):
        trajectory = []
        prequential_run(m, s, lltm, cfg, observer=lambda e: trajectory.append(e.model_after))
        runs.append(trajectory)
    assert all(params_equal(a, b) for a, b in zip(*runs))


def test_final_model_matches_last_round(adaptive):
    m, lltm, cfg = adaptive
    stream = random_stream(60, seed=8)
    events = []
    rep = prequential_run(m, stream, lltm, cfg, observer=events.append)
    rep2, last = final_model(m, stream, lltm, cfg)
    assert rep2.accuracies == rep.accuracies and params_equal(last, events[-1].model_after)


def test_harness_errors(adaptive):
    m, lltm, cfg = adaptive
    with pytest.raises(ValueError):
        prequential_run(m, random_stream(59), lltm, cfg)
    with pytest.raises(ValueError):
        prequential_run(m, random_stream(60), None, cfg)
    with pytest.raises(ValueError):
        prequential_run(m, random_stream(60).unlabeled(), lltm, cfg)
    with pytest.raises(ValueError):
        prequential_run(m, random_stream(60, dim=4), lltm, cfg)


def test_stream_config_validation():
    with pytest.raises(ValueError):
        StreamConfig(chunk_size=0)
    with pytest.raises(ValueError):
        StreamConfig(ustm_fill="reservoir")


# ---------- comparison ----------
def test_compare_identical_reports():
    r = report([0.9, 0.8, 0.7])
    cmp = compare_reports(r, r)
    assert cmp.deltas == [0.0] * 3 and cmp.average_delta == 0.0


def test_compare_average_delta():
    cmp = compare_reports(report([0.9] * 10), report([0.88] * 10))
    assert cmp.average_delta == pytest.approx(0.02, abs=1e-12)


def test_compare_mismatched_counts():
    with pytest.raises(ValueError):
        compare_reports(report([0.9] * 10), report([0.9] * 9))


# ---------- report files ----------
def test_report_file_round_trip(tmp_path):
    path = tmp_path / "report.csv"
    r = report([0.912345, 0.5, 1.0])
    write_report(r, str(path))
    text = path.read_text()
    assert text.startswith("chunk,n,accuracy,retrain_seconds,inference_seconds\n")
    assert text.rstrip().endswith("# average_accuracy=0.804115")
    back = read_report(str(path))
    assert back.accuracies == [0.912345, 0.5, 1.0] and back.records[0].retrain_seconds == 0.5


def test_read_report_rejects_garbage(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("chunk,n,accuracy,retrain_seconds,inference_seconds\n1,100,abc,0,0\n")
    with pytest.raises(ValueError):
        read_report(str(path))
    path.write_text("a,b\n")
    with pytest.raises(ValueError):
        read_report(str(path))


def test_write_comparison(tmp_path):
    path = tmp_path / "plot.csv"
    accs = [0.8] * 10
    shifted = list(accs)
    shifted[6] = 0.821
    cmp = write_comparison(report(shifted), report(accs), str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "chunk,acc_a,acc_b,delta" and len(lines) == 11
    assert lines[7] == "7,0.821000,0.800000,0.021000"
    assert cmp.deltas[6] == pytest.approx(0.021)
