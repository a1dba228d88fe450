"""Multi-seed trend checks on the synthetic drift benchmark."""
from dataclasses import replace

import numpy as np
import pytest
from adaptation import Lltm, Ustm, retrain
from experiment import run_drift_benchmark, summarize, train_pipeline
from helpers import derive_seed
from model_io import reduce_set
from network import TrainConfig, evaluate_accuracy
from synthgen import default_spec, generate

SEEDS = range(5)

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def reference_runs():
    return [run_drift_benchmark(s) for s in SEEDS]


def mean_adapted(**kwargs):
    return summarize([run_drift_benchmark(s, run_baseline=False, **kwargs) for s in SEEDS])["adapted"]


def test_adaptation_beats_baseline(reference_runs):
    wins = [r.adapted.average_accuracy >= r.baseline.average_accuracy + 0.01 for r in reference_runs]
    assert sum(wins) >= 4


def test_smaller_lltm_does_not_help(reference_runs):
    full = summarize(reference_runs)["adapted"]
    half = mean_adapted(lltm_fraction=0.5)
    quarter = mean_adapted(lltm_fraction=0.25)
    assert half <= full + 0.003 and quarter <= half + 0.003


def test_larger_ustm_does_not_hurt(reference_runs):
    assert summarize(reference_runs)["adapted"] >= mean_adapted(U=50) - 0.002


@pytest.fixture(scope="module")
def trained():
    """Per seed: checkpoint, reduced training set, held-out source and shifted test sets."""
    out = []
    for seed in SEEDS:
        spec = default_spec(seed)
        checkpoint, reduced, _ = train_pipeline(generate(spec, 2000, None, derive_seed(seed, 0)), k=32,
                                                seed=seed)
        source = reduce_set(checkpoint, generate(spec, 600, None, derive_seed(seed, 5)))
        shifted = reduce_set(checkpoint, generate(spec, 600, "shifted", derive_seed(seed, 6)))
        out.append((checkpoint, reduced, source, shifted))
    return out


def test_benchmark_is_learnable(trained):
    for checkpoint, _, source, _ in trained:
        assert evaluate_accuracy(checkpoint.network, source) >= 0.9


def test_shift_leaves_headroom(trained):
    gaps = [evaluate_accuracy(c.network, src) - evaluate_accuracy(c.network, sh) for c, _, src, sh in trained]
    assert np.mean(gaps) >= 0.03


def filled_ustm(data, n=100):
    u = Ustm(n, data.dim)
    for row in data.matrix()[:n]:
        u.push(row)
    return u


def test_retrain_on_source_does_no_harm(trained):
    cfg = TrainConfig(epochs=30)
    for seed, (c, reduced, source, _) in zip(SEEDS, trained):
        before = evaluate_accuracy(c.network, source.subset(range(100, 600)))
        after, _ = retrain(c.network, Lltm(reduced), filled_ustm(source), replace(cfg, seed=seed))
        assert evaluate_accuracy(after, source.subset(range(100, 600))) >= before - 0.02


def test_retrain_on_shifted_helps(trained):
    cfg = TrainConfig(epochs=30)
    improved = 0
    for seed, (c, reduced, _, shifted) in zip(SEEDS, trained):
        held_out = shifted.subset(range(100, 600))
        after, _ = retrain(c.network, Lltm(reduced), filled_ustm(shifted), replace(cfg, seed=seed))
        improved += evaluate_accuracy(after, held_out) > evaluate_accuracy(c.network, held_out)
    assert improved >= 4
