from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from adaptation import build_lltm
from config import Config
from dimred import default_k, make_strategy
from helpers import derive_seed
from model_io import Checkpoint, reduce_set
from network import TrainConfig, init_model, train_supervised
from spectra import SpectraSet, get_normalizer
from streaming import StreamConfig, StreamReport, compare_reports, prequential_run
from synthgen import DEFAULT_SHIFT, ShiftSpec, default_spec, generate, generate_drift_stream

logger = logging.getLogger(__name__)


def train_pipeline(train_set: SpectraSet, *, k: Optional[int] = None, hidden: int = 64,
                   train_cfg: TrainConfig = TrainConfig(epochs=100), normalization: str = "minmax",
                   reduction: str = "pca", seed: int = 0,
                   meta: Optional[Dict] = None) -> Tuple[Checkpoint, SpectraSet, List[float]]:
    """Offline stage: normalize, fit the reduction once, train the label path. Returns the reduced set too."""
    k = default_k(len(train_set), train_set.dim) if k is None else k
    strategy = make_strategy(reduction, seed=seed, max_iter=Config.PCA_MAX_ITER, tol=Config.PCA_TOL,
                             oversample=Config.PCA_OVERSAMPLE)
    normalized = get_normalizer(normalization)(train_set)
    pca = strategy.fit(normalized, k)
    reduced = pca.transform_set(normalized)
    model = init_model(k, hidden=hidden, n_classes=train_set.n_classes, seed=seed,
                       dropout_rate=train_cfg.dropout_rate)
    model, trace = train_supervised(model, reduced, train_cfg)
    checkpoint = Checkpoint(normalization, pca, model, meta=dict(meta or {}))
    return checkpoint, reduced, trace


@dataclass(frozen=True)
class BenchmarkResult:
    seed: int
    baseline: StreamReport
    adapted: StreamReport

    @property
    def average_delta(self) -> float:
        return compare_reports(self.adapted, self.baseline).average_delta


def run_drift_benchmark(seed: int, *, i: int = 2000, lltm_fraction: float = 1.0, U: int = 100,
                        dim: int = 1024, k: int = 32, chunk_size: int = 500, n_chunks: int = 10,
                        shift_from_chunk: int = 3, shift: ShiftSpec = DEFAULT_SHIFT,
                        train_cfg: TrainConfig = TrainConfig(epochs=100),
                        retrain_cfg: TrainConfig = TrainConfig(epochs=30),
                        run_baseline: bool = True) -> BenchmarkResult:
    """
    Synthetic adaptation benchmark: train offline on source spectra, then
    stream chunk_size*n_chunks spectra whose chunks from shift_from_chunk
    (1-based) onward come from the shifted domain.
    """
    spec = default_spec(seed, dim=dim)
    train_set = generate(spec, i, None, derive_seed(seed, 0))
    checkpoint, reduced_train, _ = train_pipeline(
        train_set, k=k, train_cfg=replace(train_cfg, seed=derive_seed(seed, 1)), seed=seed)
    lltm = build_lltm(reduced_train, lltm_fraction, derive_seed(seed, 2))

    n = chunk_size * n_chunks
    raw_stream = generate_drift_stream(spec, n, (shift_from_chunk - 1) * chunk_size, shift,
                                       derive_seed(seed, 3))
    stream = reduce_set(checkpoint, raw_stream)
    cfg = StreamConfig(chunk_size=chunk_size, n_chunks=n_chunks, ustm_capacity=U, adapt=True,
                       retrain=replace(retrain_cfg, seed=derive_seed(seed, 4)), seed=seed)
    baseline = (prequential_run(checkpoint.network, stream, lltm, replace(cfg, adapt=False))
                if run_baseline else StreamReport())
    adapted = prequential_run(checkpoint.network, stream, lltm, cfg)
    logger.info("seed %d: baseline %.4f, adapted %.4f", seed, baseline.average_accuracy,
                adapted.average_accuracy)
    return BenchmarkResult(seed, baseline, adapted)


def sweep(seeds: Sequence[int], jobs: int = 1, **kwargs) -> List[BenchmarkResult]:
    """One benchmark per seed; each worker builds its own data and models."""
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    if jobs == 1:
        return [run_drift_benchmark(s, **kwargs) for s in seeds]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda s: run_drift_benchmark(s, **kwargs), seeds))


def summarize(results: Sequence[BenchmarkResult]) -> Dict[str, float]:
    """Mean accuracies over seeds. Seeds run without a baseline count toward "adapted" only."""
    paired = [r for r in results if r.baseline.records]
    baseline = [r.baseline.average_accuracy for r in paired]
    adapted = [r.adapted.average_accuracy for r in results]
    return {
        "baseline": float(np.mean(baseline)) if baseline else 0.0,
        "adapted": float(np.mean(adapted)) if adapted else 0.0,
        "paired": len(paired),
        "wins": sum(1 for r in paired if r.average_delta > 0),
    }
