from __future__ import annotations
import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from adaptation import AdaptationController, Lltm, RetrainStats, Ustm
from helpers import clock, derive_seed
from network import MlpAdaptModel, TrainConfig, evaluate_accuracy
from spectra import SpectraSet

logger = logging.getLogger(__name__)

REPORT_HEADER = ["chunk", "n", "accuracy", "retrain_seconds", "inference_seconds"]
FILL_MODES = ("tail", "uniform")


@dataclass(frozen=True)
class StreamConfig:
    chunk_size: int = 2500
    n_chunks: int = 10
    ustm_capacity: int = 100
    adapt: bool = True
    retrain: TrainConfig = field(default_factory=TrainConfig)
    ustm_fill: str = "tail"
    seed: int = 0

    def __post_init__(self):
        if self.chunk_size < 1 or self.n_chunks < 1:
            raise ValueError("chunk_size and n_chunks must be positive")
        if self.ustm_capacity < 1:
            raise ValueError("ustm_capacity must be positive")
        if self.ustm_fill not in FILL_MODES:
            raise ValueError(f"ustm_fill must be one of {FILL_MODES}")


@dataclass(frozen=True)
class ChunkRecord:
    chunk_index: int        # 1-based
    n_samples: int
    accuracy: float
    retrain_seconds: float
    inference_seconds: float


@dataclass
class StreamReport:
    records: List[ChunkRecord] = field(default_factory=list)

    @property
    def accuracies(self) -> List[float]:
        return [r.accuracy for r in self.records]

    @property
    def average_accuracy(self) -> float:
        if not self.records:
            return 0.0
        return float(np.mean(self.accuracies))

    @property
    def n_chunks(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class ChunkEvent:
    """Handed to an observer after each chunk: what was scored and what retraining consumed."""
    record: ChunkRecord
    chunk: SpectraSet
    scored_with: MlpAdaptModel
    model_after: MlpAdaptModel
    ustm_snapshot: Optional[np.ndarray]
    stats: Optional[RetrainStats]


def _fill_rows(cfg: StreamConfig, n: int, chunk_no: int) -> np.ndarray:
    take = min(cfg.ustm_capacity, n)
    if cfg.ustm_fill == "tail":
        return np.arange(n - take, n)
    rng = np.random.default_rng(derive_seed(cfg.seed, chunk_no))
    return np.sort(rng.choice(n, size=take, replace=False))


def prequential_run(m: MlpAdaptModel, stream: SpectraSet, lltm: Optional[Lltm], cfg: StreamConfig,
                    observer: Optional[Callable[[ChunkEvent], None]] = None) -> StreamReport:
    """
    Test-then-train over consecutive chunks. Stream labels score the current
    model and are never handed to retraining. lltm may be None when cfg.adapt is off.
    """
    needed = cfg.chunk_size * cfg.n_chunks
    if len(stream) < needed:
        raise ValueError(f"stream has {len(stream)} samples, need chunk_size*n_chunks = {needed}")
    if cfg.adapt and lltm is None:
        raise ValueError("an LLTM is required when adapting")
    if stream.dim != m.input_dim or (lltm is not None and lltm.dim != m.input_dim):
        raise ValueError("stream, LLTM and model dimensions must match")
    if not stream.all_labeled:
        raise ValueError("the evaluation stream must be labeled")

    X = stream.matrix()
    controller = AdaptationController(m, lltm, Ustm(cfg.ustm_capacity, m.input_dim), cfg.retrain)
    report = StreamReport()
    for c in range(cfg.n_chunks):
        lo, hi = c * cfg.chunk_size, (c + 1) * cfg.chunk_size
        chunk = stream.subset(range(lo, hi))
        scored_with = controller.model
        started = clock()
        accuracy = evaluate_accuracy(scored_with, chunk)
        inference_seconds = clock() - started

        stats = None
        ustm_snapshot = None
        if cfg.adapt:
            for row in _fill_rows(cfg, hi - lo, c):
                controller.observe(X[lo + row])
            ustm_snapshot = controller.ustm.matrix()
            stats = controller.adapt(seed=derive_seed(cfg.retrain.seed, c))

        record = ChunkRecord(c + 1, hi - lo, accuracy,
                             stats.wall_seconds if stats else 0.0, inference_seconds)
        report.records.append(record)
        logger.info("chunk %d/%d accuracy=%.4f retrain=%.3fs inference=%.3fs",
                    c + 1, cfg.n_chunks, accuracy, record.retrain_seconds, inference_seconds)
        if observer is not None:
            observer(ChunkEvent(record, chunk, scored_with, controller.model, ustm_snapshot, stats))
    return report


def final_model(m: MlpAdaptModel, stream: SpectraSet, lltm: Lltm, cfg: StreamConfig) -> tuple:
    """(report, model after the last chunk)."""
    last = {}

    def keep(event: ChunkEvent) -> None:
        last["model"] = event.model_after

    report = prequential_run(m, stream, lltm, cfg, observer=keep)
    return report, last.get("model", m)


# ---------- Comparison ----------
@dataclass(frozen=True)
class ReportComparison:
    deltas: List[float]
    average_delta: float


def compare_reports(adapt: StreamReport, baseline: StreamReport) -> ReportComparison:
    if adapt.n_chunks != baseline.n_chunks:
        raise ValueError(f"chunk counts differ: {adapt.n_chunks} vs {baseline.n_chunks}")
    deltas = [a - b for a, b in zip(adapt.accuracies, baseline.accuracies)]
    return ReportComparison(deltas, float(np.mean(deltas)) if deltas else 0.0)


# ---------- Report CSV ----------
def write_report(report: StreamReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for r in report.records:
            writer.writerow([r.chunk_index, r.n_samples, f"{r.accuracy:.6f}",
                             f"{r.retrain_seconds:.3f}", f"{r.inference_seconds:.3f}"])
        fh.write(f"# average_accuracy={report.average_accuracy:.6f}\n")


def read_report(path: str) -> StreamReport:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [line for line in fh if line.strip() and not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader, None)
    if header != REPORT_HEADER:
        raise ValueError(f"{path}: expected header {','.join(REPORT_HEADER)}")
    report = StreamReport()
    for line_no, row in enumerate(reader, start=2):
        try:
            report.records.append(ChunkRecord(int(row[0]), int(row[1]), float(row[2]),
                                              float(row[3]), float(row[4])))
        except (ValueError, IndexError):
            raise ValueError(f"{path}: malformed report row {line_no}")
    return report


def write_comparison(a: StreamReport, b: StreamReport, path: str) -> ReportComparison:
    """Plot-ready CSV: chunk,acc_a,acc_b,delta."""
    cmp = compare_reports(a, b)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chunk", "acc_a", "acc_b", "delta"])
        for ra, rb, d in zip(a.records, b.records, cmp.deltas):
            writer.writerow([ra.chunk_index, f"{ra.accuracy:.6f}", f"{rb.accuracy:.6f}", f"{d:.6f}"])
    return cmp
