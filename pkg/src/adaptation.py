from __future__ import annotations
import logging
import math
import threading
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from helpers import clock
from network import MlpAdaptModel, TrainConfig, predict_batch, run_epochs
from spectra import SpectraSet, Spectrum

logger = logging.getLogger(__name__)


# ---------- Memories ----------
@dataclass(frozen=True, eq=False)
class Lltm:
    samples: SpectraSet

    def __post_init__(self):
        if len(self.samples) == 0:
            raise ValueError("LLTM must not be empty")
        if not self.samples.all_labeled:
            raise ValueError("LLTM samples must all be labeled")

    @property
    def capacity(self) -> int:
        return len(self.samples)

    @property
    def dim(self) -> int:
        return self.samples.dim

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.samples.matrix(), self.samples.labels()


def _stratified_quotas(counts: dict, total: int, n: int) -> dict:
    exact = {c: counts[c] * total / n for c in counts}
    quotas = {c: int(math.floor(v)) for c, v in exact.items()}
    short = total - sum(quotas.values())
    for c in sorted(counts, key=lambda c: (-(exact[c] - quotas[c]), c))[:short]:
        quotas[c] += 1
    return quotas


def build_lltm(training_set: SpectraSet, fraction: float, seed: int) -> Lltm:
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return Lltm(training_set)
    n = len(training_set)
    total = int(math.floor(n * fraction + 0.5))
    if total == 0:
        raise ValueError(f"fraction {fraction} of {n} samples leaves an empty LLTM")
    labels = training_set.labels()
    classes = sorted(set(labels.tolist()))
    counts = {c: int(np.sum(labels == c)) for c in classes}
    quotas = _stratified_quotas(counts, total, n)
    rng = np.random.default_rng(seed)
    keep: List[int] = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        keep.extend(rng.permutation(members)[:quotas[c]].tolist())
    keep.sort()
    logger.info("LLTM: %d of %d samples (fraction %.3f)", len(keep), n, fraction)
    return Lltm(training_set.subset(keep))


class Ustm:
    """Fixed-capacity ring buffer of recent unlabeled (reduced) vectors; oldest evicted first."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ValueError("USTM capacity must be positive")
        if dim < 1:
            raise ValueError("USTM dim must be positive")
        self.capacity = capacity
        self.dim = dim
        self._buf: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._buf)

    def push(self, x) -> "Ustm":
        v = np.array(x.intensities if isinstance(x, Spectrum) else x, dtype=np.float64).ravel()
        if v.shape[0] != self.dim:
            raise ValueError(f"dimension mismatch: USTM holds {self.dim}-vectors, got {v.shape[0]}")
        v.setflags(write=False)
        self._buf.append(v)
        return self

    def matrix(self) -> np.ndarray:
        if not self._buf:
            return np.zeros((0, self.dim))
        return np.vstack(list(self._buf))

    def clear(self) -> None:
        self._buf.clear()


def push_ustm(u: Ustm, x) -> Ustm:
    return u.push(x)


# ---------- Retraining ----------
@dataclass
class RetrainStats:
    label_loss: List[float] = field(default_factory=list)
    domain_loss: List[float] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def epochs(self) -> int:
        return len(self.label_loss)


def retrain(m: MlpAdaptModel, lltm: Lltm, ustm: Ustm, cfg: TrainConfig, *,
            detach_domain: bool = False) -> Tuple[MlpAdaptModel, RetrainStats]:
    """
    Warm-started semi-supervised retraining: label loss on LLTM halves,
    domain loss (LLTM 0 / USTM 1) through the gradient reversal layer.
    detach_domain drops the domain path entirely (plain supervised epochs on LLTM).
    """
    if lltm.dim != m.input_dim:
        raise ValueError(f"dimension mismatch: LLTM dim {lltm.dim}, model input {m.input_dim}")
    if ustm.dim != m.input_dim:
        raise ValueError(f"dimension mismatch: USTM dim {ustm.dim}, model input {m.input_dim}")
    if len(ustm) == 0:
        return m, RetrainStats()
    X, y = lltm.arrays()
    started = clock()
    target = None if detach_domain else ustm.matrix()
    model, label_trace, domain_trace = run_epochs(m, X, y, cfg, target=target)
    stats = RetrainStats(label_trace, domain_trace, clock() - started)
    logger.info("retrained %d epochs on LLTM=%d USTM=%d in %.3fs",
                cfg.epochs, lltm.capacity, len(ustm), stats.wall_seconds)
    return model, stats


# ---------- Controller ----------
class AdaptationController:
    """
    Owns the memories and the deployed model. Inference always reads the
    current frozen snapshot; adapt() retrains a working copy and swaps it in.
    """

    def __init__(self, model: MlpAdaptModel, lltm: Optional[Lltm], ustm: Ustm, cfg: TrainConfig):
        self._model = model
        self.lltm = lltm
        self.ustm = ustm
        self.cfg = cfg
        self._lock = threading.Lock()
        self._rounds = 0
        self.history: List[RetrainStats] = []

    @property
    def model(self) -> MlpAdaptModel:
        with self._lock:
            return self._model

    def infer(self, X) -> np.ndarray:
        return predict_batch(self.model, X)

    def observe(self, x) -> None:
        self.ustm.push(x)

    def adapt(self, seed: Optional[int] = None) -> RetrainStats:
        if self.lltm is None:
            raise ValueError("no LLTM attached; cannot adapt")
        cfg = self.cfg if seed is None else replace(self.cfg, seed=seed)
        snapshot = self.model
        updated, stats = retrain(snapshot, self.lltm, self.ustm, cfg)
        with self._lock:
            self._model = updated
            self._rounds += 1
        self.history.append(stats)
        return stats

    def adapt_async(self, executor: ThreadPoolExecutor, seed: Optional[int] = None) -> Future:
        return executor.submit(self.adapt, seed)

    @property
    def rounds(self) -> int:
        return self._rounds
