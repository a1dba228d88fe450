from __future__ import annotations
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Optional, Union

import yaml

from network import TrainConfig


class Config:
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", 0))

    # Reduction stage (PCA eigen-solver)
    PCA_MAX_ITER = int(os.getenv("PCA_MAX_ITER", 2000))
    PCA_TOL = float(os.getenv("PCA_TOL", 1e-6))
    PCA_OVERSAMPLE = int(os.getenv("PCA_OVERSAMPLE", 8))

    # Run records: any SQLAlchemy URL, e.g. "sqlite:///runs.db"; unset disables recording
    RESULTS_DATABASE_URL = os.getenv("RESULTS_DATABASE_URL")

    # Worker threads for sweep-style invocations
    DEFAULT_JOBS = int(os.getenv("DEFAULT_JOBS", 1))


# ---------- Experiment configuration (i / L / U) ----------
@dataclass
class ExperimentConfig:
    i: int = 2000
    L: Union[float, int] = 1.0
    U: int = 100
    chunk_size: int = 500
    n_chunks: int = 10
    k: Optional[int] = None
    hidden: int = 64
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=100))
    retrain: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=30))
    data: Optional[str] = None
    seed: int = Config.DEFAULT_SEED

    def __post_init__(self):
        if self.i < 1:
            raise ValueError("i must be positive")
        if self.U < 1:
            raise ValueError("U must be a positive integer")
        if self.chunk_size < 1 or self.n_chunks < 1:
            raise ValueError("chunk_size and n_chunks must be positive")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.L > 1 and self.L > self.i:
            raise ValueError(f"L ({self.L}) cannot exceed i ({self.i})")

    @property
    def lltm_fraction(self) -> float:
        """L as a fraction of i; values <= 1 are already fractions."""
        if self.L <= 1:
            return float(self.L)
        return float(self.L) / float(self.i)


_TOP_KEYS = {"i", "L", "U", "chunk_size", "n_chunks", "k", "hidden", "data", "seed"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def experiment_from_mapping(values: Dict[str, Any], base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """
    Flat keys: ExperimentConfig fields, TrainConfig fields for offline training
    (e.g. "epochs") and the same names prefixed with "retrain_" for retraining.
    """
    cfg = base or ExperimentConfig()
    top: Dict[str, Any] = {}
    train: Dict[str, Any] = {}
    retrain: Dict[str, Any] = {}
    for key, value in values.items():
        if value is None:
            continue
        if key in _TOP_KEYS:
            top[key] = value
        elif key in _TRAIN_KEYS:
            train[key] = value
        elif key.startswith("retrain_") and key[len("retrain_"):] in _TRAIN_KEYS:
            retrain[key[len("retrain_"):]] = value
        else:
            raise ValueError(f"Unknown config key '{key}'")
    return replace(
        cfg,
        train=replace(cfg.train, **train) if train else cfg.train,
        retrain=replace(cfg.retrain, **retrain) if retrain else cfg.retrain,
        **top,
    )


def load_experiment_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """File values first, then overrides (command-line flags) on top."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config file must be a flat key/value mapping")
    cfg = experiment_from_mapping(data)
    if overrides:
        cfg = experiment_from_mapping(overrides, base=cfg)
    return cfg
