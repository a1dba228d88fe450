from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from helpers import derive_seed
from spectra import DEFAULT_CLASSES, SpectraSet

logger = logging.getLogger(__name__)

DEFAULT_DIM = 1024
LINE_POOL_SIZE = 48
MIN_LINES, MAX_LINES = 5, 10
MAX_OVERLAP = 0.5
MAX_RETRIES = 1000


class SpecGenerationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ClassLines:
    centers: np.ndarray
    amplitudes: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        for name in ("centers", "amplitudes", "widths"):
            arr = np.array(getattr(self, name), dtype=np.float64).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.centers.shape == self.amplitudes.shape == self.widths.shape):
            raise ValueError("line table columns must have equal length")

    def __len__(self) -> int:
        return self.centers.shape[0]


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    lines: Tuple[ClassLines, ...]
    dim: int = DEFAULT_DIM
    baseline: float = 0.5
    noise_sigma: float = 0.02
    shot_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))
        if len(self.lines) < 2:
            raise ValueError("a generator needs at least 2 classes")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        for c, table in enumerate(self.lines):
            if len(table) == 0:
                raise ValueError(f"class {c} has no emission lines")
            if np.any(table.centers < 0) or np.any(table.centers >= self.dim):
                raise ValueError(f"class {c}: line centers must lie in [0, {self.dim})")
            if np.any(table.amplitudes <= 0) or np.any(table.widths <= 0):
                raise ValueError(f"class {c}: amplitudes and widths must be positive")
        if self.baseline < 0 or self.noise_sigma < 0 or self.shot_sigma < 0:
            raise ValueError("baseline, noise_sigma and shot_sigma must be >= 0")

    @property
    def n_classes(self) -> int:
        return len(self.lines)


@dataclass(frozen=True)
class ShiftSpec:
    amplitude_scale_range: Tuple[float, float] = (0.5, 1.5)
    baseline_offset: float = 0.1
    extra_noise_sigma: float = 0.05
    center_jitter: float = 3.0

    def __post_init__(self):
        lo, hi = self.amplitude_scale_range
        if lo < 0 or hi < lo:
            raise ValueError(f"amplitude_scale_range must satisfy 0 <= lo <= hi, got {self.amplitude_scale_range}")
        if self.baseline_offset < 0 or self.extra_noise_sigma < 0 or self.center_jitter < 0:
            raise ValueError("shift magnitudes must be >= 0")


DEFAULT_SHIFT = ShiftSpec()

Domain = Union[None, str, ShiftSpec]


def _line_overlap(a: np.ndarray, b: np.ndarray) -> float:
    shared = np.intersect1d(a, b).size
    return shared / min(a.size, b.size)


def default_spec(seed: int, n_classes: int = DEFAULT_CLASSES, dim: int = DEFAULT_DIM,
                 pool_size: int = LINE_POOL_SIZE, max_retries: int = MAX_RETRIES) -> GeneratorSpec:
    """
    Classes draw their lines from a shared pool of element-like positions, so
    classes overlap partially the way minerals share elements.
    """
    if dim < 2 * pool_size:
        raise ValueError(f"dim {dim} too small for a pool of {pool_size} lines")
    rng = np.random.default_rng(seed)
    margin = max(4, dim // 64)
    pool = np.sort(rng.choice(np.arange(margin, dim - margin), size=pool_size, replace=False))
    pool_widths = rng.uniform(0.7, 2.1, size=pool_size)

    chosen = []
    tables = []
    for c in range(n_classes):
        for _ in range(max_retries):
            n_lines = int(rng.integers(MIN_LINES, MAX_LINES + 1))
            idx = np.sort(rng.choice(pool_size, size=n_lines, replace=False))
            if all(_line_overlap(idx, other) < MAX_OVERLAP for other in chosen):
                break
        else:
            raise SpecGenerationError(f"could not draw class {c} within {max_retries} retries")
        chosen.append(idx)
        tables.append(ClassLines(pool[idx], rng.uniform(0.1, 1.0, size=n_lines), pool_widths[idx]))
    logger.debug("generator spec: %d classes, D=%d, seed=%d", n_classes, dim, seed)
    return GeneratorSpec(tuple(tables), dim=dim, seed=seed)


def _resolve_domain(domain: Domain) -> Optional[ShiftSpec]:
    if domain is None or domain == "source":
        return None
    if domain in ("shifted", "default"):
        return DEFAULT_SHIFT
    if isinstance(domain, ShiftSpec):
        return domain
    raise ValueError(f"Unsupported domain '{domain}'. Supported: source, shifted")


def generate(spec: GeneratorSpec, n: int, domain: Domain = None, seed: int = 0, *,
             start: int = 0) -> SpectraSet:
    """Labeled raw spectra; labels run round-robin from class start % n_classes."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    shift = _resolve_domain(domain)
    rng = np.random.default_rng(seed)
    grid = np.arange(spec.dim, dtype=np.float64)
    continuum = spec.baseline * (1.0 - 0.5 * grid / spec.dim)
    labels = (start + np.arange(n)) % spec.n_classes
    X = np.empty((n, spec.dim))
    for row, label in enumerate(labels):
        table = spec.lines[label]
        amps = table.amplitudes.copy()
        centers = table.centers.copy()
        if spec.shot_sigma > 0:
            # unit-mean lognormal
            amps *= rng.lognormal(-0.5 * spec.shot_sigma ** 2, spec.shot_sigma, size=len(table))
        background = continuum
        if shift is not None:
            lo, hi = shift.amplitude_scale_range
            amps *= rng.uniform(lo, hi, size=len(table))
            if shift.center_jitter > 0:
                centers = centers + rng.uniform(-shift.center_jitter, shift.center_jitter)
            background = continuum + shift.baseline_offset
        profile = amps[:, None] * np.exp(-((grid[None, :] - centers[:, None]) ** 2)
                                         / (2.0 * table.widths[:, None] ** 2))
        x = profile.sum(axis=0) + background
        if spec.noise_sigma > 0:
            x = x + rng.normal(0.0, spec.noise_sigma, size=spec.dim)
        if shift is not None and shift.extra_noise_sigma > 0:
            x = x + rng.normal(0.0, shift.extra_noise_sigma, size=spec.dim)
        X[row] = x
    return SpectraSet.from_arrays(X, labels, n_classes=spec.n_classes)


def generate_drift_stream(spec: GeneratorSpec, n: int, shift_start: int,
                          shift: ShiftSpec = DEFAULT_SHIFT, seed: int = 0) -> SpectraSet:
    """Source-domain samples before shift_start, shifted-domain samples from there on."""
    if not 0 <= shift_start <= n:
        raise ValueError(f"shift_start must be in [0, {n}], got {shift_start}")
    parts = []
    if shift_start > 0:
        parts.append(generate(spec, shift_start, None, derive_seed(seed, 0)))
    if n - shift_start > 0:
        parts.append(generate(spec, n - shift_start, shift, derive_seed(seed, 1), start=shift_start))
    spectra = [s for part in parts for s in part]
    return SpectraSet(spectra, dim=spec.dim, n_classes=spec.n_classes)
