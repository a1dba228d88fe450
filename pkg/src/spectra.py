from __future__ import annotations
import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

UNLABELED = -1
DEFAULT_CLASSES = 12


class SpectraParseError(ValueError):
    def __init__(self, message: str, *, row: Optional[int] = None, line: Optional[int] = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.line = line


# ---------- Data model ----------
@dataclass(frozen=True, eq=False)
class Spectrum:
    intensities: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        arr = np.array(self.intensities, dtype=np.float64).ravel()
        arr.setflags(write=False)
        object.__setattr__(self, "intensities", arr)
        if self.label is not None:
            if int(self.label) < 0:
                raise ValueError(f"label must be non-negative, got {self.label}")
            object.__setattr__(self, "label", int(self.label))

    @property
    def dim(self) -> int:
        return self.intensities.shape[0]

    @property
    def is_labeled(self) -> bool:
        return self.label is not None


@dataclass(frozen=True, eq=False)
class SpectraSet:
    spectra: Sequence[Spectrum]
    dim: int
    n_classes: int = DEFAULT_CLASSES
    wavelengths: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "spectra", tuple(self.spectra))
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        for idx, s in enumerate(self.spectra):
            if s.dim != self.dim:
                raise ValueError(f"spectrum {idx} has dim {s.dim}, expected {self.dim}")
            if s.label is not None and s.label >= self.n_classes:
                raise ValueError(f"spectrum {idx} label {s.label} >= n_classes {self.n_classes}")
        if self.wavelengths is not None:
            wl = np.array(self.wavelengths, dtype=np.float64).ravel()
            if wl.shape[0] != self.dim:
                raise ValueError("wavelengths length must equal dim")
            wl.setflags(write=False)
            object.__setattr__(self, "wavelengths", wl)

    def __len__(self) -> int:
        return len(self.spectra)

    def __iter__(self) -> Iterator[Spectrum]:
        return iter(self.spectra)

    def __getitem__(self, idx: int) -> Spectrum:
        return self.spectra[idx]

    @classmethod
    def from_arrays(cls, X, labels=None, n_classes: int = DEFAULT_CLASSES, wavelengths=None) -> "SpectraSet":
        """labels: None, or a sequence where -1 marks an unlabeled row."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be a 2-D array (n, D)")
        if labels is None:
            labels = [UNLABELED] * X.shape[0]
        labels = list(labels)
        if len(labels) != X.shape[0]:
            raise ValueError("labels length must match the number of rows")
        spectra = [Spectrum(row, None if int(y) == UNLABELED else int(y)) for row, y in zip(X, labels)]
        return cls(spectra, dim=X.shape[1], n_classes=n_classes, wavelengths=wavelengths)

    def matrix(self) -> np.ndarray:
        if not self.spectra:
            return np.zeros((0, self.dim))
        return np.vstack([s.intensities for s in self.spectra])

    def labels(self) -> np.ndarray:
        return np.array([UNLABELED if s.label is None else s.label for s in self.spectra], dtype=np.int64)

    def subset(self, indices) -> "SpectraSet":
        return SpectraSet([self.spectra[int(i)] for i in indices], dim=self.dim,
                          n_classes=self.n_classes, wavelengths=self.wavelengths)

    def unlabeled(self) -> "SpectraSet":
        return SpectraSet([Spectrum(s.intensities) for s in self.spectra], dim=self.dim,
                          n_classes=self.n_classes, wavelengths=self.wavelengths)

    @property
    def all_labeled(self) -> bool:
        return all(s.label is not None for s in self.spectra)


# ---------- CSV ingestion ----------
def _parse_wavelengths(names: List[str]) -> Optional[np.ndarray]:
    values = []
    for pos, name in enumerate(names):
        token = name[2:] if name.startswith("w_") else name
        try:
            v = float(token)
        except ValueError:
            return None
        values.append(v)
    # w_0, w_1, ... are plain column indices, not wavelengths
    if all(n == f"w_{pos}" for pos, n in enumerate(names)):
        return None
    return np.array(values)


def load_spectra(path: str, n_classes: int = DEFAULT_CLASSES) -> SpectraSet:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SpectraParseError("missing header", line=1)
        if not header or header[0].strip() != "label" or len(header) < 2:
            raise SpectraParseError("header must be 'label,w_0,...,w_{D-1}'", line=1)
        names = [h.strip() for h in header[1:]]
        dim = len(names)
        spectra: List[Spectrum] = []
        for row_no, row in enumerate(reader, start=1):
            line = row_no + 1
            if not row:
                continue
            if len(row) != dim + 1:
                raise SpectraParseError(f"expected {dim + 1} fields, got {len(row)}", row=row_no, line=line)
            try:
                label = int(row[0])
            except ValueError:
                raise SpectraParseError(f"non-integer label {row[0]!r}", row=row_no, line=line)
            if label < UNLABELED or label >= n_classes:
                raise SpectraParseError(f"label {label} outside [0, {n_classes}) and not -1", row=row_no, line=line)
            try:
                values = [float(cell) for cell in row[1:]]
            except ValueError as e:
                raise SpectraParseError(f"non-numeric intensity: {e}", row=row_no, line=line)
            if not all(math.isfinite(v) for v in values):
                raise SpectraParseError("non-finite intensity", row=row_no, line=line)
            spectra.append(Spectrum(values, None if label == UNLABELED else label))
    logger.debug("loaded %d spectra (D=%d) from %s", len(spectra), dim, path)
    return SpectraSet(spectra, dim=dim, n_classes=n_classes, wavelengths=_parse_wavelengths(names))


def save_spectra(data: SpectraSet, path: str) -> None:
    if data.wavelengths is not None:
        names = [repr(float(w)) for w in data.wavelengths]
    else:
        names = [f"w_{i}" for i in range(data.dim)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", *names])
        for s in data:
            writer.writerow([UNLABELED if s.label is None else s.label, *(repr(float(v)) for v in s.intensities)])


# ---------- Preprocessing ----------
def min_max_normalize(s: Spectrum) -> Spectrum:
    x = s.intensities
    if x.shape[0] < 1:
        raise ValueError("cannot normalize an empty spectrum")
    if not np.all(np.isfinite(x)):
        raise ValueError("spectrum contains non-finite values")
    lo = x.min()
    hi = x.max()
    if hi == lo:
        return Spectrum(np.zeros_like(x), s.label)
    with np.errstate(over="ignore"):
        span = hi - lo
    if not np.isfinite(span):
        # range overflows float64; halving is exact for normal values
        x, lo, hi = x / 2, lo / 2, hi / 2
    return Spectrum(np.clip((x - lo) / (hi - lo), 0.0, 1.0), s.label)


def normalize_set(data: SpectraSet) -> SpectraSet:
    return SpectraSet([min_max_normalize(s) for s in data], dim=data.dim,
                      n_classes=data.n_classes, wavelengths=data.wavelengths)


# normalization modes recorded in checkpoints
NORMALIZERS = {
    "minmax": normalize_set,
    "none": lambda data: data,
}


def get_normalizer(name: str):
    try:
        return NORMALIZERS[name]
    except KeyError:
        raise ValueError(f"Unsupported normalization '{name}'. Supported: {', '.join(sorted(NORMALIZERS))}")


# ---------- Splitting ----------
def _largest_remainder(n: int, fractions: Sequence[float]) -> List[int]:
    exact = [n * f for f in fractions]
    sizes = [int(math.floor(e)) for e in exact]
    short = n - sum(sizes)
    # ties go to the earlier partition
    order = sorted(range(len(fractions)), key=lambda j: (-(exact[j] - sizes[j]), j))
    for j in order[:short]:
        sizes[j] += 1
    return sizes


def split(data: SpectraSet, fractions: Sequence[float], seed: int) -> List[SpectraSet]:
    if not fractions:
        raise ValueError("fractions must not be empty")
    if any(f < 0 for f in fractions):
        raise ValueError("fractions must be non-negative")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(data)
    perm = np.random.default_rng(seed).permutation(n)
    parts = []
    start = 0
    for size in _largest_remainder(n, fractions):
        parts.append(data.subset(perm[start:start + size]))
        start += size
    return parts
