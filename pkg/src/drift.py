from __future__ import annotations
import logging
import math
from dataclasses import dataclass

import numpy as np

from spectra import SpectraSet, Spectrum, normalize_set

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.01
_SERIES_EPS = 1e-12
_SERIES_MAX_TERMS = 1000


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n: int
    m: int


def _as_sample(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError(f"sample {name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"sample {name} contains non-finite values")
    return arr


def kolmogorov_q(lam: float) -> float:
    """Q(lam) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lam^2), clamped to [0, 1]."""
    if lam < 0.2:
        # 1 - Q(0.2) is below 1e-12
        return 1.0
    total = 0.0
    sign = 1.0
    for j in range(1, _SERIES_MAX_TERMS + 1):
        term = 2.0 * math.exp(-2.0 * j * j * lam * lam)
        total += sign * term
        if term < _SERIES_EPS:
            break
        sign = -sign
    return min(1.0, max(0.0, total))


def ks_two_sample(a, b) -> KsResult:
    a = np.sort(_as_sample(a, "a"))
    b = np.sort(_as_sample(b, "b"))
    n, m = a.size, b.size
    # ECDFs differ only at sample points; evaluate both at every merged value
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / n
    cdf_b = np.searchsorted(b, grid, side="right") / m
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    n_e = n * m / (n + m)
    root = math.sqrt(n_e)
    lam = (root + 0.12 + 0.11 / root) * stat
    return KsResult(statistic=stat, p_value=kolmogorov_q(lam), n=n, m=m)


def detect_shift(r: KsResult, alpha: float = DEFAULT_ALPHA) -> bool:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return r.p_value < alpha


def spectrum_shift(a: Spectrum, b: Spectrum) -> KsResult:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return ks_two_sample(a.intensities, b.intensities)


def pooled_shift(a: SpectraSet, b: SpectraSet, *, normalize: bool = True) -> KsResult:
    """All intensities of each set pooled into one sample; raw when normalize is False."""
    if normalize:
        a, b = normalize_set(a), normalize_set(b)
    result = ks_two_sample(a.matrix().ravel(), b.matrix().ravel())
    logger.debug("pooled KS: D=%.6f p=%.3g (n=%d, m=%d)", result.statistic, result.p_value, result.n, result.m)
    return result
