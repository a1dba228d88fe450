from __future__ import annotations
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from spectra import SpectraSet, Spectrum

logger = logging.getLogger(__name__)

DEFAULT_K = 100
SYNTHETIC_K_CAP = 32


class ConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"eigen-solver did not converge in {iterations} iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


# ---------- Fitted model interface ----------
class ReductionModel(ABC):
    method: str

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    @abstractmethod
    def k(self) -> int: ...

    @abstractmethod
    def transform(self, s: Spectrum) -> Spectrum: ...

    def transform_set(self, data: SpectraSet) -> SpectraSet:
        if data.dim != self.dim:
            raise ValueError(f"dimension mismatch: set has D={data.dim}, model expects {self.dim}")
        X = self.transform_matrix(data.matrix())
        return SpectraSet.from_arrays(X, data.labels(), n_classes=data.n_classes)

    @abstractmethod
    def transform_matrix(self, X: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class PcaModel(ReductionModel):
    mean: np.ndarray
    components: np.ndarray
    method = "pca"

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).ravel()
        comps = np.array(self.components, dtype=np.float64)
        if comps.ndim != 2 or comps.shape[1] != mean.shape[0]:
            raise ValueError(f"components shape {comps.shape} does not match mean length {mean.shape[0]}")
        mean.setflags(write=False)
        comps.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def transform(self, s: Spectrum) -> Spectrum:
        return transform(self, s)

    def transform_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: expected (n, {self.dim}), got {X.shape}")
        return (X - self.mean) @ self.components.T

    def reconstruct(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z) @ self.components + self.mean


def default_k(n: int, dim: int) -> int:
    if dim >= DEFAULT_K + 1:
        return max(1, min(DEFAULT_K, n - 1))
    return max(1, min(n - 1, dim, SYNTHETIC_K_CAP))


# ---------- Eigen-solver ----------
def _block_power(A: np.ndarray, k: int, *, max_iter: int, tol: float, oversample: int,
                 rng: np.random.Generator) -> np.ndarray:
    """
    Leading k eigenvectors (columns) of the symmetric PSD matrix A.
    Block power iteration with a Rayleigh-Ritz rotation per step; leading
    directions are locked (deflated) once successive estimates agree within tol.
    """
    d = A.shape[0]
    b = min(d, k + max(oversample, k // 4))
    Q, _ = np.linalg.qr(rng.standard_normal((d, b)))
    scale = float(np.trace(A)) / d
    # keeps null-space columns alive (and orthogonal) when A is rank deficient
    shift = 1e-12 * scale if scale > 0 else 1.0
    null_floor = 1e-10 * max(float(np.trace(A)), 0.0)
    locked = 0
    residual = np.inf
    for it in range(1, max_iter + 1):
        active = Q[:, locked:]
        Z = A @ active + shift * active
        if locked:
            L = Q[:, :locked]
            Z -= L @ (L.T @ Z)
        Qa, _ = np.linalg.qr(Z)
        if locked:
            L = Q[:, :locked]
            Qa -= L @ (L.T @ Qa)
            Qa, _ = np.linalg.qr(Qa)
        H = Qa.T @ (A @ Qa)
        w, V = np.linalg.eigh((H + H.T) / 2)
        Qa = Qa @ V[:, ::-1]
        # align signs so successive estimates are comparable
        signs = np.sign(np.sum(Qa * active, axis=0))
        signs[signs == 0] = 1.0
        Qa *= signs
        diffs = np.linalg.norm(Qa - active, axis=0)
        # negligible-variance directions: any orthonormal basis of them is valid
        diffs[w[::-1] <= null_floor] = 0.0
        Q[:, locked:] = Qa
        want = k - locked
        newly = 0
        while newly < want and diffs[newly] < tol:
            newly += 1
        locked += newly
        residual = float(diffs[:want].max()) if want > newly else 0.0
        if locked >= k:
            logger.debug("eigen-solver converged after %d iterations", it)
            return Q[:, :k]
    raise ConvergenceError(residual, max_iter)


def _fix_signs(components: np.ndarray) -> np.ndarray:
    out = components.copy()
    for j in range(out.shape[0]):
        pivot = int(np.argmax(np.abs(out[j])))
        if out[j, pivot] < 0:
            out[j] = -out[j]
    return out


def _complete_basis(U: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace unusable columns of U (D x k) with unit vectors orthogonal to the rest."""
    d, k = U.shape
    basis = [U[:, j] for j in range(k) if good[j]]
    out = U.copy()
    candidates = iter(np.eye(d))
    for j in range(k):
        if good[j]:
            continue
        for e in candidates:
            v = e - sum(np.dot(e, q) * q for q in basis) if basis else e.copy()
            norm = np.linalg.norm(v)
            if norm > 1e-6:
                v /= norm
                basis.append(v)
                out[:, j] = v
                break
    return out


def fit_pca(data: SpectraSet, k: int, max_iter: int = 2000, tol: float = 1e-6,
            seed: int = 0, oversample: int = 8) -> PcaModel:
    n = len(data)
    if n == 0:
        raise ValueError("cannot fit PCA on an empty set")
    D = data.dim
    if k < 1 or k > min(n - 1, D):
        raise ValueError(f"k must be in [1, min(n-1, D)] = [1, {min(n - 1, D)}], got {k}")
    X = data.matrix()
    mean = X.mean(axis=0)
    Xc = X - mean
    rng = np.random.default_rng(seed)
    if D <= n:
        C = (Xc.T @ Xc) / (n - 1)
        U = _block_power(C, k, max_iter=max_iter, tol=tol, oversample=oversample, rng=rng)
    else:
        # wide data: eigenvectors of the n x n Gram matrix mapped back through Xc^T
        G = (Xc @ Xc.T) / (n - 1)
        W = _block_power(G, k, max_iter=max_iter, tol=tol, oversample=oversample, rng=rng)
        U = Xc.T @ W
        norms = np.linalg.norm(U, axis=0)
        good = norms > 1e-12 * max(1.0, float(norms.max()) if norms.size else 1.0)
        U[:, good] /= norms[good]
        if not good.all():
            U = _complete_basis(U, good)
        U, R = np.linalg.qr(U)
        signs = np.sign(np.diag(R))
        signs[signs == 0] = 1.0
        U *= signs
    components = _fix_signs(U.T)
    logger.info("fitted PCA: D=%d -> k=%d on %d spectra", D, k, n)
    return PcaModel(mean=mean, components=components)


def transform(m: PcaModel, s: Spectrum) -> Spectrum:
    if s.dim != m.dim:
        raise ValueError(f"dimension mismatch: spectrum has D={s.dim}, model expects {m.dim}")
    return Spectrum(m.components @ (s.intensities - m.mean), s.label)


def explained_variance(m: PcaModel, data: SpectraSet) -> List[float]:
    """Sample variance of the centered data projected on each component (component order)."""
    if len(data) == 0:
        raise ValueError("explained_variance needs a nonempty set")
    if data.dim != m.dim:
        raise ValueError(f"dimension mismatch: set has D={data.dim}, model expects {m.dim}")
    P = m.transform_matrix(data.matrix())
    ddof = 1 if P.shape[0] > 1 else 0
    return [float(v) for v in P.var(axis=0, ddof=ddof)]


def reconstruction_error(m: PcaModel, data: SpectraSet) -> float:
    X = data.matrix()
    R = m.reconstruct(m.transform_matrix(X))
    return float(np.mean((X - R) ** 2))


# ---------- Strategy interface ----------
class ReductionStrategy(ABC):
    name: str

    @abstractmethod
    def fit(self, data: SpectraSet, k: int) -> ReductionModel:
        """Fit once on the offline training set; the result stays frozen."""


class PcaStrategy(ReductionStrategy):
    name = "pca"

    def __init__(self, max_iter: int = 2000, tol: float = 1e-6, seed: int = 0, oversample: int = 8):
        self.max_iter = max_iter
        self.tol = tol
        self.seed = seed
        self.oversample = oversample

    def fit(self, data: SpectraSet, k: int) -> PcaModel:
        return fit_pca(data, k, max_iter=self.max_iter, tol=self.tol, seed=self.seed,
                       oversample=self.oversample)


# ---------- registry ----------
class StrategyRegistry:
    def __init__(self):
        self._by_name: dict[str, ReductionStrategy] = {}

    def register(self, strategy: ReductionStrategy) -> None:
        self._by_name[strategy.name] = strategy

    def get(self, name: str) -> ReductionStrategy:
        try:
            return self._by_name[name]
        except KeyError:
            raise ValueError(f"Unsupported reduction '{name}'. Supported: {', '.join(sorted(self._by_name))}")

    def names(self) -> List[str]:
        return sorted(self._by_name)


registry = StrategyRegistry()
registry.register(PcaStrategy())


def make_strategy(name: str = "pca", *, seed: int = 0, max_iter: Optional[int] = None,
                  tol: Optional[float] = None, oversample: Optional[int] = None) -> ReductionStrategy:
    """A configured copy of a registered strategy."""
    base = registry.get(name)
    if isinstance(base, PcaStrategy):
        return PcaStrategy(
            max_iter=base.max_iter if max_iter is None else max_iter,
            tol=base.tol if tol is None else tol,
            seed=seed,
            oversample=base.oversample if oversample is None else oversample,
        )
    return base
