from __future__ import annotations
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from spectra import SpectraSet

logger = logging.getLogger(__name__)

LAYER_NAMES = ("feature1", "feature2", "label_head", "domain_hidden", "domain_out")
SCHEDULES = ("ramp_up", "ramp_down")
_TINY = 1e-300

Grads = Dict[str, np.ndarray]


# ---------- Parameters ----------
@dataclass(eq=False)
class DenseLayer:
    weights: np.ndarray   # out x in
    bias: np.ndarray      # out

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64).ravel()
        if self.weights.ndim != 2 or self.bias.shape[0] != self.weights.shape[0]:
            raise ValueError(f"inconsistent layer shapes {self.weights.shape} / {self.bias.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.bias

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy())


@dataclass(eq=False)
class MlpAdaptModel:
    feature1: DenseLayer
    feature2: DenseLayer
    label_head: DenseLayer
    domain_hidden: DenseLayer
    domain_out: DenseLayer
    dropout_rate: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        h = self.feature1.n_out
        chain = [
            ("feature2", self.feature2, h),
            ("label_head", self.label_head, self.feature2.n_out),
            ("domain_hidden", self.domain_hidden, self.feature2.n_out),
            ("domain_out", self.domain_out, self.domain_hidden.n_out),
        ]
        for name, layer, n_in in chain:
            if layer.n_in != n_in:
                raise ValueError(f"{name} expects {layer.n_in} inputs, previous layer gives {n_in}")
        if self.domain_out.n_out != 2:
            raise ValueError("domain_out must have 2 outputs")

    @property
    def input_dim(self) -> int:
        return self.feature1.n_in

    @property
    def hidden(self) -> int:
        return self.feature1.n_out

    @property
    def n_classes(self) -> int:
        return self.label_head.n_out

    def layers(self) -> Dict[str, DenseLayer]:
        return {name: getattr(self, name) for name in LAYER_NAMES}

    def parameters(self) -> Dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers().items():
            out[f"{name}.weights"] = layer.weights
            out[f"{name}.bias"] = layer.bias
        return out

    def copy(self) -> "MlpAdaptModel":
        return MlpAdaptModel(**{n: l.copy() for n, l in self.layers().items()}, dropout_rate=self.dropout_rate)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 64
    grl_gamma: float = 10.0
    seed: int = 0
    dropout_rate: float = 0.25
    grl_schedule: str = "ramp_up"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not self.grl_gamma > 0:
            raise ValueError("grl_gamma must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.grl_schedule not in SCHEDULES:
            raise ValueError(f"grl_schedule must be one of {SCHEDULES}")


# ---------- Construction ----------
def _he_uniform(rng: np.random.Generator, n_out: int, n_in: int) -> DenseLayer:
    bound = math.sqrt(6.0 / n_in)
    return DenseLayer(rng.uniform(-bound, bound, size=(n_out, n_in)), np.zeros(n_out))


def init_model(input_dim: int, hidden: int = 64, n_classes: int = 12, seed: int = 0,
               dropout_rate: float = 0.25) -> MlpAdaptModel:
    if input_dim < 1 or hidden < 1 or n_classes < 1:
        raise ValueError("input_dim, hidden and n_classes must be positive")
    rng = np.random.default_rng(seed)
    return MlpAdaptModel(
        feature1=_he_uniform(rng, hidden, input_dim),
        feature2=_he_uniform(rng, hidden, hidden),
        label_head=_he_uniform(rng, n_classes, hidden),
        domain_hidden=_he_uniform(rng, hidden, hidden),
        domain_out=_he_uniform(rng, 2, hidden),
        dropout_rate=dropout_rate,
    )


# ---------- Forward ----------
def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(m: MlpAdaptModel, x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != m.input_dim:
        raise ValueError(f"dimension mismatch: model expects {m.input_dim} inputs, got {x.shape}")
    return X, single


def _dropout_mask(shape, rate: float, rng: Optional[np.random.Generator]) -> Optional[np.ndarray]:
    if rate <= 0.0:
        return None
    if rng is None:
        raise ValueError("train_mode with dropout needs a random stream")
    return (rng.random(shape) >= rate) / (1.0 - rate)


@dataclass
class _FeatureCache:
    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray        # after dropout
    mask1: Optional[np.ndarray]
    z2: np.ndarray
    out: np.ndarray       # after dropout
    mask2: Optional[np.ndarray]


def _features(m: MlpAdaptModel, X: np.ndarray, train_mode: bool, rng) -> _FeatureCache:
    rate = m.dropout_rate if train_mode else 0.0
    z1 = m.feature1(X)
    a1 = np.maximum(z1, 0.0)
    mask1 = _dropout_mask(a1.shape, rate, rng)
    if mask1 is not None:
        a1 = a1 * mask1
    z2 = m.feature2(a1)
    out = np.maximum(z2, 0.0)
    mask2 = _dropout_mask(out.shape, rate, rng)
    if mask2 is not None:
        out = out * mask2
    return _FeatureCache(X, z1, a1, mask1, z2, out, mask2)


def hidden_activations(m: MlpAdaptModel, x, train_mode: bool = False, rng=None, layer: int = 2) -> np.ndarray:
    """Output of hidden layer 1 or 2 after ReLU and (train mode) dropout."""
    if layer not in (1, 2):
        raise ValueError("layer must be 1 or 2")
    X, single = _check_input(m, x)
    cache = _features(m, X, train_mode, rng)
    out = cache.a1 if layer == 1 else cache.out
    return out[0] if single else out


def forward_label(m: MlpAdaptModel, x, train_mode: bool = False, rng=None) -> np.ndarray:
    X, single = _check_input(m, x)
    p = softmax(m.label_head(_features(m, X, train_mode, rng).out))
    return p[0] if single else p


def grl_forward(x: np.ndarray) -> np.ndarray:
    return x


def grl_backward(upstream_grad, lam: float) -> np.ndarray:
    return -lam * np.asarray(upstream_grad, dtype=np.float64)


def forward_domain(m: MlpAdaptModel, x, train_mode: bool = False, rng=None) -> np.ndarray:
    X, single = _check_input(m, x)
    g = grl_forward(_features(m, X, train_mode, rng).out)
    p = softmax(m.domain_out(np.maximum(m.domain_hidden(g), 0.0)))
    return p[0] if single else p


# ---------- Schedule ----------
def lambda_schedule(progress: float, gamma: float = 10.0) -> float:
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {progress}")
    return 2.0 / (1.0 + math.exp(-gamma * progress)) - 1.0


def epoch_progress(epoch: int, epochs: int) -> float:
    return 0.0 if epochs <= 1 else epoch / (epochs - 1)


def scheduled_lambda(epoch: int, cfg: TrainConfig) -> float:
    p = epoch_progress(epoch, cfg.epochs)
    if cfg.grl_schedule == "ramp_down":
        p = 1.0 - p
    return lambda_schedule(p, cfg.grl_gamma)


# ---------- Backward ----------
def _cross_entropy(p: np.ndarray, y: np.ndarray) -> float:
    return float(-np.mean(np.log(np.maximum(p[np.arange(y.shape[0]), y], _TINY))))


def _one_hot_grad(p: np.ndarray, y: np.ndarray, denom: int) -> np.ndarray:
    g = p.copy()
    g[np.arange(y.shape[0]), y] -= 1.0
    return g / denom


def _backprop_features(m: MlpAdaptModel, cache: _FeatureCache, d_out: np.ndarray, grads: Grads) -> None:
    if cache.mask2 is not None:
        d_out = d_out * cache.mask2
    dz2 = d_out * (cache.z2 > 0)
    grads["feature2.weights"] += dz2.T @ cache.a1
    grads["feature2.bias"] += dz2.sum(axis=0)
    da1 = dz2 @ m.feature2.weights
    if cache.mask1 is not None:
        da1 = da1 * cache.mask1
    dz1 = da1 * (cache.z1 > 0)
    grads["feature1.weights"] += dz1.T @ cache.x
    grads["feature1.bias"] += dz1.sum(axis=0)


def zero_grads(m: MlpAdaptModel) -> Grads:
    return {name: np.zeros_like(p) for name, p in m.parameters().items()}


def compute_grads(m: MlpAdaptModel, source_batch: Tuple[np.ndarray, np.ndarray],
                  target_batch: Optional[np.ndarray], lam: float, rng) -> Tuple[float, float, Grads]:
    """
    Label loss: mean cross-entropy over the source batch.
    Domain loss: mean cross-entropy of the domain head over source (0) and target (1) rows.
    Shared layers receive the label gradient plus the GRL-reversed domain gradient.
    """
    Xs, ys = source_batch
    Xs, _ = _check_input(m, Xs)
    ys = np.asarray(ys, dtype=np.int64).ravel()
    if Xs.shape[0] == 0:
        raise ValueError("source batch must not be empty")
    if ys.shape[0] != Xs.shape[0]:
        raise ValueError("source labels must match the source batch")
    if ys.min() < 0 or ys.max() >= m.n_classes:
        raise ValueError(f"labels must be in [0, {m.n_classes})")
    has_target = target_batch is not None and len(target_batch) > 0
    if has_target:
        Xt, _ = _check_input(m, target_batch)

    grads = zero_grads(m)
    # all source dropout draws come before any target draw
    src = _features(m, Xs, True, rng)
    tgt = _features(m, Xt, True, rng) if has_target else None

    p = softmax(m.label_head(src.out))
    label_loss = _cross_entropy(p, ys)
    dlogits = _one_hot_grad(p, ys, Xs.shape[0])
    grads["label_head.weights"] += dlogits.T @ src.out
    grads["label_head.bias"] += dlogits.sum(axis=0)
    d_src = dlogits @ m.label_head.weights

    domain_loss = 0.0
    d_tgt = None
    if has_target:
        n_dom = Xs.shape[0] + Xt.shape[0]
        d_src_dom, domain_loss_src = _domain_backward(m, src.out, 0, n_dom, grads)
        d_tgt_dom, domain_loss_tgt = _domain_backward(m, tgt.out, 1, n_dom, grads)
        domain_loss = domain_loss_src + domain_loss_tgt
        d_src = d_src + grl_backward(d_src_dom, lam)
        d_tgt = grl_backward(d_tgt_dom, lam)

    _backprop_features(m, src, d_src, grads)
    if d_tgt is not None:
        _backprop_features(m, tgt, d_tgt, grads)
    return label_loss, domain_loss, grads


def _domain_backward(m: MlpAdaptModel, feats: np.ndarray, domain: int, n_dom: int,
                     grads: Grads) -> Tuple[np.ndarray, float]:
    """Domain-head gradients for one block; returns (grad at the GRL output, loss share)."""
    g = grl_forward(feats)
    zd = m.domain_hidden(g)
    hd = np.maximum(zd, 0.0)
    pd = softmax(m.domain_out(hd))
    y = np.full(feats.shape[0], domain, dtype=np.int64)
    loss = float(-np.sum(np.log(np.maximum(pd[:, domain], _TINY))) / n_dom)
    dl = _one_hot_grad(pd, y, n_dom)
    grads["domain_out.weights"] += dl.T @ hd
    grads["domain_out.bias"] += dl.sum(axis=0)
    dzd = (dl @ m.domain_out.weights) * (zd > 0)
    grads["domain_hidden.weights"] += dzd.T @ g
    grads["domain_hidden.bias"] += dzd.sum(axis=0)
    return dzd @ m.domain_hidden.weights, loss


# ---------- Optimizer ----------
def sgd_step(m: MlpAdaptModel, grads: Grads, velocity: Optional[Grads], lr: float,
             momentum: float) -> Tuple[MlpAdaptModel, Grads]:
    """v <- momentum*v - lr*g ; w <- w + v, in place on m's arrays."""
    params = m.parameters()
    if velocity is None:
        velocity = zero_grads(m)
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {w.shape}")
        v = velocity[name]
        v *= momentum
        v -= lr * g
        w += v
    return m, velocity


# ---------- Training ----------
def _labeled_arrays(data: SpectraSet) -> Tuple[np.ndarray, np.ndarray]:
    if len(data) == 0:
        raise ValueError("labeled set must not be empty")
    if not data.all_labeled:
        raise ValueError("every sample must be labeled")
    return data.matrix(), data.labels()


def run_epochs(m: MlpAdaptModel, X: np.ndarray, y: np.ndarray, cfg: TrainConfig,
               target: Optional[np.ndarray] = None) -> Tuple[MlpAdaptModel, List[float], List[float]]:
    """
    Mini-batch SGD on a copy of m. Without target data: shuffled batches of
    batch_size over (X, y), lambda 0. With target data: every batch holds
    ceil(b/2) source rows and floor(b/2) target rows, lambda per the schedule.
    """
    model = replace(m.copy(), dropout_rate=cfg.dropout_rate)
    rng = np.random.default_rng(cfg.seed)
    velocity = zero_grads(model)
    n = X.shape[0]
    label_trace: List[float] = []
    domain_trace: List[float] = []
    use_target = target is not None and len(target) > 0
    b = cfg.batch_size
    s_quota = (b + 1) // 2 if use_target else b
    t_quota = b // 2
    for epoch in range(cfg.epochs):
        lam = scheduled_lambda(epoch, cfg) if use_target else 0.0
        perm = rng.permutation(n)
        if use_target:
            n_batches = max(1, math.ceil(n / s_quota))
            order = np.resize(perm, n_batches * s_quota).reshape(n_batches, s_quota)
        else:
            order = [perm[i:i + b] for i in range(0, n, b)]
        label_losses, domain_losses = [], []
        for idx in order:
            tb = None
            if use_target and t_quota > 0:
                pick = rng.choice(len(target), size=t_quota, replace=len(target) < t_quota)
                tb = target[pick]
            l_loss, d_loss, grads = compute_grads(model, (X[idx], y[idx]), tb, lam, rng)
            sgd_step(model, grads, velocity, cfg.learning_rate, cfg.momentum)
            label_losses.append(l_loss)
            domain_losses.append(d_loss)
        label_trace.append(float(np.mean(label_losses)))
        domain_trace.append(float(np.mean(domain_losses)))
        logger.debug("epoch %d/%d lambda=%.4f label=%.4f domain=%.4f",
                     epoch + 1, cfg.epochs, lam, label_trace[-1], domain_trace[-1])
    return model, label_trace, domain_trace


def train_supervised(m: MlpAdaptModel, labeled: SpectraSet, cfg: TrainConfig) -> Tuple[MlpAdaptModel, List[float]]:
    X, y = _labeled_arrays(labeled)
    if cfg.epochs == 0:
        return m.copy(), []
    model, trace, _ = run_epochs(m, X, y, cfg)
    logger.info("supervised training: %d epochs, final loss %.4f", cfg.epochs, trace[-1])
    return model, trace


# ---------- Inference ----------
def predict(m: MlpAdaptModel, x) -> int:
    p = forward_label(m, x, train_mode=False)
    if p.ndim != 1:
        raise ValueError("predict takes a single vector; use predict_batch")
    return int(np.argmax(p))


def predict_batch(m: MlpAdaptModel, X) -> np.ndarray:
    return np.argmax(forward_label(m, X, train_mode=False), axis=1)


def evaluate_accuracy(m: MlpAdaptModel, labeled: SpectraSet) -> float:
    X, y = _labeled_arrays(labeled)
    return float(np.mean(predict_batch(m, X) == y))
