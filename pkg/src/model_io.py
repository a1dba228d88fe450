from __future__ import annotations
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from dimred import PcaModel
from helpers import f64_to_hex, hex_to_f64
from network import LAYER_NAMES, DenseLayer, MlpAdaptModel, forward_label, predict_batch
from spectra import NORMALIZERS, SpectraSet, get_normalizer

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
SUPPORTED_VERSIONS = {FORMAT_VERSION}
ORTHONORMAL_TOL = 1e-8


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Checkpoint:
    normalization: str
    reduction: PcaModel
    network: MlpAdaptModel
    meta: Dict[str, Any] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.normalization not in NORMALIZERS:
            raise CheckpointError(f"unknown normalization mode '{self.normalization}'")
        if self.reduction.k != self.network.input_dim:
            raise CheckpointError(
                f"dimension chain broken: reduction yields k={self.reduction.k}, "
                f"network expects {self.network.input_dim}")

    @property
    def dim(self) -> int:
        return self.reduction.dim


# ---------- Pipeline ----------
def reduce_set(c: Checkpoint, data: SpectraSet) -> SpectraSet:
    """Raw spectra -> normalized -> reduced, as seen by the network."""
    return c.reduction.transform_set(get_normalizer(c.normalization)(data))


def _reduce_matrix(c: Checkpoint, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    data = SpectraSet.from_arrays(X, n_classes=c.network.n_classes)
    return reduce_set(c, data).matrix()


def predict_proba(c: Checkpoint, X) -> np.ndarray:
    return forward_label(c.network, _reduce_matrix(c, X))


def predict(c: Checkpoint, X) -> np.ndarray:
    return predict_batch(c.network, _reduce_matrix(c, X))


# ---------- Encoding ----------
def _encode_meta(value):
    if isinstance(value, dict):
        return {str(k): _encode_meta(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode_meta(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return {"f64": f64_to_hex([float(value)])[0]}
    return value


def _decode_meta(value):
    if isinstance(value, dict):
        if set(value) == {"f64"}:
            return float(hex_to_f64([value["f64"]])[0])
        return {k: _decode_meta(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode_meta(v) for v in value]
    return value


def checkpoint_to_dict(c: Checkpoint) -> Dict[str, Any]:
    layers = {}
    for name, layer in c.network.layers().items():
        layers[name] = {
            "shape": [layer.n_out, layer.n_in],
            "weights": f64_to_hex(layer.weights),
            "bias": f64_to_hex(layer.bias),
        }
    return {
        "version": c.version,
        "normalization": c.normalization,
        "reduction": {
            "method": c.reduction.method,
            "shape": [c.reduction.k, c.reduction.dim],
            "mean": f64_to_hex(c.reduction.mean),
            "components": f64_to_hex(c.reduction.components),
        },
        "network": {
            "dropout_rate": f64_to_hex([c.network.dropout_rate])[0],
            "layers": layers,
        },
        "meta": _encode_meta(c.meta),
    }


def _shaped(codes, shape, what: str) -> np.ndarray:
    values = hex_to_f64(codes)
    expected = int(np.prod(shape))
    if values.size != expected:
        raise CheckpointError(f"{what}: shape {list(shape)} needs {expected} values, found {values.size}")
    return values.reshape(shape)


def checkpoint_from_dict(doc: Dict[str, Any]) -> Checkpoint:
    if not isinstance(doc, dict):
        raise CheckpointError("checkpoint document must be a JSON object")
    version = doc.get("version")
    if version not in SUPPORTED_VERSIONS:
        raise CheckpointError(f"unsupported checkpoint version {version!r}; supported: {sorted(SUPPORTED_VERSIONS)}")
    try:
        red = doc["reduction"]
        if red.get("method", "pca") != "pca":
            raise CheckpointError(f"unsupported reduction method '{red.get('method')}'")
        k, dim = (int(v) for v in red["shape"])
        reduction = PcaModel(
            mean=_shaped(red["mean"], (dim,), "reduction.mean"),
            components=_shaped(red["components"], (k, dim), "reduction.components"),
        )
        drift = float(np.abs(reduction.components @ reduction.components.T - np.eye(k)).max()) if k else 0.0
        if not drift < ORTHONORMAL_TOL:
            raise CheckpointError(f"reduction components are not orthonormal (max deviation {drift:.3g})")
        net = doc["network"]
        layers = {}
        for name in LAYER_NAMES:
            entry = net["layers"][name]
            n_out, n_in = (int(v) for v in entry["shape"])
            layers[name] = DenseLayer(
                _shaped(entry["weights"], (n_out, n_in), f"network.{name}.weights"),
                _shaped(entry["bias"], (n_out,), f"network.{name}.bias"),
            )
        network = MlpAdaptModel(dropout_rate=float(hex_to_f64([net["dropout_rate"]])[0]), **layers)
        return Checkpoint(
            normalization=doc["normalization"],
            reduction=reduction,
            network=network,
            meta=_decode_meta(doc.get("meta", {})),
            version=version,
        )
    except CheckpointError:
        raise
    except KeyError as e:
        raise CheckpointError(f"checkpoint is missing field {e}")
    except (ValueError, TypeError) as e:
        raise CheckpointError(f"invalid checkpoint: {e}")


def dumps_checkpoint(c: Checkpoint) -> str:
    return json.dumps(checkpoint_to_dict(c), sort_keys=True, indent=2) + "\n"


def save_checkpoint(c: Checkpoint, path: str) -> None:
    text = dumps_checkpoint(c)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    logger.info("saved checkpoint to %s (D=%d, k=%d)", path, c.reduction.dim, c.reduction.k)


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: truncated or malformed checkpoint ({e.msg} at line {e.lineno})")
    return checkpoint_from_dict(doc)
