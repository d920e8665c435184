"""Feed-forward ReLU network representation with exact evaluation.

The classifier being edited is a plain MLP: a chain of affine layers with a
ReLU gate after every hidden layer and a linear output (logits).  An optional
frozen feature map can sit in front of it; nothing in this package ever takes
gradients through the feature map.

Everything here is a pure function over immutable arrays, so concurrent use
is safe.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1


class ShapeError(ValueError):
    """Input or weight dimensions do not line up."""


class ModelParseError(ValueError):
    """A model file is malformed; the message names the offending field."""


class UnsupportedVersionError(ModelParseError):
    """The model file declares a format_version we do not understand."""


@dataclass(frozen=True)
class AffineLayer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray    # (out_dim,)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ShapeError(
                f"inconsistent layer shapes: weight {w.shape}, bias {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ShapeError("layer weights must be finite")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class MlpNetwork:
    """Affine layers with ReLU after every hidden layer, linear output."""

    layers: tuple[AffineLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("network needs at least one layer")
        for k in range(len(layers) - 1):
            if layers[k].out_dim != layers[k + 1].in_dim:
                raise ShapeError(
                    f"layer {k} out_dim {layers[k].out_dim} != "
                    f"layer {k + 1} in_dim {layers[k + 1].in_dim}")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(l.out_dim for l in self.layers[:-1])

    @property
    def gate_count(self) -> int:
        """Total number of ReLU gates (one per hidden neuron)."""
        return sum(self.hidden_widths)


@dataclass(frozen=True)
class FeatureMap:
    """Optional fixed preprocessor applied before the patched classifier.

    ``identity`` passes raw inputs straight through; ``frozen-network``
    runs them through an MlpNetwork whose weights are never touched.
    """

    kind: str = "identity"
    network: MlpNetwork | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "frozen-network"):
            raise ValueError(f"unknown feature map kind {self.kind!r}")
        if self.kind == "frozen-network" and self.network is None:
            raise ValueError("frozen-network feature map requires a network")

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return np.asarray(x, dtype=np.float64)
        return forward(self.network, x)

    def feature_dim(self, raw_dim: int) -> int:
        if self.kind == "identity":
            return raw_dim
        return self.network.output_dim


@dataclass(frozen=True)
class ActivationPattern:
    """On/off sign of every ReLU gate at one input, hidden layer by layer."""

    signs: np.ndarray           # uint8 vector, one bit per gate
    owner_shape: tuple[int, ...]  # hidden widths, for alignment checks

    def __eq__(self, other):
        return (isinstance(other, ActivationPattern)
                and self.owner_shape == other.owner_shape
                and np.array_equal(self.signs, other.signs))

    def __len__(self):
        return int(self.signs.shape[0])


def _check_input(net: MlpNetwork, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise ShapeError(
            f"input dim {x.shape[-1]} != network input dim {net.input_dim}")
    return x


def forward(net: MlpNetwork, x: np.ndarray) -> np.ndarray:
    """Exact logits; accepts a single vector or a batch (n, d)."""
    a = _check_input(net, x)
    for layer in net.layers[:-1]:
        a = np.maximum(a @ layer.weight.T + layer.bias, 0.0)
    last = net.layers[-1]
    return a @ last.weight.T + last.bias


def predict(net: MlpNetwork, x: np.ndarray) -> int | np.ndarray:
    """Argmax label; ties go to the smallest class index."""
    logits = forward(net, x)
    labels = np.argmax(logits, axis=-1)
    return int(labels) if logits.ndim == 1 else labels


def activation_pattern(net: MlpNetwork, x: np.ndarray) -> ActivationPattern:
    """Gate signs at ``x``; a pre-activation of exactly 0 counts as active."""
    a = _check_input(net, x)
    if a.ndim != 1:
        raise ShapeError("activation_pattern takes a single input vector")
    bits = []
    for layer in net.layers[:-1]:
        pre = layer.weight @ a + layer.bias
        bits.append((pre >= 0.0).astype(np.uint8))
        a = np.maximum(pre, 0.0)
    signs = np.concatenate(bits) if bits else np.zeros(0, dtype=np.uint8)
    return ActivationPattern(signs=signs, owner_shape=net.hidden_widths)


# --- serialization ---------------------------------------------------------
#
# Model file: one JSON text document.  Floats go through repr-style JSON
# serialization, which round-trips IEEE doubles exactly.

def _layer_to_dict(layer: AffineLayer) -> dict:
    return {"weight": layer.weight.tolist(), "bias": layer.bias.tolist()}


def _layer_from_dict(obj: dict, where: str) -> AffineLayer:
    for key in ("weight", "bias"):
        if key not in obj:
            raise ModelParseError(f"{where}: missing field {key!r}")
    try:
        return AffineLayer(np.array(obj["weight"], dtype=np.float64),
                           np.array(obj["bias"], dtype=np.float64))
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"{where}: {exc}") from exc


def _net_to_dict(net: MlpNetwork) -> dict:
    return {"layers": [_layer_to_dict(l) for l in net.layers]}


def _net_from_dict(obj: dict, where: str) -> MlpNetwork:
    if "layers" not in obj:
        raise ModelParseError(f"{where}: missing field 'layers'")
    layers = [_layer_from_dict(l, f"{where}.layers[{i}]")
              for i, l in enumerate(obj["layers"])]
    return MlpNetwork(tuple(layers))


def _featuremap_to_dict(fm: FeatureMap) -> dict:
    out = {"kind": fm.kind}
    if fm.network is not None:
        out["network"] = _net_to_dict(fm.network)
    return out


def _featuremap_from_dict(obj: dict) -> FeatureMap:
    if "kind" not in obj:
        raise ModelParseError("feature_map: missing field 'kind'")
    network = None
    if obj["kind"] == "frozen-network":
        if "network" not in obj:
            raise ModelParseError("feature_map: missing field 'network'")
        network = _net_from_dict(obj["network"], "feature_map.network")
    return FeatureMap(kind=obj["kind"], network=network)


def save_model(net: MlpNetwork, featuremap: FeatureMap, path,
               extra: dict | None = None) -> None:
    """Write the model as a single JSON document.

    ``extra`` lets callers (e.g. the patched-model serializer) attach
    additional top-level sections without inventing a second file format.
    """
    doc = {
        "format_version": FORMAT_VERSION,
        "feature_map": _featuremap_to_dict(featuremap),
        "network": _net_to_dict(net),
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def _load_doc(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelParseError("missing field 'format_version'")
    if doc["format_version"] != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"format_version {doc['format_version']!r} is not supported "
            f"(expected {FORMAT_VERSION})")
    return doc


def load_model(path) -> tuple[MlpNetwork, FeatureMap]:
    doc = _load_doc(path)
    if "network" not in doc:
        raise ModelParseError("missing field 'network'")
    if "feature_map" not in doc:
        raise ModelParseError("missing field 'feature_map'")
    net = _net_from_dict(doc["network"], "network")
    fm = _featuremap_from_dict(doc["feature_map"])
    return net, fm
