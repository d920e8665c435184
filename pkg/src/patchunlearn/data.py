"""Dataset ingestion, synthetic fixtures, and deterministic MLP training."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .network import AffineLayer, MlpNetwork, forward

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataParseError(ValueError):
    """Malformed dataset file; message carries the offending location."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the epoch index."""


@dataclass
class Dataset:
    features: np.ndarray     # (n, d) float64
    labels: np.ndarray       # (n,) int64, values in [0, L)
    split: str = "train"     # "train" or "test"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.features.shape[0]} feature rows vs "
                f"{self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.split)

    def feature_bounds(self):
        return self.features.min(axis=0), self.features.max(axis=0)


def domain_box_for(dataset: Dataset, pad: float = 0.05,
                   unit_box: bool = False):
    """Bounding box for region work: dataset min/max padded, or [0,1]^d
    for raw pixel inputs."""
    if unit_box:
        d = dataset.dim
        return np.zeros(d), np.ones(d)
    lo, hi = dataset.feature_bounds()
    span = np.maximum(hi - lo, 1e-9)
    return lo - pad * span, hi + pad * span


# --- IDX (big-endian image/label files) ------------------------------------

def _read_exact(fh, count: int, path, offset: int) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise DataParseError(
            f"{path}: truncated at byte {offset + len(buf)} "
            f"(wanted {count} bytes)")
    return buf


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair; pixels scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        head = _read_exact(fh, 16, images_path, 0)
        magic, n, rows, cols = struct.unpack(">IIII", head)
        if magic != IDX_IMAGES_MAGIC:
            raise DataParseError(
                f"{images_path}: bad magic 0x{magic:08x} at byte 0 "
                f"(expected 0x{IDX_IMAGES_MAGIC:08x})")
        raw = _read_exact(fh, n * rows * cols, images_path, 16)
    images = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols)
    with open(labels_path, "rb") as fh:
        head = _read_exact(fh, 8, labels_path, 0)
        magic, n_labels = struct.unpack(">II", head)
        if magic != IDX_LABELS_MAGIC:
            raise DataParseError(
                f"{labels_path}: bad magic 0x{magic:08x} at byte 0 "
                f"(expected 0x{IDX_LABELS_MAGIC:08x})")
        raw = _read_exact(fh, n_labels, labels_path, 8)
    labels = np.frombuffer(raw, dtype=np.uint8)
    if n != n_labels:
        raise DataParseError(
            f"{images_path} has {n} images but {labels_path} has "
            f"{n_labels} labels")
    return Dataset(images.astype(np.float64) / 255.0,
                   labels.astype(np.int64))


# --- CSV --------------------------------------------------------------------

@dataclass
class StandardizeStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.std


def load_csv(path, label_column: int, stats: StandardizeStats | None = None,
             has_header: bool | None = None, split: str = "train"):
    """Load a rectangular numeric CSV into a standardized Dataset.

    Columns are standardized to zero mean / unit variance; pass the
    ``stats`` from the train split when loading a test split so both use
    the same statistics.  Returns (dataset, stats).
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DataParseError(f"{path}: empty file")
    start = 0
    if has_header is None:
        # auto: header if first row has any non-numeric cell
        try:
            [float(c) for c in lines[0].split(",")]
        except ValueError:
            start = 1
    elif has_header:
        start = 1
    width = None
    for i, line in enumerate(lines[start:], start=start):
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise DataParseError(
                f"{path}: row {i} has {len(cells)} cells, expected {width}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise DataParseError(f"{path}: row {i}: {exc}") from exc
    data = np.array(rows, dtype=np.float64)
    if not -data.shape[1] <= label_column < data.shape[1]:
        raise DataParseError(
            f"{path}: label column {label_column} out of range "
            f"for {data.shape[1]} columns")
    labels = data[:, label_column].astype(np.int64)
    features = np.delete(data, label_column % data.shape[1], axis=1)
    if stats is None:
        std = features.std(axis=0)
        std[std == 0.0] = 1.0
        stats = StandardizeStats(mean=features.mean(axis=0), std=std)
    return Dataset(stats.apply(features), labels, split), stats


def save_csv(dataset: Dataset, path) -> None:
    """Canonical cache format: label first, then features, full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in zip(dataset.features, dataset.labels):
            fh.write(",".join([str(int(y))] + [repr(float(v)) for v in x])
                     + "\n")


def load_canonical_csv(path, split: str = "train") -> Dataset:
    ds, _ = load_csv(path, label_column=0,
                     stats=StandardizeStats(mean=0.0, std=1.0), split=split)
    return ds


# --- synthetic fixture ------------------------------------------------------

def _class_means(n_classes: int, dim: int, rng) -> np.ndarray:
    radius = 3.0
    if n_classes <= dim:
        # mutually orthogonal directions via QR of a seeded Gaussian
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        return radius * q[:, :n_classes].T
    if dim >= 2:
        angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
        means = np.zeros((n_classes, dim))
        means[:, 0] = radius * np.cos(angles)
        means[:, 1] = radius * np.sin(angles)
        return means
    raise ValueError("need dim >= 2 when classes exceed dimensions")


def gen_blobs(n_classes: int, per_class: int, dim: int, spread: float,
              seed: int) -> tuple[Dataset, Dataset]:
    """Gaussian class blobs with separated means; 80/20 train/test split."""
    if n_classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    means = _class_means(n_classes, dim, rng)
    features = np.vstack([
        means[c] + spread * rng.standard_normal((per_class, dim))
        for c in range(n_classes)
    ])
    labels = np.repeat(np.arange(n_classes), per_class)
    order = rng.permutation(len(labels))
    features, labels = features[order], labels[order]
    n_train = int(round(0.8 * len(labels)))
    return (Dataset(features[:n_train], labels[:n_train], "train"),
            Dataset(features[n_train:], labels[n_train:], "test"))


# --- training ---------------------------------------------------------------

def _he_uniform(rng, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_mlp(input_dim: int, widths: list[int], n_classes: int,
             seed: int) -> MlpNetwork:
    rng = np.random.default_rng(seed)
    dims = [input_dim] + list(widths) + [n_classes]
    layers = [
        AffineLayer(_he_uniform(rng, dims[i + 1], dims[i]),
                    np.zeros(dims[i + 1]))
        for i in range(len(dims) - 1)
    ]
    return MlpNetwork(tuple(layers))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_mlp(dataset: Dataset, widths: list[int], epochs: int = 50,
              lr: float = 0.1, batch: int = 32, seed: int = 0,
              momentum: float = 0.9,
              n_classes: int | None = None) -> MlpNetwork:
    """Minibatch SGD with momentum on softmax cross-entropy.

    Single-threaded and fully seeded: identical calls produce bit-identical
    weights (fixed shuffle order, fixed reduction order).
    """
    L = n_classes if n_classes is not None else dataset.n_classes
    net = init_mlp(dataset.dim, widths, L, seed)
    weights = [l.weight.copy() for l in net.layers]
    biases = [l.bias.copy() for l in net.layers]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    rng = np.random.default_rng(seed + 1)
    X, y = dataset.features, dataset.labels
    n = len(dataset)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch):
            idx = order[lo:lo + batch]
            xb, yb = X[idx], y[idx]
            acts = [xb]
            pres = []
            a = xb
            # divergence shows up as overflow here; detected right after
            with np.errstate(over="ignore", invalid="ignore"):
                for w, b in zip(weights[:-1], biases[:-1]):
                    z = a @ w.T + b
                    pres.append(z)
                    a = np.maximum(z, 0.0)
                    acts.append(a)
                logits = a @ weights[-1].T + biases[-1]
                probs = _softmax(logits)
            if not np.all(np.isfinite(probs)):
                raise TrainingDivergedError(f"loss diverged at epoch {epoch}")
            delta = probs
            delta[np.arange(len(yb)), yb] -= 1.0
            delta /= len(yb)
            grads_w, grads_b = [], []
            for li in range(len(weights) - 1, -1, -1):
                grads_w.append(delta.T @ acts[li])
                grads_b.append(delta.sum(axis=0))
                if li > 0:
                    delta = (delta @ weights[li]) * (pres[li - 1] > 0.0)
            grads_w.reverse()
            grads_b.reverse()
            for li in range(len(weights)):
                vel_w[li] = momentum * vel_w[li] - lr * grads_w[li]
                vel_b[li] = momentum * vel_b[li] - lr * grads_b[li]
                weights[li] += vel_w[li]
                biases[li] += vel_b[li]
    return MlpNetwork(tuple(
        AffineLayer(w, b) for w, b in zip(weights, biases)))
