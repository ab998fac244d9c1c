"""Foreground-probability estimation and the unary label costs.

A small fully-connected network maps a region descriptor to a 2-way softmax
(foreground, background); the default architecture is 7 layers narrowing
8192 -> 2048 x3 -> 1024 x3 -> 2 with ReLU after all but the last and
train-time dropout after the first five ReLUs. Training is mini-batch SGD
with classical momentum, L2 weight decay, a step learning-rate schedule and
inverted dropout; it is bit-reproducible for a fixed seed. A centroid-based
fallback scorer is available when no trained model exists.

Model file layout (little-endian): magic "STNN", version u16, layer count
u32, then per layer in u32, out u32, flags u8 (bit0 = ReLU, bit1 = dropout
after the ReLU at train time), row-major float32 weights, float32 biases.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, MalformedInput

MODEL_MAGIC = b"STNN"
MODEL_VERSION = 1

FDNN_HIDDEN = (2048, 2048, 2048, 1024, 1024, 1024)


@dataclass
class MlpLayer:
    weights: np.ndarray  # (out, in) float64
    bias: np.ndarray  # (out,) float64
    activation: str  # "relu" | "none"
    dropout: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise InvalidArgument("layer weight/bias shapes are inconsistent")
        if self.activation not in ("relu", "none"):
            raise InvalidArgument(f"unknown activation {self.activation!r}")
        if self.dropout and self.activation != "relu":
            raise InvalidArgument("dropout is only applied after ReLU layers")


@dataclass
class MlpModel:
    layers: list[MlpLayer]

    def __post_init__(self):
        if not self.layers:
            raise InvalidArgument("model needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.weights.shape[1] != a.weights.shape[0]:
                raise InvalidArgument("adjacent layer dimensions do not chain")
        last = self.layers[-1]
        if last.weights.shape[0] != 2 or last.activation != "none":
            raise InvalidArgument("final layer must emit 2 plain logits")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]


def init_model(input_dim: int, hidden, rng: np.random.Generator,
               dropout_layers: int | None = None) -> MlpModel:
    """Random model: Gaussian weights with std sqrt(2/fan_in), zero biases.

    dropout_layers limits how many leading ReLU layers carry train-time
    dropout; None means all but the last hidden layer, matching the default
    architecture.
    """
    dims = [input_dim] + list(hidden) + [2]
    if dropout_layers is None:
        dropout_layers = max(0, len(hidden) - 1)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        last = i == len(dims) - 2
        layers.append(MlpLayer(
            weights=w,
            bias=np.zeros(fan_out),
            activation="none" if last else "relu",
            dropout=(not last) and i < dropout_layers,
        ))
    return MlpModel(layers=layers)


def fdnn_model(input_dim: int = 8192, seed: int = 0) -> MlpModel:
    """The 7-layer foreground scorer with the standard channel plan."""
    rng = np.random.default_rng(seed)
    return init_model(input_dim, FDNN_HIDDEN, rng, dropout_layers=5)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 300_000
    batch_size: int = 500
    momentum: float = 0.9
    weight_decay: float = 0.005
    base_lr: float = 0.001
    lr_drop_every: int = 50_000
    lr_drop_factor: float = 10.0
    dropout_rate: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.iterations, self.batch_size, self.lr_drop_every) <= 0:
            raise InvalidArgument("iteration/batch/schedule values must be positive")
        if self.base_lr <= 0 or self.lr_drop_factor <= 0:
            raise InvalidArgument("learning-rate values must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise InvalidArgument("momentum and weight decay must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidArgument("dropout rate must lie in [0, 1)")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Small preset for desk-scale datasets."""
        base = dict(iterations=5000, batch_size=64, lr_drop_every=2000)
        base.update(overrides)
        return cls(**base)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward_batch(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Deterministic inference (dropout inactive): row-wise (p_fg, p_bg)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise InvalidArgument(
            f"input dim {X.shape[-1] if X.ndim else 0} != model input "
            f"{model.input_dim}")
    a = X
    for layer in model.layers:
        a = a @ layer.weights.T + layer.bias
        if layer.activation == "relu":
            a = np.maximum(a, 0.0)
    return _softmax(a)


def forward(model: MlpModel, feature) -> tuple[float, float]:
    """(p_fg, p_bg) for one feature vector; channel 0 is foreground."""
    values = getattr(feature, "values", feature)
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size != model.input_dim:
        raise InvalidArgument(
            f"feature dim {values.size} != model input {model.input_dim}")
    p = forward_batch(model, values[None, :])[0]
    return float(p[0]), float(p[1])


def loss_and_grads(model: MlpModel, X: np.ndarray, targets: np.ndarray,
                   dropout_rate: float = 0.0,
                   rng: np.random.Generator | None = None):
    """Mean cross-entropy over the batch plus analytic parameter gradients.

    targets are class indices (0 = foreground, 1 = background). Inverted
    dropout is applied after flagged ReLU layers when dropout_rate > 0.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    acts = [X]
    pre = []
    masks = []
    a = X
    for layer in model.layers:
        z = a @ layer.weights.T + layer.bias
        pre.append(z)
        if layer.activation == "relu":
            a = np.maximum(z, 0.0)
            if dropout_rate > 0.0 and layer.dropout:
                keep = rng.random(a.shape) >= dropout_rate
                a = a * keep / (1.0 - dropout_rate)
                masks.append(keep)
            else:
                masks.append(None)
        else:
            a = z
            masks.append(None)
        acts.append(a)

    probs = _softmax(acts[-1])
    eps = 1e-300  # log underflow guard only
    loss = -np.mean(np.log(probs[np.arange(n), targets] + eps))

    delta = probs.copy()
    delta[np.arange(n), targets] -= 1.0
    delta /= n
    grads = []
    for idx in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[idx]
        gw = delta.T @ acts[idx]
        gb = delta.sum(axis=0)
        grads.append((gw, gb))
        if idx > 0:
            delta = delta @ layer.weights
            prev = model.layers[idx - 1]
            if prev.activation == "relu":
                if masks[idx - 1] is not None:
                    delta = delta * masks[idx - 1] / (1.0 - dropout_rate)
                delta = delta * (pre[idx - 1] > 0.0)
    grads.reverse()
    return loss, grads


def train(features: np.ndarray, labels: np.ndarray, config: TrainConfig,
          hidden=FDNN_HIDDEN, model: MlpModel | None = None):
    """Train a foreground scorer; labels are 1 = foreground, 0 = background.

    Returns (model, loss_trace). Reproducible: identical seeds give
    bit-identical models.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgument("training set must be a non-empty 2-D array")
    if y.shape != (X.shape[0],):
        raise InvalidArgument("labels must align with features")
    if not np.isin(y, (0, 1)).all():
        raise InvalidArgument("labels must be 0 (background) or 1 (foreground)")
    targets = np.where(y == 1, 0, 1)  # class index 0 = foreground

    rng = np.random.default_rng(config.rng_seed)
    if model is None:
        model = init_model(X.shape[1], hidden, rng)
    velocity = [(np.zeros_like(l.weights), np.zeros_like(l.bias))
                for l in model.layers]

    trace = np.empty(config.iterations)
    for it in range(config.iterations):
        lr = config.base_lr * config.lr_drop_factor ** (-(it // config.lr_drop_every))
        idx = rng.integers(0, X.shape[0], size=config.batch_size)
        loss, grads = loss_and_grads(model, X[idx], targets[idx],
                                     dropout_rate=config.dropout_rate, rng=rng)
        trace[it] = loss
        for layer, (vw, vb), (gw, gb) in zip(model.layers, velocity, grads):
            vw *= config.momentum
            vw -= lr * (gw + config.weight_decay * layer.weights)
            vb *= config.momentum
            vb -= lr * (gb + config.weight_decay * layer.bias)
            layer.weights += vw
            layer.bias += vb
    return model, trace


def fallback_omega(feature, fg_centroid, bg_centroid) -> float:
    """Centroid-distance score: p_fg = d_bg / (d_fg + d_bg), 0.5 on ties."""
    values = getattr(feature, "values", feature)
    v = np.asarray(values, dtype=np.float64).ravel()
    d_fg = float(np.linalg.norm(v - np.asarray(fg_centroid, dtype=np.float64)))
    d_bg = float(np.linalg.norm(v - np.asarray(bg_centroid, dtype=np.float64)))
    if d_fg + d_bg == 0.0:
        return 0.5
    return d_bg / (d_fg + d_bg)


def unary_potential(omega: float, label: int, theta_u: float) -> float:
    """Label cost: theta_u*(1-omega) for foreground, theta_u*omega for
    background; the two always sum to theta_u."""
    if not 0.0 <= omega <= 1.0:
        raise InvalidArgument("omega must lie in [0, 1]")
    if label not in (0, 1):
        raise InvalidArgument("label must be 0 (background) or 1 (foreground)")
    return theta_u * (1.0 - omega) if label == 1 else theta_u * omega


def save_training_data(vectors, labels, path) -> None:
    """Training file: the feature-file layout with one label byte appended to
    each region record (1 = foreground). Keys are (scale, frame, region)."""
    import struct as _struct

    from .features import FEATURE_MAGIC, FEATURE_VERSION

    keys = sorted(vectors)
    if not keys:
        raise InvalidArgument("empty training set")
    dim = np.asarray(vectors[keys[0]]).size
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(_struct.pack("<HIIQQ", FEATURE_VERSION, dim, 0, len(keys), 0))
        for key in keys:
            vec = np.asarray(vectors[key], dtype=np.float64).ravel()
            if vec.size != dim:
                raise InvalidArgument("training vectors must share one dim")
            label = int(labels[key])
            if label not in (0, 1):
                raise InvalidArgument("labels must be 0 or 1")
            fh.write(_struct.pack("<HII", *key))
            fh.write(vec.astype("<f4").tobytes())
            fh.write(_struct.pack("<B", label))


def load_training_data(path):
    """Returns (X, y) float64/int arrays in stored key order."""
    import struct as _struct

    from .features import FEATURE_MAGIC, FEATURE_VERSION

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise MalformedInput(f"{path}: bad training-file magic {magic!r}")
        header = fh.read(26)
        if len(header) != 26:
            raise MalformedInput(f"{path}: truncated training-file header")
        version, dim, _, count, _ = _struct.unpack("<HIIQQ", header)
        if version != FEATURE_VERSION:
            raise MalformedInput(f"{path}: unsupported version {version}")
        if count == 0 or dim == 0:
            raise MalformedInput(f"{path}: empty training file")
        rec_size = 10 + 4 * dim + 1
        X = np.empty((count, dim))
        y = np.empty(count, dtype=np.int64)
        for i in range(count):
            rec = fh.read(rec_size)
            if len(rec) != rec_size:
                raise MalformedInput(f"{path}: truncated training record")
            X[i] = np.frombuffer(rec[10:-1], dtype="<f4")
            y[i] = rec[-1]
            if y[i] not in (0, 1):
                raise MalformedInput(f"{path}: record {i} has bad label {y[i]}")
        if fh.read(1):
            raise MalformedInput(f"{path}: trailing bytes after records")
    if not np.all(np.isfinite(X)):
        raise MalformedInput(f"{path}: non-finite training vectors")
    return X, y


def save_model(model: MlpModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<HI", MODEL_VERSION, len(model.layers)))
        for layer in model.layers:
            flags = (1 if layer.activation == "relu" else 0) | \
                    (2 if layer.dropout else 0)
            out_dim, in_dim = layer.weights.shape
            fh.write(struct.pack("<IIB", in_dim, out_dim, flags))
            fh.write(layer.weights.astype("<f4").tobytes())
            fh.write(layer.bias.astype("<f4").tobytes())


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise MalformedInput(f"{path}: bad model magic {magic!r}")
        header = fh.read(6)
        if len(header) != 6:
            raise MalformedInput(f"{path}: truncated model header")
        version, n_layers = struct.unpack("<HI", header)
        if version != MODEL_VERSION:
            raise MalformedInput(f"{path}: unsupported model version {version}")
        layers = []
        for li in range(n_layers):
            rec = fh.read(9)
            if len(rec) != 9:
                raise MalformedInput(f"{path}: truncated layer {li} header")
            in_dim, out_dim, flags = struct.unpack("<IIB", rec)
            wbytes = fh.read(4 * in_dim * out_dim)
            bbytes = fh.read(4 * out_dim)
            if len(wbytes) != 4 * in_dim * out_dim or len(bbytes) != 4 * out_dim:
                raise MalformedInput(f"{path}: truncated layer {li} payload")
            layers.append(MlpLayer(
                weights=np.frombuffer(wbytes, dtype="<f4").reshape(out_dim, in_dim)
                .astype(np.float64),
                bias=np.frombuffer(bbytes, dtype="<f4").astype(np.float64),
                activation="relu" if flags & 1 else "none",
                dropout=bool(flags & 2),
            ))
        if fh.read(1):
            raise MalformedInput(f"{path}: trailing bytes after layers")
    return MlpModel(layers=layers)
