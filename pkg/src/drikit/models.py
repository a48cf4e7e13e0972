"""Tiny residual CNN restorers.

The network is ``len(widths)`` conv+relu layers followed by a conv back to the
input channel count, added to the input::

    out = x + conv_L(relu(conv_{L-1}(... relu(conv_1(x)))))

The correction branch sees the input shifted by -0.5 (``centered``), which
keeps plain SGD well conditioned on [0, 1] images.  With the final layer
zero-initialised the model starts as the identity restorer.  Outputs are not clipped; clipping happens only in the metrics.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FormatError, InvalidArgumentError, ShapeError
from .numcore import DTYPE, GradTape, Tensor, add, backward, conv2d, mse_loss, relu, sgd_step
from .rng import substream


@dataclass(frozen=True)
class ModelConfig:
    widths: tuple = (16, 16)
    kernel_size: int = 3
    in_channels: int = 3
    seed: int = 0
    zero_final: bool = True
    centered: bool = True

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not self.widths:
            raise InvalidArgumentError("model needs at least one hidden layer")
        if any(w < 1 for w in self.widths):
            raise InvalidArgumentError(f"layer widths must be positive, got {list(self.widths)}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise InvalidArgumentError(f"kernel size must be odd and positive, got {self.kernel_size}")
        if self.in_channels not in (1, 3):
            raise InvalidArgumentError(f"input channels must be 1 or 3, got {self.in_channels}")

    def layer_shapes(self):
        """[(kernel_shape, bias_shape), ...] in declaration order."""
        k = self.kernel_size
        chans = [self.in_channels, *self.widths, self.in_channels]
        return [((cout, cin, k, k), (cout,)) for cin, cout in zip(chans[:-1], chans[1:])]

    def parameter_count(self):
        return sum(int(np.prod(ks)) + int(np.prod(bs)) for ks, bs in self.layer_shapes())


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: list = field(default_factory=list)  # [W1, b1, W2, b2, ...] as float32 arrays

    def copy(self):
        return ModelParams(self.config, [t.copy() for t in self.tensors])

    def with_tensors(self, tensors):
        return ModelParams(self.config, list(tensors))

    def count(self):
        return sum(t.size for t in self.tensors)

    def equal(self, other):
        return len(self.tensors) == len(other.tensors) and all(
            a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()
            for a, b in zip(self.tensors, other.tensors)
        )


def init_model(config: ModelConfig) -> ModelParams:
    """He-scaled Gaussian kernels and zero biases, deterministic in ``config.seed``."""
    if not isinstance(config, ModelConfig):
        raise InvalidArgumentError(f"expected ModelConfig, got {type(config).__name__}")
    shapes = config.layer_shapes()
    tensors = []
    for i, (kshape, bshape) in enumerate(shapes):
        last = i == len(shapes) - 1
        if last and config.zero_final:
            w = np.zeros(kshape, dtype=DTYPE)
        else:
            fan_in = kshape[1] * kshape[2] * kshape[3]
            g = substream(config.seed, "init", i)
            w = g.standard_normal(kshape, dtype=DTYPE) * DTYPE(np.sqrt(2.0 / fan_in))
        tensors += [w, np.zeros(bshape, dtype=DTYPE)]
    return ModelParams(config, tensors)


def _check_batch(params, batch):
    if batch.ndim != 4:
        raise ShapeError(f"batch must be [B,C,H,W], got shape {list(batch.shape)}")
    if batch.shape[1] != params.config.in_channels:
        raise ShapeError(
            f"batch has {batch.shape[1]} channels, model expects {params.config.in_channels}")


CENTER = Tensor(np.float32(-0.5))


def forward_tensors(params: ModelParams, x: Tensor, weights) -> Tensor:
    pad = params.config.kernel_size // 2
    h = add(x, CENTER) if params.config.centered else x
    n_layers = len(weights) // 2
    for i in range(n_layers):
        h = conv2d(h, weights[2 * i], padding=pad, bias=weights[2 * i + 1])
        if i < n_layers - 1:
            h = relu(h)
    return add(x, h)


def forward(params: ModelParams, batch) -> np.ndarray:
    """Restore a ``[B,C,H,W]`` batch; same spatial shape out."""
    batch = np.asarray(batch, dtype=DTYPE)
    _check_batch(params, batch)
    weights = [Tensor(t) for t in params.tensors]
    return forward_tensors(params, Tensor(batch), weights).data


def _as_pairs(pairs):
    """Accept (degraded, clean) as two stacked arrays or a list of pairs."""
    if isinstance(pairs, tuple) and len(pairs) == 2 and np.asarray(pairs[0]).ndim == 4:
        deg, clean = pairs
    else:
        pairs = list(pairs)
        if not pairs:
            raise InvalidArgumentError("empty pair set")
        deg = np.stack([np.asarray(p[0]) for p in pairs])
        clean = np.stack([np.asarray(p[1]) for p in pairs])
    deg = np.asarray(deg, dtype=DTYPE)
    clean = np.asarray(clean, dtype=DTYPE)
    if deg.shape[0] == 0:
        raise InvalidArgumentError("empty pair set")
    if deg.shape != clean.shape:
        raise ShapeError(f"degraded {list(deg.shape)} and clean {list(clean.shape)} shapes differ")
    return deg, clean


def loss_value(params: ModelParams, pairs) -> float:
    """Full-set MSE between forward(degraded) and clean, in float64. No tape, no RNG."""
    deg, clean = _as_pairs(pairs)
    _check_batch(params, deg)
    return float(mse_loss(Tensor(forward(params, deg)), Tensor(clean)).data)


training_loss = loss_value
validation_loss = loss_value


def loss_and_grads(params: ModelParams, pairs):
    deg, clean = _as_pairs(pairs)
    _check_batch(params, deg)
    weights = [Tensor(t, requires_grad=True, dtype=t.dtype) for t in params.tensors]
    with GradTape() as tape:
        tape.watch(*weights)
        loss = mse_loss(forward_tensors(params, Tensor(deg, dtype=weights[0].data.dtype), weights),
                        Tensor(clean, dtype=weights[0].data.dtype))
    grads = backward(loss, tape, wrt=weights)
    return float(loss.data), [grads[w] for w in weights]


def train_step(params: ModelParams, pairs, learning_rate) -> ModelParams:
    """One plain SGD step on the batch; returns new params, input untouched."""
    _, grads = loss_and_grads(params, pairs)
    return params.with_tensors(sgd_step(params.tensors, grads, learning_rate))


# --- checkpoints ------------------------------------------------------------

CHECKPOINT_MAGIC = b"DRIKCKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: ModelParams, path):
    cfg = json.dumps(asdict(params.config), sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<I", len(params.tensors)))
    for t in params.tensors:
        t = np.asarray(t, dtype=DTYPE)
        buf.write(struct.pack("<I", t.ndim))
        buf.write(struct.pack(f"<{t.ndim}I", *t.shape))
        buf.write(t.astype("<f4").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as f:
        raw = f.read()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(raw):
            raise FormatError(f"truncated checkpoint while reading {what}: need {n} bytes, "
                              f"{len(raw) - pos} left", pos)
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    if take(len(CHECKPOINT_MAGIC), "magic") != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)", 0)
    version_at = pos
    version, cfg_len = struct.unpack("<II", take(8, "header"))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"checkpoint format version {version}, this reader supports version "
                          f"{CHECKPOINT_VERSION}", version_at)
    cfg_at = pos
    try:
        cfg = json.loads(take(cfg_len, "config block").decode())
        config = ModelConfig(**cfg)
    except (ValueError, TypeError) as exc:
        raise FormatError(f"bad config block: {exc}", cfg_at) from exc
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    expected = [s for pair in config.layer_shapes() for s in pair]
    if count != len(expected):
        raise FormatError(f"{count} tensors stored, config implies {len(expected)}", pos - 4)
    tensors = []
    for shape in expected:
        at = pos
        (ndim,) = struct.unpack("<I", take(4, "tensor rank"))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim, "tensor shape"))
        if tuple(dims) != shape:
            raise FormatError(f"tensor shape {list(dims)} does not match config shape {list(shape)}", at)
        n = int(np.prod(dims))
        data = np.frombuffer(take(4 * n, "tensor data"), dtype="<f4").astype(DTYPE).reshape(dims)
        tensors.append(data)
    if pos != len(raw):
        raise FormatError(f"{len(raw) - pos} trailing bytes after last tensor", pos)
    return ModelParams(config, tensors)
