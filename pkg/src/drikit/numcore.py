"""Dense tensors, a recording gradient tape, and plain SGD.

Only the operators the restoration nets need are differentiable: ``conv2d``,
``relu``, ``add``, ``tensor_sum`` and ``mse_loss``.  Convolution follows the
cross-correlation convention (the kernel is not flipped).

Operations record themselves on the innermost active :class:`GradTape` when at
least one input requires a gradient::

    with GradTape() as tape:
        loss = mse_loss(conv2d(x, w, padding=1), y)
    grads = backward(loss, tape)

Outside a tape, nothing is recorded and the ops are plain numpy functions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ShapeError
from .rng import substream

DTYPE = np.float32


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=DTYPE):
        arr = np.asarray(data, dtype=dtype)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise InvalidArgumentError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data

    def copy(self):
        return Tensor(self.data.copy(), self.requires_grad, dtype=self.data.dtype)

    def __repr__(self):
        return f"Tensor(shape={list(self.shape)}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float
    step_count: int
    batch_size: int

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError(f"learning rate must be positive, got {self.learning_rate}")
        if self.step_count < 1:
            raise InvalidArgumentError(f"step count must be >= 1, got {self.step_count}")
        if self.batch_size < 1:
            raise InvalidArgumentError(f"batch size must be >= 1, got {self.batch_size}")


class _Node:
    __slots__ = ("inputs", "output", "rule")

    def __init__(self, inputs, output, rule):
        self.inputs = inputs
        self.output = output
        self.rule = rule


_TAPES: list[GradTape] = []


class GradTape:
    """Ordered record of operations; nodes are appended in execution order,
    which is a valid topological order."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.watched: list[Tensor] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def watch(self, *tensors):
        for t in tensors:
            t.requires_grad = True
            if not any(t is w for w in self.watched):
                self.watched.append(t)

    def leaves(self):
        """Every requires-grad tensor seen by the tape that no node produced."""
        produced = {id(n.output) for n in self.nodes}
        seen, out = set(), []
        for t in list(self.watched) + [i for n in self.nodes for i in n.inputs]:
            if t.requires_grad and id(t) not in produced and id(t) not in seen:
                seen.add(id(t))
                out.append(t)
        return out


def _record(inputs, output, rule):
    if _TAPES and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        _TAPES[-1].nodes.append(_Node(inputs, output, rule))
    return output


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {list(a.shape)} and {list(b.shape)} differ")


def tensor_randn(shape, seed, scale=1.0, stream="randn"):
    """Gaussian tensor with std ``scale``; bitwise identical for the same seed."""
    shape = tuple(int(s) for s in shape)
    if not shape or any(s <= 0 for s in shape):
        raise InvalidArgumentError(f"shape must be nonempty with positive dims, got {list(shape)}")
    if not scale > 0:
        raise InvalidArgumentError(f"scale must be positive, got {scale}")
    g = substream(seed, stream)
    return Tensor(g.standard_normal(shape, dtype=DTYPE) * DTYPE(scale))


# --- convolution -----------------------------------------------------------
#
# Images are laid out channel-major on a flattened padded grid of size
# (H+2p)*(W+2p) per batch item, so every kernel tap is a contiguous shift of
# one (C, B*L) buffer.  Outputs computed at grid positions that straddle the
# padding are discarded.

def _im2col(x, k, p):
    B, C, H, W = x.shape
    Hp, Wp = H + 2 * p, W + 2 * p
    n = B * Hp * Wp
    flat = np.zeros((C, n + (k - 1) * (Wp + 1)), dtype=x.dtype)
    flat[:, :n].reshape(C, B, Hp, Wp)[:, :, p:p + H, p:p + W] = x.transpose(1, 0, 2, 3)
    cols = np.empty((k, k, C, n), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            o = i * Wp + j
            cols[i, j] = flat[:, o:o + n]
    return cols.reshape(k * k * C, n)


def conv2d(x: Tensor, kernel: Tensor, padding=0, bias: Tensor | None = None) -> Tensor:
    """Cross-correlate ``x[B,C,H,W]`` with ``kernel[F,C,k,k]``; optional per-filter ``bias[F]``."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {list(x.shape)} and {list(kernel.shape)}")
    B, C, H, W = x.shape
    F, Ck, kh, kw = kernel.shape
    if Ck != C:
        raise ShapeError(f"conv2d channel mismatch: input has {C}, kernel expects {Ck}")
    if kh != kw:
        raise ShapeError(f"conv2d needs square kernels, got {kh}x{kw}")
    p = int(padding)
    if p < 0:
        raise InvalidArgumentError(f"padding must be >= 0, got {padding}")
    if kh > H + 2 * p or kw > W + 2 * p:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {H + 2 * p}x{W + 2 * p}")
    if bias is not None and bias.shape != (F,):
        raise ShapeError(f"bias shape {list(bias.shape)} does not match {F} filters")

    k = kh
    Hp, Wp = H + 2 * p, W + 2 * p
    Ho, Wo = Hp - k + 1, Wp - k + 1
    dtype = np.result_type(x.data, kernel.data)
    cols = _im2col(x.data.astype(dtype, copy=False), k, p)
    wmat = kernel.data.transpose(0, 2, 3, 1).reshape(F, k * k * C).astype(dtype, copy=False)
    grid = (wmat @ cols).reshape(F, B, Hp, Wp)
    out = np.ascontiguousarray(grid[:, :, :Ho, :Wo].transpose(1, 0, 2, 3))
    if bias is not None:
        out += bias.data.astype(dtype, copy=False)[None, :, None, None]
    result = Tensor(out, dtype=dtype)

    def rule(g):
        n = B * Hp * Wp
        G = np.zeros((F, B, Hp, Wp), dtype=dtype)
        G[:, :, :Ho, :Wo] = g.transpose(1, 0, 2, 3)
        G = G.reshape(F, n)
        gw = (G @ cols.T).reshape(F, k, k, C).transpose(0, 3, 1, 2)
        gx = None
        if x.requires_grad:
            gcols = (wmat.T @ G).reshape(k, k, C, n)
            gflat = np.zeros((C, n + (k - 1) * (Wp + 1)), dtype=dtype)
            for i in range(k):
                for j in range(k):
                    o = i * Wp + j
                    gflat[:, o:o + n] += gcols[i, j]
            gx = gflat[:, :n].reshape(C, B, Hp, Wp)[:, :, p:p + H, p:p + W].transpose(1, 0, 2, 3)
            gx = np.ascontiguousarray(gx, dtype=x.data.dtype)
        grads = [gx, np.ascontiguousarray(gw, dtype=kernel.data.dtype)]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3), dtype=np.float64).astype(bias.data.dtype))
        return grads

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _record(inputs, result, rule)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    result = Tensor(np.where(mask, x.data, 0).astype(x.data.dtype, copy=False), dtype=x.data.dtype)
    return _record((x,), result, lambda g: [g * mask])


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: shapes {list(a.shape)} and {list(b.shape)} do not broadcast") from exc
    result = Tensor(out, dtype=out.dtype)
    return _record((a, b), result, lambda g: [_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)])


def tensor_sum(x: Tensor) -> Tensor:
    result = Tensor(np.sum(x.data, dtype=np.float64), dtype=np.float64)
    return _record((x,), result, lambda g: [np.full(x.shape, g, dtype=x.data.dtype)])


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error, accumulated in float64; returns a 0-d float64 tensor."""
    _same_shape(pred, target, "mse_loss")
    diff = pred.data.astype(np.float64) - target.data.astype(np.float64)
    n = diff.size
    result = Tensor(np.dot(diff.ravel(), diff.ravel()) / n, dtype=np.float64)
    return _record((pred,), result, lambda g: [(diff * (2.0 * float(g) / n)).astype(pred.data.dtype)])


# --- differentiation --------------------------------------------------------

def backward(loss: Tensor, tape: GradTape, wrt=None):
    """Reverse-mode pass over ``tape`` from the scalar ``loss``.

    Returns a dict mapping each leaf (``wrt`` if given, otherwise every
    requires-grad leaf the tape knows) to its gradient array.  Leaves the loss
    does not depend on get exact zeros.  Each leaf's ``.grad`` is set too.
    """
    if loss.data.size != 1:
        raise InvalidArgumentError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    leaves = list(wrt) if wrt is not None else tape.leaves()
    grads = {id(loss): np.ones(loss.shape, dtype=loss.data.dtype)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.rule(g)):
            if not inp.requires_grad:
                continue
            if id(inp) in grads:
                grads[id(inp)] = grads[id(inp)] + gi
            else:
                grads[id(inp)] = gi
    out = {}
    for leaf in leaves:
        g = grads.get(id(leaf))
        g = np.zeros_like(leaf.data) if g is None else np.asarray(g, dtype=leaf.data.dtype).reshape(leaf.shape)
        leaf.grad = g
        out[leaf] = g
    return out


def sgd_step(params, grads, learning_rate):
    """Return ``params - learning_rate * grads`` elementwise, no momentum or decay.

    ``params`` and ``grads`` are parallel sequences of arrays (or Tensors);
    the result is a list of new arrays in the parameters' dtype.
    """
    if not learning_rate > 0:
        raise InvalidArgumentError(f"learning rate must be positive, got {learning_rate}")
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameter tensors but {len(grads)} gradients")
    out = []
    for p, g in zip(params, grads):
        p = p.data if isinstance(p, Tensor) else np.asarray(p)
        g = g.data if isinstance(g, Tensor) else np.asarray(g)
        if p.shape != g.shape:
            raise ShapeError(f"parameter shape {list(p.shape)} vs gradient shape {list(g.shape)}")
        eta = p.dtype.type(learning_rate)
        out.append(p - eta * g.astype(p.dtype, copy=False))
    return out
