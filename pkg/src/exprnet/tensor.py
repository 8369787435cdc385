"""Dense-tensor core with reverse-mode gradient accumulation.

Tensors wrap contiguous numpy arrays (float32 or float64). Each op records a
backward closure on its output; calling ``backward()`` on a scalar walks the
tape in reverse topological order and accumulates gradients into every
reachable tensor with ``requires_grad``. The graph for one forward pass is
held only by the output tensor, so it is discarded once that tensor goes out
of scope; higher-order gradients are not supported.
"""

from __future__ import annotations

import re
from typing import Callable, Optional, Sequence

import numpy as np

_ALLOWED_DTYPES = (np.float32, np.float64)
_PARAM_NAME_RE = re.compile(r"^[a-z0-9._]+$")


class TensorError(ValueError):
    """Raised on shape mismatches, bad dtypes, or non-finite results."""


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=dtype)
    if arr.dtype not in _ALLOWED_DTYPES:
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """N-dimensional array with an optional gradient slot.

    ``data`` is immutable by convention after construction; only ``grad`` is
    mutated (by backward passes and ``zero_grad``).
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 _parents: Sequence["Tensor"] = (),
                 _backward_fn: Optional[Callable[[np.ndarray], None]] = None):
        self.data = _as_array(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward_fn = _backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise TensorError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(self.data.dtype, copy=False)

    def backward(self):
        """Populate grads of every reachable requires_grad tensor.

        Grads accumulate additively across repeated calls until zeroed.
        """
        if self.data.size != 1:
            raise TensorError(f"backward() requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.accumulate_grad(g)
            if node._backward_fn is not None:
                for parent, pg in node._backward_fn(g):
                    if id(parent) in grads:
                        grads[id(parent)] += pg
                    else:
                        grads[id(parent)] = np.array(pg, dtype=parent.dtype, copy=True)


class Parameter(Tensor):
    """Named trainable tensor; names are dotted paths, unique per model."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, dtype=None):
        if not _PARAM_NAME_RE.match(name):
            raise TensorError(f"parameter name {name!r} outside charset [a-z0-9._]")
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _check_finite(arr: np.ndarray, op: str):
    if not np.all(np.isfinite(arr)):
        raise TensorError(f"{op} produced non-finite values")


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    _check_finite(data, op)
    needs = any(p.requires_grad or p._backward_fn is not None for p in parents)
    if needs:
        return Tensor(data, _parents=parents, _backward_fn=backward_fn)
    return Tensor(data)


# ---------------------------------------------------------------------------
# elementwise / linear ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise TensorError(f"add shapes differ: {a.shape} vs {b.shape}")
    out = a.data + b.data

    def bw(g):
        return [(a, g), (b, g)]

    return _make(out, (a, b), bw, "add")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    mask = x.data > 0

    def bw(g):
        return [(x, g * mask)]

    return _make(out, (x,), bw, "relu")


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def bw(g):
        return [(x, g.reshape(x.shape))]

    return _make(out, (x,), bw, "reshape")


def tsum(x: Tensor) -> Tensor:
    out = np.array(x.data.sum(dtype=np.float64), dtype=x.dtype)

    def bw(g):
        return [(x, np.full(x.shape, g.reshape(-1)[0], dtype=x.dtype))]

    return _make(out, (x,), bw, "sum")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise TensorError(f"mul shapes differ: {a.shape} vs {b.shape}")
    out = a.data * b.data

    def bw(g):
        return [(a, g * b.data), (b, g * a.data)]

    return _make(out, (a, b), bw, "mul")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x: N×F, weight: K×F, bias: K -> N×K via x @ weight.T + bias."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise TensorError(f"linear shapes incompatible: {x.shape} x {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise TensorError(f"linear bias shape {bias.shape} != ({weight.shape[0]},)")
        out = out + bias.data

    def bw(g):
        grads = [(x, g @ weight.data), (weight, g.T @ x.data)]
        if bias is not None:
            grads.append((bias, g.sum(axis=0)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, bw, "linear")


# ---------------------------------------------------------------------------
# convolution / pooling


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int,
            pad_value: float = 0.0):
    n, c, h, w = x.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise TensorError(
            f"window {kh}x{kw} stride {stride} does not fit padded input {h + 2 * padding}x{w + 2 * padding}")
    if padding:
        xp = np.full((n, c, h + 2 * padding, w + 2 * padding), pad_value, dtype=x.dtype)
        xp[:, :, padding:padding + h, padding:padding + w] = x
    else:
        xp = x
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        i_end = i + stride * oh
        for j in range(kw):
            j_end = j + stride * ow
            cols[:, :, i, j] = xp[:, :, i:i_end:stride, j:j_end:stride]
    return cols, oh, ow


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    n, c, h, w = x_shape
    _, _, _, _, oh, ow = cols.shape
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    for i in range(kh):
        i_end = i + stride * oh
        for j in range(kw):
            j_end = j + stride * ow
            xp[:, :, i:i_end:stride, j:j_end:stride] += cols[:, :, i, j]
    if padding:
        return xp[:, :, padding:padding + h, padding:padding + w]
    return xp


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of NCHW input with OIHW weight."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise TensorError("conv2d expects NCHW input and OIHW weight")
    n, c, h, w = x.shape
    o, i, kh, kw = weight.shape
    if c != i:
        raise TensorError(f"conv2d channel mismatch: input C={c}, weight I={i}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise TensorError(f"conv2d kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    cols, oh, ow = _im2col(x.data, kh, kw, stride, padding)
    col2 = cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, c * kh * kw)
    wf = weight.data.reshape(o, c * kh * kw)
    out = (col2 @ wf.T).reshape(n, oh, ow, o).transpose(0, 3, 1, 2)
    if bias is not None:
        if bias.shape != (o,):
            raise TensorError(f"conv2d bias shape {bias.shape} != ({o},)")
        out = out + bias.data.reshape(1, o, 1, 1)
    out = np.ascontiguousarray(out)

    def bw(g):
        gf = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, o)
        gw = (gf.T @ col2).reshape(weight.shape)
        gcol2 = gf @ wf
        gcols = gcol2.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
        gx = _col2im(np.ascontiguousarray(gcols), x.shape, kh, kw, stride, padding)
        grads = [(x, gx), (weight, gw)]
        if bias is not None:
            grads.append((bias, g.sum(axis=(0, 2, 3))))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, bw, "conv2d")


def max_pool2d(x: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    """Windowed max with -inf padding; grad routes to the first argmax of each window."""
    if x.data.ndim != 4:
        raise TensorError("max_pool2d expects NCHW input")
    n, c, h, w = x.shape
    cols, oh, ow = _im2col(x.data, kernel, kernel, stride, padding, pad_value=-np.inf)
    flat = cols.reshape(n, c, kernel * kernel, oh, ow)
    arg = flat.argmax(axis=2)
    out = np.take_along_axis(flat, arg[:, :, None], axis=2)[:, :, 0]
    out = np.ascontiguousarray(out)

    def bw(g):
        gcols = np.zeros_like(flat)
        np.put_along_axis(gcols, arg[:, :, None], g[:, :, None], axis=2)
        gx = _col2im(gcols.reshape(cols.shape), x.shape, kernel, kernel, stride, padding)
        return [(x, gx)]

    return _make(out, (x,), bw, "max_pool2d")


def global_avg_pool2d(x: Tensor) -> Tensor:
    """NCHW -> N×C mean over the spatial plane."""
    if x.data.ndim != 4:
        raise TensorError("global_avg_pool2d expects NCHW input")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), dtype=np.float64).astype(x.dtype)

    def bw(g):
        gx = np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).astype(x.dtype)
        return [(x, gx)]

    return _make(out, (x,), bw, "global_avg_pool2d")


# ---------------------------------------------------------------------------
# batch norm


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor,
                 running_mean: np.ndarray, running_var: np.ndarray,
                 training: bool, momentum: float = 0.1, epsilon: float = 1e-5) -> Tensor:
    """Channelwise normalization over N,H,W.

    Train mode normalizes by batch statistics and updates the running buffers
    in place: running <- (1-momentum)*running + momentum*batch. Eval mode uses
    the running buffers only. Batch statistics use population (biased)
    variance, accumulated in float64.
    """
    if epsilon <= 0:
        raise TensorError("batch_norm2d epsilon must be > 0")
    if x.data.ndim != 4:
        raise TensorError("batch_norm2d expects NCHW input")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise TensorError(f"batch_norm2d gamma/beta shape must be ({c},)")
    if training:
        mean64 = x.data.mean(axis=(0, 2, 3), dtype=np.float64)
        var64 = np.square(x.data.astype(np.float64) - mean64[None, :, None, None]).mean(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean64.astype(running_mean.dtype)
        running_var *= 1.0 - momentum
        running_var += momentum * var64.astype(running_var.dtype)
        mean = mean64.astype(x.dtype)
        var = var64.astype(x.dtype)
    else:
        if not np.all(np.isfinite(running_mean)) or not np.all(np.isfinite(running_var)):
            raise TensorError("batch_norm2d eval mode with uninitialized running stats")
        mean = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + np.asarray(epsilon, dtype=x.dtype))
    xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    m = n * h * w

    def bw(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
        gbeta = g.sum(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
        gxhat = g * gamma.data[None, :, None, None]
        if training:
            sum_gxhat = gxhat.sum(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
            sum_gxhat_xhat = (gxhat * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
            gx = (inv_std[None, :, None, None] / m) * (
                m * gxhat
                - sum_gxhat[None, :, None, None]
                - xhat * sum_gxhat_xhat[None, :, None, None])
        else:
            gx = gxhat * inv_std[None, :, None, None]
        return [(x, gx), (gamma, ggamma), (beta, gbeta)]

    return _make(np.ascontiguousarray(out), (x, gamma, beta), bw, "batch_norm2d")


# ---------------------------------------------------------------------------
# softmax / loss


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Stable row softmax (max-subtraction), float64 internals."""
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=1, keepdims=True)).astype(logits.dtype)


def weighted_cross_entropy(logits: Tensor, labels: Sequence[int],
                           class_weights: Tensor) -> Tensor:
    """Weighted-mean cross entropy: sum_i w_{y_i} * nll_i / sum_i w_{y_i}."""
    if logits.data.ndim != 2:
        raise TensorError("weighted_cross_entropy expects N×K logits")
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise TensorError(f"labels length {labels.shape} != batch size {n}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        bad = labels[(labels < 0) | (labels >= k)][0]
        raise TensorError(f"label {bad} outside [0, {k})")
    if class_weights.shape != (k,):
        raise TensorError(f"class_weights shape {class_weights.shape} != ({k},)")
    if np.any(class_weights.data <= 0):
        raise TensorError("class weights must be strictly positive")

    z = logits.data.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    log_probs = z - lse[:, None]
    w = class_weights.data.astype(np.float64)[labels]
    w_total = w.sum()
    loss = -(w * log_probs[np.arange(n), labels]).sum() / w_total
    out = np.array(loss, dtype=logits.dtype)

    probs = np.exp(log_probs)

    def bw(g):
        onehot = np.zeros((n, k), dtype=np.float64)
        onehot[np.arange(n), labels] = 1.0
        glogits = (probs - onehot) * (w / w_total)[:, None]
        scale = float(np.asarray(g).reshape(-1)[0])
        grads = [(logits, (glogits * scale).astype(logits.dtype))]
        if class_weights.requires_grad:
            # per-class weight grad: d loss / d w_c via quotient rule
            nll = -log_probs[np.arange(n), labels]
            gw = np.zeros(k, dtype=np.float64)
            np.add.at(gw, labels, (nll - loss) / w_total)
            grads.append((class_weights, (gw * scale).astype(class_weights.dtype)))
        return grads

    return _make(out, (logits, class_weights), bw, "weighted_cross_entropy")
