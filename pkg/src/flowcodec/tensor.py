"""Dense tensors with reverse-mode automatic differentiation.

The op set is the closed list the codec needs: elementwise add/mul,
(batched) matmul, 2-D convolution with zero padding, nearest-neighbor 2x
upsampling, GELU, sigmoid, layer norm, softmax, full-mean reduction,
concatenation, basic slicing, reshape/transpose, and a straight-through
value replacement used for quantization-aware training. Parameters and
activations are float32 by default; reductions accumulate in float64.

Determinism: all kernels are plain numpy calls with fixed reduction
order for a given platform, so identical inputs give bit-identical
outputs within a process and across runs on the same machine.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from scipy.special import erf, expit

_FLOAT_DTYPES = (np.float32, np.float64)
_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


class Tensor:
    """One node of a dynamically built computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), mul(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def param(data, dtype=np.float32) -> Tensor:
    """A trainable leaf."""
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def _node(data, parents: Sequence[Tensor]) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient over axes that numpy broadcasting expanded."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_same_dtype(a: Tensor, b: Tensor) -> None:
    if a.dtype != b.dtype:
        raise ValueError(f"dtype mismatch: {a.dtype} vs {b.dtype}")


# elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype) if not isinstance(b, Tensor) else b
    _check_same_dtype(a, b)
    out = _node(a.data + b.data, (a, b))
    if out.requires_grad:
        def backward():
            g = out.grad
            if a.requires_grad:
                _accum(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g, b.data.shape))
        out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype) if not isinstance(b, Tensor) else b
    _check_same_dtype(a, b)
    out = _node(a.data * b.data, (a, b))
    if out.requires_grad:
        def backward():
            g = out.grad
            if a.requires_grad:
                _accum(a, _unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g * a.data, b.data.shape))
        out._backward = backward
    return out


# linear algebra ---------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_dtype(a, b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must have ndim >= 2")
    out = _node(a.data @ b.data, (a, b))
    if out.requires_grad:
        def backward():
            g = out.grad
            if a.requires_grad:
                ga = g @ np.swapaxes(b.data, -1, -2)
                _accum(a, _unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                gb = np.swapaxes(a.data, -1, -2) @ g
                _accum(b, _unbroadcast(gb, b.data.shape))
        out._backward = backward
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: int = 0) -> Tensor:
    """stride-1 cross-correlation of (Cin,H,W) with (Cout,Cin,kh,kw) weights."""
    x, w = as_tensor(x), as_tensor(w)
    _check_same_dtype(x, w)
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ValueError("conv2d expects x (Cin,H,W) and w (Cout,Cin,kh,kw)")
    cin, h_in, w_in = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ValueError(f"conv2d channel mismatch: input {cin}, weight {cin_w}")
    p = int(padding)
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p))) if p else x.data
    h_out = h_in + 2 * p - kh + 1
    w_out = w_in + 2 * p - kw + 1
    if h_out < 1 or w_out < 1:
        raise ValueError("conv2d kernel larger than padded input")
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    cols = win.transpose(1, 2, 0, 3, 4).reshape(h_out * w_out, cin * kh * kw)
    wmat = w.data.reshape(cout, -1)
    val = (cols @ wmat.T).T.reshape(cout, h_out, w_out)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        _check_same_dtype(x, b)
        if b.data.shape != (cout,):
            raise ValueError("conv2d bias must have shape (Cout,)")
        val = val + b.data[:, None, None]
        parents.append(b)
    out = _node(val, parents)
    if out.requires_grad:
        def backward():
            g = out.grad
            gmat = g.reshape(cout, -1)
            if w.requires_grad:
                _accum(w, (gmat @ cols).reshape(w.data.shape))
            if b is not None and b.requires_grad:
                _accum(b, g.sum(axis=(1, 2)))
            if x.requires_grad:
                gcols = gmat.T @ wmat
                gwin = gcols.reshape(h_out, w_out, cin, kh, kw).transpose(2, 0, 1, 3, 4)
                gxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, i:i + h_out, j:j + w_out] += gwin[:, :, :, i, j]
                _accum(x, gxp[:, p:p + h_in, p:p + w_in] if p else gxp)
        out._backward = backward
    return out


def upsample_nearest2x(x: Tensor) -> Tensor:
    """(C,H,W) -> (C,2H,2W) by pixel duplication."""
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise ValueError("upsample_nearest2x expects (C,H,W)")
    c, h, w = x.data.shape
    out = _node(np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2), (x,))
    if out.requires_grad:
        def backward():
            g = out.grad.reshape(c, h, 2, w, 2)
            _accum(x, g.sum(axis=(2, 4)))
        out._backward = backward
    return out


# nonlinearities ----------------------------------------------------------


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = as_tensor(x)
    phi = 0.5 * (1.0 + erf(x.data * x.data.dtype.type(_INV_SQRT2)))
    out = _node(x.data * phi, (x,))
    if out.requires_grad:
        def backward():
            d = x.data
            pdf = np.exp(-0.5 * d * d) * d.dtype.type(_INV_SQRT_2PI)
            _accum(x, out.grad * (phi + d * pdf))
        out._backward = backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)
    out = _node(s, (x,))
    if out.requires_grad:
        def backward():
            _accum(x, out.grad * s * (1.0 - s))
        out._backward = backward
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _node(s, (x,))
    if out.requires_grad:
        def backward():
            g = out.grad
            _accum(x, (g - (g * s).sum(axis=axis, keepdims=True)) * s)
        out._backward = backward
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift.

    Statistics are accumulated in float64 regardless of the working dtype.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ValueError("layer_norm gamma/beta must have shape (last_dim,)")
    x64 = x.data.astype(np.float64, copy=False)
    mu = x64.mean(axis=-1, keepdims=True)
    var = np.square(x64 - mu).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x64 - mu) * inv
    val = (xhat * gamma.data.astype(np.float64) + beta.data.astype(np.float64)).astype(x.dtype)
    out = _node(val, (x, gamma, beta))
    if out.requires_grad:
        def backward():
            g = out.grad.astype(np.float64, copy=False)
            lead = tuple(range(g.ndim - 1))
            if gamma.requires_grad:
                _accum(gamma, (g * xhat).sum(axis=lead).astype(gamma.dtype))
            if beta.requires_grad:
                _accum(beta, g.sum(axis=lead).astype(beta.dtype))
            if x.requires_grad:
                gh = g * gamma.data.astype(np.float64)
                m1 = gh.mean(axis=-1, keepdims=True)
                m2 = (gh * xhat).mean(axis=-1, keepdims=True)
                _accum(x, (inv * (gh - m1 - xhat * m2)).astype(x.dtype))
        out._backward = backward
    return out


# reductions and reshaping -------------------------------------------------


def mean(x: Tensor) -> Tensor:
    """Mean of all elements, accumulated in float64, returned as a scalar."""
    x = as_tensor(x)
    n = x.data.size
    if n == 0:
        raise ValueError("mean of an empty tensor")
    val = np.asarray(x.data.sum(dtype=np.float64) / n, dtype=x.dtype)
    out = _node(val, (x,))
    if out.requires_grad:
        def backward():
            _accum(x, np.full(x.data.shape, out.grad / n, dtype=x.dtype))
        out._backward = backward
    return out


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared elementwise difference (the shared loss reduction)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"mse shape mismatch: {a.data.shape} vs {b.data.shape}")
    d = a - b
    return mean(mul(d, d))


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat of no tensors")
    for t in ts[1:]:
        _check_same_dtype(ts[0], t)
    out = _node(np.concatenate([t.data for t in ts], axis=axis), ts)
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in ts]
        def backward():
            g = out.grad
            offset = 0
            index = [slice(None)] * g.ndim
            for t, sz in zip(ts, sizes):
                if t.requires_grad:
                    index[axis] = slice(offset, offset + sz)
                    _accum(t, g[tuple(index)])
                offset += sz
        out._backward = backward
    return out


def getitem(x: Tensor, key) -> Tensor:
    """Basic (non-fancy) indexing; gradient scatters back into the slice."""
    x = as_tensor(x)
    out = _node(x.data[key], (x,))
    if out.requires_grad:
        def backward():
            buf = np.zeros_like(x.data)
            buf[key] += out.grad
            _accum(x, buf)
        out._backward = backward
    return out


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    out = _node(x.data.reshape(shape), (x,))
    if out.requires_grad:
        def backward():
            _accum(x, out.grad.reshape(x.data.shape))
        out._backward = backward
    return out


def transpose(x: Tensor, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    out = _node(x.data.transpose(axes), (x,))
    if out.requires_grad:
        inverse = tuple(np.argsort(axes))
        def backward():
            _accum(x, out.grad.transpose(inverse))
        out._backward = backward
    return out


def replace_values(x: Tensor, new_data: np.ndarray) -> Tensor:
    """Straight-through substitution: forward takes new_data, gradient is identity."""
    x = as_tensor(x)
    new_data = np.asarray(new_data, dtype=x.dtype)
    if new_data.shape != x.data.shape:
        raise ValueError("replace_values needs matching shapes")
    out = _node(new_data, (x,))
    if out.requires_grad:
        def backward():
            _accum(x, out.grad)
        out._backward = backward
    return out


# graph traversal ----------------------------------------------------------


def backward(loss: Tensor, params: dict[str, Tensor] | None = None):
    """Reverse-mode sweep from a scalar loss.

    Populates .grad on every reachable requires_grad tensor. When a
    params mapping is supplied, returns {name: gradient array}, with
    zeros for parameters the loss never touched.
    """
    if loss.data.size != 1:
        raise ValueError("backward requires a scalar loss")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward()
    if params is not None:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in params.items()
        }
    return None


def zero_grads(params: Iterable[Tensor] | dict[str, Tensor]) -> None:
    values = params.values() if isinstance(params, dict) else params
    for t in values:
        t.grad = None
