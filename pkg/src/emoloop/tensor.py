"""Reverse-mode automatic differentiation over dense float64 arrays.

Every model computation in this package flows through :class:`DiffTensor`.
Forward ops build a graph of parent links and backward closures; calling
:func:`backward` on a scalar loss walks the graph in reverse topological
order and accumulates gradients by summation. Storage is row-major numpy
float64 throughout — the test suite leans on tight finite-difference checks,
so no reduced precision anywhere.

Gradients accumulate across uses (x + x gives grad 2); callers zero grads
between optimization steps.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from . import kernels


class GradMode:
    """Global switch: inference paths disable graph construction."""

    enabled = True


class no_grad:
    def __enter__(self):
        self._prev = GradMode.enabled
        GradMode.enabled = False
        return self

    def __exit__(self, *exc):
        GradMode.enabled = self._prev
        return False


class DiffTensor:
    """Dense float64 array with an optional gradient and graph links."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._bw = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the stored values."""
        return self.data.reshape(-1)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "DiffTensor":
        return DiffTensor(self.data)

    def __repr__(self):
        return f"DiffTensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_scalar(self, p)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


class Parameter:
    """Named trainable tensor; names are unique within a model and persist
    byte-identically through checkpoints."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, data):
        self.name = name
        self.tensor = DiffTensor(data, requires_grad=True)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    def zero_grad(self):
        self.tensor.grad = None

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


def _as_tensor(x) -> DiffTensor:
    return x if isinstance(x, DiffTensor) else DiffTensor(x)


def _make(data: np.ndarray, parents: tuple, bw) -> DiffTensor:
    """Create an op result; graph links only when grad flow is live."""
    out = DiffTensor(data)
    if GradMode.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._bw = bw
    return out


def _accum(t: DiffTensor, g: np.ndarray):
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise arithmetic ---------------------------------------------


def add(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def div(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data / b.data

    def bw(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), bw)


def neg(a: DiffTensor) -> DiffTensor:
    return _make(-a.data, (a,), lambda g: _accum(a, -g))


def pow_scalar(a: DiffTensor, p: float) -> DiffTensor:
    out = a.data**p
    return _make(out, (a,), lambda g: _accum(a, g * p * a.data ** (p - 1)))


def exp(a: DiffTensor) -> DiffTensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: _accum(a, g * out))


def log(a: DiffTensor) -> DiffTensor:
    return _make(np.log(a.data), (a,), lambda g: _accum(a, g / a.data))


def sqrt(a: DiffTensor) -> DiffTensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: _accum(a, g * 0.5 / out))


def relu(a: DiffTensor) -> DiffTensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: _accum(a, g * mask))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: DiffTensor) -> DiffTensor:
    """Exact-erf GELU: x * Phi(x)."""
    phi_cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out = a.data * phi_cdf

    def bw(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT_2PI
        _accum(a, g * (phi_cdf + a.data * pdf))

    return _make(out, (a,), bw)


# -- reductions ----------------------------------------------------------


def tsum(a: DiffTensor, axis=None, keepdims=False) -> DiffTensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        _accum(a, np.broadcast_to(g, a.shape).copy())

    return _make(out, (a,), bw)


def tmean(a: DiffTensor, axis=None, keepdims=False) -> DiffTensor:
    n = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


# -- shape manipulation ---------------------------------------------------


def reshape(a: DiffTensor, shape) -> DiffTensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: _accum(a, g.reshape(old)))


def transpose(a: DiffTensor, axes=None) -> DiffTensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return _make(
        np.ascontiguousarray(a.data.transpose(axes)),
        (a,),
        lambda g: _accum(a, np.ascontiguousarray(g.transpose(inv))),
    )


def swap_last(a: DiffTensor) -> DiffTensor:
    """Transpose the trailing two axes (matrix transpose on stacks)."""
    axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    return transpose(a, axes)


def broadcast_to(a: DiffTensor, shape) -> DiffTensor:
    shape = tuple(shape)
    out = np.broadcast_to(a.data, shape).copy()
    return _make(out, (a,), lambda g: _accum(a, _unbroadcast(g, a.shape)))


def concat(tensors, axis: int = 0) -> DiffTensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, np.ascontiguousarray(g[tuple(idx)]))

    return _make(out, tuple(tensors), bw)


def narrow(a: DiffTensor, axis: int, start: int, length: int) -> DiffTensor:
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[idx] = g
            _accum(a, full)

    return _make(np.ascontiguousarray(a.data[idx]), (a,), bw)


def gather_rows(a: DiffTensor, indices) -> DiffTensor:
    """Select rows of a 2-D table; backward scatter-adds into the rows."""
    idx = np.asarray(indices, dtype=np.int64)

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            _accum(a, full)

    return _make(a.data[idx], (a,), bw)


# -- linear algebra --------------------------------------------------------


def matmul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Matrix product with numpy stacking semantics (2-D up to 4-D operands).

    Backward: dL/da = g @ b^T, dL/db = a^T @ g, reduced over broadcast
    batch dimensions.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ValueError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accum(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accum(b, _unbroadcast(gb, b.shape))

    return _make(np.matmul(a.data, b.data), (a, b), bw)


# -- fused neural-net primitives -------------------------------------------


def softmax(a: DiffTensor, axis: int = -1) -> DiffTensor:
    """Numerically stabilized softmax along ``axis``."""
    if not -a.ndim <= axis < a.ndim:
        raise ValueError(f"softmax axis {axis} out of bounds for shape {a.shape}")
    out = a.data - a.data.max(axis=axis, keepdims=True)
    np.exp(out, out=out)
    out /= out.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        _accum(a, out * (g - dot))

    return _make(out, (a,), bw)


def log_softmax(a: DiffTensor, axis: int = -1) -> DiffTensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def bw(g):
        _accum(a, g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), bw)


def layer_norm(x: DiffTensor, gain: DiffTensor, bias: DiffTensor, eps: float = 1e-6) -> DiffTensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    gain, bias = _as_tensor(gain), _as_tensor(bias)
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ValueError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match last dim {x.shape[-1]}"
        )
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data

    def bw(g):
        if gain.requires_grad:
            _accum(gain, (g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            _accum(bias, g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * (dxhat - m1 - xhat * m2))

    return _make(out, (x, gain, bias), bw)


# -- convolution / resampling ----------------------------------------------


def conv2d(x: DiffTensor, w: DiffTensor, b: DiffTensor | None = None, pad: int = 1) -> DiffTensor:
    """3x3-style same convolution, stride 1, via the active im2col backend."""
    bsz, cin, h, wid = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ValueError(f"conv2d channel mismatch: input {cin} vs weight {cin_w}")
    oh, ow = h + 2 * pad - kh + 1, wid + 2 * pad - kw + 1
    cols = kernels.im2col(np.ascontiguousarray(x.data), kh, kw, pad)
    wmat = w.data.reshape(cout, -1)
    out = np.matmul(wmat, cols).reshape(bsz, cout, oh, ow)
    if b is not None:
        out += b.data.reshape(1, cout, 1, 1)
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        gmat = g.reshape(bsz, cout, oh * ow)
        if b is not None and b.requires_grad:
            _accum(b, gmat.sum(axis=(0, 2)))
        if w.requires_grad:
            gw = np.matmul(gmat, cols.transpose(0, 2, 1)).sum(axis=0)
            _accum(w, gw.reshape(w.shape))
        if x.requires_grad:
            gcols = np.matmul(wmat.T, gmat)
            _accum(x, kernels.col2im(np.ascontiguousarray(gcols), cin, h, wid, kh, kw, pad))

    return _make(out, parents, bw)


def avg_pool2d(x: DiffTensor) -> DiffTensor:
    """Factor-2 average pooling."""
    bsz, c, h, w = x.shape
    out = x.data.reshape(bsz, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def bw(g):
        gx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
        _accum(x, gx)

    return _make(out, (x,), bw)


def upsample2(x: DiffTensor) -> DiffTensor:
    """Factor-2 nearest-neighbor upsampling."""
    bsz, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def bw(g):
        _accum(x, g.reshape(bsz, c, h, 2, w, 2).sum(axis=(3, 5)))

    return _make(out, (x,), bw)


# -- graph walk --------------------------------------------------------------


def backward(loss: DiffTensor):
    """Populate gradients of every reachable requires-grad tensor.

    ``loss`` must be scalar; traversal is iterative (no recursion limits)
    and single-threaded.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward() requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    topo: list[DiffTensor] = []
    seen = set()
    stack: list[tuple[DiffTensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._bw is not None and node.grad is not None:
            node._bw(node.grad)
