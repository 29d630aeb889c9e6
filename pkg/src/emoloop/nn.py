"""Parameter containers and the layer zoo shared by every model.

A Module tracks Parameters and child Modules by attribute assignment;
``named_parameters`` walks the tree with dot-joined names, which is what the
checkpoint container stores. Iteration order is insertion order, so
checkpoints are deterministic.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import (
    DiffTensor,
    Parameter,
    broadcast_to,
    concat,
    gelu,
    layer_norm,
    matmul,
    relu,
    reshape,
    softmax,
    transpose,
)


class Module:
    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self.__dict__.setdefault("_params", {})[name] = value
        elif isinstance(value, Module):
            self.__dict__.setdefault("_modules", {})[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self.__dict__.get("_params", {}).items():
            yield (prefix + name, p)
        for name, m in self.__dict__.get("_modules", {}).items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters(prefix)}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = ""):
        own = dict(self.named_parameters(prefix))
        missing = sorted(set(own) - set(state))
        if missing:
            raise KeyError(f"checkpoint missing parameters: {missing[:4]}...")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: checkpoint shape {arr.shape} != model {p.data.shape}")
            p.tensor.data = arr.copy()
            p.tensor.grad = None

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


class ModuleList(Module):
    def __init__(self, modules):
        self.items = list(modules)
        for i, m in enumerate(self.items):
            setattr(self, str(i), m)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def __len__(self):
        return len(self.items)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 init_std: float = 0.02, zero_init: bool = False):
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            w = rng.normal(0.0, init_std, size=(d_in, d_out))
        self.weight = Parameter("weight", w)
        self.bias = Parameter("bias", np.zeros(d_out))

    def __call__(self, x: DiffTensor) -> DiffTensor:
        return matmul(x, self.weight.tensor) + self.bias.tensor


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        self.gain = Parameter("gain", np.ones(dim))
        self.bias = Parameter("bias", np.zeros(dim))
        self.eps = eps

    def __call__(self, x: DiffTensor) -> DiffTensor:
        return layer_norm(x, self.gain.tensor, self.bias.tensor, self.eps)


class Mlp(Module):
    """Two-layer perceptron; activation is relu or gelu."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng, act: str = "gelu",
                 zero_init_out: bool = False):
        self.fc1 = Linear(d_in, d_hidden, rng)
        self.fc2 = Linear(d_hidden, d_out, rng, zero_init=zero_init_out)
        self._act = gelu if act == "gelu" else relu

    def __call__(self, x: DiffTensor) -> DiffTensor:
        return self.fc2(self._act(self.fc1(x)))


class MultiHeadAttention(Module):
    """Scaled dot-product attention, per head, concatenated and output-projected.

    ``__call__(q, k, v)`` accepts [B, T, d] token blocks; self-attention passes
    the same block three times, cross-attention distinct ones. Attention
    weights per head sum to 1 over keys; the most recent weights are kept on
    ``last_attn`` when requested (detached numpy, [B, heads, Tq, Tk]).
    """

    def __init__(self, dim: int, heads: int, kv_dim: int | None = None,
                 rng: np.random.Generator | None = None):
        if dim % heads != 0:
            raise ValueError(f"model dim {dim} not divisible by {heads} heads")
        kv_dim = kv_dim or dim
        self.dim, self.heads, self.head_dim = dim, heads, dim // heads
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(kv_dim, dim, rng)
        self.wv = Linear(kv_dim, dim, rng)
        self.wo = Linear(dim, dim, rng)
        self.last_attn: np.ndarray | None = None

    def _split(self, x: DiffTensor) -> DiffTensor:
        b, t, _ = x.shape
        return transpose(reshape(x, (b, t, self.heads, self.head_dim)), (0, 2, 1, 3))

    def __call__(self, q: DiffTensor, k: DiffTensor | None = None,
                 v: DiffTensor | None = None, keep_weights: bool = False) -> DiffTensor:
        k = q if k is None else k
        v = k if v is None else v
        b, tq, _ = q.shape
        qh = self._split(self.wq(q))
        kh = self._split(self.wk(k))
        vh = self._split(self.wv(v))
        scores = matmul(qh, transpose(kh, (0, 1, 3, 2))) * (1.0 / math.sqrt(self.head_dim))
        attn = softmax(scores, axis=-1)
        if keep_weights:
            self.last_attn = attn.data.copy()
        out = matmul(attn, vh)
        out = reshape(transpose(out, (0, 2, 1, 3)), (b, tq, self.dim))
        return self.wo(out)


class TransformerBlock(Module):
    """Pre-norm block: x + MHA(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, dim: int, heads: int, rng, ffn_mult: int = 4):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng=rng)
        self.norm2 = LayerNorm(dim)
        self.ffn = Mlp(dim, ffn_mult * dim, dim, rng, act="gelu")

    def __call__(self, x: DiffTensor, keep_weights: bool = False) -> DiffTensor:
        x = x + self.attn(self.norm1(x), keep_weights=keep_weights)
        return x + self.ffn(self.norm2(x))


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng, pad: int | None = None,
                 zero_init: bool = False):
        fan_in = c_in * k * k
        if zero_init:
            w = np.zeros((c_out, c_in, k, k))
        else:
            w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(c_out, c_in, k, k))
        self.weight = Parameter("weight", w)
        self.bias = Parameter("bias", np.zeros(c_out))
        self.pad = (k // 2) if pad is None else pad

    def __call__(self, x: DiffTensor) -> DiffTensor:
        from .tensor import conv2d

        return conv2d(x, self.weight.tensor, self.bias.tensor, pad=self.pad)


def expand_rows(table: DiffTensor, batch: int) -> DiffTensor:
    """Tile a [T, d] parameter across a batch -> [B, T, d]."""
    t, d = table.shape
    return broadcast_to(reshape(table, (1, t, d)), (batch, t, d))


def sequence_cat(blocks: list[DiffTensor]) -> DiffTensor:
    """Concatenate token blocks along the token axis."""
    return concat(blocks, axis=1)
