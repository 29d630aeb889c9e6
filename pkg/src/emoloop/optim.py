"""Optimizers with checkpointable state.

Momentum descent is the default (single state slot per parameter, trivially
deterministic); an adaptive mode with the usual AdamW constants is available
behind the same interface. Optimizers take (name, Parameter) pairs — the
dotted names from Module.named_parameters — so their state rides along in
the same checkpoint container as the model.
"""

from __future__ import annotations

import numpy as np

from .tensor import Parameter

NamedParams = list[tuple[str, Parameter]]


class MomentumSGD:
    def __init__(self, named_params: NamedParams, lr: float, momentum: float = 0.9):
        self.named_params = list(named_params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p.data) for name, p in self.named_params}

    def step(self):
        for name, p in self.named_params:
            if p.grad is None:
                continue
            v = self.velocity[name]
            v *= self.momentum
            v += p.grad
            p.tensor.data = p.data - self.lr * v

    def zero_grad(self):
        for _, p in self.named_params:
            p.zero_grad()

    def state_entries(self) -> dict[str, np.ndarray]:
        out = {f"optim.v.{name}": v for name, v in self.velocity.items()}
        out["optim.meta"] = np.array([self.lr, self.momentum])
        return out

    def load_state(self, entries: dict[str, np.ndarray]):
        for name in self.velocity:
            self.velocity[name] = np.array(entries[f"optim.v.{name}"])


class AdamW:
    def __init__(self, named_params: NamedParams, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.001):
        self.named_params = list(named_params)
        self.lr, self.beta1, self.beta2 = lr, beta1, beta2
        self.eps, self.weight_decay = eps, weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named_params}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.named_params:
            if p.grad is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * p.grad**2
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.tensor.data = p.data - self.lr * (update + self.weight_decay * p.data)

    def zero_grad(self):
        for _, p in self.named_params:
            p.zero_grad()

    def state_entries(self) -> dict[str, np.ndarray]:
        out = {f"optim.m.{name}": m for name, m in self.m.items()}
        out.update({f"optim.v.{name}": v for name, v in self.v.items()})
        out["optim.t"] = np.array(float(self.t))
        out["optim.meta"] = np.array([self.lr, self.beta1, self.beta2, self.eps, self.weight_decay])
        return out

    def load_state(self, entries: dict[str, np.ndarray]):
        self.t = int(float(entries["optim.t"]))
        for name in self.m:
            self.m[name] = np.array(entries[f"optim.m.{name}"])
            self.v[name] = np.array(entries[f"optim.v.{name}"])


def make_optimizer(kind: str, named_params: NamedParams, lr: float) -> MomentumSGD | AdamW:
    if kind == "momentum":
        return MomentumSGD(named_params, lr)
    if kind == "adamw":
        return AdamW(named_params, lr)
    raise ValueError(f"unknown optimizer {kind!r} (expected momentum|adamw)")
