"""Central finite-difference oracle shared by the gradient tests."""

import numpy as np

from emoloop import tensor as T


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar-valued f() w.r.t. every entry of x.

    f must recompute its forward pass from the live array x on each call.
    """
    g = np.zeros_like(x)
    xf, gf = x.reshape(-1), g.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        fp = f()
        xf[i] = orig - h
        fm = f()
        xf[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def numeric_grad_entries(f, x: np.ndarray, flat_indices, h: float = 1e-6) -> np.ndarray:
    """Central differences at selected flat indices only (for large graphs)."""
    xf = x.reshape(-1)
    out = np.zeros(len(flat_indices))
    for k, i in enumerate(flat_indices):
        orig = xf[i]
        xf[i] = orig + h
        fp = f()
        xf[i] = orig - h
        fm = f()
        xf[i] = orig
        out[k] = (fp - fm) / (2.0 * h)
    return out


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


def assert_grads_match(build_loss, tensors, tol: float = 1e-4, h: float = 1e-6):
    """backward() gradients of build_loss() vs finite differences, all entries."""
    for t in tensors:
        t.grad = None
    loss = build_loss()
    T.backward(loss)
    for t in tensors:
        assert t.grad is not None, "tensor unreachable from loss"
        analytic = t.grad.copy()
        numeric = numeric_grad(lambda: build_loss().item(), t.data, h=h)
        err = max_rel_err(analytic, numeric)
        assert err < tol, f"gradient mismatch: rel err {err:.3g} >= {tol}"
