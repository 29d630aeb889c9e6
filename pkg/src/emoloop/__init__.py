"""Desk-scale closed loop: hierarchical emotion encoder, condition-fused
diffusion generator, and the dual-feedback training cycle, verified end to
end on a procedural synthetic corpus."""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND
from .tensor import DiffTensor, Parameter, backward, no_grad

__all__ = ["DiffTensor", "Parameter", "backward", "no_grad", "KERNEL_BACKEND", "__version__"]
