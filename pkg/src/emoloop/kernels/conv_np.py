"""Pure-numpy convolution kernels (im2col / col2im).

Fallback backend used when the compiled extension is unavailable. Both
backends expose the same three functions over C-contiguous float64 arrays:

    im2col(x, kh, kw, pad)  -> [B, C*kh*kw, OH*OW]
    col2im(cols, C, H, W, kh, kw, pad) -> [B, C, H, W]   (scatter-add inverse)

Stride is fixed at 1; downsampling in the models is done by pooling.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col(x: np.ndarray, kh: int, kw: int, pad: int) -> np.ndarray:
    """Unfold kh*kw patches of a padded [B,C,H,W] array into GEMM columns."""
    b, c, h, w = x.shape
    oh, ow = h + 2 * pad - kh + 1, w + 2 * pad - kw + 1
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    sb, sc, sh, sw = x.strides
    view = as_strided(x, shape=(b, c, kh, kw, oh, ow), strides=(sb, sc, sh, sw, sh, sw))
    return np.ascontiguousarray(view).reshape(b, c * kh * kw, oh * ow)


def col2im(cols: np.ndarray, c: int, h: int, w: int, kh: int, kw: int, pad: int) -> np.ndarray:
    """Scatter-add GEMM columns back onto the image grid (adjoint of im2col)."""
    b = cols.shape[0]
    oh, ow = h + 2 * pad - kh + 1, w + 2 * pad - kw + 1
    cols = cols.reshape(b, c, kh, kw, oh, ow)
    out = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    for u in range(kh):
        for v in range(kw):
            out[:, :, u : u + oh, v : v + ow] += cols[:, :, u, v]
    if pad:
        out = out[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(out)
