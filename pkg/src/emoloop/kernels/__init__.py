"""Convolution kernel backend selection.

Prefers the compiled Cython extension; falls back to the pure-numpy
implementation when the extension is missing or EMOLOOP_PURE_PY=1 is set.
``BACKEND`` names the active choice so benchmarks and logs can report it.
"""

import os

from . import conv_np

if os.environ.get("EMOLOOP_PURE_PY") == "1":
    _impl = conv_np
    BACKEND = "numpy"
else:
    try:
        from . import _conv_cy as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = conv_np
        BACKEND = "numpy"

im2col = _impl.im2col
col2im = _impl.col2im

__all__ = ["BACKEND", "im2col", "col2im", "conv_np"]
