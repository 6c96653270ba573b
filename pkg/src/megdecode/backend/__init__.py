"""Kernel backend selection.

The compiled Cython extension is used when present; the pure-numpy module is
the fallback. Set MEGDECODE_BACKEND=python or =cython to force a choice
(forcing cython raises if the extension was not built).
"""

import os

from . import _kernels_py

_forced = os.environ.get("MEGDECODE_BACKEND", "auto").lower()

_cy = None
if _forced != "python":
    try:
        from . import _kernels_cy as _cy  # type: ignore[no-redef]
    except ImportError:
        if _forced == "cython":
            raise

if _forced == "python" or _cy is None:
    BACKEND_NAME = "python"
    _lf = _pool = _var = _kernels_py
elif _forced == "cython":
    BACKEND_NAME = "cython"
    _lf = _pool = _var = _cy
else:
    # auto: compiled loops win for the depthwise conv and pooling; the full
    # cross-component conv is an im2col matmul where BLAS (numpy) is faster.
    BACKEND_NAME = "auto(cython+python)"
    _lf = _pool = _cy
    _var = _kernels_py

lf_conv_forward = _lf.lf_conv_forward
lf_conv_backward = _lf.lf_conv_backward
maxpool_forward = _pool.maxpool_forward
maxpool_backward = _pool.maxpool_backward
var_conv_forward = _var.var_conv_forward
var_conv_backward = _var.var_conv_backward
