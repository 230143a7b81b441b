"""Backend selection for the convolution and pooling inner loops.

The compiled ``_ckernels`` extension is used when importable; otherwise the
numpy implementation in ``_kernels_py`` is used. Set ``ELASPOOF_KERNELS`` to
``python`` or ``cython`` to force one. Both backends are bit-identical.
"""

import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)


def _load_compiled():
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


def _select():
    wanted = os.environ.get("ELASPOOF_KERNELS", "auto").strip().lower()
    if wanted == "python":
        return _kernels_py, "python"
    compiled = _load_compiled()
    if compiled is not None:
        return compiled, "cython"
    if wanted == "cython":
        raise ImportError("ELASPOOF_KERNELS=cython but the compiled extension is not built")
    log.debug("compiled kernels unavailable, using numpy fallback")
    return _kernels_py, "python"


_backend, BACKEND = _select()

python_backend = _kernels_py
compiled_backend = _load_compiled()


def im2col(x, kh, kw, stride):
    return _backend.im2col(x, kh, kw, stride)


def col2im(cols, height, width, stride):
    return _backend.col2im(cols, height, width, stride)


def maxpool_forward(x, ph, pw, stride):
    return _backend.maxpool_forward(x, ph, pw, stride)


def maxpool_backward(argmax, grad_out, height, width, overlapping):
    return _backend.maxpool_backward(argmax, grad_out, height, width, overlapping)
