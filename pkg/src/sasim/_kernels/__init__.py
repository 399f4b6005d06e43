"""Hot numeric kernels with a compiled core and a numpy fallback.

The native Cython extension is preferred when importable; set
``SASIM_PURE_PYTHON=1`` to force the fallback.  ``BACKEND`` names the
implementation actually in use.
"""

import os

import numpy as np

from . import _fallback

_KERNEL_DTYPES = (np.int64, np.float32, np.float64)

if os.environ.get("SASIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]

        BACKEND = "native"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"


def _norm(arr):
    """Coerce to a C-contiguous array of a kernel-supported dtype."""
    a = np.asarray(arr)
    if a.dtype not in _KERNEL_DTYPES:
        a = a.astype(np.int64 if np.issubdtype(a.dtype, np.integer) else np.float64)
    return np.ascontiguousarray(a)


def conv2d_nhwc(x, w, sh, sw, ph, pw, dh, dw):
    x, w = _norm(x), _norm(w)
    if x.dtype != w.dtype:
        dt = np.result_type(x, w)
        x, w = x.astype(dt), w.astype(dt)
    # floats route through the BLAS-backed tap accumulation, which beats
    # the compiled scalar loops there; integers have no BLAS path and the
    # compiled loops win (see benchmarks/bench_kernels.py)
    impl = _impl if x.dtype == np.int64 else _fallback
    return impl.conv2d_nhwc(x, w, sh, sw, ph, pw, dh, dw)


def tile_gather_nhwc(x, r, s, sh, sw, ph, pw, dh, dw, ho, wo):
    return _impl.tile_gather_nhwc(_norm(x), r, s, sh, sw, ph, pw, dh, dw, ho, wo)


def im2col_nhwc(x, hf, wf, sh, sw, ph, pw, dh, dw, channel_first):
    return _impl.im2col_nhwc(_norm(x), hf, wf, sh, sw, ph, pw, dh, dw, bool(channel_first))


def lru_simulate(keys, capacity):
    keys = np.ascontiguousarray(np.asarray(keys, dtype=np.int64))
    return _impl.lru_simulate(keys, int(capacity))
