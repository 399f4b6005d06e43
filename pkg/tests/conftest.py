import numpy as np
import pytest

from sasim import ConvSpec


def reference_conv(x, f, spec: ConvSpec):
    """Independent brute-force convolution oracle.

    Plain nested loops with explicit bounds checks; shares no code with
    the library kernels.
    """
    out = np.zeros((spec.n, spec.h_o, spec.w_o, spec.c_o),
                   dtype=np.result_type(x, f))
    for b in range(spec.n):
        for ho in range(spec.h_o):
            for wo in range(spec.w_o):
                for co in range(spec.c_o):
                    acc = 0
                    for hf in range(spec.h_f):
                        hi = ho * spec.stride_h + hf * spec.dilation_h - spec.pad_h
                        if hi < 0 or hi >= spec.h_i:
                            continue
                        for wf in range(spec.w_f):
                            wi = wo * spec.stride_w + wf * spec.dilation_w - spec.pad_w
                            if wi < 0 or wi >= spec.w_i:
                                continue
                            for c in range(spec.c_i):
                                acc += x[b, hi, wi, c] * f[hf, wf, c, co]
                    out[b, ho, wo, co] = acc
    return out


def naive_gemm(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.result_type(a, b))
    for i in range(m):
        for j in range(n):
            acc = 0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def int_operands(rng, spec: ConvSpec, lo=-4, hi=5):
    x = rng.integers(lo, hi, size=(spec.n, spec.h_i, spec.w_i, spec.c_i)).astype(np.int64)
    f = rng.integers(lo, hi, size=(spec.h_f, spec.w_f, spec.c_i, spec.c_o)).astype(np.int64)
    return x, f


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
