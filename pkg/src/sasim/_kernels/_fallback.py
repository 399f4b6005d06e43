"""Pure-python (numpy) kernel implementations.

Semantics match the native extension; the native build exists only for
speed.  Integer inputs produce bit-identical results across backends;
float accumulation order may differ in the last ulp.
"""

from collections import OrderedDict

import numpy as np


def _out_extent(size, f, stride, pad, dil):
    return (size + 2 * pad - dil * (f - 1) - 1) // stride + 1


def conv2d_nhwc(x, w, sh, sw, ph, pw, dh, dw):
    """Direct convolution, NHWC input, HWCN filter, virtual zero padding.

    Accumulates one filter tap at a time (row-major over taps), which is
    also the order the decomposed-tile simulation uses.
    """
    n, hi, wi, ci = x.shape
    hf, wf, _, co = w.shape
    ho = _out_extent(hi, hf, sh, ph, dh)
    wo = _out_extent(wi, wf, sw, pw, dw)
    out = np.zeros((n, ho, wo, co), dtype=np.result_type(x, w))
    for r in range(hf):
        # output rows whose input row i*sh + r*dh - ph lands in bounds
        i0 = max(0, -(-(ph - r * dh) // sh))
        i1 = min(ho, (hi - 1 - r * dh + ph) // sh + 1)
        if i0 >= i1:
            continue
        for s in range(wf):
            j0 = max(0, -(-(pw - s * dw) // sw))
            j1 = min(wo, (wi - 1 - s * dw + pw) // sw + 1)
            if j0 >= j1:
                continue
            hs = slice(i0 * sh + r * dh - ph, (i1 - 1) * sh + r * dh - ph + 1, sh)
            ws = slice(j0 * sw + s * dw - pw, (j1 - 1) * sw + s * dw - pw + 1, sw)
            out[:, i0:i1, j0:j1, :] += x[:, hs, ws, :] @ w[r, s]
    return out


def tile_gather_nhwc(x, r, s, sh, sw, ph, pw, dh, dw, ho, wo):
    """Gather one decomposed 1x1 tile into an (n*ho*wo, c) matrix."""
    n, hi, wi, ci = x.shape
    hidx = np.arange(ho) * sh + r * dh - ph
    widx = np.arange(wo) * sw + s * dw - pw
    hok = (hidx >= 0) & (hidx < hi)
    wok = (widx >= 0) & (widx < wi)
    vals = x[:, np.clip(hidx, 0, hi - 1)][:, :, np.clip(widx, 0, wi - 1), :]
    mask = (hok[:, None] & wok[None, :]).astype(vals.dtype)
    vals = vals * mask[None, :, :, None]
    return np.ascontiguousarray(vals.reshape(n * ho * wo, ci))


def im2col_nhwc(x, hf, wf, sh, sw, ph, pw, dh, dw, channel_first):
    """Explicit lowering to an (n*ho*wo, hf*wf*c) row-major matrix.

    Column k is (r*wf + s)*c + ch when channel_first, else
    (ch*hf + r)*wf + s; each ordering is generated from its own index
    bijection rather than by permuting the other.
    """
    n, hi, wi, ci = x.shape
    ho = _out_extent(hi, hf, sh, ph, dh)
    wo = _out_extent(wi, wf, sw, pw, dw)
    out = np.zeros((n * ho * wo, hf * wf * ci), dtype=x.dtype)
    chans = np.arange(ci)
    for r in range(hf):
        for s in range(wf):
            if channel_first:
                cols = (r * wf + s) * ci + chans
            else:
                cols = (chans * hf + r) * wf + s
            out[:, cols] = tile_gather_nhwc(x, r, s, sh, sw, ph, pw, dh, dw, ho, wo)
    return out


def lru_simulate(keys, capacity):
    """Fully-associative LRU over a key stream; returns (hits, misses)."""
    total = len(keys)
    if capacity <= 0:
        return 0, total
    cache = OrderedDict()
    hits = 0
    for k in np.asarray(keys).tolist():
        if k in cache:
            hits += 1
            cache.move_to_end(k)
        else:
            if len(cache) >= capacity:
                cache.popitem(last=False)
            cache[k] = None
    return hits, total - hits
