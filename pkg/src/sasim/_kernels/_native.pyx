# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: direct convolution, lowering gathers, LRU replay.

Must stay semantically identical to ``_fallback``; integer results are
bit-exact across the two, float accumulation may differ in the last ulp.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused num_t:
    cnp.int64_t
    cnp.float32_t
    cnp.float64_t


def conv2d_nhwc(num_t[:, :, :, ::1] x, num_t[:, :, :, ::1] w,
                int sh, int sw, int ph, int pw, int dh, int dw):
    cdef Py_ssize_t n = x.shape[0], hi = x.shape[1], wi = x.shape[2], ci = x.shape[3]
    cdef Py_ssize_t hf = w.shape[0], wf = w.shape[1], co = w.shape[3]
    cdef Py_ssize_t ho = (hi + 2 * ph - dh * (hf - 1) - 1) // sh + 1
    cdef Py_ssize_t wo = (wi + 2 * pw - dw * (wf - 1) - 1) // sw + 1
    out_np = np.zeros((n, ho, wo, co), dtype=np.asarray(x).dtype)
    cdef num_t[:, :, :, ::1] out = out_np
    cdef Py_ssize_t b, i, j, r, s, c, k, hii, wii
    cdef num_t xv
    for b in range(n):
        for r in range(hf):
            for s in range(wf):
                for i in range(ho):
                    hii = i * sh + r * dh - ph
                    if hii < 0 or hii >= hi:
                        continue
                    for j in range(wo):
                        wii = j * sw + s * dw - pw
                        if wii < 0 or wii >= wi:
                            continue
                        # rank-1 update: unit stride over the output
                        # channels of both filter row and output row
                        for c in range(ci):
                            xv = x[b, hii, wii, c]
                            for k in range(co):
                                out[b, i, j, k] += xv * w[r, s, c, k]
    return out_np


def tile_gather_nhwc(num_t[:, :, :, ::1] x, int r, int s,
                     int sh, int sw, int ph, int pw, int dh, int dw,
                     Py_ssize_t ho, Py_ssize_t wo):
    cdef Py_ssize_t n = x.shape[0], hi = x.shape[1], wi = x.shape[2], ci = x.shape[3]
    out_np = np.zeros((n * ho * wo, ci), dtype=np.asarray(x).dtype)
    cdef num_t[:, ::1] out = out_np
    cdef Py_ssize_t b, i, j, c, hii, wii, row
    for b in range(n):
        for i in range(ho):
            hii = i * sh + r * dh - ph
            if hii < 0 or hii >= hi:
                continue
            for j in range(wo):
                wii = j * sw + s * dw - pw
                if wii < 0 or wii >= wi:
                    continue
                row = (b * ho + i) * wo + j
                for c in range(ci):
                    out[row, c] = x[b, hii, wii, c]
    return out_np


def im2col_nhwc(num_t[:, :, :, ::1] x, int hf, int wf,
                int sh, int sw, int ph, int pw, int dh, int dw,
                bint channel_first):
    cdef Py_ssize_t n = x.shape[0], hi = x.shape[1], wi = x.shape[2], ci = x.shape[3]
    cdef Py_ssize_t ho = (hi + 2 * ph - dh * (hf - 1) - 1) // sh + 1
    cdef Py_ssize_t wo = (wi + 2 * pw - dw * (wf - 1) - 1) // sw + 1
    out_np = np.zeros((n * ho * wo, hf * wf * ci), dtype=np.asarray(x).dtype)
    cdef num_t[:, ::1] out = out_np
    cdef Py_ssize_t b, i, j, r, s, c, hii, wii, row, col
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                for r in range(hf):
                    hii = i * sh + r * dh - ph
                    if hii < 0 or hii >= hi:
                        continue
                    for s in range(wf):
                        wii = j * sw + s * dw - pw
                        if wii < 0 or wii >= wi:
                            continue
                        for c in range(ci):
                            if channel_first:
                                col = (r * wf + s) * ci + c
                            else:
                                col = (c * hf + r) * wf + s
                            out[row, col] = x[b, hii, wii, c]
    return out_np


def lru_simulate(cnp.int64_t[::1] keys, Py_ssize_t capacity):
    """Fully-associative LRU replay; returns (hits, misses).

    Slot recency is kept in an intrusive doubly-linked list (sentinels at
    ``capacity``/``capacity+1``) so each access is O(1).
    """
    cdef Py_ssize_t total = keys.shape[0]
    cdef Py_ssize_t hits = 0
    if capacity <= 0:
        return 0, total
    cdef dict pos = {}
    key_arr = np.empty(capacity, dtype=np.int64)
    nxt_arr = np.empty(capacity + 2, dtype=np.intp)
    prv_arr = np.empty(capacity + 2, dtype=np.intp)
    cdef cnp.int64_t[::1] slot_key = key_arr
    cdef Py_ssize_t[::1] nxt = nxt_arr
    cdef Py_ssize_t[::1] prv = prv_arr
    cdef Py_ssize_t head = capacity       # LRU side sentinel
    cdef Py_ssize_t tail = capacity + 1   # MRU side sentinel
    nxt[head] = tail
    prv[tail] = head
    cdef Py_ssize_t filled = 0, slot, t
    cdef cnp.int64_t k
    cdef object got
    for t in range(total):
        k = keys[t]
        got = pos.get(k)
        if got is not None:
            hits += 1
            slot = <Py_ssize_t> got
            nxt[prv[slot]] = nxt[slot]
            prv[nxt[slot]] = prv[slot]
        else:
            if filled < capacity:
                slot = filled
                filled += 1
            else:
                slot = nxt[head]
                del pos[slot_key[slot]]
                nxt[head] = nxt[slot]
                prv[nxt[slot]] = head
            slot_key[slot] = k
            pos[k] = slot
        prv[slot] = prv[tail]
        nxt[slot] = tail
        nxt[prv[slot]] = slot
        prv[tail] = slot
    return hits, total - hits
