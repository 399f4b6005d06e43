"""Lowering index mathematics.

Explicit im2col in both column orderings, the column permutation relating
them, decomposition of a filter into per-position 1x1 tiles, and overlap
analysis between tile working sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._kernels import im2col_nhwc, tile_gather_nhwc
from .core import ConvSpec, Layout, ShapeError, Tensor, _as_filter_hwcn, _as_nhwc


class ColumnOrdering(Enum):
    """How the lowered matrix's K dimension interleaves (h_f, w_f, c).

    CHANNEL_LAST keeps a whole sliding window together per channel:
    ``k = (c*h_f + r)*w_f + s``.  CHANNEL_FIRST keeps the channels of one
    filter position together: ``k = (r*w_f + s)*c_i + c``.
    """

    CHANNEL_LAST = "channel_last"
    CHANNEL_FIRST = "channel_first"

    def index(self, r: int, s: int, c: int, spec: ConvSpec) -> int:
        if self is ColumnOrdering.CHANNEL_FIRST:
            return (r * spec.w_f + s) * spec.c_i + c
        return (c * spec.h_f + r) * spec.w_f + s

    def unindex(self, k: int, spec: ConvSpec) -> tuple:
        """Inverse bijection: column index -> (r, s, c)."""
        if self is ColumnOrdering.CHANNEL_FIRST:
            c = k % spec.c_i
            rs = k // spec.c_i
            return rs // spec.w_f, rs % spec.w_f, c
        s = k % spec.w_f
        cr = k // spec.w_f
        return cr % spec.h_f, s, cr // spec.h_f


@dataclass(frozen=True)
class TileDescriptor:
    """One decomposed 1x1 filter position <r, s>.

    Output position (i, j) gathers the IFMap coordinate
    ``(i*stride_h + r*dilation_h - pad_h, j*stride_w + s*dilation_w - pad_w)``;
    out-of-range coordinates read as zero.
    """

    r: int
    s: int
    spec: ConvSpec

    def gather(self, i: int, j: int) -> tuple:
        sp = self.spec
        return (
            i * sp.stride_h + self.r * sp.dilation_h - sp.pad_h,
            j * sp.stride_w + self.s * sp.dilation_w - sp.pad_w,
        )

    def input_rows(self) -> np.ndarray:
        """Gathered input row per output row; -1 marks out-of-range."""
        sp = self.spec
        rows = np.arange(sp.h_o) * sp.stride_h + self.r * sp.dilation_h - sp.pad_h
        rows[(rows < 0) | (rows >= sp.h_i)] = -1
        return rows

    def input_cols(self) -> np.ndarray:
        sp = self.spec
        cols = np.arange(sp.w_o) * sp.stride_w + self.s * sp.dilation_w - sp.pad_w
        cols[(cols < 0) | (cols >= sp.w_i)] = -1
        return cols

    def coords(self) -> set:
        """In-bounds IFMap (h, w) coordinates touched by this tile."""
        rows = self.input_rows()
        cols = self.input_cols()
        return {(int(h), int(w)) for h in rows[rows >= 0] for w in cols[cols >= 0]}

    def in_bounds_count(self) -> int:
        return int((self.input_rows() >= 0).sum()) * int((self.input_cols() >= 0).sum())

    def gather_matrix(self, ifmap: Tensor) -> np.ndarray:
        """The tile's (n*h_o*w_o, c_i) input matrix, zeros at padding."""
        sp = self.spec
        x = _as_nhwc(ifmap, sp)
        return tile_gather_nhwc(
            x, self.r, self.s, sp.stride_h, sp.stride_w, sp.pad_h, sp.pad_w,
            sp.dilation_h, sp.dilation_w, sp.h_o, sp.w_o,
        )


def im2col_explicit(ifmap: Tensor, spec: ConvSpec, ord: ColumnOrdering) -> Tensor:
    """Lower the IFMap to the (n*h_o*w_o) x (h_f*w_f*c_i) feature matrix.

    Batch elements are stacked along rows; row (b*h_o + i)*w_o + j holds
    the receptive field of output (b, i, j) in ``ord``'s column order.
    """
    x = _as_nhwc(ifmap, spec)
    mat = im2col_nhwc(
        x, spec.h_f, spec.w_f, spec.stride_h, spec.stride_w,
        spec.pad_h, spec.pad_w, spec.dilation_h, spec.dilation_w,
        ord is ColumnOrdering.CHANNEL_FIRST,
    )
    return Tensor.from_array(mat, Layout.ROW_MAJOR)


def lower_filter(filters: Tensor, spec: ConvSpec, ord: ColumnOrdering) -> Tensor:
    """Flatten filters to (h_f*w_f*c_i) x c_o with rows in ``ord``'s order."""
    f = _as_filter_hwcn(filters, spec)
    k = spec.gemm_k
    out = np.empty((k, spec.c_o), dtype=f.dtype)
    for r in range(spec.h_f):
        for s in range(spec.w_f):
            for c in range(spec.c_i):
                out[ord.index(r, s, c, spec)] = f[r, s, c]
    return Tensor.from_array(out, Layout.ROW_MAJOR)


def column_permutation(spec: ConvSpec) -> np.ndarray:
    """perm such that CL_matrix[:, perm[k]] == CF_matrix[:, k] for all k."""
    perm = np.empty(spec.gemm_k, dtype=np.int64)
    cf, cl = ColumnOrdering.CHANNEL_FIRST, ColumnOrdering.CHANNEL_LAST
    for r in range(spec.h_f):
        for s in range(spec.w_f):
            for c in range(spec.c_i):
                perm[cf.index(r, s, c, spec)] = cl.index(r, s, c, spec)
    return perm


def decompose_tiles(spec: ConvSpec) -> list:
    """All h_f*w_f decomposed 1x1 tiles in row-major filter order.

    Accumulating every tile's gather matrix times its (c_i x c_o) filter
    slice reproduces the direct convolution; the accumulation order is
    free, but callers keep it fixed for float reproducibility.
    """
    return [TileDescriptor(r, s, spec) for r in range(spec.h_f) for s in range(spec.w_f)]


def tile_overlap(a: TileDescriptor, b: TileDescriptor, spec: ConvSpec) -> float:
    """Jaccard overlap of two tiles' in-bounds working sets.

    Padding coordinates are excluded: only data that actually lives in
    DRAM counts toward reuse.
    """
    if a.spec != spec or b.spec != spec:
        raise ShapeError("tiles do not belong to the given layer")
    ca, cb = a.coords(), b.coords()
    union = len(ca | cb)
    if union == 0:
        return 1.0
    return len(ca & cb) / union


def lowered_memory_footprint(spec: ConvSpec, elem_bytes: int = 2) -> dict:
    """Bytes of the original IFMap vs the materialized lowered matrix."""
    original = spec.n * spec.c_i * spec.h_i * spec.w_i * elem_bytes
    lowered = spec.n * spec.h_o * spec.w_o * spec.h_f * spec.w_f * spec.c_i * elem_bytes
    return {
        "original_bytes": original,
        "lowered_bytes": lowered,
        "ratio": lowered / original,
    }
