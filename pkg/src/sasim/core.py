"""Ground-truth numeric kernels and the data types shared by every module.

All functional results in the package trace back to :func:`direct_conv`,
which evaluates the convolution by definition (virtual zero padding, no
materialized lowered matrix).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from enum import Enum

import numpy as np

from ._kernels import conv2d_nhwc


class ShapeError(ValueError):
    """Tensor dimensions inconsistent with the requested operation."""


class CapacityError(RuntimeError):
    """On-chip memory cannot hold the requested working set."""

    def __init__(self, required: int, available: int, what: str = "vector memory"):
        self.required = required
        self.available = available
        super().__init__(
            f"{what} capacity exceeded: need {required} bytes, have {available}"
        )


class Layout(Enum):
    """Linearization order of a dense tensor."""

    NCHW = "NCHW"
    NHWC = "NHWC"
    HWCN = "HWCN"
    ROW_MAJOR = "ROW_MAJOR"  # plain 2-D matrix, row major


_LAYOUT_AXES = {
    Layout.NCHW: "NCHW",
    Layout.NHWC: "NHWC",
    Layout.HWCN: "HWCN",
}


@dataclass(frozen=True)
class ConvSpec:
    """Full description of one convolutional layer.

    Output extents follow the standard formula
    ``h_o = (h_i + 2*pad_h - dilation_h*(h_f-1) - 1) // stride_h + 1``.
    """

    n: int
    c_i: int
    h_i: int
    w_i: int
    c_o: int
    h_f: int
    w_f: int
    stride_h: int = 1
    stride_w: int = 1
    pad_h: int = 0
    pad_w: int = 0
    dilation_h: int = 1
    dilation_w: int = 1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.startswith("pad"):
                if v < 0:
                    raise ShapeError(f"{f.name} must be >= 0, got {v}")
            elif v < 1:
                raise ShapeError(f"{f.name} must be >= 1, got {v}")
        for dim in ("h", "w"):
            ext = getattr(self, f"dilation_{dim}") * (getattr(self, f"{dim}_f") - 1) + 1
            padded = getattr(self, f"{dim}_i") + 2 * getattr(self, f"pad_{dim}")
            if ext > padded:
                raise ShapeError(
                    f"effective filter extent {ext} exceeds padded input {padded} "
                    f"along {dim}"
                )

    @property
    def h_o(self) -> int:
        return (self.h_i + 2 * self.pad_h - self.dilation_h * (self.h_f - 1) - 1) // self.stride_h + 1

    @property
    def w_o(self) -> int:
        return (self.w_i + 2 * self.pad_w - self.dilation_w * (self.w_f - 1) - 1) // self.stride_w + 1

    @property
    def macs(self) -> int:
        """Useful multiply-accumulates for the whole layer."""
        return self.n * self.h_o * self.w_o * self.h_f * self.w_f * self.c_i * self.c_o

    # dims of the equivalent GEMM (lowered feature matrix times flattened filter)
    @property
    def gemm_m(self) -> int:
        return self.n * self.h_o * self.w_o

    @property
    def gemm_k(self) -> int:
        return self.h_f * self.w_f * self.c_i

    @property
    def gemm_n(self) -> int:
        return self.c_o

    def with_stride(self, stride: int) -> "ConvSpec":
        return replace(self, stride_h=stride, stride_w=stride)

    @classmethod
    def square(cls, n, c_i, hw_i, c_o, f, stride=1, pad=0, dilation=1) -> "ConvSpec":
        """Convenience constructor for square inputs/filters."""
        return cls(
            n=n, c_i=c_i, h_i=hw_i, w_i=hw_i, c_o=c_o, h_f=f, w_f=f,
            stride_h=stride, stride_w=stride, pad_h=pad, pad_w=pad,
            dilation_h=dilation, dilation_w=dilation,
        )


@dataclass
class Tensor:
    """Dense numeric array with an explicit linearization tag.

    ``dims`` are the extents in layout order (e.g. ``(N, H, W, C)`` for
    NHWC); ``data`` is the flat storage whose row-major reshape by ``dims``
    reproduces the logical array.
    """

    dims: tuple
    layout: Layout
    data: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.data = np.asarray(self.data).reshape(-1)
        if math.prod(self.dims) != self.data.size:
            raise ShapeError(
                f"dims {self.dims} imply {math.prod(self.dims)} elements, "
                f"data has {self.data.size}"
            )
        if self.layout is not Layout.ROW_MAJOR and len(self.dims) != 4:
            raise ShapeError(f"{self.layout.value} tensors must be rank 4")
        if self.layout is Layout.ROW_MAJOR and len(self.dims) != 2:
            raise ShapeError("ROW_MAJOR tensors must be rank 2")

    @classmethod
    def from_array(cls, arr: np.ndarray, layout: Layout) -> "Tensor":
        return cls(dims=arr.shape, layout=layout, data=np.ascontiguousarray(arr).reshape(-1))

    def view(self) -> np.ndarray:
        """Multi-dimensional view in this tensor's own axis order."""
        return self.data.reshape(self.dims)

    def to(self, target: Layout) -> "Tensor":
        return relayout(self, target)


def relayout(t: Tensor, target: Layout) -> Tensor:
    """Re-linearize a tensor; logical values are preserved exactly."""
    if t.layout is target:
        return Tensor(t.dims, t.layout, t.data.copy())
    if t.layout is Layout.ROW_MAJOR or target is Layout.ROW_MAJOR:
        raise ShapeError(f"cannot relayout {t.layout.value} -> {target.value}")
    src, dst = _LAYOUT_AXES[t.layout], _LAYOUT_AXES[target]
    perm = tuple(src.index(ax) for ax in dst)
    arr = np.ascontiguousarray(t.view().transpose(perm))
    return Tensor(arr.shape, target, arr.reshape(-1))


def _as_nhwc(ifmap: Tensor, spec: ConvSpec) -> np.ndarray:
    x = relayout(ifmap, Layout.NHWC) if ifmap.layout is not Layout.NHWC else ifmap
    expect = (spec.n, spec.h_i, spec.w_i, spec.c_i)
    if x.dims != expect:
        raise ShapeError(f"ifmap dims {x.dims} do not match spec NHWC {expect}")
    return x.view()


def _as_filter_hwcn(filters: Tensor, spec: ConvSpec) -> np.ndarray:
    f = relayout(filters, Layout.HWCN) if filters.layout is not Layout.HWCN else filters
    expect = (spec.h_f, spec.w_f, spec.c_i, spec.c_o)
    if f.dims != expect:
        raise ShapeError(f"filter dims {f.dims} do not match spec HWCN {expect}")
    return f.view()


def direct_conv(ifmap: Tensor, filters: Tensor, spec: ConvSpec) -> Tensor:
    """Convolve by definition; out-of-range (padding) reads contribute zero.

    ``ifmap`` is NHWC ``(n, h_i, w_i, c_i)``; ``filters`` is HWCN
    ``(h_f, w_f, c_i, c_o)``.  Returns the NHWC OFMap.
    """
    x = _as_nhwc(ifmap, spec)
    w = _as_filter_hwcn(filters, spec)
    y = conv2d_nhwc(
        x, w,
        spec.stride_h, spec.stride_w,
        spec.pad_h, spec.pad_w,
        spec.dilation_h, spec.dilation_w,
    )
    return Tensor.from_array(y, Layout.NHWC)


def gemm(a: Tensor, b: Tensor) -> Tensor:
    """C = A @ B on row-major matrices."""
    if a.layout is not Layout.ROW_MAJOR or b.layout is not Layout.ROW_MAJOR:
        raise ShapeError("gemm expects ROW_MAJOR operands")
    if a.dims[1] != b.dims[0]:
        raise ShapeError(f"inner dims mismatch: {a.dims} x {b.dims}")
    c = a.view() @ b.view()
    return Tensor.from_array(c, Layout.ROW_MAJOR)


@dataclass
class SimReport:
    """Cycle and traffic accounting for one simulated layer.

    Accounting is non-overlapped: overlapped work is charged once, to the
    bucket that bounds the timeline, so
    ``total_cycles == compute_cycles + stall_cycles + weight_load_cycles``.
    ``compute_cycles`` includes the final pipeline drain.
    """

    total_cycles: int = 0
    compute_cycles: int = 0
    stall_cycles: int = 0
    weight_load_cycles: int = 0
    pe_utilization: float = 0.0
    dram_bytes_read: int = 0
    dram_bytes_written: int = 0
    sram_reads: int = 0
    sram_writes: int = 0
    achieved_flops: float = 0.0  # useful MACs per cycle
    sram_idle_ratio: float = 0.0
    sram_workspace_bytes: int = 0
    useful_macs: int = 0

    def __post_init__(self):
        assert self.total_cycles == (
            self.compute_cycles + self.stall_cycles + self.weight_load_cycles
        ), "cycle buckets must partition total_cycles"

    def tflops(self, clock_mhz: float) -> float:
        """Achieved TFLOPS at the given clock (1 MAC = 2 flops)."""
        return 2.0 * self.achieved_flops * clock_mhz * 1e6 / 1e12
