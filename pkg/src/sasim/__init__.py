"""Cycle-level simulator of a weight-stationary systolic-array accelerator
executing convolutions through implicit channel-first im2col, with
channel-last and explicit-lowering baselines."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .core import (CapacityError, ConvSpec, Layout, ShapeError, SimReport,
                   Tensor, direct_conv, gemm, relayout)
from .lowering import (ColumnOrdering, TileDescriptor, column_permutation,
                       decompose_tiles, im2col_explicit, lower_filter,
                       lowered_memory_footprint, tile_overlap)
from .memmodel import (AccessTrace, ArchConfig, DramCost, VectorMemoryImage,
                       address_schedule, dram_fill_cost, pack_hwcn)
from .simulator import (ALL_METHODS, Method, MultiTilePlan, SimResult,
                        default_operands, multi_tile_count, plan_multi_tile,
                        simulate, sweep)

__version__ = "0.1.0"

__all__ = [
    "ALL_METHODS", "AccessTrace", "ArchConfig", "CapacityError",
    "ColumnOrdering", "ConvSpec", "DramCost", "KERNEL_BACKEND", "Layout",
    "Method", "MultiTilePlan", "ShapeError", "SimReport", "SimResult",
    "Tensor", "TileDescriptor", "VectorMemoryImage", "address_schedule",
    "column_permutation", "decompose_tiles", "default_operands",
    "direct_conv", "dram_fill_cost", "gemm", "im2col_explicit",
    "lower_filter", "lowered_memory_footprint", "multi_tile_count",
    "pack_hwcn", "plan_multi_tile", "relayout", "simulate", "sweep",
    "tile_overlap",
]
