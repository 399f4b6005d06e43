"""Block-level channel-first lowering for dot-product GEMM engines.

The equivalent GEMM (M = n*h_o*w_o, K = h_f*w_f*c_i, Nc = c_o) is blocked
so that distinct output blocks never write the same output element (no
atomic accumulation needed); each block accumulates all of its k-subtiles
locally.  Subtile ordering controls how much of one subtile's gather is
still on chip when the next one streams; an LRU model of the per-block
SRAM quantifies the resulting DRAM traffic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ._kernels import lru_simulate
from .core import ConvSpec, Layout, ShapeError, Tensor, _as_filter_hwcn, _as_nhwc
from .lowering import TileDescriptor, decompose_tiles


class SubtileOrder(Enum):
    FILTER_MAJOR = "filter_major"
    """Finish one filter position across all output blocks, then the next."""

    REUSE_AWARE = "reuse_aware"
    """Fix an output block and iterate filter positions innermost."""


@dataclass
class BlockPlan:
    """Blocking of the equivalent GEMM plus the k-subtile decomposition.

    A k-subtile is one (filter position, channel chunk) pair; chunk
    boundaries never straddle a filter position, which keeps each chunk
    contiguous in the channel-first column order.
    """

    spec: ConvSpec
    block_m: int
    block_n: int
    block_k: int
    m_ranges: list
    n_ranges: list
    k_chunks: list            # [(c0, c1), ...] within one filter position
    sram_budget_bytes: Optional[int] = None

    @property
    def subtiles_per_block(self) -> int:
        return self.spec.h_f * self.spec.w_f * len(self.k_chunks)


def partition(spec: ConvSpec, block_m: int, block_n: int, block_k: int,
              sram_budget_bytes: Optional[int] = None) -> BlockPlan:
    """Tile the output exactly into (block_m x block_n) blocks.

    Ragged edge blocks are allowed; ``block_k`` is clamped to ``c_i`` so
    chunks stay inside one filter position.
    """
    if min(block_m, block_n, block_k) < 1:
        raise ShapeError("block extents must be >= 1")
    m, nc = spec.gemm_m, spec.gemm_n
    bk = min(block_k, spec.c_i)
    m_ranges = [(p, min(p + block_m, m)) for p in range(0, m, block_m)]
    n_ranges = [(p, min(p + block_n, nc)) for p in range(0, nc, block_n)]
    k_chunks = [(c, min(c + bk, spec.c_i)) for c in range(0, spec.c_i, bk)]
    return BlockPlan(spec=spec, block_m=block_m, block_n=block_n, block_k=bk,
                     m_ranges=m_ranges, n_ranges=n_ranges, k_chunks=k_chunks,
                     sram_budget_bytes=sram_budget_bytes)


@dataclass(frozen=True)
class Subtile:
    m_block: int
    n_block: int
    tile: TileDescriptor
    chunk: tuple  # (c0, c1)


def order_subtiles(plan: BlockPlan, policy: SubtileOrder) -> list:
    """Full subtile sequence under the given policy."""
    tiles = decompose_tiles(plan.spec)
    blocks = [(mb, nb) for mb in range(len(plan.m_ranges))
              for nb in range(len(plan.n_ranges))]
    out = []
    if policy is SubtileOrder.FILTER_MAJOR:
        for tile in tiles:
            for ck in plan.k_chunks:
                for mb, nb in blocks:
                    out.append(Subtile(mb, nb, tile, ck))
    else:
        for mb, nb in blocks:
            for ck in plan.k_chunks:
                for tile in tiles:
                    out.append(Subtile(mb, nb, tile, ck))
    return out


def _block_positions(plan: BlockPlan, mb: int) -> np.ndarray:
    """Unique output spatial positions covered by an M-block's rows."""
    m0, m1 = plan.m_ranges[mb]
    hw = plan.spec.h_o * plan.spec.w_o
    return np.unique(np.arange(m0, m1) % hw)


def _subtile_keys(plan: BlockPlan, st: Subtile) -> np.ndarray:
    """Element keys (h*w_i + w)*c_i + c gathered by one subtile, in
    stream order (positions row-major, channels fastest)."""
    sp = plan.spec
    pos = _block_positions(plan, st.m_block)
    rows = st.tile.input_rows()[pos // sp.w_o]
    cols = st.tile.input_cols()[pos % sp.w_o]
    ok = (rows >= 0) & (cols >= 0)
    spatial = rows[ok] * sp.w_i + cols[ok]
    c0, c1 = st.chunk
    chans = np.arange(c0, c1, dtype=np.int64)
    return (spatial[:, None] * sp.c_i + chans[None, :]).reshape(-1)


@dataclass
class TrafficResult:
    dram_bytes: int
    hit_fraction: float
    hits: int
    misses: int


def reuse_traffic(plan: BlockPlan, order, sram_budget_bytes: int,
                  spec: ConvSpec, elem_bytes: int = 2) -> TrafficResult:
    """Replay the subtile gather stream through an LRU on-chip store.

    Misses cost ``elem_bytes`` per batch element; hits are served from
    the ``sram_budget_bytes`` LRU working set.
    """
    if spec != plan.spec:
        raise ShapeError("plan belongs to a different layer")
    capacity = sram_budget_bytes // (elem_bytes * spec.n)
    streams = [_subtile_keys(plan, st) for st in order]
    keys = (np.concatenate(streams) if streams
            else np.empty(0, dtype=np.int64))
    hits, misses = lru_simulate(keys, capacity)
    total = hits + misses
    return TrafficResult(
        dram_bytes=misses * elem_bytes * spec.n,
        hit_fraction=hits / total if total else 0.0,
        hits=hits,
        misses=misses,
    )


def working_set_bytes(plan: BlockPlan, elem_bytes: int = 2) -> int:
    """Largest single-subtile gather footprint, in bytes."""
    sp = plan.spec
    best = 0
    for mb in range(len(plan.m_ranges)):
        pos = len(_block_positions(plan, mb))
        best = max(best, pos * plan.block_k * elem_bytes * sp.n)
    return best


def evaluate_plan(plan: BlockPlan, order, ifmap: Tensor, filters: Tensor) -> Tensor:
    """Accumulate every subtile GEMM in the given order.

    Output blocks own disjoint output slices, so any order of the same
    subtile set produces identical results (exactly so on integers).
    """
    sp = plan.spec
    x = _as_nhwc(ifmap, sp)
    f = _as_filter_hwcn(filters, sp)
    m, nc = sp.gemm_m, sp.gemm_n
    out = np.zeros((m, nc), dtype=np.result_type(x, f))
    gathers = {}
    for st in order:
        m0, m1 = plan.m_ranges[st.m_block]
        n0, n1 = plan.n_ranges[st.n_block]
        c0, c1 = st.chunk
        key = (st.tile.r, st.tile.s)
        if key not in gathers:
            gathers[key] = st.tile.gather_matrix(Tensor.from_array(x, Layout.NHWC))
        a = gathers[key][m0:m1, c0:c1]
        b = f[st.tile.r, st.tile.s, c0:c1, n0:n1]
        out[m0:m1, n0:n1] += a @ b
    return Tensor.from_array(
        out.reshape(sp.n, sp.h_o, sp.w_o, sp.c_o), Layout.NHWC)


def write_traffic_csv(path, rows):
    """Emit (policy, block dims, dram_bytes, hit_fraction) rows."""
    cols = ["policy", "block_m", "block_n", "block_k", "dram_bytes", "hit_fraction"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in cols})
