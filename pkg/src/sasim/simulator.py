"""Cycle-level weight-stationary systolic-array execution of conv layers.

Four methods are modeled.  ``CHANNEL_FIRST_IMPLICIT`` iterates decomposed
1x1 filter tiles whose gathers stream from per-row vector memories (the
stride-insensitive design).  ``CHANNEL_LAST_IMPLICIT`` is the baseline
with a multi-banked SRAM + crossbar front end whose block fill fetches
full-width receptive rows, so its fill time does not shrink with stride.
``EXPLICIT_IM2COL`` materializes the lowered matrix in DRAM and then runs
a plain GEMM; ``PLAIN_GEMM`` times just the equivalent GEMM.

Timing uses a chunked timeline: the work is cut into chunks (one weight
pass over one resident band), chunk k+1's DRAM fill and weight staging
overlap chunk k's streaming, and whatever does not fit is exposed as
stall or weight-load cycles.  Only the final pipeline drain
(rows + cols - 2) is exposed; it is charged to compute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import product
from typing import Optional

import numpy as np

from ._kernels import im2col_nhwc
from .core import (CapacityError, ConvSpec, Layout, ShapeError, SimReport,
                   Tensor, _as_filter_hwcn, _as_nhwc)
from .lowering import ColumnOrdering, decompose_tiles
from .memmodel import ArchConfig, _burst_cost


class Method(Enum):
    CHANNEL_FIRST_IMPLICIT = "channel_first"
    CHANNEL_LAST_IMPLICIT = "channel_last"
    EXPLICIT_IM2COL = "explicit_im2col"
    PLAIN_GEMM = "plain_gemm"

    @classmethod
    def parse(cls, name: str) -> "Method":
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "cf": cls.CHANNEL_FIRST_IMPLICIT,
            "channel_first": cls.CHANNEL_FIRST_IMPLICIT,
            "channel_first_implicit": cls.CHANNEL_FIRST_IMPLICIT,
            "cl": cls.CHANNEL_LAST_IMPLICIT,
            "channel_last": cls.CHANNEL_LAST_IMPLICIT,
            "channel_last_implicit": cls.CHANNEL_LAST_IMPLICIT,
            "explicit": cls.EXPLICIT_IM2COL,
            "explicit_im2col": cls.EXPLICIT_IM2COL,
            "gemm": cls.PLAIN_GEMM,
            "plain_gemm": cls.PLAIN_GEMM,
        }
        if key not in aliases:
            raise ShapeError(f"unknown method {name!r}")
        return aliases[key]


ALL_METHODS = list(Method)


def multi_tile_count(spec: ConvSpec, arch: ArchConfig) -> int:
    """Concurrent decomposed tiles per pass: min(rows // c_i, w_f).

    Bounded by the filter width and by how many channel copies fit in the
    PE rows; an explicit ``max_multi_tile`` lowers the cap.  When
    ``c_i > rows`` the channel-split fallback runs one tile per pass.
    """
    if spec.c_i > arch.array_rows:
        return 1
    count = min(arch.array_rows // spec.c_i, spec.w_f)
    if arch.max_multi_tile != "auto":
        count = min(count, int(arch.max_multi_tile))
    return max(1, count)


@dataclass
class MultiTilePlan:
    """Grouping of the h_f*w_f decomposed tiles into concurrent passes."""

    tiles_per_pass: int
    passes: list
    duplication_factor: int

    def validate(self, spec: ConvSpec, arch: ArchConfig):
        assert self.tiles_per_pass * spec.c_i <= arch.array_rows
        assert self.tiles_per_pass <= spec.h_f * spec.w_f
        seen = [(t.r, t.s) for group in self.passes for t in group]
        assert sorted(seen) == sorted(
            (r, s) for r in range(spec.h_f) for s in range(spec.w_f)
        ), "passes must cover every tile exactly once"


def plan_multi_tile(spec: ConvSpec, arch: ArchConfig) -> MultiTilePlan:
    if spec.c_i > arch.array_rows:
        raise ShapeError("c_i exceeds array rows; use the channel-split path")
    count = multi_tile_count(spec, arch)
    tiles = decompose_tiles(spec)
    passes = [tiles[i:i + count] for i in range(0, len(tiles), count)]
    plan = MultiTilePlan(tiles_per_pass=count, passes=passes, duplication_factor=count)
    plan.validate(spec, arch)
    return plan


# ---------------------------------------------------------------------------
# chunked timeline
# ---------------------------------------------------------------------------

@dataclass
class _Chunk:
    stream: int
    fill_cycles: int = 0
    fill_bytes: int = 0
    weight_load: int = 0
    weight_bytes: int = 0
    # per busiest-array port accesses inside this chunk's stream window
    reads_in_pa: int = 0
    psum_wr_pa: int = 0
    psum_rd_pa: int = 0
    fill_words_pa: int = 0  # words written into SRAM to fill *this* chunk
    # whole-machine counters
    sram_reads: int = 0
    sram_writes: int = 0
    model_ports: bool = True


@dataclass
class _Budget:
    total: int = 0
    compute: int = 0
    stall: int = 0
    weight_load: int = 0


def _run_timeline(chunks: list, arch: ArchConfig) -> _Budget:
    b = _Budget()
    if not chunks:
        return b
    # warmup: the first chunk's weight staging and DRAM fill run in
    # parallel before any streaming
    first = chunks[0]
    b.weight_load += first.weight_load
    b.stall += max(0, first.fill_cycles - first.weight_load)
    b.total += max(first.weight_load, first.fill_cycles)
    for k, ch in enumerate(chunks):
        occupied = ch.stream
        b.compute += ch.stream
        if ch.model_ports:
            # single port per array: input reads, partial-sum traffic and
            # next-chunk fill writes must fit the stream window
            nxt_fill = chunks[k + 1].fill_words_pa if k + 1 < len(chunks) else 0
            busy = ch.reads_in_pa + ch.psum_wr_pa + ch.psum_rd_pa + nxt_fill
            over = max(0, busy - ch.stream)
            b.stall += over
            occupied += over
        if k + 1 < len(chunks):
            nxt = chunks[k + 1]
            exposed = max(0, max(nxt.fill_cycles, nxt.weight_load) - occupied)
            if exposed:
                if nxt.fill_cycles >= nxt.weight_load:
                    b.stall += exposed
                else:
                    b.weight_load += exposed
            occupied += exposed
        b.total += occupied
    drain = arch.array_rows + arch.array_cols - 2
    b.total += drain
    b.compute += drain
    return b


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _split_sizes(total: int, limit: int) -> list:
    """[limit, limit, ..., remainder] covering ``total``."""
    out = [limit] * (total // limit)
    if total % limit:
        out.append(total % limit)
    return out


def _band_ranges(total: int, band: int) -> list:
    return [(p, min(p + band, total)) for p in range(0, total, band)]


# ---------------------------------------------------------------------------
# channel-first implicit
# ---------------------------------------------------------------------------

def _cf_chunks(spec: ConvSpec, arch: ArchConfig):
    R, C = arch.array_rows, arch.array_cols
    word, e = arch.word_elems, arch.elem_bytes
    groups = _ceil_div(spec.n, word)
    positions = spec.h_o * spec.w_o

    if spec.c_i > R:
        cg_slices = [(c0, min(c0 + R, spec.c_i)) for c0 in range(0, spec.c_i, R)]
        tiles_per_pass = 1
    else:
        cg_slices = [(0, spec.c_i)]
        tiles_per_pass = multi_tile_count(spec, arch)
    tiles = decompose_tiles(spec)
    tile_groups = [tiles[i:i + tiles_per_pass]
                   for i in range(0, len(tiles), tiles_per_pass)]
    col_sizes = _split_sizes(spec.c_o, C)

    # per-band capacity: half the array is a double-buffered stream store,
    # the other half holds partial sums
    in_words_cap = arch.sram_capacity_bytes // 4 // arch.word_bytes
    if in_words_cap < groups:
        raise CapacityError(groups * arch.word_bytes,
                            arch.sram_capacity_bytes // 4)
    band_in = in_words_cap // groups
    max_cot = max(col_sizes)
    band_ps = max(1, arch.sram_capacity_bytes // 2 * R // (spec.n * max_cot * e))
    band_pos = max(1, min(band_in, band_ps, positions))
    bands = _band_ranges(positions, band_pos)

    # per-tile gather maps over flattened output positions
    inb, gaddr, incs = [], [], []
    for t in tiles:
        rows, cols = t.input_rows(), t.input_cols()
        ok = (rows[:, None] >= 0) & (cols[None, :] >= 0)
        addr = rows[:, None] * spec.w_i + cols[None, :]
        inb.append(ok.reshape(-1))
        gaddr.append(np.where(ok, addr, -1).reshape(-1))
        incs.append(np.concatenate(([0], np.cumsum(ok.reshape(-1)))))
    tindex = {(t.r, t.s): i for i, t in enumerate(tiles)}

    chunks = []
    prev_weights = None
    c_eff_max = max(c1 - c0 for c0, c1 in cg_slices)
    for col_idx, cot in enumerate(col_sizes):
        for p0, p1 in bands:
            bp = p1 - p0
            band_m = bp * spec.n
            first_acc = True
            for cg_idx, (c0, c1) in enumerate(cg_slices):
                c_eff = c1 - c0
                full_chan = c_eff == spec.c_i
                for tg in tile_groups:
                    idxs = [tindex[(t.r, t.s)] for t in tg]
                    counts = [int(incs[i][p1] - incs[i][p0]) for i in idxs]
                    addrs = np.concatenate(
                        [gaddr[i][p0:p1][inb[i][p0:p1]] for i in idxs]
                    ) if sum(counts) else np.empty(0, dtype=np.int64)
                    fill = _burst_cost(addrs, c_eff * spec.n * e, arch,
                                       merge=full_chan)
                    wkey = (col_idx, cg_idx, tuple(idxs))
                    wl = R if wkey != prev_weights else 0
                    prev_weights = wkey
                    wbytes = c_eff * len(tg) * cot * e if wl else 0
                    fill_cycles = fill.cycles
                    if wbytes:
                        fill_cycles += arch.dram_fixed_latency_cycles + math.ceil(
                            wbytes / arch.bytes_per_cycle)
                    in_words_total = sum(counts) * c_eff * groups
                    psum_words = _ceil_div(band_m * cot, word)
                    psum_pa = _ceil_div(psum_words, R)
                    rd = not first_acc
                    chunks.append(_Chunk(
                        stream=bp * word * groups,
                        fill_cycles=fill_cycles,
                        fill_bytes=fill.bytes + wbytes,
                        weight_load=wl,
                        weight_bytes=wbytes,
                        reads_in_pa=max(counts) * groups if counts else 0,
                        psum_wr_pa=psum_pa,
                        psum_rd_pa=psum_pa if rd else 0,
                        fill_words_pa=max(counts) * groups if counts else 0,
                        sram_reads=in_words_total + (psum_words if rd else 0),
                        sram_writes=in_words_total + psum_words,
                    ))
                    first_acc = False

    active = tiles_per_pass * c_eff_max
    workspace = (active * min(band_pos, positions) * groups * arch.word_bytes * 2
                 + min(band_pos, positions) * spec.n * max_cot * e)
    return chunks, workspace


def _functional_cf(spec: ConvSpec, x: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Accumulate decomposed 1x1 tiles in fixed row-major tile order."""
    out = None
    for tile in decompose_tiles(spec):
        g = tile.gather_matrix(Tensor.from_array(x, Layout.NHWC))
        part = g @ f[tile.r, tile.s]
        out = part if out is None else out + part
    return out.reshape(spec.n, spec.h_o, spec.w_o, spec.c_o)


# ---------------------------------------------------------------------------
# channel-last implicit (multi-banked SRAM + crossbar baseline)
# ---------------------------------------------------------------------------

def _cl_chunks(spec: ConvSpec, arch: ArchConfig):
    R, C = arch.array_rows, arch.array_cols
    e = arch.elem_bytes
    K = spec.gemm_k
    kp_sizes = _split_sizes(K, R)
    col_sizes = _split_sizes(spec.c_o, C)

    eff_h = spec.dilation_h * (spec.h_f - 1) + 1
    row_bytes = spec.w_i * spec.c_i * spec.n * e
    resident_rows = max(1, arch.total_sram_bytes // 2 // row_bytes)
    band_rows = max(1, (resident_rows - max(0, eff_h - spec.stride_h)) // spec.stride_h)
    band_rows = min(band_rows, spec.h_o)

    # the block is staged into the conflict-free swizzled bank layout at
    # input-row granularity: one transfer per (batch, channel, row), full
    # width regardless of stride, never coalescing across rows
    row_xfer = (arch.dram_fixed_latency_cycles
                + math.ceil(spec.w_i * e / arch.bytes_per_cycle))

    r_taps = np.arange(spec.h_f) * spec.dilation_h
    chunks = []
    kp = len(kp_sizes)
    for i0 in range(0, spec.h_o, band_rows):
        i1 = min(i0 + band_rows, spec.h_o)
        band_m = (i1 - i0) * spec.w_o * spec.n
        outs = np.arange(i0, i1) * spec.stride_h - spec.pad_h
        rows = np.unique((outs[:, None] + r_taps[None, :]).reshape(-1))
        rows = rows[(rows >= 0) & (rows < spec.h_i)]
        band_fill = spec.n * spec.c_i * rows.size * row_xfer
        band_bytes = spec.n * spec.c_i * rows.size * spec.w_i * e
        for col_idx, cot in enumerate(col_sizes):
            first_col = col_idx == 0
            wbytes = K * cot * e
            fill_cycles = arch.dram_fixed_latency_cycles + math.ceil(
                wbytes / arch.bytes_per_cycle)
            if first_col:  # the block stays resident across column tiles
                fill_cycles += band_fill
            stream = band_m * kp + arch.cl_addr_gen_overhead * band_m
            chunks.append(_Chunk(
                stream=stream,
                fill_cycles=fill_cycles,
                fill_bytes=(band_bytes if first_col else 0) + wbytes,
                weight_load=R,
                weight_bytes=wbytes,
                sram_reads=band_m * K + band_m * cot * (kp - 1),
                sram_writes=(rows.size * spec.w_i * spec.c_i * spec.n
                             if first_col else 0) + band_m * cot * kp,
                model_ports=False,
            ))
    workspace = (min(band_rows * spec.stride_h + eff_h, spec.h_i) * row_bytes * 2
                 + band_rows * spec.w_o * spec.n * max(col_sizes) * e)
    return chunks, workspace


def _functional_cl(spec: ConvSpec, x: np.ndarray, f_low: np.ndarray,
                   block: int) -> np.ndarray:
    """K-blocked accumulation over the channel-last lowered matrix."""
    a = im2col_nhwc(x, spec.h_f, spec.w_f, spec.stride_h, spec.stride_w,
                    spec.pad_h, spec.pad_w, spec.dilation_h, spec.dilation_w,
                    False)
    out = None
    for k0 in range(0, a.shape[1], block):
        part = a[:, k0:k0 + block] @ f_low[k0:k0 + block]
        out = part if out is None else out + part
    return out.reshape(spec.n, spec.h_o, spec.w_o, spec.c_o)


# ---------------------------------------------------------------------------
# plain GEMM (and the GEMM phase of explicit lowering)
# ---------------------------------------------------------------------------

def _gemm_chunks(m: int, k: int, nc: int, arch: ArchConfig):
    R, C = arch.array_rows, arch.array_cols
    word, e = arch.word_elems, arch.elem_bytes
    kp_sizes = _split_sizes(k, R)
    col_sizes = _split_sizes(nc, C)
    band_in = arch.sram_capacity_bytes // 4 // e
    max_cot = max(col_sizes)
    band_ps = max(1, arch.sram_capacity_bytes // 2 * R // (max_cot * e))
    band_m = max(1, min(band_in, band_ps, m))
    chunks = []
    prev_weights = None
    for col_idx, cot in enumerate(col_sizes):
        for m0, m1 in _band_ranges(m, band_m):
            bm = m1 - m0
            words_in = _ceil_div(bm, word)
            psum_words = _ceil_div(bm * cot, word)
            psum_pa = _ceil_div(psum_words, R)
            for kp_idx, kps in enumerate(kp_sizes):
                wkey = (col_idx, kp_idx)
                wl = R if wkey != prev_weights else 0
                prev_weights = wkey
                wbytes = kps * cot * e if wl else 0
                panel = bm * kps * e  # operand panels assumed pre-packed
                fill_cycles = arch.dram_fixed_latency_cycles + math.ceil(
                    panel / arch.bytes_per_cycle)
                if wbytes:
                    fill_cycles += arch.dram_fixed_latency_cycles + math.ceil(
                        wbytes / arch.bytes_per_cycle)
                rd = kp_idx > 0
                chunks.append(_Chunk(
                    stream=words_in * word,
                    fill_cycles=fill_cycles,
                    fill_bytes=panel + wbytes,
                    weight_load=wl,
                    weight_bytes=wbytes,
                    reads_in_pa=words_in,
                    psum_wr_pa=psum_pa,
                    psum_rd_pa=psum_pa if rd else 0,
                    fill_words_pa=words_in,
                    sram_reads=words_in * kps + (psum_words if rd else 0),
                    sram_writes=words_in * kps + psum_words,
                ))
    workspace = band_m * e * 2 * R + band_m * max_cot * e
    return chunks, workspace


def _functional_gemm(spec: ConvSpec, x: np.ndarray, f_low_cf: np.ndarray) -> np.ndarray:
    a = im2col_nhwc(x, spec.h_f, spec.w_f, spec.stride_h, spec.stride_w,
                    spec.pad_h, spec.pad_w, spec.dilation_h, spec.dilation_w,
                    True)
    return (a @ f_low_cf).reshape(spec.n, spec.h_o, spec.w_o, spec.c_o)


# ---------------------------------------------------------------------------
# simulate / sweep
# ---------------------------------------------------------------------------

@dataclass
class SimResult:
    ofmap: Optional[Tensor]
    report: SimReport


def _lower_filter_array(f: np.ndarray, spec: ConvSpec, channel_first: bool) -> np.ndarray:
    ordering = (ColumnOrdering.CHANNEL_FIRST if channel_first
                else ColumnOrdering.CHANNEL_LAST)
    out = np.empty((spec.gemm_k, spec.c_o), dtype=f.dtype)
    for r in range(spec.h_f):
        for s in range(spec.w_f):
            for c in range(spec.c_i):
                out[ordering.index(r, s, c, spec)] = f[r, s, c]
    return out


def _default_data(spec: ConvSpec, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.integers(-4, 5, size=(spec.n, spec.h_i, spec.w_i, spec.c_i)).astype(np.int64)
    f = rng.integers(-4, 5, size=(spec.h_f, spec.w_f, spec.c_i, spec.c_o)).astype(np.int64)
    return x, f


def default_operands(spec: ConvSpec, seed: int = 0):
    """Seeded small-integer IFMap/filter tensors (exactly checkable)."""
    x, f = _default_data(spec, seed)
    return Tensor.from_array(x, Layout.NHWC), Tensor.from_array(f, Layout.HWCN)


def simulate(spec: ConvSpec, arch: ArchConfig, method: Method, *,
             ifmap: Optional[Tensor] = None, filters: Optional[Tensor] = None,
             compute_ofmap: bool = True, seed: int = 0) -> SimResult:
    """Run one layer under one method; returns the OFMap and a SimReport.

    With ``compute_ofmap=False`` only the timing model runs (the returned
    ofmap is None); otherwise missing operands are generated as seeded
    small integers so results are exactly checkable against direct_conv.
    """
    if isinstance(method, str):
        method = Method.parse(method)

    extra = {"dram_read": 0, "dram_written": 0, "reads": 0, "writes": 0,
             "pre_cycles": 0}
    if method is Method.CHANNEL_FIRST_IMPLICIT:
        chunks, workspace = _cf_chunks(spec, arch)
    elif method is Method.CHANNEL_LAST_IMPLICIT:
        chunks, workspace = _cl_chunks(spec, arch)
    elif method is Method.PLAIN_GEMM:
        chunks, workspace = _gemm_chunks(spec.gemm_m, spec.gemm_k, spec.gemm_n, arch)
    else:  # EXPLICIT_IM2COL: lowering phase then plain GEMM on the result
        chunks, workspace = _gemm_chunks(spec.gemm_m, spec.gemm_k, spec.gemm_n, arch)
        e = arch.elem_bytes
        if_bytes = spec.n * spec.h_i * spec.w_i * spec.c_i * e
        low_bytes = spec.gemm_m * spec.gemm_k * e
        lat = arch.dram_fixed_latency_cycles
        extra["pre_cycles"] = (
            lat + math.ceil(if_bytes / arch.bytes_per_cycle)
            + lat + math.ceil(low_bytes / arch.bytes_per_cycle)
        )
        extra["dram_read"] += if_bytes
        extra["dram_written"] += low_bytes

    budget = _run_timeline(chunks, arch)
    budget.total += extra["pre_cycles"]
    budget.stall += extra["pre_cycles"]

    macs = spec.macs
    total = budget.total
    ports = total * arch.num_vector_memories
    reads = sum(c.sram_reads for c in chunks) + extra["reads"]
    writes = sum(c.sram_writes for c in chunks) + extra["writes"]
    report = SimReport(
        total_cycles=total,
        compute_cycles=budget.compute,
        stall_cycles=budget.stall,
        weight_load_cycles=budget.weight_load,
        pe_utilization=macs / (total * arch.array_rows * arch.array_cols),
        dram_bytes_read=sum(c.fill_bytes for c in chunks) + extra["dram_read"],
        dram_bytes_written=extra["dram_written"],
        sram_reads=reads,
        sram_writes=writes,
        achieved_flops=macs / total,
        sram_idle_ratio=1.0 - min(1.0, (reads + writes) / ports),
        sram_workspace_bytes=workspace,
        useful_macs=macs,
    )

    ofmap = None
    if compute_ofmap:
        if ifmap is None or filters is None:
            x, f = _default_data(spec, seed)
        else:
            x, f = _as_nhwc(ifmap, spec), _as_filter_hwcn(filters, spec)
        if method is Method.CHANNEL_FIRST_IMPLICIT:
            y = _functional_cf(spec, x, f)
        elif method is Method.CHANNEL_LAST_IMPLICIT:
            y = _functional_cl(spec, x, _lower_filter_array(f, spec, False),
                               arch.array_rows)
        elif method is Method.EXPLICIT_IM2COL:
            a = im2col_nhwc(x, spec.h_f, spec.w_f, spec.stride_h, spec.stride_w,
                            spec.pad_h, spec.pad_w, spec.dilation_h,
                            spec.dilation_w, False)
            y = (a @ _lower_filter_array(f, spec, False)).reshape(
                spec.n, spec.h_o, spec.w_o, spec.c_o)
        else:
            y = _functional_gemm(spec, x, _lower_filter_array(f, spec, True))
        ofmap = Tensor.from_array(y, Layout.NHWC)
    return SimResult(ofmap=ofmap, report=report)


@dataclass
class SweepRow:
    spec_index: int
    arch_index: int
    method: Method
    spec: ConvSpec
    arch: ArchConfig
    report: Optional[SimReport] = None
    error: Optional[str] = None


def sweep(specs, arch_grid, methods, *, compute_ofmap: bool = False,
          jobs: int = 1) -> list:
    """Cross-product evaluation; row order is the deterministic grid order.

    Individual failures are recorded on their row and the sweep continues.
    """
    tasks = [
        (si, ai, m, sp, ar)
        for (si, sp), (ai, ar), m in product(
            enumerate(specs), enumerate(arch_grid), methods)
    ]

    def run(task):
        si, ai, m, sp, ar = task
        row = SweepRow(si, ai, m, sp, ar)
        try:
            row.report = simulate(sp, ar, m, compute_ofmap=compute_ofmap).report
        except Exception as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        return row

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, tasks))
    return [run(t) for t in tasks]
