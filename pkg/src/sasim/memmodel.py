"""On-chip and off-chip memory models.

The on-chip side is a set of independent single-ported SRAM arrays (one
per PE row) with a multi-element word and a serializer/deserializer pair
at the array edge.  The off-chip side is a burst-latency + bandwidth DRAM
whose fill cost depends on how contiguous the accesses are under the
chosen DRAM layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .core import CapacityError, ConvSpec, Layout, ShapeError, Tensor, relayout


@dataclass(frozen=True)
class ArchConfig:
    """Systolic array, vector-memory and DRAM parameters.

    Defaults model a 128x128 weight-stationary array at 700 MHz with a
    32 MB unified on-chip memory split into 128 single-ported SRAM arrays
    (256 KB each, 8 x 4-byte words) and a 700 GB/s DRAM.
    """

    array_rows: int = 128
    array_cols: int = 128
    clock_mhz: float = 700.0
    num_vector_memories: Optional[int] = None
    """One SRAM array per PE row; must equal array_rows (None = auto)."""

    word_elems: int = 8
    """Elements returned per SRAM access (batch elements share a word)."""

    elem_bytes: int = 4
    sram_capacity_bytes: int = 256 * 1024
    """Capacity of each individual vector memory."""

    dram_bandwidth_gbps: float = 700.0
    dram_fixed_latency_cycles: int = 1
    """Setup cycles charged per contiguous burst (calibration knob)."""

    max_multi_tile: Union[int, str] = "auto"
    """Cap on concurrently computed tiles; "auto" uses min(rows//c_i, w_f)."""

    cl_addr_gen_overhead: int = 0
    """Extra cycles per streamed row for the channel-last front end."""

    def __post_init__(self):
        if self.num_vector_memories is None:
            object.__setattr__(self, "num_vector_memories", self.array_rows)
        if self.num_vector_memories != self.array_rows:
            raise ShapeError("num_vector_memories must equal array_rows")
        for name in ("array_rows", "array_cols", "word_elems", "elem_bytes",
                     "sram_capacity_bytes"):
            if getattr(self, name) < 1:
                raise ShapeError(f"{name} must be >= 1")
        if isinstance(self.max_multi_tile, str) and self.max_multi_tile != "auto":
            raise ShapeError("max_multi_tile must be an int or 'auto'")

    @property
    def bytes_per_cycle(self) -> float:
        return self.dram_bandwidth_gbps * 1e9 / (self.clock_mhz * 1e6)

    @property
    def word_bytes(self) -> int:
        return self.word_elems * self.elem_bytes

    @property
    def total_sram_bytes(self) -> int:
        return self.sram_capacity_bytes * self.num_vector_memories

    def with_(self, **kw) -> "ArchConfig":
        if "array_rows" in kw and "num_vector_memories" not in kw:
            kw["num_vector_memories"] = kw["array_rows"]
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(d) - known
        if bad:
            raise ShapeError(f"unknown arch config keys: {sorted(bad)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ArchConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class DramCost:
    """Cost of one DRAM fill: cycles, burst count, and bytes moved."""

    cycles: int
    runs: int
    bytes: int


def _burst_cost(addresses: np.ndarray, unit_bytes: int, arch: ArchConfig,
                merge: bool = True) -> DramCost:
    """Cost of fetching ``unit_bytes`` at each address (sorted, deduped).

    When ``merge`` is set, address-consecutive units coalesce into one
    burst; each burst pays the fixed latency plus its bandwidth time.
    """
    addrs = np.unique(np.asarray(addresses, dtype=np.int64))
    if addrs.size == 0:
        return DramCost(0, 0, 0)
    if merge:
        breaks = np.flatnonzero(np.diff(addrs) != 1)
        run_lens = np.diff(np.concatenate(([0], breaks + 1, [addrs.size])))
    else:
        run_lens = np.ones(addrs.size, dtype=np.int64)
    bpc = arch.bytes_per_cycle
    xfer = int(np.ceil(run_lens * unit_bytes / bpc).astype(np.int64).sum())
    runs = int(run_lens.size)
    total_bytes = int(addrs.size) * unit_bytes
    return DramCost(runs * arch.dram_fixed_latency_cycles + xfer, runs, total_bytes)


def dram_fill_cost(coords, layout: str, spec: ConvSpec, arch: ArchConfig,
                   batch_elems: Optional[int] = None) -> DramCost:
    """DRAM cost of gathering IFMap coordinates under a given layout.

    ``coords`` is an (k, 3) array of (h, w, c) triples, or (k, 2) of
    (h, w) pairs meaning every channel.  Under HWC the batch group is
    packed innermost (HWCN) so one coordinate is one contiguous chunk of
    ``batch_elems * elem_bytes``; under CHW the batch is outermost (NCHW)
    and the whole access pattern repeats per batch element.
    """
    coords = np.asarray(coords, dtype=np.int64)
    if coords.size == 0:
        return DramCost(0, 0, 0)
    if coords.ndim != 2 or coords.shape[1] not in (2, 3):
        raise ShapeError("coords must be (k, 2) or (k, 3)")
    if coords.shape[1] == 2:
        hw = np.repeat(coords, spec.c_i, axis=0)
        ch = np.tile(np.arange(spec.c_i, dtype=np.int64), coords.shape[0])
        coords = np.column_stack([hw, ch])
    h, w, c = coords[:, 0], coords[:, 1], coords[:, 2]
    if ((h < 0) | (h >= spec.h_i) | (w < 0) | (w >= spec.w_i)
            | (c < 0) | (c >= spec.c_i)).any():
        raise ShapeError("coordinates out of IFMap bounds")
    if batch_elems is None:
        batch_elems = min(spec.n, arch.word_elems)
    if layout == "HWC":
        addrs = (h * spec.w_i + w) * spec.c_i + c
        return _burst_cost(addrs, batch_elems * arch.elem_bytes, arch)
    if layout == "CHW":
        addrs = (c * spec.h_i + h) * spec.w_i + w
        one = _burst_cost(addrs, arch.elem_bytes, arch)
        return DramCost(one.cycles * batch_elems, one.runs * batch_elems,
                        one.bytes * batch_elems)
    raise ShapeError(f"unknown DRAM layout {layout!r} (expected 'HWC' or 'CHW')")


@dataclass
class VectorMemoryImage:
    """Packed HWCN contents of the per-row vector memories.

    Array i holds channel ``i % c_i``, tile-copy ``i // c_i``.  One word
    packs the same (h, w, c) position across ``min(n, word_elems)`` batch
    elements, zero padded when the batch is short; batches beyond the
    word size occupy further word groups.
    """

    spec: ConvSpec
    arch: ArchConfig
    region_h: int
    region_w: int
    batch_groups: int
    words: np.ndarray            # (active_arrays, n_words, word_elems)
    occupancy: dict              # (channel, tile_copy) -> array index
    tile_copies: int

    @property
    def active_arrays(self) -> int:
        return self.words.shape[0]

    @property
    def n_words(self) -> int:
        return self.words.shape[1]

    @property
    def bytes_per_array(self) -> int:
        return self.n_words * self.arch.word_bytes

    @property
    def resident_bytes(self) -> int:
        return self.active_arrays * self.bytes_per_array

    def word_address(self, h: int, w: int, group: int = 0) -> int:
        return group * self.region_h * self.region_w + h * self.region_w + w

    def word_at(self, array_index: int, coord: tuple, group: int = 0) -> np.ndarray:
        h, w = coord
        return self.words[array_index, self.word_address(h, w, group)]


def pack_hwcn(ifmap_tile: Tensor, spec: ConvSpec, arch: ArchConfig,
              tiles: int = 1) -> VectorMemoryImage:
    """Pack an IFMap region into the vector memories, HWCN order.

    ``tiles`` > 1 duplicates every channel once per concurrently computed
    tile, so ``c_i * tiles`` arrays become active.
    """
    t = ifmap_tile if ifmap_tile.layout is Layout.NHWC else relayout(ifmap_tile, Layout.NHWC)
    x = t.view()
    n, rh, rw, ci = x.shape
    if n != spec.n or ci != spec.c_i:
        raise ShapeError(
            f"tile batch/channels {(n, ci)} do not match spec {(spec.n, spec.c_i)}"
        )
    active = ci * tiles
    if active > arch.num_vector_memories:
        raise ShapeError(
            f"{ci} channels x {tiles} tile copies exceed "
            f"{arch.num_vector_memories} vector memories"
        )
    word = arch.word_elems
    groups = -(-n // word)
    n_words = rh * rw * groups
    required = n_words * arch.word_bytes
    if required > arch.sram_capacity_bytes:
        raise CapacityError(required, arch.sram_capacity_bytes)

    words = np.zeros((active, n_words, word), dtype=x.dtype)
    occupancy = {}
    for ch in range(ci):
        chan_words = np.zeros((groups, rh * rw, word), dtype=x.dtype)
        for g in range(groups):
            part = x[g * word:(g + 1) * word, :, :, ch]        # (<=word, rh, rw)
            chan_words[g, :, :part.shape[0]] = part.reshape(part.shape[0], -1).T
        flat = chan_words.reshape(n_words, word)
        for copy in range(tiles):
            idx = copy * ci + ch
            words[idx] = flat
            occupancy[(ch, copy)] = idx
    return VectorMemoryImage(
        spec=spec, arch=arch, region_h=rh, region_w=rw, batch_groups=groups,
        words=words, occupancy=occupancy, tile_copies=tiles,
    )


@dataclass
class AccessTrace:
    """Ordered per-cycle port accesses of the vector memories."""

    cycles: np.ndarray
    arrays: np.ndarray
    addrs: np.ndarray
    is_write: np.ndarray
    n_arrays: int
    word_elems: int

    def __len__(self):
        return self.cycles.size

    def validate_port_exclusivity(self):
        """Each array accepts at most one access per cycle."""
        pair = self.cycles.astype(np.int64) * self.n_arrays + self.arrays
        assert np.unique(pair).size == pair.size, \
            "port conflict: two accesses hit one array in the same cycle"

    def reads_per_array(self) -> np.ndarray:
        mask = ~self.is_write
        return np.bincount(self.arrays[mask], minlength=self.n_arrays)

    def writes_per_array(self) -> np.ndarray:
        return np.bincount(self.arrays[self.is_write], minlength=self.n_arrays)

    def read_cycles(self, array_index: int) -> np.ndarray:
        mask = (~self.is_write) & (self.arrays == array_index)
        return np.sort(self.cycles[mask])


def address_schedule(tile_set, spec: ConvSpec, arch: ArchConfig,
                     c_o_tile: Optional[int] = None,
                     include_writes: bool = True) -> AccessTrace:
    """Skewed read/write schedule for one pass over ``tile_set``.

    Array i's stream is delayed i cycles behind array 0 (systolic skew);
    each array reads one word per ``word_elems`` cycles, skipping windows
    whose gathered position is padding (the serializer injects a zero
    word instead).  OFMap write-backs from the deserializer are placed in
    the remaining port slots of each window, spilling into trailing
    windows when a pass leaves too few free slots.
    """
    tiles = list(tile_set)
    active = spec.c_i * len(tiles)
    if active > arch.num_vector_memories:
        raise ShapeError(
            f"tile set needs {active} arrays, have {arch.num_vector_memories}"
        )
    word = arch.word_elems
    groups = -(-spec.n // word)
    positions = spec.h_o * spec.w_o
    n_windows = positions * groups
    region_words = spec.h_i * spec.w_i

    # per-tile in-bounds flag and gathered spatial address per position
    inb = np.empty((len(tiles), positions), dtype=bool)
    gaddr = np.zeros((len(tiles), positions), dtype=np.int64)
    for t, tile in enumerate(tiles):
        rows, cols = tile.input_rows(), tile.input_cols()
        ok = (rows[:, None] >= 0) & (cols[None, :] >= 0)
        addr = rows[:, None] * spec.w_i + cols[None, :]
        inb[t] = ok.reshape(-1)
        gaddr[t] = np.where(ok, addr, 0).reshape(-1)

    if include_writes:
        cot = min(spec.c_o, arch.array_cols) if c_o_tile is None else c_o_tile
        out_words_total = -(-positions * spec.n * cot // word)
        base_w, extra = divmod(out_words_total, active)
        write_quota = [base_w + (1 if a < extra else 0) for a in range(active)]
    else:
        write_quota = [0] * active

    cycles, arrays, addrs, kinds = [], [], [], []
    out_base = groups * region_words
    for a in range(active):
        t = a // spec.c_i
        pending = write_quota[a]
        written = 0
        win = 0
        while win < n_windows or pending > 0:
            base = win * word + a  # skew: array a delayed by a cycles
            free0 = 0
            if win < n_windows:
                p = win // groups
                g = win % groups
                if inb[t, p]:
                    cycles.append(base)
                    arrays.append(a)
                    addrs.append(g * region_words + gaddr[t, p])
                    kinds.append(False)
                    free0 = 1
            for off in range(free0, word):
                if pending == 0:
                    break
                cycles.append(base + off)
                arrays.append(a)
                addrs.append(out_base + written)
                kinds.append(True)
                pending -= 1
                written += 1
            win += 1

    order = np.lexsort((np.array(arrays), np.array(cycles)))
    return AccessTrace(
        cycles=np.array(cycles, dtype=np.int64)[order],
        arrays=np.array(arrays, dtype=np.int64)[order],
        addrs=np.array(addrs, dtype=np.int64)[order],
        is_write=np.array(kinds, dtype=bool)[order],
        n_arrays=arch.num_vector_memories,
        word_elems=word,
    )
