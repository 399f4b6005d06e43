import numpy as np
import pytest

from sasim import (ArchConfig, CapacityError, ConvSpec, Layout, ShapeError,
                   Tensor, address_schedule, decompose_tiles, dram_fill_cost,
                   pack_hwcn)
from sasim.workloads import random_spec
from conftest import int_operands


def small_arch(**kw):
    base = dict(array_rows=4, array_cols=4, word_elems=2, elem_bytes=4,
                sram_capacity_bytes=4096, dram_bandwidth_gbps=700.0,
                clock_mhz=700.0, dram_fixed_latency_cycles=1)
    base.update(kw)
    return ArchConfig(**base)


def tile_by_pos(spec, r, s):
    return next(t for t in decompose_tiles(spec) if (t.r, t.s) == (r, s))


# ---------------------------------------------------------------- ArchConfig

def test_defaults_match_baseline_platform():
    arch = ArchConfig()
    assert arch.array_rows == arch.array_cols == 128
    assert arch.clock_mhz == 700.0
    assert arch.num_vector_memories == 128
    assert arch.word_elems == 8 and arch.elem_bytes == 4
    assert arch.total_sram_bytes == 32 * 1024 * 1024
    assert arch.dram_bandwidth_gbps == 700.0
    assert arch.bytes_per_cycle == 1000.0


def test_arch_from_file_roundtrip(tmp_path):
    from sasim.workloads import builtin_path

    arch = ArchConfig.from_file(builtin_path("arch_128x128"))
    assert arch == ArchConfig()


def test_arch_validation():
    with pytest.raises(ShapeError):
        ArchConfig(num_vector_memories=64)
    with pytest.raises(ShapeError):
        ArchConfig(word_elems=0)
    with pytest.raises(ShapeError):
        ArchConfig.from_dict({"array_rowz": 16})


# ---------------------------------------------------------------- pack_hwcn

def fig8_spec():
    return ConvSpec.square(2, 4, 5, 3, 3)


def test_pack_word_holds_batch_pair(rng):
    spec = fig8_spec()
    x, _ = int_operands(rng, spec)
    img = pack_hwcn(Tensor.from_array(x, Layout.NHWC), spec, small_arch())
    # array 0 = channel 0; the word at spatial (2, 0) packs both batches
    got = img.word_at(0, (2, 0))
    assert np.array_equal(got, x[:, 2, 0, 0])
    got = img.word_at(3, (4, 1))
    assert np.array_equal(got, x[:, 4, 1, 3])


def test_pack_short_batch_zero_pads(rng):
    spec = ConvSpec.square(1, 2, 3, 1, 1)
    x, _ = int_operands(rng, spec)
    arch = small_arch(array_rows=8, array_cols=8, word_elems=8)
    img = pack_hwcn(Tensor.from_array(x, Layout.NHWC), spec, arch)
    word = img.word_at(1, (1, 2))
    assert word[0] == x[0, 1, 2, 1]
    assert np.all(word[1:] == 0)
    # one real element out of word_elems
    assert img.batch_groups == 1


def test_pack_splits_long_batch_into_word_groups(rng):
    spec = ConvSpec.square(5, 2, 3, 1, 1)
    x, _ = int_operands(rng, spec)
    img = pack_hwcn(Tensor.from_array(x, Layout.NHWC), spec, small_arch())
    assert img.batch_groups == 3
    assert np.array_equal(img.word_at(1, (2, 1), group=0), x[0:2, 2, 1, 1])
    assert np.array_equal(img.word_at(1, (2, 1), group=1), x[2:4, 2, 1, 1])
    word = img.word_at(1, (2, 1), group=2)
    assert word[0] == x[4, 2, 1, 1] and word[1] == 0


def test_pack_duplicates_channels_per_tile_copy(rng):
    spec = ConvSpec.square(2, 2, 5, 3, 3)
    x, _ = int_operands(rng, spec)
    img = pack_hwcn(Tensor.from_array(x, Layout.NHWC), spec, small_arch(), tiles=2)
    assert img.occupancy == {(0, 0): 0, (1, 0): 1, (0, 1): 2, (1, 1): 3}
    assert np.array_equal(img.words[0], img.words[2])
    assert np.array_equal(img.words[1], img.words[3])
    assert img.resident_bytes == 2 * img.tile_copies * img.n_words * 8


def test_pack_capacity_error(rng):
    spec = ConvSpec.square(2, 4, 5, 3, 3)
    x, _ = int_operands(rng, spec)
    arch = small_arch(sram_capacity_bytes=64)
    with pytest.raises(CapacityError) as err:
        pack_hwcn(Tensor.from_array(x, Layout.NHWC), spec, arch)
    assert err.value.required == 25 * 8
    assert err.value.available == 64


def test_pack_too_many_tiles():
    spec = fig8_spec()
    x = Tensor.from_array(np.zeros((2, 5, 5, 4)), Layout.NHWC)
    with pytest.raises(ShapeError):
        pack_hwcn(x, spec, small_arch(), tiles=2)


# ---------------------------------------------------------------- schedule

def test_schedule_word2_alternates_read_write():
    spec = fig8_spec()
    trace = address_schedule([tile_by_pos(spec, 0, 0)], spec, small_arch())
    trace.validate_port_exclusivity()
    for a in range(4):
        mask = trace.arrays == a
        cyc = trace.cycles[mask]
        wr = trace.is_write[mask]
        # within the skewed stream, even offsets read and odd offsets write
        assert np.all((cyc[~wr] - a) % 2 == 0)
        assert np.all((cyc[wr] - a) % 2 == 1)


def test_schedule_word1_reads_every_cycle_with_skew():
    spec = ConvSpec.square(1, 3, 4, 2, 2)
    arch = small_arch(array_rows=6, array_cols=6, word_elems=1)
    trace = address_schedule([tile_by_pos(spec, 0, 0)], spec, arch,
                             include_writes=False)
    positions = spec.h_o * spec.w_o
    for a in range(3):
        cyc = trace.read_cycles(a)
        assert cyc[0] == a                    # skew by array index
        assert np.array_equal(np.diff(cyc), np.ones(positions - 1))


def test_schedule_read_count_and_cadence():
    spec = ConvSpec.square(4, 4, 5, 3, 3)   # no padding: every window real
    arch = small_arch(word_elems=2)
    tile = tile_by_pos(spec, 1, 1)
    trace = address_schedule([tile], spec, arch, include_writes=False)
    groups = -(-spec.n // arch.word_elems)
    expect = spec.h_o * spec.w_o * groups
    assert np.all(trace.reads_per_array()[:4] == expect)
    for a in range(4):
        assert np.all(np.diff(trace.read_cycles(a)) == arch.word_elems)


def test_schedule_padding_positions_skip_reads():
    spec = ConvSpec.square(2, 4, 5, 3, 3, pad=1)
    tile = tile_by_pos(spec, 0, 0)   # top-left tap: first row/col padded
    trace = address_schedule([tile], spec, small_arch(), include_writes=False)
    inb = tile.in_bounds_count()
    assert inb < spec.h_o * spec.w_o
    assert np.all(trace.reads_per_array()[:4] == inb)


def test_schedule_port_exclusivity_random(rng):
    for _ in range(10):
        spec = random_spec(rng, max_hw=7, max_co=6, max_f=3, c_i_choices=(1, 2))
        arch = small_arch(array_rows=8, array_cols=8,
                          word_elems=int(rng.choice((1, 2, 4))))
        tiles = decompose_tiles(spec)[:2]
        if spec.c_i * len(tiles) > 8:
            continue
        trace = address_schedule(tiles, spec, arch)
        trace.validate_port_exclusivity()


def test_schedule_multi_tile_uses_tile_groups():
    spec = ConvSpec.square(2, 2, 5, 3, 3)
    tiles = [tile_by_pos(spec, 0, 0), tile_by_pos(spec, 0, 1)]
    trace = address_schedule(tiles, spec, small_arch(), include_writes=False)
    # arrays 0,1 stream tile <0,0>'s addresses; arrays 2,3 tile <0,1>'s
    a0 = trace.addrs[(trace.arrays == 0) & ~trace.is_write]
    a2 = trace.addrs[(trace.arrays == 2) & ~trace.is_write]
    assert a2[0] - a0[0] == 1  # neighbouring filter column, one pixel right


# ---------------------------------------------------------------- dram cost

def test_fill_cost_single_element():
    spec = ConvSpec.square(2, 4, 5, 3, 3)
    arch = small_arch()
    cost = dram_fill_cost([(0, 0, 0)], "HWC", spec, arch)
    batch = min(spec.n, arch.word_elems)
    assert cost.runs == 1
    assert cost.bytes == batch * arch.elem_bytes
    assert cost.cycles == arch.dram_fixed_latency_cycles + 1


def test_fill_cost_run_structure_hwc_vs_chw():
    # 3x3 spatial block of an 8-channel 5x5 IFMap: HWC merges each row of
    # the block into one burst; channel-major needs one burst per
    # (channel, row).
    spec = ConvSpec.square(1, 8, 5, 1, 3)
    arch = small_arch()
    coords = [(h, w) for h in range(3) for w in range(3)]
    hwc = dram_fill_cost(coords, "HWC", spec, arch)
    chw = dram_fill_cost(coords, "CHW", spec, arch)
    assert hwc.runs == 3
    assert chw.runs == 24
    assert hwc.bytes == chw.bytes == 9 * 8 * arch.elem_bytes
    assert hwc.cycles < chw.cycles


def test_fill_cost_hwc_never_worse_than_chw(rng):
    for _ in range(10):
        spec = random_spec(rng, max_hw=10, max_co=2, c_i_choices=(2, 3, 8))
        tile = decompose_tiles(spec)[0]
        coords = sorted(tile.coords())
        if not coords:
            continue
        hwc = dram_fill_cost(coords, "HWC", spec, spec_arch := small_arch())
        chw = dram_fill_cost(coords, "CHW", spec, spec_arch)
        assert hwc.cycles <= chw.cycles
        assert hwc.bytes == chw.bytes


def test_fill_cost_shrinks_with_stride():
    arch = ArchConfig()
    costs, sizes = {}, {}
    for s in (1, 2, 4):
        spec = ConvSpec.square(8, 64, 64, 64, 3, stride=s)
        tile = tile_by_pos(spec, 1, 1)
        coords = sorted(tile.coords())
        sizes[s] = len(coords)
        costs[s] = dram_fill_cost(coords, "HWC", spec, arch).cycles
    for s in (2, 4):
        shrink = costs[s] / costs[1]
        ideal = sizes[s] / sizes[1]
        assert shrink <= ideal * 2.5     # run-boundary rounding slack
        assert costs[s] < costs[1]


def test_fill_cost_stride2_one_run_per_gathered_position():
    # strided gathers in HWC stay strided at channel-block granularity:
    # every gathered position is its own burst
    spec = ConvSpec.square(2, 8, 9, 2, 3, stride=2)
    tile = tile_by_pos(spec, 1, 1)
    coords = sorted(tile.coords())
    cost = dram_fill_cost(coords, "HWC", spec, small_arch())
    assert cost.runs == len(coords)


def test_fill_cost_rejects_out_of_bounds():
    spec = ConvSpec.square(1, 2, 4, 1, 1)
    with pytest.raises(ShapeError):
        dram_fill_cost([(4, 0, 0)], "HWC", spec, small_arch())
    with pytest.raises(ShapeError):
        dram_fill_cost([(0, 0, 0)], "XYZ", spec, small_arch())
