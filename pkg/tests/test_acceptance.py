"""Acceptance suite: one test per release criterion.

Every test prints a single ``[acceptance]`` line; the asserted tolerances
are fixed here, not tuned elsewhere.
"""

import time

import numpy as np

from sasim import (ALL_METHODS, ArchConfig, ColumnOrdering, ConvSpec, Layout,
                   Method, Tensor, decompose_tiles, direct_conv, gemm,
                   im2col_explicit, lower_filter, lowered_memory_footprint,
                   multi_tile_count, simulate, sweep, tile_overlap)
from sasim.blocksched import (SubtileOrder, evaluate_plan, order_subtiles,
                              partition, reuse_traffic, working_set_bytes)
from sasim.cli import main as cli_main
from sasim.workloads import builtin_path, load_workload, random_spec
from conftest import int_operands

TABLE_ARCH = ArchConfig()

RESNET_LIKE = [
    ConvSpec.square(8, 64, 56, 64, 3, pad=1),
    ConvSpec.square(8, 128, 56, 128, 3, pad=1),
    ConvSpec.square(8, 256, 56, 256, 3, pad=1),
    ConvSpec.square(8, 256, 28, 256, 3, pad=1),
]


def _conclude(num, name, ok, detail=""):
    verdict = "PASS" if ok else "FAIL"
    print(f"[acceptance] criterion {num} ({name}): {verdict}"
          + (f" [{detail}]" if detail else ""))
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def T(arr, layout=Layout.NHWC):
    return Tensor.from_array(np.asarray(arr), layout)


def test_c1_functional_oracle_equivalence():
    start = time.monotonic()
    rng = np.random.default_rng(20240001)
    bad = []
    for case in range(200):
        spec = random_spec(rng)  # default bounds match the criterion
        x, f = int_operands(rng, spec)
        oracle = direct_conv(T(x), T(f, Layout.HWCN), spec)
        for m in ALL_METHODS:
            res = simulate(spec, TABLE_ARCH, m, ifmap=T(x), filters=T(f, Layout.HWCN))
            if not np.array_equal(res.ofmap.data, oracle.data):
                bad.append((case, m.value))
    elapsed = time.monotonic() - start
    _conclude(1, "functional oracle equivalence",
              not bad and elapsed < 60.0,
              f"200 specs x 4 methods, {elapsed:.1f}s, mismatches={bad[:3]}")


def test_c2_column_permutation_invariance():
    rng = np.random.default_rng(20240002)
    ok = True
    for _ in range(100):
        spec = random_spec(rng, max_hw=8, max_co=5, max_f=3, c_i_choices=(1, 2, 3, 8))
        x, f = int_operands(rng, spec)
        cf = gemm(im2col_explicit(T(x), spec, ColumnOrdering.CHANNEL_FIRST),
                  lower_filter(T(f, Layout.HWCN), spec, ColumnOrdering.CHANNEL_FIRST))
        cl = gemm(im2col_explicit(T(x), spec, ColumnOrdering.CHANNEL_LAST),
                  lower_filter(T(f, Layout.HWCN), spec, ColumnOrdering.CHANNEL_LAST))
        ok &= np.array_equal(cf.view(), cl.view())
    _conclude(2, "column-permutation invariance", ok, "100 integer instances")


def test_c3_tile_overlap_reproduction():
    def brute(spec, a, b):
        ca, cb = set(), set()
        for i in range(spec.h_o):
            for j in range(spec.w_o):
                for tile, acc in ((a, ca), (b, cb)):
                    h, w = tile.gather(i, j)
                    if 0 <= h < spec.h_i and 0 <= w < spec.w_i:
                        acc.add((h, w))
        return len(ca & cb) / len(ca | cb)

    small = ConvSpec.square(1, 1, 5, 1, 3, stride=2)
    big = ConvSpec.square(1, 1, 99, 1, 3, stride=2)
    results = []
    for spec, want in ((small, 2 / 6), (big, 0.96)):
        tiles = decompose_tiles(spec)
        a = next(t for t in tiles if (t.r, t.s) == (0, 0))
        b = next(t for t in tiles if (t.r, t.s) == (0, 2))
        got = tile_overlap(a, b, spec)
        results.append(got == want and got == brute(spec, a, b))
    _conclude(3, "tile-overlap reproduction", all(results),
              "2/6 small case, 0.96 large case, zero tolerance")


def test_c4_multi_tile_selection():
    three = multi_tile_count(ConvSpec.square(8, 8, 128, 128, 3, pad=1), TABLE_ARCH)
    one = multi_tile_count(ConvSpec.square(8, 128, 56, 128, 3, pad=1), TABLE_ARCH)
    _conclude(4, "multi-tile selection", (three, one) == (3, 1),
              f"c_i=8 -> {three}, c_i=128 -> {one}")


def test_c5_stride_insensitivity_vs_baseline():
    start = time.monotonic()

    def flops(spec, method):
        return simulate(spec, TABLE_ARCH, method,
                        compute_ofmap=False).report.achieved_flops

    ok = True
    details = []
    for base in RESNET_LIKE:
        cf0 = flops(base, Method.CHANNEL_FIRST_IMPLICIT)
        cl0 = flops(base, Method.CHANNEL_LAST_IMPLICIT)
        for s, cl_limit in ((2, 0.80), (4, 0.55)):
            strided = base.with_stride(s)
            cf = flops(strided, Method.CHANNEL_FIRST_IMPLICIT) / cf0
            cl = flops(strided, Method.CHANNEL_LAST_IMPLICIT) / cl0
            details.append(f"c{base.c_i}w{base.w_i}s{s}: cf={cf:.2f} cl={cl:.2f}")
            ok &= cf >= 0.85          # within 15% of stride 1
            ok &= cl <= cl_limit      # >=20% / >=45% degradation
    elapsed = time.monotonic() - start
    ok &= elapsed < 120.0
    _conclude(5, "stride insensitivity vs baseline degradation", ok,
              "; ".join(details) + f"; {elapsed:.1f}s")


def test_c6_explicit_vs_implicit_gap():
    ok = True
    details = []
    for spec in RESNET_LIKE:
        exp = simulate(spec, TABLE_ARCH, Method.EXPLICIT_IM2COL,
                       compute_ofmap=False).report
        imp = simulate(spec, TABLE_ARCH, Method.CHANNEL_FIRST_IMPLICIT,
                       compute_ofmap=False).report
        gap = exp.total_cycles / imp.total_cycles
        fp = lowered_memory_footprint(spec, TABLE_ARCH.elem_bytes)
        ok &= gap >= 1.10
        ok &= exp.dram_bytes_written == fp["lowered_bytes"]
        details.append(f"c{spec.c_i}w{spec.w_i}: {gap:.2f}x")
    _conclude(6, "explicit-vs-implicit gap", ok, "; ".join(details))


def test_c7_memory_overhead_band(tmp_path, capsys):
    out = tmp_path / "overhead.csv"
    code = cli_main(["overhead", "--workload", "vgg16", "--out", str(out)])
    capsys.readouterr()
    lines = out.read_text().splitlines()
    cols = lines[1].split(",")
    idx = {c: i for i, c in enumerate(cols)}
    ok = code == 0
    total_ratio = None
    wl = load_workload(builtin_path("vgg16"))
    specs = dict(wl.layers)
    for line in lines[2:]:
        cells = line.split(",")
        ratio = float(cells[idx["ratio"]])
        if cells[0] == "TOTAL":
            total_ratio = ratio
            continue
        spec = specs[cells[0]]
        ok &= ratio <= spec.h_f * spec.w_f
        if (spec.h_f, spec.w_f, spec.stride_h, spec.pad_h) == (3, 3, 1, 1):
            ok &= ratio == 9.0
    ok &= total_ratio is not None and 1.5 <= total_ratio <= 10.0
    _conclude(7, "memory-overhead band", ok, f"aggregate ratio {total_ratio}")


def test_c8_utilization_vs_array_size():
    wl = load_workload(builtin_path("vgg16"))
    specs = [s for _, s in wl.layers]
    utils = {}
    for size in (32, 64, 128, 256, 512):
        arch = TABLE_ARCH.with_(array_rows=size, array_cols=size)
        rows = sweep(specs, [arch], [Method.CHANNEL_FIRST_IMPLICIT])
        assert all(r.error is None for r in rows)
        macs = sum(r.report.useful_macs for r in rows)
        cycles = sum(r.report.total_cycles for r in rows)
        utils[size] = macs / (cycles * size * size)
    sizes = sorted(utils)
    monotone = all(utils[a] >= utils[b] for a, b in zip(sizes, sizes[1:]))
    halving = utils[256] <= 0.6 * utils[128]
    _conclude(8, "utilization-vs-array-size trend", monotone and halving,
              "utils " + ", ".join(f"{s}:{utils[s]:.3f}" for s in sizes))


def test_c9_word_size_properties():
    wl = load_workload(builtin_path("vgg16"))
    rows = sweep([s for _, s in wl.layers], [TABLE_ARCH],
                 [Method.CHANNEL_FIRST_IMPLICIT])
    min_idle = min(r.report.sram_idle_ratio for r in rows)
    idle_ok = min_idle > 0.5

    spec = ConvSpec.square(8, 128, 56, 128, 3, pad=1)
    reads = {}
    for word in (1, 2, 4, 8):
        arch = TABLE_ARCH.with_(word_elems=word)
        reads[word] = simulate(spec, arch, Method.CHANNEL_FIRST_IMPLICIT,
                               compute_ofmap=False).report.sram_reads
    scaling_ok = all(reads[w] * w == reads[1] for w in (2, 4, 8))
    _conclude(9, "word-size properties", idle_ok and scaling_ok,
              f"min idle ratio {min_idle:.3f}; reads {reads}")


def test_c10_multi_tile_tradeoff():
    spec = ConvSpec.square(8, 8, 128, 128, 3, pad=1)
    ws, fl = {}, {}
    for cap in (1, 2, 3):
        arch = TABLE_ARCH.with_(max_multi_tile=cap)
        rep = simulate(spec, arch, Method.CHANNEL_FIRST_IMPLICIT,
                       compute_ofmap=False).report
        ws[cap] = rep.sram_workspace_bytes
        fl[cap] = rep.achieved_flops
    linear = ws[3] - ws[2] == ws[2] - ws[1] and ws[2] > ws[1]
    increasing = fl[1] < fl[2] < fl[3]
    # diminishing: each extra tile buys a strictly smaller speedup factor
    diminishing = fl[2] / fl[1] > fl[3] / fl[2]
    _conclude(10, "multi-tile trade-off", linear and increasing and diminishing,
              f"workspace {ws}; speedups {fl[2] / fl[1]:.3f}, {fl[3] / fl[2]:.3f}")


def test_c11_block_scheduler():
    spec = ConvSpec.square(1, 4, 99, 4, 3, stride=2)
    plan = partition(spec, block_m=-(-spec.gemm_m // 4), block_n=spec.c_o,
                     block_k=spec.c_i)
    budget = 2 * working_set_bytes(plan)
    fm_order = order_subtiles(plan, SubtileOrder.FILTER_MAJOR)
    ra_order = order_subtiles(plan, SubtileOrder.REUSE_AWARE)
    fm = reuse_traffic(plan, fm_order, budget, spec)
    ra = reuse_traffic(plan, ra_order, budget, spec)
    traffic_ok = ra.dram_bytes < fm.dram_bytes

    rng = np.random.default_rng(20240011)
    fspec = ConvSpec.square(2, 3, 9, 4, 3, stride=2, pad=1)
    x, f = int_operands(rng, fspec)
    fplan = partition(fspec, block_m=7, block_n=2, block_k=2)
    base = evaluate_plan(fplan, order_subtiles(fplan, SubtileOrder.FILTER_MAJOR),
                         T(x), T(f, Layout.HWCN))
    oracle = direct_conv(T(x), T(f, Layout.HWCN), fspec)
    func_ok = np.array_equal(base.data, oracle.data)
    for trial in range(5):
        shuffled = order_subtiles(fplan, SubtileOrder.REUSE_AWARE)
        rng.shuffle(shuffled)
        out = evaluate_plan(fplan, shuffled, T(x), T(f, Layout.HWCN))
        func_ok &= np.array_equal(out.data, base.data)
    _conclude(11, "block scheduler", traffic_ok and func_ok,
              f"reuse-aware {ra.dram_bytes} < filter-major {fm.dram_bytes} bytes; "
              "order-invariant output")
