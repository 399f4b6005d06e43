"""Command-line front end: simulate, sweep, overhead, verify.

All commands emit CSV (schema versioned by a leading comment line) and
exit non-zero with a single-line ``sasim: error: <Code>: <message>`` on
any failure.  ``SIM_LOG_LEVEL`` controls diagnostics.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import nullcontext
from itertools import product

import numpy as np

from .core import ConvSpec, direct_conv
from .lowering import lowered_memory_footprint
from .memmodel import ArchConfig
from .simulator import (ALL_METHODS, Method, default_operands,
                        multi_tile_count, simulate, sweep)
from .workloads import load_workload, random_spec, resolve

log = logging.getLogger("sasim")


class LayerError(RuntimeError):
    """A named workload layer failed to simulate."""


CSV_SCHEMA = "# sasim-csv v1"

SIM_COLUMNS = [
    "name", "method",
    "n", "c_i", "h_i", "w_i", "c_o", "h_f", "w_f",
    "stride_h", "stride_w", "pad_h", "pad_w", "dilation_h", "dilation_w",
    "array_rows", "array_cols", "word_elems", "elem_bytes", "clock_mhz",
    "multi_tile",
    "total_cycles", "compute_cycles", "stall_cycles", "weight_load_cycles",
    "utilization", "tflops",
    "dram_read_bytes", "dram_write_bytes",
    "sram_reads", "sram_writes", "sram_idle_ratio", "workspace_bytes",
    "sram_area",
    "error",
]

OVERHEAD_COLUMNS = [
    "name", "n", "c_i", "h_i", "w_i", "c_o", "h_f", "w_f",
    "stride_h", "stride_w", "pad_h", "pad_w",
    "original_bytes", "lowered_bytes", "ratio",
]


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    if v is None:
        return ""
    return v


def _write_csv(out, columns, rows):
    ctx = nullcontext(sys.stdout) if out in (None, "-") else open(out, "w", newline="")
    with ctx as fh:
        fh.write(CSV_SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def _spec_cells(name, spec: ConvSpec):
    return {
        "name": name, "n": spec.n, "c_i": spec.c_i, "h_i": spec.h_i,
        "w_i": spec.w_i, "c_o": spec.c_o, "h_f": spec.h_f, "w_f": spec.w_f,
        "stride_h": spec.stride_h, "stride_w": spec.stride_w,
        "pad_h": spec.pad_h, "pad_w": spec.pad_w,
        "dilation_h": spec.dilation_h, "dilation_w": spec.dilation_w,
    }


def _arch_cells(arch: ArchConfig):
    return {
        "array_rows": arch.array_rows, "array_cols": arch.array_cols,
        "word_elems": arch.word_elems, "elem_bytes": arch.elem_bytes,
        "clock_mhz": arch.clock_mhz,
    }


def _report_cells(report, arch):
    return {
        "total_cycles": report.total_cycles,
        "compute_cycles": report.compute_cycles,
        "stall_cycles": report.stall_cycles,
        "weight_load_cycles": report.weight_load_cycles,
        "utilization": report.pe_utilization,
        "tflops": report.tflops(arch.clock_mhz),
        "dram_read_bytes": report.dram_bytes_read,
        "dram_write_bytes": report.dram_bytes_written,
        "sram_reads": report.sram_reads,
        "sram_writes": report.sram_writes,
        "sram_idle_ratio": report.sram_idle_ratio,
        "workspace_bytes": report.sram_workspace_bytes,
    }


def _load_arch(args) -> ArchConfig:
    if getattr(args, "arch", None):
        return ArchConfig.from_file(args.arch)
    return ArchConfig()


def cmd_simulate(args) -> int:
    wl = load_workload(resolve(args.workload))
    arch = _load_arch(args)
    methods = [Method.parse(args.method)] if args.method else wl.methods
    seed = args.seed if args.seed is not None else wl.seed
    rows, mismatched = [], []
    for name, spec in wl.layers:
        for m in methods:
            row = _spec_cells(name, spec) | _arch_cells(arch)
            row["method"] = m.value
            row["multi_tile"] = (multi_tile_count(spec, arch)
                                 if m is Method.CHANNEL_FIRST_IMPLICIT else 1)
            try:
                if args.verify:
                    x, f = default_operands(spec, seed)
                    res = simulate(spec, arch, m, ifmap=x, filters=f)
                    oracle = direct_conv(x, f, spec)
                    if not np.array_equal(res.ofmap.data, oracle.data):
                        mismatched.append(f"{name}/{m.value}")
                else:
                    res = simulate(spec, arch, m, compute_ofmap=False)
            except Exception as exc:
                raise LayerError(
                    f"layer {name!r}: {type(exc).__name__}: {exc}") from exc
            log.debug("layer %s method %s: %d cycles", name, m.value,
                      res.report.total_cycles)
            row |= _report_cells(res.report, arch)
            rows.append(row)
    _write_csv(args.out, SIM_COLUMNS, rows)
    if args.verify:
        total = len(rows)
        print(f"{total - len(mismatched)}/{total} match")
        if mismatched:
            print("sasim: error: VerifyMismatch: " + ",".join(mismatched),
                  file=sys.stderr)
            return 1
    return 0


def cmd_sweep(args) -> int:
    wl = load_workload(resolve(args.workload))
    with open(args.sweep) as fh:
        grid = json.load(fh)
    base = _load_arch(args)

    # optional user-supplied area table: {"<word_elems>": area}; areas are
    # never estimated here, only joined onto the rows
    areas = {}
    if args.area_table:
        with open(args.area_table) as fh:
            areas = {int(k): float(v) for k, v in json.load(fh).items()}

    archs = []
    for rows_, word, cap in product(
            grid.get("array_sizes", [base.array_rows]),
            grid.get("word_sizes", [base.word_elems]),
            grid.get("multi_tile_caps", [base.max_multi_tile])):
        archs.append(base.with_(array_rows=rows_, array_cols=rows_,
                                word_elems=word, max_multi_tile=cap))

    layers = []
    for stride in grid.get("strides", [None]):
        for name, spec in wl.layers:
            if stride is None:
                layers.append((name, spec))
            else:
                layers.append((f"{name}@s{stride}", spec.with_stride(stride)))

    if args.method:
        methods = [Method.parse(args.method)]
    else:
        methods = [Method.parse(m) for m in grid.get(
            "methods", [m.value for m in wl.methods])]

    result = sweep([sp for _, sp in layers], archs, methods, jobs=args.jobs)
    rows = []
    for r in result:
        name = layers[r.spec_index][0]
        row = _spec_cells(name, r.spec) | _arch_cells(r.arch)
        row["method"] = r.method.value
        row["multi_tile"] = (multi_tile_count(r.spec, r.arch)
                             if r.method is Method.CHANNEL_FIRST_IMPLICIT else 1)
        if r.report is not None:
            row |= _report_cells(r.report, r.arch)
        else:
            row["error"] = r.error
        if areas:
            row["sram_area"] = areas.get(r.arch.word_elems)
        rows.append(row)
    _write_csv(args.out, SIM_COLUMNS, rows)
    return 0


def cmd_overhead(args) -> int:
    wl = load_workload(resolve(args.workload))
    rows = []
    tot_orig = tot_low = 0
    for name, spec in wl.layers:
        fp = lowered_memory_footprint(spec, wl.elem_bytes)
        tot_orig += fp["original_bytes"]
        tot_low += fp["lowered_bytes"]
        rows.append(_spec_cells(name, spec) | fp)
    if wl.layers:
        rows.append({
            "name": "TOTAL",
            "original_bytes": tot_orig,
            "lowered_bytes": tot_low,
            "ratio": tot_low / tot_orig,
        })
    _write_csv(args.out, OVERHEAD_COLUMNS, rows)
    return 0


def cmd_verify(args) -> int:
    arch = _load_arch(args)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    failures = []
    for i in range(args.count):
        spec = random_spec(rng)
        x, f = default_operands(spec, int(rng.integers(0, 2**31)))
        oracle = direct_conv(x, f, spec)
        for m in ALL_METHODS:
            res = simulate(spec, arch, m, ifmap=x, filters=f)
            if not np.array_equal(res.ofmap.data, oracle.data):
                failures.append(f"case{i}/{m.value}")
    print(f"{args.count - len(set(f.split('/')[0] for f in failures))}"
          f"/{args.count} match")
    if failures:
        print("sasim: error: VerifyMismatch: " + ",".join(failures),
              file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sasim",
        description="Weight-stationary systolic-array convolution simulator",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, workload=True):
        if workload:
            sp.add_argument("--workload", required=True,
                            help="workload JSON (path or builtin name)")
        sp.add_argument("--arch", help="architecture config JSON")
        sp.add_argument("--out", default="-", help="output CSV path (- = stdout)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("simulate", help="simulate every workload layer")
    common(sp)
    sp.add_argument("--method", help="override workload methods")
    sp.add_argument("--verify", action="store_true",
                    help="check OFMaps against the direct-convolution oracle")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="cross-product design-space sweep")
    common(sp)
    sp.add_argument("--sweep", required=True, help="sweep grid JSON")
    sp.add_argument("--method", help="override sweep methods")
    sp.add_argument("--area-table",
                    help="JSON mapping word_elems to SRAM area; joined "
                         "onto rows as the sram_area column")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("overhead", help="explicit-lowering memory overhead")
    common(sp)
    sp.set_defaults(func=cmd_overhead)

    sp = sub.add_parser("verify", help="randomized oracle validation")
    common(sp, workload=False)
    sp.add_argument("--count", type=int, default=30)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SIM_LOG_LEVEL", "WARNING"))
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        msg = str(exc).replace("\n", " ")
        print(f"sasim: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
