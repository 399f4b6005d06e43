"""Workload files: named layer lists plus run options.

A workload is a JSON document::

    {"model": "vgg16-like", "elem_bytes": 2, "seed": 0,
     "methods": ["channel_first"],
     "layers": [{"name": "conv1_1", "n": 8, "c_i": 3, "h_i": 224,
                 "w_i": 224, "c_o": 64, "h_f": 3, "w_f": 3,
                 "stride": 1, "pad": 1, "dilation": 1}, ...]}

``stride``/``pad``/``dilation`` accept either a scalar or explicit
``*_h``/``*_w`` keys.  Bare workload names (no path separator) resolve to
the fixtures shipped under ``sasim/data``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .core import ConvSpec, ShapeError
from .simulator import Method


class WorkloadError(ValueError):
    pass


@dataclass
class WorkloadFile:
    model: str
    layers: list  # [(name, ConvSpec)]
    elem_bytes: int = 2
    seed: int = 0
    methods: list = field(default_factory=lambda: [Method.CHANNEL_FIRST_IMPLICIT])


def _axis_pair(d: dict, key: str, default: int):
    if key in d and (f"{key}_h" in d or f"{key}_w" in d):
        raise WorkloadError(f"give either {key} or {key}_h/{key}_w, not both")
    if key in d:
        return int(d[key]), int(d[key])
    return int(d.get(f"{key}_h", default)), int(d.get(f"{key}_w", default))


def layer_spec(d: dict) -> ConvSpec:
    sh, sw = _axis_pair(d, "stride", 1)
    ph, pw = _axis_pair(d, "pad", 0)
    dh, dw = _axis_pair(d, "dilation", 1)
    try:
        return ConvSpec(
            n=int(d["n"]), c_i=int(d["c_i"]), h_i=int(d["h_i"]), w_i=int(d["w_i"]),
            c_o=int(d["c_o"]), h_f=int(d["h_f"]), w_f=int(d["w_f"]),
            stride_h=sh, stride_w=sw, pad_h=ph, pad_w=pw,
            dilation_h=dh, dilation_w=dw,
        )
    except KeyError as exc:
        raise WorkloadError(f"layer is missing required key {exc}") from None


def load_workload(path) -> WorkloadFile:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise WorkloadError(f"{path}:{exc.lineno}: {exc.msg}") from None
    layers = []
    names = set()
    for idx, entry in enumerate(doc.get("layers", [])):
        name = entry.get("name", f"layer{idx}")
        if name in names:
            raise WorkloadError(f"{path}: duplicate layer name {name!r}")
        names.add(name)
        try:
            layers.append((name, layer_spec(entry)))
        except (WorkloadError, ShapeError) as exc:
            raise WorkloadError(f"{path}: layer {name!r}: {exc}") from None
    methods = [Method.parse(m) for m in doc.get("methods", ["channel_first"])]
    return WorkloadFile(
        model=doc.get("model", os.path.basename(str(path))),
        layers=layers,
        elem_bytes=int(doc.get("elem_bytes", 2)),
        seed=int(doc.get("seed", 0)),
        methods=methods,
    )


def builtin_path(name: str) -> str:
    """Filesystem path of a fixture shipped under sasim/data."""
    if not name.endswith(".json"):
        name += ".json"
    ref = resources.files("sasim").joinpath("data", name)
    if not ref.is_file():
        raise WorkloadError(f"no builtin workload {name!r}")
    return str(ref)


def resolve(pathlike: str) -> str:
    """Existing file path, else a builtin fixture name."""
    if os.path.exists(pathlike):
        return pathlike
    if os.sep not in pathlike:
        return builtin_path(pathlike)
    raise WorkloadError(f"workload file not found: {pathlike}")


def random_spec(rng: np.random.Generator, *, max_hw: int = 16,
                max_n: int = 8, max_co: int = 16, max_f: int = 5,
                max_stride: int = 4, max_pad: int = 2,
                max_dilation: int = 2,
                c_i_choices=(1, 2, 3, 8, 16, 128)) -> ConvSpec:
    """Sample a valid random layer inside the given bounds."""
    while True:
        f_h = int(rng.integers(1, max_f + 1))
        f_w = int(rng.integers(1, max_f + 1))
        dil_h = int(rng.integers(1, max_dilation + 1))
        dil_w = int(rng.integers(1, max_dilation + 1))
        pad_h = int(rng.integers(0, max_pad + 1))
        pad_w = int(rng.integers(0, max_pad + 1))
        min_h = max(1, dil_h * (f_h - 1) + 1 - 2 * pad_h)
        min_w = max(1, dil_w * (f_w - 1) + 1 - 2 * pad_w)
        if min_h > max_hw or min_w > max_hw:
            continue
        try:
            return ConvSpec(
                n=int(rng.integers(1, max_n + 1)),
                c_i=int(rng.choice(c_i_choices)),
                h_i=int(rng.integers(min_h, max_hw + 1)),
                w_i=int(rng.integers(min_w, max_hw + 1)),
                c_o=int(rng.integers(1, max_co + 1)),
                h_f=f_h, w_f=f_w,
                stride_h=int(rng.integers(1, max_stride + 1)),
                stride_w=int(rng.integers(1, max_stride + 1)),
                pad_h=pad_h, pad_w=pad_w,
                dilation_h=dil_h, dilation_w=dil_w,
            )
        except ShapeError:
            continue
