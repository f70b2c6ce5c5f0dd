"""Versioned network checkpoints.

A checkpoint is an ``.npz`` holding a JSON metadata entry (format version,
architecture spec, parameter names in declaration order, optional user
extras) plus one array per parameter tensor and, when present, the Adam
moments and step counter. Parameter round-trips are bit-exact because the
raw float64 buffers are stored.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .networks import build_network
from .optim import AdamState

FORMAT_VERSION = 1


def save_checkpoint(path, net, adam: AdamState | None = None, extra: dict | None = None) -> None:
    names = [n for n, _ in net.params()]
    meta = {
        "format_version": FORMAT_VERSION,
        "arch": net.arch,
        "param_names": names,
        "has_adam": adam is not None,
        "extra": extra or {},
    }
    arrays = {f"param_{i}": arr for i, (_, arr) in enumerate(net.params())}
    if adam is not None:
        arrays.update({f"adam_m_{i}": m for i, m in enumerate(adam.m)})
        arrays.update({f"adam_v_{i}": v for i, v in enumerate(adam.v)})
        arrays["adam_t"] = np.asarray(adam.t, dtype=np.int64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, meta=json.dumps(meta), **arrays)


def load_checkpoint(path):
    """Returns (net, adam_or_none, extra)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version "
                             f"{meta['format_version']} (expected {FORMAT_VERSION})")
        arch = meta["arch"]
        arch["conv_spec"] = [tuple(s) for s in arch["conv_spec"]]
        net = build_network(arch)
        params = net.param_arrays()
        if len(meta["param_names"]) != len(params):
            raise ValueError("checkpoint parameter count does not match architecture")
        for i, arr in enumerate(params):
            arr[...] = data[f"param_{i}"]
        adam = None
        if meta["has_adam"]:
            adam = AdamState(
                m=[data[f"adam_m_{i}"].copy() for i in range(len(params))],
                v=[data[f"adam_v_{i}"].copy() for i in range(len(params))],
                t=int(data["adam_t"]),
            )
    return net, adam, meta["extra"]
