"""Binary checkpoint format.

Layout::

    b"PODSUMCK"            8-byte magic
    uint32 LE              format version
    uint64 LE              header length in bytes
    header                 UTF-8 JSON: {"kind", "config", "meta", "tensors": [{"name", "shape"}]}
    tensor blobs           row-major float64 little-endian, in header order
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"PODSUMCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_tensors(path: str | Path, kind: str, config: dict, tensors: dict[str, torch.Tensor],
                 meta: dict | None = None) -> None:
    names = list(tensors)
    header = {
        "kind": kind,
        "config": config,
        "meta": meta or {},
        "tensors": [{"name": n, "shape": list(tensors[n].shape)} for n in names],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(head)))
        fh.write(head)
        for n in names:
            arr = tensors[n].detach().cpu().to(torch.float64).contiguous().numpy()
            fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))
    os.replace(tmp, path)


def load_tensors(path: str | Path) -> tuple[str, dict, dict, dict[str, torch.Tensor]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a podsum checkpoint")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    header = json.loads(data[20:20 + hlen].decode("utf-8"))
    offset = 20 + hlen
    tensors = {}
    for spec in header["tensors"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(spec["shape"])
        tensors[spec["name"]] = torch.from_numpy(arr.astype(np.float64))
        offset += 8 * count
    if offset != len(data):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")
    return header["kind"], header["config"], header["meta"], tensors


def save_module(path: str | Path, kind: str, module: torch.nn.Module, config: dict, meta: dict | None = None) -> None:
    meta = dict(meta or {})
    meta.setdefault("frozen", sorted(getattr(module, "frozen", ())))
    save_tensors(path, kind, config, dict(module.state_dict()), meta)


def load_state(module: torch.nn.Module, tensors: dict[str, torch.Tensor]) -> None:
    dtype = next(module.parameters()).dtype
    module.load_state_dict({k: v.to(dtype) for k, v in tensors.items()})


def save_model(path: str | Path, model, meta: dict | None = None) -> None:
    """Save a Seq2SeqModel or HierModel."""
    from .hier import HierModel

    kind = "hier" if isinstance(model, HierModel) else "seq2seq"
    save_module(path, kind, model, model.config.to_dict(), meta)


def load_model(path: str | Path, expect: str | None = None):
    from .hier import HierConfig, HierModel
    from .seq2seq import DTYPES, ModelConfig, Seq2SeqModel, freeze

    kind, config, meta, tensors = load_tensors(path)
    if expect is not None and kind != expect:
        raise CheckpointError(f"{path}: expected a {expect} checkpoint, found {kind}")
    if kind == "seq2seq":
        cfg = ModelConfig.from_dict(config)
        model = Seq2SeqModel(cfg).to(DTYPES[cfg.dtype])
        load_state(model, tensors)
        freeze(model, meta.get("frozen", []))
    elif kind == "hier":
        cfg = HierConfig.from_dict(config)
        model = HierModel(cfg).to(torch.float64)
        load_state(model, tensors)
    else:
        raise CheckpointError(f"{path}: not a model checkpoint (kind={kind})")
    model.meta = meta
    return model
