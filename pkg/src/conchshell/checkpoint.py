"""Single-file checkpoint container.

Layout::

    magic   8 bytes  b"CONCHCK\\0"
    version u16 LE
    metalen u32 LE
    meta    UTF-8 JSON (arrays: name/dtype/shape/offset, step, kind, config)
    payload raw little-endian float32 arrays, back to back
    crc32   u32 LE over every preceding byte
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .errors import CheckpointError

MAGIC = b"CONCHCK\0"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHI")


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray]
    step: int = 0
    kind: str = ""
    config: dict[str, Any] = field(default_factory=dict)

    def state_dict(self, prefix: str = "") -> dict[str, torch.Tensor]:
        """Arrays under ``prefix`` as tensors with the prefix stripped."""
        return {k[len(prefix):]: torch.from_numpy(v.copy()) for k, v in self.arrays.items()
                if k.startswith(prefix)}


def arrays_from_modules(**modules: torch.nn.Module) -> dict[str, np.ndarray]:
    out = {}
    for name, mod in modules.items():
        for key, t in mod.state_dict().items():
            out[f"{name}.{key}"] = t.detach().cpu().numpy()
    return out


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    entries, blobs, offset = [], [], 0
    for name in sorted(ckpt.arrays):
        arr = np.asarray(ckpt.arrays[name], dtype="<f4", order="C")  # ascontiguousarray would promote 0-d to 1-d
        blob = arr.tobytes()
        entries.append({"name": name, "dtype": "float32", "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    meta = json.dumps({"arrays": entries, "step": int(ckpt.step), "kind": ckpt.kind,
                       "config": ckpt.config, "payload_bytes": offset},
                      sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(meta)) + meta + b"".join(blobs)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint (header incomplete)")
    magic, version, meta_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    meta_end = _PREFIX.size + meta_len
    if len(raw) < meta_end:
        raise CheckpointError(f"{path}: truncated checkpoint (metadata incomplete)")
    try:
        meta = json.loads(raw[_PREFIX.size:meta_end].decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupted metadata block") from exc
    expected = meta_end + meta["payload_bytes"] + 4
    if len(raw) < expected:
        raise CheckpointError(f"{path}: truncated checkpoint ({len(raw)} of {expected} bytes)")
    if len(raw) > expected:
        raise CheckpointError(f"{path}: trailing bytes after checkpoint payload")
    (crc,) = struct.unpack_from("<I", raw, expected - 4)
    if crc != zlib.crc32(raw[:expected - 4]):
        raise CheckpointError(f"{path}: checksum failure")
    arrays = {}
    for e in meta["arrays"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=meta_end + e["offset"])
        arrays[e["name"]] = arr.reshape(e["shape"]).astype(np.float32)
    return Checkpoint(arrays, meta["step"], meta["kind"], meta["config"])
