"""Binary container for named float64 tensors.

Layout: one line of compact JSON (UTF-8, newline-terminated) followed by the
raw little-endian float64 payload. The header maps each tensor name to its
shape and byte offset within the payload and carries an arbitrary `meta`
object. Tensors are laid out in sorted-name order so the bytes are a pure
function of the content; round-trips are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None):
    entries = {}
    payload = bytearray()
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float64)
        entries[name] = {"shape": list(arr.shape), "offset": len(payload)}
        payload += np.ascontiguousarray(arr).astype("<f8").tobytes()
    header = {"format_version": FORMAT_VERSION, "meta": meta or {}, "tensors": entries}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    Path(path).write_bytes(blob + bytes(payload))


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    cut = raw.index(b"\n")
    header = json.loads(raw[:cut].decode())
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported tensor file format version: {version}")
    payload = raw[cut + 1:]
    tensors = {}
    for name, entry in header["tensors"].items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        tensors[name] = arr.reshape(shape).astype(np.float64)
    return tensors, header["meta"]
