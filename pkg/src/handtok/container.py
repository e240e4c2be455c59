"""Named-array binary container shared by hand-model assets and checkpoints.

Layout::

    magic (4 bytes) | header length (uint32 LE) | JSON header (utf-8) | blobs

The header lists every array as ``{"name", "dtype", "shape", "offset"}`` with
offsets relative to the first blob byte.  Floats are little-endian float32,
integers little-endian int32.  The header is serialized with sorted keys and
no whitespace so identical content gives identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_DTYPES = {"f4": np.dtype("<f4"), "i4": np.dtype("<i4")}


class ContainerError(ValueError):
    pass


def _code(arr: np.ndarray) -> str:
    if arr.dtype.kind == "f":
        return "f4"
    if arr.dtype.kind in "iub":
        return "i4"
    raise ContainerError(f"unsupported dtype {arr.dtype}")


def encode(magic: bytes, meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    entries = []
    blobs = []
    offset = 0
    for name in arrays:
        arr = np.asarray(arrays[name])
        code = _code(arr)
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True, separators=(",", ":")).encode()
    return magic + struct.pack("<I", len(header)) + header + b"".join(blobs)


def decode(magic: bytes, payload: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if payload[:4] != magic:
        raise ContainerError(f"bad magic {payload[:4]!r}, expected {magic!r}")
    (hlen,) = struct.unpack("<I", payload[4:8])
    try:
        header = json.loads(payload[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupt header: {exc}") from exc
    base = 8 + hlen
    arrays = {}
    for entry in header["arrays"]:
        dtype = _DTYPES[entry["dtype"]]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = base + entry["offset"]
        end = start + count * dtype.itemsize
        if end > len(payload):
            raise ContainerError(f"array '{entry['name']}' runs past end of file")
        arr = np.frombuffer(payload[start:end], dtype=dtype).reshape(shape)
        arrays[entry["name"]] = arr.astype(dtype.newbyteorder("="), copy=True)
    return header["meta"], arrays


def write(path, magic: bytes, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(magic, meta, arrays))


def read(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    return decode(magic, Path(path).read_bytes())
