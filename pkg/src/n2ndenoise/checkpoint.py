"""Single-file tensor container.

Layout: 8-byte little-endian header length, UTF-8 JSON header, then one
contiguous little-endian blob. The header is {"meta": {...}, "tensors":
[{"name", "shape", "dtype", "byte_offset"}, ...]} with dtype "<f4" or "<f8".
Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def save_tensors(path, tensors: dict, meta: dict | None = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        code = arr.dtype.newbyteorder("<").str
        if code not in _DTYPES:
            raise ValueError(f"{name}: dtype {arr.dtype} not supported, use f4/f8")
        arr = arr.astype(_DTYPES[code], copy=False)
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": code,
                "byte_offset": offset,
            }
        )
        raw = arr.tobytes()
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"meta": meta or {}, "tensors": entries}, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_tensors(path):
    """Returns (tensors dict, meta dict); verifies blob length first."""
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ValueError(f"{path}: too short for a header length")
    (hlen,) = struct.unpack_from("<Q", data, 0)
    if 8 + hlen > len(data):
        raise ValueError(f"{path}: truncated header")
    try:
        header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: corrupt header: {exc}") from exc
    blob = data[8 + hlen :]

    expected = 0
    for ent in header["tensors"]:
        size = int(np.prod(ent["shape"], dtype=np.int64)) * _DTYPES[ent["dtype"]].itemsize
        expected = max(expected, ent["byte_offset"] + size)
    if len(blob) != expected:
        raise ValueError(
            f"{path}: blob holds {len(blob)} bytes, header expects {expected}"
        )

    tensors = {}
    for ent in header["tensors"]:
        dtype = _DTYPES[ent["dtype"]]
        count = int(np.prod(ent["shape"], dtype=np.int64))
        start = ent["byte_offset"]
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=start)
        tensors[ent["name"]] = arr.reshape(ent["shape"]).copy()
    return tensors, header["meta"]
