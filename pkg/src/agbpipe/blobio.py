"""Deterministic binary container for named arrays plus a JSON meta block.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header,
then the raw array buffers back to back. Buffers are written little-endian
and in the order listed in the header, so identical inputs produce identical
bytes (no timestamps, no compression). Used for tiles and checkpoints.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"AGBLOB01"

_DTYPES = {"<f4", "<f8", "<i8", "<i4", "|b1", "|u1"}


def _canon_dtype(arr: np.ndarray) -> str:
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    s = dt.str if dt.str in _DTYPES else {"=f4": "<f4", "=f8": "<f8", "=i8": "<i8", "=i4": "<i4"}.get(dt.str, dt.str)
    if s not in _DTYPES:
        raise ValueError(f"unsupported dtype for container: {arr.dtype}")
    return s


def write_container(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    index = []
    payloads = []
    offset = 0
    for name, arr in arrays.items():
        dts = _canon_dtype(arr)
        buf = np.ascontiguousarray(arr, dtype=np.dtype(dts)).tobytes()
        index.append({"name": name, "dtype": dts, "shape": list(arr.shape), "offset": offset, "nbytes": len(buf)})
        payloads.append(buf)
        offset += len(buf)
    header = json.dumps({"meta": meta, "arrays": index}, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint64(len(header)).tobytes())
        fh.write(header)
        for buf in payloads:
            fh.write(buf)


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ParseError(f"{path}: not a container file (bad magic {magic!r})")
        (hlen,) = np.frombuffer(fh.read(8), dtype="<u8")
        header = json.loads(fh.read(int(hlen)).decode())
        data = fh.read()
    arrays = {}
    for ent in header["arrays"]:
        raw = data[ent["offset"] : ent["offset"] + ent["nbytes"]]
        if len(raw) != ent["nbytes"]:
            raise ParseError(f"{path}: truncated buffer for array {ent['name']!r}")
        arr = np.frombuffer(raw, dtype=np.dtype(ent["dtype"])).reshape(ent["shape"])
        arrays[ent["name"]] = arr.copy()
    return header["meta"], arrays
