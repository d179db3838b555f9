"""Parameter checkpoint files.

Layout (all integers little-endian):

    magic     4 bytes   b"SSCP"
    version   uint32    currently 1
    nheader   uint32    number of UTF-8 header lines that follow
    header    nheader x (uint32 length + bytes)   free-form "key=value" text
    nparams   uint32
    entries   nparams x entry

    entry:
        name    uint16 length + UTF-8 bytes
        dtype   uint8   0 = float64, 1 = float32
        ndim    uint8
        dims    ndim x uint32
        data    raw little-endian values, C order

Round-trips are bit-exact: values are written with their in-memory dtype.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SSCP"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path: str | Path,
    params: dict[str, np.ndarray],
    header: dict[str, str] | None = None,
) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    lines = [f"{k}={v}" for k, v in (header or {}).items()]
    buf.write(struct.pack("<I", len(lines)))
    for line in lines:
        raw = line.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
    buf.write(struct.pack("<I", len(params)))
    for name, arr in params.items():
        arr = np.asarray(arr)
        if arr.dtype not in _DTYPE_CODES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<I", d))
        buf.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    data = Path(path).read_bytes()
    buf = io.BytesIO(data)
    if buf.read(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (nlines,) = struct.unpack("<I", buf.read(4))
    header: dict[str, str] = {}
    for _ in range(nlines):
        (n,) = struct.unpack("<I", buf.read(4))
        line = buf.read(n).decode("utf-8")
        key, _, value = line.partition("=")
        header[key] = value
    (nparams,) = struct.unpack("<I", buf.read(4))
    params: dict[str, np.ndarray] = {}
    for _ in range(nparams):
        (nlen,) = struct.unpack("<H", buf.read(2))
        name = buf.read(nlen).decode("utf-8")
        code, ndim = struct.unpack("<BB", buf.read(2))
        if code not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name!r}")
        dims = struct.unpack(f"<{ndim}I", buf.read(4 * ndim)) if ndim else ()
        dt = _DTYPES[code]
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(buf.read(count * dt.itemsize), dtype=dt).reshape(dims)
        params[name] = arr.astype(dt.newbyteorder("="))
    return params, header
