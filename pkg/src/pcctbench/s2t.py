"""S2T tensor files: the workbench's on-disk array format.

Layout (version 1, little endian):

    bytes 0..3   magic "S2T1" (53 32 54 31)
    byte  4      dtype code: 1 = float32, 2 = int32
    byte  5      ndim
    next ndim*8  dims as u64
    rest         row-major payload

One array per file; sample grouping lives in the dataset manifest. A JSON
sidecar at <name>.s2t.json carries units, channel tag and geometry.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from pcctbench.errors import S2TFormatError

MAGIC = b"S2T1"

_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<i4")}
_CODE_FOR_KIND = {"f": 1, "i": 2}


def write_s2t(path, array: np.ndarray) -> None:
    """Write an array as S2T. Floats are stored as f32, integers as i32."""
    array = np.asarray(array)
    if array.dtype.kind not in _CODE_FOR_KIND:
        raise ValueError(f"unsupported dtype {array.dtype} for S2T")
    code = _CODE_FOR_KIND[array.dtype.kind]
    dtype = _DTYPE_CODES[code]
    if code == 2:
        if array.size and (array.max(initial=0) > np.iinfo("i4").max or array.min(initial=0) < np.iinfo("i4").min):
            raise ValueError("integer array exceeds int32 range")
    out = array.astype(dtype, copy=False)
    header = MAGIC + struct.pack("<BB", code, out.ndim)
    header += struct.pack(f"<{out.ndim}Q", *out.shape)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(out).tobytes())


def read_s2t(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise S2TFormatError(path, f"cannot read: {exc}") from exc
    if len(raw) < 6:
        raise S2TFormatError(path, "truncated header")
    if raw[:4] != MAGIC:
        raise S2TFormatError(path, f"bad magic {raw[:4]!r}")
    code, ndim = raw[4], raw[5]
    if code not in _DTYPE_CODES:
        raise S2TFormatError(path, f"unknown dtype code {code}")
    offset = 6 + 8 * ndim
    if len(raw) < offset:
        raise S2TFormatError(path, "truncated dims")
    dims = struct.unpack_from(f"<{ndim}Q", raw, 6)
    dtype = _DTYPE_CODES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
    if len(raw) - offset != expected:
        raise S2TFormatError(path, f"payload is {len(raw) - offset} bytes, expected {expected}")
    return np.frombuffer(raw, dtype=dtype, offset=offset).reshape(dims).copy()


def write_sidecar(path, meta: dict) -> None:
    """Write the JSON sidecar for an S2T file (at <path>.json)."""
    sidecar = Path(str(path) + ".json")
    sidecar.write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def read_sidecar(path) -> dict:
    sidecar = Path(str(path) + ".json")
    if not sidecar.exists():
        return {}
    return json.loads(sidecar.read_text())
