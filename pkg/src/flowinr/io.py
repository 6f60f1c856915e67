"""Binary array container, key=value sidecars and P5 graymap export.

Container layout (all integers little-endian)::

    offset 0   4 bytes  magic b"FINR"
    offset 4   u8       format version (1)
    offset 5   u8       dtype code: 0 float32, 1 float64, 2 complex64, 3 complex128
    offset 6   u8       rank r
    offset 7   r x u64  extents
    then                raw row-major data (complex values as interleaved re/im pairs)
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .tensor import Tensor

MAGIC = b"FINR"
VERSION = 1
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<c8"), 3: np.dtype("<c16")}
_CODE_OF = {v.newbyteorder("="): k for k, v in DTYPE_CODES.items()}
HEADER_FIXED = 7


def _code_for(dtype: np.dtype) -> int:
    dt = np.dtype(dtype).newbyteorder("=")
    if dt not in _CODE_OF:
        raise FormatError(f"unsupported dtype {dtype} (container holds f32, f64, c64, c128)")
    return _CODE_OF[dt]


def encode_array(arr) -> bytes:
    arr = np.asarray(arr.data if isinstance(arr, Tensor) else arr)
    code = _code_for(arr.dtype)
    if arr.ndim > 255:
        raise FormatError(f"rank {arr.ndim} exceeds 255")
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=DTYPE_CODES[code]).tobytes()


def decode_array(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(buf) < HEADER_FIXED:
        raise FormatError(f"{source}: truncated header at byte offset {len(buf)} (need {HEADER_FIXED})")
    if buf[:4] != MAGIC:
        raise FormatError(f"{source}: bad magic {buf[:4]!r} at byte offset 0")
    version, code, rank = struct.unpack_from("<BBB", buf, 4)
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version} at byte offset 4")
    if code not in DTYPE_CODES:
        raise FormatError(f"{source}: unknown dtype code {code} at byte offset 5")
    end = HEADER_FIXED + 8 * rank
    if len(buf) < end:
        raise FormatError(f"{source}: truncated extents at byte offset {len(buf)} (need {end})")
    shape = struct.unpack_from(f"<{rank}Q", buf, HEADER_FIXED)
    dtype = DTYPE_CODES[code]
    nbytes = int(np.prod(shape, dtype=np.uint64)) * dtype.itemsize
    if len(buf) != end + nbytes:
        what = "truncated" if len(buf) < end + nbytes else "trailing bytes in"
        raise FormatError(f"{source}: {what} data at byte offset {len(buf)} (expected {end + nbytes} bytes total)")
    out = np.frombuffer(buf, dtype=dtype, count=nbytes // dtype.itemsize, offset=end).reshape(shape)
    return out.astype(dtype.newbyteorder("="), copy=True)


def save_array(path, arr) -> None:
    """Write one array; the file is replaced atomically."""
    path = Path(path)
    data = encode_array(arr)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def load_array(path, expect_dtype=None) -> np.ndarray:
    path = Path(path)
    arr = decode_array(path.read_bytes(), str(path))
    if expect_dtype is not None and arr.dtype != np.dtype(expect_dtype):
        raise FormatError(f"{path}: dtype {arr.dtype} at byte offset 5, expected {np.dtype(expect_dtype)}")
    return arr


def write_sidecar(path, meta: dict) -> None:
    lines = []
    for k, v in meta.items():
        if "=" in str(k) or "\n" in str(k) or "\n" in str(v):
            raise FormatError(f"sidecar key/value not representable: {k!r}")
        lines.append(f"{k}={v}\n")
    Path(path).write_text("".join(lines))


def read_sidecar(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k] = v
    return out


def to_graymap(image) -> np.ndarray:
    """Magnitude of a 2D slice scaled to 0..255 (per-image normalization), rows = y."""
    mag = np.abs(np.asarray(image, dtype=np.complex128 if np.iscomplexobj(image) else np.float64))
    if mag.ndim != 2:
        raise FormatError(f"graymap export needs a 2D slice, got shape {mag.shape}")
    peak = mag.max() if mag.size else 0.0
    scaled = mag / peak if peak > 0 else np.zeros_like(mag)
    return np.round(np.clip(scaled, 0, 1) * 255).astype(np.uint8).T


def save_graymap(path, image) -> None:
    """Binary PGM (P5); the input is indexed ``[x, y]``."""
    pix = to_graymap(image)
    h, w = pix.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pix.tobytes())


def load_graymap(path) -> np.ndarray:
    """Read a P5 file written by :func:`save_graymap`; returns ``[rows, cols]`` uint8."""
    buf = Path(path).read_bytes()
    parts = buf.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary graymap at byte offset 0")
    w, h = map(int, parts[1].split())
    pix = np.frombuffer(parts[3], dtype=np.uint8)
    if pix.size != w * h:
        raise FormatError(f"{path}: truncated pixel data at byte offset {len(buf)}")
    return pix.reshape(h, w).copy()
