"""
CAPT tensor container

Layout (all integers little-endian):

    magic "CAPT" | version u16 | tensor count u32
    per tensor: name length u16 | UTF-8 name | rank u8 | dims u32 * rank | float32 payload

Tensors are written in mapping order; the byte stream is a pure function of the input.
"""

import hashlib
import struct
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from ..errors import FormatError

MAGIC = b"CAPT"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHI")
_NAME_LEN = struct.Struct("<H")
_RANK = struct.Struct("<B")
_PAYLOAD_DTYPE = np.dtype("<f4")


def encode_tensors(tensors: Mapping[str, np.ndarray]) -> bytes:
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(tensors))]
    for name, tensor in tensors.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise FormatError(f"tensor name too long: {name[:32]}...")
        array = np.asarray(tensor)
        if array.ndim > 0xFF:
            raise FormatError(f"{name}: rank {array.ndim} exceeds container limit")
        chunks.append(_NAME_LEN.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_RANK.pack(array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=_PAYLOAD_DTYPE).tobytes(order="C"))
    return b"".join(chunks)


def decode_tensors(data: bytes) -> Dict[str, np.ndarray]:
    """Parse a CAPT byte string into float32 arrays (native byte order)"""
    view = memoryview(data)
    if len(view) < _HEADER.size:
        raise FormatError("truncated container header")
    magic, version, count = _HEADER.unpack_from(view, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported container version {version}")
    offset = _HEADER.size
    tensors: Dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = _NAME_LEN.unpack_from(view, offset)
            offset += _NAME_LEN.size
            name = bytes(view[offset:offset + name_len]).decode("utf-8")
            offset += name_len
            (rank,) = _RANK.unpack_from(view, offset)
            offset += _RANK.size
            dims = struct.unpack_from(f"<{rank}I", view, offset)
            offset += 4 * rank
            n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
            n_bytes = n_values * _PAYLOAD_DTYPE.itemsize
            if offset + n_bytes > len(view):
                raise FormatError(f"{name}: truncated payload")
            payload = np.frombuffer(view[offset:offset + n_bytes], dtype=_PAYLOAD_DTYPE)
            offset += n_bytes
            tensors[name] = payload.astype(np.float32).reshape(dims)
    except struct.error as exc:
        raise FormatError(f"truncated container: {exc}") from None
    if offset != len(view):
        raise FormatError(f"{len(view) - offset} trailing bytes after {count} tensors")
    return tensors


def write_tensors(path: Union[str, Path], tensors: Mapping[str, np.ndarray]) -> str:
    """Write the container and return the SHA-256 of the written bytes"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_tensors(tensors)
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_tensors(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Tensor file not found: {path}")
    return decode_tensors(path.read_bytes())
