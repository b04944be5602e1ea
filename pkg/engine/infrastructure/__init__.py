"""Infrastructure components for the engine"""

from .tensor_io import (
    FORMAT_VERSION,
    MAGIC,
    decode_tensors,
    encode_tensors,
    read_tensors,
    write_tensors,
)

__all__ = [
    'FORMAT_VERSION',
    'MAGIC',
    'decode_tensors',
    'encode_tensors',
    'read_tensors',
    'write_tensors',
]
