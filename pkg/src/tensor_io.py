#src/tensor_io.py
"""
XRT1 tensor container.

    magic  b"XRT1"
    rank   u32 LE
    dims   rank x u32 LE
    dtype  u8   (0 = bits, 1 = int32)
    data   dtype 0: dims[0] rows of prod(dims[1:]) bits, each row padded to a
                    multiple of 64 bits, little-endian u64 words
           dtype 1: prod(dims) little-endian int32 values, C order

A rank-1 bit tensor is stored as a single row.
"""
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from src.custom_exception import InvalidInputError, SimulationError

MAGIC = b"XRT1"
DTYPE_BITS = 0
DTYPE_INT32 = 1

PathLike = Union[str, Path]


def _row_layout(shape: Tuple[int, ...]) -> Tuple[int, int]:
    if len(shape) == 1:
        return 1, shape[0]
    return shape[0], int(np.prod(shape[1:]))


def encode_tensor(array: np.ndarray, dtype: int) -> bytes:
    array = np.asarray(array)
    if array.ndim == 0:
        raise InvalidInputError("XRT1 tensors need rank >= 1")
    header = MAGIC + struct.pack("<I", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    if dtype == DTYPE_INT32:
        if array.size and (array.min() < np.iinfo(np.int32).min or array.max() > np.iinfo(np.int32).max):
            raise InvalidInputError("values do not fit in int32")
        return header + bytes([DTYPE_INT32]) + array.astype("<i4").tobytes(order="C")
    if dtype != DTYPE_BITS:
        raise InvalidInputError(f"unknown XRT1 dtype {dtype}")
    if array.size and (array.min() < 0 or array.max() > 1):
        raise InvalidInputError("bit tensors may only hold 0/1")
    rows, bits = _row_layout(array.shape)
    words = -(-bits // 64)
    padded = np.zeros((rows, words * 64), dtype=np.uint8)
    padded[:, :bits] = array.reshape(rows, bits)
    payload = np.packbits(padded, axis=1, bitorder="little").tobytes()
    return header + bytes([DTYPE_BITS]) + payload


def decode_tensor(blob: bytes, source: str = "<bytes>") -> Tuple[np.ndarray, int]:
    """
    Returns:
        (array, dtype): 0/1 uint8 array for bit tensors, int32 array otherwise
    """
    if blob[:4] != MAGIC:
        raise InvalidInputError(f"{source}: not an XRT1 file")
    try:
        (rank,) = struct.unpack_from("<I", blob, 4)
        if rank < 1:
            raise InvalidInputError(f"{source}: rank must be >= 1")
        dims = struct.unpack_from(f"<{rank}I", blob, 8)
        dtype = blob[8 + 4 * rank]
    except (struct.error, IndexError) as e:
        raise InvalidInputError(f"{source}: truncated header", e)
    offset = 9 + 4 * rank
    payload = blob[offset:]

    if dtype == DTYPE_INT32:
        expected = 4 * int(np.prod(dims))
        if len(payload) != expected:
            raise InvalidInputError(f"{source}: {len(payload)} payload bytes, expected {expected}")
        return np.frombuffer(payload, dtype="<i4").astype(np.int32).reshape(dims), dtype
    if dtype != DTYPE_BITS:
        raise InvalidInputError(f"{source}: unknown dtype {dtype}")
    rows, bits = _row_layout(dims)
    words = -(-bits // 64)
    expected = rows * words * 8
    if len(payload) != expected:
        raise InvalidInputError(f"{source}: {len(payload)} payload bytes, expected {expected}")
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(rows, words * 8)
    unpacked = np.unpackbits(raw, axis=1, bitorder="little")[:, :bits]
    return unpacked.reshape(dims).astype(np.uint8), dtype


def write_tensor(path: PathLike, array: np.ndarray, dtype: int):
    blob = encode_tensor(array, dtype)
    try:
        Path(path).write_bytes(blob)
    except OSError as e:
        raise SimulationError(f"cannot write {path}", e)


def read_tensor(path: PathLike) -> Tuple[np.ndarray, int]:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise InvalidInputError(f"cannot read {path}", e)
    return decode_tensor(blob, str(path))
