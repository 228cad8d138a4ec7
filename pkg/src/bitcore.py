#src/bitcore.py
"""
Packed bipolar binary vectors and the exact XNOR+popcount reference.

Encoding: +1 is stored as bit 1, -1 as bit 0. Within a word, index 0 is the
lowest-order bit and maps to the leftmost array column (column 0). The same
order is used by the XRT1 tensor files.
"""
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from src.custom_exception import InvalidInputError

WORD_BITS = 64


def _mask(width: int) -> int:
    return (1 << width) - 1


@dataclass(frozen=True)
class BitWord:
    bits: int
    width: int = WORD_BITS

    def __post_init__(self):
        if not 1 <= self.width <= WORD_BITS:
            raise InvalidInputError(f"BitWord width must be in 1..{WORD_BITS}, got {self.width}")
        if self.bits < 0 or self.bits >> self.width:
            raise InvalidInputError(f"BitWord has bits set beyond width {self.width}")

    @classmethod
    def ones(cls, width: int = WORD_BITS) -> "BitWord":
        return cls(_mask(width), width)

    @classmethod
    def zeros(cls, width: int = WORD_BITS) -> "BitWord":
        return cls(0, width)

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "BitWord":
        """Build from a 0/1 sequence, element i becoming bit i."""
        value = 0
        for i, b in enumerate(bits):
            if b not in (0, 1):
                raise InvalidInputError(f"bit {i} is {b}, expected 0 or 1")
            value |= int(b) << i
        return cls(value, len(bits))

    def to_bits(self) -> list:
        return [(self.bits >> i) & 1 for i in range(self.width)]

    def split(self, at: int) -> Tuple["BitWord", "BitWord"]:
        """Split into columns [0, at) and [at, width)."""
        if not 0 < at < self.width:
            raise InvalidInputError(f"cannot split a {self.width}-bit word at {at}")
        low = BitWord(self.bits & _mask(at), at)
        high = BitWord(self.bits >> at, self.width - at)
        return low, high


@dataclass(frozen=True)
class BinaryVector:
    words: Tuple[BitWord, ...]

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        if not self.words:
            raise InvalidInputError("BinaryVector needs at least one word")

    @property
    def length(self) -> int:
        return sum(w.width for w in self.words)

    def __len__(self) -> int:
        return self.length

    @classmethod
    def from_bits(cls, bits) -> "BinaryVector":
        """Pack a 0/1 array into 64-bit words; the trailing word keeps its own width."""
        arr = np.asarray(bits, dtype=np.uint8).ravel()
        if arr.size == 0:
            raise InvalidInputError("cannot pack an empty bit sequence")
        if arr.max() > 1:
            raise InvalidInputError("bit arrays may only contain 0 and 1")
        words = []
        for start in range(0, arr.size, WORD_BITS):
            chunk = arr[start:start + WORD_BITS]
            packed = np.packbits(chunk, bitorder="little").tobytes()
            words.append(BitWord(int.from_bytes(packed, "little"), int(chunk.size)))
        return cls(tuple(words))

    def to_bits(self) -> np.ndarray:
        out = np.empty(self.length, dtype=np.uint8)
        pos = 0
        for w in self.words:
            raw = np.frombuffer(w.bits.to_bytes(8, "little"), dtype=np.uint8)
            out[pos:pos + w.width] = np.unpackbits(raw, bitorder="little")[:w.width]
            pos += w.width
        return out


def pack_bipolar(values: Iterable[int]) -> BinaryVector:
    """
    Pack a ±1 sequence: bit i is 1 iff values[i] == +1.

    Args:
        values: non-empty sequence of +1/-1 integers

    Returns:
        BinaryVector of the same length
    """
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values).ravel()
    if arr.size == 0:
        raise InvalidInputError("pack_bipolar needs a non-empty sequence")
    bad = ~np.isin(arr, (1, -1))
    if bad.any():
        idx = int(np.argmax(bad))
        raise InvalidInputError(f"element {idx} is {arr[idx]}, expected +1 or -1")
    return BinaryVector.from_bits((arr == 1).astype(np.uint8))


def unpack_bipolar(vector: BinaryVector) -> np.ndarray:
    return vector.to_bits().astype(np.int32) * 2 - 1


def _check_widths(a: BitWord, b: BitWord):
    if a.width != b.width:
        raise InvalidInputError(f"width mismatch: {a.width} vs {b.width}")


def xnor(a: BitWord, b: BitWord) -> BitWord:
    _check_widths(a, b)
    return BitWord(~(a.bits ^ b.bits) & _mask(a.width), a.width)


def xor(a: BitWord, b: BitWord) -> BitWord:
    _check_widths(a, b)
    return BitWord(a.bits ^ b.bits, a.width)


def complement(a: BitWord) -> BitWord:
    return BitWord(~a.bits & _mask(a.width), a.width)


def complement_vector(v: BinaryVector) -> BinaryVector:
    return BinaryVector(tuple(complement(w) for w in v.words))


def popcount(w: BitWord) -> int:
    return w.bits.bit_count()


def _check_lengths(a: BinaryVector, b: BinaryVector):
    if a.length != b.length:
        raise InvalidInputError(f"length mismatch: {a.length} vs {b.length}")


def _aligned_words(a: BinaryVector, b: BinaryVector):
    if [w.width for w in a.words] == [w.width for w in b.words]:
        return zip(a.words, b.words)
    # different word splits of the same length: repack both on 64-bit boundaries
    ra = BinaryVector.from_bits(a.to_bits())
    rb = BinaryVector.from_bits(b.to_bits())
    return zip(ra.words, rb.words)


def xnor_popcount_oracle(a: BinaryVector, b: BinaryVector) -> int:
    """popcount(a XNOR b) summed word by word. Reference result for every engine."""
    _check_lengths(a, b)
    return sum(popcount(xnor(wa, wb)) for wa, wb in _aligned_words(a, b))


def bipolar_dot(a: BinaryVector, b: BinaryVector) -> int:
    """±1 dot product of the unpacked vectors, via dot = 2*popcount - length."""
    return 2 * xnor_popcount_oracle(a, b) - a.length
