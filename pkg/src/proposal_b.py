#src/proposal_b.py
"""
Exact in-array convolution: two read wordlines enabled together, asymmetric
sense amplifiers resolving AND and NOR, their OR giving XNOR, and a bit-tree
adder producing the popcount.
"""
from dataclasses import dataclass
from typing import Tuple

from src.bitcore import BitWord
from src.custom_exception import InvalidInputError


@dataclass(frozen=True)
class SaOutputs:
    and_bits: BitWord
    nor_bits: BitWord
    xnor_bits: BitWord


@dataclass(frozen=True)
class AdderLayer:
    operands_in: int
    operand_width: int
    adders: int


@dataclass(frozen=True)
class AdderTree:
    """
    Pairwise reduction of N single-bit inputs. Layer l (1-based) adds pairs of
    l-bit operands into (l+1)-bit sums, so there are log2(N) layers and an
    output of log2(N)+1 bits.

    A first layer of 3:2 full-adder compressors would change the layer count
    but not the sum; only the value and the layer ledger are modeled here.
    """
    input_width: int
    layers: Tuple[AdderLayer, ...]
    output_width: int

    @classmethod
    def build(cls, input_width: int = 64) -> "AdderTree":
        if input_width < 2 or input_width > 64 or input_width & (input_width - 1):
            raise InvalidInputError(f"adder tree input width must be a power of two in 2..64, got {input_width}")
        layers = []
        operands, width = input_width, 1
        while operands > 1:
            layers.append(AdderLayer(operands, width, operands // 2))
            operands //= 2
            width += 1
        tree = cls(input_width, tuple(layers), width)
        assert len(tree.layers) == input_width.bit_length() - 1
        assert tree.output_width == len(tree.layers) + 1
        return tree

    def reduce(self, x: BitWord) -> Tuple[int, Tuple[Tuple[int, ...], ...]]:
        """Sum the bits layer by layer; returns the total and every layer's outputs."""
        if x.width != self.input_width:
            raise InvalidInputError(f"{x.width}-bit word fed to a {self.input_width}-input adder tree")
        operands = x.to_bits()
        trace = []
        for layer in self.layers:
            limit = 1 << (layer.operand_width + 1)
            operands = [operands[2 * i] + operands[2 * i + 1] for i in range(layer.adders)]
            assert all(v < limit for v in operands)
            trace.append(tuple(operands))
        return operands[0], tuple(trace)


_TREES = {}


def adder_tree(input_width: int = 64) -> AdderTree:
    tree = _TREES.get(input_width)
    if tree is None:
        tree = _TREES[input_width] = AdderTree.build(input_width)
    return tree


def dual_rwl_sense(a: BitWord, k: BitWord) -> SaOutputs:
    """
    Both rows on the bitlines at once. 'AB' = 11 discharges RBL only, 00
    discharges RBLB only, 10/01 discharge both; SA_NAND reads AND from RBL and
    SA_NOR reads NOR from RBLB.
    """
    if a.width != k.width:
        raise InvalidInputError(f"width mismatch: {a.width} vs {k.width}")
    mask = (1 << a.width) - 1
    and_bits = a.bits & k.bits
    nor_bits = ~(a.bits | k.bits) & mask
    return SaOutputs(BitWord(and_bits, a.width), BitWord(nor_bits, a.width),
                     BitWord(and_bits | nor_bits, a.width))


def bit_tree_popcount(x: BitWord) -> int:
    total, _ = adder_tree(x.width).reduce(x)
    return total


def convolve64_exact(a: BitWord, k: BitWord) -> int:
    if a.width != 64 or k.width != 64:
        raise InvalidInputError(f"convolve64_exact needs 64-bit words, got {a.width} and {k.width}")
    return bit_tree_popcount(dual_rwl_sense(a, k).xnor_bits)
