#src/array_model.py
"""
Subarray/bank storage, pseudo-read, sectioned dispatch and kernel placement.

Each subarray has `sections` kernel sections of `rows_per_section` rows and a
dedicated unsectioned activation region of `activation_rows` rows. Kernels of
one channel group share a row index across sections: channel c sits in
section c % n, so one pseudo-read of an activation serves n channels.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from models.models import GeometryConfig
from src.bitcore import BitWord
from src.costmodel import CostLedger, CostMode, EventKind
from src.custom_exception import ConfigurationError, InvalidInputError, SimulationError
from src.logger import get_logger

logger = get_logger(__name__)

ArrayGeometry = GeometryConfig


@dataclass(frozen=True)
class RowAddress:
    subarray: int
    section: Optional[int]  # None: activation region
    row: int

    @classmethod
    def activation(cls, subarray: int, row: int) -> "RowAddress":
        return cls(subarray, None, row)


@dataclass
class LineState:
    activation: BitWord
    subarray: int
    valid: bool = True

    def consume(self) -> BitWord:
        if not self.valid:
            raise SimulationError("bitline state already consumed or precharged; pseudo-read again")
        self.valid = False
        return self.activation


class SectionedBank:
    def __init__(self, geometry: GeometryConfig, ledger: Optional[CostLedger] = None, layer_tag: str = "-"):
        self.geometry = geometry
        self.ledger = ledger
        self.layer_tag = layer_tag
        self.rows: Dict[RowAddress, BitWord] = {}
        self._lines: Dict[int, LineState] = {}

    @property
    def occupancy(self) -> Dict[RowAddress, bool]:
        return {address: True for address in self.rows}

    @property
    def cost_mode(self) -> CostMode:
        return CostMode.SECTIONED if self.geometry.sections > 1 else CostMode.UNSECTIONED

    def record(self, kind: EventKind, multiplicity: int = 1, mode: CostMode = CostMode.HOST):
        if self.ledger is not None:
            self.ledger.record(kind, self.layer_tag, multiplicity, mode)

    def check_address(self, address: RowAddress):
        g = self.geometry
        if not 0 <= address.subarray < g.subarrays_per_bank:
            raise InvalidInputError(f"subarray {address.subarray} out of range 0..{g.subarrays_per_bank - 1}")
        if address.section is None:
            limit = g.activation_rows
        else:
            if not 0 <= address.section < g.sections:
                raise InvalidInputError(f"section {address.section} out of range 0..{g.sections - 1}")
            limit = g.rows_per_section
        if not 0 <= address.row < limit:
            raise InvalidInputError(f"row {address.row} out of range 0..{limit - 1} at {address}")

    def store(self, address: RowAddress, word: BitWord):
        self.check_address(address)
        if word.width != self.geometry.columns:
            raise InvalidInputError(f"{word.width}-bit word written to a {self.geometry.columns}-column row")
        self.rows[address] = word

    def fetch(self, address: RowAddress) -> BitWord:
        self.check_address(address)
        word = self.rows.get(address)
        if word is None:
            raise InvalidInputError(f"row {address} has not been written")
        return word


def write_row(bank: SectionedBank, address: RowAddress, word: BitWord) -> SectionedBank:
    bank.store(address, word)
    bank.record(EventKind.SRAM_WRITE)
    return bank


def read_row(bank: SectionedBank, address: RowAddress) -> BitWord:
    """Conventional read through the sense amplifiers."""
    word = bank.fetch(address)
    bank.record(EventKind.SRAM_READ, mode=CostMode.BASELINE)
    return word


def pseudo_read(bank: SectionedBank, activation_address: RowAddress) -> LineState:
    """
    Precharge the subarray's bitlines and latch the activation row onto them.
    Sense amplifiers stay off; any earlier line state of the subarray is lost.
    """
    word = bank.fetch(activation_address)
    previous = bank._lines.get(activation_address.subarray)
    if previous is not None:
        previous.valid = False
    line = LineState(word, activation_address.subarray)
    bank._lines[activation_address.subarray] = line
    bank.record(EventKind.PSEUDO_READ_BATCH, mode=bank.cost_mode)
    return line


def sectioned_convolve(bank: SectionedBank, line: LineState, kernel_rows: Sequence[RowAddress],
                       engine, active_halves: int = 2) -> List[int]:
    """
    Convolve one latched activation against one kernel row per section.

    The sections are decoupled after the pseudo-read and convert concurrently;
    results come back in the order of `kernel_rows`.
    """
    if not getattr(engine, "supports_sections", False):
        raise ConfigurationError(f"engine {getattr(engine, 'name', engine)!r} cannot run a sectioned dispatch")
    if not kernel_rows:
        raise InvalidInputError("sectioned_convolve needs at least one kernel row")
    sections = [address.section for address in kernel_rows]
    if None in sections or len(set(sections)) != len(sections):
        raise InvalidInputError(f"kernel rows must sit in distinct sections, got {sections}")
    for address in kernel_rows:
        if address.subarray != line.subarray:
            raise InvalidInputError(f"kernel {address} is not in the pseudo-read subarray {line.subarray}")
    kernels = [bank.fetch(address) for address in kernel_rows]
    activation = line.consume()
    results = [engine.convolve_section(address.section, activation, kernel, active_halves)
               for address, kernel in zip(kernel_rows, kernels)]
    bank.record(EventKind.ADC_CONVERSION, len(results), bank.cost_mode)
    return results


def dual_row_convolve(bank: SectionedBank, activation_address: RowAddress, kernel_address: RowAddress,
                      engine) -> int:
    """Enable both rows' read wordlines together and popcount the sensed XNOR."""
    if not getattr(engine, "supports_dual_read", False):
        raise ConfigurationError(f"engine {getattr(engine, 'name', engine)!r} has no dual-wordline read")
    if activation_address.subarray != kernel_address.subarray:
        raise InvalidInputError("dual-wordline read needs both rows in one subarray")
    result = engine.convolve64(bank.fetch(activation_address), bank.fetch(kernel_address))
    bank.record(EventKind.DUAL_READ, mode=CostMode.PROPOSAL_B)
    bank.record(EventKind.ADDER, mode=CostMode.PROPOSAL_B)
    return result


def large_kernel_popcount(partials: Sequence[int], columns: int = 64) -> int:
    """popcount of a split kernel is the sum of the row popcounts."""
    total = 0
    for p in partials:
        if not 0 <= p <= columns:
            raise InvalidInputError(f"partial popcount {p} outside [0, {columns}]")
        total += p
    return total


def threshold_activation(total_popcount: int, kernel_size: int, threshold: Optional[int] = None) -> int:
    """
    1 if the popcount exceeds the threshold (default: half the kernel size).
    A popcount of exactly half maps to 0.
    """
    if not 0 <= total_popcount <= kernel_size:
        raise InvalidInputError(f"popcount {total_popcount} outside [0, {kernel_size}]")
    if threshold is None:
        return 1 if 2 * total_popcount > kernel_size else 0
    return 1 if total_popcount > threshold else 0


@dataclass(frozen=True)
class KernelSlot:
    """One row index in one subarray holding tile `tile` of every channel in `channels`."""
    group: int
    tile: int
    subarray: int
    row: int
    channels: tuple

    def address(self, section: int) -> RowAddress:
        return RowAddress(self.subarray, section, self.row)

    def activation_address(self, geometry: GeometryConfig) -> RowAddress:
        return RowAddress.activation(self.subarray, self.tile % geometry.activation_rows)


@dataclass
class KernelPass:
    slots: List[KernelSlot] = field(default_factory=list)

    def activation_writes(self, geometry: GeometryConfig) -> List[bool]:
        """For each slot, whether its activation tile must be (re)written first."""
        held = {}
        needs = []
        for slot in self.slots:
            address = slot.activation_address(geometry)
            needs.append(held.get(address) != slot.tile)
            held[address] = slot.tile
        return needs

    @property
    def kernel_rows(self) -> int:
        return sum(len(slot.channels) for slot in self.slots)


def plan_kernel_passes(geometry: GeometryConfig, out_channels: int, tiles: int) -> List[KernelPass]:
    """
    Place `out_channels` kernels of `tiles` rows each.

    Channels are grouped by `sections` (round-robin across sections), slots
    are ordered tile-major and filled sequentially row by row, subarray by
    subarray. Work that exceeds the bank runs in further passes.
    """
    if out_channels < 1 or tiles < 1:
        raise InvalidInputError(f"need at least one channel and tile, got {out_channels}, {tiles}")
    n = geometry.sections
    groups = -(-out_channels // n)
    capacity = geometry.subarrays_per_bank * geometry.rows_per_section
    passes = [KernelPass()]
    for t in range(tiles):
        for g in range(groups):
            if len(passes[-1].slots) == capacity:
                passes.append(KernelPass())
            j = len(passes[-1].slots)
            channels = tuple(range(g * n, min((g + 1) * n, out_channels)))
            passes[-1].slots.append(KernelSlot(g, t, j // geometry.rows_per_section,
                                               j % geometry.rows_per_section, channels))
    logger.debug("placed %d channels x %d tiles in %d pass(es), %d groups of %d",
                 out_channels, tiles, len(passes), groups, n)
    return passes
