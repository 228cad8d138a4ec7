#src/costmodel.py
"""
Event-based energy/latency accounting.

Every in-array or host action is recorded as a CostEvent (kind, layer,
multiplicity, mode). Energies are in pJ, latencies in ns. Execution is
modeled as sequential except inside a Proposal-A pseudo-read batch, whose
section conversions run concurrently and are covered by the batch latency.
"""
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from models.models import CostConstants, GeometryConfig
from src.custom_exception import InvalidInputError

ROW_BITS = 64


class EventKind(str, Enum):
    PSEUDO_READ_BATCH = "pseudo_read_batch"
    ADC_CONVERSION = "adc_conversion"
    DUAL_READ = "dual_read"
    ADDER = "adder"
    SRAM_READ = "sram_read"
    SRAM_WRITE = "sram_write"
    HOST_INSTR = "host_instr"
    DRAM_ACCESS = "dram_access"


class CostMode(str, Enum):
    SECTIONED = "sectioned"
    UNSECTIONED = "unsectioned"
    PROPOSAL_B = "proposal_b"
    BASELINE = "baseline"
    HOST = "host"


# composite engine operations accepted by op_energy / op_latency
PROPOSAL_A_OP = "proposal_a_op"
PROPOSAL_B_OP = "proposal_b_op"

DEFAULT_SECTIONS = GeometryConfig().sections
ARRAY_KINDS = (EventKind.PSEUDO_READ_BATCH, EventKind.ADC_CONVERSION, EventKind.DUAL_READ, EventKind.ADDER)


@dataclass(frozen=True)
class CostEvent:
    kind: EventKind
    layer_tag: str
    multiplicity: int = 1
    mode: CostMode = CostMode.HOST

    def __post_init__(self):
        if self.multiplicity < 1:
            raise InvalidInputError(f"event multiplicity must be >= 1, got {self.multiplicity}")


def _kind(kind):
    if isinstance(kind, EventKind) or kind in (PROPOSAL_A_OP, PROPOSAL_B_OP):
        return kind
    try:
        return EventKind(kind)
    except ValueError:
        raise InvalidInputError(f"unknown cost kind {kind!r}")


def _array_a_energy(mode, c: CostConstants) -> float:
    if mode == CostMode.SECTIONED:
        return c.a_energy_sectioned_pj
    if mode == CostMode.UNSECTIONED:
        return c.a_energy_unsectioned_pj
    raise InvalidInputError(f"Proposal-A conversions need a sectioned/unsectioned mode, got {mode}")


def op_energy(kind, mode, constants: CostConstants) -> float:
    """
    Energy in pJ of one operation of `kind`.

    Args:
        kind: an EventKind (or its value) or a composite PROPOSAL_A_OP / PROPOSAL_B_OP
        mode: CostMode; selects the sectioned/unsectioned Proposal-A constant
        constants: CostConstants

    Returns:
        float: energy in pJ
    """
    kind, c = _kind(kind), constants
    if kind in (PROPOSAL_A_OP, EventKind.ADC_CONVERSION):
        return _array_a_energy(CostMode(mode), c)
    if kind == EventKind.PSEUDO_READ_BATCH:
        return 0.0
    if kind == EventKind.DUAL_READ:
        return ROW_BITS * c.b_xnor_energy_fj_per_bit / 1000.0
    if kind == EventKind.ADDER:
        # mW x ns = pJ
        return c.b_adder_power_mw * c.b_adder_latency_ns
    if kind == PROPOSAL_B_OP:
        return op_energy(EventKind.DUAL_READ, mode, c) + op_energy(EventKind.ADDER, mode, c)
    if kind == EventKind.SRAM_READ:
        return c.baseline_read_energy_pj
    if kind == EventKind.SRAM_WRITE:
        return c.sram_write_energy_pj
    if kind == EventKind.HOST_INSTR:
        return c.host_instr_energy_pj
    if kind == EventKind.DRAM_ACCESS:
        return c.dram_access_energy_pj
    raise InvalidInputError(f"no energy defined for {kind!r} in mode {mode!r}")


def op_latency(kind, mode, batch_size: int, constants: CostConstants, sections: int = DEFAULT_SECTIONS) -> float:
    """
    Latency in ns of `batch_size` operations of `kind`.

    In a sectioned array up to `sections` Proposal-A operations convert
    concurrently, so a batch takes ceil(batch_size / sections) operation
    latencies.
    """
    if batch_size < 1:
        raise InvalidInputError(f"batch_size must be >= 1, got {batch_size}")
    if sections < 1:
        raise InvalidInputError(f"sections must be >= 1, got {sections}")
    kind, c = _kind(kind), constants
    if kind == EventKind.PSEUDO_READ_BATCH:
        return c.a_latency_ns * batch_size
    if kind == EventKind.ADC_CONVERSION:
        _array_a_energy(CostMode(mode), c)
        return 0.0
    if kind == PROPOSAL_A_OP:
        if CostMode(mode) == CostMode.SECTIONED:
            return c.a_latency_ns * -(-batch_size // sections)
        _array_a_energy(CostMode(mode), c)
        return c.a_latency_ns * batch_size
    per_op = {
        EventKind.DUAL_READ: c.b_xnor_latency_ns,
        EventKind.ADDER: c.b_adder_latency_ns,
        PROPOSAL_B_OP: c.b_xnor_latency_ns + c.b_adder_latency_ns,
        EventKind.SRAM_READ: c.baseline_read_latency_ns,
        EventKind.SRAM_WRITE: c.sram_write_latency_ns,
        EventKind.HOST_INSTR: c.host_instr_latency_ns,
        EventKind.DRAM_ACCESS: c.dram_access_latency_ns,
    }
    if kind not in per_op:
        raise InvalidInputError(f"no latency defined for {kind!r} in mode {mode!r}")
    return per_op[kind] * batch_size


@dataclass(frozen=True)
class LayerInfo:
    index: int
    kind: str
    binarized: bool


@dataclass
class LayerAggregate:
    energy_pj: float = 0.0
    latency_ns: float = 0.0
    array_energy_pj: float = 0.0
    event_counts: Dict[str, int] = field(default_factory=dict)
    energy_by_kind: Dict[str, float] = field(default_factory=dict)
    latency_by_kind: Dict[str, float] = field(default_factory=dict)
    macs: int = 0


class CostLedger:
    """
    Append-only record of cost events with running per-layer tallies.

    `keep_events=False` keeps only the tallies (aggregates are identical).
    """

    def __init__(self, constants: Optional[CostConstants] = None, keep_events: bool = True):
        self.constants = constants or CostConstants()
        self.keep_events = keep_events
        self.events: List[CostEvent] = []
        self.layers: Dict[str, LayerInfo] = {}
        self.macs: Counter = Counter()
        self._tally: Counter = Counter()

    def open_layer(self, tag: str, index: int, kind: str, binarized: bool):
        info = LayerInfo(index, kind, binarized)
        known = self.layers.get(tag)
        if known is not None and known != info:
            raise InvalidInputError(f"layer {tag!r} re-registered with different metadata")
        self.layers[tag] = info

    def record(self, kind: EventKind, layer_tag: str, multiplicity: int = 1, mode: CostMode = CostMode.HOST):
        event = CostEvent(EventKind(kind), layer_tag, multiplicity, CostMode(mode))
        if self.keep_events:
            self.events.append(event)
        self._tally[(event.layer_tag, event.kind, event.mode)] += event.multiplicity

    def count_macs(self, layer_tag: str, macs: int):
        self.macs[layer_tag] += macs

    def tally(self) -> Dict[Tuple[str, EventKind, CostMode], int]:
        return dict(self._tally)

    def layer_tags(self) -> List[str]:
        tags = set(self.layers) | {key[0] for key in self._tally}
        return sorted(tags, key=lambda t: (self.layers[t].index if t in self.layers else 1 << 30, t))

    def aggregate(self, layer_tag: Optional[str] = None) -> LayerAggregate:
        return aggregate(self, layer_tag)

    def merge(self, other: "CostLedger") -> "CostLedger":
        """Combine two ledgers (e.g. from parallel workers) into a new one."""
        if self.constants != other.constants:
            raise InvalidInputError("cannot merge ledgers built with different cost constants")
        merged = CostLedger(self.constants, self.keep_events and other.keep_events)
        for ledger in (self, other):
            for tag, info in ledger.layers.items():
                merged.open_layer(tag, info.index, info.kind, info.binarized)
            if merged.keep_events:
                merged.events.extend(ledger.events)
            merged._tally.update(ledger._tally)
            merged.macs.update(ledger.macs)
        return merged


def aggregate(ledger: CostLedger, layer_tag: Optional[str] = None) -> LayerAggregate:
    """
    Sum energy/latency of the events tagged `layer_tag` (all layers if None).

    Returns:
        LayerAggregate with totals, per-kind breakdown and event counts
    """
    c = ledger.constants
    result = LayerAggregate()
    keys = sorted(ledger._tally, key=lambda k: (k[0], k[1].value, k[2].value))
    for key in keys:
        tag, kind, mode = key
        if layer_tag is not None and tag != layer_tag:
            continue
        n = ledger._tally[key]
        energy = op_energy(kind, mode, c) * n
        latency = op_latency(kind, mode, 1, c) * n
        result.energy_pj += energy
        result.latency_ns += latency
        if kind in ARRAY_KINDS:
            result.array_energy_pj += energy
        result.event_counts[kind.value] = result.event_counts.get(kind.value, 0) + n
        result.energy_by_kind[kind.value] = result.energy_by_kind.get(kind.value, 0.0) + energy
        result.latency_by_kind[kind.value] = result.latency_by_kind.get(kind.value, 0.0) + latency
    result.macs = sum(v for t, v in ledger.macs.items() if layer_tag is None or t == layer_tag)
    return result


def layer_report(ledger: CostLedger) -> Dict[str, LayerAggregate]:
    return {tag: aggregate(ledger, tag) for tag in ledger.layer_tags()}


@dataclass
class Speedup:
    energy_ratio: Optional[float]
    latency_ratio: Optional[float]


def _ratio(base: float, accel: float) -> Optional[float]:
    if accel == 0:
        return 1.0 if base == 0 else None
    return base / accel


def speedup(report_accel: Mapping[str, LayerAggregate],
            report_baseline: Mapping[str, LayerAggregate]) -> Dict[str, Speedup]:
    """
    Baseline/accelerated energy and latency ratios per layer, plus "total".

    Raises:
        InvalidInputError: when the two reports cover different layers
    """
    if list(report_accel) != list(report_baseline):
        raise InvalidInputError(
            f"reports cover different layers: {list(report_accel)} vs {list(report_baseline)}")
    out = {}
    for tag in report_accel:
        a, b = report_accel[tag], report_baseline[tag]
        out[tag] = Speedup(_ratio(b.energy_pj, a.energy_pj), _ratio(b.latency_ns, a.latency_ns))
    total_a = _sum_aggregates(report_accel.values())
    total_b = _sum_aggregates(report_baseline.values())
    out["total"] = Speedup(_ratio(total_b[0], total_a[0]), _ratio(total_b[1], total_a[1]))
    return out


def _sum_aggregates(items: Iterable[LayerAggregate]) -> Tuple[float, float]:
    energy = latency = 0.0
    for item in items:
        energy += item.energy_pj
        latency += item.latency_ns
    return energy, latency
