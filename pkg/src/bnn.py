#src/bnn.py
"""
Binarized CNN inference lowered onto 64-bit XNOR+popcount tiles.

A binarized output element with fan-in N = k*k*I needs ceil(N/64) tiles. The
trailing tile is zero-padded on both operands, so every padding bit is a
matched XNOR=1 and the padding count is subtracted afterwards. Under
Proposal-A a tile is two 32-bit half conversions; a half holding only padding
is not converted, so an element costs M = ceil(N/32) noisy conversions.

Receptive fields and kernels are flattened channel-major: (I, ky, kx).
Binarized layers pad with -1 (bit 0); host layers zero-pad integers.
"""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from tqdm import tqdm

from models.models import AdcConfig, CostConstants, GeometryConfig
from src.array_model import (SectionedBank, dual_row_convolve, large_kernel_popcount, plan_kernel_passes,
                             pseudo_read, read_row, sectioned_convolve, threshold_activation, write_row)
from src.bitcore import BinaryVector, BitWord
from src.costmodel import CostLedger, CostMode, EventKind
from src.custom_exception import ConfigurationError, InvalidInputError, SimulationError
from src.engines import make_engine
from src.logger import get_logger

logger = get_logger(__name__)

LAYER_KINDS = ("conv", "fc", "pool", "host_conv", "host_fc")
BINARIZED_KINDS = ("conv", "fc")
TILE_BITS = 64
HALF_BITS = TILE_BITS // 2


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    k: int = 1
    in_channels: int = 1
    out_channels: int = 1
    stride: int = 1
    padding: int = 0
    thresholds: Optional[Tuple[int, ...]] = None
    binarize_output: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        if self.name == "total":
            raise ConfigurationError("'total' is reserved in reports and cannot name a layer")
        if min(self.k, self.in_channels, self.out_channels, self.stride) < 1 or self.padding < 0:
            raise ConfigurationError(f"layer {self.name!r}: k, channels and stride must be >= 1, padding >= 0")
        if self.thresholds is not None:
            object.__setattr__(self, "thresholds", tuple(int(t) for t in self.thresholds))
            if len(self.thresholds) != self.out_channels:
                raise ConfigurationError(
                    f"layer {self.name!r}: {len(self.thresholds)} thresholds for {self.out_channels} channels")

    @property
    def binarized(self) -> bool:
        return self.kind in BINARIZED_KINDS

    @property
    def fan_in(self) -> int:
        if self.kind in ("conv", "host_conv"):
            return self.k * self.k * self.in_channels
        if self.kind in ("fc", "host_fc"):
            return self.in_channels
        return 4

    def output_shape(self, in_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        if self.kind in ("conv", "host_conv"):
            if len(in_shape) != 3 or in_shape[0] != self.in_channels:
                raise ConfigurationError(f"layer {self.name!r}: expects ({self.in_channels}, H, W), got {in_shape}")
            h, w = (_conv_extent(d, self.k, self.stride, self.padding) for d in in_shape[1:])
            if h < 1 or w < 1:
                raise ConfigurationError(f"layer {self.name!r}: kernel {self.k} larger than padded input {in_shape}")
            return self.out_channels, h, w
        if self.kind in ("fc", "host_fc"):
            if int(np.prod(in_shape)) != self.in_channels:
                raise ConfigurationError(
                    f"layer {self.name!r}: {self.in_channels} inputs expected, got shape {in_shape}")
            return (self.out_channels,)
        if len(in_shape) != 3 or in_shape[1] % 2 or in_shape[2] % 2:
            raise ConfigurationError(f"layer {self.name!r}: 2x2 pooling needs even spatial dims, got {in_shape}")
        return in_shape[0], in_shape[1] // 2, in_shape[2] // 2


def _conv_extent(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: Tuple[LayerSpec, ...]
    input_shape: Tuple[int, int, int]
    classes: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        if not self.layers:
            raise ConfigurationError(f"network {self.name!r} has no layers")
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"network {self.name!r} has duplicate layer names")
        final = self.shapes()[-1][1]
        if int(np.prod(final)) != self.classes:
            raise ConfigurationError(f"network {self.name!r} ends with {final}, expected {self.classes} classes")

    def shapes(self) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
        shapes, shape = [], self.input_shape
        for layer in self.layers:
            out = layer.output_shape(shape)
            shapes.append((shape, out))
            shape = out
        return shapes


@dataclass
class FeatureMap:
    data: np.ndarray
    binary: bool

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.binary:
            if self.data.size and (self.data.min() < 0 or self.data.max() > 1):
                raise InvalidInputError("binary feature maps may only hold 0/1")
            self.data = self.data.astype(np.uint8)

    def as_bits(self) -> np.ndarray:
        if self.binary:
            return self.data
        if not np.isin(self.data, (-1, 1)).all():
            raise InvalidInputError("integer feature map fed to a binarized layer must hold only +1/-1")
        return (self.data == 1).astype(np.uint8)

    def as_bipolar(self) -> np.ndarray:
        if self.binary:
            return self.data.astype(np.int64) * 2 - 1
        return self.data.astype(np.int64)


@dataclass(frozen=True)
class TilePlan:
    activation_tiles: Tuple[BitWord, ...]
    kernel_tiles: Tuple[BitWord, ...]
    active_halves: Tuple[int, ...]
    correction: int
    kernel_size: int

    @property
    def tiles(self) -> int:
        return len(self.activation_tiles)

    @property
    def half_conversions(self) -> int:
        return sum(self.active_halves)


@dataclass
class ErrorStats:
    """Running popcount-error moments (engine result minus exact result)."""
    count: int = 0
    total: int = 0
    total_sq: int = 0

    def add(self, errors: np.ndarray):
        e = np.asarray(errors, dtype=np.int64).ravel()
        self.count += int(e.size)
        self.total += int(e.sum())
        self.total_sq += int((e * e).sum())

    def merge(self, other: "ErrorStats") -> "ErrorStats":
        return ErrorStats(self.count + other.count, self.total + other.total, self.total_sq + other.total_sq)

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0

    @property
    def std(self) -> float:
        if not self.count:
            return 0.0
        return math.sqrt(max(self.total_sq / self.count - self.mean ** 2, 0.0))


def tile_active_halves(n: int) -> Tuple[int, ...]:
    tiles = -(-n // TILE_BITS)
    last_bits = n - TILE_BITS * (tiles - 1)
    return (2,) * (tiles - 1) + ((1 if last_bits <= HALF_BITS else 2),)


def tile_words(bits: np.ndarray) -> np.ndarray:
    """(R, N) 0/1 array -> (R, ceil(N/64)) uint64 words, zero-padded."""
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    n = bits.shape[1]
    tiles = -(-n // TILE_BITS)
    padded = np.zeros((bits.shape[0], tiles * TILE_BITS), dtype=np.uint8)
    padded[:, :n] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").reshape(bits.shape[0], tiles)


def lower_output_element(layer: LayerSpec, receptive_field_bits: BinaryVector,
                         kernel_bits: BinaryVector) -> TilePlan:
    """
    Split one output element into 64-bit engine operations.

    Returns:
        TilePlan with ceil(N/64) activation/kernel tiles and the padding correction
    """
    n = receptive_field_bits.length
    if kernel_bits.length != n:
        raise InvalidInputError(f"receptive field has {n} bits, kernel {kernel_bits.length}")
    if layer.binarized and n != layer.fan_in:
        raise InvalidInputError(f"layer {layer.name!r} expects N = {layer.fan_in}, got {n}")
    act = tile_words(receptive_field_bits.to_bits())[0]
    ker = tile_words(kernel_bits.to_bits())[0]
    return TilePlan(tuple(BitWord(int(w)) for w in act), tuple(BitWord(int(w)) for w in ker),
                    tile_active_halves(n), act.size * TILE_BITS - n, n)


def im2col(x: np.ndarray, k: int, stride: int, padding: int, pad_value: int) -> Tuple[np.ndarray, int, int]:
    """(C, H, W) -> (P, C*k*k) receptive fields in (C, ky, kx) order, plus output H, W."""
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)), constant_values=pad_value)
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    _, ho, wo = win.shape[:3]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, -1)
    return np.ascontiguousarray(cols), ho, wo


def _record(ledger: Optional[CostLedger], kind: EventKind, tag: str, n: int, mode: CostMode = CostMode.HOST):
    if ledger is not None and n > 0:
        ledger.record(kind, tag, n, mode)


def _open_layer(ledger: Optional[CostLedger], layer: LayerSpec, index: Optional[int] = None):
    if ledger is not None and layer.name not in ledger.layers:
        ledger.open_layer(layer.name, len(ledger.layers) if index is None else index,
                          layer.kind, layer.binarized)


def _engine_geometry(engine, geometry: GeometryConfig) -> GeometryConfig:
    if engine.supports_sections:
        return geometry
    if engine.supports_dual_read:
        if geometry.sections > 1:
            raise ConfigurationError("sectioned dispatch requested with the proposal_b engine; use sections = 1")
        return geometry
    # the baseline uses the bank as plain storage
    return geometry.model_copy(update={"sections": 1})


def _dispatch(engine, bank: SectionedBank, slot, activation: BitWord, needs_write: bool, halves: int) -> List[int]:
    geometry = bank.geometry
    if engine.supports_sections:
        address = slot.activation_address(geometry)
        if needs_write:
            write_row(bank, address, activation)
        line = pseudo_read(bank, address)
        return sectioned_convolve(bank, line, [slot.address(i) for i in range(len(slot.channels))],
                                  engine, halves)
    if engine.supports_dual_read:
        address = slot.activation_address(geometry)
        if needs_write:
            write_row(bank, address, activation)
        return [dual_row_convolve(bank, address, slot.address(i), engine) for i in range(len(slot.channels))]

    c = bank.ledger.constants if bank.ledger is not None else CostConstants()
    results = []
    for i in range(len(slot.channels)):
        _record(bank.ledger, EventKind.SRAM_READ, bank.layer_tag, 1, CostMode.BASELINE)
        kernel = read_row(bank, slot.address(i))
        results.append(engine.convolve64(activation, kernel))
        _record(bank.ledger, EventKind.HOST_INSTR, bank.layer_tag,
                c.baseline_xnor_instrs + c.baseline_popcount_instrs)
    return results


def _execute_binary(layer: LayerSpec, act_bits: np.ndarray, ker_bits: np.ndarray, engine,
                    bank: SectionedBank, ledger: CostLedger,
                    error_stats: Optional[ErrorStats]) -> np.ndarray:
    """Run every (position, channel) element through the engine; returns 0/1 outputs (P, O)."""
    positions, n = act_bits.shape
    out_channels = ker_bits.shape[0]
    if bank.geometry.columns != TILE_BITS:
        raise ConfigurationError(f"tile lowering needs {TILE_BITS}-column rows, got {bank.geometry.columns}")
    act_words, ker_words = tile_words(act_bits), tile_words(ker_bits)
    tiles = act_words.shape[1]
    halves = tile_active_halves(n)
    correction = tiles * TILE_BITS - n
    geometry = _engine_geometry(engine, bank.geometry)
    bank.ledger, bank.layer_tag = ledger, layer.name
    c = ledger.constants
    passes = plan_kernel_passes(geometry, out_channels, tiles)
    logger.debug("layer %s: %d positions, N=%d, %d tiles, %d pass(es)", layer.name, positions, n, tiles, len(passes))

    partials = np.zeros((positions, out_channels, tiles), dtype=np.int64)
    for kernel_pass in passes:
        for slot in kernel_pass.slots:
            for i, ch in enumerate(slot.channels):
                write_row(bank, slot.address(i), BitWord(int(ker_words[ch, slot.tile])))
        _record(ledger, EventKind.DRAM_ACCESS, layer.name, kernel_pass.kernel_rows)
        needs = kernel_pass.activation_writes(geometry)
        for p in range(positions):
            for slot, need in zip(kernel_pass.slots, needs):
                activation = BitWord(int(act_words[p, slot.tile]))
                results = _dispatch(engine, bank, slot, activation, need, halves[slot.tile])
                partials[p, list(slot.channels), slot.tile] = results
                _record(ledger, EventKind.HOST_INSTR, layer.name, c.accumulate_instrs * len(slot.channels))

    totals = np.empty((positions, out_channels), dtype=np.int64)
    outputs = np.empty((positions, out_channels), dtype=np.uint8)
    for p in range(positions):
        for ch in range(out_channels):
            total = large_kernel_popcount(partials[p, ch].tolist(), TILE_BITS) - correction
            total = min(max(total, 0), n)
            totals[p, ch] = total
            threshold = layer.thresholds[ch] if layer.thresholds is not None else None
            outputs[p, ch] = threshold_activation(total, n, threshold)
    _record(ledger, EventKind.HOST_INSTR, layer.name, c.threshold_instrs * positions * out_channels)
    ledger.count_macs(layer.name, positions * out_channels * n)

    if error_stats is not None:
        error_stats.add(totals - exact_matches(act_bits, ker_bits))
    return outputs


def exact_matches(act_bits: np.ndarray, ker_bits: np.ndarray) -> np.ndarray:
    """Dense XNOR popcount for every (row of act, row of ker) pair."""
    a = act_bits.astype(np.int64)
    k = ker_bits.astype(np.int64)
    return a @ k.T + (1 - a) @ (1 - k).T


def _check_binary_weights(layer: LayerSpec, weights: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    weights = np.asarray(weights)
    if weights.shape != shape:
        raise InvalidInputError(f"layer {layer.name!r}: weights shape {weights.shape}, expected {shape}")
    if weights.size and (weights.min() < 0 or weights.max() > 1):
        raise InvalidInputError(f"layer {layer.name!r}: binarized weights must be 0/1 bits")
    return weights.astype(np.uint8).reshape(shape[0], -1)


def conv_forward(layer: LayerSpec, input: FeatureMap, kernels: np.ndarray, engine, bank: SectionedBank,
                 ledger: CostLedger, error_stats: Optional[ErrorStats] = None) -> FeatureMap:
    """
    Binarized convolution. kernels: (O, I, k, k) bits.

    Each output bit is threshold_activation(sum of tile popcounts - padding, N).
    """
    if layer.kind != "conv":
        raise InvalidInputError(f"conv_forward got a {layer.kind} layer")
    bits = input.as_bits()
    layer.output_shape(bits.shape)
    ker = _check_binary_weights(layer, kernels, (layer.out_channels, layer.in_channels, layer.k, layer.k))
    act, ho, wo = im2col(bits, layer.k, layer.stride, layer.padding, pad_value=0)
    _open_layer(ledger, layer)
    outputs = _execute_binary(layer, act, ker, engine, bank, ledger, error_stats)
    return FeatureMap(outputs.T.reshape(layer.out_channels, ho, wo), binary=True)


def fc_forward(layer: LayerSpec, input: FeatureMap, weights: np.ndarray, engine, bank: SectionedBank,
               ledger: CostLedger, error_stats: Optional[ErrorStats] = None) -> FeatureMap:
    """Binarized fully-connected layer. weights: (O, N) bits, N = flattened input length."""
    if layer.kind != "fc":
        raise InvalidInputError(f"fc_forward got a {layer.kind} layer")
    bits = input.as_bits()
    layer.output_shape(bits.shape)
    ker = _check_binary_weights(layer, weights, (layer.out_channels, layer.in_channels))
    _open_layer(ledger, layer)
    outputs = _execute_binary(layer, bits.reshape(1, -1), ker, engine, bank, ledger, error_stats)
    return FeatureMap(outputs[0], binary=True)


def pool_forward(input: FeatureMap, ledger: Optional[CostLedger] = None, layer_tag: str = "pool") -> FeatureMap:
    """2x2 stride-2 max-pool; over {0,1} this is the OR of each window."""
    if not input.binary:
        raise InvalidInputError("pool_forward needs a binary feature map")
    data = input.data
    if data.ndim != 3 or data.shape[1] % 2 or data.shape[2] % 2:
        raise InvalidInputError(f"2x2 pooling needs (C, even H, even W), got {data.shape}")
    c, h, w = data.shape
    pooled = data.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))
    if ledger is not None:
        _record(ledger, EventKind.HOST_INSTR, layer_tag, ledger.constants.pool_instrs_per_output * pooled.size)
    return FeatureMap(pooled, binary=True)


def _host_outputs(layer: LayerSpec, values: np.ndarray) -> Tuple[np.ndarray, bool]:
    if np.abs(values).max(initial=0) > np.iinfo(np.int32).max:
        raise SimulationError(f"layer {layer.name!r}: host accumulator overflows 32 bits")
    if not layer.binarize_output:
        return values.astype(np.int32), False
    thresholds = np.zeros(layer.out_channels, dtype=np.int64) if layer.thresholds is None \
        else np.asarray(layer.thresholds, dtype=np.int64)
    return (values > thresholds.reshape((-1,) + (1,) * (values.ndim - 1))).astype(np.uint8), True


def _host_costs(ledger: Optional[CostLedger], layer: LayerSpec, positions: int):
    if ledger is None:
        return
    c = ledger.constants
    macs = positions * layer.out_channels * layer.fan_in
    _record(ledger, EventKind.SRAM_READ, layer.name, macs)
    _record(ledger, EventKind.HOST_INSTR, layer.name, c.host_mac_instrs * macs)
    if layer.binarize_output:
        _record(ledger, EventKind.HOST_INSTR, layer.name, c.threshold_instrs * positions * layer.out_channels)
    ledger.count_macs(layer.name, macs)


def host_conv_forward(layer: LayerSpec, input: FeatureMap, weights: np.ndarray,
                      ledger: Optional[CostLedger] = None) -> FeatureMap:
    """Integer convolution on the host; weights (O, I, k, k) int32."""
    x = input.as_bipolar()
    layer.output_shape(x.shape)
    w = np.asarray(weights, dtype=np.int64)
    if w.shape != (layer.out_channels, layer.in_channels, layer.k, layer.k):
        raise InvalidInputError(f"layer {layer.name!r}: weights shape {w.shape} does not match the layer")
    cols, ho, wo = im2col(x, layer.k, layer.stride, layer.padding, pad_value=0)
    values = (cols @ w.reshape(layer.out_channels, -1).T).T.reshape(layer.out_channels, ho, wo)
    _open_layer(ledger, layer)
    _host_costs(ledger, layer, ho * wo)
    data, binary = _host_outputs(layer, values)
    return FeatureMap(data, binary)


def host_fc_forward(layer: LayerSpec, input: FeatureMap, weights: np.ndarray,
                    ledger: Optional[CostLedger] = None) -> FeatureMap:
    x = input.as_bipolar().ravel()
    layer.output_shape(x.shape)
    w = np.asarray(weights, dtype=np.int64)
    if w.shape != (layer.out_channels, layer.in_channels):
        raise InvalidInputError(f"layer {layer.name!r}: weights shape {w.shape} does not match the layer")
    _open_layer(ledger, layer)
    _host_costs(ledger, layer, 1)
    data, binary = _host_outputs(layer, w @ x)
    return FeatureMap(data, binary)


@dataclass
class InferenceResult:
    predicted_class: int
    logits: np.ndarray
    ledger: Optional[CostLedger] = None


def _check_image(network: NetworkSpec, image) -> FeatureMap:
    image = np.asarray(image)
    if image.shape != network.input_shape:
        raise InvalidInputError(f"image shape {image.shape} does not match network input {network.input_shape}")
    return FeatureMap(image.astype(np.int64), binary=False)


def _logits(fm: FeatureMap) -> np.ndarray:
    return fm.as_bipolar().ravel()


def infer(network: NetworkSpec, weights: Mapping[str, np.ndarray], image, engine,
          geometry: GeometryConfig = GeometryConfig(), ledger: Optional[CostLedger] = None,
          error_stats: Optional[ErrorStats] = None) -> InferenceResult:
    """
    Run one image through the network. Binarized layers go to `engine` via a
    fresh bank; host layers use integer arithmetic.

    Returns:
        InferenceResult with argmax class, final logits and the cost ledger
    """
    ledger = ledger if ledger is not None else CostLedger()
    bank = SectionedBank(geometry, ledger)
    fm = _check_image(network, image)
    for index, layer in enumerate(network.layers):
        _open_layer(ledger, layer, index)
        if layer.kind == "pool":
            fm = pool_forward(fm, ledger, layer.name)
            continue
        w = weights.get(layer.name)
        if w is None:
            raise InvalidInputError(f"no weights for layer {layer.name!r}")
        if layer.kind == "conv":
            fm = conv_forward(layer, fm, w, engine, bank, ledger, error_stats)
        elif layer.kind == "fc":
            fm = fc_forward(layer, fm, w, engine, bank, ledger, error_stats)
        elif layer.kind == "host_conv":
            fm = host_conv_forward(layer, fm, w, ledger)
        else:
            fm = host_fc_forward(layer, fm, w, ledger)
    logits = _logits(fm)
    return InferenceResult(int(np.argmax(logits)), logits, ledger)


def reference_forward(network: NetworkSpec, weights: Mapping[str, np.ndarray], image) -> InferenceResult:
    """Dense ±1 integer evaluation of the network with the strict threshold rule."""
    fm = _check_image(network, image)
    for layer in network.layers:
        if layer.kind == "pool":
            fm = pool_forward(fm)
            continue
        w = np.asarray(weights[layer.name])
        if layer.kind == "host_conv":
            fm = host_conv_forward(layer, fm, w)
            continue
        if layer.kind == "host_fc":
            fm = host_fc_forward(layer, fm, w)
            continue
        x = fm.as_bits().astype(np.int64) * 2 - 1
        kernel = w.reshape(layer.out_channels, -1).astype(np.int64) * 2 - 1
        if layer.kind == "conv":
            cols, ho, wo = im2col(x, layer.k, layer.stride, layer.padding, pad_value=-1)
            dots = cols @ kernel.T
            shape = (layer.out_channels, ho, wo)
        else:
            dots = x.reshape(1, -1) @ kernel.T
            shape = (layer.out_channels,)
        n = layer.fan_in
        popcounts = (dots + n) // 2
        if layer.thresholds is None:
            bits = 2 * popcounts > n
        else:
            bits = popcounts > np.asarray(layer.thresholds).reshape(1, -1)
        fm = FeatureMap(bits.astype(np.uint8).T.reshape(shape), binary=True)
    logits = _logits(fm)
    return InferenceResult(int(np.argmax(logits)), logits)


@dataclass
class EvaluationResult:
    accuracy: Optional[float]
    trial_accuracies: List[float]
    predictions: List[List[int]]
    error: ErrorStats
    ledger: CostLedger
    inferences: int


@dataclass(frozen=True)
class _Task:
    trial: int
    index: int
    image: np.ndarray


@dataclass
class _Context:
    network: NetworkSpec
    weights: Mapping[str, np.ndarray]
    engine_kind: str
    geometry: GeometryConfig
    adc: AdcConfig
    constants: CostConstants


_worker_context: Optional[_Context] = None


def _init_worker(context: _Context):
    global _worker_context
    _worker_context = context


def _run_task(task: _Task, context: Optional[_Context] = None):
    ctx = context or _worker_context
    engine = make_engine(ctx.engine_kind, ctx.geometry, ctx.adc, stream=(task.trial, task.index))
    ledger = CostLedger(ctx.constants, keep_events=False)
    stats = ErrorStats()
    result = infer(ctx.network, ctx.weights, task.image, engine, ctx.geometry, ledger, stats)
    return result.predicted_class, ledger, stats


def evaluate(network: NetworkSpec, weights: Mapping[str, np.ndarray], dataset: Sequence[Tuple[np.ndarray, Optional[int]]],
             engine_kind: str, geometry: GeometryConfig = GeometryConfig(), adc: AdcConfig = AdcConfig(),
             constants: CostConstants = CostConstants(), trials: int = 1, jobs: int = 1) -> EvaluationResult:
    """
    Classify every image `trials` times, each trial with fresh noise streams.

    Args:
        dataset: (image, label) pairs; label may be None
        engine_kind: proposal_a | proposal_b | oracle | baseline
        jobs: worker processes; results are identical for any value

    Returns:
        EvaluationResult with accuracy, popcount-error statistics and the merged ledger
    """
    if not dataset:
        raise InvalidInputError("evaluate needs a non-empty dataset")
    if trials < 1:
        raise InvalidInputError(f"trials must be >= 1, got {trials}")
    # fail fast on bad engine/geometry combinations
    make_engine(engine_kind, geometry, adc)
    context = _Context(network, weights, engine_kind, geometry, adc, constants)
    tasks = [_Task(t, i, np.asarray(image)) for t in range(trials) for i, (image, _) in enumerate(dataset)]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(context,)) as pool:
            outcomes = list(tqdm(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))),
                                 total=len(tasks), desc="inference", disable=None))
    else:
        outcomes = [_run_task(task, context) for task in tqdm(tasks, desc="inference", disable=None)]

    ledger = CostLedger(constants, keep_events=False)
    stats = ErrorStats()
    predictions = [[0] * len(dataset) for _ in range(trials)]
    for task, (predicted, task_ledger, task_stats) in zip(tasks, outcomes):
        predictions[task.trial][task.index] = predicted
        ledger = ledger.merge(task_ledger)
        stats = stats.merge(task_stats)

    labels = [label for _, label in dataset]
    trial_accuracies = []
    if all(label is not None for label in labels):
        for trial_predictions in predictions:
            hits = sum(int(p == label) for p, label in zip(trial_predictions, labels))
            trial_accuracies.append(hits / len(labels))
    accuracy = float(np.mean(trial_accuracies)) if trial_accuracies else None
    logger.info("evaluated %d image(s) x %d trial(s) on %s: accuracy=%s", len(dataset), trials, engine_kind, accuracy)
    return EvaluationResult(accuracy, trial_accuracies, predictions, stats, ledger, len(tasks))


def profile_network(network: NetworkSpec, engine_kind: str, geometry: GeometryConfig = GeometryConfig(),
                    constants: CostConstants = CostConstants()) -> CostLedger:
    """
    Ledger of one inference computed from layer shapes alone.

    Records the same (layer, kind, mode) tallies a simulated inference would,
    so full-size networks can be costed without evaluating them.
    """
    engine = make_engine(engine_kind, geometry, AdcConfig(sigma=0.0))
    ledger = CostLedger(constants, keep_events=False)
    c = constants
    for index, (layer, (in_shape, out_shape)) in enumerate(zip(network.layers, network.shapes())):
        _open_layer(ledger, layer, index)
        positions = int(np.prod(out_shape[1:])) if len(out_shape) == 3 else 1
        if layer.kind == "pool":
            _record(ledger, EventKind.HOST_INSTR, layer.name, c.pool_instrs_per_output * int(np.prod(out_shape)))
        elif not layer.binarized:
            _host_costs(ledger, layer, positions)
        else:
            _profile_binary(layer, positions, engine, geometry, ledger)
    return ledger


def _profile_binary(layer: LayerSpec, positions: int, engine, geometry: GeometryConfig, ledger: CostLedger):
    n, tag, c = layer.fan_in, layer.name, ledger.constants
    tiles = -(-n // TILE_BITS)
    effective = _engine_geometry(engine, geometry)
    mode = CostMode.SECTIONED if geometry.sections > 1 else CostMode.UNSECTIONED
    for kernel_pass in plan_kernel_passes(effective, layer.out_channels, tiles):
        ops = kernel_pass.kernel_rows
        _record(ledger, EventKind.SRAM_WRITE, tag, ops)
        _record(ledger, EventKind.DRAM_ACCESS, tag, ops)
        writes = sum(kernel_pass.activation_writes(effective))
        if engine.supports_sections:
            _record(ledger, EventKind.SRAM_WRITE, tag, positions * writes)
            _record(ledger, EventKind.PSEUDO_READ_BATCH, tag, positions * len(kernel_pass.slots), mode)
            _record(ledger, EventKind.ADC_CONVERSION, tag, positions * ops, mode)
        elif engine.supports_dual_read:
            _record(ledger, EventKind.SRAM_WRITE, tag, positions * writes)
            _record(ledger, EventKind.DUAL_READ, tag, positions * ops, CostMode.PROPOSAL_B)
            _record(ledger, EventKind.ADDER, tag, positions * ops, CostMode.PROPOSAL_B)
        else:
            _record(ledger, EventKind.SRAM_READ, tag, 2 * positions * ops, CostMode.BASELINE)
            _record(ledger, EventKind.HOST_INSTR, tag,
                    (c.baseline_xnor_instrs + c.baseline_popcount_instrs) * positions * ops)
        _record(ledger, EventKind.HOST_INSTR, tag, c.accumulate_instrs * positions * ops)
    _record(ledger, EventKind.HOST_INSTR, tag, c.threshold_instrs * positions * layer.out_channels)
    ledger.count_macs(tag, positions * layer.out_channels * n)


def binary_mac_fraction(ledger: CostLedger) -> float:
    """Share of MACs executed by binarized layers."""
    total = sum(ledger.macs.values())
    if not total:
        return 0.0
    binary = sum(v for tag, v in ledger.macs.items() if tag in ledger.layers and ledger.layers[tag].binarized)
    return binary / total
