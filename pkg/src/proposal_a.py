#src/proposal_a.py
"""
Charge-sharing XNOR on the source line (SL) with a dual-stage ADC.

The SL voltage after charge sharing is modeled as pullups / active_cells in
units of V_DD (equally spaced levels). Stage 1 classifies it into one of four
sub-classes against V_DD/4, V_DD/2 and 3V_DD/4. Stage 2 pumps charge in
(SC1, SC2) or out (SC3, SC4) one level per cycle toward the sub-class
reference (V_DD/4, V_DD/2, V_DD/2, 3V_DD/4) and counts the cycles. Process
variation is a Gaussian perturbation of that count; stage 1 is error-free.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from models.models import AdcConfig, GeometryConfig
from src.bitcore import BitWord, popcount, xnor
from src.custom_exception import InvalidInputError
from src.logger import get_logger

logger = get_logger(__name__)

SUBCLASS_NAMES = ("SC1", "SC2", "SC3", "SC4")


@dataclass(frozen=True)
class SlLevel:
    pullups: int
    active_cells: int

    def __post_init__(self):
        if not 0 <= self.pullups <= self.active_cells:
            raise InvalidInputError(f"pullups {self.pullups} outside [0, {self.active_cells}]")

    @property
    def normalized_voltage(self) -> float:
        return self.pullups / self.active_cells


@dataclass(frozen=True)
class SubClass:
    index: int

    def __post_init__(self):
        if self.index not in (0, 1, 2, 3):
            raise InvalidInputError(f"sub-class index must be 0..3, got {self.index}")

    @property
    def name(self) -> str:
        return SUBCLASS_NAMES[self.index]


@dataclass(frozen=True)
class SubclassWindow:
    """Levels [low, high] of one sub-class and its stage-2 counting reference."""
    index: int
    low: int
    high: int
    reference: int
    pump_in: bool

    def count(self, pullups: int) -> int:
        return self.reference - pullups if self.pump_in else pullups - self.reference

    def level(self, count: int) -> int:
        return self.reference - count if self.pump_in else self.reference + count

    @property
    def count_range(self) -> Tuple[int, int]:
        ends = (self.count(self.low), self.count(self.high))
        return min(ends), max(ends)


def subclass_windows(active_cells: int, boundary_mode: str = "inclusive_sc3") -> Tuple[SubclassWindow, ...]:
    """
    Sub-class level windows for `active_cells` cells.

    "inclusive_sc3" puts 3V_DD/4 into SC3, so SC3 spans 9 levels (counter 0..8
    for 32 cells); "floor" uses min(floor(4v), 3) and gives SC4 the 9 levels.
    """
    if active_cells % 4:
        raise InvalidInputError(f"active_cells must be a multiple of 4, got {active_cells}")
    q = active_cells // 4
    if boundary_mode == "inclusive_sc3":
        sc3_high, sc4_low = 3 * q, 3 * q + 1
    elif boundary_mode == "floor":
        sc3_high, sc4_low = 3 * q - 1, 3 * q
    else:
        raise InvalidInputError(f"unknown boundary mode {boundary_mode!r}")
    return (
        SubclassWindow(0, 0, q - 1, q, True),
        SubclassWindow(1, q, 2 * q - 1, 2 * q, True),
        SubclassWindow(2, 2 * q, sc3_high, 2 * q, False),
        SubclassWindow(3, sc4_low, active_cells, 3 * q, False),
    )


def rounded_gaussian_std(sigma: float) -> float:
    """Standard deviation of round(N(0, sigma))."""
    if sigma <= 0:
        return 0.0
    k = int(np.ceil(10 * sigma)) + 2
    d = np.arange(-k, k + 1)
    p = norm.cdf((d + 0.5) / sigma) - norm.cdf((d - 0.5) / sigma)
    return float(np.sqrt(np.sum(p * d * d)))


@lru_cache(maxsize=64)
def calibrate_sigma(sigma_counts: float) -> float:
    """
    Continuous std whose rounded samples have standard deviation `sigma_counts`.

    Measured count histograms are integer-valued, so sigma_counts describes the
    integer spread; drawing N(0, sigma_counts) and rounding would widen it.
    """
    if sigma_counts <= 0:
        return 0.0
    return float(brentq(lambda s: rounded_gaussian_std(s) - sigma_counts, 1e-9, sigma_counts + 1.0, xtol=1e-10))


class AdcModel:
    """
    Dual-stage ADC of one section, with its own random stream.

    Not safe to share between concurrent conversions; build one per section.
    """

    def __init__(self, active_cells: int = 32, sigma_counts: float = 0.4359, rng_seed: int = 0,
                 boundary_mode: str = "inclusive_sc3", guard_counts: int = 3,
                 rng: Optional[np.random.Generator] = None):
        if sigma_counts < 0:
            raise InvalidInputError(f"sigma_counts must be >= 0, got {sigma_counts}")
        self.active_cells = active_cells
        self.sigma_counts = sigma_counts
        self.rng_seed = rng_seed
        self.boundary_mode = boundary_mode
        self.guard_counts = guard_counts
        self.windows = subclass_windows(active_cells, boundary_mode)
        self.draw_sigma = calibrate_sigma(sigma_counts)
        self.rng = rng if rng is not None else np.random.default_rng(rng_seed)
        self.decode_table: Dict[Tuple[int, int], int] = {
            (w.index, w.count(p)): p for w in self.windows for p in range(w.low, w.high + 1)
        }

    @classmethod
    def for_geometry(cls, geometry: GeometryConfig, adc: AdcConfig,
                     seed_sequence: Optional[np.random.SeedSequence] = None) -> "AdcModel":
        sigma = adc.sigma
        if not geometry.dual_rwl:
            # one conversion sees all columns, so the sense margin halves
            sigma *= 2
        logger.debug("ADC model: %d active cells, sigma %.4f counts", geometry.active_cells, sigma)
        rng =np.random.default_rng(seed_sequence if seed_sequence is not None else adc.seed)
        return cls(geometry.active_cells, sigma, adc.seed, adc.boundary_mode, adc.guard_counts, rng=rng)

    def legal_counts(self, sc: SubClass) -> Tuple[int, int]:
        lo, hi = self.windows[sc.index].count_range
        return lo - self.guard_counts, hi + self.guard_counts

    def corrupt_decode_table(self):
        """Fault injection: swap the decodes of the two lowest SC1 counts."""
        w = self.windows[0]
        lo, _ = w.count_range
        a, b = (0, lo), (0, lo + 1)
        self.decode_table[a], self.decode_table[b] = self.decode_table[b], self.decode_table[a]


def xnor_on_sl(activation_half: BitWord, kernel_half: BitWord) -> SlLevel:
    """Each XNOR=1 column pulls the SL up, each XNOR=0 column pulls it down."""
    return SlLevel(popcount(xnor(activation_half, kernel_half)), activation_half.width)


def adc_stage1(level: SlLevel, boundary_mode: str = "inclusive_sc3") -> SubClass:
    p, a = level.pullups, level.active_cells
    if 4 * p < a:
        return SubClass(0)
    if 2 * p < a:
        return SubClass(1)
    upper_sc3 = 4 * p <= 3 * a if boundary_mode == "inclusive_sc3" else 4 * p < 3 * a
    return SubClass(2) if upper_sc3 else SubClass(3)


def adc_stage2(level: SlLevel, sc: SubClass, model: AdcModel) -> int:
    """Noisy count of pump cycles to reach the sub-class reference."""
    if level.active_cells != model.active_cells:
        raise InvalidInputError(f"level has {level.active_cells} cells, ADC expects {model.active_cells}")
    if adc_stage1(level, model.boundary_mode) != sc:
        raise InvalidInputError(f"sub-class {sc.name} does not match level {level.pullups}/{level.active_cells}")
    ideal = model.windows[sc.index].count(level.pullups)
    if model.draw_sigma == 0:
        return ideal
    count = int(np.rint(ideal + model.rng.normal(0.0, model.draw_sigma)))
    lo, hi = model.legal_counts(sc)
    return min(max(count, lo), hi)


def adc_decode(sc: SubClass, count: int, model: AdcModel) -> int:
    """Half-popcount for a (sub-class, count) pair, clamped to [0, active_cells]."""
    decoded = model.decode_table.get((sc.index, count))
    if decoded is not None:
        return decoded
    lo, hi = model.legal_counts(sc)
    if not lo <= count <= hi:
        raise InvalidInputError(f"count {count} is illegal for {sc.name} (legal {lo}..{hi})")
    return min(max(model.windows[sc.index].level(count), 0), model.active_cells)


def convert(level: SlLevel, model: AdcModel) -> int:
    sc = adc_stage1(level, model.boundary_mode)
    return adc_decode(sc, adc_stage2(level, sc, model), model)


def convolve64(activation: BitWord, kernel: BitWord, model: AdcModel, active_halves: int = 2) -> int:
    """
    XNOR+popcount of one row. Under dual RWL columns [0, w/2) are read through
    RWL1a and [w/2, w) through RWL1b, each converted separately and added.

    active_halves=1 skips converting the second half (it holds only matched
    padding) and takes its exact count instead.
    """
    if activation.width != kernel.width:
        raise InvalidInputError(f"width mismatch: {activation.width} vs {kernel.width}")
    width = activation.width
    if model.active_cells == width:
        total = convert(xnor_on_sl(activation, kernel), model)
        return min(max(total, 0), width)
    if 2 * model.active_cells != width:
        raise InvalidInputError(f"{width}-bit row does not match an ADC of {model.active_cells} cells")

    a_low, a_high = activation.split(width // 2)
    k_low, k_high = kernel.split(width // 2)
    total = convert(xnor_on_sl(a_low, k_low), model)
    if active_halves == 2:
        total += convert(xnor_on_sl(a_high, k_high), model)
    elif active_halves == 1:
        total += popcount(xnor(a_high, k_high))
    else:
        raise InvalidInputError(f"active_halves must be 1 or 2, got {active_halves}")
    return min(max(total, 0), width)


def count_histograms(model: AdcModel, trials: int) -> Dict[int, np.ndarray]:
    """Monte-Carlo stage-2 decode errors per half-popcount case."""
    errors = {}
    for p in range(model.active_cells + 1):
        level = SlLevel(p, model.active_cells)
        samples = np.fromiter((convert(level, model) - p for _ in range(trials)), dtype=np.int64, count=trials)
        errors[p] = samples
    return errors
