#src/engines.py
"""Popcount engines behind a common convolve64 interface."""
from typing import Sequence

import numpy as np

from models.models import AdcConfig, GeometryConfig
from src import proposal_a, proposal_b
from src.bitcore import BitWord, popcount, xnor
from src.custom_exception import ConfigurationError

ENGINE_KINDS = ("proposal_a", "proposal_b", "oracle", "baseline")


class OracleEngine:
    """Exact XNOR+popcount, dispatched like Proposal-A with an ideal ADC."""
    name = "oracle"
    supports_sections = True
    supports_dual_read = False
    exact = True

    def convolve64(self, activation: BitWord, kernel: BitWord, active_halves: int = 2) -> int:
        return popcount(xnor(activation, kernel))

    def convolve_section(self, section: int, activation: BitWord, kernel: BitWord, active_halves: int = 2) -> int:
        return self.convolve64(activation, kernel, active_halves)


class ProposalAEngine:
    name = "proposal_a"
    supports_sections = True
    supports_dual_read = False

    def __init__(self, geometry: GeometryConfig, adc: AdcConfig, stream: Sequence[int] = ()):
        self.geometry = geometry
        self.adc = adc
        seeds = np.random.SeedSequence((adc.seed, *stream)).spawn(geometry.sections)
        self.models = [proposal_a.AdcModel.for_geometry(geometry, adc, seed) for seed in seeds]

    @property
    def exact(self) -> bool:
        return self.adc.sigma == 0

    def convolve_section(self, section: int, activation: BitWord, kernel: BitWord, active_halves: int = 2) -> int:
        return proposal_a.convolve64(activation, kernel, self.models[section], active_halves)

    def convolve64(self, activation: BitWord, kernel: BitWord, active_halves: int = 2) -> int:
        return self.convolve_section(0, activation, kernel, active_halves)


class ProposalBEngine:
    name = "proposal_b"
    supports_sections = False
    supports_dual_read = True
    exact = True

    def convolve64(self, activation: BitWord, kernel: BitWord, active_halves: int = 2) -> int:
        return proposal_b.convolve64_exact(activation, kernel)


class BaselineEngine:
    """Software XNOR + popcount on the host after two conventional reads."""
    name = "baseline"
    supports_sections = False
    supports_dual_read = False
    exact = True

    def convolve64(self, activation: BitWord, kernel: BitWord, active_halves: int = 2) -> int:
        return popcount(xnor(activation, kernel))


def make_engine(kind: str, geometry: GeometryConfig, adc: AdcConfig = AdcConfig(), stream: Sequence[int] = ()):
    """
    Build an engine by name.

    Args:
        kind: one of ENGINE_KINDS
        geometry: array geometry; proposal_b requires a single section
        adc: ADC settings (proposal_a only)
        stream: extra integers mixed into the ADC seed (trial, image index)
    """
    if kind == "proposal_a":
        return ProposalAEngine(geometry, adc, stream)
    if kind == "proposal_b":
        if geometry.sections > 1:
            raise ConfigurationError("sectioned arrays are not applicable to proposal_b; use sections = 1")
        return ProposalBEngine()
    if kind == "oracle":
        return OracleEngine()
    if kind == "baseline":
        return BaselineEngine()
    raise ConfigurationError(f"unknown engine {kind!r}; expected one of {', '.join(ENGINE_KINDS)}")
