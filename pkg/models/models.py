from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

EngineKind = Literal["proposal_a", "proposal_b", "oracle", "baseline"]
OutputFormat = Literal["table", "csv", "json"]
BoundaryMode = Literal["inclusive_sc3", "floor"]


class GeometryConfig(BaseModel):
    """Subarray/bank geometry. Defaults: 64 columns, 4 sections of 32 rows."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    columns: int = Field(default=64, ge=8, le=64)
    rows_per_section: int = Field(default=32, ge=1)
    sections: int = Field(default=4, ge=1)
    subarrays_per_bank: int = Field(default=8, ge=1)
    activation_rows: int = Field(default=8, ge=1)
    dual_rwl: bool = True

    @model_validator(mode="after")
    def check_columns(self):
        step = 8 if self.dual_rwl else 4
        if self.columns % step:
            raise ValueError(f"columns must be a multiple of {step} (dual_rwl={self.dual_rwl})")
        return self

    @property
    def active_cells(self) -> int:
        return self.columns // 2 if self.dual_rwl else self.columns


class AdcConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma: float = Field(default=0.4359, ge=0.0)
    seed: int = Field(default=0, ge=0)
    boundary_mode: BoundaryMode = "inclusive_sc3"
    guard_counts: int = Field(default=3, ge=0)


class CostConstants(BaseModel):
    """
    Per-event energy (pJ unless noted) and latency (ns) constants.

    Proposal-A and Proposal-B values are circuit-level figures for a 45 nm
    array; baseline, host and DRAM values are placeholders, see
    docs/config_reference.md.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    a_energy_sectioned_pj: float = Field(default=0.767, ge=0.0)
    a_energy_unsectioned_pj: float = Field(default=1.914, ge=0.0)
    a_latency_ns: float = Field(default=45.0, ge=0.0)
    b_xnor_energy_fj_per_bit: float = Field(default=29.67, ge=0.0)
    b_xnor_latency_ns: float = Field(default=1.0, ge=0.0)
    b_adder_power_mw: float = Field(default=0.26, ge=0.0)
    b_adder_latency_ns: float = Field(default=0.3, ge=0.0)
    baseline_read_energy_pj: float = Field(default=5.0, ge=0.0)
    baseline_read_latency_ns: float = Field(default=1.0, ge=0.0)
    sram_write_energy_pj: float = Field(default=5.5, ge=0.0)
    sram_write_latency_ns: float = Field(default=1.0, ge=0.0)
    host_instr_energy_pj: float = Field(default=4.0, ge=0.0)
    host_instr_latency_ns: float = Field(default=2.0, ge=0.0)
    dram_access_energy_pj: float = Field(default=1280.0, ge=0.0)
    dram_access_latency_ns: float = Field(default=50.0, ge=0.0)
    baseline_xnor_instrs: int = Field(default=2, ge=0)
    baseline_popcount_instrs: int = Field(default=24, ge=0)
    accumulate_instrs: int = Field(default=1, ge=0)
    threshold_instrs: int = Field(default=1, ge=0)
    host_mac_instrs: int = Field(default=2, ge=0)
    pool_instrs_per_output: int = Field(default=3, ge=0)

    @model_validator(mode="after")
    def check_sectioned(self):
        if self.a_energy_sectioned_pj > self.a_energy_unsectioned_pj:
            raise ValueError("a_energy_sectioned_pj must not exceed a_energy_unsectioned_pj")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    engine: EngineKind = "proposal_a"
    geometry: GeometryConfig = GeometryConfig()
    adc: AdcConfig = AdcConfig()
    costs: CostConstants = CostConstants()
    network: Optional[str] = None
    weights: Optional[str] = None
    data: Optional[str] = None
    out: Optional[str] = None
    output_format: OutputFormat = "table"
    trials: int = Field(default=1, ge=1)
    jobs: int = Field(default=1, ge=1)
    baseline: bool = False
    explain: bool = False

    @model_validator(mode="after")
    def check_engine_geometry(self):
        if self.engine == "proposal_b" and self.geometry.sections > 1:
            raise ValueError("proposal_b does not support sectioned arrays (sections must be 1)")
        return self


class SweepRequest(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    config: RunConfig
    parameter: Literal["sigma", "sections"]
    values: List[float] = Field(min_length=1)


class ProfileRequest(BaseModel):
    network: str
    engine: EngineKind = "proposal_a"
    geometry: GeometryConfig = GeometryConfig()
    costs: CostConstants = CostConstants()
    baseline: bool = True


class ReportResponse(BaseModel):
    status: str
    report: Dict


class SelftestResponse(BaseModel):
    passed: bool
    checks: int
    failures: List[str]
