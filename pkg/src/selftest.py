#src/selftest.py
"""
Embedded checks: engines against the XNOR+popcount oracle, and the noise-free
ADC round trip. Setting XCELRAM_FAULT_DECODE=1 (or inject_fault=True)
corrupts every ADC decode table so the suites must fail.
"""
import os
from dataclasses import dataclass, field
from typing import List

import numpy as np

from models.models import AdcConfig, GeometryConfig
from src import proposal_a, proposal_b
from src.bitcore import BinaryVector, BitWord, xnor_popcount_oracle
from src.bnn import LayerSpec, NetworkSpec, infer, reference_forward
from src.engines import make_engine
from src.logger import get_logger
from src.network_io import random_images, random_weights

logger = get_logger(__name__)

FAULT_ENV = "XCELRAM_FAULT_DECODE"

SELFTEST_NETWORK = NetworkSpec(
    name="selftest",
    layers=(
        LayerSpec("c1", "host_conv", k=3, in_channels=2, out_channels=8, padding=1),
        LayerSpec("c2", "conv", k=3, in_channels=8, out_channels=6, padding=1),
        LayerSpec("p1", "pool"),
        LayerSpec("f1", "fc", in_channels=24, out_channels=5),
        LayerSpec("f2", "host_fc", in_channels=5, out_channels=4, binarize_output=False),
    ),
    input_shape=(2, 4, 4),
    classes=4,
)


@dataclass
class SelftestResult:
    checks: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def check(self, ok: bool, message: str):
        self.checks += 1
        if not ok:
            self.failures.append(message)
            logger.error("selftest failure: %s", message)


def fault_requested() -> bool:
    return os.environ.get(FAULT_ENV, "") not in ("", "0")


def _noise_free_model(active_cells: int, boundary_mode: str, inject_fault: bool) -> proposal_a.AdcModel:
    model = proposal_a.AdcModel(active_cells, 0.0, boundary_mode=boundary_mode)
    if inject_fault:
        model.corrupt_decode_table()
    return model


def _random_words(rng: np.random.Generator, count: int) -> List[BitWord]:
    return [BitWord(int(v)) for v in rng.integers(0, 2 ** 64, size=count, dtype=np.uint64)]


def adc_round_trip(result: SelftestResult, inject_fault: bool):
    for mode in ("inclusive_sc3", "floor"):
        model = _noise_free_model(32, mode, inject_fault)
        for p in range(33):
            decoded = proposal_a.convert(proposal_a.SlLevel(p, 32), model)
            result.check(decoded == p, f"ADC round trip ({mode}): p={p} decoded as {decoded}")


def oracle_equivalence(result: SelftestResult, pairs: int, seed: int, inject_fault: bool):
    rng = np.random.default_rng(seed)
    model = _noise_free_model(32, "inclusive_sc3", inject_fault)
    left, right = _random_words(rng, pairs), _random_words(rng, pairs)
    b_bad = a_bad = 0
    for a, k in zip(left, right):
        expected = xnor_popcount_oracle(BinaryVector((a,)), BinaryVector((k,)))
        b_bad += proposal_b.convolve64_exact(a, k) != expected
        a_bad += proposal_a.convolve64(a, k, model) != expected
    result.check(b_bad == 0, f"proposal_b differs from the oracle on {b_bad}/{pairs} pairs")
    result.check(a_bad == 0, f"noise-free proposal_a differs from the oracle on {a_bad}/{pairs} pairs")


def network_equivalence(result: SelftestResult, seed: int, inject_fault: bool):
    rng = np.random.default_rng(seed)
    weights = random_weights(SELFTEST_NETWORK, rng)
    images = random_images(SELFTEST_NETWORK, 3, rng)
    adc = AdcConfig(sigma=0.0, seed=seed)
    for kind, sections in (("oracle", 4), ("proposal_a", 4), ("proposal_a", 1), ("proposal_b", 1), ("baseline", 4)):
        geometry = GeometryConfig(sections=sections)
        engine = make_engine(kind, geometry, adc)
        if inject_fault and kind == "proposal_a":
            for model in engine.models:
                model.corrupt_decode_table()
        for i, image in enumerate(images):
            got = infer(SELFTEST_NETWORK, weights, image, engine, geometry).logits
            want = reference_forward(SELFTEST_NETWORK, weights, image).logits
            result.check(np.array_equal(got, want), f"{kind} (sections={sections}) image {i}: logits differ")


def run_selftest(pairs: int = 2000, seed: int = 0, inject_fault: bool = None) -> SelftestResult:
    """
    Run every suite and collect failures.

    Args:
        pairs: random 64-bit pairs in the oracle-equivalence suite
        inject_fault: corrupt the decode tables; defaults to $XCELRAM_FAULT_DECODE
    """
    if inject_fault is None:
        inject_fault = fault_requested()
    if inject_fault:
        logger.warning("selftest running with corrupted ADC decode tables")
    result = SelftestResult()
    adc_round_trip(result, inject_fault)
    oracle_equivalence(result, pairs, seed, inject_fault)
    network_equivalence(result, seed, inject_fault)
    logger.info("selftest: %d checks, %d failure(s)", result.checks, len(result.failures))
    return result
