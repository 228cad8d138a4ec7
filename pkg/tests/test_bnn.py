import math

import numpy as np
import pytest

from models.models import AdcConfig, CostConstants, GeometryConfig
from src.array_model import SectionedBank
from src.bitcore import BinaryVector, xnor_popcount_oracle
from src.bnn import (ErrorStats, FeatureMap, LayerSpec, NetworkSpec, binary_mac_fraction, conv_forward, evaluate,
                     fc_forward, host_conv_forward, infer, lower_output_element, pool_forward, profile_network,
                     reference_forward, tile_active_halves)
from src.costmodel import CostLedger, CostMode, EventKind
from src.custom_exception import ConfigurationError, InvalidInputError
from src.engines import make_engine
from src.network_io import load_network
from tests.conftest import BENCHMARK_NET

EXACT_SETUPS = [("oracle", 4), ("proposal_a", 4), ("proposal_a", 1), ("proposal_b", 1), ("baseline", 4)]


def dense_conv(x_bits, w_bits, stride, padding, thresholds=None):
    """Direct ±1 convolution with -1 padding and the strict threshold."""
    x = np.pad(x_bits.astype(np.int64) * 2 - 1, ((0, 0), (padding, padding), (padding, padding)),
               constant_values=-1)
    w = w_bits.astype(np.int64) * 2 - 1
    o, _, k, _ = w.shape
    ho = (x.shape[1] - k) // stride + 1
    wo = (x.shape[2] - k) // stride + 1
    n = w[0].size
    out = np.zeros((o, ho, wo), dtype=np.uint8)
    for c in range(o):
        for i in range(ho):
            for j in range(wo):
                window = x[:, i * stride:i * stride + k, j * stride:j * stride + k]
                popcount = (int(np.sum(window * w[c])) + n) // 2
                out[c, i, j] = popcount > thresholds[c] if thresholds is not None else 2 * popcount > n
    return out


def dense_fc(x_bits, w_bits, thresholds=None):
    x = x_bits.ravel().astype(np.int64) * 2 - 1
    w = w_bits.astype(np.int64) * 2 - 1
    n = x.size
    popcounts = (w @ x + n) // 2
    if thresholds is not None:
        return (popcounts > np.asarray(thresholds)).astype(np.uint8)
    return (2 * popcounts > n).astype(np.uint8)


def run_layer(layer, x_bits, w_bits, kind, sections, error_stats=None, sigma=0.0, seed=0):
    geometry = GeometryConfig(sections=sections)
    engine = make_engine(kind, geometry, AdcConfig(sigma=sigma, seed=seed))
    ledger = CostLedger()
    bank = SectionedBank(geometry, ledger)
    forward = conv_forward if layer.kind == "conv" else fc_forward
    out = forward(layer, FeatureMap(x_bits, binary=True), w_bits, engine, bank, ledger, error_stats)
    return out.data, ledger


class TestLowering:

    @pytest.mark.parametrize("n, tiles, correction, halves", [
        (9, 1, 55, (1,)), (32, 1, 32, (1,)), (33, 1, 31, (2,)), (64, 1, 0, (2,)),
        (65, 2, 63, (2, 1)), (100, 2, 28, (2, 2)), (1152, 18, 0, (2,) * 18)])
    def test_tile_plan_shape(self, n, tiles, correction, halves, rng):
        layer = LayerSpec("fc", "fc", in_channels=n, out_channels=1)
        a = BinaryVector.from_bits(rng.integers(0, 2, n))
        k = BinaryVector.from_bits(rng.integers(0, 2, n))
        plan = lower_output_element(layer, a, k)
        assert (plan.tiles, plan.correction, plan.active_halves) == (tiles, correction, halves)
        assert plan.half_conversions == math.ceil(n / 32)

    def test_tile_popcounts_minus_padding_is_exact(self, rng):
        for n in (1, 63, 64, 65, 200, 577):
            layer = LayerSpec("fc", "fc", in_channels=n, out_channels=1)
            a = BinaryVector.from_bits(rng.integers(0, 2, n))
            k = BinaryVector.from_bits(rng.integers(0, 2, n))
            plan = lower_output_element(layer, a, k)
            partials = [xnor_popcount_oracle(BinaryVector((x,)), BinaryVector((y,)))
                        for x, y in zip(plan.activation_tiles, plan.kernel_tiles)]
            assert sum(partials) - plan.correction == xnor_popcount_oracle(a, k)

    def test_half_conversion_count(self):
        for n in range(1, 2000):
            assert sum(tile_active_halves(n)) == math.ceil(n / 32)

    def test_length_checks(self, rng):
        layer = LayerSpec("fc", "fc", in_channels=10, out_channels=1)
        with pytest.raises(InvalidInputError):
            lower_output_element(layer, BinaryVector.from_bits(rng.integers(0, 2, 10)),
                                 BinaryVector.from_bits(rng.integers(0, 2, 11)))
        with pytest.raises(InvalidInputError):
            lower_output_element(layer, BinaryVector.from_bits(rng.integers(0, 2, 12)),
                                 BinaryVector.from_bits(rng.integers(0, 2, 12)))


class TestExactLayers:

    def test_random_layers_match_dense_reference(self, rng):
        for trial in range(50):
            kind, sections = EXACT_SETUPS[trial % len(EXACT_SETUPS)]
            o = int(rng.integers(1, 11))
            thresholds = None
            if trial % 2:
                layer_in = int(rng.integers(1, 7))
                k = int(rng.integers(1, 4))
                stride = int(rng.integers(1, 3))
                padding = int(rng.integers(0, 2))
                size = int(rng.integers(k, 7))
                n = k * k * layer_in
                if trial % 3 == 0:
                    thresholds = tuple(int(t) for t in rng.integers(0, n + 1, o))
                layer = LayerSpec("conv", "conv", k=k, in_channels=layer_in, out_channels=o, stride=stride,
                                  padding=padding, thresholds=thresholds)
                x = rng.integers(0, 2, (layer_in, size, size)).astype(np.uint8)
                w = rng.integers(0, 2, (o, layer_in, k, k)).astype(np.uint8)
                expected = dense_conv(x, w, stride, padding, thresholds)
            else:
                n = int(rng.integers(1, 300))
                if trial % 3 == 0:
                    thresholds = tuple(int(t) for t in rng.integers(0, n + 1, o))
                layer = LayerSpec("fc", "fc", in_channels=n, out_channels=o, thresholds=thresholds)
                x = rng.integers(0, 2, n).astype(np.uint8)
                w = rng.integers(0, 2, (o, n)).astype(np.uint8)
                expected = dense_fc(x, w, thresholds)
            stats = ErrorStats()
            got, _ = run_layer(layer, x, w, kind, sections, stats)
            assert np.array_equal(got, expected), (trial, kind, layer)
            assert stats.total_sq == 0

    @pytest.mark.parametrize("kind, sections", [("oracle", 4), ("proposal_a", 4)])
    def test_padding_correction_for_every_length(self, kind, sections, rng):
        for n in range(1, 257):
            layer = LayerSpec("fc", "fc", in_channels=n, out_channels=3)
            x = rng.integers(0, 2, n).astype(np.uint8)
            w = rng.integers(0, 2, (3, n)).astype(np.uint8)
            stats = ErrorStats()
            got, _ = run_layer(layer, x, w, kind, sections, stats)
            assert np.array_equal(got, dense_fc(x, w)), n
            assert stats.count == 3 and stats.total_sq == 0

    def test_three_layer_network(self, rng):
        network = NetworkSpec("tiny", (
            LayerSpec("c1", "conv", k=3, in_channels=2, out_channels=4, padding=1),
            LayerSpec("p1", "pool"),
            LayerSpec("f1", "fc", in_channels=36, out_channels=5),
        ), input_shape=(2, 6, 6), classes=5)
        weights = {"c1": rng.integers(0, 2, (4, 2, 3, 3)).astype(np.uint8),
                   "f1": rng.integers(0, 2, (5, 36)).astype(np.uint8)}
        for _ in range(4):
            image = rng.choice([-1, 1], size=(2, 6, 6))
            want = reference_forward(network, weights, image)
            for kind, sections in EXACT_SETUPS:
                geometry = GeometryConfig(sections=sections)
                got = infer(network, weights, image, make_engine(kind, geometry, AdcConfig(sigma=0.0)), geometry)
                assert np.array_equal(got.logits, want.logits), kind
                assert got.predicted_class == want.predicted_class

    def test_toy_network_with_host_layers(self, toy_model):
        network, weights, images = toy_model
        for image in images:
            want = reference_forward(network, weights, image).logits
            for kind, sections in EXACT_SETUPS:
                geometry = GeometryConfig(sections=sections)
                got = infer(network, weights, image, make_engine(kind, geometry, AdcConfig(sigma=0.0)), geometry)
                assert np.array_equal(got.logits, want), kind

    def test_pool_is_or_over_windows(self):
        data = np.zeros((1, 2, 4), dtype=np.uint8)
        data[0, 1, 3] = 1
        assert pool_forward(FeatureMap(data, binary=True)).data.tolist() == [[[0, 1]]]

    def test_host_output_binarizes_strictly_above_zero(self):
        layer = LayerSpec("h", "host_conv", k=1, in_channels=1, out_channels=1)
        out = host_conv_forward(layer, FeatureMap(np.array([[[-1, 0, 2]]]), binary=False), np.ones((1, 1, 1, 1)))
        assert out.binary and out.data.tolist() == [[[0, 0, 1]]]

    def test_binarized_layer_rejects_non_bipolar_input(self):
        layer = LayerSpec("f", "fc", in_channels=3, out_channels=1)
        engine = make_engine("oracle", GeometryConfig())
        with pytest.raises(InvalidInputError):
            fc_forward(layer, FeatureMap(np.array([1, 2, -1]), binary=False), np.ones((1, 3), np.uint8), engine,
                       SectionedBank(GeometryConfig()), CostLedger())


class TestNoisePropagation:

    @pytest.mark.parametrize("n, m", [(64, 2), (256, 8), (1152, 36)])
    def test_element_error_std_scales_with_sqrt_m(self, n, m, rng):
        sigma = 0.4359
        layer = LayerSpec("fc", "fc", in_channels=n, out_channels=100)
        stats = ErrorStats()
        w = rng.integers(0, 2, (100, n)).astype(np.uint8)
        for image in range(100):
            x = rng.integers(0, 2, n).astype(np.uint8)
            run_layer(layer, x, w, "proposal_a", 4, stats, sigma=sigma, seed=image)
        assert stats.count == 10_000
        assert stats.std == pytest.approx(sigma * math.sqrt(m), rel=0.15)
        assert abs(stats.mean) < 0.1 * sigma * math.sqrt(m)


class TestCostAccounting:

    def test_sectioning_cuts_pseudo_reads_fourfold(self, rng):
        layer = LayerSpec("fc", "fc", in_channels=256, out_channels=8)
        x = rng.integers(0, 2, 256).astype(np.uint8)
        w = rng.integers(0, 2, (8, 256)).astype(np.uint8)
        _, sectioned = run_layer(layer, x, w, "proposal_a", 4)
        _, flat = run_layer(layer, x, w, "proposal_a", 1)
        pr4 = sectioned.aggregate().event_counts["pseudo_read_batch"]
        pr1 = flat.aggregate().event_counts["pseudo_read_batch"]
        assert pr1 == 4 * pr4
        adc4 = sectioned.aggregate().energy_by_kind["adc_conversion"]
        adc1 = flat.aggregate().energy_by_kind["adc_conversion"]
        assert adc1 / adc4 == pytest.approx(2.496, rel=1e-3)

    @pytest.mark.parametrize("kind, sections", EXACT_SETUPS + [("proposal_a", 2)])
    def test_analytic_profile_matches_simulation(self, kind, sections, toy_model):
        network, weights, images = toy_model
        geometry = GeometryConfig(sections=sections)
        ledger = CostLedger()
        infer(network, weights, images[0], make_engine(kind, geometry, AdcConfig(sigma=0.0)), geometry, ledger)
        profile = profile_network(network, kind, geometry)
        assert profile.tally() == ledger.tally()
        assert dict(profile.macs) == dict(ledger.macs)

    def test_profile_matches_with_bank_overflow(self, toy_model):
        network, weights, images = toy_model
        geometry = GeometryConfig(rows_per_section=2, subarrays_per_bank=2, activation_rows=1)
        ledger = CostLedger()
        infer(network, weights, images[0], make_engine("oracle", geometry), geometry, ledger)
        assert profile_network(network, "oracle", geometry).tally() == ledger.tally()

    def test_baseline_does_no_array_work(self, toy_model):
        network, _, _ = toy_model
        kinds = {key[1] for key in profile_network(network, "baseline").tally()}
        assert not kinds & {EventKind.PSEUDO_READ_BATCH, EventKind.ADC_CONVERSION, EventKind.DUAL_READ}

    def test_benchmark_compute_fraction(self):
        network = load_network(BENCHMARK_NET)
        ledger = profile_network(network, "proposal_a")
        fraction = binary_mac_fraction(ledger)
        assert 0.99 <= fraction < 1.0
        assert ledger.aggregate("conv2").macs == 1024 * 128 * 1152

    def test_benchmark_accelerators_beat_baseline(self):
        network = load_network(BENCHMARK_NET)
        base = profile_network(network, "baseline").aggregate()
        for kind, sections in (("proposal_a", 4), ("proposal_b", 1)):
            accel = profile_network(network, kind, GeometryConfig(sections=sections)).aggregate()
            assert accel.energy_pj < base.energy_pj
            assert accel.latency_ns < base.latency_ns


class TestEvaluate:

    def test_exact_engine_scores_reference_labels(self, toy_model):
        network, weights, images = toy_model
        dataset = [(img, reference_forward(network, weights, img).predicted_class) for img in images]
        result = evaluate(network, weights, dataset, "oracle")
        assert result.accuracy == 1.0
        assert result.error.count > 0 and result.error.total_sq == 0

    def test_worker_count_does_not_change_results(self, toy_model):
        network, weights, images = toy_model
        dataset = [(img, 0) for img in images]
        adc = AdcConfig(sigma=1.5, seed=4)
        serial = evaluate(network, weights, dataset, "proposal_a", adc=adc, trials=2, jobs=1)
        parallel = evaluate(network, weights, dataset, "proposal_a", adc=adc, trials=2, jobs=2)
        assert serial.predictions == parallel.predictions
        assert serial.error == parallel.error
        assert serial.ledger.tally() == parallel.ledger.tally()

    def test_trials_draw_fresh_noise(self, toy_model):
        network, weights, images = toy_model
        result = evaluate(network, weights, [(images[0], None)], "proposal_a", adc=AdcConfig(sigma=1.5),
                          trials=2)
        assert result.accuracy is None
        assert result.inferences == 2
        single = evaluate(network, weights, [(images[0], None)], "proposal_a", adc=AdcConfig(sigma=1.5))
        assert result.error.total_sq != 2 * single.error.total_sq

    def test_empty_dataset(self, toy_model):
        network, weights, _ = toy_model
        with pytest.raises(InvalidInputError):
            evaluate(network, weights, [], "oracle")


class TestValidation:

    def test_proposal_b_rejects_sections(self):
        with pytest.raises(ConfigurationError):
            make_engine("proposal_b", GeometryConfig(sections=4))
        with pytest.raises(ConfigurationError):
            profile_network(load_network(BENCHMARK_NET), "proposal_b", GeometryConfig(sections=2))

    def test_reserved_layer_name(self):
        with pytest.raises(ConfigurationError):
            LayerSpec("total", "fc", in_channels=4, out_channels=2)

    def test_shapes_must_chain(self):
        with pytest.raises(ConfigurationError):
            NetworkSpec("bad", (LayerSpec("f", "fc", in_channels=5, out_channels=2),), (1, 2, 2), 2)
        with pytest.raises(ConfigurationError):
            NetworkSpec("bad", (LayerSpec("p", "pool"),), (1, 3, 3), 1)

    def test_unknown_engine(self):
        with pytest.raises(ConfigurationError):
            make_engine("quantum", GeometryConfig())

    def test_cost_constants_reach_the_ledger(self, toy_model):
        network, _, _ = toy_model
        cheap = CostConstants(dram_access_energy_pj=0.0)
        assert profile_network(network, "oracle", constants=cheap).aggregate().energy_by_kind["dram_access"] == 0.0
        assert ("conv2", EventKind.DRAM_ACCESS, CostMode.HOST) in profile_network(network, "oracle").tally()
