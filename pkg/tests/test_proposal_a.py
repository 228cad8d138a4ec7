import numpy as np
import pytest

from models.models import AdcConfig, GeometryConfig
from src import proposal_a
from src.bitcore import BinaryVector, BitWord, popcount, xnor, xnor_popcount_oracle
from src.custom_exception import InvalidInputError
from src.proposal_a import (AdcModel, SlLevel, SubClass, adc_decode, adc_stage1, adc_stage2, calibrate_sigma,
                            convert, convolve64, count_histograms, rounded_gaussian_std, subclass_windows)

SIGMA = 0.4359


def random_words(rng, count):
    return [BitWord(int(v)) for v in rng.integers(0, 2 ** 64, size=count, dtype=np.uint64)]


class TestSubclasses:

    def test_windows_for_32_cells(self):
        sc1, sc2, sc3, sc4 = subclass_windows(32)
        assert (sc1.low, sc1.high, sc1.reference, sc1.pump_in) == (0, 7, 8, True)
        assert (sc2.low, sc2.high, sc2.reference, sc2.pump_in) == (8, 15, 16, True)
        assert (sc3.low, sc3.high, sc3.reference, sc3.pump_in) == (16, 24, 16, False)
        assert (sc4.low, sc4.high, sc4.reference, sc4.pump_in) == (25, 32, 24, False)
        assert [w.count_range for w in (sc1, sc2, sc3, sc4)] == [(1, 8), (1, 8), (0, 8), (1, 8)]

    @pytest.mark.parametrize("p, expected", [(0, 0), (7, 0), (8, 1), (15, 1), (16, 2), (24, 2), (25, 3), (32, 3)])
    def test_stage1_inclusive(self, p, expected):
        assert adc_stage1(SlLevel(p, 32)) == SubClass(expected)

    def test_stage1_floor_moves_three_quarters_to_sc4(self):
        assert adc_stage1(SlLevel(24, 32), "floor") == SubClass(3)
        assert subclass_windows(32, "floor")[3].count_range == (0, 8)

    def test_subclass_names(self):
        assert [SubClass(i).name for i in range(4)] == ["SC1", "SC2", "SC3", "SC4"]

    def test_level_validation(self):
        with pytest.raises(InvalidInputError):
            SlLevel(33, 32)
        with pytest.raises(InvalidInputError):
            subclass_windows(30)


class TestNoiseFree:

    @pytest.mark.parametrize("mode", ["inclusive_sc3", "floor"])
    def test_round_trip_every_level(self, mode):
        model = AdcModel(32, 0.0, boundary_mode=mode)
        assert [convert(SlLevel(p, 32), model) for p in range(33)] == list(range(33))

    def test_convolve_matches_oracle(self, rng):
        model = AdcModel(32, 0.0)
        words_a, words_k = random_words(rng, 10_000), random_words(rng, 10_000)
        mismatches = sum(
            convolve64(a, k, model) != xnor_popcount_oracle(BinaryVector((a,)), BinaryVector((k,)))
            for a, k in zip(words_a, words_k))
        assert mismatches == 0

    def test_stage2_rejects_wrong_subclass(self):
        model = AdcModel(32, 0.0)
        with pytest.raises(InvalidInputError):
            adc_stage2(SlLevel(3, 32), SubClass(2), model)

    def test_decode_rejects_counts_outside_guard_band(self):
        model = AdcModel(32, 0.0, guard_counts=3)
        assert model.legal_counts(SubClass(0)) == (-2, 11)
        with pytest.raises(InvalidInputError):
            adc_decode(SubClass(0), 12, model)

    def test_guard_band_decodes_clamp_to_range(self):
        model = AdcModel(32, 0.0)
        # SC1 count 10 would mean level -2
        assert adc_decode(SubClass(0), 10, model) == 0

    def test_corrupted_table_breaks_round_trip(self):
        model = AdcModel(32, 0.0)
        model.corrupt_decode_table()
        assert [convert(SlLevel(p, 32), model) for p in range(33)] != list(range(33))


class TestNoiseStatistics:

    def test_calibration_hits_target_integer_spread(self):
        draw = calibrate_sigma(SIGMA)
        assert draw < SIGMA
        assert rounded_gaussian_std(draw) == pytest.approx(SIGMA, rel=1e-6)
        assert calibrate_sigma(0.0) == 0.0

    def test_half_row_error_std_per_interior_level(self):
        """
        Half-popcounts 0 and 32 are left out: the decode clamps to [0, 32], so
        errors there are one-sided and the spread shrinks to about 0.3.
        """
        model = AdcModel(32, SIGMA, rng_seed=3)
        errors = count_histograms(model, 10_000)
        for p in range(1, 32):
            assert 0.37 <= errors[p].std() <= 0.50, p
            assert abs(errors[p].mean()) < 0.05, p

    def test_clamped_end_levels_err_inward(self):
        errors = count_histograms(AdcModel(32, SIGMA, rng_seed=3), 10_000)
        assert (errors[0] >= 0).all() and errors[0].mean() > 0.05
        assert (errors[32] <= 0).all() and errors[32].mean() < -0.05
        assert errors[0].std() < 0.37 and errors[32].std() < 0.37

    def test_large_errors_are_rare(self, rng):
        model = AdcModel(32, SIGMA, rng_seed=5)
        words_a, words_k = random_words(rng, 100_000), random_words(rng, 100_000)
        large = sum(abs(convolve64(a, k, model) - popcount(xnor(a, k))) > 3 for a, k in zip(words_a, words_k))
        assert large < 100

    def test_full_word_error_std(self, rng):
        model = AdcModel(32, SIGMA, rng_seed=11)
        words_a, words_k = random_words(rng, 10_000), random_words(rng, 10_000)
        errors = np.array([convolve64(a, k, model) - popcount(xnor(a, k)) for a, k in zip(words_a, words_k)])
        assert errors.std() == pytest.approx(SIGMA * np.sqrt(2), rel=0.15)

    def test_same_seed_same_draws(self, rng):
        words = random_words(rng, 200)
        first = [convolve64(w, words[0], AdcModel(32, SIGMA, rng_seed=9)) for w in words]
        second = [convolve64(w, words[0], AdcModel(32, SIGMA, rng_seed=9)) for w in words]
        assert first == second

    def test_padding_half_is_not_converted(self, rng):
        model = AdcModel(32, 1.0, rng_seed=2)
        errors = []
        for a in random_words(rng, 2000):
            # upper half of both operands is zero padding
            a = BitWord(a.bits & 0xFFFFFFFF)
            k = BitWord(0)
            errors.append(convolve64(a, k, model, active_halves=1) - popcount(xnor(a, k)))
        errors = np.array(errors)
        assert errors.std() == pytest.approx(1.0, rel=0.15)

    def test_active_halves_must_be_one_or_two(self):
        with pytest.raises(InvalidInputError):
            convolve64(BitWord(0), BitWord(0), AdcModel(32, 0.0), active_halves=3)


class TestGeometry:

    def test_single_rwl_doubles_sigma_and_uses_all_columns(self):
        geometry = GeometryConfig(dual_rwl=False)
        model = AdcModel.for_geometry(geometry, AdcConfig(sigma=0.3))
        assert model.active_cells == 64
        assert model.sigma_counts == pytest.approx(0.6)

    def test_single_rwl_noise_free_is_exact(self, rng):
        model = AdcModel.for_geometry(GeometryConfig(dual_rwl=False), AdcConfig(sigma=0.0))
        for a, k in zip(random_words(rng, 500), random_words(rng, 500)):
            assert convolve64(a, k, model) == popcount(xnor(a, k))

    def test_level_cell_mismatch(self):
        with pytest.raises(InvalidInputError):
            adc_stage2(SlLevel(3, 16), SubClass(0), AdcModel(32, 0.0))
