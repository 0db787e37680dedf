import math
from fractions import Fraction

import numpy as np
import pytest

from oracles import (
    EX_BENCHMARK,
    EX_CAPACITY,
    EX_MI,
    EX_TIMESHARING,
    brute_min_uses,
    random_complex,
)
from stmulticast.capacity import (
    HIGH_SNR_CP2P,
    achievable_fraction,
    as_fraction,
    beamforming_rate,
    benchmark_beamforming_rate,
    best_beamformer,
    build_example,
    high_snr_example,
    min_channel_uses,
    multicast_capacity,
    mutual_information,
    timesharing_rate,
    waterfill_capacity,
)
from stmulticast.errors import ConstraintViolation, InvalidInputError, NumericalFailure
from stmulticast.scheme import ChannelSet


class TestMutualInformation:
    def test_zero_channel(self):
        assert mutual_information(np.zeros((2, 2)), np.eye(2)) == 0.0

    def test_example_users(self):
        ex = build_example(10, 1.0)
        got = [mutual_information(h, 0.5 * np.eye(2)) for h in ex.H_list]
        assert np.allclose(got, EX_MI, rtol=1e-12)

    def test_rejects_indefinite(self):
        with pytest.raises(InvalidInputError):
            mutual_information(np.eye(2), np.diag([1.0, -2.0]))


class TestWaterfill:
    def test_symmetric(self):
        c, cx = waterfill_capacity(np.eye(2), 2.0)
        assert c == pytest.approx(2.0)
        assert np.allclose(cx, np.eye(2))

    def test_weak_mode_switched_off(self):
        c, cx = waterfill_capacity(np.diag([10.0, 0.1]), 1.0)
        assert c == pytest.approx(math.log2(1 + 100.0))
        assert np.allclose(np.trace(cx), 1.0)

    def test_matches_mutual_information(self, rng):
        h = random_complex(rng, (3, 2))
        c, cx = waterfill_capacity(h, 5.0)
        assert mutual_information(h, cx) == pytest.approx(c, rel=1e-12)


class TestExample:
    @pytest.mark.parametrize("cp2p,a2,b2", [(10, 62.0, 1023.0), (2, 2.0, 3.0)])
    def test_gains(self, cp2p, a2, b2):
        ex = build_example(cp2p, 1.0)
        assert ex.alpha2 == pytest.approx(a2, rel=1e-12)
        assert ex.beta2 == pytest.approx(b2, rel=1e-12)
        assert ex.alpha == pytest.approx(math.sqrt(a2))

    @pytest.mark.parametrize("cp2p,P", [(10, 1.0), (3.5, 7.0), (60, 1e6)])
    def test_equal_individual_capacities(self, cp2p, P):
        ex = build_example(cp2p, P)
        assert 2 * math.log2(1 + ex.alpha2 * P / 2) == pytest.approx(cp2p, rel=1e-9)
        assert math.log2(1 + ex.beta2 * P) == pytest.approx(cp2p, rel=1e-9)

    def test_domain(self):
        with pytest.raises(InvalidInputError):
            build_example(0, 1.0)
        with pytest.raises(InvalidInputError):
            build_example(10, -1.0)


class TestMulticastCapacity:
    def test_single_user_waterfill(self):
        res = multicast_capacity([np.eye(2)], 2.0)
        assert res.rate == pytest.approx(2.0)
        assert np.allclose(res.covariance, np.eye(2))

    def test_example(self):
        ex = build_example(10, 1.0)
        res = multicast_capacity(ex)
        assert res.rate == pytest.approx(EX_CAPACITY, abs=1e-6)
        assert res.gap <= 1e-4
        assert np.allclose(res.covariance, 0.5 * np.eye(2), atol=1e-4)

    def test_example_diagonal_grid(self):
        # dense grid over diag(p, 1 - p) never beats the optimizer
        ex = build_example(10, 1.0)
        best = max(min(mutual_information(h, np.diag([p, 1 - p])) for h in ex.H_list)
                   for p in np.linspace(0, 1, 2001))
        assert multicast_capacity(ex).rate >= best - 1e-9
        assert best == pytest.approx(EX_CAPACITY, abs=1e-6)

    def test_accepts_channel_set(self):
        ex = build_example(10, 1.0)
        cs = ChannelSet(ex.H_list, 1.0)
        assert multicast_capacity(cs).rate == pytest.approx(EX_CAPACITY, abs=1e-6)

    def test_feasible_and_consistent(self, rng):
        hs = [random_complex(rng, (2, 3)) for _ in range(3)]
        res = multicast_capacity(hs, 4.0)
        c = res.covariance
        assert np.allclose(c, c.conj().T)
        assert np.linalg.eigvalsh(c).min() > -1e-12
        assert np.trace(c).real <= 4.0 * (1 + 1e-9)
        assert min(mutual_information(h, c) for h in hs) == pytest.approx(res.rate, abs=1e-6)

    def test_high_snr_ratio(self):
        ex = build_example(60, 1e6)
        assert multicast_capacity(ex).rate / ex.C_p2p == pytest.approx(1.0, abs=0.02)

    def test_failure_carries_best(self):
        ex = build_example(10, 1.0)
        with pytest.raises(NumericalFailure) as info:
            multicast_capacity([h for h in ex.H_list[:2]] + [np.array([[1.0, 0.3]])], 1.0,
                               gap=-1.0)
        assert info.value.best is not None and info.value.best.rate > 0

    def test_missing_power(self):
        with pytest.raises(InvalidInputError):
            multicast_capacity([np.eye(2)])


class TestBenchmarks:
    def test_example_benchmark(self):
        ex = build_example(10, 1.0)
        v, rate = best_beamformer(ex)
        assert rate == pytest.approx(EX_BENCHMARK, abs=1e-9)
        # maximizer is a set: user 1 sees gain 62 along every unit vector
        assert beamforming_rate(ex, v) == pytest.approx(rate, abs=1e-12)
        assert beamforming_rate(ex, [1, 1]) == pytest.approx(EX_BENCHMARK, abs=1e-12)
        assert benchmark_beamforming_rate(ex) == pytest.approx(EX_BENCHMARK, abs=1e-9)
        assert rate / EX_CAPACITY == pytest.approx(0.664, abs=5e-4)

    def test_single_user_single_stream(self):
        assert benchmark_beamforming_rate([np.eye(2)], 3.0) == pytest.approx(2.0)

    def test_single_antenna(self):
        assert benchmark_beamforming_rate([[[2.0]], [[1.0]]], 1.0) == pytest.approx(1.0)

    def test_any_beam_is_a_lower_bound(self, rng):
        hs = [random_complex(rng, (1, 3)) for _ in range(3)]
        best = benchmark_beamforming_rate(hs, 2.0)
        for _ in range(200):
            assert beamforming_rate(hs, random_complex(rng, 3), 2.0) <= best + 1e-9

    def test_four_antennas(self, rng):
        hs = [random_complex(rng, (1, 4)) for _ in range(2)]
        best = benchmark_beamforming_rate(hs, 1.0)
        assert best <= multicast_capacity(hs, 1.0).upper_bound + 1e-9

    def test_too_many_antennas(self):
        with pytest.raises(InvalidInputError):
            benchmark_beamforming_rate([np.eye(5)], 1.0)

    def test_timesharing(self):
        ex = build_example(10, 1.0)
        assert timesharing_rate(ex) == pytest.approx(EX_TIMESHARING, rel=1e-12)
        assert timesharing_rate(ex) / EX_CAPACITY == pytest.approx(0.3703, abs=1e-4)
        assert timesharing_rate([np.eye(2)], 2.0) == pytest.approx(2.0)

    def test_high_snr_fractions(self):
        ex = high_snr_example()
        assert ex.C_p2p == HIGH_SNR_CP2P and ex.P == 1e6
        c = multicast_capacity(ex).rate
        assert c == pytest.approx(HIGH_SNR_CP2P - 1, abs=1e-6)
        assert timesharing_rate(ex) / c == pytest.approx(1 / 3, abs=0.01)
        assert benchmark_beamforming_rate(ex) / c == pytest.approx(0.5, abs=0.01)

    def test_unit_gain_reading_converges_slowly(self):
        # unit alpha at P = 1e6: the benchmark fraction is still far from 1/2
        ex = build_example(2 * math.log2(1 + 1e6 / 2), 1e6)
        assert ex.alpha2 == pytest.approx(1.0)
        c = multicast_capacity(ex).rate
        P = ex.P
        closed = min(math.log2(1 + ex.alpha2 * P), math.log2(1 + ex.beta2 * P / 2)) / c
        assert benchmark_beamforming_rate(ex) / c == pytest.approx(closed, rel=1e-9)
        assert closed == pytest.approx(0.5407, abs=1e-4)


class TestFractions:
    def test_gmd_and_jet_examples(self):
        assert achievable_fraction(2, 3, 30, "GMD") == Fraction(9, 10)
        assert achievable_fraction(2, 3, 2, "JET") == Fraction(1, 2)

    def test_limit(self):
        assert achievable_fraction(2, 3, 10 ** 6) > Fraction(999_990, 10 ** 6)

    def test_below_floor(self):
        with pytest.raises(ConstraintViolation):
            achievable_fraction(2, 3, 3, "GMD")

    def test_bad_variant(self):
        with pytest.raises(InvalidInputError):
            achievable_fraction(2, 3, 4, "SVD")

    def test_rows(self):
        ts = as_fraction(EX_TIMESHARING / EX_CAPACITY)
        targets = [Fraction(1, 3), ts, Fraction(1, 2), Fraction(3, 5), Fraction(2, 3),
                   Fraction(3, 4), Fraction(4, 5), Fraction(9, 10)]
        assert [min_channel_uses(2, 3, f, "GMD") for f in targets] == [5, 5, 6, 8, 9, 12, 15, 30]
        assert [min_channel_uses(2, 3, f, "JET") for f in targets] == [2, 2, 2, 3, 3, 4, 5, 10]

    def test_float_targets_snap(self):
        assert min_channel_uses(2, 3, 0.8) == 15
        assert min_channel_uses(2, 3, 0.9) == 30
        assert min_channel_uses(2, 3, "4/5") == 15

    def test_floor(self):
        assert min_channel_uses(2, 3, 1e-9) == 4

    @pytest.mark.parametrize("f", [0, 1, 1.5, -0.2])
    def test_domain(self, f):
        with pytest.raises(InvalidInputError):
            min_channel_uses(2, 3, f)

    def test_against_scan(self):
        for n in (2, 3):
            for K in (2, 3, 4):
                for f in (Fraction(1, 7), Fraction(1, 2), Fraction(5, 6), Fraction(19, 20)):
                    for v in ("GMD", "JET"):
                        assert min_channel_uses(n, K, f, v) == brute_min_uses(n, K, f, v)

    def test_bad_fraction_string(self):
        with pytest.raises(InvalidInputError):
            as_fraction("two thirds")
