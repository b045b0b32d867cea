import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binconv.codec import (
    BinDistribution,
    Binning,
    CbeVector,
    argmax_bin,
    decode,
    encode,
    encode_many,
    mean_scale,
    sample_bins,
    valid_sequence_log_probs,
    valid_sequence_log_probs_from_logits,
)

from oracles import all_patterns_mass, valid_sequence_probs_bruteforce

FIG3 = [0.4, 0.9, 0.2]


class TestMeanScale:
    def test_values(self):
        assert mean_scale([1, -2, 3]).s == 2.0
        assert mean_scale([0, 0, 0]).s == 1.0
        assert mean_scale([5]).s == 5.0

    def test_empty(self):
        with pytest.raises(ValueError, match="empty context"):
            mean_scale([])

    @given(
        st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=30),
        st.floats(0.01, 100.0),
        st.sampled_from([-1.0, 1.0]),
    )
    def test_positively_homogeneous(self, xs, c, sign):
        x = np.array(xs)
        if np.mean(np.abs(x)) == 0:
            return
        c = c * sign
        assert mean_scale(c * x).s == pytest.approx(abs(c) * mean_scale(x).s, rel=1e-12)


class TestBinning:
    def test_invalid(self):
        with pytest.raises(ValueError):
            Binning(1.0, 1.0, 4)
        with pytest.raises(ValueError):
            Binning(0.0, 1.0, 0)

    def test_edges(self):
        b = Binning(0, 4, 4)
        assert b.width == 1.0
        np.testing.assert_array_equal(b.edges, [0, 1, 2, 3, 4])


class TestEncodeDecode:
    def test_figure_example(self):
        np.testing.assert_array_equal(encode(2.5, Binning(0, 4, 4)).bits, [1, 1, 1, 0])
        assert decode(3, Binning(0, 4, 4)) == 2.5

    def test_below_and_above_range(self):
        assert encode(-7, Binning(-5, 5, 1000)).m == 0
        np.testing.assert_array_equal(encode(4.0, Binning(0, 4, 4)).bits, [1, 1, 1, 1])
        assert encode(1e9, Binning(0, 4, 4)).m == 4

    def test_decode_clamp_and_top(self):
        assert decode(0, Binning(-5, 5, 1000)) == -5.0
        assert decode(4, Binning(0, 4, 4)) == 3.5
        with pytest.raises(ValueError):
            decode(5, Binning(0, 4, 4))
        with pytest.raises(ValueError):
            decode(-1, Binning(0, 4, 4))

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            encode(float("nan"), Binning())
        with pytest.raises(ValueError):
            encode(float("inf"), Binning())

    def test_edge_value_sets_its_bit(self):
        b = Binning(0, 4, 4)
        assert encode(2.0, b).m == 3
        assert encode(np.nextafter(2.0, -1), b).m == 2

    def test_encode_many_matches_scalar(self):
        b = Binning(-5, 5, 50)
        x = np.linspace(-6, 6, 97)
        many = encode_many(x, b)
        for xi, row in zip(x, many):
            np.testing.assert_array_equal(row, encode(xi, b).bits)

    @given(st.floats(-5, 5, exclude_max=True, allow_nan=False))
    def test_monotone_and_round_trip(self, x):
        b = Binning()
        v = encode(x, b)
        assert np.all(np.diff(v.bits) <= 0)
        assert v.m == int(v.bits.sum())
        assert abs(decode(v.m, b) - x) <= b.width / 2 + 1e-12

    def test_from_count(self):
        np.testing.assert_array_equal(CbeVector.from_count(2, 4).bits, [1, 1, 0, 0])
        with pytest.raises(ValueError):
            CbeVector.from_count(5, 4)


class TestValidSequenceProbs:
    def test_figure3(self):
        dist = valid_sequence_log_probs(FIG3)
        assert np.exp(dist.log_z) == pytest.approx(0.44, abs=1e-12)
        np.testing.assert_allclose(dist.probs, [0.048 / 0.44, 0.032 / 0.44, 0.288 / 0.44, 0.072 / 0.44], atol=1e-12)
        np.testing.assert_allclose(dist.probs, [0.109, 0.073, 0.654, 0.164], atol=1e-3)
        assert argmax_bin(dist) == 2

    def test_uniform(self):
        dist = valid_sequence_log_probs([0.5, 0.5, 0.5])
        np.testing.assert_allclose(dist.probs, 0.25, atol=1e-15)
        assert argmax_bin(dist) == 0

    def test_all_near_one(self):
        assert argmax_bin(valid_sequence_log_probs(np.full(10, 1 - 1e-6))) == 10

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            valid_sequence_log_probs([0.5, 1.1])
        with pytest.raises(ValueError):
            valid_sequence_log_probs([-0.01])
        valid_sequence_log_probs([1 + 5e-10, -5e-10])

    def test_oracle_product_form(self):
        # the product form is a probability over all 2**D patterns
        assert all_patterns_mass([0.3, 0.8, 0.1, 0.6]) == pytest.approx(1.0, abs=1e-14)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            D = int(rng.integers(1, 13))
            p = rng.random(D)
            want, _ = valid_sequence_probs_bruteforce(p)
            got = valid_sequence_log_probs(p).probs
            assert np.max(np.abs(got - want)) < 1e-12

    def test_logit_path_agrees(self):
        rng = np.random.default_rng(3)
        z = rng.normal(0, 3, 40)
        a = valid_sequence_log_probs(1 / (1 + np.exp(-z)))
        b = valid_sequence_log_probs_from_logits(z)
        np.testing.assert_allclose(a.log_probs, b.log_probs, atol=1e-10)

    @settings(max_examples=60)
    @given(st.lists(st.sampled_from([0.0, 1.0, 0.5, 1e-300, 0.999999]) | st.floats(0, 1), min_size=1, max_size=200))
    def test_normalized(self, p):
        dist = valid_sequence_log_probs(p)
        assert np.all(np.isfinite(dist.log_probs))
        assert abs(dist.probs.sum() - 1) < 1e-9

    @given(st.floats(-50, 50))
    def test_argmax_shift_invariant(self, c):
        dist = valid_sequence_log_probs([0.3, 0.7, 0.7, 0.2, 0.9])
        shifted = BinDistribution(dist.log_probs + c, dist.log_z)
        assert argmax_bin(shifted) == argmax_bin(dist)


class TestSampling:
    def test_point_mass(self):
        lp = np.full(4, -np.inf)
        lp[2] = 0.0
        draws = sample_bins(BinDistribution(lp), np.random.default_rng(0), 500)
        assert np.all(draws == 2)

    def test_figure3_frequency(self):
        dist = valid_sequence_log_probs(FIG3)
        draws = sample_bins(dist, np.random.default_rng(11), 100_000)
        assert abs(np.mean(draws == 2) - 0.288 / 0.44) < 0.01

    def test_seeded(self):
        dist = valid_sequence_log_probs(FIG3)
        a = sample_bins(dist, np.random.default_rng(5), 50)
        b = sample_bins(dist, np.random.default_rng(5), 50)
        np.testing.assert_array_equal(a, b)

    def test_offset(self):
        lp = np.log(np.array([0.0, 1.0, 0.0]) + 1e-300)
        dist = BinDistribution(lp, 0.0, m_offset=1)
        assert argmax_bin(dist) == 2
        assert np.all(sample_bins(dist, np.random.default_rng(0), 10) == 2)

    def test_n_must_be_positive(self):
        with pytest.raises(ValueError):
            sample_bins(valid_sequence_log_probs(FIG3), np.random.default_rng(0), 0)
