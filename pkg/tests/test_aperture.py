import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from rhsslam.aperture import (ApertureGeometry, Beam, HolographicPattern, PhaseOnlyPattern,
                              conjugate_phases, feed_phase_vector, overall_gain,
                              phased_array_gain, phased_element_count, snr, steering_vector)
from rhsslam.errors import ZeroReceivePattern

LAM = 0.0124


def random_geometry(rng, m, ns=1.2):
    pos = np.column_stack([np.sort(rng.uniform(-0.05, 0.05, m)) + np.arange(m) * 1e-3,
                           rng.uniform(-0.01, 0.01, m)])
    return ApertureGeometry(pos, rng.uniform(-0.05, 0.05, 2), LAM, ns)


class TestSteering:
    def test_broadside_is_all_ones(self):
        g = ApertureGeometry.uniform_linear(7, LAM)
        assert np.allclose(steering_vector(g, 0.0), 1.0, atol=0)

    def test_quarter_wave_pair_at_endfire(self):
        g = ApertureGeometry(np.array([[0.0, 0.0], [LAM / 4, 0.0]]), np.zeros(2), LAM)
        a = steering_vector(g, np.pi / 2)
        assert np.angle(a[1] / a[0]) == pytest.approx(np.pi / 2, abs=1e-12)

    def test_default_spacing_is_quarter_wave(self):
        g = ApertureGeometry.uniform_linear(5, LAM)
        assert np.diff(g.element_positions[:, 0]) == pytest.approx(np.full(4, LAM / 4))

    @given(az=st.floats(-np.pi, np.pi), seed=st.integers(0, 2**16))
    @settings(max_examples=40, deadline=None)
    def test_matches_oracle_and_unit_modulus(self, az, seed):
        g = random_geometry(np.random.default_rng(seed), 6)
        a = steering_vector(g, az)
        assert np.allclose(np.abs(a), 1.0)
        assert np.allclose(a, oracles.steering(g.element_positions, LAM, az), atol=1e-12)

    def test_vectorized_over_azimuths(self):
        g = ApertureGeometry.uniform_linear(4, LAM)
        az = np.array([-0.3, 0.0, 0.7])
        stacked = np.stack([steering_vector(g, a) for a in az])
        assert np.allclose(steering_vector(g, az), stacked)


class TestFeedPhase:
    def test_colocated_element_is_one(self):
        g = ApertureGeometry.uniform_linear(3, LAM)
        assert feed_phase_vector(g)[0] == pytest.approx(1.0)

    def test_full_wavelength_is_one(self):
        g = ApertureGeometry(np.array([[LAM, 0.0]]), np.zeros(2), LAM, 1.0)
        assert feed_phase_vector(g)[0] == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_distance_oracle(self, seed):
        g = random_geometry(np.random.default_rng(seed), 8, ns=1.7)
        ref = oracles.feed_phase(g.element_positions, g.feed_position, LAM, 1.7)
        assert np.allclose(feed_phase_vector(g), ref, atol=1e-12)

    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            ApertureGeometry(np.zeros((2, 2)), np.zeros(2), LAM)
        with pytest.raises(ValueError):
            ApertureGeometry(np.zeros((1, 2)), np.zeros(2), -1.0)
        with pytest.raises(ValueError):
            ApertureGeometry(np.zeros((1, 2)), np.zeros(2), LAM, 0.5)


class TestGain:
    def test_zero_pattern(self):
        g = ApertureGeometry.uniform_linear(4, LAM)
        z = HolographicPattern(np.zeros(4))
        one = HolographicPattern(np.ones(4), "rx")
        assert overall_gain(z, one, g, g, 0.2) == 0

    def test_single_element_identity(self):
        g = ApertureGeometry(np.zeros((1, 2)), np.zeros(2), LAM)
        p = HolographicPattern(np.ones(1))
        assert overall_gain(p, p, g, g, 0.0) == pytest.approx(1.0)
        assert snr(p, HolographicPattern(np.ones(1), "rx"), g, g, 0.0, 1.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_matrix_product_oracle(self, seed):
        rng = np.random.default_rng(seed)
        gt, gr = random_geometry(rng, 4), random_geometry(rng, 4)
        pt, pr = HolographicPattern(rng.uniform(size=4)), HolographicPattern(rng.uniform(size=4), "rx")
        az = rng.uniform(-1, 1)
        ref = oracles.two_way_gain(pt.psi, pr.psi, gt.element_positions, gr.element_positions,
                                   gt.feed_position, gr.feed_position, LAM, 1.2, az)
        h = overall_gain(pt, pr, gt, gr, az)
        assert abs(h - ref) < 1e-12
        assert snr(pt, pr, gt, gr, az, 0.3) == pytest.approx(oracles.snr(ref, pr.psi, 0.3), rel=1e-12)

    def test_snr_zero_gain_and_zero_rx(self):
        g = ApertureGeometry.uniform_linear(3, LAM)
        rx = HolographicPattern(np.ones(3), "rx")
        assert snr(HolographicPattern(np.zeros(3)), rx, g, g, 0.1, 1.0) == 0
        with pytest.raises(ZeroReceivePattern):
            snr(HolographicPattern(np.ones(3)), HolographicPattern(np.zeros(3), "rx"), g, g, 0.1, 1.0)

    def test_pattern_bounds(self):
        with pytest.raises(ValueError):
            HolographicPattern(np.array([0.5, 1.2]))
        with pytest.raises(ValueError):
            HolographicPattern(np.array([-0.1]))


class TestPhasedArray:
    def test_conjugate_steering_is_coherent(self):
        g = ApertureGeometry.uniform_linear(10, LAM, LAM / 2)
        p = PhaseOnlyPattern(conjugate_phases(g, 0.4))
        assert abs(phased_array_gain(p, g, 0.4)) == pytest.approx(10)

    def test_zero_phase_broadside(self):
        g = ApertureGeometry.uniform_linear(10, LAM, LAM / 2)
        assert abs(phased_array_gain(PhaseOnlyPattern(np.zeros(10)), g, 0.0)) == pytest.approx(10)

    def test_random_phases_vs_summation(self):
        rng = np.random.default_rng(3)
        g = ApertureGeometry.uniform_linear(6, LAM, LAM / 2)
        ph = rng.uniform(-np.pi, np.pi, 6)
        ref = np.sum(oracles.steering(g.element_positions, LAM, 0.3) * np.exp(1j * ph))
        assert phased_array_gain(PhaseOnlyPattern(ph), g, 0.3) == pytest.approx(ref, abs=1e-12)

    def test_cost_equivalent_count(self):
        assert phased_element_count(60, 6) == 10
        assert phased_element_count(20, 6) == 3

    def test_beam_power_split(self):
        g = ApertureGeometry.uniform_linear(10, LAM, LAM / 2)
        p = PhaseOnlyPattern(conjugate_phases(g, 0.0))
        b = Beam.phased(p, p, g, 1.0)
        assert b.tx_power == pytest.approx(1.0)
        assert abs(b.gain(0.0)) == pytest.approx(np.sqrt(0.1) * 10 * 10)


def test_holographic_beam_matches_overall_gain():
    rng = np.random.default_rng(9)
    g = ApertureGeometry.uniform_linear(5, LAM)
    pt, pr = HolographicPattern(rng.uniform(size=5)), HolographicPattern(rng.uniform(size=5), "rx")
    b = Beam.holographic(pt, pr, g, g)
    az = np.linspace(-0.7, 0.7, 9)
    assert np.allclose(b.gain(az), overall_gain(pt, pr, g, g, az), atol=1e-14)
    assert b.noise_gain == pytest.approx(np.sum(pr.psi ** 2))
