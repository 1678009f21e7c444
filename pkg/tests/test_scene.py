import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rhsslam.aperture import SPEED_OF_LIGHT, ApertureGeometry, Beam, HolographicPattern
from rhsslam.errors import BadSampling
from rhsslam.patterns import ScanGrid
from rhsslam.pointcloud import matched_filter
from rhsslam.scene import (Obstacle, Scenario, dump_signals, echo, load_signals, make_fmcw,
                           synthesize_radar, synthesize_slot, trajectory_from_waypoints,
                           visible_obstacles, wrap_angle)

WF = make_fmcw(24.125e9, 250e6, 10e-6, 250e6)


def iso_beam():
    g = ApertureGeometry(np.zeros((1, 2)), np.zeros(2), WF.wavelength)
    return Beam.holographic(HolographicPattern(np.ones(1)), HolographicPattern(np.ones(1), "rx"), g, g)


def scenario(obstacles, pose=(0.0, 0.0, 0.0), sigma=0.0, cycles=1):
    poses = np.tile(pose, (cycles, 1))
    return Scenario([Obstacle(p, b) for p, b in obstacles], poses, WF, ScanGrid(5.0), sigma, 1.0)


class TestWaveform:
    def test_default_band(self):
        assert WF.bandwidth == 250e6
        assert WF.n_samples == 2500
        assert WF.range_bin == pytest.approx(0.5996, abs=1e-4)

    def test_zero_bandwidth_is_tone(self):
        wf = make_fmcw(24e9, 0.0, 1e-6, 100e6)
        assert np.allclose(np.abs(wf.samples), 1.0)
        assert np.allclose(wf.samples, wf.samples[0])

    def test_phase_slope(self):
        ph = np.unwrap(np.angle(WF.samples))
        f_inst = np.diff(ph) * WF.sample_rate / (2 * np.pi)
        slope = np.polyfit(np.arange(f_inst.size) / WF.sample_rate, f_inst, 1)[0]
        assert slope == pytest.approx(WF.bandwidth / WF.chirp_duration, rel=0.01)

    def test_undersampling_rejected(self):
        with pytest.raises(BadSampling):
            make_fmcw(24e9, 250e6, 10e-6, 100e6)


class TestGeometry:
    def test_obstacle_ahead(self):
        sc = scenario([((30.0, 0.0), 0.5)])
        ((r, az, beta),) = visible_obstacles(sc, 0, 0)
        assert (r, az, beta) == (pytest.approx(30.0), pytest.approx(0.0), 0.5)

    def test_obstacle_behind_excluded(self):
        sc = scenario([((-30.0, 0.0), 0.5)])
        assert visible_obstacles(sc, 0, 0) == []
        assert len(visible_obstacles(sc, 0, 2)) == 1

    @given(x=st.floats(-40, 40), y=st.floats(-40, 40), h=st.floats(-np.pi, np.pi),
           ox=st.floats(-60, 60), oy=st.floats(-60, 60))
    @settings(max_examples=60, deadline=None)
    def test_rotated_vehicle_matches_hand_transform(self, x, y, h, ox, oy):
        sc = scenario([((ox, oy), 1.0)], pose=(x, y, h))
        dx, dy = ox - x, oy - y
        lx = np.cos(h) * dx + np.sin(h) * dy
        ly = -np.sin(h) * dx + np.cos(h) * dy
        rng_true = np.hypot(lx, ly)
        seen = [visible_obstacles(sc, 0, k) for k in range(4)]
        hits = [s for s in seen if s]
        if rng_true == 0 or rng_true > 100:
            assert not hits
            return
        assert len(hits) == 1
        r, az, _ = hits[0][0]
        k = seen.index(hits[0])
        assert r == pytest.approx(rng_true, rel=1e-9, abs=1e-9)
        assert wrap_angle(az + k * np.pi / 2 - np.arctan2(ly, lx)) == pytest.approx(0, abs=1e-9)

    def test_waypoint_trajectory(self):
        poses = trajectory_from_waypoints([(0, 0), (10, 0), (10, 10)], 5)
        assert poses[0] == pytest.approx([0, 0, 0])
        assert poses[-1][:2] == pytest.approx([10, 10])
        assert poses[-1][2] == pytest.approx(np.pi / 2)
        steps = np.linalg.norm(np.diff(poses[:, :2], axis=0), axis=1)
        assert steps[0] == pytest.approx(5.0)


class TestSynthesis:
    def test_no_obstacles_no_noise(self):
        sig = synthesize_slot(scenario([]), 0, 0, 0, iso_beam(), seed=1)
        assert not np.any(sig.samples)

    def test_single_obstacle_peak_lag(self):
        sc = scenario([((30.0, 0.0), 1.0)])
        sig = synthesize_slot(sc, 0, 0, 0, iso_beam(), seed=0)
        prof = matched_filter(sig.samples, WF)
        lag = int(np.argmax(np.abs(prof.values))) - prof.lag0
        assert lag == round(2 * 30.0 / SPEED_OF_LIGHT * WF.sample_rate)
        assert lag == 50

    def test_superposition(self):
        a = scenario([((30.0, 0.0), 1.0)])
        b = scenario([((20.0, 5.0), 0.3)])
        ab = scenario([((30.0, 0.0), 1.0), ((20.0, 5.0), 0.3)])
        beam = iso_beam()
        s = [synthesize_slot(x, 0, 0, 0, beam, 0).samples for x in (a, b, ab)]
        assert np.max(np.abs(s[0] + s[1] - s[2])) < 1e-12

    def test_noise_is_seeded_and_order_free(self):
        sc = scenario([((30.0, 0.0), 1.0)], sigma=0.1)
        beams = [iso_beam()] * 3
        y = synthesize_radar(sc, 0, 0, beams, seed=5)
        y_again = synthesize_radar(sc, 0, 0, beams, seed=5)
        assert np.array_equal(y, y_again)
        for i in (2, 0, 1):
            assert np.allclose(y[i], synthesize_slot(sc, 0, 0, i, beams[i], 5).samples, atol=1e-15)
        assert not np.array_equal(y, synthesize_radar(sc, 0, 0, beams, seed=6))

    def test_noise_variance(self):
        sc = scenario([], sigma=0.2)
        y = synthesize_slot(sc, 0, 0, 0, iso_beam(), 3).samples
        assert np.var(y) == pytest.approx(0.04, rel=0.1)

    def test_echo_amplitude(self):
        sc = scenario([((20.0, 0.0), 2.0)])
        y = echo(sc, visible_obstacles(sc, 0, 0), iso_beam())
        assert np.max(np.abs(y)) == pytest.approx(2.0 / 400)


def test_signal_dump_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 7)) + 1j * rng.standard_normal((3, 7))
    dump_signals(tmp_path / "sig.bin", x, cycle=2)
    raw = np.frombuffer((tmp_path / "sig.bin").read_bytes(), dtype="<f8")
    assert raw[0] == x[0, 0].real and raw[1] == x[0, 0].imag
    assert np.array_equal(load_signals(tmp_path / "sig.bin"), x)
