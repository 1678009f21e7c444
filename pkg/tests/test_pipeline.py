import numpy as np
import pytest

from rhsslam.config import RunConfig
from rhsslam.pipeline import (Sensor, bank_key, build_scenario, cloud_rmse, make_beams,
                              nearest_errors, optimized_bank, truth_in_vehicle, with_changes)


@pytest.fixture(scope="module")
def sensor(bank_cache):
    return Sensor(RunConfig(), cache_dir=bank_cache)


def test_with_changes_nested():
    cfg = with_changes(RunConfig(), seed=3, slam__registration__cell=0.4)
    assert cfg.seed == 3 and cfg.slam.registration.cell == 0.4
    assert RunConfig().slam.registration.cell != 0.4


def test_bank_key_tracks_geometry():
    a = RunConfig()
    assert bank_key(a) == bank_key(RunConfig())
    assert bank_key(a) != bank_key(with_changes(a, aperture__elements=20))
    assert bank_key(a) == bank_key(with_changes(a, seed=9, mode="phased-array"))


def test_truth_in_vehicle_frame():
    cfg = with_changes(RunConfig(), scenario__obstacles=[[10.0, 0.0]],
                       scenario__waypoints=[[0.0, 0.0], [0.0, 5.0]], scenario__cycles=2)
    sc = build_scenario(cfg)
    assert truth_in_vehicle(sc, 0) == pytest.approx(np.array([[0.0, -10.0]]), abs=1e-12)


def test_cloud_error_metrics():
    truth = np.array([[0.0, 0.0], [10.0, 0.0]])
    assert cloud_rmse(truth, truth) == 0
    assert nearest_errors(np.zeros((0, 2)), truth, cap=5.0).tolist() == [5.0, 5.0]
    assert cloud_rmse([[0.0, 1.0]], truth, cap=20.0) > 1.0


def test_phased_beams_cover_grid():
    cfg = with_changes(RunConfig(), mode="phased-array")
    beams = make_beams(cfg)
    assert len(beams) == 90


def test_bank_cache_round_trip(tmp_path):
    cfg = with_changes(RunConfig(), aperture__elements=4, grid__step_deg=30.0,
                       solver__max_outer=2, solver__restarts=1)
    first = optimized_bank(cfg, tmp_path)
    assert len(list(tmp_path.glob("bank_*.json"))) == 1
    again = optimized_bank(cfg, tmp_path)
    assert [r.margin for r in again] == pytest.approx([r.margin for r in first])


def test_first_cycle_points_near_obstacles(sensor):
    sc = sensor.scenario
    truth = truth_in_vehicle(sc, 1)
    cloud = sensor.cloud(1, seed=0)
    pts = cloud.cartesian(sc.mounts)
    seen = np.linalg.norm(truth, axis=1) <= sc.max_range
    for t in truth[seen]:
        d = np.linalg.norm(pts - t, axis=1)
        k = int(np.argmin(d))
        r_true, a_true = np.hypot(*t), np.arctan2(t[1], t[0])
        r_est, a_est = np.hypot(*pts[k]), np.arctan2(pts[k, 1], pts[k, 0])
        assert abs(r_est - r_true) <= 1.0
        assert abs(np.angle(np.exp(1j * (a_est - a_true)))) <= np.deg2rad(2.0)
