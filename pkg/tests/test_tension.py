import numpy as np
import pytest

from wirehopper.tension import (
    ActionConverter,
    RankDeficient,
    distribute_tensions,
    feasible_wrench_check,
)
from wirehopper.wires import WireGeometry, reference_geometry

from oracles import enumerate_min_norm_tensions, wrench_feasible_by_enumeration

HOME = np.array([0.0, 0.0, 0.513])


@pytest.fixture(scope="module")
def geo():
    return reference_geometry()


def sample_instance(rng):
    q = np.array([rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                  rng.uniform(0.1, 0.926)])
    tau = np.array([rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0),
                    rng.uniform(-320.0, 90.0)])
    return q, tau


def all_up_geometry():
    """Pathological layout: every wire can only retract the slide, so no
    tension vector with f >= f_min can produce zero slide torque."""
    angles = np.deg2rad(60.0 * np.arange(6))
    leg = np.stack([0.05 * np.cos(angles), 0.05 * np.sin(angles),
                    np.zeros(6)], axis=1)
    return WireGeometry(leg_anchors=leg)


class TestDistributeTensions:
    def test_zero_torque_home_pose_uniform_floor(self, geo):
        sol = distribute_tensions(HOME, np.zeros(3), 8.0, geo)
        assert not sol.degraded
        assert np.all(sol.f_ref >= 8.0)                 # floor exact
        assert np.abs(sol.f_ref - 8.0).max() < 1e-12    # all six equal at the floor
        assert np.abs(geo.muscle_jacobian(HOME).T @ sol.f_ref).max() < 1e-12

    def test_matches_enumeration_oracle(self, geo):
        rng = np.random.default_rng(100)
        for _ in range(200):
            q, tau = sample_instance(rng)
            sol = distribute_tensions(q, tau, 8.0, geo)
            G = geo.muscle_jacobian(q)
            f_o, obj_o = enumerate_min_norm_tensions(G, tau, 8.0)
            assert not sol.degraded
            assert sol.f_ref @ sol.f_ref <= obj_o + 1e-8
            assert np.abs(tau + G.T @ sol.f_ref).max() < 1e-9 * max(1.0, np.abs(tau).max())

    def test_kkt_stationarity(self, geo):
        # f = f_min on the active set; f = -G lam / 2 elsewhere
        rng = np.random.default_rng(7)
        for _ in range(50):
            q, tau = sample_instance(rng)
            sol = distribute_tensions(q, tau, 8.0, geo)
            G = geo.muscle_jacobian(q)
            free = sorted(set(range(6)) - sol.active_set)
            for i in sol.active_set:
                assert sol.f_ref[i] == 8.0
            if free:
                Gf = G[free]
                lam, *_ = np.linalg.lstsq(Gf, -2.0 * sol.f_ref[free], rcond=None)
                assert np.abs(sol.f_ref[free] + Gf @ lam / 2.0).max() < 1e-6

    def test_floor_respected_exactly(self, geo):
        rng = np.random.default_rng(3)
        for _ in range(100):
            q, tau = sample_instance(rng)
            sol = distribute_tensions(q, tau, 8.0, geo)
            assert np.all(sol.f_ref >= 8.0)

    def test_rank_deficient_raises(self, geo):
        collinear = WireGeometry(
            body_anchors=np.tile(np.array([[0.0, 0.0, -0.157]]), (6, 1)),
            leg_anchors=np.tile(np.array([[0.0, 0.0, 0.0]]), (6, 1)),
        )
        with pytest.raises(RankDeficient):
            distribute_tensions(HOME, np.zeros(3), 8.0, collinear)

    def test_degraded_fallback(self):
        bad = all_up_geometry()
        sol = distribute_tensions(HOME, np.zeros(3), 8.0, bad)
        assert sol.degraded
        assert np.all(sol.f_ref >= 8.0)
        # stage-1 optimality: projected gradient of the torque residual is
        # zero on free wires, non-negative at the floor
        G = bad.muscle_jacobian(HOME)
        grad = 2.0 * G @ sol.residual_torque
        for i in range(6):
            if sol.f_ref[i] > 8.0 + 1e-9:
                assert abs(grad[i]) < 1e-6
            else:
                assert grad[i] > -1e-6

    def test_round_trip_with_torque_map(self, geo):
        rng = np.random.default_rng(17)
        for _ in range(50):
            q, tau = sample_instance(rng)
            sol = distribute_tensions(q, tau, 8.0, geo)
            tau_back = geo.torque_from_tensions(q, sol.f_ref)
            assert np.abs(tau_back - tau).max() < 1e-9 * max(1.0, np.abs(tau).max())


class TestProperties:
    def test_scaling_covariance_zero_floor(self, geo):
        rng = np.random.default_rng(23)
        for _ in range(30):
            q, tau = sample_instance(rng)
            f1 = distribute_tensions(q, tau, 0.0, geo).f_ref
            f2 = distribute_tensions(q, 2.0 * tau, 0.0, geo).f_ref
            assert np.abs(f2 - 2.0 * f1).max() < 1e-7 * max(1.0, np.abs(f1).max())

    def test_continuity_away_from_active_set_changes(self, geo):
        q = HOME
        tau0 = np.array([10.0, -5.0, -100.0])
        f0 = distribute_tensions(q, tau0, 8.0, geo).f_ref
        for eps in (1e-6, 1e-4):
            f_eps = distribute_tensions(q, tau0 + np.array([eps, 0, 0]), 8.0, geo).f_ref
            assert np.abs(f_eps - f0).max() < 50.0 * eps + 1e-9

    def test_warm_start_does_not_change_answers(self, geo):
        rng = np.random.default_rng(31)
        conv = ActionConverter(geo)
        for _ in range(100):
            q, tau = sample_instance(rng)
            warm = conv.convert(q, tau)
            cold = distribute_tensions(q, tau, 8.0, geo)
            assert abs(warm.f_ref @ warm.f_ref - cold.f_ref @ cold.f_ref) < 1e-8

    def test_over_tension_flag(self, geo):
        sol = distribute_tensions(HOME, np.array([0.0, 0.0, -320.0]), 8.0, geo)
        assert not sol.degraded
        assert sol.over_tension == bool(np.any(sol.f_ref > 230.0))


class TestFeasibleWrenchCheck:
    def test_zero_torque_feasible_everywhere(self, geo):
        rng = np.random.default_rng(41)
        for _ in range(20):
            q, _ = sample_instance(rng)
            assert feasible_wrench_check(q, np.zeros(3), 8.0, geo)

    def test_huge_magnitude_still_feasible(self, geo):
        # bounded only below and rank 3: magnitude alone never infeasible
        assert feasible_wrench_check(HOME, np.array([0.0, 0.0, -1e6]), 8.0, geo)
        assert feasible_wrench_check(HOME, np.array([1e6, 0.0, 0.0]), 8.0, geo)

    def test_torque_limit_corner_matches_oracle(self, geo):
        tau = np.array([50.0, 50.0, 90.0])
        G = geo.muscle_jacobian(HOME)
        assert feasible_wrench_check(HOME, tau, 8.0, geo) == \
            wrench_feasible_by_enumeration(G, tau, 8.0)

    def test_infeasible_geometry_detected(self):
        bad = all_up_geometry()
        assert not feasible_wrench_check(HOME, np.zeros(3), 8.0, bad)
