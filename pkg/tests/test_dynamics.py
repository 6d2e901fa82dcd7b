import numpy as np
import pytest

from wirehopper.dynamics import (
    NonFiniteState,
    RobotState,
    SimConfig,
    Simulator,
    contacts,
    forward_kinematics,
    standing_state,
    step,
)
from wirehopper.rotations import rot_x

from oracles import central_difference_jacobian


@pytest.fixture
def cfg():
    return SimConfig()


def flight_state(rng, cfg, height=30.0):
    """Random in-joint-box state high above the floor (no contact within 1 s)."""
    return RobotState(
        p=np.array([0.0, 0.0, height]),
        R=np.eye(3),
        p_dot=rng.normal(0.0, 1.0, 3),
        omega=rng.normal(0.0, 0.3, 3),
        q=np.array([rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                    rng.uniform(0.3, 0.7)]),
        q_dot=rng.normal(0.0, 0.3, 3),
    )


class TestStep:
    def test_free_fall_velocity(self, cfg):
        st = RobotState(p=np.array([0.0, 0.0, 1.0]), R=np.eye(3),
                        p_dot=np.zeros(3), omega=np.zeros(3),
                        q=np.array([0.0, 0.0, 0.513]), q_dot=np.zeros(3))
        sim = Simulator(cfg, st)
        for _ in range(10):
            sim.substep(np.zeros(3), np.zeros(3))
        # 0.01 s of free fall
        assert sim.state.p_dot[2] == pytest.approx(-cfg.gravity * 0.01, abs=1e-12)
        # free fall is uniform: no joint acceleration
        assert np.abs(sim.state.q_dot).max() < 1e-12

    def test_energy_drift_under_one_percent(self, cfg):
        rng = np.random.default_rng(7)
        for _ in range(5):
            sim = Simulator(cfg, flight_state(rng, cfg))
            e0 = sim.mechanical_energy()
            for _ in range(1000):
                sim.substep(np.zeros(3), np.zeros(3))
            assert contacts(sim.state, cfg).leg_tip_height > 0.0  # stayed airborne
            drift = abs(sim.mechanical_energy() - e0) / abs(e0)
            assert drift < 0.01

    def test_penalty_spring_force(self, cfg):
        # leg tip penetrating 1 cm at rest: upward force = stiffness * 0.01;
        # p_z chosen so only the tip is below the floor
        st = RobotState(p=np.array([0.0, 0.0, 1.16]), R=np.eye(3),
                        p_dot=np.zeros(3), omega=np.zeros(3),
                        q=np.array([0.0, 0.0, 0.0]), q_dot=np.zeros(3))
        tip, landing, _ = forward_kinematics(st.q, st.p, st.R, cfg)
        assert landing[:, 2].min() > 0.0
        assert tip[2] == pytest.approx(-0.01, abs=1e-12)
        sim = Simulator(cfg, st, use_numba=False)
        fr = sim._pose_frame()
        from wirehopper.dynamics import _VelTerms
        Q = np.zeros(9)
        sim._add_contact_forces(Q, fr, _VelTerms(fr, st), st)
        assert Q[2] == pytest.approx(cfg.contact_stiffness * 0.01, rel=1e-12)

    def test_nonfinite_state_raises(self, cfg):
        st = standing_state(cfg)
        st.p_dot[0] = np.nan
        with pytest.raises(NonFiniteState):
            step(st, np.zeros(3), np.zeros(3), cfg)

    def test_functional_step_matches_simulator(self, cfg):
        rng = np.random.default_rng(3)
        st = flight_state(rng, cfg)
        out = step(st, np.array([1.0, 2.0, -5.0]), np.array([1.0, 0.0, 0.0]), cfg)
        sim = Simulator(cfg, st)
        sim.substep(np.array([1.0, 2.0, -5.0]), np.array([1.0, 0.0, 0.0]))
        assert np.allclose(out.p, sim.state.p, atol=0.0)
        assert np.allclose(out.q_dot, sim.state.q_dot, atol=0.0)


class TestInvariants:
    def test_free_flight_momentum_per_step(self, cfg):
        rng = np.random.default_rng(11)
        for _ in range(3):
            sim = Simulator(cfg, flight_state(rng, cfg))
            worst = 0.0
            for _ in range(300):
                before = sim.linear_momentum()
                sim.substep(np.zeros(3), np.zeros(3))
                after = sim.linear_momentum()
                worst = max(worst, np.abs(after[:2] - before[:2]).max())
            assert worst < 1e-9

    def test_rotation_orthonormal_every_step(self, cfg):
        rng = np.random.default_rng(5)
        sim = Simulator(cfg, flight_state(rng, cfg, height=3.0))
        worst = 0.0
        for _ in range(500):
            sim.substep(np.array([2.0, -1.0, -40.0]), np.zeros(3))
            err = np.abs(sim.state.R.T @ sim.state.R - np.eye(3)).max()
            worst = max(worst, err)
        assert worst < 1e-9

    def test_contact_force_never_pulls_down(self, cfg):
        # drop onto the floor and check normal force stays non-negative
        st = standing_state(cfg)
        st.p[2] += 0.3
        sim = Simulator(cfg, st, use_numba=False)
        from wirehopper.dynamics import _VelTerms
        for _ in range(1500):
            sim.substep(np.zeros(3), np.zeros(3))
            fr = sim._pose_frame()
            Q = np.zeros(9)
            sim._add_contact_forces(Q, fr, _VelTerms(fr, sim.state), sim.state)
            rep = contacts(sim.state, cfg)
            if not rep.leg_in_contact and not rep.landing_in_contact:
                assert np.abs(Q).max() == 0.0

    def test_determinism(self, cfg):
        rng = np.random.default_rng(9)
        st = flight_state(rng, cfg, height=1.2)
        simA = Simulator(cfg, st)
        simB = Simulator(cfg, st)
        for _ in range(500):
            simA.substep(np.array([1.0, -1.0, -20.0]), np.array([0.0, 1.0, 0.0]))
            simB.substep(np.array([1.0, -1.0, -20.0]), np.array([0.0, 1.0, 0.0]))
        assert np.array_equal(simA.state.p, simB.state.p)
        assert np.array_equal(simA.state.R, simB.state.R)
        assert np.array_equal(simA.state.q_dot, simB.state.q_dot)

    def test_numba_matches_reference(self, cfg):
        rng = np.random.default_rng(13)
        st = flight_state(rng, cfg, height=1.0)
        simA = Simulator(cfg, st, use_numba=True)
        simB = Simulator(cfg, st, use_numba=False)
        for _ in range(300):
            simA.substep(np.array([0.5, 0.5, -50.0]), np.zeros(3))
            simB.substep(np.array([0.5, 0.5, -50.0]), np.zeros(3))
        assert np.abs(simA.state.p - simB.state.p).max() < 1e-10
        assert np.abs(simA.state.q - simB.state.q).max() < 1e-10
        assert np.abs(simA.state.p_dot - simB.state.p_dot).max() < 1e-9


class TestContacts:
    def test_standing_contact_flags(self, cfg):
        sim = Simulator(cfg, standing_state(cfg))
        for _ in range(3000):
            sim.substep(np.zeros(3), np.zeros(3))
        rep = contacts(sim.state, cfg)
        assert abs(rep.leg_tip_height) < 2e-3
        assert rep.landing_in_contact

    def test_airborne_flags_false(self, cfg):
        st = standing_state(cfg)
        st.p[2] += 1.0
        rep = contacts(st, cfg)
        assert not rep.leg_in_contact
        assert not rep.landing_in_contact
        assert rep.leg_tip_height > 0.9

    def test_leg_tilt_orthogonal(self, cfg):
        st = standing_state(cfg)
        st.q[0] = np.pi / 2
        rep = contacts(st, cfg)
        assert (rep.leg_rotation @ np.array([0.0, 0.0, 1.0]))[2] == pytest.approx(0.0, abs=1e-12)


class TestForwardKinematics:
    def test_straight_leg_geometric_oracle(self, cfg):
        # independent geometry: with q_r=q_p=0 the tip hangs straight below
        # the gimbal by (slide_depth_offset - q_s)
        for q_s in (0.1, 0.5, 0.926):
            h = 2.0
            tip, _, R_leg = forward_kinematics(
                np.array([0.0, 0.0, q_s]), np.array([0.0, 0.0, h]), np.eye(3), cfg)
            expected_z = h + cfg.gimbal_offset[2] - (cfg.slide_depth_offset - q_s)
            assert tip[0] == pytest.approx(0.0, abs=1e-15)
            assert tip[1] == pytest.approx(0.0, abs=1e-15)
            assert tip[2] == pytest.approx(expected_z, abs=1e-12)
            assert np.allclose(R_leg, np.eye(3))

    def test_roll_moves_tip_in_yz_plane(self, cfg):
        tip0, _, _ = forward_kinematics(np.array([0.0, 0.0, 0.5]), cfg=cfg)
        tip, _, R_leg = forward_kinematics(np.array([np.pi / 2, 0.0, 0.5]), cfg=cfg)
        assert tip[0] == pytest.approx(tip0[0], abs=1e-12)  # pure y-z displacement
        assert abs(tip[1] - tip0[1]) > 0.1
        assert np.allclose(R_leg, rot_x(np.pi / 2))

    def test_tip_jacobian_matches_finite_difference(self, cfg):
        rng = np.random.default_rng(21)
        for _ in range(10):
            q = np.array([rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6),
                          rng.uniform(0.15, 0.9)])
            J_fd = central_difference_jacobian(
                lambda qq: forward_kinematics(qq, cfg=cfg)[0], q)
            # analytic columns via the simulator's point jacobian
            st = RobotState(p=np.zeros(3), R=np.eye(3), p_dot=np.zeros(3),
                            omega=np.zeros(3), q=q, q_dot=np.zeros(3))
            sim = Simulator(cfg, st, use_numba=False)
            fr = sim._pose_frame()
            from wirehopper.dynamics import _leg_point_jacobian
            rho_tip = np.array([0.0, 0.0, q[2] - cfg.slide_depth_offset])
            J = _leg_point_jacobian(rho_tip, fr.a_r, fr.a_p, fr.R_leg, fr.r_g)[:, 6:9]
            assert np.abs(J - J_fd).max() < 1e-6
