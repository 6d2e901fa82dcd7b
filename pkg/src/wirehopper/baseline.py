"""Raibert-style stance/flight controller used as the learned policies' rival.

Stance: PD on the body tilt through the gimbal (the braced leg transmits the
reaction) plus an energy-shaping slide law that pumps the vertical energy
toward a target. Flight: the slide holds a retracted clearance position and
the gimbal points the foot toward a velocity-proportional landing spot.

The controller consumes state-converter estimates (not simulator truth), so
its joint-velocity dependence degrades under wire-length noise exactly like
the velocity-fed learned policy does. Body height is dead-reckoned from the
velocity estimate, the way a visual-odometry stack would supply it.

Gains were produced by the committed grid search in tune_basic_gains (see
data/basic_certificate.json for the certifying run).
"""

from dataclasses import dataclass, replace
import numpy as np

from .dynamics import ContactReport
from .env import TAU_MAX, TAU_MIN
from .estimation import EstimatedState


@dataclass
class BasicGains:
    kp_posture: float = 60.0
    kd_posture: float = 8.0
    k_energy: float = 4.0
    E_target: float = 95.0
    k_raibert: float = 0.17
    q_s_flight: float = 0.65
    kp_slide: float = 900.0
    kd_slide: float = 90.0
    # extension bias proportional to the energy deficit; the pure shaping law
    # tau = -k q_dot (E - E*) has a fixed point at rest and cannot start a hop
    k_push: float = 900.0
    # stop extending before the slide reaches its range bound (liftoff is
    # imminent there and overrunning it ends the episode)
    slide_ext_stop: float = 0.2


@dataclass
class PhaseState:
    stance: bool = True
    debounce: int = 0


class BasicController:
    """Stance/flight state machine; one instance per episode."""

    DEBOUNCE_TICKS = 2

    def __init__(self, gains: BasicGains | None = None, total_mass=10.3,
                 leg_mass=0.5, gravity=9.81, control_dt=0.01,
                 standing_height=0.657, slide_depth_offset=1.026):
        self.gains = gains or BasicGains()
        self.total_mass = total_mass
        self.leg_mass = leg_mass
        self.gravity = gravity
        self.dt = control_dt
        self.standing_height = standing_height
        self.slide_depth_offset = slide_depth_offset
        self.phase = PhaseState()
        self._p_z = standing_height

    def reset(self):
        self.phase = PhaseState()
        self._p_z = self.standing_height

    def update_phase(self, rep: ContactReport):
        """Debounced stance/flight transitions on the landing-leg flag."""
        flag = rep.landing_in_contact
        if flag != self.phase.stance:
            self.phase.debounce += 1
            if self.phase.debounce >= self.DEBOUNCE_TICKS:
                self.phase = PhaseState(stance=flag, debounce=0)
        else:
            self.phase.debounce = 0
        return self.phase

    def act(self, est: EstimatedState, rep: ContactReport):
        """Returns the commanded joint torque, clamped to the actuator box."""
        g = self.gains
        self.update_phase(rep)
        self._p_z += float(est.p_dot[2]) * self.dt  # dead-reckoned height

        R = est.R
        z_b = R[:, 2]
        a_r = R[:, 0]
        a_p_body = np.array([0.0, np.cos(est.q[0]), np.sin(est.q[0])])
        a_p = R @ a_p_body

        tau = np.zeros(3)
        if self.phase.stance:
            # level the body: torque about the tilt axis, reacted through the leg
            tilt_axis = np.cross(z_b, np.array([0.0, 0.0, 1.0]))
            body_torque = g.kp_posture * tilt_axis - g.kd_posture * est.omega
            tau[0] = -body_torque @ a_r
            tau[1] = -body_torque @ a_p
            E = (0.5 * self.total_mass * est.p_dot[2] ** 2
                 + self.total_mass * self.gravity * self._p_z
                 + 0.5 * self.leg_mass * est.q_dot[2] ** 2)
            tau_s = (-g.k_energy * est.q_dot[2] * (E - g.E_target)
                     - g.k_push * max(0.0, 1.0 - E / g.E_target))
            if tau_s < 0.0:  # extension: fade to zero at the stroke stop
                tau_s *= np.clip((est.q[2] - g.slide_ext_stop) / 0.05, 0.0, 1.0)
            tau[2] = tau_s
        else:
            # foot placement proportional to horizontal velocity (body frame)
            v_b = R.T @ est.p_dot
            depth = max(self.slide_depth_offset - g.q_s_flight, 0.05)
            x_des = g.k_raibert * v_b[0]
            y_des = g.k_raibert * v_b[1]
            q_p_des = -np.arcsin(np.clip(x_des / depth, -0.5, 0.5))
            q_r_des = np.arcsin(np.clip(y_des / (depth * np.cos(q_p_des)), -0.5, 0.5))
            tau[0] = g.kp_posture * (q_r_des - est.q[0]) - g.kd_posture * est.q_dot[0]
            tau[1] = g.kp_posture * (q_p_des - est.q[1]) - g.kd_posture * est.q_dot[1]
            tau[2] = g.kp_slide * (g.q_s_flight - est.q[2]) - g.kd_slide * est.q_dot[2]
        return np.clip(tau, TAU_MIN, TAU_MAX)


def tune_basic_gains(env_factory, seeds=(0,), grid=None, max_ticks=2000):
    """Coarse grid search maximizing survival ticks (tie-break: jump count).

    env_factory() must build a fresh noiseless environment. Returns
    (best_gains, report) where report rows are (gains, mean_survival,
    mean_jumps).
    """
    from .harness import run_episode_with_controller  # local: avoid cycle

    if grid is None:
        grid = [
            replace(BasicGains(), k_energy=k_e, E_target=E_t,
                    kp_posture=kp, k_raibert=kr)
            for k_e in (60.0, 120.0, 240.0)
            for E_t in (80.0, 95.0, 115.0)
            for kp in (40.0, 60.0, 90.0)
            for kr in (0.1, 0.17, 0.25)
        ]
    rows = []
    best = None
    for gains in grid:
        survivals, jumps = [], []
        for seed in seeds:
            env = env_factory()
            controller = BasicController(gains, control_dt=env.sim_cfg.control_dt,
                                         standing_height=env.sim_cfg.standing_height,
                                         slide_depth_offset=env.sim_cfg.slide_depth_offset)
            result = run_episode_with_controller(controller, env, seed,
                                                 max_ticks=max_ticks)
            survivals.append(result.survival_steps)
            jumps.append(result.n_jumps)
        row = (gains, float(np.mean(survivals)), float(np.mean(jumps)))
        rows.append(row)
        if best is None or (row[1], row[2]) > (best[1], best[2]):
            best = row
    return best[0], rows
