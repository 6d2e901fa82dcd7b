"""Reinforcement-learning environment for the jumping task.

Observations are built from the state-converter estimates (EKF joints,
Madgwick orientation, visual-odometry velocity), never from simulator truth;
rewards and termination use truth. Two observation layouts exist: "ours1"
feeds the estimated joint velocities directly, "ours2" replaces them with
the last N_PREV estimated joint angles, which is what buys robustness when
the wire-length measurements vibrate.
"""

from dataclasses import dataclass, field
from enum import Enum
import numpy as np

from .dynamics import SimConfig, Simulator, contacts, standing_state
from .estimation import SensorEmulator, SensorNoise, StateConverter
from .rewards import RewardConfig, RewardInputs, compute_breakdown
from .tension import ActionConverter, DEFAULT_TENSION_FLOOR
from .wires import WireGeometry, reference_geometry

TAU_MIN = np.array([-50.0, -50.0, -320.0])
TAU_MAX = np.array([50.0, 50.0, 90.0])
N_PREV = 6
STEP_LIMIT = 10_000
LEG_TILT_LIMIT = 0.5
EVAL_LENGTH_NOISE_VAR = 0.001
_KF_FLOOR = 1e-6

OBS_DIM = {"ours1": 34, "ours2": 49}


def scale_action(a):
    """Affine map from [-1, 1]^3 to the joint-torque box."""
    a = np.asarray(a, dtype=float)
    return TAU_MIN + (TAU_MAX - TAU_MIN) * (a + 1.0) / 2.0


def unscale_action(tau):
    """Inverse of scale_action, clipped to [-1, 1]."""
    tau = np.asarray(tau, dtype=float)
    return np.clip(2.0 * (tau - TAU_MIN) / (TAU_MAX - TAU_MIN) - 1.0, -1.0, 1.0)


@dataclass
class NoiseConfig:
    """Noise and randomization settings; all second moments are variances."""

    obs_var_q_quat: float = 0.05
    obs_var_qdot_rel: float = 0.05
    obs_var_pdot_rel: float = 0.1
    friction_base: float = 0.8
    friction_var: float = 0.1
    friction_walk_var: float = 0.01
    init_pose_var: float = 0.03
    ext_force_var: float = 10.0
    length_noise_var: float = 0.0
    accel_var: float = 0.0
    gyro_var: float = 0.0
    vo_var: float = 0.0

    @classmethod
    def training(cls):
        return cls()

    @classmethod
    def clean(cls):
        return cls(obs_var_q_quat=0.0, obs_var_qdot_rel=0.0, obs_var_pdot_rel=0.0,
                   friction_base=1.0, friction_var=0.0, friction_walk_var=0.0,
                   init_pose_var=0.0, ext_force_var=0.0)

    @classmethod
    def muscle_noise(cls, variance=EVAL_LENGTH_NOISE_VAR):
        out = cls.clean()
        out.length_noise_var = variance
        return out


class TerminationReason(Enum):
    STEP_LIMIT = "step_limit"
    JOINT_RANGE = "joint_range"
    LEG_TILT = "leg_tilt"


class SharedSteps:
    """Global environment step counter shared by parallel environments."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0


@dataclass
class Curriculum:
    """c ramps linearly from 0 to 1 over the first half of training."""

    total_steps: float
    shared: SharedSteps = field(default_factory=SharedSteps)

    def value(self):
        if self.total_steps <= 0:
            return 1.0
        return min(1.0, self.shared.count / (0.5 * self.total_steps))

    def advance(self):
        self.shared.count += 1


class JumpingEnv:
    """Single environment instance; one simulator, one belief, one rng."""

    def __init__(self, layout="ours1", sim_cfg: SimConfig | None = None,
                 geometry: WireGeometry | None = None,
                 noise: NoiseConfig | None = None,
                 reward_cfg: RewardConfig | None = None,
                 curriculum: Curriculum | None = None,
                 fixed_c: float = 0.0,
                 f_min: float = DEFAULT_TENSION_FLOOR,
                 seed: int = 0):
        if layout not in OBS_DIM:
            raise ValueError(f"unknown layout {layout!r}")
        self.layout = layout
        self.obs_dim = OBS_DIM[layout]
        self.sim_cfg = sim_cfg or SimConfig()
        self.geometry = geometry or reference_geometry()
        self.noise = noise or NoiseConfig.clean()
        self.reward_cfg = reward_cfg or RewardConfig()
        self.curriculum = curriculum
        self.fixed_c = float(fixed_c)
        self.converter = ActionConverter(self.geometry, f_min)
        self._seed = seed
        self.rng = np.random.default_rng(seed)
        self.sim: Simulator | None = None
        self.tick = 0
        self.last_estimates = None
        self.last_contacts = None
        self.last_breakdown = None
        self.last_info = None

    # -- curriculum -----------------------------------------------------------
    @property
    def c(self):
        if self.curriculum is not None:
            return self.curriculum.value()
        return self.fixed_c

    # -- lifecycle -------------------------------------------------------------
    def reset(self, seed=None):
        """Start a fresh episode. With an explicit seed the episode is exactly
        reproducible; without one the env continues its own random stream
        (training auto-resets must differ from each other)."""
        if seed is not None:
            self._seed = seed
            self.rng = np.random.default_rng(seed)
        c = self.c
        sd = np.sqrt(self.noise.init_pose_var)
        q_r = c * self.rng.normal(0.0, sd) if sd > 0 else 0.0
        q_p = c * self.rng.normal(0.0, sd) if sd > 0 else 0.0
        state = standing_state(self.sim_cfg, q_r=q_r, q_p=q_p)
        self.sim = Simulator(self.sim_cfg, state)
        self.tick = 0
        self.converter.reset()

        self.sensors = SensorEmulator(
            self.geometry,
            SensorNoise(accel_var=self.noise.accel_var,
                        gyro_var=self.noise.gyro_var,
                        length_var=self.noise.length_noise_var,
                        vo_var=self.noise.vo_var),
            self.rng, self.sim_cfg.control_dt, self.sim_cfg.gravity)
        self.state_converter = StateConverter(self.geometry, self.sim_cfg.control_dt)
        self.state_converter.reset(self.sim.state)
        self.sensors.reset(self.sim.state)

        # friction scale per wire; persists through the episode
        base = self.noise.friction_base
        fvar = self.noise.friction_var
        if fvar > 0.0:
            k = np.minimum(base + self.rng.normal(0.0, np.sqrt(fvar), 6), 1.0)
        else:
            k = np.full(6, min(base, 1.0))
        self.k_f = np.clip(k, _KF_FLOOR, 1.0)

        self._ext_force = self._draw_external_force()
        self._tau_hist = np.zeros((N_PREV, 3))

        imu, wire, vo = self.sensors.sample(self.sim.state, np.zeros(3))
        est = self.state_converter.step(imu, wire, vo)
        self.last_estimates = est
        self.last_contacts = contacts(self.sim.state, self.sim_cfg)
        q_noised = self._noise_q(est.q)
        self._q_hist = np.tile(q_noised, (N_PREV, 1))
        obs = self._assemble(est, q_noised)
        self.last_breakdown = None
        self.last_info = None
        return obs

    def _draw_external_force(self):
        var = self.noise.ext_force_var
        c = self.c
        if var <= 0.0 or c <= 0.0:
            return np.zeros(3)
        return c * self.rng.normal(0.0, np.sqrt(var), 3)

    # -- observation assembly ---------------------------------------------------
    def _noise_q(self, q):
        c = self.c
        var = self.noise.obs_var_q_quat
        if c <= 0.0 or var <= 0.0:
            return q.copy()
        return q + c * self.rng.normal(0.0, np.sqrt(var), 3)

    def _assemble(self, est, q_noised):
        c = self.c
        quat = est.quat
        if c > 0.0 and self.noise.obs_var_q_quat > 0.0:
            quat = quat + c * self.rng.normal(0.0, np.sqrt(self.noise.obs_var_q_quat), 4)
            quat = quat / np.linalg.norm(quat)
        p_dot = est.p_dot
        if c > 0.0 and self.noise.obs_var_pdot_rel > 0.0:
            scale = np.linalg.norm(p_dot)
            p_dot = p_dot + c * scale * self.rng.normal(
                0.0, np.sqrt(self.noise.obs_var_pdot_rel), 3)

        tau_hist_enc = unscale_action(self._tau_hist).reshape(-1)
        if self.layout == "ours1":
            q_dot = est.q_dot
            if c > 0.0 and self.noise.obs_var_qdot_rel > 0.0:
                scale = np.linalg.norm(q_dot)
                q_dot = q_dot + c * scale * self.rng.normal(
                    0.0, np.sqrt(self.noise.obs_var_qdot_rel), 3)
            obs = np.concatenate([p_dot, quat, est.omega, q_noised, q_dot,
                                  tau_hist_enc])
        else:
            obs = np.concatenate([p_dot, quat, est.omega, q_noised,
                                  self._q_hist.reshape(-1), tau_hist_enc])
        if obs.shape[0] != self.obs_dim:
            raise AssertionError("observation layout length mismatch")
        return obs

    # -- stepping ----------------------------------------------------------------
    def step(self, action):
        if self.sim is None:
            raise RuntimeError("reset() must be called before step()")
        c = self.c
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        tau_ref = scale_action(a)
        sol = self.converter.convert(self.sim.state.q, tau_ref)

        # random per-wire friction loss, wandering within the episode
        if self.noise.friction_walk_var > 0.0 and c > 0.0:
            self.k_f = np.clip(
                self.k_f + c * self.rng.normal(
                    0.0, np.sqrt(self.noise.friction_walk_var), 6),
                _KF_FLOOR, 1.0)
        f_applied = self.k_f * sol.f_ref
        tau_applied = self.geometry.torque_from_tensions(self.sim.state.q, f_applied)

        if self.tick % 100 == 0 and self.tick > 0:
            self._ext_force = self._draw_external_force()

        p_dot_before = self.sim.state.p_dot.copy()
        self.sim.run_tick(tau_applied, self._ext_force)
        state = self.sim.state
        accel_world = (state.p_dot - p_dot_before) / self.sim_cfg.control_dt

        imu, wire, vo = self.sensors.sample(state, accel_world)
        est = self.state_converter.step(imu, wire, vo)
        rep = contacts(state, self.sim_cfg)
        self.last_estimates = est
        self.last_contacts = rep

        self.tick += 1
        if self.curriculum is not None:
            self.curriculum.advance()

        breakdown = compute_breakdown(RewardInputs(
            p_z=float(state.p[2]),
            p_dot_xy=(float(state.p_dot[0]), float(state.p_dot[1])),
            omega_z=float(state.omega[2]),
            body_up=float(state.R[2, 2]),
            leg_up=float(rep.leg_rotation[2, 2]),
            action=tuple(a),
            leg_tip_z=rep.leg_tip_height,
            landing_leg_z=rep.landing_leg_min_height,
            q=tuple(state.q),
            c=c,
        ), self.reward_cfg)
        self.last_breakdown = breakdown

        reason = self._check_termination(state, rep)
        done = reason is not None

        # histories: this tick's command, then this tick's noised estimate
        self._tau_hist = np.roll(self._tau_hist, 1, axis=0)
        self._tau_hist[0] = tau_ref
        q_noised = self._noise_q(est.q)
        obs = self._assemble(est, q_noised)
        self._q_hist = np.roll(self._q_hist, 1, axis=0)
        self._q_hist[0] = q_noised

        info = {
            "tick": self.tick,
            "c": c,
            "tau_ref": tau_ref,
            "f_ref": sol.f_ref,
            "k_f": self.k_f.copy(),
            "degraded": sol.degraded,
            "over_tension": sol.over_tension,
            "external_force": self._ext_force.copy(),
            "breakdown": breakdown,
            "termination": reason,
            "contacts": rep,
            "estimates": est,
        }
        self.last_info = info
        return obs, breakdown.total, done, info

    def _check_termination(self, state, rep):
        if self.tick > STEP_LIMIT:
            return TerminationReason.STEP_LIMIT
        q = state.q
        lo = self.reward_cfg.q_min
        hi = self.reward_cfg.q_max
        for i in range(3):
            if q[i] < lo[i] or q[i] > hi[i]:
                return TerminationReason.JOINT_RANGE
        if rep.leg_rotation[2, 2] < LEG_TILT_LIMIT:
            return TerminationReason.LEG_TILT
        return None
