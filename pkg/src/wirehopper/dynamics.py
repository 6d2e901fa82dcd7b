"""Fixed-step rigid-body simulation of the wire-driven monoped.

Two rigid bodies: the main body (floating, 6 DOF) and a light leg connected
through a roll/pitch gimbal plus a prismatic slide (3 joint DOF). Ground
contact is a penalty spring-damper with capped-viscous Coulomb friction at
the leg tip and at four landing-leg points under the body.

Generalized velocity layout: u = [p_dot (world), omega (world), q_dot],
q = (q_r roll, q_p pitch, q_s slide). The slide coordinate increases when
the leg retracts; the tip sits tip_depth = slide_depth_offset - q_s below
the gimbal along the leg axis, so pushing the leg out (jumping) is driven
by negative slide torque. This matches the asymmetric slide torque limits
(-320 N for push-off, +90 N for retraction).

Integration is semi-implicit in momentum form: the generalized momentum
pi = M(z) u is advanced with d(pi)/dt = Q + dKE/dz, the pose is advanced
with the updated velocities, and velocities are re-extracted from pi at
the new pose. The first three rows of pi are the total linear momentum and
KE does not depend on p, so free-flight linear momentum is conserved to
solver precision rather than to the integrator's truncation order.
"""

from dataclasses import dataclass, field
import numpy as np

from . import _fastdyn
from .rotations import EX, EY, cross, exp_so3, polish_rotation, rot_x, rot_y, skew


class NonFiniteState(RuntimeError):
    """Raised when integration produces NaN/inf anywhere in the state."""


def _default_body_inertia():
    # uniform box 0.55 x 0.55 x 0.30 m at the body mass (total - leg)
    m = 10.3 - 0.5
    w = d = 0.55
    h = 0.30
    return np.diag([
        m * (d * d + h * h) / 12.0,
        m * (w * w + h * h) / 12.0,
        m * (w * w + d * d) / 12.0,
    ])


def _default_leg_inertia():
    # uniform thin rod, length 1.0 m, radius ~2 cm
    m, length, r = 0.5, 1.0, 0.02
    it = m * length * length / 12.0
    return np.diag([it, it, 0.5 * m * r * r])


def _default_landing_offsets():
    z = -0.657
    return np.array([
        [0.2, 0.2, z],
        [0.2, -0.2, z],
        [-0.2, 0.2, z],
        [-0.2, -0.2, z],
    ])


@dataclass
class SimConfig:
    total_mass: float = 10.3
    leg_mass: float = 0.5
    overall_height: float = 1.07
    overall_width: float = 0.55
    gravity: float = 9.81
    physics_dt: float = 1e-3
    control_dt: float = 1e-2
    contact_stiffness: float = 3.0e4
    contact_damping: float = 300.0
    friction_coeff: float = 0.8
    # viscous coefficient used below the Coulomb cap (tangential velocity cap
    # regularization); must stay small enough for 1 kHz stability on the leg
    friction_damping: float = 100.0
    body_inertia: np.ndarray = field(default_factory=_default_body_inertia)
    leg_inertia: np.ndarray = field(default_factory=_default_leg_inertia)
    landing_leg_offsets: np.ndarray = field(default_factory=_default_landing_offsets)
    # gimbal center in body frame
    gimbal_offset: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -0.144]))
    # tip depth below gimbal = slide_depth_offset - q_s
    slide_depth_offset: float = 1.026
    leg_length: float = 1.0
    # mechanical end stops (slightly outside the episode-termination box)
    joint_stop_low: np.ndarray = field(default_factory=lambda: np.array([-0.9, -0.9, 0.05]))
    joint_stop_high: np.ndarray = field(default_factory=lambda: np.array([0.9, 0.9, 0.98]))
    joint_stop_stiffness: np.ndarray = field(default_factory=lambda: np.array([500.0, 500.0, 2.0e4]))
    joint_stop_damping: np.ndarray = field(default_factory=lambda: np.array([5.0, 5.0, 50.0]))

    def __post_init__(self):
        self.body_inertia = np.asarray(self.body_inertia, dtype=float)
        self.leg_inertia = np.asarray(self.leg_inertia, dtype=float)
        self.landing_leg_offsets = np.asarray(self.landing_leg_offsets, dtype=float)
        self.gimbal_offset = np.asarray(self.gimbal_offset, dtype=float)
        self.joint_stop_low = np.asarray(self.joint_stop_low, dtype=float)
        self.joint_stop_high = np.asarray(self.joint_stop_high, dtype=float)
        self.joint_stop_stiffness = np.asarray(self.joint_stop_stiffness, dtype=float)
        self.joint_stop_damping = np.asarray(self.joint_stop_damping, dtype=float)
        n = round(self.control_dt / self.physics_dt)
        if abs(n * self.physics_dt - self.control_dt) > 1e-12:
            raise ValueError("control_dt must be an integer multiple of physics_dt")
        if not (self.total_mass > self.leg_mass > 0.0):
            raise ValueError("need total_mass > leg_mass > 0")
        if min(self.contact_stiffness, self.contact_damping, self.friction_coeff) < 0.0:
            raise ValueError("contact parameters must be non-negative")

    @property
    def body_mass(self):
        return self.total_mass - self.leg_mass

    @property
    def substeps_per_tick(self):
        return round(self.control_dt / self.physics_dt)

    @property
    def standing_height(self):
        """Body height with the landing legs resting on the floor."""
        return -float(self.landing_leg_offsets[:, 2].min())


@dataclass
class RobotState:
    p: np.ndarray
    R: np.ndarray
    p_dot: np.ndarray
    omega: np.ndarray
    q: np.ndarray
    q_dot: np.ndarray

    def copy(self):
        return RobotState(self.p.copy(), self.R.copy(), self.p_dot.copy(),
                          self.omega.copy(), self.q.copy(), self.q_dot.copy())

    def require_finite(self):
        for arr in (self.p, self.R, self.p_dot, self.omega, self.q, self.q_dot):
            if not np.isfinite(arr).all():
                raise NonFiniteState("simulation state became non-finite")


@dataclass
class ContactReport:
    leg_tip_height: float
    landing_leg_min_height: float
    leg_in_contact: bool
    landing_in_contact: bool
    leg_rotation: np.ndarray


def standing_state(cfg: SimConfig, q_r=0.0, q_p=0.0, q_s=0.513) -> RobotState:
    """Upright state with landing legs on the floor and the slide at q_s."""
    return RobotState(
        p=np.array([0.0, 0.0, cfg.standing_height]),
        R=np.eye(3),
        p_dot=np.zeros(3),
        omega=np.zeros(3),
        q=np.array([q_r, q_p, q_s]),
        q_dot=np.zeros(3),
    )


def leg_rotation(R, q):
    """World rotation of the leg link: body R, then roll about x, pitch about y."""
    return R @ rot_x(q[0]) @ rot_y(q[1])


def forward_kinematics(q, base_p=None, base_R=None, cfg: SimConfig | None = None):
    """Leg tip position, landing-leg points and R_leg for joint vector q.

    base_p/base_R default to the identity pose. Returns (tip, landing_pts, R_leg).
    """
    cfg = cfg or SimConfig()
    p = np.zeros(3) if base_p is None else np.asarray(base_p, dtype=float)
    R = np.eye(3) if base_R is None else np.asarray(base_R, dtype=float)
    R_leg = leg_rotation(R, q)
    gimbal = p + R @ cfg.gimbal_offset
    tip_depth = cfg.slide_depth_offset - q[2]
    tip = gimbal + R_leg @ np.array([0.0, 0.0, -tip_depth])
    landing = p[None, :] + cfg.landing_leg_offsets @ R.T
    return tip, landing, R_leg


def contacts(state: RobotState, cfg: SimConfig) -> ContactReport:
    tip, landing, R_leg = forward_kinematics(state.q, state.p, state.R, cfg)
    tip_z = float(tip[2])
    land_z = float(landing[:, 2].min())
    return ContactReport(
        leg_tip_height=tip_z,
        landing_leg_min_height=land_z,
        leg_in_contact=tip_z < 0.0,
        landing_in_contact=land_z < 0.0,
        leg_rotation=R_leg,
    )


def joint_stop_torque(q, q_dot, low, high, stiffness, damping):
    """Penalty torque from the mechanical end stops (damped one-sided spring)."""
    tau = np.zeros(3)
    for i in range(3):
        if q[i] > high[i]:
            tau[i] = -stiffness[i] * (q[i] - high[i])
            if q_dot[i] > 0.0:
                tau[i] -= damping[i] * q_dot[i]
        elif q[i] < low[i]:
            tau[i] = -stiffness[i] * (q[i] - low[i])
            if q_dot[i] < 0.0:
                tau[i] -= damping[i] * q_dot[i]
    return tau


def _leg_point_jacobian(rho_leg, a_r, a_p, R_leg, r_g):
    """Jacobian (3x9) of a leg-fixed point at leg-frame offset rho.

    All leg points used here have d(rho)/d(q_s) = +e_z in the leg frame.
    """
    d = R_leg @ rho_leg
    J = np.zeros((3, 9))
    J[0, 0] = J[1, 1] = J[2, 2] = 1.0
    J[:, 3:6] = -skew(r_g + d)
    J[:, 6] = cross(a_r, d)
    J[:, 7] = cross(a_p, d)
    J[:, 8] = R_leg[:, 2]
    return J


class _PoseFrame:
    """Configuration-dependent kinematics and the mass matrix."""

    __slots__ = ("a_r", "a_p", "R_leg", "r_g", "leg_z", "rho_com", "d_com",
                 "J_l", "Jw_l", "I_bw", "I_lw", "M")

    def __init__(self, cfg: SimConfig, R, q):
        self.a_r = R @ EX
        R_x = rot_x(q[0])
        self.a_p = R @ (R_x @ EY)
        self.R_leg = R @ R_x @ rot_y(q[1])
        self.r_g = R @ cfg.gimbal_offset
        self.leg_z = self.R_leg[:, 2]

        self.rho_com = np.array([0.0, 0.0, q[2] - cfg.slide_depth_offset + 0.5 * cfg.leg_length])
        self.d_com = self.R_leg @ self.rho_com

        self.J_l = _leg_point_jacobian(self.rho_com, self.a_r, self.a_p,
                                       self.R_leg, self.r_g)
        Jw = np.zeros((3, 9))
        Jw[0, 3] = Jw[1, 4] = Jw[2, 5] = 1.0
        Jw[:, 6] = self.a_r
        Jw[:, 7] = self.a_p
        self.Jw_l = Jw

        self.I_bw = R @ cfg.body_inertia @ R.T
        self.I_lw = self.R_leg @ cfg.leg_inertia @ self.R_leg.T

        m_l = cfg.leg_mass
        M = m_l * (self.J_l.T @ self.J_l) + self.Jw_l.T @ self.I_lw @ self.Jw_l
        M[0, 0] += cfg.body_mass
        M[1, 1] += cfg.body_mass
        M[2, 2] += cfg.body_mass
        M[3:6, 3:6] += self.I_bw
        self.M = M


class _VelTerms:
    """Velocity-dependent quantities at a given pose frame."""

    __slots__ = ("w_leg", "alpha_vp", "a_vp_com", "v_l")

    def __init__(self, fr: _PoseFrame, st: RobotState):
        w = st.omega
        qd = st.q_dot
        self.w_leg = w + fr.a_r * qd[0] + fr.a_p * qd[1]
        self.alpha_vp = (cross(w, fr.a_r) * qd[0]
                         + cross(w + fr.a_r * qd[0], fr.a_p) * qd[1])
        self.a_vp_com = (cross(w, cross(w, fr.r_g))
                         + cross(self.alpha_vp, fr.d_com)
                         + cross(self.w_leg, cross(self.w_leg, fr.d_com))
                         + 2.0 * qd[2] * cross(self.w_leg, fr.leg_z))
        self.v_l = (st.p_dot + cross(w, fr.r_g) + cross(self.w_leg, fr.d_com)
                    + fr.leg_z * qd[2])


class Simulator:
    """Mutable single-instance simulator; one per environment."""

    def __init__(self, cfg: SimConfig, state: RobotState | None = None,
                 use_numba: bool = True):
        self.cfg = cfg
        self.state = state.copy() if state is not None else standing_state(cfg)
        self.last_accel = np.zeros(3)  # world-frame COM acceleration of the body
        self._pose_cache: _PoseFrame | None = None
        self._use_numba = use_numba and _fastdyn.HAVE_NUMBA

    def _pose_frame(self) -> _PoseFrame:
        if self._pose_cache is None:
            self._pose_cache = _PoseFrame(self.cfg, self.state.R, self.state.q)
        return self._pose_cache

    def invalidate(self):
        """Drop cached kinematics after the state was mutated externally."""
        self._pose_cache = None

    def _kane_bias(self, fr: _PoseFrame, vt: _VelTerms, st: RobotState):
        """Velocity-product generalized forces (projected Newton-Euler)."""
        bias = (fr.J_l.T @ (self.cfg.leg_mass * vt.a_vp_com)
                + fr.Jw_l.T @ (fr.I_lw @ vt.alpha_vp
                               + cross(vt.w_leg, fr.I_lw @ vt.w_leg)))
        bias[3:6] += cross(st.omega, fr.I_bw @ st.omega)
        return bias

    def _applied_forces(self, fr: _PoseFrame, vt: _VelTerms, st: RobotState,
                        tau, external_force):
        cfg = self.cfg
        Q = np.zeros(9)
        Q[0:3] += external_force
        Q[2] -= cfg.body_mass * cfg.gravity
        Q += fr.J_l[2] * (-cfg.leg_mass * cfg.gravity)
        Q[6:9] += tau
        Q[6:9] += joint_stop_torque(st.q, st.q_dot, cfg.joint_stop_low,
                                    cfg.joint_stop_high, cfg.joint_stop_stiffness,
                                    cfg.joint_stop_damping)
        self._add_contact_forces(Q, fr, vt, st)
        return Q

    def _add_contact_forces(self, Q, fr: _PoseFrame, vt: _VelTerms, st: RobotState):
        cfg = self.cfg
        p, pd, w = st.p, st.p_dot, st.omega

        # leg tip
        rho_tip = np.array([0.0, 0.0, st.q[2] - cfg.slide_depth_offset])
        d_tip = fr.R_leg @ rho_tip
        tip_z = p[2] + fr.r_g[2] + d_tip[2]
        if tip_z < 0.0:
            v_tip = (pd + cross(w, fr.r_g) + cross(vt.w_leg, d_tip)
                     + fr.leg_z * st.q_dot[2])
            F = self._point_force(tip_z, v_tip)
            J = _leg_point_jacobian(rho_tip, fr.a_r, fr.a_p, fr.R_leg, fr.r_g)
            Q += J.T @ F

        # landing legs (body-fixed points)
        pts = p[None, :] + cfg.landing_leg_offsets @ st.R.T
        for i in range(pts.shape[0]):
            z = pts[i, 2]
            if z < 0.0:
                r = pts[i] - p
                v = pd + cross(w, r)
                F = self._point_force(z, v)
                Q[0:3] += F
                Q[3:6] += cross(r, F)

    def _point_force(self, z, v):
        cfg = self.cfg
        fn = -cfg.contact_stiffness * z
        if v[2] < 0.0:
            fn -= cfg.contact_damping * v[2]
        ftx = -cfg.friction_damping * v[0]
        fty = -cfg.friction_damping * v[1]
        cap = cfg.friction_coeff * fn
        mag = np.hypot(ftx, fty)
        if mag > cap:
            scale = cap / mag
            ftx *= scale
            fty *= scale
        return np.array([ftx, fty, fn])

    def substep(self, tau, external_force):
        """One physics substep of cfg.physics_dt.

        Semi-implicit (symplectic) Euler on the projected Newton-Euler
        equations, followed by a minimal-kinetic-energy correction that pins
        the discrete linear momentum to its exact impulse balance. The
        correction solves a 3x3 system and only adjusts p_dot; it removes the
        O(dt^2) per-step momentum drift the plain scheme would accumulate
        through the configuration-dependent momentum map.
        """
        cfg = self.cfg
        st = self.state
        dt = cfg.physics_dt
        if self._use_numba:
            try:
                (st.p, st.R, st.p_dot, st.omega, st.q, st.q_dot,
                 self.last_accel) = _fastdyn.substep_kernel(
                    st.p, st.R, st.p_dot, st.omega, st.q, st.q_dot,
                    np.asarray(tau, dtype=float), np.asarray(external_force, dtype=float),
                    cfg.body_mass, cfg.leg_mass, cfg.gravity, dt,
                    cfg.contact_stiffness, cfg.contact_damping,
                    cfg.friction_coeff, cfg.friction_damping,
                    cfg.body_inertia, cfg.leg_inertia, cfg.landing_leg_offsets,
                    cfg.gimbal_offset, cfg.slide_depth_offset, cfg.leg_length,
                    cfg.joint_stop_low, cfg.joint_stop_high,
                    cfg.joint_stop_stiffness, cfg.joint_stop_damping)
            except np.linalg.LinAlgError as exc:  # NaN poisoned the KKT solve
                raise NonFiniteState("simulation state became non-finite") from exc
            st.require_finite()
            return st
        fr = self._pose_frame()
        vt = _VelTerms(fr, st)

        u = np.concatenate([st.p_dot, st.omega, st.q_dot])
        Q = self._applied_forces(fr, vt, st, tau, external_force)
        bias = self._kane_bias(fr, vt, st)
        p_target = (fr.M @ u)[0:3] + dt * Q[0:3]

        u_new = u + dt * np.linalg.solve(fr.M, Q - bias)
        self.last_accel = (u_new[0:3] - st.p_dot) / dt

        st.p = st.p + dt * u_new[0:3]
        st.R = polish_rotation(exp_so3(u_new[3:6] * dt) @ st.R)
        st.q = st.q + dt * u_new[6:9]

        self._pose_cache = _PoseFrame(cfg, st.R, st.q)
        M_new = self._pose_cache.M
        residual = p_target - M_new[0:3, :] @ u_new
        u_new[0:3] += np.linalg.solve(M_new[0:3, 0:3], residual)

        st.p_dot = u_new[0:3]
        st.omega = u_new[3:6]
        st.q_dot = u_new[6:9]
        st.require_finite()
        return st

    def run_tick(self, tau, external_force):
        """Advance one control tick (substeps_per_tick substeps)."""
        for _ in range(self.cfg.substeps_per_tick):
            self.substep(tau, external_force)
        return self.state

    # -- diagnostics ---------------------------------------------------------
    def mechanical_energy(self, state=None):
        """KE + PE of both bodies (gravity reference at the floor)."""
        cfg = self.cfg
        st = state or self.state
        fr = _PoseFrame(cfg, st.R, st.q)
        vt = _VelTerms(fr, st)
        ke = 0.5 * cfg.body_mass * st.p_dot @ st.p_dot
        ke += 0.5 * st.omega @ fr.I_bw @ st.omega
        ke += 0.5 * cfg.leg_mass * vt.v_l @ vt.v_l
        ke += 0.5 * vt.w_leg @ fr.I_lw @ vt.w_leg
        leg_com_z = st.p[2] + fr.r_g[2] + fr.d_com[2]
        pe = cfg.gravity * (cfg.body_mass * st.p[2] + cfg.leg_mass * leg_com_z)
        return ke + pe

    def linear_momentum(self, state=None):
        st = state or self.state
        fr = _PoseFrame(self.cfg, st.R, st.q)
        vt = _VelTerms(fr, st)
        return self.cfg.body_mass * st.p_dot + self.cfg.leg_mass * vt.v_l


def step(state: RobotState, tau, external_force, cfg: SimConfig) -> RobotState:
    """One physics substep (functional form of Simulator.substep)."""
    sim = Simulator(cfg, state)
    return sim.substep(np.asarray(tau, dtype=float),
                       np.asarray(external_force, dtype=float)).copy()
