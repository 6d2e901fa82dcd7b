"""Geometric model of the 6 antagonistic wires.

Wires run as straight taut segments from anchors under the body to anchors
on the leg link. Three wires attach low on the leg (near the tip) and pull
it in (slide retraction, positive torque); the other three attach near the
top of the leg pipe, above the body anchor plane, and pull the pipe through
the gimbal (slide extension, negative torque). Alternating them around the
gimbal axis gives antagonism on roll and pitch as well, and the body anchor
plane sits exactly midway between the two leg anchor rings at the home pose
(q_s = 0.513) so that uniform tension produces zero joint torque there.

Lengths depend only on the joint vector q, never on the floating base pose.
"""

from dataclasses import dataclass, field
import numpy as np

from .rotations import EX, EY, cross, rot_x, rot_y

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


@njit(cache=True)
def _lengths_and_jacobian(q, body_anchors, leg_anchors, gimbal_z, depth_off):
    """Fused wire lengths + muscle Jacobian (hot path: QP and EKF)."""
    cr, sr = np.cos(q[0]), np.sin(q[0])
    cp, sp = np.cos(q[1]), np.sin(q[1])
    # R_leg = rot_x(q_r) @ rot_y(q_p), a_r = e_x, a_p = rot_x e_y
    R = np.empty((3, 3))
    R[0, 0], R[0, 1], R[0, 2] = cp, 0.0, sp
    R[1, 0], R[1, 1], R[1, 2] = sr * sp, cr, -sr * cp
    R[2, 0], R[2, 1], R[2, 2] = -cr * sp, sr, cr * cp
    a_p1, a_p2 = cr, sr  # a_p = (0, cos q_r, sin q_r)
    n = body_anchors.shape[0]
    lengths = np.empty(n)
    G = np.empty((n, 3))
    for i in range(n):
        ax = leg_anchors[i, 0]
        ay = leg_anchors[i, 1]
        az = leg_anchors[i, 2] + q[2] - depth_off
        dx = R[0, 0] * ax + R[0, 1] * ay + R[0, 2] * az
        dy = R[1, 0] * ax + R[1, 1] * ay + R[1, 2] * az
        dz = R[2, 0] * ax + R[2, 1] * ay + R[2, 2] * az
        wx = dx - body_anchors[i, 0]
        wy = dy - body_anchors[i, 1]
        wz = dz + gimbal_z - body_anchors[i, 2]
        li = np.sqrt(wx * wx + wy * wy + wz * wz)
        lengths[i] = li
        ux, uy, uz = wx / li, wy / li, wz / li
        # a_r x d = (0, -dz, dy); a_p x d = (a_p1*dz - a_p2*dy-ish) expanded:
        G[i, 0] = -uy * dz + uz * dy
        G[i, 1] = ux * (a_p1 * dz - a_p2 * dy) + uy * (a_p2 * dx) + uz * (-a_p1 * dx)
        G[i, 2] = ux * R[0, 2] + uy * R[1, 2] + uz * R[2, 2]
    return lengths, G

N_WIRES = 6
N_JOINTS = 3

# matches SimConfig defaults; the wire model and the dynamics share the rig
GIMBAL_OFFSET_Z = -0.144
SLIDE_DEPTH_OFFSET = 1.026
HOME_SLIDE = 0.513


def _default_body_anchors():
    angles = np.deg2rad(60.0 * np.arange(6))
    r = 0.20
    # gimbal-relative -0.013: midway between the leg anchor rings at home pose
    z = GIMBAL_OFFSET_Z - 0.013
    return np.stack([r * np.cos(angles), r * np.sin(angles),
                     np.full(6, z)], axis=1)


def _default_leg_anchors():
    angles = np.deg2rad(60.0 * np.arange(6))
    r = 0.05
    # height of each anchor above the leg tip: even wires at the tip,
    # odd wires at the top of the 1.0 m pipe
    h = np.where(np.arange(6) % 2 == 0, 0.0, 1.0)
    return np.stack([r * np.cos(angles), r * np.sin(angles), h], axis=1)


@dataclass
class WireGeometry:
    """Anchor layout. body_anchors are in the body frame; leg_anchors carry
    (x, y, h) with h the attachment height above the leg tip."""

    body_anchors: np.ndarray = field(default_factory=_default_body_anchors)
    leg_anchors: np.ndarray = field(default_factory=_default_leg_anchors)
    gimbal_offset_z: float = GIMBAL_OFFSET_Z
    slide_depth_offset: float = SLIDE_DEPTH_OFFSET
    n_wires: int = N_WIRES
    n_joints: int = N_JOINTS

    def __post_init__(self):
        self.body_anchors = np.asarray(self.body_anchors, dtype=float)
        self.leg_anchors = np.asarray(self.leg_anchors, dtype=float)
        if self.body_anchors.shape != (self.n_wires, 3):
            raise ValueError("need one body anchor per wire")
        if self.leg_anchors.shape != (self.n_wires, 3):
            raise ValueError("need one leg anchor per wire")

    def leg_anchor_offsets(self, q_s):
        """Leg-frame anchor positions relative to the gimbal at slide q_s."""
        out = self.leg_anchors.copy()
        out[:, 2] += q_s - self.slide_depth_offset
        return out

    def _geometry_at(self, q):
        """Anchor separation vectors in the body frame (base pose irrelevant)."""
        q = np.asarray(q, dtype=float)
        R_leg = rot_x(q[0]) @ rot_y(q[1])
        rel = self.leg_anchor_offsets(q[2]) @ R_leg.T
        rel[:, 2] += self.gimbal_offset_z
        w = rel - self.body_anchors
        return w, R_leg

    def wire_lengths(self, q):
        if HAVE_NUMBA:
            q = np.asarray(q, dtype=float)
            return _lengths_and_jacobian(q, self.body_anchors, self.leg_anchors,
                                         self.gimbal_offset_z,
                                         self.slide_depth_offset)[0]
        w, _ = self._geometry_at(q)
        return np.sqrt((w * w).sum(axis=1))

    def muscle_jacobian(self, q):
        """G = d(lengths)/dq, 6x3, from unit wire directions and point jacobians."""
        q = np.asarray(q, dtype=float)
        if HAVE_NUMBA:
            return _lengths_and_jacobian(q, self.body_anchors, self.leg_anchors,
                                         self.gimbal_offset_z,
                                         self.slide_depth_offset)[1]
        return self._muscle_jacobian_reference(q)

    def lengths_and_jacobian(self, q):
        """Fused l, G evaluation (one geometry pass)."""
        q = np.asarray(q, dtype=float)
        if HAVE_NUMBA:
            return _lengths_and_jacobian(q, self.body_anchors, self.leg_anchors,
                                         self.gimbal_offset_z,
                                         self.slide_depth_offset)
        return self.wire_lengths(q), self._muscle_jacobian_reference(q)

    def _muscle_jacobian_reference(self, q):
        """Pure-numpy reference for the fused kernel (kept for equivalence tests)."""
        R_x = rot_x(q[0])
        R_leg = R_x @ rot_y(q[1])
        a_r = EX
        a_p = R_x @ EY
        offs = self.leg_anchor_offsets(q[2])
        d = offs @ R_leg.T                      # gimbal -> anchor vectors
        rel = d.copy()
        rel[:, 2] += self.gimbal_offset_z
        w = rel - self.body_anchors
        lengths = np.sqrt((w * w).sum(axis=1))
        u = w / lengths[:, None]
        G = np.empty((self.n_wires, self.n_joints))
        leg_z = R_leg[:, 2]
        for i in range(self.n_wires):
            G[i, 0] = u[i] @ cross(a_r, d[i])
            G[i, 1] = u[i] @ cross(a_p, d[i])
            G[i, 2] = u[i] @ leg_z
        return G

    def wire_state(self, q, q_dot):
        """Lengths and length rates (l, l_dot = G q_dot)."""
        lengths = self.wire_lengths(q)
        rates = self.muscle_jacobian(q) @ np.asarray(q_dot, dtype=float)
        return lengths, rates

    def torque_from_tensions(self, q, f):
        """Joint torque of tension vector f >= 0: tau = -G(q)^T f."""
        return -self.muscle_jacobian(q).T @ np.asarray(f, dtype=float)


def reference_geometry() -> WireGeometry:
    """The committed anchor layout (passes the rank/feasibility certificate)."""
    return WireGeometry()
