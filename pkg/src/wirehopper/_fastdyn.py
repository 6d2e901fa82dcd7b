"""Numba-accelerated physics substep.

Mirrors Simulator.substep exactly (same math, same order of operations where
it matters). The pure-numpy implementation in dynamics.py is the reference;
an equivalence test keeps the two in lockstep. Falls back cleanly when numba
is unavailable: dynamics.Simulator only uses this module if HAVE_NUMBA.
"""

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is expected in the toolchain
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


@njit(cache=True, fastmath=False)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True, fastmath=False)
def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    R = np.empty((3, 3))
    R[0, 0], R[0, 1], R[0, 2] = 1.0, 0.0, 0.0
    R[1, 0], R[1, 1], R[1, 2] = 0.0, c, -s
    R[2, 0], R[2, 1], R[2, 2] = 0.0, s, c
    return R


@njit(cache=True, fastmath=False)
def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    R = np.empty((3, 3))
    R[0, 0], R[0, 1], R[0, 2] = c, 0.0, s
    R[1, 0], R[1, 1], R[1, 2] = 0.0, 1.0, 0.0
    R[2, 0], R[2, 1], R[2, 2] = -s, 0.0, c
    return R


@njit(cache=True, fastmath=False)
def _exp_so3(w):
    theta = np.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    K = np.empty((3, 3))
    K[0, 0], K[0, 1], K[0, 2] = 0.0, -w[2], w[1]
    K[1, 0], K[1, 1], K[1, 2] = w[2], 0.0, -w[0]
    K[2, 0], K[2, 1], K[2, 2] = -w[1], w[0], 0.0
    if theta < 1e-12:
        return np.eye(3) + K + 0.5 * (K @ K)
    K = K / theta
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


@njit(cache=True, fastmath=False)
def _leg_point_jac(rho, a_r, a_p, R_leg, r_g):
    d = R_leg @ rho
    J = np.zeros((3, 9))
    J[0, 0] = J[1, 1] = J[2, 2] = 1.0
    s = r_g + d
    J[0, 4] = s[2]
    J[0, 5] = -s[1]
    J[1, 3] = -s[2]
    J[1, 5] = s[0]
    J[2, 3] = s[1]
    J[2, 4] = -s[0]
    c1 = _cross(a_r, d)
    c2 = _cross(a_p, d)
    for i in range(3):
        J[i, 6] = c1[i]
        J[i, 7] = c2[i]
        J[i, 8] = R_leg[i, 2]
    return J


@njit(cache=True, fastmath=False)
def _point_force(z, v, k_c, c_d, mu, c_t):
    fn = -k_c * z
    if v[2] < 0.0:
        fn -= c_d * v[2]
    ftx = -c_t * v[0]
    fty = -c_t * v[1]
    cap = mu * fn
    mag = np.sqrt(ftx * ftx + fty * fty)
    if mag > cap:
        scale = cap / mag
        ftx *= scale
        fty *= scale
    out = np.empty(3)
    out[0], out[1], out[2] = ftx, fty, fn
    return out


@njit(cache=True, fastmath=False)
def _pose_mass(R, q, body_mass, leg_mass, I_body, I_leg, gimbal_off,
               depth_off, leg_len):
    a_r = R @ np.array([1.0, 0.0, 0.0])
    Rx = _rot_x(q[0])
    a_p = R @ (Rx @ np.array([0.0, 1.0, 0.0]))
    R_leg = R @ Rx @ _rot_y(q[1])
    r_g = R @ gimbal_off
    leg_z = R_leg[:, 2].copy()
    rho_com = np.array([0.0, 0.0, q[2] - depth_off + 0.5 * leg_len])
    d_com = R_leg @ rho_com

    J_l = _leg_point_jac(rho_com, a_r, a_p, R_leg, r_g)
    Jw = np.zeros((3, 9))
    Jw[0, 3] = Jw[1, 4] = Jw[2, 5] = 1.0
    for i in range(3):
        Jw[i, 6] = a_r[i]
        Jw[i, 7] = a_p[i]

    I_bw = R @ I_body @ R.T
    I_lw = R_leg @ I_leg @ R_leg.T

    M = leg_mass * (J_l.T @ J_l) + Jw.T @ I_lw @ Jw
    M[0, 0] += body_mass
    M[1, 1] += body_mass
    M[2, 2] += body_mass
    for i in range(3):
        for j in range(3):
            M[3 + i, 3 + j] += I_bw[i, j]
    return a_r, a_p, R_leg, r_g, leg_z, d_com, J_l, Jw, I_bw, I_lw, M


@njit(cache=True, fastmath=False)
def substep_kernel(p, R, p_dot, omega, q, q_dot, tau, f_ext,
                   body_mass, leg_mass, gravity, dt,
                   k_c, c_d, mu, c_t,
                   I_body, I_leg, land_off, gimbal_off, depth_off, leg_len,
                   stop_low, stop_high, stop_k, stop_c):
    """One momentum-form semi-implicit substep; returns the updated state."""
    a_r, a_p, R_leg, r_g, leg_z, d_com, J_l, Jw, I_bw, I_lw, M = _pose_mass(
        R, q, body_mass, leg_mass, I_body, I_leg, gimbal_off, depth_off, leg_len)

    w = omega
    qd = q_dot
    w_leg = w + a_r * qd[0] + a_p * qd[1]
    alpha_vp = _cross(w, a_r) * qd[0] + _cross(w + a_r * qd[0], a_p) * qd[1]
    a_vp_com = (_cross(w, _cross(w, r_g))
                + _cross(alpha_vp, d_com)
                + _cross(w_leg, _cross(w_leg, d_com))
                + 2.0 * qd[2] * _cross(w_leg, leg_z))

    bias = (J_l.T @ (leg_mass * a_vp_com)
            + Jw.T @ (I_lw @ alpha_vp + _cross(w_leg, I_lw @ w_leg)))
    bias[3:6] += _cross(w, I_bw @ w)

    # applied forces
    Q = np.zeros(9)
    Q[0:3] += f_ext
    Q[2] -= body_mass * gravity
    Q += J_l[2] * (-leg_mass * gravity)
    Q[6] += tau[0]
    Q[7] += tau[1]
    Q[8] += tau[2]
    for i in range(3):
        if q[i] > stop_high[i]:
            Q[6 + i] -= stop_k[i] * (q[i] - stop_high[i])
            if q_dot[i] > 0.0:
                Q[6 + i] -= stop_c[i] * q_dot[i]
        elif q[i] < stop_low[i]:
            Q[6 + i] -= stop_k[i] * (q[i] - stop_low[i])
            if q_dot[i] < 0.0:
                Q[6 + i] -= stop_c[i] * q_dot[i]

    # leg tip contact
    rho_tip = np.array([0.0, 0.0, q[2] - depth_off])
    d_tip = R_leg @ rho_tip
    tip_z = p[2] + r_g[2] + d_tip[2]
    if tip_z < 0.0:
        v_tip = p_dot + _cross(w, r_g) + _cross(w_leg, d_tip) + leg_z * qd[2]
        F = _point_force(tip_z, v_tip, k_c, c_d, mu, c_t)
        J_tip = _leg_point_jac(rho_tip, a_r, a_p, R_leg, r_g)
        Q += J_tip.T @ F

    # landing legs
    for i in range(land_off.shape[0]):
        r = R @ land_off[i]
        z = p[2] + r[2]
        if z < 0.0:
            v = p_dot + _cross(w, r)
            F = _point_force(z, v, k_c, c_d, mu, c_t)
            Q[0:3] += F
            Q[3:6] += _cross(r, F)

    u = np.empty(9)
    u[0:3] = p_dot
    u[3:6] = omega
    u[6:9] = q_dot
    p_target = (M @ u)[0:3] + dt * Q[0:3]
    u_new = u + dt * np.linalg.solve(M, Q - bias)
    accel = (u_new[0:3] - p_dot) / dt

    p_new = p + dt * u_new[0:3]
    Rn = _exp_so3(u_new[3:6] * dt) @ R
    R_new = 1.5 * Rn - 0.5 * (Rn @ Rn.T @ Rn)
    q_new = q + dt * u_new[6:9]

    # minimal-KE linear momentum correction at the new pose (3x3 solve)
    out = _pose_mass(R_new, q_new, body_mass, leg_mass, I_body, I_leg,
                     gimbal_off, depth_off, leg_len)
    M_new = out[10]
    residual = p_target - (M_new @ u_new)[0:3]
    lam = np.linalg.solve(np.ascontiguousarray(M_new[0:3, 0:3]), residual)
    u_new[0:3] += lam
    return p_new, R_new, u_new[0:3], u_new[3:6], q_new, u_new[6:9], accel
