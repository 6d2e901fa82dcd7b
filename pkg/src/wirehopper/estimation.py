"""State reconstruction from emulated sensors.

Joint angles and velocities come from an EKF over wire lengths and length
rates (constant-velocity prediction, nonlinear wire-length observation).
Body orientation comes from a Madgwick IMU filter, body velocity from the
emulated visual-odometry source. The same converter runs in every mode;
measurement noise is configured on the emulator, not here.
"""

from dataclasses import dataclass, field
import numpy as np

from .dynamics import RobotState
from .rotations import mat_to_quat, quat_to_mat
from .wires import WireGeometry

EKF_PROCESS_NOISE = np.diag([1e-6] * 3 + [1e-2] * 3)
EKF_MEASUREMENT_NOISE = np.diag([1e-6] * 6 + [1e-3] * 6)
EKF_INITIAL_COVARIANCE = np.diag([1e-6] * 3 + [1e-4] * 3)
MADGWICK_BETA = 0.1
_FD_STEP = 1e-6


@dataclass
class ImuSample:
    accel: np.ndarray  # body-frame specific force, m/s^2
    gyro: np.ndarray   # body-frame angular rate, rad/s


@dataclass
class WireMeasurement:
    lengths: np.ndarray
    rates: np.ndarray

    def stacked(self):
        return np.concatenate([self.lengths, self.rates])


@dataclass
class EstimatedState:
    p_dot: np.ndarray
    quat: np.ndarray
    R: np.ndarray
    omega: np.ndarray
    q: np.ndarray
    q_dot: np.ndarray


class JointEkf:
    """EKF over x = (q, q_dot) observing y = (l, l_dot)."""

    def __init__(self, geometry: WireGeometry, q0, q_dot0=None,
                 P0=None, Q_w=None, R_v=None):
        self.geometry = geometry
        self.x = np.concatenate([np.asarray(q0, dtype=float),
                                 np.zeros(3) if q_dot0 is None
                                 else np.asarray(q_dot0, dtype=float)])
        self.P = (EKF_INITIAL_COVARIANCE if P0 is None
                  else np.asarray(P0, dtype=float)).copy()
        self.Q_w = (EKF_PROCESS_NOISE if Q_w is None
                    else np.asarray(Q_w, dtype=float)).copy()
        self.R_v = (EKF_MEASUREMENT_NOISE if R_v is None
                    else np.asarray(R_v, dtype=float)).copy()

    @property
    def q(self):
        return self.x[0:3]

    @property
    def q_dot(self):
        return self.x[3:6]

    def predict(self, dt):
        F = np.eye(6)
        F[0, 3] = F[1, 4] = F[2, 5] = dt
        self.x = F @ self.x
        self.P = F @ self.P @ F.T + self.Q_w
        self.P = 0.5 * (self.P + self.P.T)
        return self

    def _observation(self, x):
        """h(x) = (g(q), G(q) q_dot) and its Jacobian H."""
        q, qd = x[0:3], x[3:6]
        lengths, G = self.geometry.lengths_and_jacobian(q)
        h = np.concatenate([lengths, G @ qd])
        H = np.zeros((12, 6))
        H[0:6, 0:3] = G
        H[6:12, 3:6] = G
        # d(G q_dot)/dq by central differences of G
        for j in range(3):
            qp = q.copy()
            qm = q.copy()
            qp[j] += _FD_STEP
            qm[j] -= _FD_STEP
            Gp = self.geometry.muscle_jacobian(qp)
            Gm = self.geometry.muscle_jacobian(qm)
            H[6:12, j] = (Gp - Gm) @ qd / (2.0 * _FD_STEP)
        return h, H

    def update(self, y):
        y = np.asarray(y, dtype=float)
        h, H = self._observation(self.x)
        S = H @ self.P @ H.T + self.R_v
        K = np.linalg.solve(S.T, (self.P @ H.T).T).T
        self.x = self.x + K @ (y - h)
        IKH = np.eye(6) - K @ H
        self.P = IKH @ self.P @ IKH.T + K @ self.R_v @ K.T  # Joseph form
        self.P = 0.5 * (self.P + self.P.T)
        return self


class MadgwickFilter:
    """Gradient-descent IMU orientation filter, quaternion (w, x, y, z)."""

    def __init__(self, beta=MADGWICK_BETA, quat=None):
        self.beta = float(beta)
        self.quat = (np.array([1.0, 0.0, 0.0, 0.0]) if quat is None
                     else np.asarray(quat, dtype=float).copy())

    def update(self, gyro, accel, dt):
        q1, q2, q3, q4 = self.quat
        gx, gy, gz = gyro
        ax, ay, az = accel

        qdot1 = 0.5 * (-q2 * gx - q3 * gy - q4 * gz)
        qdot2 = 0.5 * (q1 * gx + q3 * gz - q4 * gy)
        qdot3 = 0.5 * (q1 * gy - q2 * gz + q4 * gx)
        qdot4 = 0.5 * (q1 * gz + q2 * gy - q3 * gx)

        norm = np.sqrt(ax * ax + ay * ay + az * az)
        if norm > 1e-9:
            ax, ay, az = ax / norm, ay / norm, az / norm
            _2q1, _2q2, _2q3, _2q4 = 2 * q1, 2 * q2, 2 * q3, 2 * q4
            _4q1, _4q2, _4q3 = 4 * q1, 4 * q2, 4 * q3
            _8q2, _8q3 = 8 * q2, 8 * q3
            q1q1, q2q2, q3q3, q4q4 = q1 * q1, q2 * q2, q3 * q3, q4 * q4

            s1 = _4q1 * q3q3 + _2q3 * ax + _4q1 * q2q2 - _2q2 * ay
            s2 = (_4q2 * q4q4 - _2q4 * ax + 4 * q1q1 * q2 - _2q1 * ay - _4q2
                  + _8q2 * q2q2 + _8q2 * q3q3 + _4q2 * az)
            s3 = (4 * q1q1 * q3 + _2q1 * ax + _4q3 * q4q4 - _2q4 * ay - _4q3
                  + _8q3 * q2q2 + _8q3 * q3q3 + _4q3 * az)
            s4 = 4 * q2q2 * q4 - _2q2 * ax + 4 * q3q3 * q4 - _2q3 * ay
            snorm = np.sqrt(s1 * s1 + s2 * s2 + s3 * s3 + s4 * s4)
            if snorm > 0.0:
                qdot1 -= self.beta * s1 / snorm
                qdot2 -= self.beta * s2 / snorm
                qdot3 -= self.beta * s3 / snorm
                qdot4 -= self.beta * s4 / snorm

        q = self.quat + dt * np.array([qdot1, qdot2, qdot3, qdot4])
        self.quat = q / np.linalg.norm(q)
        return self.quat


@dataclass
class SensorNoise:
    accel_var: float = 0.0
    gyro_var: float = 0.0
    length_var: float = 0.0
    vo_var: float = 0.0


class SensorEmulator:
    """Emulates the robot's sensor set from simulator ground truth.

    Wire length noise feeds the length-rate channel as a first difference of
    the noise sequence (motor-encoder velocities are differenced positions,
    so length noise shows up amplified by 1/dt in the rates).
    """

    def __init__(self, geometry: WireGeometry, noise: SensorNoise, rng,
                 control_dt, gravity=9.81):
        self.geometry = geometry
        self.noise = noise
        self.rng = rng
        self.dt = float(control_dt)
        self.gravity = float(gravity)
        self._prev_length_noise = np.zeros(6)

    def reset(self, state: RobotState):
        self._prev_length_noise = self._length_noise()

    def _length_noise(self):
        if self.noise.length_var <= 0.0:
            return np.zeros(6)
        return self.rng.normal(0.0, np.sqrt(self.noise.length_var), 6)

    def sample(self, state: RobotState, accel_world):
        g_vec = np.array([0.0, 0.0, self.gravity])
        accel = state.R.T @ (np.asarray(accel_world, dtype=float) + g_vec)
        gyro = state.R.T @ state.omega
        if self.noise.accel_var > 0.0:
            accel = accel + self.rng.normal(0.0, np.sqrt(self.noise.accel_var), 3)
        if self.noise.gyro_var > 0.0:
            gyro = gyro + self.rng.normal(0.0, np.sqrt(self.noise.gyro_var), 3)

        lengths, G = self.geometry.lengths_and_jacobian(state.q)
        rates = G @ state.q_dot
        eta = self._length_noise()
        if self.noise.length_var > 0.0:
            lengths = lengths + eta
            rates = rates + (eta - self._prev_length_noise) / self.dt
        self._prev_length_noise = eta

        vo = state.p_dot.copy()
        if self.noise.vo_var > 0.0:
            vo = vo + self.rng.normal(0.0, np.sqrt(self.noise.vo_var), 3)
        return ImuSample(accel, gyro), WireMeasurement(lengths, rates), vo


class StateConverter:
    """Reconstructs {p_dot, R, omega, q, q_dot} from the emulated sensors."""

    def __init__(self, geometry: WireGeometry, control_dt,
                 beta=MADGWICK_BETA):
        self.geometry = geometry
        self.dt = float(control_dt)
        self.beta = beta
        self.ekf: JointEkf | None = None
        self.madgwick: MadgwickFilter | None = None

    def reset(self, state: RobotState):
        self.ekf = JointEkf(self.geometry, state.q, state.q_dot)
        self.madgwick = MadgwickFilter(self.beta, mat_to_quat(state.R))

    def step(self, imu: ImuSample, wire: WireMeasurement, vo_velocity) -> EstimatedState:
        quat = self.madgwick.update(imu.gyro, imu.accel, self.dt)
        R = quat_to_mat(quat)
        self.ekf.predict(self.dt)
        self.ekf.update(wire.stacked())
        return EstimatedState(
            p_dot=np.asarray(vo_velocity, dtype=float),
            quat=quat.copy(),
            R=R,
            omega=R @ imu.gyro,
            q=self.ekf.q.copy(),
            q_dot=self.ekf.q_dot.copy(),
        )
