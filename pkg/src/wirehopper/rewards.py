"""Per-tick reward terms for the jumping task.

All terms are pure functions of simulator ground truth and the clamped
action; the environment sums them through RewardBreakdown so the logged
total is bit-identical to the sum of the logged parts.
"""

from dataclasses import dataclass, field
import numpy as np

SURVIVAL_BONUS = 0.1


@dataclass
class RewardConfig:
    jump_cap_height: float = 1.1
    w_action: tuple = (3.0, 3.0, 0.3)
    contact_penalty: float = 0.3
    sink_gain: float = 3000.0
    q_min: tuple = (-0.8, -0.8, 0.1)
    q_max: tuple = (0.8, 0.8, 0.926)
    q_thre: tuple = (0.4, 0.4, 0.15)
    range_weights: tuple = (10.0, 10.0, 50.0)

    def __post_init__(self):
        for lo, hi, th in zip(self.q_min, self.q_max, self.q_thre):
            if not lo + th < hi - th:
                raise ValueError("joint range leaves no penalty-free band")


@dataclass
class RewardBreakdown:
    r_jump: float
    r_keep: float
    r_horizon: float
    r_ctrl: float
    r_contact: float
    r_range: float
    survival: float = SURVIVAL_BONUS
    total: float = field(init=False)

    def __post_init__(self):
        self.total = (self.r_jump + self.r_keep + self.r_horizon + self.r_ctrl
                      + self.r_contact + self.r_range + self.survival)

    def as_dict(self):
        return {
            "r_jump": self.r_jump,
            "r_keep": self.r_keep,
            "r_horizon": self.r_horizon,
            "r_ctrl": self.r_ctrl,
            "r_contact": self.r_contact,
            "r_range": self.r_range,
            "survival": self.survival,
            "total": self.total,
        }


def reward_jump(p_z, cfg: RewardConfig = None):
    """Height-squared bonus, capped by a penalty above the jump ceiling."""
    cap = cfg.jump_cap_height if cfg else 1.1
    if p_z > cap:
        return -1.0
    return p_z * p_z


def reward_keep(p_dot_xy, omega_z, c):
    """Station-keeping penalty, ramped in by the curriculum variable."""
    return -c * (p_dot_xy[0] ** 2 + p_dot_xy[1] ** 2 + omega_z ** 2)


def reward_horizon(body_up, leg_up):
    """Tilt penalty from the z-axis alignment of body and leg.

    body_up/leg_up are (R e_z) . e_z, i.e. the [2, 2] entries of the two
    rotation matrices.
    """
    return -(1.0 - body_up) - (1.0 - leg_up)


def reward_ctrl(action, cfg: RewardConfig = None):
    """Quadratic action penalty; the slide weight is small since the vertical
    axis genuinely needs force."""
    w = cfg.w_action if cfg else (3.0, 3.0, 0.3)
    s = 0.0
    for wi, ai in zip(w, action):
        s += (wi * ai) ** 2
    return -s


def reward_contact(leg_tip_z, landing_leg_z, cfg: RewardConfig = None):
    """Floor-contact penalty plus a quadratic term for tip sink-in."""
    pen = cfg.contact_penalty if cfg else 0.3
    gain = cfg.sink_gain if cfg else 3000.0
    r = 0.0
    if leg_tip_z < 0.0:
        r -= pen + gain * leg_tip_z * leg_tip_z
    if landing_leg_z < 0.0:
        r -= pen
    return r


def reward_range(q, cfg: RewardConfig = None):
    """Per-axis quadratic penalty outside the inner joint band."""
    cfg = cfg or RewardConfig()
    r = 0.0
    for i in range(3):
        lo = cfg.q_min[i] + cfg.q_thre[i]
        hi = cfg.q_max[i] - cfg.q_thre[i]
        if q[i] < lo:
            r -= cfg.range_weights[i] * (lo - q[i]) ** 2
        elif q[i] > hi:
            r -= cfg.range_weights[i] * (hi - q[i]) ** 2
    return r


@dataclass
class RewardInputs:
    """Everything a tick's reward depends on; also the replay record."""

    p_z: float
    p_dot_xy: tuple
    omega_z: float
    body_up: float
    leg_up: float
    action: tuple
    leg_tip_z: float
    landing_leg_z: float
    q: tuple
    c: float


def compute_breakdown(inp: RewardInputs, cfg: RewardConfig = None) -> RewardBreakdown:
    cfg = cfg or RewardConfig()
    return RewardBreakdown(
        r_jump=reward_jump(inp.p_z, cfg),
        r_keep=reward_keep(inp.p_dot_xy, inp.omega_z, inp.c),
        r_horizon=reward_horizon(inp.body_up, inp.leg_up),
        r_ctrl=reward_ctrl(inp.action, cfg),
        r_contact=reward_contact(inp.leg_tip_z, inp.landing_leg_z, cfg),
        r_range=reward_range(inp.q, cfg),
    )
