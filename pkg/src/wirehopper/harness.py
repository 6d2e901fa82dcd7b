"""Episode runner and the three-controller comparison protocol.

Controllers implement reset(env) / act(obs, env). Policy controllers see
only the observation vector; the Basic controller additionally reads the
state-converter estimates and the contact report through the env, exactly
the signals it would have on the machine.
"""

from dataclasses import dataclass, field
import csv
import json
import os
import numpy as np

from .baseline import BasicController, BasicGains
from .dynamics import SimConfig
from .env import (
    EVAL_LENGTH_NOISE_VAR,
    JumpingEnv,
    NoiseConfig,
    STEP_LIMIT,
    unscale_action,
)
from .ppo.checkpoint import load_checkpoint
from .ppo.nets import forward
from .rewards import RewardConfig
from .trajlog import TrajectoryWriter
from .wires import reference_geometry

RESULTS_SCHEMA_VERSION = 1
RESULTS_COLUMNS = ("schema_version", "kind", "controller", "noise", "seed",
                   "survival_steps", "n_jumps", "termination", "mean_reward",
                   "survival_mean", "survival_var")
JUMP_RISE = 0.05
JUMP_RESET = 0.01


class MissingCheckpoint(FileNotFoundError):
    pass


@dataclass
class TrialResult:
    survival_steps: int
    n_jumps: int
    termination: str
    mean_reward: float


@dataclass
class ExperimentSpec:
    """The comparison grid: controllers x noise modes x seeds."""

    controllers: dict  # name -> checkpoint path or None for "basic"
    seeds: tuple = (0, 1, 2, 3, 4)
    noise_modes: tuple = ("clean", "muscle")
    max_steps: int = STEP_LIMIT
    layout_overrides: dict = field(default_factory=dict)

    @property
    def n_trials(self):
        return len(self.seeds)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            raw = json.load(fh)
        return cls(
            controllers=raw["controllers"],
            seeds=tuple(raw.get("seeds", (0, 1, 2, 3, 4))),
            noise_modes=tuple(raw.get("noise_modes", ("clean", "muscle"))),
            max_steps=int(raw.get("max_steps", STEP_LIMIT)),
            layout_overrides=raw.get("layout_overrides", {}),
        )


class PolicyController:
    """Deterministic (mean-action) wrapper around a trained checkpoint."""

    def __init__(self, checkpoint_path):
        if not os.path.exists(checkpoint_path):
            raise MissingCheckpoint(checkpoint_path)
        ckpt = load_checkpoint(checkpoint_path)
        self.spec = ckpt["policy_spec"]
        self.params = ckpt["policy_params"]

    @property
    def layout(self):
        return {34: "ours1", 49: "ours2"}[self.spec.input_dim]

    def reset(self, env):
        if env.obs_dim != self.spec.input_dim:
            raise ValueError("checkpoint input width does not match env layout")

    def act(self, obs, env):
        mean, _ = forward(self.params, self.spec, obs)
        return np.clip(mean, -1.0, 1.0)


class BasicAdapter:
    """Maps the Raibert-style torque controller into the action interface."""

    def __init__(self, gains: BasicGains | None = None):
        self.gains = gains or BasicGains()
        self.inner = None
        self.layout = "ours1"  # observation content is irrelevant to Basic

    def reset(self, env):
        cfg = env.sim_cfg
        self.inner = BasicController(self.gains, total_mass=cfg.total_mass,
                                     leg_mass=cfg.leg_mass, gravity=cfg.gravity,
                                     control_dt=cfg.control_dt,
                                     standing_height=cfg.standing_height,
                                     slide_depth_offset=cfg.slide_depth_offset)
        self.inner.reset()

    def act(self, obs, env):
        tau = self.inner.act(env.last_estimates, env.last_contacts)
        return unscale_action(tau)


class ZeroTorqueController:
    layout = "ours1"

    def reset(self, env):
        pass

    def act(self, obs, env):
        return unscale_action(np.zeros(3))


def make_eval_env(layout, noise_mode, sim_cfg=None, reward_cfg=None, seed=0):
    if noise_mode == "clean":
        noise = NoiseConfig.clean()
    elif noise_mode == "muscle":
        noise = NoiseConfig.muscle_noise(EVAL_LENGTH_NOISE_VAR)
    else:
        raise ValueError(f"unknown noise mode {noise_mode!r}")
    return JumpingEnv(layout=layout, sim_cfg=sim_cfg or SimConfig(),
                      geometry=reference_geometry(), noise=noise,
                      reward_cfg=reward_cfg or RewardConfig(),
                      fixed_c=0.0, seed=seed)


def run_episode(controller, env: JumpingEnv, seed, dump_path=None,
                max_steps=STEP_LIMIT) -> TrialResult:
    obs = env.reset(seed=seed)
    controller.reset(env)
    standing_h = float(env.sim.state.p[2])
    above = False
    n_jumps = 0
    total_reward = 0.0
    steps = 0
    termination = "max_steps"
    writer = TrajectoryWriter(dump_path) if dump_path else None
    try:
        for _ in range(max_steps):
            action = controller.act(obs, env)
            obs, reward, done, info = env.step(action)
            steps += 1
            total_reward += reward
            p_z = float(env.sim.state.p[2])
            if not above and p_z > standing_h + JUMP_RISE:
                above = True
            elif above and p_z < standing_h + JUMP_RESET:
                above = False
                n_jumps += 1
            if writer:
                writer.write(_tick_record(env, info, action))
            if done:
                termination = info["termination"].value
                break
    finally:
        if writer:
            writer.close()
    return TrialResult(survival_steps=steps, n_jumps=n_jumps,
                       termination=termination,
                       mean_reward=total_reward / max(steps, 1))


def run_episode_with_controller(controller, env, seed, max_ticks=STEP_LIMIT):
    """Tuning-loop shim: run a raw torque controller (reset()/act(est, rep))."""

    class _Wrapped:
        layout = "ours1"

        def reset(self, env):
            controller.reset()

        def act(self, obs, env):
            tau = controller.act(env.last_estimates, env.last_contacts)
            return unscale_action(tau)

    return run_episode(_Wrapped(), env, seed, max_steps=max_ticks)


def _tick_record(env: JumpingEnv, info, action):
    st = env.sim.state
    rep = info["contacts"]
    est = info["estimates"]
    bd = info["breakdown"]
    return {
        "t": info["tick"],
        "p": st.p,
        "quat": _mat_quat(st.R),
        "p_dot": st.p_dot,
        "omega": st.omega,
        "q": st.q,
        "q_dot": st.q_dot,
        "body_up": float(st.R[2, 2]),
        "leg_up": float(rep.leg_rotation[2, 2]),
        "leg_tip_z": rep.leg_tip_height,
        "landing_leg_z": rep.landing_leg_min_height,
        "action": np.asarray(action, dtype=float),
        "tau_ref": info["tau_ref"],
        "f_ref": info["f_ref"],
        "k_f": info["k_f"],
        "degraded": bool(info["degraded"]),
        "over_tension": bool(info["over_tension"]),
        "external_force": info["external_force"],
        "c": info["c"],
        "est_q": est.q,
        "est_q_dot": est.q_dot,
        "est_p_dot": est.p_dot,
        "est_quat": est.quat,
        "reward": bd.as_dict(),
    }


def _mat_quat(R):
    from .rotations import mat_to_quat

    return mat_to_quat(R)


def build_controller(name, ckpt_path=None, gains=None):
    if name == "basic":
        return BasicAdapter(gains)
    if name == "zero":
        return ZeroTorqueController()
    if ckpt_path is None:
        raise MissingCheckpoint(f"controller {name!r} needs a checkpoint")
    return PolicyController(ckpt_path)


def run_comparison(spec: ExperimentSpec, out_csv, sim_cfg=None,
                   reward_cfg=None, dump_dir=None, gains=None):
    """Full grid: per-trial rows plus per-cell summary rows, one CSV."""
    rows = []
    for name, ckpt in spec.controllers.items():
        controller = build_controller(name, ckpt, gains)
        layout = spec.layout_overrides.get(name, getattr(controller, "layout", "ours1"))
        for noise_mode in spec.noise_modes:
            survivals = []
            for seed in sorted(spec.seeds):
                env = make_eval_env(layout, noise_mode, sim_cfg, reward_cfg,
                                    seed=seed)
                dump = None
                if dump_dir:
                    os.makedirs(dump_dir, exist_ok=True)
                    dump = os.path.join(dump_dir,
                                        f"{name}_{noise_mode}_{seed}.jsonl")
                result = run_episode(controller, env, seed, dump_path=dump,
                                     max_steps=spec.max_steps)
                survivals.append(result.survival_steps)
                rows.append({
                    "schema_version": RESULTS_SCHEMA_VERSION,
                    "kind": "trial",
                    "controller": name,
                    "noise": noise_mode,
                    "seed": seed,
                    "survival_steps": result.survival_steps,
                    "n_jumps": result.n_jumps,
                    "termination": result.termination,
                    "mean_reward": result.mean_reward,
                    "survival_mean": "",
                    "survival_var": "",
                })
            arr = np.asarray(survivals, dtype=float)
            rows.append({
                "schema_version": RESULTS_SCHEMA_VERSION,
                "kind": "summary",
                "controller": name,
                "noise": noise_mode,
                "seed": "",
                "survival_steps": "",
                "n_jumps": "",
                "termination": "",
                "mean_reward": "",
                "survival_mean": float(arr.mean()),
                "survival_var": float(arr.var()),
            })
    with open(out_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULTS_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def summarize_ordering(rows):
    """Trend metrics (reported, not gated): mean survival per cell."""
    cells = {}
    for row in rows:
        if row["kind"] == "summary":
            cells[(row["controller"], row["noise"])] = row["survival_mean"]
    return cells
