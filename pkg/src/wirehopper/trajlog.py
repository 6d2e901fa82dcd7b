"""JSON-lines trajectory dumps, one record per control tick.

Records carry simulator truth, the state estimates, the command chain and
the reward terms, with enough raw inputs that the reward total can be
recomputed offline bit-exactly from the record alone.
"""

import json
import numpy as np

from .rewards import RewardConfig, RewardInputs, compute_breakdown


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


class TrajectoryWriter:
    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w")

    def write(self, record: dict):
        self._fh.write(json.dumps({k: _jsonable(v) for k, v in record.items()}))
        self._fh.write("\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trajectory(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def replay_reward(record, reward_cfg: RewardConfig | None = None):
    """Recompute the tick's reward breakdown from a dumped record."""
    inp = RewardInputs(
        p_z=record["p"][2],
        p_dot_xy=(record["p_dot"][0], record["p_dot"][1]),
        omega_z=record["omega"][2],
        body_up=record["body_up"],
        leg_up=record["leg_up"],
        action=tuple(record["action"]),
        leg_tip_z=record["leg_tip_z"],
        landing_leg_z=record["landing_leg_z"],
        q=tuple(record["q"]),
        c=record["c"],
    )
    return compute_breakdown(inp, reward_cfg)
