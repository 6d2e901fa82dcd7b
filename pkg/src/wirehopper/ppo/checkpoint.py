"""Binary checkpoint format for the policy/value parameter vectors.

Layout (all little-endian):
  8 bytes   magic b"WHOPPER1"
  u32       format version (1)
  u32       input width
  u32       number of hidden layers
  u32 * n   hidden widths
  u32       action dimension
  u64       policy parameter count
  u64       value parameter count
  f64 * np  policy parameters (log-std tail included)
  f64 * nv  value parameters
"""

import struct
import numpy as np

from .nets import MlpSpec

MAGIC = b"WHOPPER1"
VERSION = 1


def save_checkpoint(path, policy_spec: MlpSpec, policy_params, value_params):
    hidden = policy_spec.hidden
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", policy_spec.input_dim))
        fh.write(struct.pack("<I", len(hidden)))
        for h in hidden:
            fh.write(struct.pack("<I", h))
        fh.write(struct.pack("<I", policy_spec.output_dim))
        fh.write(struct.pack("<Q", policy_params.size))
        fh.write(struct.pack("<Q", value_params.size))
        fh.write(np.asarray(policy_params, dtype="<f8").tobytes())
        fh.write(np.asarray(value_params, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        version, = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        input_dim, = struct.unpack("<I", fh.read(4))
        n_hidden, = struct.unpack("<I", fh.read(4))
        hidden = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(n_hidden))
        action_dim, = struct.unpack("<I", fh.read(4))
        n_pol, = struct.unpack("<Q", fh.read(8))
        n_val, = struct.unpack("<Q", fh.read(8))
        policy_params = np.frombuffer(fh.read(8 * n_pol), dtype="<f8").copy()
        value_params = np.frombuffer(fh.read(8 * n_val), dtype="<f8").copy()
    policy_spec = MlpSpec(input_dim, action_dim, hidden, has_log_std=True)
    value_spec = MlpSpec(input_dim, 1, hidden)
    if policy_params.size != policy_spec.n_params:
        raise ValueError("policy parameter count mismatch")
    if value_params.size != value_spec.n_params:
        raise ValueError("value parameter count mismatch")
    return {
        "policy_spec": policy_spec,
        "value_spec": value_spec,
        "policy_params": policy_params,
        "value_params": value_params,
    }
