"""MLP policy/value networks as flat float64 parameter vectors.

Forward and backward passes are hand-written so every gradient can be
checked against finite differences; no autograd framework is involved.
Layout of the flat vector: W1, b1, W2, b2, W3, b3 (+ 3 log-std entries at
the tail for the policy). Hidden activations are tanh, heads are linear.
"""

from dataclasses import dataclass
import numpy as np

HIDDEN = (256, 128)
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden: tuple = HIDDEN
    has_log_std: bool = False

    @property
    def dims(self):
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def n_params(self):
        n = 0
        dims = self.dims
        for a, b in zip(dims[:-1], dims[1:]):
            n += a * b + b
        if self.has_log_std:
            n += self.output_dim
        return n

    def layer_slices(self):
        out = []
        offset = 0
        dims = self.dims
        for a, b in zip(dims[:-1], dims[1:]):
            w = slice(offset, offset + a * b)
            offset += a * b
            bias = slice(offset, offset + b)
            offset += b
            out.append((w, bias, a, b))
        return out

    def log_std_slice(self):
        if not self.has_log_std:
            raise ValueError("network has no log-std head")
        return slice(self.n_params - self.output_dim, self.n_params)


def orthogonal(rng, rows, cols, gain):
    a = rng.normal(0.0, 1.0, (max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(spec: MlpSpec, rng, head_gain=0.01, hidden_gain=np.sqrt(2.0),
                log_std_init=0.0):
    params = np.zeros(spec.n_params)
    layers = spec.layer_slices()
    last = len(layers) - 1
    for i, (w, b, a, m) in enumerate(layers):
        gain = head_gain if i == last else hidden_gain
        params[w] = orthogonal(rng, a, m, gain).reshape(-1)
        # biases stay zero
    if spec.has_log_std:
        params[spec.log_std_slice()] = log_std_init
    return params


def forward(params, spec: MlpSpec, x):
    """Returns (y, cache); x is (B, input_dim) or (input_dim,)."""
    single = x.ndim == 1
    h = x[None, :] if single else x
    layers = spec.layer_slices()
    last = len(layers) - 1
    activations = [h]
    for i, (w, b, a, m) in enumerate(layers):
        W = params[w].reshape(a, m)
        z = h @ W + params[b]
        h = z if i == last else np.tanh(z)
        activations.append(h)
    y = h[0] if single else h
    return y, activations


def backward(params, spec: MlpSpec, activations, dy):
    """Parameter gradient given dL/dy; dy shaped like the forward output."""
    grad = np.zeros_like(params)
    layers = spec.layer_slices()
    last = len(layers) - 1
    d = dy[None, :] if dy.ndim == 1 else dy
    for i in range(last, -1, -1):
        w, b, a, m = layers[i]
        h_in = activations[i]
        if i != last:
            h_out = activations[i + 1]
            d = d * (1.0 - h_out * h_out)  # through tanh
        grad[w] = (h_in.T @ d).reshape(-1)
        grad[b] = d.sum(axis=0)
        if i > 0:
            W = params[w].reshape(a, m)
            d = d @ W.T
    return grad


def clamped_log_std(params, spec: MlpSpec):
    raw = params[spec.log_std_slice()]
    return np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)


def log_std_grad_mask(params, spec: MlpSpec):
    """1 where the clamp is inactive (gradient flows), else 0."""
    raw = params[spec.log_std_slice()]
    return ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(float)


def gaussian_log_prob(actions, mean, log_std):
    """Diagonal-Gaussian log density per row."""
    std = np.exp(log_std)
    z = (actions - mean) / std
    k = actions.shape[-1]
    return -0.5 * (z * z).sum(axis=-1) - log_std.sum() - 0.5 * k * np.log(2.0 * np.pi)


def gaussian_entropy(log_std):
    return float(np.sum(log_std + 0.5 * np.log(2.0 * np.pi * np.e)))
