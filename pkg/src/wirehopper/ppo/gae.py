"""Generalized advantage estimation over stacked (T, N) rollouts."""

import numpy as np


def compute_gae(rewards, values, dones, last_values, gamma, lam):
    """Standard GAE recursion with bootstrap values for the final step.

    rewards/values/dones are (T, N); dones[t, i] marks that env i terminated
    at step t (no bootstrap across it). Returns (advantages, returns),
    both (T, N) and un-normalized.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    nonterminal = 1.0 - np.asarray(dones, dtype=float)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    carry = np.zeros(rewards.shape[1] if rewards.ndim == 2 else ())
    for t in range(T - 1, -1, -1):
        next_v = values[t + 1] if t + 1 < T else last_values
        delta = rewards[t] + gamma * next_v * nonterminal[t] - values[t]
        carry = delta + gamma * lam * nonterminal[t] * carry
        adv[t] = carry
    return adv, adv + values


def normalize_advantages(adv, eps=1e-8):
    flat = adv.reshape(-1)
    return (adv - flat.mean()) / (flat.std() + eps)
