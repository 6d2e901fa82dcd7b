import numpy as np
import pytest

from wirehopper.ppo.checkpoint import load_checkpoint, save_checkpoint
from wirehopper.ppo.gae import compute_gae, normalize_advantages
from wirehopper.ppo.nets import (
    MlpSpec,
    backward,
    clamped_log_std,
    forward,
    gaussian_log_prob,
    init_params,
)
from wirehopper.ppo.trainer import Adam, NonFiniteLoss, PpoConfig, clip_global_norm, loss_and_grad

from oracles import central_difference_gradient, gae_hand_unrolled


def small_specs(obs_dim=7, hidden=(8, 6)):
    return (MlpSpec(obs_dim, 3, hidden, has_log_std=True),
            MlpSpec(obs_dim, 1, hidden))


def random_batch(rng, spec, n=10):
    return {
        "obs": rng.normal(0.0, 1.0, (n, spec.input_dim)),
        "actions": rng.normal(0.0, 0.7, (n, 3)),
        "logp_old": rng.normal(-2.0, 0.3, n),
        "advantages": rng.normal(0.0, 1.0, n),
        "returns": rng.normal(0.0, 1.0, n),
    }


class TestNets:
    def test_zero_weights_zero_mean(self):
        spec = MlpSpec(5, 3, (8, 6), has_log_std=True)
        params = np.zeros(spec.n_params)
        y, _ = forward(params, spec, np.ones(5))
        assert np.array_equal(y, np.zeros(3))

    def test_deterministic_forward(self):
        spec = MlpSpec(5, 3, (8, 6), has_log_std=True)
        params = init_params(spec, np.random.default_rng(0))
        x = np.random.default_rng(1).normal(0, 1, 5)
        y1, _ = forward(params, spec, x)
        y2, _ = forward(params, spec, x)
        assert np.array_equal(y1, y2)

    def test_hidden_sizes_standard(self):
        spec = MlpSpec(34, 3, has_log_std=True)
        assert spec.hidden == (256, 128)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        spec = MlpSpec(6, 3, (8, 5))
        params = init_params(spec, rng, head_gain=1.0)
        x = rng.normal(0.0, 1.0, (4, 6))

        def loss_of(p):
            y, _ = forward(p, spec, x)
            return y.sum()

        y, cache = forward(params, spec, x)
        g = backward(params, spec, cache, np.ones_like(y))
        g_fd = central_difference_gradient(loss_of, params, h=1e-6)
        denom = np.maximum(np.abs(g_fd), 1e-6)
        assert (np.abs(g - g_fd) / denom).max() < 1e-4

    def test_log_std_clamped(self):
        spec = MlpSpec(4, 3, (5, 4), has_log_std=True)
        params = np.zeros(spec.n_params)
        params[spec.log_std_slice()] = np.array([-10.0, 0.5, 10.0])
        ls = clamped_log_std(params, spec)
        assert np.array_equal(ls, np.array([-5.0, 0.5, 2.0]))


class TestGae:
    def test_single_step(self):
        adv, ret = compute_gae(np.array([[1.0]]), np.array([[0.0]]),
                               np.array([[1.0]]), np.array([0.0]), 0.99, 0.95)
        assert adv[0, 0] == 1.0
        assert ret[0, 0] == 1.0

    def test_lambda_zero_is_td_error(self):
        rng = np.random.default_rng(0)
        r = rng.normal(0, 1, (6, 2))
        v = rng.normal(0, 1, (6, 2))
        d = np.zeros((6, 2))
        last = rng.normal(0, 1, 2)
        adv, _ = compute_gae(r, v, d, last, 0.9, 0.0)
        for t in range(6):
            nv = v[t + 1] if t < 5 else last
            td = r[t] + 0.9 * nv - v[t]
            assert np.abs(adv[t] - td).max() < 1e-12

    def test_matches_hand_unrolled_five_steps(self):
        rng = np.random.default_rng(5)
        r = rng.normal(0, 1, 5)
        v = rng.normal(0, 1, 5)
        d = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
        last = 0.3
        adv, ret = compute_gae(r[:, None], v[:, None], d[:, None],
                               np.array([last]), 0.99, 0.95)
        oracle = gae_hand_unrolled(r, v, d.astype(bool), last, 0.99, 0.95)
        assert np.abs(adv[:, 0] - oracle).max() < 1e-12
        assert np.abs(ret[:, 0] - (oracle + v)).max() < 1e-12

    def test_normalization(self):
        rng = np.random.default_rng(7)
        adv = rng.normal(3.0, 2.0, (64, 4))
        norm = normalize_advantages(adv)
        assert abs(norm.mean()) < 1e-12
        assert abs(norm.std() - 1.0) < 1e-6


class TestLoss:
    def test_identical_policy_gives_vanilla_gradient(self):
        rng = np.random.default_rng(11)
        spec_p, spec_v = small_specs()
        pol = init_params(spec_p, rng, head_gain=0.5)
        val = init_params(spec_v, rng, head_gain=1.0)
        batch = random_batch(rng, spec_p)
        # make logp_old the exact current-policy log-probs: ratio == 1
        mean, _ = forward(pol, spec_p, batch["obs"])
        batch["logp_old"] = gaussian_log_prob(batch["actions"], mean,
                                              clamped_log_std(pol, spec_p))
        loss, g_pol, g_val, stats = loss_and_grad(
            pol, val, spec_p, spec_v, batch, 0.2, 0.5, 0.0)
        assert stats["clip_frac"] == 0.0
        assert abs(stats["kl"]) < 1e-12

    def test_zero_advantages_zero_policy_gradient(self):
        rng = np.random.default_rng(13)
        spec_p, spec_v = small_specs()
        pol = init_params(spec_p, rng, head_gain=0.5)
        val = init_params(spec_v, rng, head_gain=1.0)
        batch = random_batch(rng, spec_p)
        batch["advantages"] = np.zeros_like(batch["advantages"])
        _, g_pol, _, _ = loss_and_grad(pol, val, spec_p, spec_v, batch,
                                       0.2, 0.5, 0.0)
        assert np.abs(g_pol).max() < 1e-15

    def test_total_loss_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        spec_p, spec_v = small_specs()
        pol = init_params(spec_p, rng, head_gain=0.5, log_std_init=-0.3)
        val = init_params(spec_v, rng, head_gain=1.0)
        batch = random_batch(rng, spec_p, n=10)
        _, g_pol, g_val, _ = loss_and_grad(pol, val, spec_p, spec_v, batch,
                                           0.2, 0.5, 0.0)

        def loss_pol(p):
            return loss_and_grad(p, val, spec_p, spec_v, batch, 0.2, 0.5, 0.0)[0]

        def loss_val(p):
            return loss_and_grad(pol, p, spec_p, spec_v, batch, 0.2, 0.5, 0.0)[0]

        g_pol_fd = central_difference_gradient(loss_pol, pol, h=1e-6)
        g_val_fd = central_difference_gradient(loss_val, val, h=1e-6)
        for g, g_fd in ((g_pol, g_pol_fd), (g_val, g_val_fd)):
            denom = np.maximum(np.abs(g_fd), 1e-5)
            assert (np.abs(g - g_fd) / denom).max() < 1e-3

    def test_nonfinite_loss_raises_with_batch(self):
        rng = np.random.default_rng(19)
        spec_p, spec_v = small_specs()
        pol = init_params(spec_p, rng)
        val = init_params(spec_v, rng)
        batch = random_batch(rng, spec_p)
        batch["logp_old"] = np.full_like(batch["logp_old"], -np.inf)
        with np.errstate(invalid="ignore", over="ignore"):
            loss, *_ = loss_and_grad(pol, val, spec_p, spec_v, batch, 0.2, 0.5, 0.0)
        assert not np.isfinite(loss)


class TestOptim:
    def test_adam_reduces_quadratic(self):
        opt = Adam(3, lr=0.1)
        x = np.array([2.0, -1.5, 0.7])
        for _ in range(300):
            x = opt.step(x, 2.0 * x)
        assert np.abs(x).max() < 1e-3

    def test_global_norm_clip(self):
        g1, g2 = np.array([3.0, 0.0]), np.array([0.0, 4.0])
        (c1, c2), total = clip_global_norm([g1, g2], 0.5)
        assert total == pytest.approx(5.0)
        assert np.sqrt(c1 @ c1 + c2 @ c2) == pytest.approx(0.5)


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(23)
        spec_p = MlpSpec(34, 3, has_log_std=True)
        spec_v = MlpSpec(34, 1)
        pol = init_params(spec_p, rng)
        val = init_params(spec_v, rng)
        path = tmp_path / "ckpt.bin"
        save_checkpoint(path, spec_p, pol, val)
        loaded = load_checkpoint(path)
        assert np.array_equal(loaded["policy_params"], pol)
        assert np.array_equal(loaded["value_params"], val)
        assert loaded["policy_spec"] == spec_p
        x = rng.normal(0, 1, 34)
        y1, _ = forward(pol, spec_p, x)
        y2, _ = forward(loaded["policy_params"], loaded["policy_spec"], x)
        assert np.array_equal(y1, y2)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)


class TestConfig:
    def test_batch_size_must_divide(self):
        with pytest.raises(ValueError):
            PpoConfig(n_envs=6, rollout_steps=100, batch_size=999)

    def test_paper_hyperparameters_default(self):
        cfg = PpoConfig()
        assert cfg.total_steps == 10_000_000
        assert cfg.n_envs == 6
        assert cfg.rollout_steps == 2048
        assert cfg.batch_size == 1024
        assert cfg.epochs == 10
