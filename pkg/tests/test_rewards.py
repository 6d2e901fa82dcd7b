import numpy as np
import pytest

from wirehopper.rewards import (
    RewardBreakdown,
    RewardConfig,
    RewardInputs,
    compute_breakdown,
    reward_contact,
    reward_ctrl,
    reward_horizon,
    reward_jump,
    reward_keep,
    reward_range,
)


class TestRewardJump:
    def test_above_cap(self):
        assert reward_jump(1.2) == -1.0

    def test_zero(self):
        assert reward_jump(0.0) == 0.0

    def test_quadratic_branch(self):
        assert reward_jump(0.5) == pytest.approx(0.25, abs=1e-12)

    def test_exactly_at_cap_takes_quadratic_branch(self):
        assert reward_jump(1.1) == pytest.approx(1.21, abs=1e-12)


class TestRewardKeep:
    def test_curriculum_off(self):
        assert reward_keep((3.0, -2.0), 5.0, 0.0) == 0.0

    def test_unit_velocity(self):
        assert reward_keep((1.0, 0.0), 0.0, 1.0) == pytest.approx(-1.0, abs=1e-12)

    def test_mixed(self):
        assert reward_keep((1.0, 1.0), 1.0, 0.5) == pytest.approx(-1.5, abs=1e-12)


class TestRewardHorizon:
    def test_upright(self):
        assert reward_horizon(1.0, 1.0) == 0.0

    def test_body_flat_leg_upright(self):
        assert reward_horizon(0.0, 1.0) == pytest.approx(-1.0, abs=1e-12)

    def test_both_sixty_degrees(self):
        up = np.cos(np.deg2rad(60.0))
        assert reward_horizon(up, up) == pytest.approx(-1.0, abs=1e-12)


class TestRewardCtrl:
    def test_zero_action(self):
        assert reward_ctrl((0.0, 0.0, 0.0)) == 0.0

    def test_full_action(self):
        assert reward_ctrl((1.0, 1.0, 1.0)) == pytest.approx(-18.09, abs=1e-12)

    def test_slide_weight_small(self):
        assert reward_ctrl((0.0, 0.0, 1.0)) == pytest.approx(-0.09, abs=1e-12)


class TestRewardContact:
    def test_airborne(self):
        assert reward_contact(0.2, 0.05) == 0.0

    def test_tip_sunk_one_cm(self):
        assert reward_contact(-0.01, 0.1) == pytest.approx(-0.6, abs=1e-12)

    def test_exactly_zero_heights_no_penalty(self):
        assert reward_contact(0.0, 0.0) == 0.0

    def test_landing_contact_flat_penalty(self):
        assert reward_contact(0.3, -0.002) == pytest.approx(-0.3, abs=1e-12)


class TestRewardRange:
    def test_inside_all_bands(self):
        assert reward_range((0.0, 0.0, 0.5)) == 0.0

    def test_roll_above_band(self):
        assert reward_range((0.5, 0.0, 0.5)) == pytest.approx(-0.1, abs=1e-12)

    def test_slide_above_band(self):
        expected = -50.0 * (0.776 - 0.85) ** 2
        assert reward_range((0.0, 0.0, 0.85)) == pytest.approx(expected, abs=1e-12)

    def test_below_band(self):
        # roll lower edge: -0.8 + 0.4 = -0.4
        assert reward_range((-0.5, 0.0, 0.5)) == pytest.approx(-0.1, abs=1e-12)

    def test_band_must_exist(self):
        with pytest.raises(ValueError):
            RewardConfig(q_thre=(0.9, 0.4, 0.15))


class TestRewardTotal:
    def test_all_zero_terms_gives_survival(self):
        bd = RewardBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        assert bd.total == 0.1

    def test_standing_composition(self):
        # composed from the per-term values at an upright rest pose
        inp = RewardInputs(p_z=0.9, p_dot_xy=(0.0, 0.0), omega_z=0.0,
                           body_up=1.0, leg_up=1.0, action=(0.0, 0.0, 0.0),
                           leg_tip_z=0.0, landing_leg_z=0.0,
                           q=(0.0, 0.0, 0.5), c=0.0)
        bd = compute_breakdown(inp)
        assert bd.total == pytest.approx(0.81 + 0.1, abs=1e-12)

    def test_sum_identity_bit_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            inp = RewardInputs(
                p_z=rng.uniform(-0.5, 2.0),
                p_dot_xy=tuple(rng.normal(0, 2, 2)),
                omega_z=rng.normal(0, 2),
                body_up=rng.uniform(-1, 1),
                leg_up=rng.uniform(-1, 1),
                action=tuple(rng.uniform(-1, 1, 3)),
                leg_tip_z=rng.uniform(-0.05, 0.5),
                landing_leg_z=rng.uniform(-0.05, 0.5),
                q=tuple(rng.uniform(-1, 1, 3)),
                c=rng.uniform(0, 1),
            )
            bd = compute_breakdown(inp)
            manual = (bd.r_jump + bd.r_keep + bd.r_horizon + bd.r_ctrl
                      + bd.r_contact + bd.r_range + bd.survival)
            assert bd.total == manual  # bit-exact, same summation order

    def test_term_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            p_z = rng.uniform(-0.5, 2.0)
            assert -1.0 <= reward_jump(p_z) <= 1.21
            assert reward_keep(rng.normal(0, 3, 2), rng.normal(0, 3), rng.uniform(0, 1)) <= 0.0
            up1, up2 = rng.uniform(-1, 1), rng.uniform(-1, 1)
            assert -4.0 <= reward_horizon(up1, up2) <= 0.0
            a = rng.uniform(-1, 1, 3)
            assert -18.09 <= reward_ctrl(a) <= 0.0
            assert reward_range(rng.uniform(-1.2, 1.2, 3)) <= 0.0
