import numpy as np
import pytest
from conftest import rollout

from coadapt.core import Experience
from coadapt.envs import DrivingEnv, UnknownDynamicsError
from coadapt.envs.base import OpponentState
from coadapt.envs.driving import (
    ADVANCE,
    COLLISION_PENALTY,
    STEER_MAX,
    driving_dynamics_update,
    final_position,
    lane_of,
)


def driving_experience(xs, last_steer=0.0):
    """10-step record whose pre-step x positions are xs (y fixed by the road)."""
    states = np.array([[x, ADVANCE * t] for t, x in enumerate(xs)])
    actions = np.zeros((10, 1))
    actions[-1, 0] = last_steer
    return Experience(states=states, actions=actions, rewards=np.zeros(10), interaction_index=0)


class TestLaneOf:
    def test_lane_centers(self):
        assert lane_of(-1.0) == 0
        assert lane_of(0.0) == 1
        assert lane_of(1.0) == 2

    def test_nearest_center_wins(self):
        assert lane_of(-0.6) == 0
        assert lane_of(0.4) == 1
        assert lane_of(0.6) == 2

    def test_off_road_clamps_to_outer_lanes(self):
        assert lane_of(-7.3) == 0
        assert lane_of(4.1) == 2


class TestDrivingRules:
    def test_d1_final_lane(self):
        exp = driving_experience([0.0] * 9 + [-0.8])
        assert driving_dynamics_update("d1", 1, exp) == 0

    def test_d1_includes_last_steer(self):
        # final x = 0.9 + tan(pi/4) * 0.2 = 1.1 -> lane 2
        exp = driving_experience([0.0] * 9 + [0.9], last_steer=np.pi / 4)
        assert driving_dynamics_update("d1", 0, exp) == 2

    def test_d2_midpoint_lane(self):
        xs = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, -1.0, -1.0, -1.0]
        assert driving_dynamics_update("d2", 0, driving_experience(xs)) == 2

    def test_d3_quarter_lane(self):
        xs = [0.0, 0.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
        assert driving_dynamics_update("d3", 0, driving_experience(xs)) == 0

    def test_d4_d5_cycle(self):
        exp = driving_experience([0.0] * 10)
        assert [driving_dynamics_update("d4", lane, exp) for lane in (0, 1, 2)] == [1, 2, 0]
        assert [driving_dynamics_update("d5", lane, exp) for lane in (0, 1, 2)] == [2, 0, 1]

    def test_unknown_id(self):
        with pytest.raises(UnknownDynamicsError):
            driving_dynamics_update("d6", 0, driving_experience([0.0] * 10))

    def test_final_position_geometry(self):
        exp = driving_experience([0.0] * 10, last_steer=np.pi / 4)
        np.testing.assert_allclose(final_position(exp), [ADVANCE, 2.0], atol=1e-12)


def make_env(lane=0, switch_probability=0.0):
    env = DrivingEnv(switch_probability=switch_probability)
    env.opponent = OpponentState(strategy=lane, dynamics_id="d4")
    return env


class TestDrivingEnv:
    def test_start_in_middle_lane(self):
        state = make_env().reset_interaction()
        np.testing.assert_allclose(state.ego_position, [0.0, 0.0])

    def test_zero_steer_no_collision_zero_reward(self):
        env = make_env(lane=0)  # slow car far left, ego straight up the middle
        exp = rollout(env, lambda obs, t: [0.0])
        np.testing.assert_allclose(exp.rewards, np.zeros(10))
        np.testing.assert_allclose(final_position(exp), [0.0, 2.0], atol=1e-12)

    def test_driving_through_slow_car(self):
        env = make_env(lane=1)  # slow car in the ego's own lane
        exp = rollout(env, lambda obs, t: [0.0])
        expected = np.zeros(10)
        expected[[3, 4, 5]] = -COLLISION_PENALTY  # post-step y = 0.8, 1.0, 1.2
        np.testing.assert_allclose(exp.rewards, expected)

    def test_swerving_avoids_the_car(self):
        env = make_env(lane=1)
        exp = rollout(env, lambda obs, t: [STEER_MAX if t < 3 else 0.0])
        # after 3 full-steer steps the ego is at x = 0.6, outside the 0.5 band
        assert np.all(exp.rewards[3:] == 0.0)
        assert np.all(exp.rewards[:3] == pytest.approx(-STEER_MAX))

    def test_steering_cost_is_symmetric(self):
        for steer in (0.1, -0.1):
            env = make_env(lane=0)
            env.reset_interaction()
            _, reward = env.step([steer])
            assert reward == pytest.approx(-0.1)

    def test_steer_clamped(self):
        env = make_env()
        assert env.clamp_action(np.array([2.0]))[0] == pytest.approx(STEER_MAX)
        assert env.clamp_action(np.array([-2.0]))[0] == pytest.approx(-STEER_MAX)

    def test_lane_index_stays_valid_under_all_rules(self):
        rng = np.random.default_rng(0)
        env = DrivingEnv(switch_probability=0.2)
        env.reset_opponent(rng)
        for i in range(200):
            exp = rollout(env, lambda obs, t: [float(rng.uniform(-1, 1))], index=i)
            opponent = env.end_interaction(exp, rng)
            assert opponent.strategy in (0, 1, 2)

    def test_oracle_encoding_one_hot(self):
        np.testing.assert_allclose(make_env(lane=2).oracle_encoding(), [0.0, 0.0, 1.0])

    def test_reward_bounds_hold_empirically(self):
        rng = np.random.default_rng(1)
        env = DrivingEnv(switch_probability=0.5)
        env.reset_opponent(rng)
        low, high = env.reward_bounds
        for i in range(100):
            exp = rollout(env, lambda obs, t: [float(rng.uniform(-2, 2))], index=i)
            assert low <= exp.reward_sum <= high
            env.end_interaction(exp, rng)
