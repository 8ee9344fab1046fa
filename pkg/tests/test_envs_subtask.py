import numpy as np
import pytest
from conftest import rollout, scripted_experience

from coadapt.envs import InvalidStrategyError, SubtaskEnv, UnknownDynamicsError
from coadapt.envs.base import OpponentState
from coadapt.envs.subtask import (
    GOALS,
    shift_sequence,
    subtask_dynamics_update,
    validate_sequence,
)


def subtask_exp(final_xy):
    return scripted_experience(final_xy, horizon=30, state_dim=3)


class TestSequenceValidation:
    def test_valid_sequences(self):
        assert validate_sequence((0, 2, 4)) == (0, 2, 4)
        assert validate_sequence((7, 3, 1)) == (7, 3, 1)

    @pytest.mark.parametrize(
        "bad",
        [(0, 2), (0, 2, 4, 6), (0, 2, 2), (0, 1, 2), (0, 2, 9), (1, 2, 4)],
    )
    def test_invalid_sequences(self, bad):
        with pytest.raises(InvalidStrategyError):
            validate_sequence(bad)

    def test_shift_wraps(self):
        assert shift_sequence((0, 2, 4), 2) == (2, 4, 6)
        assert shift_sequence((6, 0, 2), 2) == (0, 2, 4)
        assert shift_sequence((1, 3, 5), -2) == (7, 1, 3)


class TestSubtaskRules:
    def test_d3_d4_cycle(self):
        exp = subtask_exp((0.0, 0.0))
        assert subtask_dynamics_update("d3", (0, 2, 4), exp) == (2, 4, 6)
        assert subtask_dynamics_update("d4", (0, 2, 4), exp) == (6, 0, 2)

    def test_d1_shifts_away_from_ego(self):
        # triple (0,2,4) has mean near the upper-left; candidates are
        # (2,4,6) (mean left) and (6,0,2) (mean right)
        ego_right = subtask_exp((1.0, 0.0))
        assert subtask_dynamics_update("d1", (0, 2, 4), ego_right) == (2, 4, 6)
        ego_left = subtask_exp((-1.0, 0.0))
        assert subtask_dynamics_update("d1", (0, 2, 4), ego_left) == (6, 0, 2)

    def test_d1_tie_prefers_forward_shift(self):
        # ego at the center is equidistant from both shifted triples
        centered = subtask_exp((0.0, 0.0))
        assert subtask_dynamics_update("d1", (0, 2, 4), centered) == (2, 4, 6)

    def test_d2_keeps_when_left_of_third_goal(self):
        # third goal is 4 at (-1, 0): ego must end strictly left of x=-1
        exp = subtask_exp((-1.5, 0.0))
        assert subtask_dynamics_update("d2", (0, 2, 4), exp) == (0, 2, 4)

    def test_d2_flees_otherwise(self):
        exp = subtask_exp((1.0, 0.0))
        assert subtask_dynamics_update("d2", (0, 2, 4), exp) == subtask_dynamics_update(
            "d1", (0, 2, 4), exp
        )

    def test_rules_preserve_validity(self):
        rng = np.random.default_rng(4)
        for rule in ("d1", "d2", "d3", "d4"):
            seq = (1, 5, 3)
            for _ in range(20):
                exp = subtask_exp(rng.uniform(-1.5, 1.5, size=2))
                seq = subtask_dynamics_update(rule, seq, exp)
                validate_sequence(seq)

    def test_unknown_id(self):
        with pytest.raises(UnknownDynamicsError):
            subtask_dynamics_update("d5", (0, 2, 4), subtask_exp((0, 0)))

    def test_malformed_sequence_rejected(self):
        with pytest.raises(InvalidStrategyError):
            subtask_dynamics_update("d3", (0, 1, 2), subtask_exp((0, 0)))


def make_env(sequence=(0, 2, 4)):
    env = SubtaskEnv(switch_probability=0.0)
    env.opponent = OpponentState(strategy=sequence, dynamics_id="d3")
    return env


class TestSubtaskEnv:
    def test_thirty_timesteps(self):
        env = make_env()
        assert env.horizon == 30
        exp = rollout(env, lambda obs, t: [0.0, 0.0])
        assert exp.horizon == 30

    def test_subtask_boundaries_at_10_and_20(self):
        env = make_env(sequence=(0, 2, 4))
        exp = rollout(env, lambda obs, t: [0.0, 0.0])
        # ego parked at the origin: each block's reward is the distance to
        # that block's goal, which is 1 for every goal on the unit circle
        np.testing.assert_allclose(exp.rewards, -np.ones(30))
        # now park the ego on goal 2's position for the middle block
        env2 = make_env(sequence=(0, 2, 4))
        goal2 = GOALS[2]

        def chase_middle(obs, t):
            position = obs[:2]
            if 10 <= t < 20:
                return np.clip(goal2 - position, -0.2, 0.2)
            return [0.0, 0.0]

        exp2 = rollout(env2, chase_middle)
        np.testing.assert_allclose(exp2.rewards[:10], -1.0)
        # by the end of the middle block the ego has reached goal 2
        assert exp2.rewards[19] == pytest.approx(0.0, abs=1e-9)
        # and block 3 is judged against goal 4 at (-1, 0)
        assert exp2.rewards[20] == pytest.approx(
            -float(np.linalg.norm(GOALS[2] - GOALS[4]))
        )

    def test_reward_zero_on_first_goal(self):
        env = make_env(sequence=(2, 4, 6))  # goal 2 at (0, 1)
        env.reset_interaction()
        state = env._state
        state.ego_position = np.array([0.0, 0.7])
        _, reward = env.step([0.0, 0.3])
        assert reward == pytest.approx(0.0, abs=1e-12)

    def test_observation_carries_phase(self):
        env = make_env()
        env.reset_interaction()
        assert env.observation().shape == (3,)
        assert env.observation()[2] == pytest.approx(0.0)
        for _ in range(15):
            env.step([0.0, 0.0])
        assert env.observation()[2] == pytest.approx(0.5)

    def test_sequence_constant_within_interaction(self):
        env = make_env(sequence=(1, 3, 5))
        env.reset_interaction()
        for _ in range(30):
            env.step([0.0, 0.0])
            assert env.opponent.strategy == (1, 3, 5)

    def test_initial_strategies_are_valid_and_varied(self):
        rng = np.random.default_rng(8)
        env = SubtaskEnv()
        seen = set()
        for _ in range(200):
            opponent = env.reset_opponent(rng)
            validate_sequence(opponent.strategy)
            seen.add(opponent.strategy)
        assert len(seen) > 10

    def test_oracle_encoding_concatenated_one_hots(self):
        env = make_env(sequence=(1, 5, 3))
        encoding = env.oracle_encoding()
        assert encoding.shape == (24,)
        expected = np.zeros(24)
        expected[1] = expected[8 + 5] = expected[16 + 3] = 1.0
        np.testing.assert_allclose(encoding, expected)
