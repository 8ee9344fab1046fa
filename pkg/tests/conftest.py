import numpy as np

from coadapt.core import Experience


def scripted_experience(
    final_xy,
    index: int = 0,
    horizon: int = 10,
    state_dim: int = 2,
    action_dim: int = 2,
) -> Experience:
    """An experience whose recomputed final position equals final_xy.

    All timesteps are zero except the last state, so dynamics rules that look
    at the final position see exactly final_xy.
    """
    states = np.zeros((horizon, state_dim))
    actions = np.zeros((horizon, action_dim))
    states[-1, :2] = np.asarray(final_xy, dtype=np.float64)
    return Experience(
        states=states, actions=actions, rewards=np.zeros(horizon), interaction_index=index
    )


def rollout(env, policy, index: int = 0):
    """Run one full interaction with policy(observation, timestep) -> action.

    Returns the Experience with executed (clamped) actions, as the training
    loop stores them.
    """
    env.reset_interaction()
    states, actions, rewards = [], [], []
    for t in range(env.horizon):
        obs = env.observation()
        action = env.clamp_action(np.asarray(policy(obs, t), dtype=np.float64))
        _, reward = env.step(action)
        states.append(obs)
        actions.append(action)
        rewards.append(reward)
    return Experience(
        states=np.array(states),
        actions=np.array(actions),
        rewards=np.array(rewards),
        interaction_index=index,
    )
