import logging
from dataclasses import dataclass

import numpy as np

from replay_buffer import ReplayBuffer, Transition

logger = logging.getLogger(__name__)


@dataclass
class ScoreVector:
    """TD-error magnitude for every buffer index, from one parameter snapshot."""

    scores: np.ndarray
    computed_at_episode: int = 0

    def __len__(self) -> int:
        return len(self.scores)


def td_errors(agent, states, actions, rewards, next_states, dones, gamma: float) -> np.ndarray:
    """|Q(s,a) - r - gamma * max_a' Q_target(s',a')|, bootstrap dropped on terminal steps."""
    q = agent.q_values(states)
    taken = q[np.arange(len(q)), np.asarray(actions, dtype=np.int64)]
    bootstrap = agent.target_q_values(next_states).max(axis=1)
    bootstrap = np.where(np.asarray(dones, dtype=bool), 0.0, gamma * bootstrap)
    return np.abs(taken - np.asarray(rewards, dtype=np.float64) - bootstrap)


def td_error(agent, t: Transition, gamma: float) -> float:
    return float(td_errors(
        agent,
        np.asarray([t.state]),
        [t.action],
        [t.reward],
        np.asarray([t.next_state]),
        [t.done],
        gamma,
    )[0])


def score_buffer(agent, buffer: ReplayBuffer, gamma: float, episode: int = 0) -> ScoreVector:
    """Score every transition against the agent's current parameters."""
    if len(buffer) == 0:
        raise ValueError("empty buffer")

    cols = buffer.columns()
    scores = td_errors(
        agent, cols["state"], cols["action"], cols["reward"], cols["next_state"], cols["done"], gamma
    )
    logger.debug(f"Scored {len(scores)} transitions at episode {episode}, max TD {scores.max():.4g}")
    return ScoreVector(scores=scores, computed_at_episode=episode)


def td_reward_rows(scores: ScoreVector, rewards, plan, episode: int) -> list:
    """(td_error, reward) pair for every sampled transition of an epoch plan."""
    rows = []
    for g, batch in enumerate(plan.batches):
        for index in batch:
            rows.append({
                'episode': episode,
                'batch': g,
                'index': index,
                'td_error': float(scores.scores[index]),
                'reward': float(rewards[index]),
            })
    return rows


def surprise_profile(scores: ScoreVector, plan, episode: int) -> list:
    """TD error of each position in each sampled batch, normalized by the batch maximum."""
    rows = []
    for g, batch in enumerate(plan.batches):
        values = scores.scores[np.asarray(batch, dtype=np.int64)]
        peak = values.max()
        normalized = values / peak if peak > 0 else np.zeros_like(values)
        for position, (index, value) in enumerate(zip(batch, normalized)):
            rows.append({
                'episode': episode,
                'batch': g,
                'position': position,
                'index': index,
                'normalized_td': float(value),
            })
    return rows
