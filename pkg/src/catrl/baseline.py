"""Vanilla tabular Q-learning over concrete states, for comparison runs."""

from __future__ import annotations

from .agent import AgentConfig, EpisodeRecord
from .cat import REAL


class ConcreteQTable:
    """Q-values keyed by (concrete state tuple, action id); default 0."""

    def __init__(self):
        self.q: dict[tuple, float] = {}

    def get(self, state, action) -> float:
        return self.q.get((state, action), 0.0)

    def set(self, state, action, value):
        self.q[(state, action)] = value

    def best_action(self, state, actions) -> int:
        best, best_q = actions[0], self.get(state, actions[0])
        for a in actions[1:]:
            qa = self.get(state, a)
            if qa > best_q:
                best, best_q = a, qa
        return best

    def max_q(self, state, actions) -> float:
        return max(self.get(state, a) for a in actions)

    def n_states(self) -> int:
        return len({s for s, _a in self.q})


def concrete_q_learn(env, config: AgentConfig, rng, table: ConcreteQTable | None = None):
    """One-step epsilon-greedy Q-learning with the shared schedule.

    Returns per-episode records in the same shape as the abstract learner;
    leaf_count reports the number of distinct states in the table.
    """
    config.validate()
    if any(s.kind == REAL for s in env.descriptor.variable_specs):
        raise ValueError("concrete Q-learning requires a discrete state space")
    actions = env.descriptor.actions
    q = table if table is not None else ConcreteQTable()
    stats: list[EpisodeRecord] = []
    epsilon = config.epsilon_start

    for episode in range(1, config.n_epi + 1):
        s = env.reset(rng)
        ret = 0.0
        success = False
        steps = 0
        while steps < config.horizon:
            if epsilon > 0 and rng.random() < epsilon:
                a = actions[rng.randrange(len(actions))]
            else:
                a = q.best_action(s, actions)
            res = env.step(a, rng)
            target = res.reward
            if not res.done:
                target += config.gamma * q.max_q(res.next_state, actions)
            q.set(s, a, (1 - config.alpha) * q.get(s, a) + config.alpha * target)
            ret += (config.gamma ** steps) * res.reward
            steps += 1
            s = res.next_state
            if res.done:
                success = res.success
                break
        stats.append(EpisodeRecord(episode, ret, steps, success, q.n_states(), epsilon))
        epsilon = max(epsilon * config.epsilon_decay, config.epsilon_min)
    return stats
