"""Q-learning over abstraction-tree leaves with online refinement.

Training alternates plain episodes with refinement checks: when the recent
success rate stalls, the current greedy policy is frozen and evaluated for a
few episodes while Q-updates go to a scratch table; the spread of those
scratch values flags unstable leaves, a tentative-split variance test blames
one variable per leaf, and the flagged leaves are split with their Q rows
copied down to the children.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cat import Cat, f_split, is_splittable, make_cat


class ExhaustedLeafError(Exception):
    """Raised when a leaf has no splittable variable left."""


@dataclass
class AgentConfig:
    alpha: float = 0.05
    gamma: float = 0.95
    epsilon_start: float = 0.95
    epsilon_decay: float = 0.99
    epsilon_min: float = 0.05
    f: int = 2
    n_epi: int = 2000
    n_eval: int = 10
    n_check: int = 50
    success_window: int = 100
    success_threshold: float = 0.6
    min_samples: int = 5
    horizon: int = 200

    def validate(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.f < 2:
            raise ValueError("split factor f must be >= 2")
        for name in ("n_eval", "n_check", "success_window", "min_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_epi < 0 or self.horizon < 0:
            raise ValueError("n_epi and horizon must be >= 0")
        if not 0 <= self.success_threshold <= 1:
            raise ValueError("success_threshold must be in [0, 1]")
        for name in ("epsilon_start", "epsilon_decay", "epsilon_min"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")


class AbstractQTable:
    """Q-values keyed by (leaf id, action id); unseen pairs read as 0."""

    def __init__(self):
        self.q: dict[tuple[int, int], float] = {}

    def get(self, leaf: int, action: int) -> float:
        return self.q.get((leaf, action), 0.0)

    def set(self, leaf: int, action: int, value: float):
        self.q[(leaf, action)] = value

    def best_action(self, leaf: int, actions) -> int:
        # lowest-action-id tie-break
        best, best_q = actions[0], self.get(leaf, actions[0])
        for a in actions[1:]:
            qa = self.get(leaf, a)
            if qa > best_q:
                best, best_q = a, qa
        return best

    def max_q(self, leaf: int, actions) -> float:
        return max(self.get(leaf, a) for a in actions)

    def copy(self) -> "AbstractQTable":
        out = AbstractQTable()
        out.q = dict(self.q)
        return out


@dataclass(frozen=True)
class DispersionSample:
    episode: int
    step: int
    leaf: int
    action: int
    q_value: float
    concrete_state: tuple


@dataclass
class DispersionLog:
    samples: list[DispersionSample] = field(default_factory=list)

    def append(self, sample: DispersionSample):
        self.samples.append(sample)


@dataclass
class EpisodeRecord:
    episode: int
    ret: float
    steps: int
    success: bool
    leaf_count: int
    epsilon: float


@dataclass
class ExtendedStep:
    next_state: tuple
    next_leaf: int
    r_bar: float
    k: int
    done: bool
    success: bool


@dataclass
class LearnResult:
    cat: Cat
    q: AbstractQTable
    stats: list[EpisodeRecord]


def select_action(q: AbstractQTable, leaf: int, actions, epsilon: float, rng) -> int:
    if epsilon > 0 and rng.random() < epsilon:
        return actions[rng.randrange(len(actions))]
    return q.best_action(leaf, actions)


def extended_step(env, cat: Cat, state, action, gamma: float, max_steps: int, rng) -> ExtendedStep:
    """Repeat one concrete action until the abstract state changes, the
    episode ends, progress is blocked, or max_steps concrete steps elapse.

    Returns the discounted in-option reward and the number of concrete steps
    taken, for the SMDP-style update.
    """
    start_leaf = cat.find_abstract(state)
    r_bar = 0.0
    k = 0
    s = tuple(state)
    while True:
        res = env.step(action, rng)
        r_bar += (gamma ** k) * res.reward
        k += 1
        next_leaf = cat.find_abstract(res.next_state)
        if res.done or next_leaf != start_leaf or res.next_state == s or k >= max_steps:
            return ExtendedStep(res.next_state, next_leaf, r_bar, k, res.done, res.success)
        s = res.next_state


def q_update(q: AbstractQTable, leaf: int, action: int, r_bar: float, k: int,
             next_leaf: int, done: bool, alpha: float, gamma: float, actions):
    target = r_bar
    if not done:
        target += (gamma ** k) * q.max_q(next_leaf, actions)
    q.set(leaf, action, (1 - alpha) * q.get(leaf, action) + alpha * target)


def train_episode(env, cat: Cat, q: AbstractQTable, config: AgentConfig,
                  epsilon: float, rng, episode: int = 0) -> EpisodeRecord:
    actions = env.descriptor.actions
    s = env.reset(rng)
    leaf = cat.find_abstract(s)
    steps = 0
    ret = 0.0
    success = False
    while steps < config.horizon:
        a = select_action(q, leaf, actions, epsilon, rng)
        ext = extended_step(env, cat, s, a, config.gamma, config.horizon - steps, rng)
        q_update(q, leaf, a, ext.r_bar, ext.k, ext.next_leaf, ext.done,
                 config.alpha, config.gamma, actions)
        ret += (config.gamma ** steps) * ext.r_bar
        steps += ext.k
        s, leaf = ext.next_state, ext.next_leaf
        if ext.done:
            success = ext.success
            break
    return EpisodeRecord(episode, ret, steps, success, len(cat.leaves), epsilon)


def needs_refinement(stats: list[EpisodeRecord], config: AgentConfig) -> bool:
    if not stats:
        raise ValueError("stats must be non-empty")
    episode = stats[-1].episode
    if episode % config.n_check != 0:
        return False
    window = stats[-config.success_window:]
    rate = sum(r.success for r in window) / len(window)
    return rate < config.success_threshold


def evaluate(env, cat: Cat, q: AbstractQTable, config: AgentConfig, rng) -> DispersionLog:
    """Run n_eval greedy episodes, logging post-update scratch Q-values.

    The policy stays greedy w.r.t. the training table throughout; updates go
    to a scratch copy so training values are untouched.
    """
    actions = env.descriptor.actions
    scratch = q.copy()
    log = DispersionLog()
    for ep in range(1, config.n_eval + 1):
        s = env.reset(rng)
        leaf = cat.find_abstract(s)
        steps = 0
        while steps < config.horizon:
            a = q.best_action(leaf, actions)
            ext = extended_step(env, cat, s, a, config.gamma, config.horizon - steps, rng)
            q_update(scratch, leaf, a, ext.r_bar, ext.k, ext.next_leaf, ext.done,
                     config.alpha, config.gamma, actions)
            log.append(DispersionSample(ep, steps, leaf, a, scratch.get(leaf, a), tuple(s)))
            steps += ext.k
            s, leaf = ext.next_state, ext.next_leaf
            if ext.done:
                break
    return log


def unstable_states(gamma_log: DispersionLog, config: AgentConfig) -> list[int]:
    """Leaves whose Q-value spread stands out.

    Per-pair stds are normalized by the global max, leaves are scored by
    their worst pair, and a 1-D 2-means (centers seeded at min/max score)
    separates the high-dispersion cluster.
    """
    by_pair: dict[tuple[int, int], list[float]] = {}
    for s in gamma_log.samples:
        by_pair.setdefault((s.leaf, s.action), []).append(s.q_value)

    stds = {
        pair: float(np.std(vals))
        for pair, vals in by_pair.items()
        if len(vals) >= config.min_samples
    }
    if not stds:
        return []
    max_std = max(stds.values())
    if max_std == 0:
        return []

    scores: dict[int, float] = {}
    for (leaf, _a), sd in stds.items():
        norm = sd / max_std
        scores[leaf] = max(scores.get(leaf, 0.0), norm)
    if len(scores) == 1:
        # lone scored leaf with positive spread: refine it (bootstraps the
        # single-leaf tree, where clustering has nothing to separate)
        return list(scores)
    if len(set(scores.values())) == 1:
        return []

    leaves = sorted(scores)
    vals = np.array([scores[l] for l in leaves])
    lo_c, hi_c = vals.min(), vals.max()
    assign = np.abs(vals - hi_c) < np.abs(vals - lo_c)  # True = high cluster
    for _ in range(100):
        if assign.any():
            hi_c = vals[assign].mean()
        if (~assign).any():
            lo_c = vals[~assign].mean()
        new_assign = np.abs(vals - hi_c) < np.abs(vals - lo_c)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return [l for l, hi in zip(leaves, assign) if hi]


def unstable_var(gamma_log: DispersionLog, leaf: int, cat: Cat, config: AgentConfig) -> int:
    """Blame the variable whose tentative f-split best explains the leaf's
    Q-value spread (minimal sample-weighted within-bucket variance)."""
    samples = [s for s in gamma_log.samples if s.leaf == leaf]
    theta = cat.node(leaf).abstraction
    candidates = [
        i for i in range(len(theta))
        if is_splittable(theta.intervals[i], config.f, cat.min_real_width)
    ]
    if not candidates:
        raise ExhaustedLeafError(f"leaf {leaf} has no splittable variable")

    best_i, best_cost = None, None
    for i in candidates:
        children = f_split(theta, i, config.f, cat.min_real_width)
        buckets: dict[int, list[float]] = {}
        for s in samples:
            v = s.concrete_state[i]
            for j, child in enumerate(children):
                last = j == len(children) - 1
                itv = child.intervals[i]
                if itv.kind == "integer":
                    inside = itv.lo <= v <= itv.hi
                else:
                    inside = itv.lo <= v < itv.hi or (last and v == itv.hi)
                if inside:
                    buckets.setdefault(j, []).append(s.q_value)
                    break
        cost = sum(len(b) * float(np.var(b)) for b in buckets.values())
        if best_cost is None or cost < best_cost:
            best_i, best_cost = i, cost
    return best_i


def refine_and_transfer(cat: Cat, q: AbstractQTable, leaf: int, i: int, f: int, actions) -> list[int]:
    """Split a leaf and seed each child's Q row from the parent's."""
    new_ids = cat.refine_leaf(leaf, i, f)
    for child in new_ids:
        for a in actions:
            q.set(child, a, q.get(leaf, a))
    return new_ids


def learn(env, config: AgentConfig, rng) -> LearnResult:
    """Full training loop: episodes interleaved with refinement phases."""
    config.validate()
    cat = make_cat(env.descriptor.variable_specs)
    q = AbstractQTable()
    stats: list[EpisodeRecord] = []
    actions = env.descriptor.actions
    epsilon = config.epsilon_start

    for episode in range(1, config.n_epi + 1):
        rec = train_episode(env, cat, q, config, epsilon, rng, episode)
        stats.append(rec)
        epsilon = max(epsilon * config.epsilon_decay, config.epsilon_min)

        if needs_refinement(stats, config):
            log = evaluate(env, cat, q, config, rng)
            for leaf in unstable_states(log, config):
                try:
                    i = unstable_var(log, leaf, cat, config)
                except ExhaustedLeafError:
                    continue
                refine_and_transfer(cat, q, leaf, i, config.f, actions)
    return LearnResult(cat, q, stats)
