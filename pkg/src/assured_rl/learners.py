"""Assured Q-learning / SARSA and the penalty-based Q-learning baseline."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .barrier import BarrierTable
from .extreal import NEG_INF, ExtReal, ext_add, ext_blend, ext_scale
from .tables import QTable


class Algorithm(str, Enum):
    ASSURED_Q = "assured-q"
    ASSURED_SARSA = "assured-sarsa"
    BASELINE_Q = "baseline-q"

    @property
    def assured(self) -> bool:
        return self is not Algorithm.BASELINE_Q


@dataclass(frozen=True)
class LearnerConfig:
    """Hyper-parameters of one training run.

    ``barrier_enabled=False`` keeps ``B`` identically zero in the assured
    learners (an ablation); ``penalize_damage=False`` turns the baseline into
    plain Q-learning that sees the raw reward on a bump instead of ``-inf``.
    """

    gamma: float = 0.9
    epsilon: float = 0.1
    eta: float = 0.1
    episodes: int = 2000
    step_cap: int = 100
    algorithm: Algorithm = Algorithm.ASSURED_Q
    barrier_enabled: bool = True
    penalize_damage: bool = True

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.episodes < 0 or self.step_cap < 1:
            raise ValueError("episodes must be >= 0 and step_cap >= 1")


@dataclass
class EpisodeStats:
    length: int
    discounted_return: float
    violations: int
    skipped: bool = False


@dataclass
class TrainLog:
    episodes: list[EpisodeStats]
    q: QTable
    barrier: BarrierTable

    @property
    def cumulative_violations(self) -> list[int]:
        total, out = 0, []
        for ep in self.episodes:
            total += ep.violations
            out.append(total)
        return out


def select_action(
    q: QTable, s: int, safe: Sequence[int], epsilon: float, rng: random.Random
) -> int:
    """Epsilon-greedy over ``safe``; greedy ties broken uniformly."""
    if not safe:
        raise ValueError(f"no permitted action in state {s}")
    if rng.random() < epsilon:
        return safe[rng.randrange(len(safe))]
    row = q.rows[s]
    best: ExtReal = NEG_INF
    ties: list[int] = []
    for a in safe:
        v = row[a]
        if v == best:
            ties.append(a)
        elif v > best:
            best = v
            ties = [a]
    if len(ties) == 1:
        return ties[0]
    return ties[rng.randrange(len(ties))]


def _target(q: QTable, r: ExtReal, s_next: int, gamma: float) -> ExtReal:
    return ext_add(r, ext_scale(gamma, q.row_max(s_next)))


def assured_q_update(
    q: QTable, b: BarrierTable, s: int, a: int, r: float, s_next: int, d: int, eta: float, gamma: float
) -> ExtReal:
    """``Q(s,a) <- B(s,a) + blend(Q(s,a), r + gamma max Q(s',.))``.

    ``B(s, a)`` must already include this transition's barrier update; ``d``
    acts only through it and is accepted so the call mirrors the barrier's.
    """
    value = ext_add(b.rows[s][a], ext_blend(q.rows[s][a], _target(q, r, s_next, gamma), eta))
    q.rows[s][a] = value
    return value


def assured_sarsa_update(
    q: QTable,
    b: BarrierTable,
    s: int,
    a: int,
    r: float,
    s_next: int,
    a_next: int | None,
    d: int,
    eta: float,
    gamma: float,
) -> ExtReal:
    """On-policy variant; ``a_next=None`` bootstraps from ``max Q(s', .)``,
    which is 0 for terminals and NEG_INF for a fully condemned state."""
    if a_next is None:
        target = _target(q, r, s_next, gamma)
    else:
        target = ext_add(r, ext_scale(gamma, q.rows[s_next][a_next]))
    value = ext_add(b.rows[s][a], ext_blend(q.rows[s][a], target, eta))
    q.rows[s][a] = value
    return value


def baseline_q_update(
    q: QTable,
    s: int,
    a: int,
    r: float,
    s_next: int,
    d: int,
    eta: float,
    gamma: float,
    penalize_damage: bool = True,
) -> ExtReal:
    r_eff = NEG_INF if d and penalize_damage else r
    value = ext_blend(q.rows[s][a], _target(q, r_eff, s_next, gamma), eta)
    q.rows[s][a] = value
    return value


@dataclass
class Learner:
    """Tables for one training run: ``Q``, ``B`` and the safe sets inside ``B``."""

    n_states: int
    n_actions: int
    terminal_states: frozenset[int]
    q: QTable = field(init=False)
    barrier: BarrierTable = field(init=False)

    def __post_init__(self):
        self.q = QTable(self.n_states, self.n_actions)
        self.barrier = BarrierTable(self.n_states, self.n_actions, self.terminal_states)

    @classmethod
    def for_env(cls, env) -> "Learner":
        return cls(env.n_states, env.n_actions, frozenset(env.terminal_states))


def run_episode(env, learner: Learner, config: LearnerConfig, rng: random.Random) -> EpisodeStats:
    """Play one episode, learning online.  ``env`` follows the GridEnv protocol."""
    if config.algorithm is Algorithm.ASSURED_SARSA:
        return _sarsa_episode(env, learner, config, rng)
    q, b = learner.q, learner.barrier
    gamma, eta, eps = config.gamma, config.eta, config.epsilon
    assured = config.algorithm.assured
    use_barrier = assured and config.barrier_enabled
    all_actions = list(range(learner.n_actions))

    s = env.reset(rng)
    if assured and b.is_unsafe_state(s):
        return EpisodeStats(0, 0.0, 0, skipped=True)
    length, ret, disc, violations = 0, 0.0, 1.0, 0
    while length < config.step_cap:
        safe = b.safe_actions(s) if assured else all_actions
        a = select_action(q, s, safe, eps, rng)
        s_next, r, d, done = env.step(a)
        length += 1
        ret += disc * r
        disc *= gamma
        violations += d
        if assured:
            if use_barrier:
                b.update(s, a, s_next, d)
            if assured_q_update(q, b, s, a, r, s_next, d, eta, gamma) is NEG_INF:
                b.condemn(s, a)
        else:
            baseline_q_update(q, s, a, r, s_next, d, eta, gamma, config.penalize_damage)
        s = s_next
        if done or (assured and b.is_unsafe_state(s)):
            break
    return EpisodeStats(length, ret, violations)


def _sarsa_episode(env, learner: Learner, config: LearnerConfig, rng: random.Random) -> EpisodeStats:
    q, b = learner.q, learner.barrier
    gamma, eta, eps = config.gamma, config.eta, config.epsilon
    s = env.reset(rng)
    if b.is_unsafe_state(s):
        return EpisodeStats(0, 0.0, 0, skipped=True)
    a = select_action(q, s, b.safe_actions(s), eps, rng)
    length, ret, disc, violations = 0, 0.0, 1.0, 0
    while length < config.step_cap:
        s_next, r, d, done = env.step(a)
        length += 1
        ret += disc * r
        disc *= gamma
        violations += d
        if config.barrier_enabled:
            b.update(s, a, s_next, d)
        if s_next in learner.terminal_states or b.is_unsafe_state(s_next):
            a_next = None
        else:
            a_next = select_action(q, s_next, b.safe_actions(s_next), eps, rng)
        if assured_sarsa_update(q, b, s, a, r, s_next, a_next, d, eta, gamma) is NEG_INF:
            b.condemn(s, a)
        if done or a_next is None:
            break
        s, a = s_next, a_next
    return EpisodeStats(length, ret, violations)


def train(env, config: LearnerConfig, rng: random.Random, learner: Learner | None = None) -> TrainLog:
    learner = learner or Learner.for_env(env)
    episodes = [run_episode(env, learner, config, rng) for _ in range(config.episodes)]
    return TrainLog(episodes, learner.q, learner.barrier)
