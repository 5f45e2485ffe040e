import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assured_rl.barrier import BarrierTable
from assured_rl.extreal import NEG_INF
from assured_rl.gridworld import (
    RIGHT,
    GridEnv,
    bump_pairs,
    shipped_maze,
    parse_maze,
    random_maze,
    shortest_path,
    to_cmdp,
)
from assured_rl.learners import (
    Algorithm,
    Learner,
    LearnerConfig,
    assured_q_update,
    assured_sarsa_update,
    baseline_q_update,
    run_episode,
    select_action,
    train,
)
from assured_rl.oracle import constrained_value_iteration, safety_kernel
from assured_rl.tables import QTable

ENCLOSED = "#####\n#S#G#\n#####"


def tables(n_states=4, n_actions=4, terminals=(3,)):
    return QTable(n_states, n_actions), BarrierTable(n_states, n_actions, terminals)


def greedy_rollout(env, learner, cap=50):
    s = env.reset()
    steps, total = 0, 0
    while steps < cap:
        a = learner.q.greedy_action(s, learner.barrier.safe_actions(s))
        s, r, d, done = env.step(a)
        steps += 1
        total += d
        if done:
            break
    return steps, total, s


# selection


def test_select_action_greedy_and_restricted():
    q = QTable.from_rows([[1.0, 5.0, 2.0, 3.0]])
    rng = random.Random(0)
    assert select_action(q, 0, [0, 1, 2, 3], 0.0, rng) == 1
    assert select_action(q, 0, [0, 2, 3], 0.0, rng) == 3
    assert all(select_action(q, 0, [2], 1.0, rng) == 2 for _ in range(20))
    row = QTable.from_rows([[1.0, 2.0, 3.0, 4.0]])
    assert select_action(row, 0, [0, 1], 0.0, rng) == 1
    with pytest.raises(ValueError):
        select_action(q, 0, [], 0.1, rng)


def test_select_action_ties_uniform():
    q = QTable(1, 4)
    rng = random.Random(1)
    counts = [0] * 4
    for _ in range(4000):
        counts[select_action(q, 0, [0, 1, 2, 3], 0.0, rng)] += 1
    assert all(abs(c - 1000) < 4 * math.sqrt(4000 * 0.25 * 0.75) for c in counts)


def test_select_action_epsilon_rate():
    q = QTable.from_rows([[1.0, 0.0, 0.0, 0.0]])
    rng = random.Random(7)
    n, eps = 10_000, 0.2
    p = 1 - eps + eps / 4
    hits = sum(select_action(q, 0, [0, 1, 2, 3], eps, rng) == 0 for _ in range(n))
    assert abs(hits / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


# updates


def test_assured_q_update_example():
    q, b = tables()
    q[1, 0] = 5.0
    assert assured_q_update(q, b, 0, 2, 0.0, 1, 0, 0.1, 0.9) == pytest.approx(0.45)
    assert q[0, 2] == pytest.approx(0.45)


def test_assured_q_update_condemned_pair():
    q, b = tables()
    b.condemn(0, 2)
    assert assured_q_update(q, b, 0, 2, 10.0, 1, 1, 0.1, 0.9) is NEG_INF
    assert q[0, 2] is NEG_INF


def test_assured_q_update_into_dead_state():
    q, b = tables()
    q.rows[1] = [NEG_INF] * 4
    assert assured_q_update(q, b, 0, 0, 0.0, 1, 0, 0.5, 0.9) is NEG_INF


def test_assured_q_update_terminal_successor():
    q, b = tables()
    assert assured_q_update(q, b, 0, 0, 10.0, 3, 0, 0.1, 0.9) == pytest.approx(1.0)
    assert assured_q_update(q, b, 0, 1, 10.0, 3, 0, 1.0, 0.9) == 10.0


def test_sarsa_update_uses_next_action():
    q, b = tables()
    q.rows[1] = [4.0, 2.0, 0.0, 0.0]
    assert assured_sarsa_update(q, b, 0, 0, 1.0, 1, 1, 0, 0.5, 0.5) == pytest.approx(1.0)
    q[0, 0] = 0.0
    assert assured_sarsa_update(q, b, 0, 0, 1.0, 1, None, 0, 0.5, 0.5) == pytest.approx(1.5)
    b.condemn(0, 3)
    assert assured_sarsa_update(q, b, 0, 3, 1.0, 1, 0, 0, 0.5, 0.5) is NEG_INF


def test_sarsa_matches_q_on_terminal_step():
    q1, b1 = tables()
    q2, b2 = tables()
    assert assured_sarsa_update(q1, b1, 0, 0, 10.0, 3, None, 0, 0.1, 0.9) == \
        assured_q_update(q2, b2, 0, 0, 10.0, 3, 0, 0.1, 0.9)


def test_baseline_update_penalizes_damage():
    q, _ = tables()
    assert baseline_q_update(q, 0, 0, 0.0, 3, 1, 0.1, 0.9) is NEG_INF
    q2, _ = tables()
    assert baseline_q_update(q2, 0, 0, 0.0, 3, 1, 0.1, 0.9, penalize_damage=False) == 0.0
    assert baseline_q_update(q2, 0, 1, 10.0, 3, 0, 0.1, 0.9) == pytest.approx(1.0)


def test_config_validation():
    for kwargs in ({"gamma": 1.0}, {"gamma": 0.0}, {"epsilon": 1.5}, {"eta": 0.0}, {"episodes": -1}):
        with pytest.raises(ValueError):
            LearnerConfig(**kwargs)
    assert LearnerConfig(algorithm="baseline-q").algorithm is Algorithm.BASELINE_Q


# episodes


def test_corridor_converges_to_two_step_path(corridor):
    env = GridEnv(corridor)
    learner = Learner.for_env(env)
    rng = random.Random(0)
    train(env, LearnerConfig(episodes=300), rng, learner)
    stats = run_episode(env, learner, LearnerConfig(epsilon=0.0, episodes=1), rng)
    assert (stats.length, stats.violations) == (2, 0)
    assert stats.discounted_return == pytest.approx(9.0)


def test_first_step_bump_and_skipped_start():
    env = GridEnv(parse_maze(ENCLOSED))
    learner = Learner.for_env(env)
    rng = random.Random(0)
    first = run_episode(env, learner, LearnerConfig(episodes=1), rng)
    assert (first.length, first.violations, first.skipped) == (1, 1, False)
    log = train(env, LearnerConfig(episodes=10), rng, learner)
    assert sum(e.violations for e in log.episodes) == 3
    assert log.episodes[-1].skipped and log.episodes[-1].length == 0
    assert learner.barrier.is_unsafe_state(env.start_state)


def test_baseline_never_skips():
    env = GridEnv(parse_maze(ENCLOSED))
    log = train(env, LearnerConfig(episodes=10, algorithm="baseline-q"), random.Random(0))
    assert all(e.violations == 1 and not e.skipped for e in log.episodes)


def test_train_zero_episodes(corridor):
    env = GridEnv(corridor)
    log = train(env, LearnerConfig(episodes=0), random.Random(0))
    assert log.episodes == [] and log.cumulative_violations == []
    assert log.q == QTable(env.n_states, 4)


def test_cumulative_violations():
    env = GridEnv(parse_maze(ENCLOSED))
    log = train(env, LearnerConfig(episodes=6), random.Random(0))
    assert log.cumulative_violations == [1, 2, 3, 4, 4, 4]


@pytest.mark.parametrize("algo", ["assured-q", "assured-sarsa"])
@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_coupling_and_violation_bound(algo, seed):
    rng = random.Random(seed)
    spec = random_maze(5, 4, 0.25, rng)
    env = GridEnv(spec, exploring_starts=True)
    learner = Learner.for_env(env)
    config = LearnerConfig(episodes=1, algorithm=algo)
    total = 0
    for _ in range(200):
        total += run_episode(env, learner, config, rng).violations
        for s in range(env.n_states):
            if s in env.terminal_states:
                continue
            for a in range(4):
                assert (learner.q[s, a] is NEG_INF) == (learner.barrier[s, a] is NEG_INF)
    assert total <= len(bump_pairs(spec, reachable_only=False))


def test_shipped_maze_violations_bounded_by_bump_pairs():
    spec = shipped_maze()
    env = GridEnv(spec)
    log = train(env, LearnerConfig(episodes=2000), random.Random(11))
    assert log.cumulative_violations[-1] <= len(bump_pairs(spec))


def test_sarsa_greedy_path_matches_constrained_vi():
    spec = shipped_maze()
    env = GridEnv(spec)
    learner = Learner.for_env(env)
    rng = random.Random(5)
    train(env, LearnerConfig(episodes=2000, algorithm="assured-sarsa"), rng, learner)
    train(env, LearnerConfig(episodes=500, epsilon=0.0, algorithm="assured-sarsa"), rng, learner)
    model = to_cmdp(spec)
    q_star = constrained_value_iteration(model, safety_kernel(model), 0.9)
    steps, bumps, end = greedy_rollout(env, learner)
    assert (steps, bumps, end) == (len(shortest_path(spec)) - 1, 0, env.goal_state)
    s = env.reset()
    while s != env.goal_state:
        a = learner.q.greedy_action(s, learner.barrier.safe_actions(s))
        assert q_star[s, a] == q_star.row_max(s)
        s = env.step(a)[0]


def test_step_cap_truncates(corridor):
    env = GridEnv(parse_maze("######\n#S..G#\n######"), step_cap=1)
    learner = Learner.for_env(env)
    learner.q[env.start_state, RIGHT] = 1.0
    stats = run_episode(env, learner, LearnerConfig(epsilon=0.0, step_cap=1, episodes=1), random.Random(0))
    assert stats.length == 1 and stats.violations == 0
