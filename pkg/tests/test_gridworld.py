import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assured_rl.cmdp import sample_transition, validate_model
from assured_rl.gridworld import (
    DOWN,
    LEFT,
    RIGHT,
    UP,
    GridEnv,
    MazeParseError,
    RestartMode,
    bump_pairs,
    parse_maze,
    shipped_maze,
    random_maze,
    shortest_path,
    to_cmdp,
)


def test_parse_corridor(corridor):
    assert (corridor.width, corridor.height) == (5, 3)
    assert corridor.start == (1, 1)
    assert corridor.goal == (3, 1)


def test_trailing_newline_optional():
    assert parse_maze("#S.G#\n") == parse_maze("#S.G#")


@pytest.mark.parametrize(
    "text,fragment,line",
    [
        ("S.G\nS.G", "multiple Start", 2),
        ("#S\n#S#", "ragged", 2),
        ("#S.G#x", "illegal", 1),
        ("#..G#", "no Start", 1),
        ("#S.GG", "multiple Goal", 1),
        ("", "empty", 1),
    ],
)
def test_parse_errors(text, fragment, line):
    with pytest.raises(MazeParseError) as info:
        parse_maze(text)
    assert fragment in str(info.value)
    assert info.value.line == line


def test_illegal_character_column():
    with pytest.raises(MazeParseError) as info:
        parse_maze("#S.G#\n##?##")
    assert (info.value.line, info.value.column) == (2, 3)


def test_step_semantics(corridor):
    env = GridEnv(corridor)
    start = env.reset()
    assert start == env.start_state
    middle = env.state_of((2, 1))
    assert env.step(RIGHT) == (middle, 0.0, 0, False)
    assert env.step(RIGHT) == (env.goal_state, 10.0, 0, True)
    with pytest.raises(RuntimeError):
        env.step(RIGHT)


def test_bump(corridor):
    env = GridEnv(corridor)
    env.reset()
    assert env.step(UP) == (env.damage_state, 0.0, 1, True)


def test_off_grid_is_a_bump():
    env = GridEnv(parse_maze("S.G"))
    env.reset()
    for a in (UP, DOWN, LEFT):
        env.reset()
        assert env.step(a)[2] == 1


def test_reset_after_bump_preceding(corridor):
    env = GridEnv(corridor)
    env.reset()
    env.step(UP)
    assert env.reset() == env.start_state
    env.step(RIGHT)
    env.step(DOWN)
    assert env.reset() == env.state_of((2, 1))


def test_reset_after_goal(corridor):
    env = GridEnv(corridor)
    env.reset()
    env.step(RIGHT)
    env.step(DOWN)
    assert env.reset() == env.state_of((2, 1))
    assert env.step(RIGHT)[0] == env.goal_state
    assert env.reset() == env.start_state


def test_reset_fixed_start(corridor):
    env = GridEnv(corridor, restart_mode=RestartMode.FIXED_START)
    env.reset()
    env.step(RIGHT)
    env.step(UP)
    assert env.reset() == env.start_state


def test_truncation_is_not_damage():
    env = GridEnv(parse_maze("S..G"), step_cap=3)
    env.reset()
    env.step(RIGHT)
    env.step(LEFT)
    s, r, d, done = env.step(RIGHT)
    assert done and d == 0 and s == env.state_of((1, 0))
    assert env.reset() == env.start_state


def test_export_corridor(corridor):
    model = to_cmdp(corridor)
    assert model.n_states == 4  # two live cells, goal, s_D
    env = GridEnv(corridor)
    (o,) = model.outcomes[env.start_state][RIGHT]
    assert (o.prob, o.s_next, o.reward, o.damage) == (1.0, env.state_of((2, 1)), 0.0, 0)
    (o,) = model.outcomes[env.start_state][UP]
    assert (o.s_next, o.reward, o.damage) == (model.damage_state, 0.0, 1)
    assert validate_model(model).ok
    assert model.terminal_states == {env.goal_state, env.damage_state}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 7), st.integers(2, 7))
def test_env_matches_export(seed, w, h):
    rng = random.Random(seed)
    spec = random_maze(w, h, 0.3, rng)
    model = to_cmdp(spec)
    assert validate_model(model).ok
    env = GridEnv(spec)
    for s in range(len(spec.open_cells)):
        for a in range(4):
            env.current, env.done, env.steps_this_episode = s, False, 0
            stepped = env.step(a)[:3]
            sampled = sample_transition(model, s, a, rng)
            assert stepped == (sampled.s_next, sampled.r, sampled.d)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32))
def test_random_walk_episodes(seed):
    rng = random.Random(seed)
    env = GridEnv(shipped_maze(), step_cap=30)
    for _ in range(20):
        env.reset()
        damages, done, n = [], False, 0
        while not done:
            _, _, d, done = env.step(rng.randrange(4))
            damages.append(d)
            n += 1
        assert n <= 30
        assert sum(damages) <= 1
        if sum(damages):
            assert damages[-1] == 1


def test_exploring_starts_cover_cells():
    env = GridEnv(shipped_maze(), exploring_starts=True)
    rng = random.Random(0)
    seen = {env.reset(rng) for _ in range(2000)}
    assert seen == set(range(len(shipped_maze().open_cells)))


def test_shipped_maze_shape():
    spec = shipped_maze()
    path = shortest_path(spec)
    assert len(path) - 1 == 6
    # the shortest path runs through a width-1 corridor of length >= 3
    corridor = [c for c in path if spec.cell(c[0], c[1] - 1) == "#" and spec.cell(c[0], c[1] + 1) == "#"]
    assert len(corridor) >= 3


def test_bump_pairs_corridor(corridor):
    env = GridEnv(corridor)
    s0, s1 = env.start_state, env.state_of((2, 1))
    assert bump_pairs(corridor) == {(s0, UP), (s0, DOWN), (s0, LEFT), (s1, UP), (s1, DOWN)}


def test_bump_pairs_shipped_maze_by_hand():
    # top row: S has up/left walls, five corridor cells up/down -> 12;
    # side columns (1,2),(7,2): left/right -> 4; rows 3 and 4 of width 7:
    # row 3 ends 2, row 4 ends 2, row 4 bottom 7, row 3 tops under walls at x=2..6 -> 5
    assert len(bump_pairs(shipped_maze())) == 12 + 4 + 4 + 7 + 5
