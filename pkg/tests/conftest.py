import itertools

import pytest

from assured_rl.gridworld import parse_maze, to_cmdp

CORRIDOR = "#####\n#S.G#\n#####"

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def corridor():
    return parse_maze(CORRIDOR)


@pytest.fixture
def corridor_model(corridor):
    return to_cmdp(corridor)


@pytest.fixture(scope="session")
def acceptance_report():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda l: int(l.split()[1][1:].rstrip(":"))):
            terminalreporter.write_line(line)


def brute_force_unsafe(model):
    """B*(s,a) = -inf by enumerating every deterministic policy of a
    deterministic model and following its (unique) trajectory."""
    live = [s for s in range(model.n_states) if not model.is_terminal(s)]
    safe = set()
    for choice in itertools.product(range(model.n_actions), repeat=len(live)):
        pol = dict(zip(live, choice))
        for s0 in live:
            for a0 in range(model.n_actions):
                s, a, seen, damaged = s0, a0, set(), False
                while (s, a) not in seen:
                    seen.add((s, a))
                    (o,) = model.outcomes[s][a]
                    if o.damage:
                        damaged = True
                        break
                    s = o.s_next
                    if model.is_terminal(s):
                        break
                    a = pol[s]
                if not damaged:
                    safe.add((s0, a0))
    return {(s, a) for s in live for a in range(model.n_actions)} - safe


@pytest.fixture(scope="session")
def brute_unsafe():
    return brute_force_unsafe
