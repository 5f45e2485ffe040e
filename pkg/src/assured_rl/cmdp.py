"""Finite damage-augmented CMDPs: model, sampling, validation, text format."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-12


class ModelError(ValueError):
    """Raised for structurally invalid models or out-of-range ids."""


@dataclass(frozen=True)
class Outcome:
    prob: float
    s_next: int
    reward: float
    damage: int


@dataclass(frozen=True)
class TransitionSample:
    s: int
    a: int
    s_next: int
    r: float
    d: int


class TabularCmdp:
    """Explicit model ``p(s', r, d | s, a)`` with a terminal damage state.

    ``outcomes[s][a]`` is a sequence of :class:`Outcome`.  Besides the damage
    state, other absorbing states (a maze goal, say) may be listed in
    ``terminal_states``; learners and solvers pin their values at zero.

    The constructor only checks shapes and index ranges, so that broken models
    can still be built and handed to :func:`validate_model`.
    """

    def __init__(
        self,
        n_states: int,
        n_actions: int,
        damage_state: int,
        outcomes: Sequence[Sequence[Sequence[Outcome]]],
        start: Sequence[float],
        terminal_states: Iterable[int] = (),
    ):
        if n_states < 1 or n_actions < 1:
            raise ModelError("a model needs at least one state and one action")
        if not 0 <= damage_state < n_states:
            raise ModelError(f"damage state {damage_state} out of range")
        if len(outcomes) != n_states or any(len(row) != n_actions for row in outcomes):
            raise ModelError("outcome table must be n_states x n_actions")
        if len(start) != n_states:
            raise ModelError("start distribution must have one entry per state")
        terminals = frozenset(int(t) for t in terminal_states) | {damage_state}
        if any(not 0 <= t < n_states for t in terminals):
            raise ModelError("terminal state out of range")
        table = []
        for row in outcomes:
            cells = []
            for cell in row:
                cell = tuple(
                    Outcome(float(o.prob), int(o.s_next), float(o.reward), int(o.damage))
                    for o in cell
                )
                for o in cell:
                    if not 0 <= o.s_next < n_states:
                        raise ModelError(f"successor {o.s_next} out of range")
                cells.append(cell)
            table.append(tuple(cells))
        self.n_states = n_states
        self.n_actions = n_actions
        self.damage_state = damage_state
        self.terminal_states = terminals
        self.outcomes: tuple[tuple[tuple[Outcome, ...], ...], ...] = tuple(table)
        self.start = tuple(float(p) for p in start)

    def __repr__(self) -> str:
        return (
            f"TabularCmdp(n_states={self.n_states}, n_actions={self.n_actions}, "
            f"damage_state={self.damage_state})"
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TabularCmdp):
            return NotImplemented
        return (
            self.n_states == other.n_states
            and self.n_actions == other.n_actions
            and self.damage_state == other.damage_state
            and self.terminal_states == other.terminal_states
            and self.outcomes == other.outcomes
            and self.start == other.start
        )

    def is_terminal(self, s: int) -> bool:
        return s in self.terminal_states

    def check_ids(self, s: int, a: int | None = None) -> None:
        if not 0 <= s < self.n_states:
            raise ModelError(f"state {s} out of range [0, {self.n_states})")
        if a is not None and not 0 <= a < self.n_actions:
            raise ModelError(f"action {a} out of range [0, {self.n_actions})")

    @cached_property
    def transition_matrix(self) -> np.ndarray:
        """``P[s, a, s']``, outcome masses summed per successor."""
        p = np.zeros((self.n_states, self.n_actions, self.n_states))
        for s, row in enumerate(self.outcomes):
            for a, cell in enumerate(row):
                for o in cell:
                    p[s, a, o.s_next] += o.prob
        return p

    @cached_property
    def damage_mass(self) -> np.ndarray:
        """``E[D | s, a]``."""
        d = np.zeros((self.n_states, self.n_actions))
        for s, row in enumerate(self.outcomes):
            for a, cell in enumerate(row):
                d[s, a] = sum(o.prob * o.damage for o in cell)
        return d

    @cached_property
    def expected_reward(self) -> np.ndarray:
        r = np.zeros((self.n_states, self.n_actions))
        for s, row in enumerate(self.outcomes):
            for a, cell in enumerate(row):
                r[s, a] = sum(o.prob * o.reward for o in cell)
        return r

    @cached_property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.terminal_states)] = True
        return mask

    def to_text(self) -> str:
        lines = [
            "# tabular cmdp v1",
            f"states {self.n_states}",
            f"actions {self.n_actions}",
            f"damage_state {self.damage_state}",
            "terminals " + " ".join(str(t) for t in sorted(self.terminal_states)),
            "start " + " ".join(f"{s} {p!r}" for s, p in enumerate(self.start) if p != 0.0),
            "# s a s_next prob reward damage",
        ]
        for s, row in enumerate(self.outcomes):
            for a, cell in enumerate(row):
                for o in cell:
                    lines.append(f"{s} {a} {o.s_next} {o.prob!r} {o.reward!r} {o.damage}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TabularCmdp":
        header: dict[str, list[str]] = {}
        rows: list[tuple[int, int, Outcome]] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0].isalpha() or "_" in parts[0]:
                    header[parts[0]] = parts[1:]
                    continue
                s, a, s_next = int(parts[0]), int(parts[1]), int(parts[2])
                prob, reward, damage = float(parts[3]), float(parts[4]), int(parts[5])
            except (IndexError, ValueError) as exc:
                raise ModelError(f"line {lineno}: cannot parse {raw!r}") from exc
            rows.append((s, a, Outcome(prob, s_next, reward, damage)))
        try:
            n_states = int(header["states"][0])
            n_actions = int(header["actions"][0])
            damage_state = int(header["damage_state"][0])
        except (KeyError, IndexError, ValueError) as exc:
            raise ModelError("model text lacks states/actions/damage_state header") from exc
        terminals = [int(t) for t in header.get("terminals", [])]
        start = [0.0] * n_states
        spec = header.get("start", [])
        for i in range(0, len(spec) - 1, 2):
            start[int(spec[i])] = float(spec[i + 1])
        table: list[list[list[Outcome]]] = [
            [[] for _ in range(n_actions)] for _ in range(n_states)
        ]
        for s, a, o in rows:
            if not (0 <= s < n_states and 0 <= a < n_actions):
                raise ModelError(f"pair ({s}, {a}) out of range")
            table[s][a].append(o)
        return cls(n_states, n_actions, damage_state, table, start, terminals)


@dataclass(frozen=True)
class Violation:
    kind: str
    s: int
    a: int | None = None
    outcome: int | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def validate_model(model: TabularCmdp) -> ValidationReport:
    """Check normalization and the three terminal-damage conditions.

    Reported kinds: ``normalization`` (negative mass or row sum off by more
    than 1e-12), ``damage`` (flag not in {0, 1}), ``cond_1`` (entering the
    damage state without damage), ``cond_2`` (damage without entering it),
    ``cond_3`` (damage state not absorbing with zero damage) and ``start``.
    """
    report = ValidationReport()
    add = report.violations.append
    sd = model.damage_state
    for s, row in enumerate(model.outcomes):
        for a, cell in enumerate(row):
            total = 0.0
            for k, o in enumerate(cell):
                if o.prob < 0:
                    add(Violation("normalization", s, a, k, f"negative mass {o.prob}"))
                total += o.prob
                if o.damage not in (0, 1):
                    add(Violation("damage", s, a, k, f"damage flag {o.damage}"))
                if o.prob <= 0:
                    continue
                if s == sd:
                    if o.s_next != sd or o.damage != 0:
                        add(Violation("cond_3", s, a, k, "damage state must self-loop with d=0"))
                elif o.s_next == sd and o.damage == 0:
                    add(Violation("cond_1", s, a, k, "enters damage state without damage"))
                elif o.s_next != sd and o.damage == 1:
                    add(Violation("cond_2", s, a, k, "damage without entering damage state"))
            if abs(total - 1.0) > PROB_TOL:
                add(Violation("normalization", s, a, None, f"row sums to {total!r}"))
    if any(p < 0 for p in model.start) or abs(sum(model.start) - 1.0) > PROB_TOL:
        add(Violation("start", -1, detail="start distribution is not a distribution"))
    return report


def sample_transition(model: TabularCmdp, s: int, a: int, rng: random.Random) -> TransitionSample:
    model.check_ids(s, a)
    cell = model.outcomes[s][a]
    if not cell:
        raise ModelError(f"pair ({s}, {a}) has no outcomes")
    u = rng.random()
    acc = 0.0
    chosen = cell[-1]
    for o in cell:
        acc += o.prob
        if u < acc:
            chosen = o
            break
    return TransitionSample(s, a, chosen.s_next, chosen.reward, chosen.damage)


def sample_start(model: TabularCmdp, rng: random.Random) -> int:
    u = rng.random()
    acc = 0.0
    last = 0
    for s, p in enumerate(model.start):
        if p <= 0:
            continue
        last = s
        acc += p
        if u < acc:
            return s
    return last


@dataclass(frozen=True, eq=False)
class Policy:
    """Stochastic policy as an ``|S| x |A|`` row-stochastic array."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise ValueError("policy must be a 2-d array")
        if (probs < 0).any():
            raise ValueError("policy has negative entries")
        bad = np.abs(probs.sum(axis=1) - 1.0) > PROB_TOL
        if bad.any():
            raise ValueError(f"policy rows {np.flatnonzero(bad).tolist()} do not sum to 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "Policy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def from_action_sets(cls, sets: Sequence[Iterable[int]], n_actions: int) -> "Policy":
        """Uniform over each state's set; empty sets fall back to all actions."""
        probs = np.zeros((len(sets), n_actions))
        for s, acts in enumerate(sets):
            acts = sorted(acts) or list(range(n_actions))
            probs[s, acts] = 1.0 / len(acts)
        return cls(probs)

    def sample(self, s: int, rng: random.Random) -> int:
        u = rng.random()
        acc = 0.0
        row = self.probs[s]
        last = 0
        for a, p in enumerate(row):
            if p <= 0:
                continue
            last = a
            acc += p
            if u < acc:
                return a
        return last
