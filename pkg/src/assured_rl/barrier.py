"""Model-free barrier learning and the safe-action sets it induces."""

from __future__ import annotations

from typing import Iterable

from .extreal import NEG_INF, ExtReal, ext_add, ext_max, log1m_damage
from .tables import ExtTable


class BarrierTable(ExtTable):
    """Learned action-barrier ``B(s, a)`` with incrementally kept safe sets.

    Entries are exactly ``0.0`` or :data:`NEG_INF` and never recover once
    condemned.  Terminal rows stay at zero.  ``safe_actions(s)`` is the set of
    actions still at zero, kept in ascending order so that random draws from
    it are reproducible.
    """

    __slots__ = ("terminals", "_safe")

    def __init__(self, n_states: int, n_actions: int, terminal_states: Iterable[int] = ()):
        super().__init__(n_states, n_actions, 0.0)
        self.terminals = frozenset(terminal_states)
        self._safe: list[list[int]] = [list(range(n_actions)) for _ in range(n_states)]

    def copy(self) -> "BarrierTable":
        other = BarrierTable(self.n_states, self.n_actions, self.terminals)
        other.rows = [list(r) for r in self.rows]
        other._safe = [list(s) for s in self._safe]
        return other

    @classmethod
    def from_rows(cls, rows, terminal_states: Iterable[int] = ()):
        base = ExtTable.from_rows(rows)
        table = cls(base.n_states, base.n_actions, terminal_states)
        for s, row in enumerate(base.rows):
            for a, v in enumerate(row):
                if v is NEG_INF:
                    table.condemn(s, a)
                elif v != 0.0:
                    raise ValueError(f"barrier entries must be 0 or -inf, got {v!r}")
        return table

    def _check(self, s: int, a: int | None = None) -> None:
        if not 0 <= s < self.n_states or (a is not None and not 0 <= a < self.n_actions):
            raise IndexError(f"pair ({s}, {a}) out of range")

    def update(self, s: int, a: int, s_next: int, d: int) -> ExtReal:
        """One Barrier-learner step on the observed ``(s, a, s', d)``.

        ``B(s,a) <- B(s,a) + log(1 - d) + max_a' B(s', a')`` in extended
        arithmetic.  The max runs over all actions of ``s'``; terminal rows
        are zero, and entering the damage state always carries ``d = 1``.
        """
        self._check(s, a)
        self._check(s_next)
        if s in self.terminals:
            return self.rows[s][a]
        value = ext_add(ext_add(self.rows[s][a], log1m_damage(d)), ext_max(self.rows[s_next]))
        if value is NEG_INF:
            self.condemn(s, a)
        return value

    def condemn(self, s: int, a: int) -> None:
        """Set ``B(s,a) = NEG_INF`` and drop ``a`` from the safe set of ``s``."""
        if s in self.terminals:
            return
        self.rows[s][a] = NEG_INF
        safe = self._safe[s]
        if a in safe:
            safe.remove(a)

    def safe_actions(self, s: int) -> list[int]:
        """Actions with ``B(s, a) == 0``, ascending.  Do not mutate the result."""
        self._check(s)
        return self._safe[s]

    def is_unsafe_state(self, s: int) -> bool:
        self._check(s)
        return not self._safe[s]

    def unsafe_pairs(self) -> set[tuple[int, int]]:
        return {
            (s, a)
            for s, row in enumerate(self.rows)
            for a, v in enumerate(row)
            if v is NEG_INF
        }


def barrier_update(b: BarrierTable, s: int, a: int, s_next: int, d: int) -> ExtReal:
    return b.update(s, a, s_next, d)


def safe_actions(b: BarrierTable, s: int) -> set[int]:
    return set(b.safe_actions(s))


def is_unsafe_state(b: BarrierTable, s: int) -> bool:
    return b.is_unsafe_state(s)
