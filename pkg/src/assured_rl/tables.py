"""State-action tables of extended reals."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .extreal import NEG_INF, ExtReal, ext_max, to_ext


class ExtTable:
    """``|S| x |A|`` table of :data:`ExtReal` stored as nested lists.

    Nested lists rather than an array: the learners touch single entries in a
    tight loop, where list indexing is several times faster than numpy scalar
    access.
    """

    __slots__ = ("n_states", "n_actions", "rows")

    def __init__(self, n_states: int, n_actions: int, fill: ExtReal = 0.0):
        self.n_states = n_states
        self.n_actions = n_actions
        self.rows: list[list[ExtReal]] = [[fill] * n_actions for _ in range(n_states)]

    def __getitem__(self, sa: tuple[int, int]) -> ExtReal:
        s, a = sa
        return self.rows[s][a]

    def __setitem__(self, sa: tuple[int, int], value: ExtReal) -> None:
        s, a = sa
        self.rows[s][a] = value

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExtTable):
            return NotImplemented
        return self.rows == other.rows

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.n_states}x{self.n_actions})"

    def row_max(self, s: int) -> ExtReal:
        return ext_max(self.rows[s])

    def copy(self):
        other = type(self).__new__(type(self))
        ExtTable.__init__(other, self.n_states, self.n_actions)
        other.rows = [list(r) for r in self.rows]
        return other

    def to_array(self) -> np.ndarray:
        """Float view with NEG_INF rendered as IEEE ``-inf``."""
        return np.array([[float(v) for v in row] for row in self.rows], dtype=float)

    @classmethod
    def from_rows(cls, rows: Sequence[Iterable[float]]):
        rows = [[to_ext(v) for v in row] for row in rows]
        table = cls(len(rows), len(rows[0]) if rows else 0)
        table.rows = rows
        return table

    def to_text(self) -> str:
        return "".join(" ".join(_fmt(v) for v in row) + "\n" for row in self.rows)

    @classmethod
    def from_text(cls, text: str):
        rows = [line.split() for line in text.splitlines() if line.strip()]
        return cls.from_rows([[float(tok) for tok in row] for row in rows])


def _fmt(v: ExtReal) -> str:
    if v is NEG_INF:
        return "-inf"
    if v == 0.0:
        return "0"
    return repr(v)


class QTable(ExtTable):
    __slots__ = ()

    def greedy_action(self, s: int, allowed: Iterable[int] | None = None) -> int | None:
        """Lowest-index maximizer over ``allowed`` (all actions if None)."""
        acts = range(self.n_actions) if allowed is None else sorted(allowed)
        best, best_a = None, None
        for a in acts:
            v = self.rows[s][a]
            if best is None or v > best:
                best, best_a = v, a
        return best_a

