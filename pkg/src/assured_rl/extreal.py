"""Extended reals with a single absorbing element, ``NEG_INF``.

Values are plain ``float`` when finite and the singleton :data:`NEG_INF`
otherwise.  ``NEG_INF`` is deliberately *not* IEEE ``-inf``: products such as
``0 * -inf`` or sums like ``-inf + inf`` can never produce NaN, because the
only non-finite element there is absorbs everything it touches.
"""

from __future__ import annotations

import math
import numbers
import random
from typing import Sequence, Union


class _NegInf:
    __slots__ = ()
    _instance: "_NegInf | None" = None

    def __new__(cls) -> "_NegInf":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NEG_INF"

    def __str__(self) -> str:
        return "-inf"

    def __reduce__(self):
        return (_NegInf, ())

    def __float__(self) -> float:
        return -math.inf

    def __hash__(self) -> int:
        return hash("assured_rl.NEG_INF")

    def __eq__(self, other: object) -> bool:
        return other is self

    def __ne__(self, other: object) -> bool:
        return other is not self

    def __lt__(self, other: object) -> bool:
        if other is self:
            return False
        if isinstance(other, (int, float)):
            return True
        return NotImplemented

    def __le__(self, other: object) -> bool:
        if other is self or isinstance(other, (int, float)):
            return True
        return NotImplemented

    def __gt__(self, other: object) -> bool:
        if other is self or isinstance(other, (int, float)):
            return False
        return NotImplemented

    def __ge__(self, other: object) -> bool:
        if other is self:
            return True
        if isinstance(other, (int, float)):
            return False
        return NotImplemented

    # Absorbing under addition; ``ext_*`` helpers are the canonical path.
    def __add__(self, other: object) -> "_NegInf":
        if other is self or isinstance(other, (int, float)):
            return self
        return NotImplemented

    __radd__ = __add__


NEG_INF = _NegInf()

ExtReal = Union[float, _NegInf]


def is_neg_inf(x: ExtReal) -> bool:
    return x is NEG_INF


def to_ext(x: float) -> ExtReal:
    """Convert a float to an extended real; ``-inf`` maps to NEG_INF."""
    if x is NEG_INF:
        return NEG_INF
    x = float(x)
    if x == -math.inf:
        return NEG_INF
    if math.isnan(x) or x == math.inf:
        raise ValueError(f"{x!r} has no extended-real representation")
    return x


def ext_add(x: ExtReal, y: ExtReal) -> ExtReal:
    if x is NEG_INF or y is NEG_INF:
        return NEG_INF
    return x + y


def ext_scale(c: float, x: ExtReal) -> ExtReal:
    """Multiply by a non-negative real.  NEG_INF stays NEG_INF even for c == 0."""
    if c < 0:
        raise ValueError(f"scale factor must be non-negative, got {c}")
    if x is NEG_INF:
        return NEG_INF
    return c * x


def ext_blend(q_old: ExtReal, target: ExtReal, eta: float) -> ExtReal:
    """Convex combination ``(1 - eta) * q_old + eta * target``."""
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    if q_old is NEG_INF or target is NEG_INF:
        return NEG_INF
    return (1.0 - eta) * q_old + eta * target


def log1m_damage(d: int) -> ExtReal:
    """``log(1 - d)`` for a binary damage flag."""
    if isinstance(d, numbers.Integral):
        if d == 0:
            return 0.0
        if d == 1:
            return NEG_INF
    raise ValueError(f"damage must be 0 or 1, got {d!r}")


def ext_max(values: Sequence[ExtReal]) -> ExtReal:
    best: ExtReal = NEG_INF
    for v in values:
        if v is not NEG_INF and (best is NEG_INF or v > best):
            best = v
    return best


def argmax_tiebreak(values: Sequence[ExtReal], rng: random.Random) -> int:
    """Index of a maximal entry; ties are broken uniformly at random."""
    if len(values) == 0:
        raise ValueError("argmax of an empty sequence")
    best = ext_max(values)
    ties = [i for i, v in enumerate(values) if v == best]
    if len(ties) == 1:
        return ties[0]
    return ties[rng.randrange(len(ties))]
