"""Exact model-based ground truth for the learners.

Everything here reads a :class:`~assured_rl.cmdp.TabularCmdp` directly:
the safety kernel (which pairs have ``B* = -inf``), the violation probability
``q_D`` of a fixed policy, the policy barrier ``B^pi`` (read off ``q_D``,
and independently as the fixed point of its own Bellman equation), value
iteration restricted to the kernel, and a brute-force Monte-Carlo estimate
of ``q_D`` to check the fixed-point solver against.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass

import numpy as np

from .barrier import BarrierTable
from .cmdp import ModelError, Outcome, Policy, TabularCmdp, validate_model
from .extreal import NEG_INF, ext_add, log1m_damage
from .tables import QTable

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
MAX_SWEEPS = 10**6


class SolverError(RuntimeError):
    pass


def _require_valid(model: TabularCmdp) -> None:
    report = validate_model(model)
    if not report.ok:
        first = report.violations[0]
        raise ModelError(
            f"invalid model ({len(report.violations)} violations, first: {first.kind} "
            f"at s={first.s}, a={first.a}: {first.detail})"
        )


@dataclass(frozen=True, eq=False)
class SafetyKernel:
    """``unsafe[s, a]`` is True exactly where ``B*(s, a) = -inf``."""

    unsafe: np.ndarray
    terminal_states: frozenset[int]

    @property
    def n_states(self) -> int:
        return self.unsafe.shape[0]

    def safe_actions(self, s: int) -> list[int]:
        return np.flatnonzero(~self.unsafe[s]).tolist()

    def dead_states(self) -> list[int]:
        """Non-terminal states without a single safe action."""
        return [
            s
            for s in range(self.n_states)
            if s not in self.terminal_states and self.unsafe[s].all()
        ]

    def to_barrier(self) -> BarrierTable:
        rows = [[-math.inf if u else 0.0 for u in row] for row in self.unsafe]
        return BarrierTable.from_rows(rows, self.terminal_states)

    def policy(self) -> Policy:
        """Uniform over kernel-safe actions (all actions where none are safe)."""
        return Policy.from_action_sets(
            [self.safe_actions(s) for s in range(self.n_states)], self.unsafe.shape[1]
        )


def safety_kernel(model: TabularCmdp) -> SafetyKernel:
    """Greatest safe set: prune pairs that may be damaged or may land in a
    state all of whose actions are already pruned, until nothing changes."""
    _require_valid(model)
    reach = model.transition_matrix > 0
    unsafe = np.zeros((model.n_states, model.n_actions), dtype=bool)
    for s, row in enumerate(model.outcomes):
        for a, cell in enumerate(row):
            unsafe[s, a] = any(o.prob > 0 and o.damage == 1 for o in cell)
    terminal = model.terminal_mask
    unsafe[terminal] = False
    for _ in range(model.n_states * model.n_actions + 1):
        dead = unsafe.all(axis=1) & ~terminal
        grown = unsafe | (reach & dead[None, None, :]).any(axis=2)
        grown[terminal] = False
        if (grown == unsafe).all():
            break
        unsafe = grown
    return SafetyKernel(unsafe, model.terminal_states)


def qd_policy_eval(
    model: TabularCmdp, policy: Policy, tol: float = DEFAULT_TOL, max_sweeps: int = MAX_SWEEPS
) -> np.ndarray:
    """Probability of ever being damaged from ``(s, a)`` when following ``policy``.

    Iterates ``q <- E[D + q(S', A')]`` from zero with terminal rows pinned at
    zero; the iterates increase monotonically towards the solution.  Pairs
    damaged almost surely are found by reachability and pinned at exactly 1,
    since the iteration would only approach 1 from below.
    """
    _require_valid(model)
    if tol <= 0:
        raise ValueError("tol must be positive")
    pi = policy.probs
    if pi.shape != (model.n_states, model.n_actions):
        raise ValueError("policy shape does not match model")
    p = model.transition_matrix
    dmg = model.damage_mass
    one = _certain_damage(model, pi)
    qd = np.where(one, 1.0, 0.0)
    pinned = one | model.terminal_mask[:, None]
    for _ in range(max_sweeps):
        v = (pi * qd).sum(axis=1)
        new = np.where(pinned, qd, dmg + p @ v)
        delta = np.abs(new - qd).max()
        qd = new
        if delta < tol:
            return np.clip(qd, 0.0, 1.0)
    raise SolverError(f"q_D iteration did not converge in {max_sweeps} sweeps")


def _certain_damage(model: TabularCmdp, pi: np.ndarray) -> np.ndarray:
    """Pairs damaged with probability exactly one.

    Those are the pairs that cannot reach a damage-free pair or a non-damage
    terminal: every pair they can reach keeps a positive chance of damage, so
    the finite chain ends in damage surely.
    """
    direct = np.array(
        [[any(o.prob > 0 and o.damage for o in cell) for cell in row] for row in model.outcomes]
    )
    can_damage = _reach(model, pi, direct)
    escape = ~can_damage
    escape[model.damage_state] = False
    can_escape = _reach(model, pi, escape)
    return can_damage & ~can_escape


def _reach(model: TabularCmdp, pi: np.ndarray, seed: np.ndarray) -> np.ndarray:
    """Pairs from which a ``seed`` pair is reachable while following ``pi``
    (the pair itself counts); nothing propagates out of terminal states."""
    step = model.transition_matrix > 0
    acts = pi > 0
    terminal = model.terminal_mask
    can = seed.copy()
    while True:
        state_can = (can & acts).any(axis=1)
        grown = can | ((step & state_can[None, None, :]).any(axis=2) & ~terminal[:, None])
        if (grown == can).all():
            return can
        can = grown


def b_policy_eval(model: TabularCmdp, policy: Policy, tol: float = DEFAULT_TOL) -> BarrierTable:
    """Policy barrier ``B^pi``: 0 where ``q_D`` is at most ``tol``, NEG_INF elsewhere."""
    qd = qd_policy_eval(model, policy)
    table = BarrierTable(model.n_states, model.n_actions, model.terminal_states)
    for s, a in zip(*np.nonzero(qd > tol)):
        table.condemn(int(s), int(a))
    return table


def barrier_fixed_point(model: TabularCmdp, policy: Policy) -> BarrierTable:
    """Policy barrier ``B^pi`` from its own extended-real Bellman equation.

    ``B(s,a) = sum_{outcomes} p * (log(1-d) + sum_{a'} pi(a'|s') B(s',a'))``
    where only positive weights enter, so any reachable ``-inf`` absorbs the
    sum.  Solved as the greatest fixed point starting from all zeros; this
    never looks at violation probabilities.
    """
    _require_valid(model)
    pi = policy.probs
    rows = [[0.0] * model.n_actions for _ in range(model.n_states)]
    support = [np.flatnonzero(pi[s] > 0).tolist() for s in range(model.n_states)]
    changed = True
    while changed:
        changed = False
        for s, row in enumerate(model.outcomes):
            if s in model.terminal_states:
                continue
            for a, cell in enumerate(row):
                if rows[s][a] is NEG_INF:
                    continue
                total = 0.0
                for o in cell:
                    if o.prob <= 0:
                        continue
                    cont = 0.0
                    for a2 in support[o.s_next]:
                        cont = ext_add(cont, rows[o.s_next][a2])
                    total = ext_add(total, ext_add(log1m_damage(o.damage), cont))
                if total is NEG_INF:
                    rows[s][a] = NEG_INF
                    changed = True
    table = BarrierTable(model.n_states, model.n_actions, model.terminal_states)
    for s, row in enumerate(rows):
        for a, v in enumerate(row):
            if v is NEG_INF:
                table.condemn(s, a)
    return table


def constrained_value_iteration(
    model: TabularCmdp,
    kernel: SafetyKernel,
    gamma: float,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> QTable:
    """Optimal ``Q`` over policies that stay inside the kernel.

    Unsafe pairs are NEG_INF.  States without safe actions also end up with
    all-NEG_INF rows; reachable ones are logged.
    """
    _require_valid(model)
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    safe = ~kernel.unsafe
    terminal = model.terminal_mask
    live_safe = safe & ~terminal[:, None]
    has_safe = safe.any(axis=1) & ~terminal
    p = model.transition_matrix
    # a safe pair never reaches a dead state, so their value can be zeroed in the product
    leaks = (p[live_safe][:, ~has_safe & ~terminal] > 0).any()
    if leaks:
        raise SolverError("kernel lets a safe pair reach a state without safe actions")
    reward = model.expected_reward
    q = np.zeros_like(reward)
    for _ in range(max_sweeps):
        v = np.where(live_safe, q, -np.inf).max(axis=1)
        v[~has_safe] = 0.0
        new = np.where(live_safe, reward + gamma * (p @ v), 0.0)
        delta = np.abs(new - q).max()
        q = new
        if delta < tol:
            break
    else:
        raise SolverError(f"value iteration did not converge in {max_sweeps} sweeps")
    dead = [s for s in kernel.dead_states() if model.start[s] > 0]
    if dead:
        log.warning("start states without any safe action: %s", dead)
    table = QTable(model.n_states, model.n_actions)
    for s in range(model.n_states):
        for a in range(model.n_actions):
            if terminal[s]:
                table.rows[s][a] = 0.0
            elif live_safe[s, a]:
                table.rows[s][a] = float(q[s, a])
            else:
                table.rows[s][a] = NEG_INF
    return table


def greedy_policy_actions(q: QTable, kernel: SafetyKernel) -> list[int | None]:
    """Kernel-restricted greedy action per state (None where nothing is safe)."""
    return [q.greedy_action(s, kernel.safe_actions(s)) if kernel.safe_actions(s) else None
            for s in range(q.n_states)]


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    stderr: float
    n: int
    horizon: int
    mean_damage: float
    max_damage_per_trajectory: int
    identity_holds: bool


def monte_carlo_qd(
    model: TabularCmdp,
    policy: Policy,
    s: int,
    a: int,
    n: int,
    rng: np.random.Generator,
    residual: float = 1e-6,
) -> MonteCarloEstimate:
    """Fraction of ``n`` simulated trajectories from ``(s, a)`` that are damaged.

    Trajectories run until they enter a terminal state or a pair from which
    damage is unreachable, or until the horizon where the probability of
    still being able to get damaged has dropped below ``residual``.  Besides
    the hit fraction, the mean number of damage events is reported, and
    ``identity_holds`` says whether every trajectory had as many damage events
    as hits (at most one each).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    model.check_ids(s, a)
    pi = policy.probs
    n_s, n_a = model.n_states, model.n_actions
    k_max = max(len(cell) for row in model.outcomes for cell in row)
    cum = np.full((n_s, n_a, k_max), 2.0)
    succ = np.zeros((n_s, n_a, k_max), dtype=np.int64)
    dmg = np.zeros((n_s, n_a, k_max), dtype=np.int64)
    for i, row in enumerate(model.outcomes):
        for j, cell in enumerate(row):
            acc = 0.0
            for k, o in enumerate(cell):
                acc += o.prob
                cum[i, j, k] = acc
                succ[i, j, k] = o.s_next
                dmg[i, j, k] = o.damage
            cum[i, j, len(cell) - 1] = 2.0
    pi_cum = np.cumsum(pi, axis=1)
    pi_cum[:, -1] = 2.0

    direct = np.array(
        [[any(o.prob > 0 and o.damage for o in cell) for cell in row] for row in model.outcomes]
    )
    live = _reach(model, pi, direct)
    horizon = _horizon(model, pi, live, s, a, residual)

    state = np.full(n, s, dtype=np.int64)
    action = np.full(n, a, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    hits = np.zeros(n, dtype=np.int64)
    damage = np.zeros(n, dtype=np.int64)
    terminal = model.terminal_mask
    for _ in range(horizon):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        st, ac = state[idx], action[idx]
        u = rng.random(idx.size)
        k = (u[:, None] >= cum[st, ac]).sum(axis=1)
        nxt = succ[st, ac, k]
        d = dmg[st, ac, k]
        damage[idx] += d
        hits[idx] |= d
        u2 = rng.random(idx.size)
        nxt_a = (u2[:, None] >= pi_cum[nxt]).sum(axis=1)
        state[idx], action[idx] = nxt, nxt_a
        alive[idx] = ~terminal[nxt] & live[nxt, nxt_a]
    p_hat = hits.mean()
    return MonteCarloEstimate(
        estimate=float(p_hat),
        stderr=float(math.sqrt(p_hat * (1.0 - p_hat) / n)),
        n=n,
        horizon=horizon,
        mean_damage=float(damage.mean()),
        max_damage_per_trajectory=int(damage.max()),
        identity_holds=bool((damage == hits).all()),
    )


def _horizon(model, pi, live, s, a, residual, cap=100_000) -> int:
    """Steps after which the mass still inside ``live`` pairs is below ``residual``."""
    if not live[s, a]:
        return 1
    p = model.transition_matrix
    mass = np.zeros((model.n_states, model.n_actions))
    mass[s, a] = 1.0
    terminal = model.terminal_mask
    for t in range(1, cap + 1):
        state_mass = np.einsum("ij,ijk->k", mass, p)
        state_mass[terminal] = 0.0
        mass = state_mass[:, None] * pi * live
        if mass.sum() < residual:
            return t + 1
    return cap


def random_cmdp(
    n_states: int, n_actions: int, damage_density: float, rng: random.Random, max_support: int = 3
) -> TabularCmdp:
    """Random model with ``n_states`` live states plus the damage state (last id).

    Each row picks up to ``max_support`` live successors; with probability
    ``damage_density`` it also carries a damage outcome with mass in
    [0.05, 0.5] (or 1 when the density is 1).  Masses are kept away from zero
    so that the safe/unsafe distinction is numerically crisp.
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError("sizes must be >= 1")
    if not 0.0 <= damage_density <= 1.0:
        raise ValueError("damage_density must lie in [0, 1]")
    sd = n_states
    table: list[list[list[Outcome]]] = []
    for _ in range(n_states):
        row = []
        for _ in range(n_actions):
            k = rng.randint(1, min(max_support, n_states))
            succs = rng.sample(range(n_states), k)
            weights = [rng.uniform(0.2, 1.0) for _ in succs]
            if damage_density >= 1.0:
                p_dmg = 1.0
            elif rng.random() < damage_density:
                p_dmg = rng.uniform(0.05, 0.5)
            else:
                p_dmg = 0.0
            total = sum(weights)
            cell = []
            if p_dmg < 1.0:
                cell = [
                    Outcome((1.0 - p_dmg) * w / total, s2, round(rng.uniform(-1, 1), 3), 0)
                    for s2, w in zip(succs, weights)
                ]
            if p_dmg > 0.0:
                cell.append(Outcome(p_dmg, sd, round(rng.uniform(-1, 1), 3), 1))
            # absorb rounding so rows sum to one within 1e-12
            drift = 1.0 - sum(o.prob for o in cell)
            cell[0] = Outcome(cell[0].prob + drift, cell[0].s_next, cell[0].reward, cell[0].damage)
            row.append(cell)
        table.append(row)
    table.append([[Outcome(1.0, sd, 0.0, 0)] for _ in range(n_actions)])
    start = [1.0 / n_states] * n_states + [0.0]
    return TabularCmdp(n_states + 1, n_actions, sd, table, start)


def random_policy(n_states: int, n_actions: int, rng: random.Random, sparse: bool = True) -> Policy:
    """Random policy; with ``sparse`` each row has a random non-empty support."""
    probs = np.zeros((n_states, n_actions))
    for s in range(n_states):
        if sparse:
            acts = rng.sample(range(n_actions), rng.randint(1, n_actions))
        else:
            acts = list(range(n_actions))
        w = [rng.uniform(0.2, 1.0) for _ in acts]
        total = sum(w)
        for a, x in zip(acts, w):
            probs[s, a] = x / total
        probs[s] /= probs[s].sum()
    return Policy(probs)
