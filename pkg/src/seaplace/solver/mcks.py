"""Multiple-choice knapsack with two budget constraints.

Pick exactly one option per group, maximizing total gain, subject to the summed
SER cost and wirelength cost staying within their budgets. Every group carries
a null option (zero gain, zero cost), so the all-null selection is always
feasible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.optimize import linprog

EXACT_MAX_GROUPS = 25
_EPS = 1e-12


@dataclass
class Option:
    gain: float
    ser_cost: float = 0.0
    wl_cost: float = 0.0
    payload: Any = field(default=None, compare=False)

    @property
    def is_null(self) -> bool:
        return self.gain == 0 and self.ser_cost == 0 and self.wl_cost == 0


@dataclass
class McksInstance:
    groups: list[list[Option]]
    ser_budget: float
    wl_budget: float

    def __post_init__(self):
        if self.ser_budget < 0 or self.wl_budget < 0:
            raise ValueError("budgets must be nonnegative")
        for i, g in enumerate(self.groups):
            if not g:
                raise ValueError(f"group {i} is empty")
            if not any(o.is_null for o in g):
                raise ValueError(f"group {i} has no null option")
            if any(o.ser_cost < 0 or o.wl_cost < 0 for o in g):
                raise ValueError(f"group {i} has a negative cost")


def selection_gain(inst: McksInstance, sel: Sequence[int]) -> float:
    return float(sum(inst.groups[i][j].gain for i, j in enumerate(sel)))


def is_feasible(inst: McksInstance, sel: Sequence[int]) -> bool:
    ser = sum(inst.groups[i][j].ser_cost for i, j in enumerate(sel))
    wl = sum(inst.groups[i][j].wl_cost for i, j in enumerate(sel))
    return ser <= inst.ser_budget + _EPS and wl <= inst.wl_budget + _EPS


def _null_index(g: list[Option]) -> int:
    return next(j for j, o in enumerate(g) if o.is_null)


def _lp_relaxation(groups: list[list[Option]], ser_budget: float, wl_budget: float):
    """Optimal value and fractional solution of the LP relaxation."""
    sizes = [len(g) for g in groups]
    nv = sum(sizes)
    if nv == 0:
        return 0.0, []
    gain = np.array([o.gain for g in groups for o in g])
    a_ub = np.array([[o.ser_cost for g in groups for o in g],
                     [o.wl_cost for g in groups for o in g]])
    a_eq = np.zeros((len(groups), nv))
    start = 0
    for i, s in enumerate(sizes):
        a_eq[i, start:start + s] = 1.0
        start += s
    res = linprog(-gain, A_ub=a_ub, b_ub=[ser_budget, wl_budget], A_eq=a_eq,
                  b_eq=np.ones(len(groups)), bounds=(0, 1), method="highs")
    if res.status != 0:
        return 0.0, [np.eye(len(g))[_null_index(g)] for g in groups]
    x = res.x
    out, start = [], 0
    for s in sizes:
        out.append(x[start:start + s])
        start += s
    return -res.fun, out


def _density(o: Option, ser_budget: float, wl_budget: float) -> float:
    load = 0.0
    for cost, budget in ((o.ser_cost, ser_budget), (o.wl_cost, wl_budget)):
        if cost > 0:
            load += cost / budget if budget > 0 else np.inf
    return o.gain / (load + 1e-9)


def _relaxed(inst: McksInstance) -> list[int]:
    groups = inst.groups
    _, frac = _lp_relaxation(groups, inst.ser_budget, inst.wl_budget)
    dens = [[_density(o, inst.ser_budget, inst.wl_budget) for o in g] for g in groups]
    # round: each group proposes its largest fractional option
    proposal = []
    for i, g in enumerate(groups):
        order = sorted(range(len(g)), key=lambda j: (-frac[i][j], -g[j].gain, j))
        proposal.append(order[0])
    sel = [_null_index(g) for g in groups]
    ser_left, wl_left = inst.ser_budget, inst.wl_budget

    def fits(o: Option) -> bool:
        return o.ser_cost <= ser_left + _EPS and o.wl_cost <= wl_left + _EPS

    visit = sorted(range(len(groups)),
                   key=lambda i: (-dens[i][proposal[i]], -groups[i][proposal[i]].gain, i))
    for i in visit:
        g = groups[i]
        candidates = [proposal[i]] + sorted(
            (j for j in range(len(g)) if j != proposal[i]), key=lambda j: (-dens[i][j], j))
        for j in candidates:
            o = g[j]
            if o.gain > 0 and fits(o):
                sel[i] = j
                ser_left -= o.ser_cost
                wl_left -= o.wl_cost
                break
    # repair pass: upgrade groups where a better option still fits
    for i in sorted(range(len(groups)), key=lambda i: i):
        g = groups[i]
        cur = g[sel[i]]
        for j in sorted(range(len(g)), key=lambda j: (-g[j].gain, j)):
            o = g[j]
            if o.gain <= cur.gain:
                break
            if o.ser_cost - cur.ser_cost <= ser_left + _EPS and o.wl_cost - cur.wl_cost <= wl_left + _EPS:
                ser_left -= o.ser_cost - cur.ser_cost
                wl_left -= o.wl_cost - cur.wl_cost
                sel[i] = j
                break
    return sel


def _exact(inst: McksInstance) -> list[int]:
    groups = inst.groups
    n = len(groups)
    best_sel = _relaxed(inst)
    best = selection_gain(inst, best_sel)
    orders = [sorted(range(len(g)), key=lambda j: (-g[j].gain, j)) for g in groups]
    sel = [0] * n

    def dfs(i: int, gain: float, ser_left: float, wl_left: float) -> None:
        nonlocal best, best_sel
        if i == n:
            if gain > best + 1e-15:
                best, best_sel = gain, list(sel)
            return
        rest = groups[i:]
        cheap = gain + sum(max((o.gain for o in g if o.ser_cost <= ser_left + _EPS
                                and o.wl_cost <= wl_left + _EPS), default=0.0) for g in rest)
        if cheap <= best + 1e-15:
            return
        lp, _ = _lp_relaxation(rest, max(ser_left, 0.0), max(wl_left, 0.0))
        if gain + lp <= best + 1e-12:
            return
        for j in orders[i]:
            o = groups[i][j]
            if o.ser_cost <= ser_left + _EPS and o.wl_cost <= wl_left + _EPS:
                sel[i] = j
                dfs(i + 1, gain + o.gain, ser_left - o.ser_cost, wl_left - o.wl_cost)

    dfs(0, 0.0, inst.ser_budget, inst.wl_budget)
    return best_sel


def solve_mcks(inst: McksInstance, mode: str = "relaxed") -> list[int]:
    """Return one option index per group.

    ``exact`` runs branch and bound with LP bounds (at most 25 groups);
    ``relaxed`` rounds the LP relaxation by gain density and repairs greedily.
    """
    if mode == "exact":
        if len(inst.groups) > EXACT_MAX_GROUPS:
            raise ValueError(f"exact mode supports at most {EXACT_MAX_GROUPS} groups")
        return _exact(inst)
    if mode == "relaxed":
        return _relaxed(inst)
    raise ValueError(f"unknown mode {mode!r}")

