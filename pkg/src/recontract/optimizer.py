"""Menu design: maximize the consumer's expected utility over a discrete effort grid.

Once rewards follow :func:`~recontract.contracts.rewards_from_efforts`, the
consumer's objective separates into one term per type plus a constant, so the
problem becomes a chain-constrained argmax (efforts non-decreasing in type)
that :func:`~recontract.kernels.chain_argmax` solves exactly on the grid.

The per-round budget ``sum_k theta_k R_k <= B`` is linear in the efforts as
well. It is enforced by bisecting on a Lagrange multiplier, which keeps every
candidate monotone and incentive compatible by construction. On a discrete
grid the multiplier alone can leave budget unused, so its feasible solution
then seeds an exact dynamic program over (payment, value) Pareto fronts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .belief import TypeBelief
from .contracts import (
    Accuracy,
    ContractMenu,
    DOTypeProfile,
    InfeasibleEffortError,
    cost_to_value_ratios,
    menu_from_efforts,
    menu_payment,
    validate_ladder,
)
from .cost import comm_time

DEFAULT_RESOLUTION = 512
DEFAULT_HEADROOM = 0.999
# ratios equal up to rounding are treated as equal
RATIO_RTOL = 1e-12


class InfeasibleMenuError(RuntimeError):
    """No menu on the grid fits the budget."""

    def __init__(self, budget: float, cheapest_cost: float, cheapest_menu: ContractMenu):
        super().__init__(f"cheapest feasible menu costs {cheapest_cost:.6g} > budget {budget:.6g}")
        self.budget = budget
        self.cheapest_cost = cheapest_cost
        self.cheapest_menu = cheapest_menu


class IrregularLadderError(ValueError):
    """Type 0 is not the costliest type per unit of valuation, so its IR cannot be the binding one."""


@dataclass(frozen=True, eq=False)
class EffortGrid:
    """Shared ascending effort points; type ``k`` may use the first ``counts[k]`` of them."""

    points: np.ndarray
    counts: tuple[int, ...]

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0 or np.any(np.diff(pts) <= 0) or pts[0] < 0:
            raise ValueError("grid points must be a non-empty, strictly ascending, non-negative vector")
        if any(c < 1 or c > pts.size for c in self.counts):
            raise ValueError(f"every type needs at least one grid point: {self.counts}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def upper(self) -> np.ndarray:
        return self.points[np.array(self.counts) - 1]

    def points_for(self, k: int) -> np.ndarray:
        return self.points[: self.counts[k]]

    @classmethod
    def from_points(cls, points, types: Sequence[DOTypeProfile], t_max: float) -> "EffortGrid":
        """Restrict arbitrary points to each type's time-feasible prefix."""
        pts = np.unique(np.asarray(points, dtype=float))
        counts = []
        for k, t in enumerate(types):
            ok = t.time_slack(pts, t_max) > 0
            n = int(np.argmin(ok)) if not ok.all() else pts.size
            if n == 0:
                raise InfeasibleEffortError(k, float(pts[0]), float(t.time_slack(pts[0], t_max)))
            counts.append(n)
        return cls(pts, tuple(counts))


def effort_bound(t: DOTypeProfile, t_max: float) -> float:
    """Largest effort that still leaves positive time slack."""
    spare = t_max - comm_time(t.comm)
    return spare * t.compute.cpu_frequency / t.compute.cycles_per_sample


def build_grid(
    types: Sequence[DOTypeProfile],
    t_max: float,
    resolution: int = DEFAULT_RESOLUTION,
    headroom: float = DEFAULT_HEADROOM,
) -> EffortGrid:
    """Union of per-type uniform grids over ``(0, headroom * bound_k]``."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    bounds = []
    for k, t in enumerate(types):
        b = effort_bound(t, t_max)
        if not b > 0:
            raise InfeasibleEffortError(k, 0.0, t_max - comm_time(t.comm))
        bounds.append(headroom * b)
    pts = np.unique(np.concatenate([np.linspace(0.0, b, resolution + 1)[1:] for b in bounds]))
    counts = tuple(int(np.searchsorted(pts, b, side="right")) for b in bounds)
    return EffortGrid(pts, counts)


def check_regular(types: Sequence[DOTypeProfile]) -> None:
    phi = cost_to_value_ratios(types)
    fixed = np.array([t.base_cost / t.theta for t in types])
    if phi[0] < phi.max() * (1 - RATIO_RTOL) or fixed[0] < fixed.max() * (1 - RATIO_RTOL):
        raise IrregularLadderError(
            "type 0 must have the largest cost/valuation ratios "
            f"(unit: {phi.tolist()}, fixed: {fixed.tolist()})"
        )


def jump_mask(types: Sequence[DOTypeProfile]) -> np.ndarray:
    """Where effort may step up from type ``i-1`` to ``i`` without breaking IC.

    A step at ``i`` is priced at type ``i``'s cost/valuation ratio, which must be
    no smaller than any type above it and no larger than any type below it.
    Elsewhere the two types are pooled on the same item. On a regular ladder
    (ratio non-increasing in type) every step is allowed.
    """
    phi = cost_to_value_ratios(types)
    K = len(types)
    allowed = np.ones(K, dtype=bool)
    for i in range(1, K):
        allowed[i] = phi[i] >= phi[i:].max() * (1 - RATIO_RTOL) and phi[i] <= phi[:i].min() * (1 + RATIO_RTOL)
    return allowed


def _tail_weights(weights: np.ndarray, types: Sequence[DOTypeProfile]) -> np.ndarray:
    """Per-effort coefficients of ``sum_k w_k theta_k R_k`` under the reward schedule."""
    thetas = np.array([t.theta for t in types])
    phi = cost_to_value_ratios(types)
    tail = np.cumsum((weights * thetas)[::-1])[::-1]
    scaled = tail * phi
    return scaled - np.append(scaled[1:], 0.0)


def reward_coefficients(types: Sequence[DOTypeProfile], belief: TypeBelief) -> np.ndarray:
    return _tail_weights(belief.probs, types)


def payment_coefficients(types: Sequence[DOTypeProfile], weights=None) -> np.ndarray:
    w = np.ones(len(types)) if weights is None else np.asarray(weights, dtype=float)
    return _tail_weights(w, types)


def objective_table(
    types: Sequence[DOTypeProfile],
    belief: TypeBelief,
    grid: EffortGrid,
    accuracy: Accuracy = 0.5,
    q_scale: float = 2.0,
    t_max: float = 1.5,
) -> np.ndarray:
    """Per-type share of the expected utility at every grid point (``-inf`` off-domain).

    Summing row ``k`` at ``e_k`` over types gives the expected consumer utility
    up to a constant that does not depend on the efforts.
    """
    pts = grid.points
    acc = np.asarray(accuracy(pts), dtype=float) if callable(accuracy) else np.full(pts.shape, float(accuracy))
    coef = reward_coefficients(types, belief)
    table = np.full((len(types), pts.size), -np.inf)
    for k, t in enumerate(types):
        n = grid.counts[k]
        p = pts[:n]
        table[k, :n] = belief.probs[k] * (q_scale * acc[:n] + np.log(t.time_slack(p, t_max))) - coef[k] * p
    return table


@dataclass(frozen=True, eq=False)
class MenuSolution:
    menu: ContractMenu
    grid_indices: np.ndarray
    multiplier: float
    payment: float


_EMPTY = (np.empty(0), np.empty(0), np.empty(0, dtype=np.int64))


def _front(pay, val, ids):
    """Pareto front of (payment, value): cheaper or better, never both worse."""
    order = np.lexsort((-val, pay))
    pay, val, ids = pay[order], val[order], ids[order]
    keep = np.empty(val.size, dtype=bool)
    if val.size:
        keep[0] = True
        keep[1:] = val[1:] > np.maximum.accumulate(val)[:-1]
    return pay[keep], val[keep], ids[keep]


def _budgeted_chain(table, pcoef, points, allowed, cap, floor, limit=500_000):
    """Exact best monotone chain with ``sum pcoef_k * points[g_k] <= cap``.

    Dynamic programming over types, keeping for every grid index the Pareto
    front of (payment so far, value so far). Partial chains that cannot beat
    ``floor`` even with every remaining type at its best entry are dropped.
    Returns None when no chain beats ``floor`` or the fronts outgrow ``limit``.
    """
    K, G = table.shape
    finite = np.isfinite(table)
    cost = np.where(finite, pcoef[:, None] * points[None, :], np.inf)
    cheapest = np.concatenate((np.cumsum(cost.min(axis=1)[::-1])[::-1][1:], [0.0]))
    best = np.concatenate((np.cumsum(table.max(axis=1)[::-1])[::-1][1:], [0.0]))
    slack = 1e-12 * (1 + abs(floor))
    grid_of, parent = [], []
    stored = 0
    exact = prefix = None
    for k in range(K):
        new_exact, new_prefix = [], []
        run = _EMPTY
        for g in range(G):
            f = _EMPTY
            if finite[k, g]:
                if k == 0:
                    pay, val, par = np.zeros(1), np.zeros(1), np.full(1, -1)
                else:
                    pay, val, par = (prefix if allowed[k] else exact)[g]
                pay = pay + cost[k, g]
                val = val + table[k, g]
                ok = (pay <= cap - cheapest[k]) & (val + best[k] >= floor - slack)
                if ok.any():
                    f = (pay[ok], val[ok], np.arange(stored, stored + int(ok.sum())))
                    stored += f[2].size
                    if stored > limit:
                        return None
                    grid_of.append(np.full(f[2].size, g))
                    parent.append(par[ok])
            new_exact.append(f)
            if f[2].size:
                run = _front(*(np.concatenate(pair) for pair in zip(run, f)))
            new_prefix.append(run)
        exact, prefix = new_exact, new_prefix
    _, val, ids = prefix[-1]
    if ids.size == 0:
        return None
    grid_of, parent = np.concatenate(grid_of), np.concatenate(parent)
    i, out = int(ids[np.argmax(val)]), []
    while i >= 0:
        out.append(grid_of[i])
        i = int(parent[i])
    return np.array(out[::-1], dtype=np.int64)


def solve_menu(
    types: Sequence[DOTypeProfile],
    belief: TypeBelief,
    grid: EffortGrid,
    budget: float,
    q_scale: float = 2.0,
    t_max: float = 1.5,
    accuracy: Accuracy = 0.5,
    renegotiated_at: int | None = None,
    budget_weights=None,
    backend: str | None = None,
) -> MenuSolution:
    validate_ladder(types)
    check_regular(types)
    if len(belief) != len(types) or len(grid.counts) != len(types):
        raise ValueError("belief and grid must have one entry per type")
    if not budget > 0:
        raise ValueError(f"budget must be positive, got {budget!r}")

    table = objective_table(types, belief, grid, accuracy, q_scale, t_max)
    if budget_weights is not None:
        budget_weights = tuple(float(w) for w in budget_weights)
        if len(budget_weights) != len(types) or min(budget_weights) < 0:
            raise ValueError("budget_weights must be non-negative, one per type")
    pcoef = payment_coefficients(types, budget_weights)
    allowed = jump_mask(types)
    pts = grid.points

    def attempt(lam: float, base=table):
        idx, _ = kernels.chain_argmax(base, pcoef, pts, lam, allowed, backend=backend)
        menu = menu_from_efforts(
            pts[idx], types, budget_cap=budget, renegotiated_at=renegotiated_at, budget_weights=budget_weights
        )
        return idx, menu, menu_payment(menu, types)

    idx, menu, pay = attempt(0.0)
    if pay <= budget:
        return MenuSolution(menu, idx, 0.0, pay)

    feasible_only = np.where(np.isfinite(table), 0.0, -np.inf)
    idx_c, menu_c, pay_c = attempt(1.0, feasible_only)
    if pay_c > budget:
        raise InfeasibleMenuError(budget, pay_c, menu_c)

    lo, hi = 0.0, 1.0
    best = attempt(hi)
    while best[2] > budget:
        lo, hi = hi, hi * 4.0
        if not math.isfinite(hi):
            # the multiplier cannot outweigh the objective; fall back to the cheapest menu
            return MenuSolution(menu_c, idx_c, math.inf, pay_c)
        best = attempt(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi or hi - lo <= 1e-12 * hi:
            break
        trial = attempt(mid)
        if trial[2] <= budget:
            hi, best = mid, trial
        else:
            lo = mid
    # the multiplier can strand budget on a discrete grid; close the gap exactly
    offset = best[2] - float(pcoef @ pts[best[0]])
    floor = float(table[np.arange(len(types)), best[0]].sum())
    idx = _budgeted_chain(table, pcoef, pts, allowed, (budget - offset) * (1 - 1e-12), floor)
    if idx is not None and not np.array_equal(idx, best[0]):
        menu = menu_from_efforts(
            pts[idx], types, budget_cap=budget, renegotiated_at=renegotiated_at, budget_weights=budget_weights
        )
        pay = menu_payment(menu, types)
        if pay <= budget:
            return MenuSolution(menu, idx, hi, pay)
    return MenuSolution(best[1], best[0], hi, best[2])


def optimize_menu(
    types: Sequence[DOTypeProfile],
    belief: TypeBelief,
    grid: EffortGrid,
    budget: float,
    q_scale: float = 2.0,
    t_max: float = 1.5,
    accuracy: Accuracy = 0.5,
    renegotiated_at: int | None = None,
    budget_weights=None,
) -> ContractMenu:
    """Best IC/IR/budget-feasible menu on ``grid`` for the given belief.

    The budget constraint is ``sum_k w_k theta_k R_k <= budget`` with unit
    weights unless ``budget_weights`` is given (e.g. expected head-counts per
    type when budgeting a whole population for one round).

    Raises:
        InfeasibleMenuError: when even the cheapest admissible menu exceeds ``budget``.
        IrregularLadderError: when type 0's participation constraint cannot be the binding one.
    """
    return solve_menu(
        types, belief, grid, budget, q_scale, t_max, accuracy, renegotiated_at, budget_weights
    ).menu
