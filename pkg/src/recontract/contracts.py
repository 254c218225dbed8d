"""Contract menus, utilities on both sides, and the IC/IR/budget verifiers.

Type indices are zero-based everywhere in this package: type ``0`` is the
lowest valuation (the one whose participation constraint binds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .belief import TypeBelief
from .cost import (
    CommProfile,
    ComputeProfile,
    CostParams,
    comm_time,
    fixed_cost,
    marginal_cost,
    total_cost,
)

# Relative tolerance used when comparing utilities that are equal in exact arithmetic.
UTILITY_TOL = 1e-9

Accuracy = Union[float, Callable[[np.ndarray], np.ndarray]]


class InfeasibleEffortError(ValueError):
    def __init__(self, type_index: int, effort: float, slack: float):
        super().__init__(
            f"effort {effort!r} for type {type_index} leaves no time slack (slack={slack!r})"
        )
        self.type_index = type_index
        self.effort = effort
        self.slack = slack


@dataclass(frozen=True)
class DOTypeProfile:
    """One rung of the type ladder."""

    index: int
    theta: float
    data_size: float
    compute: ComputeProfile = field(default_factory=ComputeProfile)
    comm: CommProfile = field(default_factory=CommProfile)
    cost_params: CostParams = field(default_factory=CostParams)

    def __post_init__(self):
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise ValueError(f"theta must be positive, got {self.theta!r}")
        if not (math.isfinite(self.data_size) and self.data_size > 0):
            raise ValueError(f"data_size must be positive, got {self.data_size!r}")

    def cost(self, effort: float) -> float:
        return total_cost(self.cost_params, self.comm, self.compute, effort)

    @property
    def unit_cost(self) -> float:
        """Per-effort cost slope ``c_k``."""
        return marginal_cost(self.cost_params, self.compute)

    @property
    def base_cost(self) -> float:
        """Effort-independent part of the round cost."""
        return fixed_cost(self.cost_params, self.comm)

    def time_slack(self, effort, t_max: float):
        """``t_max - comp_time - comm_time``; vectorized over ``effort``."""
        e = np.asarray(effort, dtype=float)
        slack = t_max - self.compute.cycles_per_sample * e / self.compute.cpu_frequency - comm_time(self.comm)
        return slack if slack.ndim else float(slack)


def validate_ladder(types: Sequence[DOTypeProfile]) -> None:
    if len(types) == 0:
        raise ValueError("type ladder is empty")
    for pos, t in enumerate(types):
        if t.index != pos:
            raise ValueError(f"type at position {pos} has index {t.index}")
    thetas = [t.theta for t in types]
    if any(b <= a for a, b in zip(thetas, thetas[1:])):
        raise ValueError(f"theta must be strictly increasing along the ladder: {thetas}")


@dataclass(frozen=True)
class ContractItem:
    reward: float
    effort: float

    def __post_init__(self):
        if not self.reward >= 0:
            raise ValueError(f"reward must be >= 0, got {self.reward!r}")
        if not self.effort >= 0:
            raise ValueError(f"effort must be >= 0, got {self.effort!r}")


@dataclass(frozen=True)
class ContractMenu:
    """Items indexed by type, the budget cap they were designed under, and where they came from.

    ``renegotiated_at`` is ``None`` for the initial menu, else the round of the
    renegotiation that produced it.
    """

    items: tuple[ContractItem, ...]
    budget_cap: float = math.inf
    renegotiated_at: int | None = None
    # per-type multiplicities in the budget sum; None means one of each type
    budget_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if self.budget_weights is not None:
            object.__setattr__(self, "budget_weights", tuple(float(w) for w in self.budget_weights))
            if len(self.budget_weights) != len(self.items):
                raise ValueError("budget_weights needs one entry per item")

    @classmethod
    def from_arrays(cls, rewards, efforts, **kwargs) -> "ContractMenu":
        return cls(tuple(ContractItem(float(r), float(e)) for r, e in zip(rewards, efforts)), **kwargs)

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, k: int) -> ContractItem:
        return self.items[k]

    @property
    def rewards(self) -> np.ndarray:
        return np.array([it.reward for it in self.items])

    @property
    def efforts(self) -> np.ndarray:
        return np.array([it.effort for it in self.items])

    @property
    def provenance(self) -> str:
        return "initial" if self.renegotiated_at is None else f"renegotiated@{self.renegotiated_at}"


def do_utility(profile: DOTypeProfile, item: ContractItem) -> float:
    return profile.theta * item.reward - profile.cost(item.effort)


def _accuracy_per_type(accuracy: Accuracy, efforts: np.ndarray) -> np.ndarray:
    if callable(accuracy):
        return np.asarray(accuracy(efforts), dtype=float)
    return np.full(efforts.shape, float(accuracy))


def dc_expected_utility(
    menu: ContractMenu,
    types: Sequence[DOTypeProfile],
    belief: TypeBelief,
    accuracy: Accuracy,
    q_scale: float = 2.0,
    t_max: float = 1.5,
) -> float:
    """Expected consumer utility of a menu under a type belief.

    ``accuracy`` is either a design-time accuracy estimate shared by all types,
    or a callable mapping an array of efforts to forecast accuracies.
    """
    if len(menu) != len(types) or len(belief) != len(types):
        raise ValueError("menu, ladder and belief must all have K entries")
    efforts = menu.efforts
    total = 0.0
    acc = _accuracy_per_type(accuracy, efforts)
    for k, (t, item) in enumerate(zip(types, menu.items)):
        slack = t.time_slack(item.effort, t_max)
        if not slack > 0:
            raise InfeasibleEffortError(k, item.effort, slack)
        rho = belief.probs[k]
        if rho == 0:
            continue
        total += rho * (q_scale * acc[k] + math.log(slack) - t.theta * item.reward)
    return total


@dataclass
class ICReport:
    ok: bool
    # (k, j, slack): slack = U_k(own item) - U_k(item j); negative means violated
    violations: list[tuple[int, int, float]] = field(default_factory=list)


@dataclass
class IRReport:
    ok: bool
    violations: list[tuple[int, float]] = field(default_factory=list)
    type0_utility: float = 0.0
    type0_binds: bool = False


def _tol(scale: float) -> float:
    return UTILITY_TOL * (1.0 + abs(scale))


def check_ic(menu: ContractMenu, types: Sequence[DOTypeProfile]) -> ICReport:
    if len(menu) != len(types):
        raise ValueError("menu length must equal the number of types")
    violations = []
    for k, t in enumerate(types):
        own = do_utility(t, menu[k])
        for j, item in enumerate(menu.items):
            if j == k:
                continue
            other = do_utility(t, item)
            slack = own - other
            if slack < -_tol(max(abs(own), abs(other), t.theta * item.reward)):
                violations.append((k, j, slack))
    return ICReport(not violations, violations)


def check_ir(menu: ContractMenu, types: Sequence[DOTypeProfile]) -> IRReport:
    if len(menu) != len(types):
        raise ValueError("menu length must equal the number of types")
    violations = []
    for k, t in enumerate(types):
        u = do_utility(t, menu[k])
        if u < -_tol(t.theta * menu[k].reward):
            violations.append((k, u))
    u0 = do_utility(types[0], menu[0])
    binds = abs(u0) <= _tol(types[0].theta * menu[0].reward)
    return IRReport(not violations, violations, u0, binds)


def check_monotonicity(menu: ContractMenu) -> bool:
    e, r = menu.efforts, menu.rewards
    return bool(np.all(np.diff(e) >= 0) and np.all(np.diff(r) >= 0))


def menu_payment(menu: ContractMenu, types: Sequence[DOTypeProfile], weights=None) -> float:
    """Consumer outlay ``sum_k w_k theta_k R_k``.

    With no weights (and none stored on the menu) every type takes its own
    item exactly once.
    """
    if weights is None:
        weights = menu.budget_weights
    if weights is None:
        weights = np.ones(len(menu))
    return float(sum(w * t.theta * it.reward for w, t, it in zip(weights, types, menu.items)))


def check_budget(menu: ContractMenu, types: Sequence[DOTypeProfile]) -> bool:
    return menu_payment(menu, types) <= menu.budget_cap


def cost_to_value_ratios(types: Sequence[DOTypeProfile]) -> np.ndarray:
    """``c_k / theta_k``: the per-effort cost a type needs covered per unit of reward."""
    return np.array([t.unit_cost / t.theta for t in types])


def rewards_from_efforts(efforts: Sequence[float], types: Sequence[DOTypeProfile]) -> np.ndarray:
    """Rewards that make type 0 exactly break even and every adjacent downward deviation indifferent.

    ``R_0 = C_0(e_0) / theta_0`` and ``R_k = R_{k-1} + (c_k / theta_k) (e_k - e_{k-1})``.
    """
    e = np.asarray(efforts, dtype=float)
    if e.shape != (len(types),):
        raise ValueError(f"need one effort per type ({len(types)}), got shape {e.shape}")
    if np.any(np.diff(e) < 0):
        raise ValueError(f"efforts must be non-decreasing in type: {e}")
    if np.any(e < 0):
        raise ValueError("efforts must be non-negative")
    ratios = cost_to_value_ratios(types)
    increments = ratios[1:] * np.diff(e)
    base = types[0].cost(float(e[0])) / types[0].theta
    return base + np.concatenate(([0.0], np.cumsum(increments)))


def menu_from_efforts(efforts, types, **kwargs) -> ContractMenu:
    return ContractMenu.from_arrays(rewards_from_efforts(efforts, types), efforts, **kwargs)


def expected_total_reward(efforts, types: Sequence[DOTypeProfile], belief: TypeBelief) -> float:
    """``sum_k rho_k theta_k R_k`` by direct summation over the reward schedule."""
    rewards = rewards_from_efforts(efforts, types)
    thetas = np.array([t.theta for t in types])
    return float(np.sum(belief.probs * thetas * rewards))


def expected_total_reward_substituted(efforts, types: Sequence[DOTypeProfile], belief: TypeBelief) -> float:
    """Diagnostic only: the aggregate written with substitution variables, taken literally.

    Its first term is not weighted by the type probability, so it disagrees with
    :func:`expected_total_reward` whenever the belief is not degenerate on the
    top type. Kept so the discrepancy stays documented by a regression test.
    """
    e = np.asarray(efforts, dtype=float)
    thetas = np.array([t.theta for t in types])
    rho = belief.probs
    c = np.array([t.unit_cost for t in types])
    K = len(types)
    total = 0.0
    for k in range(K):
        x = c[k] * e[k]
        if k < K - 1:
            tail = float(np.sum(thetas[k + 1:] * rho[k + 1:]))
            x += c[k] * e[k] * (1 / thetas[k] - 1 / thetas[k + 1]) * tail
        total += x
    return total + types[0].base_cost / thetas[0] * float(np.sum(thetas * rho))


def select_contract(profile: DOTypeProfile, menu: ContractMenu) -> int | None:
    """Utility-maximizing item for ``profile``; ``None`` if every item is a loss.

    Near-ties (within :data:`UTILITY_TOL`) go to the lower-effort item.
    """
    utils = np.array([do_utility(profile, it) for it in menu.items])
    best = float(np.max(utils))
    scale = max(abs(best), max(profile.theta * it.reward for it in menu.items))
    if best < -_tol(scale):
        return None
    candidates = [k for k in range(len(menu)) if utils[k] >= best - _tol(scale)]
    return min(candidates, key=lambda k: (menu[k].effort, k))


def epochs_from_effort(effort: float, data_size: float) -> float:
    if not data_size > 0:
        raise ValueError(f"data_size must be positive, got {data_size!r}")
    return effort / data_size
