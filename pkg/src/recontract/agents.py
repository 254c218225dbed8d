"""Simulated data owners: hidden type, behaviour policy, and their current contract."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Union

import numpy as np

from .contracts import UTILITY_TOL, ContractItem, ContractMenu, DOTypeProfile, do_utility, select_contract


@dataclass(frozen=True)
class Truthful:
    pass


@dataclass(frozen=True)
class Misreport:
    target: int


@dataclass(frozen=True)
class PartialFulfil:
    fraction: float

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError(f"fraction must lie in (0, 1], got {self.fraction!r}")


@dataclass(frozen=True)
class Dropout:
    probability: float

    def __post_init__(self):
        if not 0 <= self.probability < 1:
            raise ValueError(f"dropout probability must lie in [0, 1), got {self.probability!r}")


Behavior = Union[Truthful, Misreport, PartialFulfil, Dropout]


@dataclass
class Contract:
    index: int
    item: ContractItem
    # position of the issuing menu in the run's menu history
    menu_id: int = 0


@dataclass
class DOAgent:
    id: Hashable
    true_type: DOTypeProfile
    behavior: Behavior = field(default_factory=Truthful)
    contract: Contract | None = None


@dataclass(frozen=True)
class DeliveredEffort:
    do_id: Hashable
    round: int
    contracted: float
    delivered: float
    dropped: bool = False

    def __post_init__(self):
        if not 0 <= self.delivered <= self.contracted:
            raise ValueError(f"delivered effort {self.delivered!r} outside [0, {self.contracted!r}]")
        if self.dropped and self.delivered != 0:
            raise ValueError("a dropped round delivers nothing")


def choose(agent: DOAgent, menu: ContractMenu) -> int | None:
    if isinstance(agent.behavior, Misreport):
        target = agent.behavior.target
        if not 0 <= target < len(menu):
            raise ValueError(f"misreport target {target} is not a menu index")
        return target
    return select_contract(agent.true_type, menu)


def execute_round(agent: DOAgent, item: ContractItem, rng: np.random.Generator, round: int = 0) -> DeliveredEffort:
    """Effort the agent actually puts in this round.

    Exactly one uniform draw is consumed per call whatever the behaviour, so
    paired runs sharing a seed keep their random streams aligned.
    """
    u = rng.random()
    b = agent.behavior
    e = item.effort
    if isinstance(b, Dropout) and u < b.probability:
        return DeliveredEffort(agent.id, round, e, 0.0, dropped=True)
    if isinstance(b, PartialFulfil):
        return DeliveredEffort(agent.id, round, e, min(b.fraction * e, e))
    return DeliveredEffort(agent.id, round, e, e)


def accept_renegotiation(agent: DOAgent, old: ContractItem, new: ContractItem) -> bool:
    """Accept iff the agent's true type prefers the new item.

    Near-ties are broken as in contract selection: the lower effort wins, and
    an equal item is accepted.
    """
    u_old = do_utility(agent.true_type, old)
    u_new = do_utility(agent.true_type, new)
    tol = UTILITY_TOL * (1.0 + abs(u_old))
    if abs(u_new - u_old) <= tol:
        return new.effort <= old.effort
    return u_new > u_old
