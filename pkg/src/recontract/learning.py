"""Abstract federated-training progress: cumulative effort in, accuracy and loss out.

This stands in for real FedAvg training. Anything implementing the
:class:`Trainer` protocol can replace :class:`ProgressModel` in a simulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np


class SequencingError(ValueError):
    pass


@dataclass(frozen=True)
class GlobalModelState:
    round: int = 0
    accuracy: float = 0.0
    loss: float = 1.0
    cumulative_effort: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must lie in [0, 1], got {self.accuracy!r}")
        if self.loss < 0:
            raise ValueError(f"loss must be >= 0, got {self.loss!r}")


class Trainer(Protocol):
    def advance(self, state: GlobalModelState, round_effort: float, rng: np.random.Generator) -> GlobalModelState:
        ...


@dataclass(frozen=True)
class ProgressModel:
    """Saturating-exponential learning curve ``xi_max * (1 - exp(-rate * E))``.

    ``E`` is the cumulative effort delivered by all owners so far. With
    ``noise_sigma == 0`` the model is deterministic.
    """

    xi_max: float = 0.9
    rate: float = 1e-6
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not 0 < self.xi_max <= 1:
            raise ValueError(f"xi_max must lie in (0, 1], got {self.xi_max!r}")
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def accuracy_at(self, cumulative_effort):
        return self.xi_max * -np.expm1(-self.rate * np.asarray(cumulative_effort, dtype=float))

    def advance(self, state: GlobalModelState, round_effort: float, rng: np.random.Generator | None = None) -> GlobalModelState:
        if not round_effort >= 0:
            raise ValueError(f"round_effort must be >= 0, got {round_effort!r}")
        effort = state.cumulative_effort + round_effort
        acc = float(self.accuracy_at(effort))
        if self.noise_sigma > 0:
            if rng is None:
                raise ValueError("a random generator is required when noise_sigma > 0")
            acc += float(rng.normal(0.0, self.noise_sigma))
        acc = min(max(acc, 0.0), 1.0)
        return GlobalModelState(state.round + 1, acc, 1.0 - acc, effort)

    def forecast(self, effort_multiplier: float) -> "AccuracyForecast":
        """Accuracy the consumer expects if every owner delivered ``e`` for the whole task.

        ``effort_multiplier`` is the number of owner-rounds, so the forecast is
        ``accuracy_at(effort_multiplier * e)``.
        """
        return AccuracyForecast(self.xi_max, self.rate * effort_multiplier)


@dataclass(frozen=True)
class AccuracyForecast:
    """Design-time map from a per-round contracted effort to expected accuracy."""

    xi_max: float
    rate: float

    def __call__(self, effort):
        return self.xi_max * -np.expm1(-self.rate * np.asarray(effort, dtype=float))


def revenue(accuracy, q_scale: float = 2.0):
    if np.any(np.asarray(accuracy) < 0) or np.any(np.asarray(accuracy) > 1):
        raise ValueError("accuracy must lie in [0, 1]")
    return q_scale * accuracy


def converging(curr: GlobalModelState, prev: GlobalModelState) -> bool:
    """Loss did not increase from ``prev`` to ``curr`` (consecutive rounds only)."""
    if curr.round != prev.round + 1:
        raise SequencingError(f"rounds {prev.round} -> {curr.round} are not consecutive")
    return curr.loss <= prev.loss


def reached_target(state: GlobalModelState, target: float | None) -> bool:
    return target is not None and state.accuracy >= target


__all__ = [
    "AccuracyForecast",
    "GlobalModelState",
    "ProgressModel",
    "SequencingError",
    "Trainer",
    "converging",
    "reached_target",
    "revenue",
]
