"""Type beliefs and their Bayesian update from delivered-effort observations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-12
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class DegenerateEvidenceError(ValueError):
    """Every type assigns zero likelihood to the observed evidence."""


@dataclass(frozen=True, eq=False)
class TypeBelief:
    """Probability vector over the K types (zero-based)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("belief must be a non-empty 1-d vector")
        if np.any(probs < 0) or np.any(probs > 1) or not np.all(np.isfinite(probs)):
            raise ValueError(f"belief entries must lie in [0, 1]: {probs}")
        if abs(probs.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"belief must sum to 1, sums to {probs.sum()!r}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, k: int) -> "TypeBelief":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> "TypeBelief":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
        return cls(_normalize(w))

    def __len__(self) -> int:
        return self.probs.size

    def __eq__(self, other) -> bool:
        return isinstance(other, TypeBelief) and np.array_equal(self.probs, other.probs)

    def tolist(self) -> list[float]:
        return self.probs.tolist()


def _normalize(w: np.ndarray) -> np.ndarray:
    p = w / w.sum()
    # one renormalization pass keeps the sum within a couple of ulps of 1
    return p / p.sum()


@dataclass(frozen=True)
class Observation:
    do_id: Hashable
    round: int
    delivered_effort: float
    participated: bool = True

    def __post_init__(self):
        if not self.delivered_effort >= 0:
            raise ValueError(f"delivered_effort must be >= 0, got {self.delivered_effort!r}")
        if self.round < 0:
            raise ValueError(f"round must be >= 0, got {self.round!r}")


@dataclass(frozen=True, eq=False)
class LikelihoodModel:
    """Gaussian effort likelihood centred on each type's contracted effort.

    A round without participation carries no effort reading; it is scored by
    ``dropout_likelihood`` instead (uniform by default, i.e. uninformative).
    """

    sigma: float
    expected_effort: np.ndarray
    dropout_likelihood: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")
        centers = np.array(self.expected_effort, dtype=float)
        centers.setflags(write=False)
        object.__setattr__(self, "expected_effort", centers)
        if self.dropout_likelihood is None:
            drop = np.ones_like(centers)
        else:
            drop = np.array(self.dropout_likelihood, dtype=float)
            if drop.shape != centers.shape or np.any(drop < 0):
                raise ValueError("dropout_likelihood must be non-negative, one entry per type")
        drop.setflags(write=False)
        object.__setattr__(self, "dropout_likelihood", drop)

    @property
    def num_types(self) -> int:
        return self.expected_effort.size

    def log_likelihoods(self, obs: Observation) -> np.ndarray:
        """Log-density of one observation under every type."""
        if not obs.participated:
            with np.errstate(divide="ignore"):
                return np.log(self.dropout_likelihood)
        z = (obs.delivered_effort - self.expected_effort) / self.sigma
        return -0.5 * z * z - _LOG_SQRT_2PI - math.log(self.sigma)


def likelihood(model: LikelihoodModel, obs: Observation, k: int) -> float:
    return float(np.exp(model.log_likelihoods(obs)[k]))


def posterior_update(belief: TypeBelief, model: LikelihoodModel, batch: Iterable[Observation]) -> TypeBelief:
    """Bayes' rule over a batch of observations, accumulated in log space.

    Raises:
        DegenerateEvidenceError: if no type with positive prior mass can explain
            the batch. The input belief is not modified.
    """
    batch = list(batch)
    if not batch:
        return belief
    if len(belief) != model.num_types:
        raise ValueError("belief and likelihood model disagree on the number of types")
    with np.errstate(divide="ignore"):
        log_post = np.log(belief.probs)
    for obs in batch:
        log_post = log_post + model.log_likelihoods(obs)
    peak = np.max(log_post)
    if not np.isfinite(peak):
        raise DegenerateEvidenceError("joint likelihood is zero for every type")
    return TypeBelief(_normalize(np.exp(log_post - peak)))


def map_type(belief: TypeBelief) -> int:
    """Most probable type; ``np.argmax`` already resolves ties to the lowest index."""
    return int(np.argmax(belief.probs))


def population_belief(beliefs: Sequence[TypeBelief]) -> TypeBelief:
    """Average of per-owner beliefs, used as the population type distribution."""
    if not beliefs:
        raise ValueError("need at least one belief")
    stacked = np.vstack([b.probs for b in beliefs])
    return TypeBelief(_normalize(stacked.mean(axis=0)))
