"""Per-round energy and monetary cost of a data owner.

Two cost modes are supported. ``PHYSICAL`` derives energies from the radio
and CPU profiles (Shannon-rate upload, DVFS compute energy). ``DIRECT`` uses
flat energy coefficients: a compute energy per unit of effort and a fixed
communication energy per round.

Timing (``comp_time``, ``comm_time``) always comes from the profiles, since the
data consumer's latency term needs it in both modes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class InvalidProfileError(ValueError):
    """A profile field is non-positive or non-finite."""


def _require_positive(obj, *names: str) -> None:
    for name in names:
        value = getattr(obj, name)
        if not (math.isfinite(value) and value > 0):
            raise InvalidProfileError(
                f"{type(obj).__name__}.{name} must be positive and finite, got {value!r}"
            )


def _require_effort(effort: float) -> None:
    if not effort >= 0:
        raise ValueError(f"effort must be non-negative, got {effort!r}")


class CostMode(str, enum.Enum):
    PHYSICAL = "physical"
    DIRECT = "direct"


@dataclass(frozen=True)
class CommProfile:
    """Uplink parameters of one data owner.

    Attributes:
        transmission_power: Transmit power in watts.
        bandwidth: Channel bandwidth in hertz.
        channel_gain: Dimensionless gain of the owner-to-consumer link.
        noise_power: Background noise power in watts.
        model_size: Size of one model update in bits. Zero means nothing is
            uploaded.
    """

    transmission_power: float = 0.1
    bandwidth: float = 1e6
    channel_gain: float = 1.0
    noise_power: float = 1e-3
    model_size: float = 698_880.0

    def __post_init__(self):
        _require_positive(self, "transmission_power", "bandwidth", "channel_gain", "noise_power")
        if not (math.isfinite(self.model_size) and self.model_size >= 0):
            raise InvalidProfileError(f"model_size must be >= 0 and finite, got {self.model_size!r}")


@dataclass(frozen=True)
class ComputeProfile:
    """CPU parameters of one data owner.

    Attributes:
        capacitance: Effective switched capacitance of the chipset.
        voltage: Supply voltage.
        cpu_frequency: Operating frequency in cycles per second.
        cycles_per_sample: CPU cycles needed to process one sample once.
    """

    capacitance: float = 1e-9
    voltage: float = 1.0
    cpu_frequency: float = 1e9
    cycles_per_sample: float = 2e4

    def __post_init__(self):
        _require_positive(self, "capacitance", "voltage", "cpu_frequency", "cycles_per_sample")


@dataclass(frozen=True)
class CostParams:
    """Conversion from energy to money, plus the flat coefficients for DIRECT mode.

    ``direct_comp_energy_per_effort`` is read as joules per unit of effort so
    that the cost keeps growing with effort.
    """

    gamma: float = 0.003
    mode: CostMode = CostMode.DIRECT
    direct_comp_energy_per_effort: float = 0.01
    direct_comm_energy: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "mode", CostMode(self.mode))
        _require_positive(self, "gamma")
        for name in ("direct_comp_energy_per_effort", "direct_comm_energy"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise InvalidProfileError(f"CostParams.{name} must be >= 0, got {value!r}")


def transmission_rate(comm: CommProfile) -> float:
    """Achievable uplink rate in bits/s: ``B * ln(1 + g * p / N0)``."""
    _require_positive(comm, "transmission_power", "bandwidth", "channel_gain", "noise_power")
    snr = comm.channel_gain * comm.transmission_power / comm.noise_power
    rate = comm.bandwidth * math.log1p(snr)
    if not (math.isfinite(rate) and rate > 0):
        raise InvalidProfileError(f"transmission rate is not positive and finite: {rate!r}")
    return rate


def comm_time(comm: CommProfile) -> float:
    return comm.model_size / transmission_rate(comm)


def comm_energy(comm: CommProfile) -> float:
    return comm.model_size * comm.transmission_power / transmission_rate(comm)


def comp_energy(compute: ComputeProfile, effort: float) -> float:
    """Training energy ``zeta * v^2 * mu * effort``.

    Power is ``zeta * v^2 * F`` and time is ``mu * effort / F``, so the CPU
    frequency cancels out.
    """
    _require_effort(effort)
    return compute.capacitance * compute.voltage**2 * compute.cycles_per_sample * effort


def comp_time(compute: ComputeProfile, effort: float) -> float:
    _require_effort(effort)
    return compute.cycles_per_sample * effort / compute.cpu_frequency


def marginal_cost(params: CostParams, compute: ComputeProfile) -> float:
    """Money per unit of effort: the slope of :func:`total_cost`."""
    if params.mode is CostMode.DIRECT:
        return params.gamma * params.direct_comp_energy_per_effort
    return params.gamma * compute.capacitance * compute.voltage**2 * compute.cycles_per_sample


def fixed_cost(params: CostParams, comm: CommProfile) -> float:
    """Money spent per round regardless of effort (the upload)."""
    if params.mode is CostMode.DIRECT:
        return params.gamma * params.direct_comm_energy
    return params.gamma * comm_energy(comm)


def total_cost(params: CostParams, comm: CommProfile, compute: ComputeProfile, effort: float) -> float:
    """Monetary cost of one global round at the given effort."""
    _require_effort(effort)
    if params.mode is CostMode.DIRECT:
        return params.gamma * (params.direct_comp_energy_per_effort * effort + params.direct_comm_energy)
    return params.gamma * (comp_energy(compute, effort) + comm_energy(comm))
