"""Round-by-round simulation of a consumer contracting a population of data owners.

A run publishes a menu designed under the prior, lets every owner pick an
item, then loops over training rounds: owners deliver effort, the consumer
settles payments against the task budget, updates one type belief per owner,
and advances the global model. At round ``T / a`` a renegotiation gate may
fire, after which owners are offered the re-optimized item of their most
likely type. The static baseline is the same loop with the gate disabled.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.stats import binomtest

from .agents import (
    Behavior,
    Contract,
    DeliveredEffort,
    DOAgent,
    Dropout,
    Misreport,
    PartialFulfil,
    Truthful,
    accept_renegotiation,
    choose,
    execute_round,
)
from .belief import (
    DegenerateEvidenceError,
    LikelihoodModel,
    Observation,
    TypeBelief,
    map_type,
    population_belief,
    posterior_update,
)
from .contracts import ContractMenu, DOTypeProfile, select_contract
from .cost import CommProfile, ComputeProfile, CostMode, CostParams
from .learning import GlobalModelState, ProgressModel, Trainer, converging, reached_target
from .optimizer import DEFAULT_RESOLUTION, EffortGrid, InfeasibleMenuError, build_grid, optimize_menu

FULFIL_TOL = 1e-9


class FulfillmentRule(str, enum.Enum):
    BINARY = "binary"
    PRORATA = "prorata"


@dataclass(frozen=True)
class SimulationConfig:
    """Everything a run depends on. Defaults are the experiment-scale settings."""

    total_rounds: int = 50
    num_dos: int = 45
    num_types: int = 10
    budget: float = 400.0
    t_max: float = 1.5
    partition: int = 2
    seed: int = 0
    # behaviour name -> share of the population; see BEHAVIOR_NAMES
    behavior_mix: dict = field(default_factory=lambda: {"truthful": 1.0})
    dropout_probability: float = 0.2
    partial_fraction: float = 0.5
    misreport_target: int = 0
    true_type_distribution: tuple[float, ...] | None = None
    type_assignment: str = "sample"
    prior: tuple[float, ...] | None = None
    q_scale: float = 2.0
    xi_max: float = 0.9
    progress_rate: float = 1e-6
    progress_noise: float = 0.0
    fulfillment_rule: FulfillmentRule = FulfillmentRule.BINARY
    # type ladder: theta_k = theta_step * (k + 1), data_size_k = data_size_step * (k + 1)
    theta_step: float = 1.0
    data_size_step: float = 200.0
    gamma: float = 0.003
    cost_mode: CostMode = CostMode.DIRECT
    comp_energy_per_effort: float = 0.01
    comm_energy: float = 0.1
    compute: ComputeProfile = field(default_factory=ComputeProfile)
    comm: CommProfile = field(default_factory=CommProfile)
    grid_resolution: int = DEFAULT_RESOLUTION
    belief_sigma: float | None = None
    design_accuracy: float | None = None
    target_accuracy: float | None = None
    repeat_gates: bool = False
    do_starting_price: float = 0.2  # reserved; no role in the mechanism

    def __post_init__(self):
        object.__setattr__(self, "fulfillment_rule", FulfillmentRule(self.fulfillment_rule))
        object.__setattr__(self, "cost_mode", CostMode(self.cost_mode))
        for name in ("true_type_distribution", "prior"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(float(v) for v in value))
        object.__setattr__(self, "behavior_mix", dict(self.behavior_mix))
        validate_config(self)

    def ladder(self) -> list[DOTypeProfile]:
        params = CostParams(self.gamma, self.cost_mode, self.comp_energy_per_effort, self.comm_energy)
        return [
            DOTypeProfile(
                k,
                self.theta_step * (k + 1),
                self.data_size_step * (k + 1),
                self.compute,
                self.comm,
                params,
            )
            for k in range(self.num_types)
        ]

    def prior_belief(self) -> TypeBelief:
        if self.prior is None:
            return TypeBelief.uniform(self.num_types)
        return TypeBelief(np.array(self.prior))

    def progress(self) -> ProgressModel:
        return ProgressModel(self.xi_max, self.progress_rate, self.progress_noise)

    def design_accuracy_model(self):
        """Constant estimate if configured, else a forecast over the whole task."""
        if self.design_accuracy is not None:
            return self.design_accuracy
        return self.progress().forecast(self.num_dos * self.total_rounds)


BEHAVIOR_NAMES = ("truthful", "misreport", "partial", "dropout")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def validate_config(c: SimulationConfig) -> None:
    if c.total_rounds < 0:
        raise ConfigError("total_rounds", "must be >= 0")
    for name in ("num_dos", "num_types", "partition", "grid_resolution"):
        if getattr(c, name) < 1:
            raise ConfigError(name, "must be positive")
    if c.total_rounds % c.partition != 0:
        raise ConfigError("partition", f"total_rounds={c.total_rounds} is not a multiple of partition={c.partition}")
    if not c.budget > 0:
        raise ConfigError("budget", "must be positive")
    if not c.t_max > 0:
        raise ConfigError("t_max", "must be positive")
    unknown = set(c.behavior_mix) - set(BEHAVIOR_NAMES)
    if unknown:
        raise ConfigError("behavior_mix", f"unknown behaviours {sorted(unknown)}")
    shares = list(c.behavior_mix.values())
    if not shares or min(shares) < 0 or sum(shares) <= 0:
        raise ConfigError("behavior_mix", "shares must be non-negative with a positive sum")
    for name in ("true_type_distribution", "prior"):
        dist = getattr(c, name)
        if dist is not None:
            if len(dist) != c.num_types:
                raise ConfigError(name, f"needs {c.num_types} entries, got {len(dist)}")
            if min(dist) < 0 or abs(sum(dist) - 1.0) > 1e-9:
                raise ConfigError(name, "must be a probability vector")
    if c.type_assignment not in ("sample", "quota"):
        raise ConfigError("type_assignment", "must be 'sample' or 'quota'")
    if not 0 <= c.misreport_target < c.num_types:
        raise ConfigError("misreport_target", "must be a type index")
    if c.belief_sigma is not None and not c.belief_sigma > 0:
        raise ConfigError("belief_sigma", "must be positive")
    try:
        Dropout(c.dropout_probability)
        PartialFulfil(c.partial_fraction)
    except ValueError as exc:
        raise ConfigError("behavior_mix", str(exc)) from None


def quota_counts(shares: Sequence[float], n: int) -> list[int]:
    """Largest-remainder apportionment of ``n`` items to ``shares`` (ties to lower index)."""
    w = np.asarray(shares, dtype=float)
    exact = w / w.sum() * n
    counts = np.floor(exact).astype(int)
    order = sorted(range(len(w)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: n - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def _behaviors(c: SimulationConfig) -> list[Behavior]:
    names = [n for n in BEHAVIOR_NAMES if n in c.behavior_mix]
    counts = quota_counts([c.behavior_mix[n] for n in names], c.num_dos)
    make = {
        "truthful": Truthful,
        "misreport": lambda: Misreport(c.misreport_target),
        "partial": lambda: PartialFulfil(c.partial_fraction),
        "dropout": lambda: Dropout(c.dropout_probability),
    }
    out: list[Behavior] = []
    for name, count in zip(names, counts):
        out.extend(make[name]() for _ in range(count))
    return out


def _true_types(c: SimulationConfig, rng: np.random.Generator) -> list[int]:
    dist = np.array(c.true_type_distribution) if c.true_type_distribution else c.prior_belief().probs
    if c.type_assignment == "quota":
        types = [k for k, n in enumerate(quota_counts(dist, c.num_dos)) for _ in range(n)]
        return [int(t) for t in rng.permutation(types)]
    return [int(t) for t in rng.choice(len(dist), size=c.num_dos, p=dist / dist.sum())]


# ---------------------------------------------------------------------------
# ledger


@dataclass(frozen=True)
class Payment:
    do_id: int
    reward: float  # reward units actually paid (R, possibly pro-rated)
    outlay: float  # money debited from the budget: theta_item * reward
    capped: bool = False


@dataclass(frozen=True)
class RoundRecord:
    round: int
    payments: tuple[Payment, ...]
    budget_spent: float  # cumulative, after this round
    dc_utility: float
    accuracy: float
    loss: float
    deliveries: tuple[DeliveredEffort, ...]
    belief: tuple[float, ...]  # population belief after this round's update


@dataclass
class RoundLedger:
    budget: float
    spent: float = 0.0
    rounds: list[RoundRecord] = field(default_factory=list)

    @property
    def remaining(self) -> float:
        return self.budget - self.spent


def settle_round(
    ledger: RoundLedger,
    deliveries: Sequence[DeliveredEffort],
    contracts: dict,
    rule: FulfillmentRule | str = FulfillmentRule.BINARY,
) -> list[Payment]:
    """Pay each delivery under its contract and debit the budget.

    ``contracts`` maps ``do_id`` to ``(item, theta_item)``. Payments that would
    overrun the budget are cut to what remains and flagged; the ledger's
    cumulative spend can never exceed its budget.
    """
    rule = FulfillmentRule(rule)
    payments = []
    for d in sorted(deliveries, key=lambda d: d.do_id):
        item, theta = contracts[d.do_id]
        if d.dropped or d.delivered <= 0:
            due = 0.0
        elif rule is FulfillmentRule.BINARY:
            due = item.reward if d.delivered >= d.contracted - FULFIL_TOL * (1 + d.contracted) else 0.0
        else:
            due = item.reward * min(d.delivered / d.contracted, 1.0) if d.contracted > 0 else item.reward
        outlay = theta * due
        capped = False
        if outlay > 0:
            new_spent = ledger.spent + outlay
            if new_spent > ledger.budget:
                outlay = max(ledger.budget - ledger.spent, 0.0)
                due = outlay / theta
                new_spent = ledger.budget
                capped = True
            ledger.spent = new_spent
        payments.append(Payment(d.do_id, due, outlay, capped))
    return payments


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class RenegotiationEvent:
    round: int
    accepted: int
    rejected: int
    failed: str | None = None


@dataclass
class RunResult:
    mechanism: str
    seed: int
    ledger: RoundLedger
    final_accuracy: float = 0.0
    total_dc_utility: float = 0.0
    per_do_utility: list[float] = field(default_factory=list)
    menus: list[ContractMenu] = field(default_factory=list)
    renegotiations: list[RenegotiationEvent] = field(default_factory=list)
    true_types: list[int] = field(default_factory=list)
    error: str | None = None

    @property
    def rounds_completed(self) -> int:
        return len(self.ledger.rounds)

    @property
    def total_payments(self) -> float:
        return self.ledger.spent

    @property
    def renegotiation_accepted(self) -> int:
        return sum(ev.accepted for ev in self.renegotiations)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mechanism": self.mechanism,
            "seed": self.seed,
            "budget": self.ledger.budget,
            "total_payments": self.ledger.spent,
            "final_accuracy": self.final_accuracy,
            "total_dc_utility": self.total_dc_utility,
            "per_do_utility": list(self.per_do_utility),
            "true_types": list(self.true_types),
            "menus": [
                {
                    "provenance": m.provenance,
                    "budget_cap": m.budget_cap,
                    "rewards": m.rewards.tolist(),
                    "efforts": m.efforts.tolist(),
                }
                for m in self.menus
            ],
            "renegotiations": [asdict(ev) for ev in self.renegotiations],
            "rounds": [asdict(r) for r in self.ledger.rounds],
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# gate and renegotiation


def gate_rounds(config: SimulationConfig) -> list[int]:
    """Rounds at which the renegotiation gate is evaluated."""
    T, a = config.total_rounds, config.partition
    if T == 0:
        return []
    step = T // a
    if config.repeat_gates:
        return [step * m for m in range(1, a)]
    return [step] if step < T else []


def renegotiation_due(
    t: int,
    ledger: RoundLedger,
    curr: GlobalModelState,
    prev: GlobalModelState,
    config: SimulationConfig,
) -> bool:
    """Gate at ``t = T/a``: spend so far within ``B/a`` and the loss not increasing."""
    if t < 1:
        raise ValueError("rounds are numbered from 1")
    gates = gate_rounds(config)
    if t not in gates:
        return False
    share = (gates.index(t) + 1) / config.partition
    if ledger.spent > config.budget * share:
        return False
    return converging(curr, prev)


def _likelihood_for(menu: ContractMenu, ladder: Sequence[DOTypeProfile], sigma: float) -> LikelihoodModel:
    """Gaussian effort model centred on the item each type would pick from ``menu``."""
    centers = []
    for t in ladder:
        pick = select_contract(t, menu)
        centers.append(menu[pick].effort if pick is not None else menu[t.index].effort)
    return LikelihoodModel(sigma, np.array(centers))


def default_sigma(menu: ContractMenu) -> float:
    """Half the smallest positive gap between distinct contracted efforts."""
    e = np.unique(menu.efforts)
    gaps = np.diff(e)
    if gaps.size:
        return 0.5 * float(gaps.min())
    return max(0.05 * float(e.max()), 1e-9)


def renegotiate(
    beliefs: Sequence[TypeBelief],
    config: SimulationConfig,
    ladder: Sequence[DOTypeProfile],
    grid: EffortGrid,
    accuracy,
    budget_left: float,
    rounds_left: int,
    round: int,
) -> tuple[ContractMenu, list[int]]:
    """Re-optimize under the population belief; offer each owner its MAP type's item.

    The per-round allowance is the remaining budget spread over the remaining
    rounds, never more than the initial ``budget / total_rounds``: money left
    unspent earlier is kept, so only the belief update moves the menu.

    Returns the new menu and the offered item index per owner.

    Raises:
        InfeasibleMenuError: the remaining budget cannot fund any menu.
    """
    pop = population_belief(beliefs)
    menu = optimize_menu(
        ladder,
        pop,
        grid,
        min(budget_left / rounds_left, config.budget / config.total_rounds),
        config.q_scale,
        config.t_max,
        accuracy,
        renegotiated_at=round,
        budget_weights=config.num_dos * pop.probs,
    )
    return menu, [map_type(b) for b in beliefs]


# ---------------------------------------------------------------------------
# main loop


def _round_dc_utility(
    agents: Sequence[DOAgent],
    deliveries: dict,
    outlays: dict,
    state: GlobalModelState,
    config: SimulationConfig,
) -> float:
    """Realized counterpart of the expected consumer utility, averaged over the population."""
    n = config.num_dos
    active = [a for a in agents if a.id in deliveries and not deliveries[a.id].dropped]
    total = config.q_scale * state.accuracy * len(active) / n
    for a in active:
        slack = a.true_type.time_slack(deliveries[a.id].delivered, config.t_max)
        total += (math.log(slack) - outlays.get(a.id, 0.0)) / n
    return total


def run(config: SimulationConfig, renegotiation: bool = True, trainer: Trainer | None = None) -> RunResult:
    mechanism = "rctim" if renegotiation else "static"
    ladder = config.ladder()
    thetas = [t.theta for t in ladder]
    prior = config.prior_belief()
    ledger = RoundLedger(config.budget)
    result = RunResult(mechanism, config.seed, ledger)
    if config.total_rounds == 0:
        return result

    streams = np.random.SeedSequence(config.seed).spawn(2 + config.num_dos)
    type_rng, model_rng = (np.random.default_rng(s) for s in streams[:2])
    agent_rngs = [np.random.default_rng(s) for s in streams[2:]]
    true_types = _true_types(config, type_rng)
    result.true_types = true_types
    agents = [DOAgent(n, ladder[k], b) for n, (k, b) in enumerate(zip(true_types, _behaviors(config)))]
    trainer = trainer or config.progress()

    grid = build_grid(ladder, config.t_max, config.grid_resolution)
    accuracy = config.design_accuracy_model()
    try:
        menu = optimize_menu(
            ladder,
            prior,
            grid,
            config.budget / config.total_rounds,
            config.q_scale,
            config.t_max,
            accuracy,
            budget_weights=config.num_dos * prior.probs,
        )
    except InfeasibleMenuError as exc:
        result.error = f"initial menu infeasible: {exc}"
        return result
    menus = [menu]
    result.menus = menus
    for a in agents:
        pick = choose(a, menu)
        if pick is not None:
            a.contract = Contract(pick, menu[pick], 0)

    sigma = config.belief_sigma
    models = [_likelihood_for(menu, ladder, sigma or default_sigma(menu))]
    beliefs = [prior] * config.num_dos
    per_do = [0.0] * config.num_dos
    state = GlobalModelState()
    gates = set(gate_rounds(config)) if renegotiation else set()

    for t in range(1, config.total_rounds + 1):
        if ledger.remaining <= 0:
            break
        deliveries = {}
        for a in agents:
            u_rng = agent_rngs[a.id]
            if a.contract is None:
                u_rng.random()  # keep the stream aligned with runs where the agent holds a contract
                continue
            deliveries[a.id] = execute_round(a, a.contract.item, u_rng, t)
        contracts = {a.id: (a.contract.item, thetas[a.contract.index]) for a in agents if a.contract}
        payments = settle_round(ledger, list(deliveries.values()), contracts, config.fulfillment_rule)
        outlays = {p.do_id: p.outlay for p in payments}

        for a in agents:
            d = deliveries.get(a.id)
            if d is None:
                continue
            obs = Observation(a.id, t, d.delivered, participated=not d.dropped)
            try:
                beliefs[a.id] = posterior_update(beliefs[a.id], models[a.contract.menu_id], [obs])
            except DegenerateEvidenceError:
                pass  # keep the previous belief
            cost = 0.0 if d.dropped else a.true_type.cost(d.delivered)
            pay = next(p for p in payments if p.do_id == a.id)
            per_do[a.id] += a.true_type.theta * pay.reward - cost

        prev = state
        state = trainer.advance(state, float(sum(d.delivered for d in deliveries.values())), model_rng)
        pop = population_belief(beliefs)
        dc_u = _round_dc_utility(agents, deliveries, outlays, state, config)
        ledger.rounds.append(
            RoundRecord(
                t,
                tuple(payments),
                ledger.spent,
                dc_u,
                state.accuracy,
                state.loss,
                tuple(deliveries[k] for k in sorted(deliveries)),
                tuple(pop.tolist()),
            )
        )
        if reached_target(state, config.target_accuracy):
            break

        if t in gates and t < config.total_rounds and renegotiation_due(t, ledger, state, prev, config):
            try:
                new_menu, offers = renegotiate(
                    beliefs, config, ladder, grid, accuracy, ledger.remaining, config.total_rounds - t, t
                )
            except InfeasibleMenuError as exc:
                result.renegotiations.append(RenegotiationEvent(t, 0, 0, str(exc)))
                continue
            menus.append(new_menu)
            menu_id = len(menus) - 1
            models.append(_likelihood_for(new_menu, ladder, sigma or default_sigma(new_menu)))
            accepted = rejected = 0
            for a, k in zip(agents, offers):
                if a.contract is None:
                    pick = choose(a, new_menu)
                    if pick is not None:
                        a.contract = Contract(pick, new_menu[pick], menu_id)
                        accepted += 1
                    else:
                        rejected += 1
                elif new_menu[k] == a.contract.item:
                    accepted += 1  # same terms under a pooled label; keep the contract as is
                elif accept_renegotiation(a, a.contract.item, new_menu[k]):
                    a.contract = Contract(k, new_menu[k], menu_id)
                    accepted += 1
                else:
                    rejected += 1
            result.renegotiations.append(RenegotiationEvent(t, accepted, rejected))

    result.final_accuracy = state.accuracy
    result.total_dc_utility = float(sum(r.dc_utility for r in ledger.rounds))
    result.per_do_utility = per_do
    return result


def run_baseline_static(config: SimulationConfig, trainer: Trainer | None = None) -> RunResult:
    return run(config, renegotiation=False, trainer=trainer)


@dataclass(frozen=True)
class CompareSummary:
    mean_rctim: float
    mean_static: float
    differences: tuple[float, ...]
    mean_difference: float
    wins: int
    losses: int
    ties: int
    win_rate: float
    sign_test_p: float


def compare(results: Sequence[tuple[RunResult, RunResult]]) -> CompareSummary:
    """Paired comparison of (renegotiating, static) runs; one-sided sign test on the differences."""
    if not results:
        raise ValueError("need at least one result pair")
    for a, b in results:
        if a.seed != b.seed:
            raise ValueError(f"pair is not matched by seed: {a.seed} vs {b.seed}")
    u_r = np.array([a.total_dc_utility for a, _ in results])
    u_s = np.array([b.total_dc_utility for _, b in results])
    diff = u_r - u_s
    wins, losses = int(np.sum(diff > 0)), int(np.sum(diff < 0))
    n = len(results)
    p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
    return CompareSummary(
        float(u_r.mean()),
        float(u_s.mean()),
        tuple(diff.tolist()),
        float(diff.mean()),
        wins,
        losses,
        n - wins - losses,
        wins / n,
        float(p),
    )
