import numpy as np
import pytest

from recontract.contracts import DOTypeProfile
from recontract.cost import CommProfile, ComputeProfile, CostMode, CostParams
from recontract.learning import AccuracyForecast

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def record(criterion: int, title: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE[criterion] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}")


def direct_type(index, theta, unit=1.0, fixed=0.0, data_size=100.0, compute=None):
    """Type whose cost is exactly ``unit * e + fixed``."""
    params = CostParams(gamma=1.0, mode=CostMode.DIRECT, direct_comp_energy_per_effort=unit, direct_comm_energy=fixed)
    return DOTypeProfile(index, theta, data_size, compute or ComputeProfile(), CommProfile(), params)


def worked_ladder():
    """Two types, theta = (1, 2), unit costs (1, 1), no fixed cost."""
    return [direct_type(0, 1.0), direct_type(1, 2.0)]


def random_instance(rng: np.random.Generator, K: int | None = None):
    """Random regular ladder at experiment scale, with a budget and a design accuracy.

    Per-type unit costs are random; type 0's is raised if needed so that it has
    the largest cost per unit of valuation (the ladder must be regular for the
    lowest type's participation constraint to bind). Types above 0 may be in
    any order, which exercises pooling.
    """
    if K is None:
        K = int(rng.integers(2, 11))
    thetas = np.sort(rng.uniform(0.05, 10.0, size=K))
    while np.any(np.diff(thetas) <= 1e-6):
        thetas = np.sort(rng.uniform(0.05, 10.0, size=K))
    gamma = rng.uniform(0.001, 0.01)
    comm_energy = rng.uniform(0.01, 0.5)
    unit = rng.uniform(0.002, 0.05, size=K)
    unit[0] = max(unit[0], float(np.max(unit * thetas[0] / thetas)))
    comm = CommProfile(model_size=rng.uniform(1e5, 2e6))
    types = []
    for k in range(K):
        compute = ComputeProfile(
            cpu_frequency=rng.uniform(0.5e9, 2e9),
            cycles_per_sample=rng.uniform(1e4, 5e4),
        )
        params = CostParams(gamma, CostMode.DIRECT, float(unit[k]), comm_energy)
        types.append(DOTypeProfile(k, float(thetas[k]), 200.0 * (k + 1), compute, comm, params))
    prior = rng.dirichlet(np.ones(K))
    budget = float(np.exp(rng.uniform(np.log(0.05), np.log(8.0))))
    if rng.random() < 0.5:
        accuracy = AccuracyForecast(0.9, float(10 ** rng.uniform(-6, -3)))
    else:
        accuracy = float(rng.uniform(0.0, 0.9))
    return types, prior, budget, accuracy


@pytest.fixture
def ladder():
    return worked_ladder()
