import itertools

import numpy as np
import pytest
from conftest import direct_type, random_instance
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import exhaustive_best

from recontract.belief import TypeBelief
from recontract.contracts import (
    check_budget,
    check_ic,
    check_ir,
    check_monotonicity,
    cost_to_value_ratios,
    dc_expected_utility,
    expected_total_reward,
    menu_from_efforts,
    menu_payment,
)
from recontract.learning import AccuracyForecast
from recontract.optimizer import (
    EffortGrid,
    _budgeted_chain,
    InfeasibleMenuError,
    IrregularLadderError,
    build_grid,
    effort_bound,
    jump_mask,
    objective_table,
    optimize_menu,
    reward_coefficients,
    solve_menu,
)


def test_single_point_grid():
    t = direct_type(0, 2.0, unit=0.5, fixed=0.1)
    grid = EffortGrid.from_points([10.0], [t], 1.5)
    menu = optimize_menu([t], TypeBelief.uniform(1), grid, budget=100.0)
    assert menu[0].effort == 10.0
    assert menu[0].reward == pytest.approx(t.cost(10.0) / 2.0)


def test_grid_respects_time_bounds():
    rng = np.random.default_rng(3)
    types, *_ = random_instance(rng, 5)
    grid = build_grid(types, 1.5, resolution=64)
    for k, t in enumerate(types):
        pts = grid.points_for(k)
        assert np.all(t.time_slack(pts, 1.5) > 0)
        assert pts[-1] == pytest.approx(0.999 * effort_bound(t, 1.5))
        assert pts.size >= 64


def test_grid_validation():
    with pytest.raises(ValueError):
        EffortGrid(np.array([2.0, 1.0]), (1,))
    with pytest.raises(ValueError):
        EffortGrid(np.array([1.0, 2.0]), (3,))


def test_separable_objective_matches_expected_utility():
    rng = np.random.default_rng(11)
    for _ in range(20):
        types, prior, _, acc = random_instance(rng)
        belief = TypeBelief(prior)
        grid = build_grid(types, 1.5, resolution=32)
        table = objective_table(types, belief, grid, acc)
        idx = np.sort(rng.integers(0, min(grid.counts), size=len(types)))
        e = grid.points[idx]
        menu = menu_from_efforts(e, types)
        direct = dc_expected_utility(menu, types, belief, acc)
        # constant term: the fixed part of the reward bill
        const = -sum(p * t.theta for p, t in zip(prior, types)) * types[0].base_cost / types[0].theta
        assert table[np.arange(len(types)), idx].sum() + const == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_reward_coefficients_match_direct_summation():
    rng = np.random.default_rng(5)
    for _ in range(50):
        types, prior, _, _ = random_instance(rng)
        belief = TypeBelief(prior)
        e = np.sort(rng.uniform(0, 100, size=len(types)))
        coef = reward_coefficients(types, belief)
        const = sum(p * t.theta for p, t in zip(prior, types)) * types[0].base_cost / types[0].theta
        assert coef @ e + const == pytest.approx(expected_total_reward(e, types, belief), rel=1e-10)


@pytest.mark.parametrize("K", [2, 3])
def test_matches_exhaustive_search(K):
    rng = np.random.default_rng(100 + K)
    for _ in range(15):
        types, prior, budget, acc = random_instance(rng, K)
        grid = build_grid(types, 1.5, resolution=16)
        best = exhaustive_best(types, prior, grid, budget, acc)
        if best is None:
            with pytest.raises(InfeasibleMenuError):
                optimize_menu(types, TypeBelief(prior), grid, budget, accuracy=acc)
            continue
        menu = optimize_menu(types, TypeBelief(prior), grid, budget, accuracy=acc)
        u = dc_expected_utility(menu, types, TypeBelief(prior), acc)
        assert u <= best[0] + 1e-9
        assert u == pytest.approx(best[0], rel=1e-6, abs=1e-9)


def test_unconstrained_solution_is_the_table_optimum():
    rng = np.random.default_rng(8)
    types, prior, _, acc = random_instance(rng, 2)
    grid = build_grid(types, 1.5, resolution=40)
    sol = solve_menu(types, TypeBelief(prior), grid, budget=1e9, accuracy=acc)
    assert sol.multiplier == 0.0
    best = exhaustive_best(types, prior, grid, 1e9, acc)
    assert tuple(sol.grid_indices) == tuple(best[1])


def cheapest_cost(types, belief, grid, **kw):
    with pytest.raises(InfeasibleMenuError) as err:
        solve_menu(types, belief, grid, budget=1e-12, **kw)
    return err.value.cheapest_cost


def interior_ladder(K):
    """Cheap effort and a steep accuracy curve, so the unconstrained optimum is interior."""
    return [direct_type(k, float(k + 1), unit=2e-5 * (1 + 0.5 * k), fixed=0.05) for k in range(K)]


def test_tighter_budget_lowers_payment():
    types = interior_ladder(4)
    belief = TypeBelief.uniform(4)
    acc = AccuracyForecast(0.9, 1e-4)
    grid = build_grid(types, 1.5, resolution=128)
    free = solve_menu(types, belief, grid, budget=1e9, accuracy=acc)
    assert free.multiplier == 0.0
    cap = 0.5 * (free.payment + cheapest_cost(types, belief, grid, accuracy=acc))
    tight = solve_menu(types, belief, grid, budget=cap, accuracy=acc)
    assert tight.multiplier > 0
    assert tight.payment < free.payment
    assert tight.payment <= cap
    assert check_budget(tight.menu, types)


def test_infeasible_budget_reports_cheapest():
    types = [direct_type(0, 1.0, unit=1.0, fixed=1.0), direct_type(1, 2.0, unit=1.0, fixed=1.0)]
    grid = build_grid(types, 1.5, resolution=8)
    with pytest.raises(InfeasibleMenuError) as err:
        optimize_menu(types, TypeBelief.uniform(2), grid, budget=1e-3)
    assert err.value.cheapest_cost > 1e-3
    assert err.value.cheapest_cost == pytest.approx(menu_payment(err.value.cheapest_menu, types))


def test_irregular_ladder_rejected():
    types = [direct_type(0, 1.0, unit=0.1), direct_type(1, 2.0, unit=1.0)]
    with pytest.raises(IrregularLadderError):
        optimize_menu(types, TypeBelief.uniform(2), build_grid(types, 1.5, 8), budget=10.0)


def test_jump_mask_regular_ladder_all_open():
    types = [direct_type(k, float(k + 1), unit=1.0) for k in range(5)]
    assert jump_mask(types).all()


def test_jump_mask_pools_inverted_pair():
    # ratios: 1, 0.2, 0.5 -> type 2 costs more per unit valuation than type 1
    types = [direct_type(0, 1.0, 1.0), direct_type(1, 2.0, 0.4), direct_type(2, 3.0, 1.5)]
    assert cost_to_value_ratios(types).tolist() == pytest.approx([1.0, 0.2, 0.5])
    assert jump_mask(types).tolist() == [True, False, False]


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_output_always_ic_ir_monotone_within_budget(seed):
    types, prior, budget, acc = random_instance(np.random.default_rng(seed))
    grid = build_grid(types, 1.5, resolution=64)
    try:
        menu = optimize_menu(types, TypeBelief(prior), grid, budget, accuracy=acc)
    except InfeasibleMenuError as exc:
        assert exc.cheapest_cost > budget
        return
    assert check_ic(menu, types).ok
    ir = check_ir(menu, types)
    assert ir.ok and ir.type0_binds
    assert check_monotonicity(menu)
    assert check_budget(menu, types)


def test_weighted_budget_is_enforced():
    types = interior_ladder(6)
    prior = np.random.default_rng(21).dirichlet(np.ones(6))
    acc = AccuracyForecast(0.9, 1e-4)
    weights = 45 * prior
    grid = build_grid(types, 1.5, resolution=64)
    free = optimize_menu(types, TypeBelief(prior), grid, 1e9, accuracy=acc, budget_weights=weights)
    low = cheapest_cost(types, TypeBelief(prior), grid, accuracy=acc, budget_weights=weights)
    cap = 0.5 * (menu_payment(free, types) + low)
    assert cap < menu_payment(free, types)
    menu = optimize_menu(types, TypeBelief(prior), grid, cap, accuracy=acc, budget_weights=weights)
    assert menu.budget_weights == pytest.approx(tuple(weights))
    assert menu_payment(menu, types) <= cap


def test_backends_agree_on_menus():
    rng = np.random.default_rng(4)
    types, prior, budget, acc = random_instance(rng, 7)
    grid = build_grid(types, 1.5)
    a = solve_menu(types, TypeBelief(prior), grid, 2.0, accuracy=acc, backend="python")
    b = solve_menu(types, TypeBelief(prior), grid, 2.0, accuracy=acc)
    assert np.array_equal(a.grid_indices, b.grid_indices)


def brute_budgeted(table, pcoef, points, allowed, cap):
    K, G = table.shape
    best, arg = -np.inf, None
    for g in itertools.combinations_with_replacement(range(G), K):
        if any(not allowed[k] and g[k] != g[k - 1] for k in range(1, K)):
            continue
        if pcoef @ points[list(g)] > cap:
            continue
        v = table[np.arange(K), list(g)].sum()
        if v > best:
            best, arg = v, g
    return arg, best


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 7))
@settings(max_examples=200, deadline=None)
def test_budgeted_chain_matches_brute_force(seed, K, G):
    rng = np.random.default_rng(seed)
    table = rng.normal(size=(K, G))
    for k, n in enumerate(np.sort(rng.integers(1, G + 1, size=K))[::-1]):
        table[k, n:] = -np.inf
    pcoef = rng.uniform(0.1, 1.0, size=K)
    points = np.cumsum(rng.uniform(0.1, 1.0, size=G))
    allowed = rng.random(K) < 0.7
    allowed[0] = True
    cap = float(pcoef.sum() * rng.uniform(points[0], points[-1]))
    arg, want = brute_budgeted(table, pcoef, points, allowed, cap)
    # the cap can land exactly on a payment; allow the running sum an ulp of slack
    loose = cap * (1 + 1e-12)
    got = _budgeted_chain(table, pcoef, points, allowed, loose, -np.inf)
    if arg is None:
        return
    assert table[np.arange(K), got].sum() >= want - 1e-12 * (1 + abs(want))
    assert pcoef @ points[got] <= loose
    assert np.all(np.diff(got) >= 0)
    assert all(allowed[k] or got[k] == got[k - 1] for k in range(1, K))


def test_budgeted_chain_respects_floor():
    table = np.array([[0.0, 1.0], [0.0, 1.0]])
    args = (table, np.ones(2), np.array([1.0, 2.0]), np.ones(2, bool), 3.0)
    assert _budgeted_chain(*args, 1.0).tolist() in ([0, 1], [1, 1])
    assert _budgeted_chain(*args, 5.0) is None
