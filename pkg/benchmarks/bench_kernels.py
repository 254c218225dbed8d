"""Time the compiled chain kernel against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Reports the best-of-N wall time of ``chain_argmax`` on experiment-sized
tables and of a full budget-binding ``solve_menu``, per backend.
"""

import argparse
import timeit

import numpy as np

from recontract import kernels
from recontract.optimizer import build_grid, solve_menu
from recontract.simulator import SimulationConfig


def chain_problem(K, G, seed=0):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(K, G))
    lin = rng.uniform(0.1, 1.0, size=K)
    points = np.cumsum(rng.uniform(0.1, 1.0, size=G))
    allowed = np.ones(K, dtype=bool)
    return base, lin, points, 0.5, allowed


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.2:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    backends = ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the fallback only")

    cfg = SimulationConfig()
    ladder = cfg.ladder()
    grid = build_grid(ladder, cfg.t_max, cfg.grid_resolution)
    prior = cfg.prior_belief()
    acc = cfg.design_accuracy_model()
    weights = cfg.num_dos * prior.probs
    budget = cfg.budget / cfg.total_rounds

    rows = []
    for K, G in ((10, 512), (10, 4096), (50, 4096)):
        problem = chain_problem(K, G)
        times = {b: best_time(lambda b=b: kernels.chain_argmax(*problem, backend=b), args.repeat) for b in backends}
        rows.append((f"chain_argmax K={K} G={G}", times))
    times = {
        b: best_time(
            lambda b=b: solve_menu(ladder, prior, grid, budget, accuracy=acc, budget_weights=weights, backend=b),
            args.repeat,
        )
        for b in backends
    }
    rows.append(("solve_menu default config", times))

    print(f"{'case':32s}" + "".join(f"{b:>14s}" for b in backends) + ("   speedup" if len(backends) == 2 else ""))
    for name, times in rows:
        line = f"{name:32s}" + "".join(f"{times[b] * 1e3:12.3f}ms" for b in backends)
        if len(backends) == 2:
            line += f"   {times['python'] / times['compiled']:6.1f}x"
        print(line)


if __name__ == "__main__":
    main()
