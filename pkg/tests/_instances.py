"""Random scheduling instances shared by the scheduler and acceptance suites.

All numbers are small integers or halves so every objective is exact in
binary floating point and optimum comparisons can use ``==``.
"""

import numpy as np

from fleetswap.scheduler import ScheduleProblem, enumerate_optimum


def random_problem(rng: np.random.Generator, max_n: int = 8, max_k: int = 2) -> ScheduleProblem:
    n = int(rng.integers(2, max_n + 1))
    f = int(rng.integers(1, min(3, n - 1) + 1))
    k = int(rng.integers(1, max_k + 1))
    active = rng.choice(n, size=f, replace=False)
    x0 = [0] * n
    for i in active:
        x0[i] = 1
    hubs = []
    for _ in range(k):
        hubs.append(tuple(int(x0[i] == 0 and rng.random() < 0.6) for i in range(n)))
    return ScheduleProblem(
        n_robots=n,
        horizon_k=k,
        formation_size_f=f,
        d0=tuple(float(v) for v in rng.integers(0, 1100, size=n)),
        x0=tuple(x0),
        hub_presence=tuple(hubs),
        r_c=-float(rng.integers(10, 120)),
        r_d=float(rng.integers(10, 120)),
        d_th=float(rng.integers(500, 1100)),
        w1=float(rng.integers(1, 4)) / 2.0,
        w2=float(rng.integers(0, 600)) / 2.0,
    )


def random_feasible_problem(rng: np.random.Generator, max_n: int = 8, max_k: int = 2):
    """Draw until the exhaustive oracle finds a feasible sequence; returns ``(problem, optimum)``."""
    while True:
        problem = random_problem(rng, max_n, max_k)
        best, seq = enumerate_optimum(problem)
        if seq is not None:
            return problem, best


def random_sequence(rng: np.random.Generator, n: int, k: int):
    return [tuple(int(v) for v in rng.integers(0, 2, size=n)) for _ in range(k)]
