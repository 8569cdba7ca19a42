"""Moving-horizon robot selection as a binary quadratic program.

Decision variables are the assignment vectors ``X^1..X^k`` (1 = robot in the
formation at that hub, 0 = charging at a hub); ``X^0`` is the current
assignment and enters as data. The objective trades off the predicted
discharge of the robots active at the last horizon step against retention of
the same robots across consecutive hubs::

    minimise  1/2 x'Px + Q'x  =  w1 * (D^k)'X^k  -  w2 * sum_j (X^j)'X^{j-1}

The program is solved exactly by depth-first enumeration over feasible
per-step assignments with a bound; ties are broken towards lower robot ids.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

Binary = Tuple[int, ...]


class Infeasible(Exception):
    """No assignment sequence satisfies the formation, battery and hub constraints."""


@dataclass(frozen=True)
class ScheduleProblem:
    n_robots: int
    horizon_k: int
    formation_size_f: int
    d0: Tuple[float, ...]
    x0: Binary
    hub_presence: Tuple[Binary, ...]
    r_c: float
    r_d: float
    d_th: float
    w1: float = 1.0
    w2: float = 0.5
    robot_ids: Optional[Tuple[int, ...]] = None
    hub_ids: Optional[Tuple[str, ...]] = None
    capacity_mah: float = 1200.0

    def __post_init__(self):
        n, k, f = self.n_robots, self.horizon_k, self.formation_size_f
        object.__setattr__(self, "d0", tuple(float(v) for v in self.d0))
        object.__setattr__(self, "x0", tuple(int(v) for v in self.x0))
        object.__setattr__(self, "hub_presence", tuple(tuple(int(v) for v in h) for h in self.hub_presence))
        if self.robot_ids is None:
            object.__setattr__(self, "robot_ids", tuple(range(1, n + 1)))
        else:
            object.__setattr__(self, "robot_ids", tuple(int(r) for r in self.robot_ids))
        if self.hub_ids is not None:
            object.__setattr__(self, "hub_ids", tuple(str(h) for h in self.hub_ids))
        if k < 1:
            raise ValueError("horizon_k must be at least 1")
        if not 0 < f <= n:
            raise ValueError("formation size must satisfy 0 < F <= N")
        if len(self.d0) != n or len(self.x0) != n or len(self.robot_ids) != n:
            raise ValueError("d0, x0 and robot_ids must have length N")
        if len(self.hub_presence) != k or any(len(h) != n for h in self.hub_presence):
            raise ValueError("hub_presence must hold k vectors of length N")
        if any(v not in (0, 1) for v in self.x0) or any(v not in (0, 1) for h in self.hub_presence for v in h):
            raise ValueError("assignment and presence vectors must be binary")
        if sum(self.x0) != f:
            raise ValueError("x0 must activate exactly F robots")
        if any(d < 0 for d in self.d0):
            raise ValueError("discharge values must be non-negative")
        if not self.r_d > self.r_c:
            raise ValueError("r_d must exceed r_c")
        if self.hub_ids is not None and len(self.hub_ids) != k:
            raise ValueError("hub_ids must name one hub per horizon step")
        for h in self.hub_presence:
            if any(a and b for a, b in zip(h, self.x0)):
                raise ValueError("a robot cannot be both in the formation and at a hub")


@dataclass(frozen=True)
class ScheduleSolution:
    x: Tuple[Binary, ...]
    objective_value: float
    predicted_d: Tuple[Tuple[float, ...], ...]


@dataclass(frozen=True)
class ReplacementOrder:
    leaving: Tuple[int, ...] = ()
    entering: Tuple[int, ...] = ()
    hub_id: Optional[str] = None
    wait: bool = False

    def __post_init__(self):
        if len(self.leaving) != len(self.entering):
            raise ValueError("a replacement order pairs each leaver with one entrant")

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return list(zip(self.leaving, self.entering))

    def __bool__(self) -> bool:
        return bool(self.leaving)


def _linear_discharge(problem: ScheduleProblem, x_seq: Sequence[Sequence[int]], m: int) -> List[float]:
    rc, delta = problem.r_c, problem.r_d - problem.r_c
    counts = [sum(x_seq[j][i] for j in range(m)) for i in range(problem.n_robots)]
    return [problem.d0[i] + m * rc + delta * counts[i] for i in range(problem.n_robots)]


def predict_discharge(problem: ScheduleProblem, x_seq: Sequence[Sequence[int]], m: int) -> List[float]:
    """Discharge vector expected at horizon step ``m`` (1-based), floored at zero."""
    if not 1 <= m <= problem.horizon_k:
        raise ValueError("m must lie in [1, k]")
    if len(x_seq) < m:
        raise ValueError("x_seq is shorter than m")
    return [d if d > 0.0 else 0.0 for d in _linear_discharge(problem, x_seq, m)]


def _blocks(k: int) -> Tuple[np.ndarray, np.ndarray]:
    pr = np.zeros((k, k))
    for j in range(k - 1):
        pr[j, j + 1] = pr[j + 1, j] = 1.0
    pd = np.zeros((k, k))
    pd[k - 1, :] = 1.0
    pd[:, k - 1] = 1.0
    pd[k - 1, k - 1] = 2.0
    return pr, pd


def build_qp(problem: ScheduleProblem) -> Tuple[np.ndarray, np.ndarray]:
    """Quadratic and linear terms over the flattened ``(X^1, ..., X^k)``.

    The discharge block is scaled by ``r_d - r_c`` so the quadratic form
    reproduces ``(D^k)'X^k`` exactly; no constant is dropped.
    """
    n, k = problem.n_robots, problem.horizon_k
    pr_k, pd_k = _blocks(k)
    eye = np.eye(n)
    p_r = np.kron(pr_k, eye)
    p_d = np.kron(pd_k, eye)
    q_r = np.zeros(k * n)
    q_r[:n] = problem.x0
    q_d = np.zeros(k * n)
    q_d[(k - 1) * n :] = np.asarray(problem.d0) + k * problem.r_c
    delta = problem.r_d - problem.r_c
    p = problem.w1 * delta * p_d - problem.w2 * p_r
    q = problem.w1 * q_d - problem.w2 * q_r
    return p, q


def objective_value(p: np.ndarray, q: np.ndarray, x_flat: Sequence[int]) -> float:
    x = np.asarray(x_flat, dtype=float)
    if p.shape != (x.size, x.size) or q.shape != (x.size,):
        raise ValueError("dimension mismatch between P, Q and x")
    return float(0.5 * x @ p @ x + q @ x)


def flatten(x_seq: Sequence[Sequence[int]]) -> List[int]:
    return [int(v) for xs in x_seq for v in xs]


def feasible(problem: ScheduleProblem, x_seq: Sequence[Sequence[int]]) -> bool:
    n, k, f = problem.n_robots, problem.horizon_k, problem.formation_size_f
    if len(x_seq) != k or any(len(x) != n for x in x_seq):
        return False
    prev = problem.x0
    for j in range(1, k + 1):
        xj = x_seq[j - 1]
        if any(v not in (0, 1) for v in xj) or sum(xj) != f:
            return False
        dj = predict_discharge(problem, x_seq, j)
        if any(dj[i] * xj[i] > problem.d_th for i in range(n)):
            return False
        hub = problem.hub_presence[j - 1]
        # union rather than sum: a robot both retained and listed at the hub counts once
        if sum(1 for i in range(n) if xj[i] and (prev[i] or hub[i])) != f:
            return False
        prev = xj
    return True


def _indicator(n: int, active: Sequence[int]) -> Binary:
    vec = [0] * n
    for i in active:
        vec[i] = 1
    return tuple(vec)


def solve(problem: ScheduleProblem) -> ScheduleSolution:
    """Exact minimiser of the selection program.

    Raises:
        Infeasible: no sequence satisfies the constraints; the formation must
            wait for a replacement to become available.
    """
    n, k, f = problem.n_robots, problem.horizon_k, problem.formation_size_f
    d0, rc, dth = problem.d0, problem.r_c, problem.d_th
    w1, w2 = problem.w1, problem.w2
    delta = problem.r_d - problem.r_c
    hubs = problem.hub_presence
    can_bound = w1 >= 0 and w2 >= 0

    best_obj = math.inf
    best_seq: Optional[List[Tuple[int, ...]]] = None
    counts = [0] * n
    chosen: List[Tuple[int, ...]] = []

    def tol(value: float) -> float:
        return 1e-9 * max(1.0, abs(value))

    def bound(j: int, retention: float) -> float:
        finals = sorted(d0[i] + k * rc + delta * (counts[i] + 1) for i in range(n))
        return w1 * sum(finals[:f]) - w2 * (retention + f * (k - j))

    def visit(j: int, prev: Tuple[int, ...], prev_set: frozenset, retention: float) -> None:
        nonlocal best_obj, best_seq
        hub = hubs[j - 1]
        pool = [i for i in range(n) if i in prev_set or hub[i]]
        base = d0_step[j]
        for combo in combinations(pool, f):
            ok = True
            for i in combo:
                d = base[i] + delta * (counts[i] + 1)
                if (d if d > 0.0 else 0.0) > dth:
                    ok = False
                    break
            if not ok:
                continue
            kept = sum(1 for i in combo if i in prev_set)
            ret = retention + kept
            for i in combo:
                counts[i] += 1
            chosen.append(combo)
            if j == k:
                obj = w1 * sum(base[i] + delta * counts[i] for i in combo) - w2 * ret
                if obj < best_obj - tol(best_obj) or best_seq is None:
                    best_obj = obj
                    best_seq = list(chosen)
            elif not (can_bound and best_seq is not None and bound(j, ret) >= best_obj - tol(best_obj)):
                visit(j + 1, combo, frozenset(combo), ret)
            chosen.pop()
            for i in combo:
                counts[i] -= 1

    d0_step = {j: [d0[i] + j * rc for i in range(n)] for j in range(1, k + 1)}
    x0_active = tuple(i for i in range(n) if problem.x0[i])
    visit(1, x0_active, frozenset(x0_active), 0.0)
    if best_seq is None:
        raise Infeasible("no feasible assignment: waiting for replacement")
    x = tuple(_indicator(n, combo) for combo in best_seq)
    predicted = tuple(tuple(predict_discharge(problem, x, m)) for m in range(1, k + 1))
    return ScheduleSolution(x, best_obj, predicted)


def enumerate_optimum(problem: ScheduleProblem) -> Tuple[float, Optional[Tuple[Binary, ...]]]:
    """Brute-force reference over every sequence of size-F subsets.

    Intended for small instances only; evaluates the semantic objective
    (direct discharge and retention sums) rather than the matrix form.
    """
    n, k, f = problem.n_robots, problem.horizon_k, problem.formation_size_f
    singles = [_indicator(n, c) for c in combinations(range(n), f)]
    best = (math.inf, None)

    def rec(prefix: List[Binary]) -> None:
        nonlocal best
        if len(prefix) == k:
            if feasible(problem, prefix):
                obj = semantic_objective(problem, prefix)
                if best[1] is None or obj < best[0] - 1e-9 * max(1.0, abs(best[0])):
                    best = (obj, tuple(prefix))
            return
        for x in singles:
            rec(prefix + [x])

    rec([])
    return best


def semantic_objective(problem: ScheduleProblem, x_seq: Sequence[Sequence[int]]) -> float:
    """``w1 * (D^k)'X^k - w2 * retention`` evaluated directly, without the matrices."""
    k = problem.horizon_k
    dk = _linear_discharge(problem, x_seq, k)
    discharge = sum(d * x for d, x in zip(dk, x_seq[k - 1]))
    seq = [problem.x0] + list(x_seq)
    retention = sum(sum(a * b for a, b in zip(seq[j], seq[j - 1])) for j in range(1, k + 1))
    return problem.w1 * discharge - problem.w2 * retention


def diff_solutions(
    prev_active: Sequence[int],
    next_active: Sequence[int],
    hub: Optional[str] = None,
    robot_ids: Optional[Sequence[int]] = None,
) -> ReplacementOrder:
    """Pair robots leaving the formation with robots joining it, in ascending id order."""
    if len(prev_active) != len(next_active):
        raise ValueError("assignment vectors differ in length")
    if sum(prev_active) != sum(next_active):
        raise ValueError("assignment vectors activate different numbers of robots")
    ids = list(range(1, len(prev_active) + 1)) if robot_ids is None else list(robot_ids)
    leaving = tuple(sorted(ids[i] for i, (a, b) in enumerate(zip(prev_active, next_active)) if a and not b))
    entering = tuple(sorted(ids[i] for i, (a, b) in enumerate(zip(prev_active, next_active)) if b and not a))
    return ReplacementOrder(leaving, entering, hub)


def baseline_policy(
    problem: ScheduleProblem, threshold_fraction: float, entrant_min_fraction: Optional[float] = None
) -> ReplacementOrder:
    """Threshold rule: swap out every active robot below ``threshold_fraction`` remaining.

    Entrants are the most-charged robots at the current hub whose remaining
    fraction is at or above ``entrant_min_fraction`` (the threshold itself
    when not given). When there are fewer eligible entrants than leavers, the
    lowest-charged leavers are swapped first and the order carries
    ``wait=True``.
    """
    if not 0 < threshold_fraction < 1:
        raise ValueError("threshold_fraction must lie in (0, 1)")
    ready = threshold_fraction if entrant_min_fraction is None else entrant_min_fraction
    if not threshold_fraction <= ready <= 1:
        raise ValueError("entrant_min_fraction must lie in [threshold_fraction, 1]")
    cap = problem.capacity_mah
    frac = [1.0 - d / cap for d in problem.d0]
    ids = problem.robot_ids
    hub = problem.hub_presence[0]
    hub_id = problem.hub_ids[0] if problem.hub_ids else None
    leavers = [i for i in range(problem.n_robots) if problem.x0[i] and frac[i] < threshold_fraction]
    if not leavers:
        return ReplacementOrder(hub_id=hub_id)
    candidates = [i for i in range(problem.n_robots) if hub[i] and frac[i] >= ready - 1e-12]
    candidates.sort(key=lambda i: (-frac[i], ids[i]))
    leavers.sort(key=lambda i: (frac[i], ids[i]))
    m = min(len(leavers), len(candidates))
    return ReplacementOrder(
        tuple(ids[i] for i in leavers[:m]),
        tuple(ids[i] for i in candidates[:m]),
        hub_id,
        wait=m < len(leavers),
    )


def problem_to_record(problem: ScheduleProblem) -> Dict:
    rec = asdict(problem)
    for key in ("d0", "x0", "robot_ids", "hub_ids"):
        if rec[key] is not None:
            rec[key] = list(rec[key])
    rec["hub_presence"] = [list(h) for h in problem.hub_presence]
    return rec


def problem_from_record(record: Dict) -> ScheduleProblem:
    known = set(ScheduleProblem.__dataclass_fields__)
    unknown = set(record) - known
    if unknown:
        raise ValueError(f"unknown problem fields: {sorted(unknown)}")
    rec = dict(record)
    rec.setdefault("n_robots", len(rec.get("d0", ())))
    if "hub_presence" in rec:
        rec["hub_presence"] = tuple(tuple(h) for h in rec["hub_presence"])
    return ScheduleProblem(**rec)


def solution_to_record(problem: ScheduleProblem, solution: ScheduleSolution) -> Dict:
    order = diff_solutions(
        problem.x0, solution.x[0], problem.hub_ids[0] if problem.hub_ids else None, problem.robot_ids
    )
    return {
        "x": [list(x) for x in solution.x],
        "objective_value": solution.objective_value,
        "predicted_d": [list(d) for d in solution.predicted_d],
        "order": order_to_record(order),
    }


def order_to_record(order: ReplacementOrder) -> Dict:
    return {
        "hub_id": order.hub_id,
        "leaving": list(order.leaving),
        "entering": list(order.entering),
        "wait": order.wait,
    }


def load_problem(path) -> ScheduleProblem:
    with open(path, encoding="utf-8") as fh:
        return problem_from_record(json.load(fh))


def dump_problem(problem: ScheduleProblem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_record(problem), fh, indent=2)
        fh.write("\n")
