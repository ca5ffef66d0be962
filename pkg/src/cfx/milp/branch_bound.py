"""Branch-and-bound over binary variables with best-bound node selection.

Each node is the LP relaxation with a subset of binaries fixed by bounds.
Branching picks the most fractional binary (ties: lowest variable id); the
node queue is a min-heap keyed by LP bound with insertion order as the
deterministic tie-break. An incumbent callback can stop the search early,
mirroring an optimizer interrupt on reaching a target objective value.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import InfeasibleRegionError
from .model import MilpModel, SolveOutcome, SolveStatus, VarKind
from .simplex import LpStatus, solve_lp_arrays_robust


@dataclass
class SolverOptions:
    gap: float = 1e-5  # absolute optimality gap on the objective
    feas_tol: float = 1e-7
    int_tol: float = 1e-6
    node_limit: int = 200_000
    time_limit_s: float | None = None
    # Called on every new incumbent with (objective, assignment); returning
    # True stops the search and reports the incumbent as FEASIBLE.
    incumbent_callback: Callable[[float, np.ndarray], bool] | None = None


def solve_lp(model: MilpModel, options: SolverOptions | None = None) -> SolveOutcome:
    """Solve the continuous relaxation (binaries relaxed to their bounds)."""
    options = options or SolverOptions()
    model.validate()
    A, senses, b, lb, ub, c = model.to_arrays()
    result = solve_lp_arrays_robust(
        A, senses, b, lb, ub, c, model.objective_constant, options.feas_tol
    )
    if result.status is LpStatus.OPTIMAL:
        return SolveOutcome(
            SolveStatus.OPTIMAL,
            assignment=result.x,
            objective_value=result.objective,
            lp_iterations=result.iterations,
            gap=0.0,
        )
    if result.status is LpStatus.INFEASIBLE:
        return SolveOutcome(SolveStatus.INFEASIBLE, lp_iterations=result.iterations)
    return SolveOutcome(SolveStatus.UNBOUNDED, lp_iterations=result.iterations)


@dataclass
class _Node:
    lower: np.ndarray
    upper: np.ndarray
    bound: float
    x: np.ndarray


def solve_milp(model: MilpModel, options: SolverOptions | None = None) -> SolveOutcome:
    """Minimize the model objective over binary-feasible assignments."""
    options = options or SolverOptions()
    model.validate()
    A, senses, b, lb, ub, c = model.to_arrays()
    c0 = model.objective_constant
    binaries = np.array(model.binary_ids(), dtype=int)
    deadline = (
        time.monotonic() + options.time_limit_s if options.time_limit_s else None
    )

    lp_iterations = 0
    node_count = 0
    incumbent_x = None
    incumbent_obj = np.inf
    stopped_early = False

    def lp_solve(lo, hi):
        nonlocal lp_iterations
        result = solve_lp_arrays_robust(A, senses, b, lo, hi, c, c0, options.feas_tol)
        lp_iterations += result.iterations
        return result

    def fractionality(x):
        if binaries.size == 0:
            return np.zeros(0)
        return np.abs(x[binaries] - np.round(x[binaries]))

    def try_incumbent(x, lo, hi):
        """Snap near-integral binaries; re-solve with them fixed if inexact."""
        nonlocal incumbent_x, incumbent_obj, stopped_early
        if binaries.size and np.any(np.abs(x[binaries] - np.round(x[binaries])) > 0):
            fixed = np.round(x[binaries])
            lo2, hi2 = lo.copy(), hi.copy()
            lo2[binaries] = fixed
            hi2[binaries] = fixed
            result = lp_solve(lo2, hi2)
            if result.status is not LpStatus.OPTIMAL:
                return False
            x, obj = result.x, result.objective
        else:
            obj = float(c @ x + c0)
        if obj < incumbent_obj - 1e-12:
            incumbent_x, incumbent_obj = x, obj
            cb = options.incumbent_callback
            if cb is not None and cb(obj, x):
                stopped_early = True
        return True

    root = lp_solve(lb.copy(), ub.copy())
    node_count += 1
    if root.status is LpStatus.INFEASIBLE:
        return SolveOutcome(SolveStatus.INFEASIBLE, node_count=node_count, lp_iterations=lp_iterations)
    if root.status is LpStatus.UNBOUNDED:
        return SolveOutcome(SolveStatus.UNBOUNDED, node_count=node_count, lp_iterations=lp_iterations)

    heap: list[tuple[float, int, _Node]] = []
    seq = 0

    def consider(result, lo, hi, parent_bound):
        """Either record an incumbent or queue the node for branching."""
        nonlocal seq
        bound = max(result.objective, parent_bound)  # bounds never regress
        if bound >= incumbent_obj - options.gap:
            return
        frac = fractionality(result.x)
        if frac.size == 0 or frac.max() <= options.int_tol:
            if try_incumbent(result.x, lo, hi):
                return
            # Rounding the near-integral point was infeasible; keep branching
            # on the not-exactly-integral binary instead of dropping the node.
        heapq.heappush(heap, (bound, seq, _Node(lo, hi, bound, result.x)))
        seq += 1

    consider(root, lb.copy(), ub.copy(), -np.inf)

    while heap and not stopped_early:
        if node_count >= options.node_limit or (
            deadline is not None and time.monotonic() > deadline
        ):
            best_bound = heap[0][0] if heap else incumbent_obj
            return SolveOutcome(
                SolveStatus.ITERATION_LIMIT,
                assignment=incumbent_x,
                objective_value=incumbent_obj if incumbent_x is not None else float("nan"),
                node_count=node_count,
                lp_iterations=lp_iterations,
                gap=incumbent_obj - best_bound,
            )
        bound, _, node = heapq.heappop(heap)
        if bound >= incumbent_obj - options.gap:
            continue  # pruned by an incumbent found after the push

        frac = fractionality(node.x)
        branch_var = int(binaries[np.argmax(frac)])
        for value in (0.0, 1.0):
            lo, hi = node.lower.copy(), node.upper.copy()
            lo[branch_var] = hi[branch_var] = value
            result = lp_solve(lo, hi)
            node_count += 1
            if result.status is LpStatus.OPTIMAL:
                consider(result, lo, hi, node.bound)
            if stopped_early:
                break

    if incumbent_x is None:
        return SolveOutcome(
            SolveStatus.INFEASIBLE, node_count=node_count, lp_iterations=lp_iterations
        )
    best_bound = min([entry[0] for entry in heap], default=incumbent_obj)
    status = SolveStatus.FEASIBLE if stopped_early else SolveStatus.OPTIMAL
    return SolveOutcome(
        status,
        assignment=incumbent_x,
        objective_value=incumbent_obj,
        node_count=node_count,
        lp_iterations=lp_iterations,
        gap=max(0.0, incumbent_obj - best_bound),
    )


def optimize_variable(
    model: MilpModel,
    var_id: int,
    direction: str,
    options: SolverOptions | None = None,
) -> float:
    """Optimal value of one variable under the model's constraints.

    ``direction`` is "min" or "max". Uses the LP path when the model has no
    binaries and full branch-and-bound otherwise.
    """
    if direction not in ("min", "max"):
        raise ValueError(f"direction must be 'min' or 'max', got {direction!r}")
    sign = 1.0 if direction == "min" else -1.0
    probe = model.copy()
    probe.set_objective([(var_id, sign)])
    if probe.binary_ids():
        outcome = solve_milp(probe, options)
    else:
        outcome = solve_lp(probe, options)
    if outcome.status is SolveStatus.INFEASIBLE:
        raise InfeasibleRegionError("bound query on an infeasible model")
    if not outcome.has_solution:
        raise InfeasibleRegionError(f"bound query failed: {outcome.status.value}")
    return float(outcome.assignment[var_id])
