"""Harder stress: mixed MILPs vs HiGHS-MILP via scipy (milp), degeneracy, callbacks."""
import numpy as np
from scipy.optimize import milp as scipy_milp, LinearConstraint as SciLin, Bounds as SciBounds

from cfx.milp import MilpModel, Sense, SolverOptions, VarKind, optimize_variable, solve_milp
from cfx.milp.model import SolveStatus

rng = np.random.default_rng(7)

def random_mixed(rng, n_cont, n_bin, m, degenerate=False):
    model = MilpModel()
    for j in range(n_bin):
        model.add_variable(f"b{j}", VarKind.BINARY, 0, 1)
    for j in range(n_cont):
        lo = rng.uniform(-4, 0); hi = lo + rng.uniform(0.5, 5)
        model.add_variable(f"x{j}", VarKind.CONTINUOUS, lo, hi)
    n = model.n_vars
    for i in range(m):
        if degenerate and i % 3 == 0:
            coefs = rng.integers(-2, 3, size=n).astype(float)  # small ints => ties
        else:
            coefs = rng.normal(size=n)
        mask = rng.random(n) < 0.6
        terms = [(j, float(coefs[j])) for j in range(n) if mask[j] and coefs[j] != 0]
        if not terms:
            terms = [(int(rng.integers(n)), 1.0)]
        sense = [Sense.LE, Sense.GE, Sense.EQ][int(rng.integers(3))]
        x0 = np.array([rng.uniform(v.lb, v.ub) for v in model.variables])
        rhs = float(sum(c * x0[j] for j, c in terms))
        if degenerate:
            rhs = round(rhs)  # integer rhs for extra ties
        model.add_constraint(terms, sense, rhs)
    obj_coefs = rng.normal(size=n)
    model.set_objective([(j, float(obj_coefs[j])) for j in range(n)])
    return model

def scipy_milp_solve(model):
    n = model.n_vars
    c = np.zeros(n)
    for vid, coef in model.objective:
        c[vid] += coef
    lb, ub = model.bounds_arrays()
    integrality = np.array([1 if v.kind is VarKind.BINARY else 0 for v in model.variables])
    cons = []
    for row in model.constraints:
        arr = np.zeros(n)
        for vid, coef in row.terms:
            arr[vid] += coef
        if row.sense is Sense.LE:
            cons.append(SciLin(arr, -np.inf, row.rhs))
        elif row.sense is Sense.GE:
            cons.append(SciLin(arr, row.rhs, np.inf))
        else:
            cons.append(SciLin(arr, row.rhs, row.rhs))
    return scipy_milp(c, constraints=cons, integrality=integrality,
                      bounds=SciBounds(lb, ub))

bad = 0
for trial in range(200):
    model = random_mixed(rng, int(rng.integers(0, 6)), int(rng.integers(1, 9)),
                         int(rng.integers(1, 10)), degenerate=(trial % 2 == 0))
    ours = solve_milp(model, SolverOptions(gap=0.0))
    ref = scipy_milp_solve(model)
    if ref.status == 0:
        if ours.status is not SolveStatus.OPTIMAL:
            print(f"trial {trial}: ours {ours.status} vs scipy optimal"); bad += 1
        elif abs(ours.objective_value - ref.fun) > 1e-6 * (1 + abs(ref.fun)):
            print(f"trial {trial}: obj {ours.objective_value:.9f} vs {ref.fun:.9f}"); bad += 1
    elif ref.status == 2:
        if ours.status is not SolveStatus.INFEASIBLE:
            print(f"trial {trial}: ours {ours.status} vs scipy infeasible"); bad += 1
print("mixed MILP mismatches:", bad)

# determinism (find a feasible random instance first)
gen = np.random.default_rng(123)
while True:
    m0 = random_mixed(gen, 3, 6, 8)
    r1 = solve_milp(m0, SolverOptions(gap=0.0))
    if r1.status is SolveStatus.OPTIMAL:
        break
r2 = solve_milp(m0, SolverOptions(gap=0.0))
assert r1.status == r2.status and r1.objective_value == r2.objective_value
assert r1.node_count == r2.node_count
print("determinism ok")

# early stop callback: minimize sum of binaries with >=3 constraint; stop when <= 4
model = MilpModel()
ids = [model.add_variable(f"b{j}", VarKind.BINARY) for j in range(8)]
model.add_constraint([(j, 1.0) for j in ids], Sense.GE, 3)
model.set_objective([(j, 1.0) for j in ids])
out = solve_milp(model, SolverOptions(incumbent_callback=lambda obj, x: obj <= 4.0))
print("callback:", out.status, out.objective_value)
assert out.status in (SolveStatus.FEASIBLE, SolveStatus.OPTIMAL)
assert out.objective_value <= 4.0

# optimize_variable
model = MilpModel()
x = model.add_variable("x", VarKind.CONTINUOUS, 0, 10)
model.add_constraint([(x, 1.0)], Sense.LE, 4)
assert abs(optimize_variable(model, x, "max") - 4.0) < 1e-9
assert abs(optimize_variable(model, x, "min") - 0.0) < 1e-9
print("optimize_variable ok")
