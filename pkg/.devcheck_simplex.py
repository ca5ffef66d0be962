"""Ad-hoc differential check of the simplex and B&B against scipy/enumeration."""
import itertools
import numpy as np
from scipy.optimize import linprog

from cfx.milp import MilpModel, Sense, SolverOptions, VarKind, solve_lp, solve_milp
from cfx.milp.model import SolveStatus

rng = np.random.default_rng(0)

def random_model(rng, n, m, binary_frac=0.0):
    model = MilpModel()
    n_bin = int(round(n * binary_frac))
    for j in range(n):
        if j < n_bin:
            model.add_variable(f"b{j}", VarKind.BINARY, 0, 1)
        else:
            lo = rng.uniform(-5, 0)
            hi = lo + rng.uniform(0.5, 6)
            model.add_variable(f"x{j}", VarKind.CONTINUOUS, lo, hi)
    for i in range(m):
        terms = [(j, float(rng.normal())) for j in range(n) if rng.random() < 0.7]
        if not terms:
            terms = [(int(rng.integers(n)), 1.0)]
        sense = [Sense.LE, Sense.GE, Sense.EQ][int(rng.integers(3))]
        # rhs near the value at a random feasible-ish point so EQ rows are usually feasible
        x0 = np.array([rng.uniform(v.lb, v.ub) for v in model.variables])
        rhs = sum(c * x0[j] for j, c in terms) + rng.normal() * 0.3
        model.add_constraint(terms, sense, rhs)
    model.set_objective([(j, float(rng.normal())) for j in range(n)], float(rng.normal()))
    return model

def scipy_solve(model):
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    n = model.n_vars
    for row in model.constraints:
        arr = np.zeros(n)
        for vid, c in row.terms:
            arr[vid] += c
        if row.sense is Sense.LE:
            A_ub.append(arr); b_ub.append(row.rhs)
        elif row.sense is Sense.GE:
            A_ub.append(-arr); b_ub.append(-row.rhs)
        else:
            A_eq.append(arr); b_eq.append(row.rhs)
    c = np.zeros(n)
    for vid, coef in model.objective:
        c[vid] += coef
    lb, ub = model.bounds_arrays()
    res = linprog(c, A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                  A_eq=np.array(A_eq) if A_eq else None, b_eq=b_eq or None,
                  bounds=list(zip(lb, ub)), method="highs")
    return res

n_mismatch = 0
for trial in range(400):
    n = int(rng.integers(1, 12))
    m = int(rng.integers(0, 14))
    model = random_model(rng, n, m)
    relaxed = model.relax_binaries()
    ours = solve_lp(relaxed)
    ref = scipy_solve(relaxed)
    ours_feasible = ours.status is SolveStatus.OPTIMAL
    if ours_feasible != ref.success:
        print(f"trial {trial}: status mismatch ours={ours.status} scipy={ref.status}")
        n_mismatch += 1
        continue
    if ours_feasible:
        got = ours.objective_value
        want = ref.fun + model.objective_constant
        if abs(got - want) > 1e-6 * (1 + abs(want)):
            print(f"trial {trial}: objective mismatch ours={got:.9f} scipy={want:.9f}")
            n_mismatch += 1
print("LP trials done, mismatches:", n_mismatch)

# MILP vs enumeration
n_mismatch = 0
for trial in range(150):
    n = int(rng.integers(2, 9))
    m = int(rng.integers(1, 8))
    model = random_model(rng, n, m, binary_frac=1.0)
    ours = solve_milp(model, SolverOptions(gap=0.0))
    best = None
    nb = len(model.binary_ids())
    for bits in itertools.product([0.0, 1.0], repeat=nb):
        x = np.array(bits)
        ok = True
        for row in model.constraints:
            lhs = sum(c * x[v] for v, c in row.terms)
            if row.sense is Sense.LE and lhs > row.rhs + 1e-9: ok = False
            if row.sense is Sense.GE and lhs < row.rhs - 1e-9: ok = False
            if row.sense is Sense.EQ and abs(lhs - row.rhs) > 1e-9: ok = False
            if not ok: break
        if ok:
            val = sum(c * x[v] for v, c in model.objective) + model.objective_constant
            best = val if best is None else min(best, val)
    if best is None:
        if ours.status is not SolveStatus.INFEASIBLE:
            print(f"milp trial {trial}: expected infeasible, got {ours.status}")
            n_mismatch += 1
    else:
        if ours.status is not SolveStatus.OPTIMAL or abs(ours.objective_value - best) > 1e-6:
            print(f"milp trial {trial}: ours={ours.status} {ours.objective_value}, enum={best}")
            n_mismatch += 1
print("MILP trials done, mismatches:", n_mismatch)
