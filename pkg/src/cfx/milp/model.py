"""Solver-facing MILP representation: variables, linear rows, linear objective."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class VarKind(Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Sense(Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"  # early-stopped with an incumbent
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class VariableDef:
    id: int
    name: str
    kind: VarKind
    lb: float
    ub: float

    def __post_init__(self):
        if not (math.isfinite(self.lb) and math.isfinite(self.ub)):
            raise ValueError(f"variable {self.name}: bounds must be finite")
        if self.lb > self.ub:
            raise ValueError(f"variable {self.name}: lb {self.lb} > ub {self.ub}")
        if self.kind is VarKind.BINARY and not (0.0 <= self.lb and self.ub <= 1.0):
            raise ValueError(f"variable {self.name}: binary bounds outside [0, 1]")


@dataclass
class LinearConstraint:
    terms: list[tuple[int, float]]
    sense: Sense
    rhs: float
    tag: str = ""

    def validate(self, n_vars: int) -> None:
        if not math.isfinite(self.rhs):
            raise ValueError(f"constraint {self.tag!r}: non-finite rhs")
        for vid, coef in self.terms:
            if not 0 <= vid < n_vars:
                raise ValueError(f"constraint {self.tag!r}: undefined variable {vid}")
            if not math.isfinite(coef):
                raise ValueError(f"constraint {self.tag!r}: non-finite coefficient")


@dataclass
class MilpModel:
    """A value object; solving never mutates it."""

    variables: list[VariableDef] = field(default_factory=list)
    constraints: list[LinearConstraint] = field(default_factory=list)
    objective: list[tuple[int, float]] = field(default_factory=list)
    objective_constant: float = 0.0

    def add_variable(
        self,
        name: str,
        kind: VarKind = VarKind.CONTINUOUS,
        lb: float = 0.0,
        ub: float = 1.0,
    ) -> int:
        vid = len(self.variables)
        self.variables.append(VariableDef(vid, name, kind, float(lb), float(ub)))
        return vid

    def add_constraint(
        self,
        terms: list[tuple[int, float]],
        sense: Sense,
        rhs: float,
        tag: str = "",
    ) -> None:
        row = LinearConstraint(list(terms), sense, float(rhs), tag)
        row.validate(len(self.variables))
        self.constraints.append(row)

    def set_objective(
        self, terms: list[tuple[int, float]], constant: float = 0.0
    ) -> None:
        for vid, coef in terms:
            if not 0 <= vid < len(self.variables):
                raise ValueError(f"objective references undefined variable {vid}")
            if not math.isfinite(coef):
                raise ValueError("objective has a non-finite coefficient")
        self.objective = list(terms)
        self.objective_constant = float(constant)

    def set_variable_bounds(self, vid: int, lb: float, ub: float) -> None:
        old = self.variables[vid]
        self.variables[vid] = VariableDef(old.id, old.name, old.kind, float(lb), float(ub))

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def binary_ids(self) -> list[int]:
        return [v.id for v in self.variables if v.kind is VarKind.BINARY]

    def validate(self) -> None:
        for row in self.constraints:
            row.validate(self.n_vars)

    def copy(self) -> "MilpModel":
        return MilpModel(
            variables=list(self.variables),
            constraints=[
                LinearConstraint(list(c.terms), c.sense, c.rhs, c.tag)
                for c in self.constraints
            ],
            objective=list(self.objective),
            objective_constant=self.objective_constant,
        )

    def relax_binaries(self) -> "MilpModel":
        """Copy with every binary turned into a continuous [lb, ub] variable."""
        out = self.copy()
        out.variables = [
            VariableDef(v.id, v.name, VarKind.CONTINUOUS, v.lb, v.ub)
            if v.kind is VarKind.BINARY
            else v
            for v in out.variables
        ]
        return out

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lb for v in self.variables], dtype=np.float64)
        ub = np.array([v.ub for v in self.variables], dtype=np.float64)
        return lb, ub

    def to_arrays(self) -> tuple[np.ndarray, list[Sense], np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Dense (A, senses, b, lb, ub, c) view used by the simplex solver."""
        m, n = len(self.constraints), self.n_vars
        A = np.zeros((m, n))
        b = np.zeros(m)
        senses = []
        for i, row in enumerate(self.constraints):
            for vid, coef in row.terms:
                A[i, vid] += coef
            b[i] = row.rhs
            senses.append(row.sense)
        lb, ub = self.bounds_arrays()
        c = np.zeros(n)
        for vid, coef in self.objective:
            c[vid] += coef
        return A, senses, b, lb, ub, c


@dataclass
class SolveOutcome:
    status: SolveStatus
    assignment: np.ndarray | None = None
    objective_value: float = float("nan")
    node_count: int = 0
    lp_iterations: int = 0
    gap: float = float("nan")

    @property
    def has_solution(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE) or (
            self.status is SolveStatus.ITERATION_LIMIT and self.assignment is not None
        )


def constraint_violation(model: MilpModel, x: np.ndarray) -> float:
    """Worst violation of any row or bound by the assignment ``x``."""
    worst = 0.0
    lb, ub = model.bounds_arrays()
    worst = max(worst, float(np.max(lb - x, initial=0.0)), float(np.max(x - ub, initial=0.0)))
    for row in model.constraints:
        lhs = sum(coef * x[vid] for vid, coef in row.terms)
        if row.sense is Sense.LE:
            worst = max(worst, lhs - row.rhs)
        elif row.sense is Sense.GE:
            worst = max(worst, row.rhs - lhs)
        else:
            worst = max(worst, abs(lhs - row.rhs))
    return worst
