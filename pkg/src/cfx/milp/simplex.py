"""Bounded-variable primal simplex over dense numpy arrays.

Solves  min c.x  s.t.  A x (<=|>=|=) b,  lo <= x <= hi  with finite bounds on
every structural variable. Rows are converted to equalities with one slack
each; an infeasible slack basis is repaired in phase 1 via artificial columns.

Pivoting uses the Dantzig rule with a largest-pivot tie-break; a degeneracy
counter trips a permanent switch to Bland's rule, which guarantees
termination. The basis inverse is maintained by product-form updates and
refactorized periodically.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..errors import SolverNumericalError
from .model import Sense

NB_LB, NB_UB, BASIC = 0, 1, 2

_PIVOT_TOL = 1e-9
_DUAL_TOL = 1e-9
_DEGENERATE_STEP = 1e-11
_DEGENERACY_TRIP = 200
_REFACTOR_EVERY = 64


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LpResult:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    iterations: int


class _Tableau:
    """Mutable solver state over the equality system [A | I | artificials]."""

    def __init__(self, A, senses, b, lo, hi, feas_tol):
        m, n = A.shape
        self.m, self.n = m, n
        self.feas_tol = feas_tol

        slack_lo = np.zeros(m)
        slack_hi = np.zeros(m)
        for i, s in enumerate(senses):
            if s is Sense.LE:
                slack_lo[i], slack_hi[i] = 0.0, np.inf
            elif s is Sense.GE:
                slack_lo[i], slack_hi[i] = -np.inf, 0.0
            else:
                slack_lo[i], slack_hi[i] = 0.0, 0.0

        self.A = np.hstack([A, np.eye(m)]) if m else np.zeros((0, n))
        self.lo = np.concatenate([lo, slack_lo])
        self.hi = np.concatenate([hi, slack_hi])
        self.b = b.astype(np.float64)
        self.n_cols = self.A.shape[1]

        # Structural variables start nonbasic at the bound nearer to zero.
        self.status = np.full(self.n_cols, NB_LB, dtype=np.int8)
        self.x = np.zeros(self.n_cols)
        for j in range(n):
            if abs(lo[j]) <= abs(hi[j]):
                self.x[j], self.status[j] = lo[j], NB_LB
            else:
                self.x[j], self.status[j] = hi[j], NB_UB

        self.basis = np.arange(n, n + m)
        self.status[self.basis] = BASIC
        self.Binv = np.eye(m)
        self.pivots_since_refactor = 0
        self.iterations = 0
        self.bland = False
        self._degenerate_run = 0
        self.artificial_ids: list[int] = []

        beta = self.b - self.A[:, :n] @ self.x[:n] if m else np.zeros(0)
        self._install_artificials(beta)

    # -- setup -------------------------------------------------------------

    def _install_artificials(self, beta):
        """Make the initial slack basis feasible, adding artificials as needed."""
        n = self.n
        new_cols, new_lo, new_hi = [], [], []
        for i in range(self.m):
            s_lo, s_hi = self.lo[n + i], self.hi[n + i]
            val = min(max(beta[i], s_lo), s_hi)
            resid = beta[i] - val
            if abs(resid) <= self.feas_tol:
                self.x[n + i] = beta[i]
                continue
            # Slack moves to the bound it violated; an artificial covers the rest.
            self.x[n + i] = val
            self.status[n + i] = NB_LB if val == s_lo else NB_UB
            col = np.zeros(self.m)
            col[i] = 1.0 if resid > 0 else -1.0
            new_cols.append(col)
            new_lo.append(0.0)
            new_hi.append(np.inf)
            art_id = self.n_cols + len(new_cols) - 1
            self.artificial_ids.append(art_id)
            self.basis[i] = art_id
        if new_cols:
            self.A = np.hstack([self.A, np.column_stack(new_cols)])
            self.lo = np.concatenate([self.lo, new_lo])
            self.hi = np.concatenate([self.hi, new_hi])
            extra = np.full(len(new_cols), BASIC, dtype=np.int8)
            self.status = np.concatenate([self.status, extra])
            self.x = np.concatenate([self.x, np.zeros(len(new_cols))])
            self.n_cols = self.A.shape[1]
        self.refactor()  # also recomputes the basic values, artificials included

    def seal_artificials(self):
        """After phase 1: artificials become fixed-at-zero columns."""
        for j in self.artificial_ids:
            self.lo[j] = self.hi[j] = 0.0

    # -- numerical upkeep ----------------------------------------------------

    def refactor(self):
        if self.m == 0:
            return
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SolverNumericalError("singular basis during refactorization") from exc
        self.recompute_basics()
        self.pivots_since_refactor = 0

    def recompute_basics(self):
        if self.m == 0:
            return
        nonbasic = self.status != BASIC
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs

    # -- core iteration ------------------------------------------------------

    def run(self, costs, max_iters):
        """Iterate to optimality for the given cost vector."""
        while True:
            if self.iterations >= max_iters:
                return LpStatus.ITERATION_LIMIT
            self.iterations += 1

            if self.m:
                y = costs[self.basis] @ self.Binv
                d = costs - y @ self.A
            else:
                d = costs.copy()

            movable = self.lo < self.hi
            down_ok = (self.status == NB_LB) & (d < -_DUAL_TOL) & movable
            up_ok = (self.status == NB_UB) & (d > _DUAL_TOL) & movable
            eligible = down_ok | up_ok
            if not eligible.any():
                return LpStatus.OPTIMAL

            if self.bland:
                q = int(np.argmax(eligible))  # first True = lowest index
            else:
                score = np.where(eligible, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if self.status[q] == NB_LB else -1.0

            w = self.Binv @ self.A[:, q] if self.m else np.zeros(0)
            step, leave_pos, leave_to = self._ratio_test(q, direction, w)
            if step is None:
                return LpStatus.UNBOUNDED

            self._degenerate_run = self._degenerate_run + 1 if step <= _DEGENERATE_STEP else 0
            if self._degenerate_run > _DEGENERACY_TRIP:
                self.bland = True

            if leave_pos is None:
                # Bound flip: q runs across its whole range, basis unchanged.
                if self.m:
                    self.x[self.basis] -= direction * step * w
                self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
                self.status[q] = NB_UB if direction > 0 else NB_LB
            else:
                self._pivot(q, direction, w, step, leave_pos, leave_to)

    def _ratio_test(self, q, direction, w):
        """Largest step along the entering direction keeping all basics in range.

        Returns (step, leaving_position, leaving_bound) with leaving_position
        None for a bound flip; (None, None, None) signals an unbounded ray.
        """
        flip = self.hi[q] - self.lo[q]
        best_step = flip
        leave_pos = None
        leave_to = 0.0

        if self.m:
            xb = self.x[self.basis]
            dw = direction * w
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_lo = np.where(dw > _PIVOT_TOL, (xb - lo_b) / dw, np.inf)
                t_hi = np.where(dw < -_PIVOT_TOL, (xb - hi_b) / dw, np.inf)
            t = np.minimum(t_lo, t_hi)
            t = np.maximum(t, 0.0)  # basics already at/over a bound pivot degenerately
            i_min = int(np.argmin(t))
            t_min = t[i_min]
            if t_min < best_step - 1e-12:
                ties = np.where(t <= t_min + 1e-9)[0]
                if self.bland:
                    leave_pos = int(ties[np.argmin(self.basis[ties])])
                else:
                    strong = ties[np.argmax(np.abs(w[ties]))]
                    leave_pos = int(strong)
                best_step = t[leave_pos]
                leave_to = (
                    self.lo[self.basis[leave_pos]]
                    if direction * w[leave_pos] > 0
                    else self.hi[self.basis[leave_pos]]
                )

        if not np.isfinite(best_step):
            return None, None, None
        return float(best_step), leave_pos, leave_to

    def _pivot(self, q, direction, w, step, leave_pos, leave_to):
        start = self.lo[q] if direction > 0 else self.hi[q]
        self.x[self.basis] -= direction * step * w
        self.x[q] = start + direction * step

        leaving = self.basis[leave_pos]
        self.x[leaving] = leave_to
        self.status[leaving] = NB_LB if leave_to == self.lo[leaving] else NB_UB

        self.basis[leave_pos] = q
        self.status[q] = BASIC

        piv = w[leave_pos]
        if abs(piv) < _PIVOT_TOL:
            self.refactor()
            return
        # Product-form update of the basis inverse.
        row = self.Binv[leave_pos] / piv
        self.Binv -= np.outer(w, row)
        self.Binv[leave_pos] = row
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= _REFACTOR_EVERY:
            self.refactor()

    # -- checks ----------------------------------------------------------------

    def max_violation(self):
        scale = 1.0 + (np.max(np.abs(self.b)) if self.m else 0.0)
        bound_viol = max(
            float(np.max(self.lo - self.x, initial=0.0)),
            float(np.max(self.x - self.hi, initial=0.0)),
        )
        row_viol = (
            float(np.max(np.abs(self.A @ self.x - self.b), initial=0.0)) if self.m else 0.0
        )
        return max(bound_viol, row_viol / scale)


def solve_lp_arrays(
    A: np.ndarray,
    senses: list[Sense],
    b: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    c: np.ndarray,
    c0: float = 0.0,
    feas_tol: float = 1e-7,
    max_iters: int | None = None,
    bland: bool = False,
) -> LpResult:
    """Two-phase bounded simplex; returns structural assignment on success."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    if max_iters is None:
        max_iters = 20000 + 50 * (m + n)

    tab = _Tableau(A, senses, b, np.asarray(lo, float), np.asarray(hi, float), feas_tol)
    tab.bland = bland
    full_c = np.zeros(tab.n_cols)
    full_c[:n] = c

    if tab.artificial_ids:
        phase1 = np.zeros(tab.n_cols)
        phase1[tab.artificial_ids] = 1.0
        status = tab.run(phase1, max_iters)
        if status is LpStatus.ITERATION_LIMIT:
            return LpResult(status, None, float("nan"), tab.iterations)
        if status is LpStatus.UNBOUNDED:  # pragma: no cover - phase 1 is bounded below
            raise SolverNumericalError("phase 1 reported unbounded")
        infeas = float(phase1 @ tab.x)
        if infeas > feas_tol * (1.0 + float(np.max(np.abs(b), initial=0.0))):
            return LpResult(LpStatus.INFEASIBLE, None, float("nan"), tab.iterations)
        tab.seal_artificials()
        tab.refactor()

    status = tab.run(full_c, max_iters)
    retries = 0
    while status is LpStatus.OPTIMAL and tab.max_violation() > feas_tol:
        if retries >= 2:
            raise SolverNumericalError(
                f"residual {tab.max_violation():.3e} above tolerance after retries"
            )
        retries += 1
        tab.refactor()
        status = tab.run(full_c, max_iters + tab.iterations)

    if status is LpStatus.UNBOUNDED:
        return LpResult(LpStatus.UNBOUNDED, None, float("-inf"), tab.iterations)
    if status is LpStatus.ITERATION_LIMIT:
        return LpResult(status, None, float("nan"), tab.iterations)

    x = np.clip(tab.x[:n], lo, hi)
    return LpResult(LpStatus.OPTIMAL, x, float(c @ x + c0), tab.iterations)


def solve_lp_arrays_robust(A, senses, b, lo, hi, c, c0=0.0, feas_tol=1e-7) -> LpResult:
    """Retry a stuck Dantzig run once with Bland's rule from scratch."""
    result = solve_lp_arrays(A, senses, b, lo, hi, c, c0, feas_tol)
    if result.status is LpStatus.ITERATION_LIMIT:
        result = solve_lp_arrays(A, senses, b, lo, hi, c, c0, feas_tol, bland=True)
        if result.status is LpStatus.ITERATION_LIMIT:
            raise SolverNumericalError("simplex iteration limit under Bland's rule")
    return result
