"""Distance search drivers producing counterfactual explanations.

Two routes share one pipeline (input bounds -> LP-tightened hidden bounds ->
exact bounded network encoding -> branch and bound):

* exponential search: grow a distance shell [lb, ub] until a query flips the
  label, then binary-search the shell down to width epsilon, optimizing the
  network output with an early-stop callback at the sign threshold;
* distance objective: one solve minimizing the distance variable directly
  under a counterfactual output constraint, to optimality gap epsilon.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .bounds import InputBox, lp_tightened_bounds, relu_states
from .encoder import (
    AsConstraintInterval,
    AsObjective,
    DistanceMode,
    DiversityContext,
    EncodingArtifacts,
    encode_actionability,
    encode_counterfactual_constraint,
    encode_distance,
    encode_diversity,
    encode_network_bounded,
    encode_plausibility,
)
from .errors import ConfigError, InfeasibleRegionError, MetricUndefinedError, PlausibilityError, SolverNumericalError
from .features import (
    FeatureKind,
    FeatureSchema,
    Norm,
    distance,
    validate_actionability,
    validate_plausibility,
)
from .milp.branch_bound import SolverOptions, solve_milp
from .milp.model import SolveStatus
from .network import FeedForwardNetwork, Label, forward, label_flipped, predicted_label

# Validation slack when re-checking solver output in exact arithmetic.
FLIP_CHECK_TOL = 1e-6
DISTANCE_CHECK_TOL = 1e-6

_MAX_INTEGER_REPAIR_COMBOS = 16


@dataclass
class SearchConfig:
    norm: Norm = Norm.L1
    epsilon: float = 0.01  # initial shell width, search precision, OBJ gap
    margin: float = 1e-6  # closes the strict side of the flip constraint
    diversity_threshold: float = 0.01
    solver: SolverOptions = field(default_factory=SolverOptions)
    max_shell_expansions: int = 64
    time_limit_s: float | None = None

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError("epsilon must be in (0, 1]")
        if not 0.0 < self.diversity_threshold <= 1.0:
            raise ConfigError("diversity threshold must be in (0, 1]")
        if self.margin < 0.0:
            raise ConfigError("margin must be nonnegative")


class CfeStatus(Enum):
    FOUND = "found"
    NO_CFE_IN_BOX = "no_counterfactual_in_box"
    FAILED = "failed"


@dataclass
class ShellRecord:
    lb_dist: float
    ub_dist: float
    found: bool
    phase: str  # "expand", "binary", or "objective"
    node_count: int = 0
    lp_iterations: int = 0
    wall_time: float = 0.0


@dataclass
class CfeResult:
    status: CfeStatus
    point: np.ndarray | None = None
    distance: float = float("nan")
    output: float = float("nan")
    trace: list[ShellRecord] = field(default_factory=list)
    wall_time: float = 0.0
    reason: str = ""


def _resolve_factual_side(net, x_factual, target_label: Label | None) -> Label:
    """The factual's side for flip purposes; errors if already on target."""
    predicted = predicted_label(net, x_factual)
    if target_label is None:
        return predicted
    if target_label is predicted:
        raise ConfigError(
            f"factual already has label {predicted.value}; nothing to flip"
        )
    return predicted


def _check_factual(schema, x_factual) -> np.ndarray:
    x_factual = np.asarray(x_factual, dtype=np.float64)
    violations = validate_plausibility(schema, x_factual)
    if violations:
        raise PlausibilityError("factual is implausible: " + "; ".join(violations))
    return x_factual


class _Deadline:
    def __init__(self, limit_s: float | None):
        self.expires = time.monotonic() + limit_s if limit_s else None

    def remaining(self) -> float | None:
        if self.expires is None:
            return None
        return self.expires - time.monotonic()

    def expired(self) -> bool:
        rem = self.remaining()
        return rem is not None and rem <= 0.0


def _query_model(net, schema, x_factual, cfg, dist_mode, previous):
    """Plausibility + actionability + distance (+ diversity) rows, no network."""
    from .milp.model import MilpModel

    model = MilpModel()
    input_ids = encode_plausibility(model, schema)
    encode_actionability(model, schema, input_ids, x_factual)
    dist_enc = encode_distance(model, schema, input_ids, x_factual, cfg.norm, dist_mode)
    if previous:
        encode_diversity(
            model,
            schema,
            input_ids,
            DiversityContext(list(previous), cfg.diversity_threshold),
            cfg.norm,
        )
    return model, input_ids, dist_enc


def build_query_artifacts(
    net,
    schema,
    x_factual,
    cfg: SearchConfig,
    dist_mode: DistanceMode,
    previous=None,
    bounds_interval: tuple[float, float] | None = None,
) -> EncodingArtifacts:
    """Full assembled MILP for one query; raises InfeasibleRegionError on an
    empty shell. The bound pipeline carries all non-network rows into every
    per-neuron LP; ``bounds_interval`` overrides the distance interval used
    there (the objective route computes bounds over the whole [0, 1] range).
    """
    if bounds_interval is None and isinstance(dist_mode, AsConstraintInterval):
        bounds_interval = (dist_mode.lb_dist, dist_mode.ub_dist)
    if bounds_interval is None:
        bounds_interval = (0.0, 1.0)
    bounds_model, bounds_ids, _ = _query_model(
        net, schema, x_factual, cfg, AsConstraintInterval(*bounds_interval), previous
    )
    box = InputBox(*schema.input_box())
    table = lp_tightened_bounds(net, box, extra=(bounds_model, bounds_ids))
    states = relu_states(table)

    model, input_ids, dist_enc = _query_model(
        net, schema, x_factual, cfg, dist_mode, previous
    )
    net_enc = encode_network_bounded(model, net, input_ids, table, states)
    return EncodingArtifacts(
        model=model,
        input_var_ids=input_ids,
        output_var_id=net_enc.output_var_id,
        distance_var_id=dist_enc.dist_var_id,
        delta_var_ids=net_enc.delta_ids,
    )


def _clean_point(schema: FeatureSchema, values: np.ndarray) -> np.ndarray:
    """Snap solver output onto the encoded space (0/1 blocks, box clipping)."""
    point = np.asarray(values, dtype=np.float64).copy()
    lb, ub = schema.input_box()
    point = np.clip(point, lb, ub)
    for f, sl in zip(schema.features, schema.slices()):
        if f.kind in (FeatureKind.BINARY, FeatureKind.ORDINAL, FeatureKind.CATEGORICAL):
            point[sl] = np.round(point[sl])
    return point


def _point_problems(net, schema, x_factual, point, factual_label, margin):
    problems = list(validate_plausibility(schema, point))
    problems += validate_actionability(schema, point, x_factual)
    output = forward(net, point).output
    if not label_flipped(output, factual_label, margin, tol=FLIP_CHECK_TOL):
        problems.append(f"output {output:.3e} does not flip the {factual_label.value} factual")
    return problems, output


def _fractional_integer_features(schema, point):
    out = []
    for fidx, (f, sl) in enumerate(zip(schema.features, schema.slices())):
        if f.kind is FeatureKind.INTEGER:
            v = point[sl.start]
            if abs(v - round(v)) > 1e-6:
                out.append(fidx)
    return out

def _solve_query(
    net,
    schema,
    x_factual,
    cfg,
    artifacts: EncodingArtifacts,
    options: SolverOptions,
    factual_label: Label,
):
    """Solve, extract, and repair integer features if rounding breaks validity.

    Returns (point or None, outcome). Integer features are continuous in the
    model; a plain rounding is validated first and, failing that, a small
    branching pass over floor/ceil combinations re-solves with them pinned.
    """
    outcome = solve_milp(artifacts.model, options)
    if not outcome.has_solution or outcome.assignment is None:
        return None, outcome

    point = _clean_point(schema, outcome.assignment[artifacts.input_var_ids])
    frac = _fractional_integer_features(schema, point)
    if not frac:
        return point, outcome

    slices = schema.slices()
    rounded = point.copy()
    for fidx in frac:
        pos = slices[fidx].start
        rounded[pos] = round(rounded[pos])
    problems, _ = _point_problems(net, schema, x_factual, rounded, factual_label, cfg.margin)
    if not problems:
        return rounded, outcome

    if 2 ** len(frac) > _MAX_INTEGER_REPAIR_COMBOS:
        return None, outcome
    best_point, best_obj = None, np.inf
    for combo in itertools.product((np.floor, np.ceil), repeat=len(frac)):
        fixed = artifacts.model.copy()
        for op, fidx in zip(combo, frac):
            pos = slices[fidx].start
            value = float(op(point[pos]))
            fixed.set_variable_bounds(artifacts.input_var_ids[pos], value, value)
        retry = solve_milp(fixed, options)
        if not retry.has_solution or retry.assignment is None:
            continue
        candidate = _clean_point(schema, retry.assignment[artifacts.input_var_ids])
        problems, _ = _point_problems(
            net, schema, x_factual, candidate, factual_label, cfg.margin
        )
        if not problems and retry.objective_value < best_obj:
            best_point, best_obj = candidate, retry.objective_value
    return best_point, outcome


def _shell_options(cfg, deadline, threshold) -> SolverOptions:
    return replace(
        cfg.solver,
        incumbent_callback=lambda obj, x: obj <= threshold,
        time_limit_s=deadline.remaining(),
    )


def _run_shell(net, schema, x_factual, cfg, lb_dist, ub_dist, factual_label, previous, deadline):
    """One findCFE query: maximize/minimize the output inside a distance shell."""
    t0 = time.perf_counter()
    try:
        artifacts = build_query_artifacts(
            net,
            schema,
            x_factual,
            cfg,
            AsConstraintInterval(lb_dist, ub_dist),
            previous=previous,
        )
    except InfeasibleRegionError:
        return None, ShellRecord(lb_dist, ub_dist, False, "shell", wall_time=time.perf_counter() - t0)

    sign = -1.0 if factual_label is Label.NEGATIVE else 1.0
    artifacts.model.set_objective([(artifacts.output_var_id, sign)])
    threshold = 0.0 if factual_label is Label.NEGATIVE else -cfg.margin
    options = _shell_options(cfg, deadline, threshold)

    point, outcome = _solve_query(
        net, schema, x_factual, cfg, artifacts, options, factual_label
    )
    record = ShellRecord(
        lb_dist,
        ub_dist,
        False,
        "shell",
        node_count=outcome.node_count,
        lp_iterations=outcome.lp_iterations,
        wall_time=time.perf_counter() - t0,
    )
    if outcome.status is SolveStatus.ITERATION_LIMIT:
        raise SolverNumericalError("node or time limit exhausted inside a shell")
    if outcome.status is SolveStatus.UNBOUNDED:  # pragma: no cover - bounded models
        raise SolverNumericalError("shell model reported unbounded")
    if point is None:
        return None, record
    problems, _ = _point_problems(net, schema, x_factual, point, factual_label, cfg.margin)
    if problems:
        # Optimal output did not reach the flipped side: no CFE in this shell.
        return None, record
    record.found = True
    return point, record


def find_cfe_shell(
    net: FeedForwardNetwork,
    schema: FeatureSchema,
    x_factual: np.ndarray,
    lb_dist: float,
    ub_dist: float,
    cfg: SearchConfig,
    previous=None,
    target_label: Label | None = None,
) -> np.ndarray | None:
    """A label-flipping point with lb <= dist <= ub, or None when none exists."""
    if not 0.0 <= lb_dist <= ub_dist <= 1.0:
        raise ConfigError("shell interval must satisfy 0 <= lb <= ub <= 1")
    x_factual = _check_factual(schema, x_factual)
    factual_label = _resolve_factual_side(net, x_factual, target_label)
    deadline = _Deadline(cfg.time_limit_s)
    point, _ = _run_shell(
        net, schema, x_factual, cfg, lb_dist, ub_dist, factual_label, previous, deadline
    )
    return point


def generate_mip_exp(
    net: FeedForwardNetwork,
    schema: FeatureSchema,
    x_factual: np.ndarray,
    cfg: SearchConfig,
    previous=None,
    target_label: Label | None = None,
) -> CfeResult:
    """Exponential shell expansion followed by binary refinement."""
    t0 = time.perf_counter()
    x_factual = _check_factual(schema, x_factual)
    factual_label = _resolve_factual_side(net, x_factual, target_label)
    deadline = _Deadline(cfg.time_limit_s)
    trace: list[ShellRecord] = []

    def fail(reason):
        return CfeResult(
            CfeStatus.FAILED, trace=trace, wall_time=time.perf_counter() - t0, reason=reason
        )

    lb, ub = 0.0, cfg.epsilon
    found_point = None
    expansions = 0
    try:
        while True:
            if deadline.expired():
                return fail("timeout")
            point, record = _run_shell(
                net, schema, x_factual, cfg, lb, ub, factual_label, previous, deadline
            )
            record.phase = "expand"
            trace.append(record)
            if point is not None:
                found_point = point
                break
            if ub >= 1.0:
                return CfeResult(
                    CfeStatus.NO_CFE_IN_BOX,
                    trace=trace,
                    wall_time=time.perf_counter() - t0,
                )
            expansions += 1
            if expansions > cfg.max_shell_expansions:
                return fail("shell expansion cap exceeded")
            lb, ub = ub, min(2.0 * ub, 1.0)

        lo = lb  # everything below was proven empty by the earlier shells
        hi = min(ub, distance(schema, found_point, x_factual, cfg.norm))
        hi = max(hi, lo)
        while hi - lo > cfg.epsilon:
            if deadline.expired():
                return fail("timeout")
            mid = 0.5 * (lo + hi)
            point, record = _run_shell(
                net, schema, x_factual, cfg, lo, mid, factual_label, previous, deadline
            )
            record.phase = "binary"
            trace.append(record)
            if point is not None:
                found_point = point
                hi = max(lo, min(mid, distance(schema, point, x_factual, cfg.norm)))
            else:
                lo = mid
    except SolverNumericalError as exc:
        return fail(str(exc))

    dist = distance(schema, found_point, x_factual, cfg.norm)
    output = forward(net, found_point).output
    return CfeResult(
        CfeStatus.FOUND,
        point=found_point,
        distance=dist,
        output=output,
        trace=trace,
        wall_time=time.perf_counter() - t0,
    )


def generate_mip_obj(
    net: FeedForwardNetwork,
    schema: FeatureSchema,
    x_factual: np.ndarray,
    cfg: SearchConfig,
    previous=None,
    target_label: Label | None = None,
) -> CfeResult:
    """Single solve with the distance as objective, to optimality gap epsilon."""
    t0 = time.perf_counter()
    x_factual = _check_factual(schema, x_factual)
    factual_label = _resolve_factual_side(net, x_factual, target_label)
    deadline = _Deadline(cfg.time_limit_s)

    def done(result: CfeResult) -> CfeResult:
        result.wall_time = time.perf_counter() - t0
        return result

    try:
        artifacts = build_query_artifacts(
            net,
            schema,
            x_factual,
            cfg,
            AsObjective(),
            previous=previous,
            bounds_interval=(0.0, 1.0),
        )
    except InfeasibleRegionError:
        return done(CfeResult(CfeStatus.NO_CFE_IN_BOX))
    encode_counterfactual_constraint(
        artifacts.model, artifacts.output_var_id, factual_label, cfg.margin
    )
    options = replace(cfg.solver, gap=cfg.epsilon, time_limit_s=deadline.remaining())

    try:
        point, outcome = _solve_query(
            net, schema, x_factual, cfg, artifacts, options, factual_label
        )
    except SolverNumericalError as exc:
        return done(CfeResult(CfeStatus.FAILED, reason=str(exc)))
    record = ShellRecord(
        0.0,
        1.0,
        point is not None,
        "objective",
        node_count=outcome.node_count,
        lp_iterations=outcome.lp_iterations,
        wall_time=time.perf_counter() - t0,
    )
    if outcome.status is SolveStatus.INFEASIBLE:
        return done(CfeResult(CfeStatus.NO_CFE_IN_BOX, trace=[record]))
    if outcome.status is SolveStatus.ITERATION_LIMIT:
        return done(CfeResult(CfeStatus.FAILED, trace=[record], reason="node or time limit"))
    if point is None:
        return done(
            CfeResult(CfeStatus.FAILED, trace=[record], reason="integer rounding failed")
        )
    problems, output = _point_problems(
        net, schema, x_factual, point, factual_label, cfg.margin
    )
    if problems:
        return done(
            CfeResult(CfeStatus.FAILED, trace=[record], reason="; ".join(problems))
        )
    dist = distance(schema, point, x_factual, cfg.norm)
    return done(
        CfeResult(
            CfeStatus.FOUND,
            point=point,
            distance=dist,
            output=output,
            trace=[record],
        )
    )


def generate_diverse(
    net: FeedForwardNetwork,
    schema: FeatureSchema,
    x_factual: np.ndarray,
    k: int,
    cfg: SearchConfig,
    target_label: Label | None = None,
) -> list[CfeResult]:
    """Up to k CFEs, each at distance >= threshold from all earlier ones.

    Stops with the found prefix once a round is infeasible; the feasible set
    only shrinks, so distances are non-decreasing across the sequence.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    results: list[CfeResult] = []
    points: list[np.ndarray] = []
    for _ in range(k):
        result = generate_mip_obj(
            net, schema, x_factual, cfg, previous=points, target_label=target_label
        )
        if result.status is CfeStatus.NO_CFE_IN_BOX:
            break
        results.append(result)
        if result.status is not CfeStatus.FOUND:
            break
        points.append(result.point)
    return results


def k_distance(
    schema: FeatureSchema, results: list[CfeResult], x_factual: np.ndarray, norm: Norm
) -> float:
    """Mean distance of the found CFEs to the factual."""
    points = [r.point for r in results if r.status is CfeStatus.FOUND]
    if not points:
        raise MetricUndefinedError("k-distance needs at least one found CFE")
    return float(
        np.mean([distance(schema, p, x_factual, norm) for p in points])
    )


def k_diversity(schema: FeatureSchema, results: list[CfeResult], norm: Norm) -> float:
    """Mean pairwise distance among the found CFEs."""
    points = [r.point for r in results if r.status is CfeStatus.FOUND]
    if len(points) < 2:
        raise MetricUndefinedError("k-diversity needs at least two found CFEs")
    dists = [
        distance(schema, a, b, norm)
        for i, a in enumerate(points)
        for b in points[i + 1 :]
    ]
    return float(np.mean(dists))


def diversity_metrics(
    schema: FeatureSchema, results: list[CfeResult], x_factual: np.ndarray, norm: Norm
) -> tuple[float, float]:
    return k_diversity(schema, results, norm), k_distance(schema, results, x_factual, norm)
