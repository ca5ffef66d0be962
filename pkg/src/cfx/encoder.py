"""MILP fragments for counterfactual queries.

Everything appends variables/rows into a shared MilpModel and returns the
variable handles; rows carry provenance tags (network / distance /
plausibility / actionability / diversity / counterfactual). Encodings
operate directly on the encoded feature space: scalar features keep raw
units with their box bounds, block features are 0/1 binaries, and all
distance rows fold the range normalization into their coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bounds import DEGENERATE_RELU_RANGE, BoundsTable, ReluState
from .errors import UnsupportedNormError
from .features import (
    CHANGE_TOLERANCE,
    Actionability,
    FeatureKind,
    FeatureSchema,
    Norm,
)
from .milp.model import MilpModel, Sense, VarKind
from .network import LINEAR, RELU, FeedForwardNetwork, Label

# Per-feature normalized gaps live in [-1, 1], so 2 deactivates any of the
# side-selected absolute-value rows below.
_BIG_M = 2.0


@dataclass
class DistanceMode:
    pass


@dataclass
class AsObjective(DistanceMode):
    pass


@dataclass
class AsConstraintInterval(DistanceMode):
    lb_dist: float
    ub_dist: float

    def __post_init__(self):
        if not 0.0 <= self.lb_dist <= self.ub_dist <= 1.0:
            raise ValueError(
                f"distance interval [{self.lb_dist}, {self.ub_dist}] not within [0, 1]"
            )


@dataclass
class NetworkEncoding:
    z_ids: list[list[int]]
    post_ids: list[list[int]]
    delta_ids: dict[tuple[int, int], int]
    output_var_id: int


@dataclass
class DistanceEncoding:
    dist_var_id: int
    feature_aux_ids: list[dict]  # per feature: handles of its t/c/selector vars


@dataclass
class DiversityContext:
    previous: list[np.ndarray]
    threshold: float

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("diversity threshold must be in (0, 1]")


@dataclass
class EncodingArtifacts:
    """Full assembled query model plus the handles the search needs."""

    model: MilpModel
    input_var_ids: list[int]
    output_var_id: int
    distance_var_id: int | None
    delta_var_ids: dict[tuple[int, int], int]

    def tag_index(self) -> dict[str, list[int]]:
        index: dict[str, list[int]] = {}
        for i, row in enumerate(self.model.constraints):
            index.setdefault(row.tag, []).append(i)
        return index


# ---------------------------------------------------------------------------
# input space


def encode_plausibility(model: MilpModel, schema: FeatureSchema) -> list[int]:
    """Declare the input variables with their kind constraints; returns ids."""
    input_ids: list[int] = []
    for f, sl in zip(schema.features, schema.slices()):
        if f.kind in (FeatureKind.REAL, FeatureKind.INTEGER):
            input_ids.append(
                model.add_variable(f.name, VarKind.CONTINUOUS, f.lb, f.ub)
            )
        elif f.kind is FeatureKind.BINARY:
            input_ids.append(model.add_variable(f.name, VarKind.BINARY))
        else:
            block = [
                model.add_variable(f"{f.name}[{j + 1}]", VarKind.BINARY)
                for j in range(f.k)
            ]
            input_ids.extend(block)
            if f.kind is FeatureKind.ORDINAL:
                for j in range(f.k - 1):
                    model.add_constraint(
                        [(block[j], 1.0), (block[j + 1], -1.0)],
                        Sense.GE,
                        0.0,
                        tag="plausibility",
                    )
                # levels run 1..k, so the lowest thermometer bit is set
                model.add_constraint([(block[0], 1.0)], Sense.GE, 1.0, tag="plausibility")
            else:
                model.add_constraint(
                    [(vid, 1.0) for vid in block], Sense.EQ, 1.0, tag="plausibility"
                )
    return input_ids


def encode_actionability(
    model: MilpModel,
    schema: FeatureSchema,
    input_ids: list[int],
    x_factual: np.ndarray,
) -> None:
    for f, sl in zip(schema.features, schema.slices()):
        rule = f.actionability
        if rule is Actionability.FREE:
            continue
        ids = input_ids[sl]
        ref = x_factual[sl]
        if rule is Actionability.FIXED:
            for vid, value in zip(ids, ref):
                model.add_constraint(
                    [(vid, 1.0)], Sense.EQ, float(value), tag="actionability"
                )
            continue
        # scalar comparison: ordinal compares thermometer sums (levels)
        if f.kind is FeatureKind.ORDINAL:
            terms = [(vid, 1.0) for vid in ids]
            rhs = float(np.sum(ref))
        else:
            terms = [(ids[0], 1.0)]
            rhs = float(ref[0])
        sense = Sense.GE if rule is Actionability.INCREASE_ONLY else Sense.LE
        model.add_constraint(terms, sense, rhs, tag="actionability")


# ---------------------------------------------------------------------------
# network


def _relu_rows(model, zid, hid, did, l, u):
    """Exact bounded ReLU linking rows (h = max(0, z)) with indicator d."""
    model.add_constraint([(hid, 1.0), (zid, -1.0)], Sense.GE, 0.0, tag="network")
    model.add_constraint([(hid, 1.0), (did, -u)], Sense.LE, 0.0, tag="network")
    model.add_constraint(
        [(hid, 1.0), (zid, -1.0), (did, -l)], Sense.LE, -l, tag="network"
    )


def _encode_network(
    model: MilpModel,
    net: FeedForwardNetwork,
    input_ids: list[int],
    pre_bounds,
    states,
) -> NetworkEncoding:
    z_ids_all: list[list[int]] = []
    post_ids_all: list[list[int]] = []
    delta_ids: dict[tuple[int, int], int] = {}

    post_ids = list(input_ids)
    for li, layer in enumerate(net.layers):
        lbs, ubs = pre_bounds[li]
        z_ids = []
        for j in range(layer.width):
            zid = model.add_variable(
                f"z{li + 1}_{j}", VarKind.CONTINUOUS, lbs[j], ubs[j]
            )
            terms = [(zid, 1.0)] + [
                (post_ids[t], -layer.weights[j, t])
                for t in range(layer.fan_in)
                if layer.weights[j, t] != 0.0
            ]
            model.add_constraint(terms, Sense.EQ, layer.biases[j], tag="network")
            z_ids.append(zid)
        z_ids_all.append(z_ids)

        if layer.activation == RELU:
            new_post = []
            for j, zid in enumerate(z_ids):
                state = states[(li, j)]
                if state is ReluState.ALWAYS_ACTIVE:
                    new_post.append(zid)
                elif state is ReluState.ALWAYS_INACTIVE:
                    hid = model.add_variable(
                        f"h{li + 1}_{j}", VarKind.CONTINUOUS, 0.0, 0.0
                    )
                    new_post.append(hid)
                else:
                    l, u = float(lbs[j]), float(ubs[j])
                    hid = model.add_variable(
                        f"h{li + 1}_{j}", VarKind.CONTINUOUS, 0.0, max(u, 0.0)
                    )
                    did = model.add_variable(f"d{li + 1}_{j}", VarKind.BINARY)
                    delta_ids[(li, j)] = did
                    _relu_rows(model, zid, hid, did, l, u)
                    new_post.append(hid)
            post_ids = new_post
        else:
            post_ids = z_ids
        post_ids_all.append(post_ids)

    return NetworkEncoding(z_ids_all, post_ids_all, delta_ids, z_ids_all[-1][0])


def encode_network_bounded(
    model: MilpModel,
    net: FeedForwardNetwork,
    input_ids: list[int],
    table: BoundsTable,
    states: dict[tuple[int, int], ReluState],
) -> NetworkEncoding:
    """Exact ReLU encoding with per-neuron bounds; stable ReLUs need no binary."""
    if len(table.layers) != net.depth:
        raise ValueError("bounds table does not match network depth")
    pre_bounds = [(lb.pre_lb, lb.pre_ub) for lb in table.layers]
    return _encode_network(model, net, input_ids, pre_bounds, states)


def encode_network_unbounded(
    model: MilpModel,
    net: FeedForwardNetwork,
    input_ids: list[int],
    big_m: float,
) -> NetworkEncoding:
    """Reference encoding: every ReLU carries a binary with uniform +-big_m bounds.

    The caller must supply big_m exceeding every reachable |z|; used in
    differential tests against the bounded encoding.
    """
    pre_bounds = []
    states = {}
    for li, layer in enumerate(net.layers):
        lbs = np.full(layer.width, -big_m)
        ubs = np.full(layer.width, big_m)
        pre_bounds.append((lbs, ubs))
        if layer.activation == RELU:
            for j in range(layer.width):
                states[(li, j)] = ReluState.UNSTABLE
    return _encode_network(model, net, input_ids, pre_bounds, states)


# ---------------------------------------------------------------------------
# distances

def _feature_gap(schema, input_ids, x_factual, fidx):
    """Linear expression of a feature's signed normalized gap to the factual.

    Returns (terms, constant, exact). For binary/categorical features the
    expression *is* the per-feature distance (exact=True, value in [0, 1]);
    otherwise it is the signed gap whose absolute value is the distance.
    """
    f = schema.features[fidx]
    sl = schema.slices()[fidx]
    ids = input_ids[sl]
    ref = x_factual[sl]
    if f.kind is FeatureKind.BINARY:
        if ref[0] >= 0.5:
            return [(ids[0], -1.0)], 1.0, True  # 1 - x
        return [(ids[0], 1.0)], 0.0, True  # x
    if f.kind is FeatureKind.CATEGORICAL:
        j_star = int(np.argmax(ref))
        return [(ids[j_star], -1.0)], 1.0, True  # 1 - x[factual category]
    if f.kind is FeatureKind.ORDINAL:
        w = 1.0 / f.k
        return [(vid, w) for vid in ids], -w * float(np.sum(ref)), False
    w = 1.0 / f.range_width
    return [(ids[0], w)], -w * float(ref[0]), False


def _abs_overestimator(model, terms, const, name) -> int:
    """Variable t in [0, 1] with t >= gap and t >= -gap."""
    tid = model.add_variable(name, VarKind.CONTINUOUS, 0.0, 1.0)
    model.add_constraint(
        [(tid, 1.0)] + [(vid, -c) for vid, c in terms], Sense.GE, const, tag="distance"
    )
    model.add_constraint(
        [(tid, 1.0)] + [(vid, c) for vid, c in terms], Sense.GE, -const, tag="distance"
    )
    return tid


def _exact_expression_var(model, terms, const, name) -> int:
    """Variable pinned by an equality to a [0, 1]-valued linear expression."""
    tid = model.add_variable(name, VarKind.CONTINUOUS, 0.0, 1.0)
    model.add_constraint(
        [(tid, 1.0)] + [(vid, -c) for vid, c in terms], Sense.EQ, const, tag="distance"
    )
    return tid


def encode_distance(
    model: MilpModel,
    schema: FeatureSchema,
    input_ids: list[int],
    x_factual: np.ndarray,
    norm: Norm,
    mode: DistanceMode,
) -> DistanceEncoding:
    """Normalized distance-to-factual rows; exposes the aggregate variable.

    In AsObjective mode the model objective is set to the distance variable.
    In AsConstraintInterval mode lb <= dist <= ub rows are added; the L0 and
    Linf encodings additionally gain selector binaries so the lower bound is
    meaningful (for L1 the lower row only prunes, which is sound because the
    per-feature terms over-estimate).
    """
    if norm is Norm.L2:
        raise UnsupportedNormError(
            "the built-in solver is linear-only; export an LP document for l2"
        )
    n = schema.n_features
    interval = isinstance(mode, AsConstraintInterval)
    dist_id = model.add_variable("dist", VarKind.CONTINUOUS, 0.0, 1.0)
    aux: list[dict] = []
    agg_terms: list[tuple[int, float]] = []

    for fidx, f in enumerate(schema.features):
        handles: dict = {}
        terms, const, exact = _feature_gap(schema, input_ids, x_factual, fidx)
        if norm is Norm.L1:
            if exact:
                tid = _exact_expression_var(model, terms, const, f"t_{f.name}")
            else:
                tid = _abs_overestimator(model, terms, const, f"t_{f.name}")
            handles["t"] = tid
            agg_terms.append((tid, 1.0))
        elif norm is Norm.L0:
            if exact:
                # binary/categorical distance is already a 0/1 change indicator
                cid = _exact_expression_var(model, terms, const, f"c_{f.name}")
            else:
                cid = model.add_variable(f"c_{f.name}", VarKind.BINARY)
                model.add_constraint(
                    [(cid, 1.0)] + [(vid, -c) for vid, c in terms],
                    Sense.GE,
                    const,
                    tag="distance",
                )
                model.add_constraint(
                    [(cid, 1.0)] + [(vid, c) for vid, c in terms],
                    Sense.GE,
                    -const,
                    tag="distance",
                )
                if interval:
                    # c = 1 must witness a real change of at least the L0
                    # tolerance, otherwise the shell lower bound is vacuous.
                    sid = model.add_variable(f"s_{f.name}", VarKind.BINARY)
                    handles["side"] = sid
                    model.add_constraint(
                        [(vid, c) for vid, c in terms]
                        + [(sid, -_BIG_M), (cid, -_BIG_M)],
                        Sense.GE,
                        CHANGE_TOLERANCE - const - 2 * _BIG_M,
                        tag="distance",
                    )
                    model.add_constraint(
                        [(vid, -c) for vid, c in terms]
                        + [(sid, _BIG_M), (cid, -_BIG_M)],
                        Sense.GE,
                        CHANGE_TOLERANCE + const - _BIG_M,
                        tag="distance",
                    )
            handles["c"] = cid
            agg_terms.append((cid, 1.0))
        else:  # Linf
            if exact:
                tid = _exact_expression_var(model, terms, const, f"t_{f.name}")
                handles["t"] = tid
                model.add_constraint(
                    [(dist_id, 1.0), (tid, -1.0)], Sense.GE, 0.0, tag="distance"
                )
            else:
                model.add_constraint(
                    [(dist_id, 1.0)] + [(vid, -c) for vid, c in terms],
                    Sense.GE,
                    const,
                    tag="distance",
                )
                model.add_constraint(
                    [(dist_id, 1.0)] + [(vid, c) for vid, c in terms],
                    Sense.GE,
                    -const,
                    tag="distance",
                )
            if interval:
                sel = model.add_variable(f"sel_{f.name}", VarKind.BINARY)
                handles["selector"] = sel
                if exact:
                    model.add_constraint(
                        [(handles["t"], 1.0), (dist_id, -1.0), (sel, -1.0)],
                        Sense.GE,
                        -1.0,
                        tag="distance",
                    )
                else:
                    sid = model.add_variable(f"s_{f.name}", VarKind.BINARY)
                    handles["side"] = sid
                    model.add_constraint(
                        [(vid, c) for vid, c in terms]
                        + [(dist_id, -1.0), (sel, -_BIG_M), (sid, -_BIG_M)],
                        Sense.GE,
                        -const - 2 * _BIG_M,
                        tag="distance",
                    )
                    model.add_constraint(
                        [(vid, -c) for vid, c in terms]
                        + [(dist_id, -1.0), (sel, -_BIG_M), (sid, _BIG_M)],
                        Sense.GE,
                        const - _BIG_M,
                        tag="distance",
                    )
        aux.append(handles)

    if norm in (Norm.L1, Norm.L0):
        # dist = (1/n) * sum of per-feature contributions
        model.add_constraint(
            [(dist_id, float(n))] + [(vid, -c) for vid, c in agg_terms],
            Sense.EQ,
            0.0,
            tag="distance",
        )
    elif interval:  # Linf lower bound needs a witness feature
        sels = [(h["selector"], 1.0) for h in aux]
        model.add_constraint(sels, Sense.GE, 1.0, tag="distance")

    if interval:
        model.add_constraint([(dist_id, 1.0)], Sense.GE, mode.lb_dist, tag="distance")
        model.add_constraint([(dist_id, 1.0)], Sense.LE, mode.ub_dist, tag="distance")
    else:
        model.set_objective([(dist_id, 1.0)])
    return DistanceEncoding(dist_id, aux)


def l2_export_objective(
    model: MilpModel,
    schema: FeatureSchema,
    input_ids: list[int],
    x_factual: np.ndarray,
) -> list[tuple[int, float]]:
    """Quadratic objective terms for l2, export-only.

    Adds per-feature over-estimators t_i and returns [(t_i, 1/n)] meaning
    sum (1/n) t_i^2; minimizing it drives each t_i to the true per-feature
    distance, so the optimum is the squared L2 distance.
    """
    n = schema.n_features
    quad = []
    for fidx, f in enumerate(schema.features):
        terms, const, exact = _feature_gap(schema, input_ids, x_factual, fidx)
        if exact:
            tid = _exact_expression_var(model, terms, const, f"t_{f.name}")
        else:
            tid = _abs_overestimator(model, terms, const, f"t_{f.name}")
        quad.append((tid, 1.0 / n))
    return quad


# ---------------------------------------------------------------------------
# counterfactual side and diversity


def encode_counterfactual_constraint(
    model: MilpModel, output_var_id: int, factual_label: Label, margin: float
) -> None:
    """Pin the output to the opposite side of the factual's label.

    Negative factual: output >= 0 (the closed positive side). Positive
    factual: output <= -margin, closing the open set h < 0.
    """
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    if factual_label is Label.NEGATIVE:
        model.add_constraint(
            [(output_var_id, 1.0)], Sense.GE, 0.0, tag="counterfactual"
        )
    else:
        model.add_constraint(
            [(output_var_id, 1.0)], Sense.LE, -margin, tag="counterfactual"
        )


def encode_diversity(
    model: MilpModel,
    schema: FeatureSchema,
    input_ids: list[int],
    ctx: DiversityContext,
    norm: Norm,
) -> None:
    """Require distance >= threshold to each previously generated point.

    Lower-bounding a distance needs exact absolute values, realized with
    per-feature side-selector binaries (the gap range [-1, 1] makes 2 a
    valid deactivation constant).
    """
    if norm not in (Norm.L0, Norm.L1, Norm.LINF):
        raise UnsupportedNormError(f"diversity rows not supported for {norm.value}")
    n = schema.n_features
    for p_idx, prev in enumerate(ctx.previous):
        prev = np.asarray(prev, dtype=np.float64)
        contrib: list[tuple[int, float]] = []
        sels: list[int] = []
        for fidx, f in enumerate(schema.features):
            terms, const, exact = _feature_gap(schema, input_ids, prev, fidx)
            base = f"div{p_idx}_{f.name}"
            if norm is Norm.LINF:
                sel = model.add_variable(f"sel_{base}", VarKind.BINARY)
                sels.append(sel)
                if exact:
                    # dist expr >= threshold when selected
                    model.add_constraint(
                        [(vid, c) for vid, c in terms] + [(sel, -1.0)],
                        Sense.GE,
                        ctx.threshold - const - 1.0,
                        tag="diversity",
                    )
                else:
                    sid = model.add_variable(f"s_{base}", VarKind.BINARY)
                    model.add_constraint(
                        [(vid, c) for vid, c in terms]
                        + [(sel, -_BIG_M), (sid, -_BIG_M)],
                        Sense.GE,
                        ctx.threshold - const - 2 * _BIG_M,
                        tag="diversity",
                    )
                    model.add_constraint(
                        [(vid, -c) for vid, c in terms]
                        + [(sel, -_BIG_M), (sid, _BIG_M)],
                        Sense.GE,
                        ctx.threshold + const - _BIG_M,
                        tag="diversity",
                    )
                continue
            if norm is Norm.L1:
                if exact:
                    did = _exact_expression_var(model, terms, const, f"t_{base}")
                else:
                    # under-estimator: d' <= |gap| via a side selector
                    did = model.add_variable(f"t_{base}", VarKind.CONTINUOUS, 0.0, 1.0)
                    sid = model.add_variable(f"s_{base}", VarKind.BINARY)
                    model.add_constraint(
                        [(did, 1.0)] + [(vid, -c) for vid, c in terms] + [(sid, _BIG_M)],
                        Sense.LE,
                        const + _BIG_M,
                        tag="diversity",
                    )
                    model.add_constraint(
                        [(did, 1.0)] + [(vid, c) for vid, c in terms] + [(sid, -_BIG_M)],
                        Sense.LE,
                        -const,
                        tag="diversity",
                    )
                contrib.append((did, 1.0))
            else:  # L0: change indicators that must witness a real change
                if exact:
                    cid = _exact_expression_var(model, terms, const, f"c_{base}")
                else:
                    cid = model.add_variable(f"c_{base}", VarKind.BINARY)
                    sid = model.add_variable(f"s_{base}", VarKind.BINARY)
                    min_change = (
                        1.0 / f.k if f.kind is FeatureKind.ORDINAL else CHANGE_TOLERANCE
                    )
                    model.add_constraint(
                        [(vid, c) for vid, c in terms]
                        + [(sid, -_BIG_M), (cid, -_BIG_M)],
                        Sense.GE,
                        min_change - const - 2 * _BIG_M,
                        tag="diversity",
                    )
                    model.add_constraint(
                        [(vid, -c) for vid, c in terms]
                        + [(sid, _BIG_M), (cid, -_BIG_M)],
                        Sense.GE,
                        min_change + const - _BIG_M,
                        tag="diversity",
                    )
                contrib.append((cid, 1.0))
        if norm is Norm.LINF:
            model.add_constraint(
                [(sel, 1.0) for sel in sels], Sense.GE, 1.0, tag="diversity"
            )
        else:
            model.add_constraint(
                contrib, Sense.GE, n * ctx.threshold, tag="diversity"
            )
