"""Per-neuron activation bounds: interval arithmetic and LP tightening.

Interval propagation treats every neuron independently and quickly becomes
loose with depth. The LP path instead grows one linear program layer by
layer: exact affine rows, plus a binary-free triangle over-approximation of
each unstable ReLU, and queries each neuron's min/max by LP. Constraints on
the inputs (a distance shell, plausibility rows) can be carried into every
per-neuron LP, which is what makes shell-restricted bounds tight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InfeasibleRegionError, InputShapeError
from .milp.model import MilpModel, Sense, VarKind
from .milp.simplex import LpStatus, solve_lp_arrays_robust
from .network import LINEAR, RELU, FeedForwardNetwork, forward_batch

# Below this pre-activation range an unstable ReLU is treated as fixed by the
# sign of its midpoint; the triangle row would divide by (u - l).
DEGENERATE_RELU_RANGE = 1e-9


class ReluState(Enum):
    ALWAYS_ACTIVE = "always_active"
    ALWAYS_INACTIVE = "always_inactive"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class InputBox:
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        lb = np.asarray(self.lb, dtype=np.float64)
        ub = np.asarray(self.ub, dtype=np.float64)
        if lb.shape != ub.shape or lb.ndim != 1:
            raise InputShapeError("box bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise InputShapeError("box bounds must be finite")
        if np.any(lb > ub):
            raise InputShapeError("box has lb > ub")
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @property
    def dim(self) -> int:
        return self.lb.shape[0]

    @classmethod
    def point(cls, x: np.ndarray) -> "InputBox":
        x = np.asarray(x, dtype=np.float64)
        return cls(x.copy(), x.copy())


@dataclass
class LayerBounds:
    pre_lb: np.ndarray
    pre_ub: np.ndarray
    post_lb: np.ndarray
    post_ub: np.ndarray
    activation: str


@dataclass
class BoundsTable:
    """Pre/post-activation bounds for every layer; the last layer is the output."""

    layers: list[LayerBounds]

    def __post_init__(self):
        for i, lb in enumerate(self.layers):
            if np.any(lb.pre_lb > lb.pre_ub + 1e-9) or np.any(
                lb.post_lb > lb.post_ub + 1e-9
            ):
                raise ValueError(f"layer {i + 1}: crossed bounds")

    @property
    def output_lb(self) -> float:
        return float(self.layers[-1].pre_lb[0])

    @property
    def output_ub(self) -> float:
        return float(self.layers[-1].pre_ub[0])

    def n_unstable(self) -> int:
        return sum(
            1
            for (i, j), s in relu_states(self).items()
            if s is ReluState.UNSTABLE
        )


def relu_states(table: BoundsTable) -> dict[tuple[int, int], ReluState]:
    """Stability of each hidden ReLU, keyed by (layer index, neuron index).

    A degenerate range (u - l below DEGENERATE_RELU_RANGE) is fixed by the
    midpoint sign so downstream encodings never divide by a vanishing range.
    """
    states: dict[tuple[int, int], ReluState] = {}
    for i, layer in enumerate(table.layers[:-1]):
        if layer.activation != RELU:
            continue
        for j in range(layer.pre_lb.shape[0]):
            l, u = layer.pre_lb[j], layer.pre_ub[j]
            if l >= 0.0:
                states[(i, j)] = ReluState.ALWAYS_ACTIVE
            elif u <= 0.0:
                states[(i, j)] = ReluState.ALWAYS_INACTIVE
            elif u - l < DEGENERATE_RELU_RANGE:
                mid = 0.5 * (l + u)
                states[(i, j)] = (
                    ReluState.ALWAYS_ACTIVE if mid >= 0.0 else ReluState.ALWAYS_INACTIVE
                )
            else:
                states[(i, j)] = ReluState.UNSTABLE
    return states


def _interval_step(layer, post_lb, post_ub):
    w_pos = np.maximum(layer.weights, 0.0)
    w_neg = np.minimum(layer.weights, 0.0)
    pre_lb = w_pos @ post_lb + w_neg @ post_ub + layer.biases
    pre_ub = w_pos @ post_ub + w_neg @ post_lb + layer.biases
    return pre_lb, pre_ub


def interval_bounds(net: FeedForwardNetwork, box: InputBox) -> BoundsTable:
    """Worst-case per-neuron propagation, layer by layer, ReLU clamped."""
    if box.dim != net.input_dim:
        raise InputShapeError(
            f"box dimension {box.dim} does not match input_dim {net.input_dim}"
        )
    layers = []
    post_lb, post_ub = box.lb, box.ub
    for layer in net.layers:
        pre_lb, pre_ub = _interval_step(layer, post_lb, post_ub)
        if layer.activation == RELU:
            post_lb = np.maximum(pre_lb, 0.0)
            post_ub = np.maximum(pre_ub, 0.0)
        else:
            post_lb, post_ub = pre_lb.copy(), pre_ub.copy()
        layers.append(LayerBounds(pre_lb, pre_ub, post_lb, post_ub, layer.activation))
    return BoundsTable(layers)


class _LpBoundsBuilder:
    """Incrementally built LP (binaries relaxed) with per-variable min/max queries."""

    def __init__(self, model: MilpModel, feas_tol: float = 1e-7):
        self.model = model.relax_binaries()
        self.feas_tol = feas_tol

    def minmax(self, var_ids: list[int]) -> tuple[np.ndarray, np.ndarray]:
        A, senses, b, lb, ub, _ = self.model.to_arrays()
        mins = np.empty(len(var_ids))
        maxs = np.empty(len(var_ids))
        for k, vid in enumerate(var_ids):
            c = np.zeros(self.model.n_vars)
            c[vid] = 1.0
            low = solve_lp_arrays_robust(A, senses, b, lb, ub, c, 0.0, self.feas_tol)
            if low.status is LpStatus.INFEASIBLE:
                raise InfeasibleRegionError("bound LP is infeasible")
            c[vid] = -1.0
            high = solve_lp_arrays_robust(A, senses, b, lb, ub, c, 0.0, self.feas_tol)
            mins[k] = low.x[vid]
            maxs[k] = high.x[vid]
        return mins, maxs


def tighten_input_bounds(
    model: MilpModel, input_ids: list[int], feas_tol: float = 1e-7
) -> tuple[np.ndarray, np.ndarray]:
    """Optimize each input variable under the model's rows (binaries relaxed).

    Returns refined (lb, ub) and narrows the variable bounds in place.
    Raises InfeasibleRegionError when the constrained region is empty, which
    signals an empty distance shell to the search driver.
    """
    builder = _LpBoundsBuilder(model, feas_tol)
    mins, maxs = builder.minmax(input_ids)
    base_lb, base_ub = model.bounds_arrays()
    for k, vid in enumerate(input_ids):
        lo = max(mins[k], base_lb[vid])
        hi = min(maxs[k], base_ub[vid])
        if lo > hi:  # numerical crossing on a degenerate region
            lo = hi = 0.5 * (lo + hi)
        model.set_variable_bounds(vid, lo, hi)
    lb, ub = model.bounds_arrays()
    return lb[input_ids], ub[input_ids]


def lp_tightened_bounds(
    net: FeedForwardNetwork,
    box: InputBox,
    extra: tuple[MilpModel, list[int]] | None = None,
    feas_tol: float = 1e-7,
) -> BoundsTable:
    """Layer-by-layer LP bounds with the triangle ReLU over-approximation.

    ``extra`` optionally supplies a model holding the input variables plus
    any constraints to carry through every per-neuron LP (distance shell,
    plausibility, actionability rows). Without it, a fresh model over the
    box is used. Resulting bounds are sound and never looser than
    ``interval_bounds`` on the same box.
    """
    if box.dim != net.input_dim:
        raise InputShapeError(
            f"box dimension {box.dim} does not match input_dim {net.input_dim}"
        )
    if extra is None:
        model = MilpModel()
        input_ids = [
            model.add_variable(f"x{j}", VarKind.CONTINUOUS, box.lb[j], box.ub[j])
            for j in range(net.input_dim)
        ]
    else:
        source, input_ids = extra
        if len(input_ids) != net.input_dim:
            raise InputShapeError("extra model input ids do not match input_dim")
        model = source.relax_binaries()
        # Alg. step: optimize the input variables first; their refined ranges
        # seed the propagation and may prove the region empty.
        tighten_input_bounds(model, input_ids, feas_tol)

    model = model.relax_binaries()
    lb_all, ub_all = model.bounds_arrays()
    post_ids = list(input_ids)
    post_lb = lb_all[input_ids]
    post_ub = ub_all[input_ids]

    layers_out: list[LayerBounds] = []
    for li, layer in enumerate(net.layers):
        prelim_lb, prelim_ub = _interval_step(layer, post_lb, post_ub)
        z_ids = []
        for j in range(layer.width):
            zid = model.add_variable(
                f"z{li + 1}_{j}", VarKind.CONTINUOUS, prelim_lb[j], prelim_ub[j]
            )
            terms = [(zid, 1.0)] + [
                (post_ids[t], -layer.weights[j, t])
                for t in range(layer.fan_in)
                if layer.weights[j, t] != 0.0
            ]
            model.add_constraint(terms, Sense.EQ, layer.biases[j], tag="network")
            z_ids.append(zid)

        builder = _LpBoundsBuilder(model, feas_tol)
        mins, maxs = builder.minmax(z_ids)
        pre_lb = np.maximum(mins, prelim_lb)  # LP result cannot leave the prelim box
        pre_ub = np.minimum(maxs, prelim_ub)
        crossed = pre_lb > pre_ub
        if np.any(crossed):
            mid = 0.5 * (pre_lb[crossed] + pre_ub[crossed])
            pre_lb[crossed] = mid
            pre_ub[crossed] = mid
        for j, zid in enumerate(z_ids):
            model.set_variable_bounds(zid, pre_lb[j], pre_ub[j])

        if layer.activation == RELU:
            new_post_ids = []
            new_post_lb = np.empty(layer.width)
            new_post_ub = np.empty(layer.width)
            for j, zid in enumerate(z_ids):
                l, u = pre_lb[j], pre_ub[j]
                degenerate = (l < 0.0 < u) and (u - l < DEGENERATE_RELU_RANGE)
                active = l >= 0.0 or (degenerate and 0.5 * (l + u) >= 0.0)
                inactive = not active and (u <= 0.0 or degenerate)
                if active:
                    new_post_ids.append(zid)  # exact: post equals pre
                    new_post_lb[j], new_post_ub[j] = max(l, 0.0), max(u, 0.0)
                elif inactive:
                    hid = model.add_variable(f"h{li + 1}_{j}", VarKind.CONTINUOUS, 0.0, 0.0)
                    new_post_ids.append(hid)
                    new_post_lb[j] = new_post_ub[j] = 0.0
                else:
                    hid = model.add_variable(
                        f"h{li + 1}_{j}", VarKind.CONTINUOUS, 0.0, max(u, 0.0)
                    )
                    model.add_constraint(
                        [(hid, 1.0), (zid, -1.0)], Sense.GE, 0.0, tag="network"
                    )
                    # h <= u (z - l) / (u - l), cleared of the denominator
                    model.add_constraint(
                        [(hid, u - l), (zid, -u)], Sense.LE, -u * l, tag="network"
                    )
                    new_post_ids.append(hid)
                    new_post_lb[j], new_post_ub[j] = 0.0, max(u, 0.0)
            post_ids = new_post_ids
            post_lb, post_ub = new_post_lb, new_post_ub
        else:
            post_ids = z_ids
            post_lb, post_ub = pre_lb.copy(), pre_ub.copy()

        layers_out.append(
            LayerBounds(pre_lb, pre_ub, post_lb.copy(), post_ub.copy(), layer.activation)
        )
    return BoundsTable(layers_out)


@dataclass
class BoundViolation:
    layer: int  # 1-based weight-layer index
    neuron: int
    kind: str  # "pre" or "post"
    value: float
    lb: float
    ub: float


def sample_bounds_check(
    net: FeedForwardNetwork,
    box: InputBox,
    table: BoundsTable,
    samples: int,
    seed: int = 0,
    tol: float = 1e-7,
) -> list[BoundViolation]:
    """Monte-Carlo soundness oracle: activations must stay inside the table."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(box.lb, box.ub, size=(samples, box.dim))
    pre, post, _ = forward_batch(net, xs)
    violations: list[BoundViolation] = []
    for i, layer_bounds in enumerate(table.layers):
        for kind, values, lo, hi in (
            ("pre", pre[i], layer_bounds.pre_lb, layer_bounds.pre_ub),
            ("post", post[i], layer_bounds.post_lb, layer_bounds.post_ub),
        ):
            scale = 1.0 + np.maximum(np.abs(lo), np.abs(hi))
            bad = (values < lo - tol * scale) | (values > hi + tol * scale)
            rows, cols = np.nonzero(bad)
            for r, j in zip(rows, cols):
                violations.append(
                    BoundViolation(
                        i + 1, int(j), kind, float(values[r, j]), float(lo[j]), float(hi[j])
                    )
                )
    return violations
