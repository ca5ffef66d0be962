"""Brute-force ground truth by grid enumeration of the plausible input space.

The optimizing code paths are validated against this module at desk scale:
it shares the flip rule and the distance functions with them, so the two can
disagree only through grid discretization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridCapError
from .features import Actionability, FeatureKind, FeatureSchema, Norm, distance_batch
from .network import FeedForwardNetwork, Label, forward_batch, label_flipped

_CHUNK = 65536


@dataclass(frozen=True)
class GridSpec:
    """Per-continuous-feature sample count; discrete features enumerate fully."""

    samples_per_continuous: int = 201
    cap: int = 2_000_000

    def __post_init__(self):
        if self.samples_per_continuous < 2:
            raise ValueError("need at least two samples per continuous feature")


def _candidate_blocks(
    schema: FeatureSchema, x_factual: np.ndarray, grid: GridSpec
) -> list[np.ndarray]:
    """Per feature: matrix of candidate encoded blocks (n_candidates, width).

    Continuous grids include both endpoints plus the factual's own value, so
    the "feature unchanged" option is always present; actionability rules
    filter candidates up front.
    """
    blocks = []
    for f, sl in zip(schema.features, schema.slices()):
        ref = x_factual[sl]
        rule = f.actionability
        if f.kind in (FeatureKind.REAL, FeatureKind.INTEGER):
            values = np.linspace(f.lb, f.ub, grid.samples_per_continuous)
            if f.kind is FeatureKind.INTEGER:
                values = np.unique(np.round(values))
            values = np.union1d(values, [ref[0]])
            if rule is Actionability.FIXED:
                values = np.array([ref[0]])
            elif rule is Actionability.INCREASE_ONLY:
                values = values[values >= ref[0] - 1e-12]
            elif rule is Actionability.DECREASE_ONLY:
                values = values[values <= ref[0] + 1e-12]
            blocks.append(values.reshape(-1, 1))
        elif f.kind is FeatureKind.BINARY:
            values = np.array([0.0, 1.0])
            if rule is Actionability.FIXED:
                values = np.array([ref[0]])
            elif rule is Actionability.INCREASE_ONLY:
                values = values[values >= ref[0]]
            elif rule is Actionability.DECREASE_ONLY:
                values = values[values <= ref[0]]
            blocks.append(values.reshape(-1, 1))
        elif f.kind is FeatureKind.ORDINAL:
            ref_level = int(round(ref.sum()))
            levels = np.arange(1, f.k + 1)
            if rule is Actionability.FIXED:
                levels = np.array([ref_level])
            elif rule is Actionability.INCREASE_ONLY:
                levels = levels[levels >= ref_level]
            elif rule is Actionability.DECREASE_ONLY:
                levels = levels[levels <= ref_level]
            mat = np.zeros((levels.size, f.k))
            for row, level in enumerate(levels):
                mat[row, :level] = 1.0
            blocks.append(mat)
        else:  # categorical
            cats = np.arange(f.k)
            if rule is Actionability.FIXED:
                cats = np.array([int(np.argmax(ref))])
            mat = np.zeros((cats.size, f.k))
            mat[np.arange(cats.size), cats] = 1.0
            blocks.append(mat)
    return blocks


def _grid_size(blocks) -> int:
    size = 1
    for b in blocks:
        size *= b.shape[0]
    return size


def _assemble_chunk(schema, blocks, indices) -> np.ndarray:
    """Rows of the product grid for the given flat indices (mixed radix)."""
    out = np.empty((indices.size, schema.encoded_dim))
    rem = indices.copy()
    for f_block, sl in zip(reversed(blocks), reversed(schema.slices())):
        count = f_block.shape[0]
        rem, local = np.divmod(rem, count)
        out[:, sl] = f_block[local]
    return out


def iterate_grid(schema: FeatureSchema, x_factual: np.ndarray, grid: GridSpec):
    """Yield encoded-point chunks of the full plausible/actionable grid."""
    blocks = _candidate_blocks(schema, x_factual, grid)
    total = _grid_size(blocks)
    if total > grid.cap:
        raise GridCapError(f"grid of {total} points exceeds cap {grid.cap}")
    for start in range(0, total, _CHUNK):
        indices = np.arange(start, min(start + _CHUNK, total))
        yield _assemble_chunk(schema, blocks, indices)


def brute_force_nearest(
    net: FeedForwardNetwork,
    schema: FeatureSchema,
    x_factual: np.ndarray,
    norm: Norm,
    grid: GridSpec,
    factual_label: Label,
    margin: float = 1e-6,
) -> tuple[np.ndarray, float] | None:
    """Nearest label-flipping grid point, or None when no grid point flips.

    Deterministic: distance ties break by lexicographic encoded order.
    """
    best_point = None
    best_dist = np.inf
    for chunk in iterate_grid(schema, x_factual, grid):
        _, _, outputs = forward_batch(net, chunk)
        if factual_label is Label.NEGATIVE:
            mask = outputs >= 0.0
        else:
            mask = outputs <= -margin
        if not mask.any():
            continue
        flipped = chunk[mask]
        dists = distance_batch(schema, flipped, x_factual, norm)
        chunk_best = dists.min()
        if chunk_best > best_dist:
            continue
        candidates = flipped[dists == chunk_best]
        # lexicographically smallest encoded vector among the tied rows
        lex = candidates[np.lexsort(candidates[:, ::-1].T)][0]
        if chunk_best < best_dist or (
            best_point is not None and _lex_less(lex, best_point)
        ):
            best_dist = float(chunk_best)
            best_point = lex
    if best_point is None:
        return None
    return best_point, best_dist


def _lex_less(a: np.ndarray, b: np.ndarray) -> bool:
    for x, y in zip(a, b):
        if x < y:
            return True
        if x > y:
            return False
    return False


def brute_force_reachable_range(
    net: FeedForwardNetwork,
    box_lb: np.ndarray,
    box_ub: np.ndarray,
    samples_per_dim: int,
    cap: int = 2_000_000,
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Empirical per-neuron (min, max) of pre/post activations over a box grid.

    A sound bounds table must contain these ranges; used as a witness in
    soundness tests.
    """
    box_lb = np.asarray(box_lb, dtype=np.float64)
    box_ub = np.asarray(box_ub, dtype=np.float64)
    dim = box_lb.shape[0]
    total = samples_per_dim**dim
    if total > cap:
        raise GridCapError(f"grid of {total} points exceeds cap {cap}")
    axes = [np.linspace(box_lb[d], box_ub[d], samples_per_dim) for d in range(dim)]

    pre_min = pre_max = post_min = post_max = None
    for start in range(0, total, _CHUNK):
        indices = np.arange(start, min(start + _CHUNK, total))
        xs = np.empty((indices.size, dim))
        rem = indices.copy()
        for d in range(dim - 1, -1, -1):
            rem, local = np.divmod(rem, samples_per_dim)
            xs[:, d] = axes[d][local]
        pre, post, _ = forward_batch(net, xs)
        if pre_min is None:
            pre_min = [p.min(axis=0) for p in pre]
            pre_max = [p.max(axis=0) for p in pre]
            post_min = [p.min(axis=0) for p in post]
            post_max = [p.max(axis=0) for p in post]
        else:
            for i, p in enumerate(pre):
                pre_min[i] = np.minimum(pre_min[i], p.min(axis=0))
                pre_max[i] = np.maximum(pre_max[i], p.max(axis=0))
            for i, p in enumerate(post):
                post_min[i] = np.minimum(post_min[i], p.min(axis=0))
                post_max[i] = np.maximum(post_max[i], p.max(axis=0))
    return pre_min, pre_max, post_min, post_max
