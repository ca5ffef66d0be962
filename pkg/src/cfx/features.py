"""Heterogeneous tabular feature space: encodings, distances, validity checks.

Points live in an encoded vector space: real/integer/binary features occupy
one column each (raw units), ordinal features a thermometer block of k
binary columns (level L encodes as L ones then zeros, L in 1..k), and
categorical features a one-hot block of k columns. All distances are range
normalized so each per-feature distance lies in [0, 1].
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InputShapeError, PlausibilityError, SchemaError

SCHEMA_FORMAT_VERSION = 1

# A feature counts as changed (for the L0 norm and fixed-feature checks)
# when its normalized per-feature distance exceeds this threshold.
CHANGE_TOLERANCE = 1e-6

_BINARY_TOL = 1e-6


class FeatureKind(Enum):
    REAL = "real"
    INTEGER = "integer"
    BINARY = "binary"
    ORDINAL = "ordinal"
    CATEGORICAL = "categorical"


class Actionability(Enum):
    FREE = "free"
    FIXED = "fixed"
    INCREASE_ONLY = "increase_only"
    DECREASE_ONLY = "decrease_only"


class Norm(Enum):
    L0 = "l0"
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


@dataclass(frozen=True)
class FeatureDescriptor:
    """One feature: kind, domain, and its per-instance change rule."""

    name: str
    kind: FeatureKind
    lb: float | None = None
    ub: float | None = None
    k: int | None = None
    actionability: Actionability = Actionability.FREE

    def __post_init__(self):
        if not self.name:
            raise SchemaError("feature name must be non-empty")
        if self.kind in (FeatureKind.REAL, FeatureKind.INTEGER):
            if self.lb is None or self.ub is None:
                raise SchemaError(f"{self.name}: {self.kind.value} needs lb and ub")
            if not (np.isfinite(self.lb) and np.isfinite(self.ub)):
                raise SchemaError(f"{self.name}: bounds must be finite")
            if not self.lb < self.ub:
                raise SchemaError(f"{self.name}: requires lb < ub")
            if self.kind is FeatureKind.INTEGER and (
                self.lb != int(self.lb) or self.ub != int(self.ub)
            ):
                raise SchemaError(f"{self.name}: integer bounds must be integral")
        elif self.kind in (FeatureKind.ORDINAL, FeatureKind.CATEGORICAL):
            if self.k is None or self.k < 2:
                raise SchemaError(f"{self.name}: needs k >= 2 levels/categories")
            if self.kind is FeatureKind.CATEGORICAL and self.actionability in (
                Actionability.INCREASE_ONLY,
                Actionability.DECREASE_ONLY,
            ):
                raise SchemaError(
                    f"{self.name}: categorical features have no order to increase along"
                )
        elif self.kind is FeatureKind.BINARY:
            pass
        else:  # pragma: no cover - enum is closed
            raise SchemaError(f"{self.name}: unknown kind")

    @property
    def encoded_width(self) -> int:
        if self.kind in (FeatureKind.ORDINAL, FeatureKind.CATEGORICAL):
            return int(self.k)
        return 1

    @property
    def range_width(self) -> float:
        """Denominator of the normalized per-feature distance."""
        if self.kind in (FeatureKind.REAL, FeatureKind.INTEGER):
            return float(self.ub - self.lb)
        if self.kind is FeatureKind.BINARY:
            return 1.0
        return float(self.k)  # ordinal: |level difference| / k; categorical unused


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature list defining the encoded input space."""

    features: tuple[FeatureDescriptor, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise SchemaError("schema needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def encoded_dim(self) -> int:
        return sum(f.encoded_width for f in self.features)

    def count(self, kind: FeatureKind) -> int:
        return sum(1 for f in self.features if f.kind is kind)

    def slices(self) -> list[slice]:
        """Column slice of each feature in encoding order."""
        out, start = [], 0
        for f in self.features:
            out.append(slice(start, start + f.encoded_width))
            start += f.encoded_width
        return out

    def feature_index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise SchemaError(f"unknown feature {name!r}")

    def input_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-encoded-column (lb, ub) arrays; block columns are 0/1."""
        lb, ub = [], []
        for f in self.features:
            if f.kind in (FeatureKind.REAL, FeatureKind.INTEGER):
                lb.append(f.lb)
                ub.append(f.ub)
            else:
                lb.extend([0.0] * f.encoded_width)
                ub.extend([1.0] * f.encoded_width)
        return np.asarray(lb, dtype=np.float64), np.asarray(ub, dtype=np.float64)


def encode(schema: FeatureSchema, record: dict) -> np.ndarray:
    """Encode a raw record (feature name -> value) into the point space."""
    unknown = set(record) - {f.name for f in schema.features}
    if unknown:
        raise SchemaError(f"unknown feature name(s): {sorted(unknown)}")
    out = np.zeros(schema.encoded_dim, dtype=np.float64)
    for f, sl in zip(schema.features, schema.slices()):
        if f.name not in record:
            raise SchemaError(f"record missing feature {f.name!r}")
        value = record[f.name]
        if f.kind in (FeatureKind.REAL, FeatureKind.INTEGER):
            v = float(value)
            if not f.lb <= v <= f.ub:
                raise SchemaError(f"{f.name}: value {v} outside [{f.lb}, {f.ub}]")
            if f.kind is FeatureKind.INTEGER and v != round(v):
                raise SchemaError(f"{f.name}: value {v} is not integral")
            out[sl] = v
        elif f.kind is FeatureKind.BINARY:
            v = float(value)
            if v not in (0.0, 1.0):
                raise SchemaError(f"{f.name}: binary value must be 0 or 1, got {v}")
            out[sl] = v
        elif f.kind is FeatureKind.ORDINAL:
            level = int(value)
            if not 1 <= level <= f.k:
                raise SchemaError(f"{f.name}: level {level} outside 1..{f.k}")
            block = np.zeros(f.k)
            block[:level] = 1.0
            out[sl] = block
        else:  # categorical
            cat = int(value)
            if not 1 <= cat <= f.k:
                raise SchemaError(f"{f.name}: category {cat} outside 1..{f.k}")
            block = np.zeros(f.k)
            block[cat - 1] = 1.0
            out[sl] = block
    return out


def decode(schema: FeatureSchema, point: np.ndarray) -> dict:
    """Invert encode; raises PlausibilityError on broken blocks."""
    point = _check_point(schema, point)
    violations = validate_plausibility(schema, point)
    if violations:
        raise PlausibilityError("; ".join(violations))
    record = {}
    for f, sl in zip(schema.features, schema.slices()):
        block = point[sl]
        if f.kind is FeatureKind.REAL:
            record[f.name] = float(block[0])
        elif f.kind is FeatureKind.INTEGER:
            record[f.name] = int(round(block[0]))
        elif f.kind is FeatureKind.BINARY:
            record[f.name] = int(round(block[0]))
        elif f.kind is FeatureKind.ORDINAL:
            record[f.name] = int(round(block.sum()))
        else:
            record[f.name] = int(np.argmax(block)) + 1
    return record


def _check_point(schema: FeatureSchema, point: np.ndarray) -> np.ndarray:
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (schema.encoded_dim,):
        raise InputShapeError(
            f"expected encoded point of shape ({schema.encoded_dim},), got {point.shape}"
        )
    return point


def validate_plausibility(schema: FeatureSchema, point: np.ndarray) -> list[str]:
    """Every violated encoding invariant, as human-readable strings."""
    point = _check_point(schema, point)
    out = []
    for f, sl in zip(schema.features, schema.slices()):
        block = point[sl]
        if f.kind in (FeatureKind.REAL, FeatureKind.INTEGER):
            v = block[0]
            if not f.lb - 1e-9 <= v <= f.ub + 1e-9:
                out.append(f"{f.name}: value {v} outside [{f.lb}, {f.ub}]")
            if f.kind is FeatureKind.INTEGER and abs(v - round(v)) > _BINARY_TOL:
                out.append(f"{f.name}: value {v} is not integral")
        elif f.kind is FeatureKind.BINARY:
            if min(abs(block[0]), abs(block[0] - 1.0)) > _BINARY_TOL:
                out.append(f"{f.name}: value {block[0]} is not 0/1")
        else:
            nonbinary = np.minimum(np.abs(block), np.abs(block - 1.0)) > _BINARY_TOL
            if np.any(nonbinary):
                out.append(f"{f.name}: block entries are not 0/1")
                continue
            bits = np.round(block)
            if f.kind is FeatureKind.ORDINAL:
                if np.any(np.diff(bits) > 0):
                    out.append(f"{f.name}: thermometer not non-increasing")
                elif bits.sum() < 1:
                    out.append(f"{f.name}: level 0 outside 1..{f.k}")
            else:
                if bits.sum() != 1:
                    out.append(f"{f.name}: one-hot block sums to {int(bits.sum())}")
    return out


def per_feature_distances(
    schema: FeatureSchema, x: np.ndarray, x_ref: np.ndarray
) -> np.ndarray:
    """Normalized distance contribution of each feature, each in [0, 1]."""
    x = _check_point(schema, x)
    x_ref = _check_point(schema, x_ref)
    out = np.zeros(schema.n_features)
    for i, (f, sl) in enumerate(zip(schema.features, schema.slices())):
        a, b = x[sl], x_ref[sl]
        if f.kind is FeatureKind.CATEGORICAL:
            # Same category iff the one-hot blocks coincide.
            out[i] = 0.0 if np.allclose(a, b, atol=_BINARY_TOL) else 1.0
        elif f.kind is FeatureKind.ORDINAL:
            out[i] = abs(a.sum() - b.sum()) / f.k
        else:
            out[i] = abs(a[0] - b[0]) / f.range_width
    return out


def distance(
    schema: FeatureSchema, x: np.ndarray, x_ref: np.ndarray, norm: Norm
) -> float:
    """Aggregate normalized distance in [0, 1] under the given norm."""
    d = per_feature_distances(schema, x, x_ref)
    return _aggregate(d, norm)


def _aggregate(d: np.ndarray, norm: Norm) -> float:
    if norm is Norm.L1:
        return float(d.mean())
    if norm is Norm.L0:
        return float((d > CHANGE_TOLERANCE).mean())
    if norm is Norm.L2:
        return float(np.sqrt((d**2).mean()))
    if norm is Norm.LINF:
        return float(d.max())
    raise ValueError(f"unknown norm {norm}")  # pragma: no cover


def distance_batch(
    schema: FeatureSchema, xs: np.ndarray, x_ref: np.ndarray, norm: Norm
) -> np.ndarray:
    """Distances of each row of ``xs`` to ``x_ref``; matches ``distance``."""
    xs = np.asarray(xs, dtype=np.float64)
    x_ref = _check_point(schema, x_ref)
    n = xs.shape[0]
    d = np.zeros((n, schema.n_features))
    for i, (f, sl) in enumerate(zip(schema.features, schema.slices())):
        blocks = xs[:, sl]
        ref = x_ref[sl]
        if f.kind is FeatureKind.CATEGORICAL:
            d[:, i] = (np.abs(blocks - ref) > _BINARY_TOL).any(axis=1)
        elif f.kind is FeatureKind.ORDINAL:
            d[:, i] = np.abs(blocks.sum(axis=1) - ref.sum()) / f.k
        else:
            d[:, i] = np.abs(blocks[:, 0] - ref[0]) / f.range_width
    if norm is Norm.L1:
        return d.mean(axis=1)
    if norm is Norm.L0:
        return (d > CHANGE_TOLERANCE).mean(axis=1)
    if norm is Norm.L2:
        return np.sqrt((d**2).mean(axis=1))
    return d.max(axis=1)


def _scalar_value(f: FeatureDescriptor, block: np.ndarray) -> float:
    """Order-comparable value of a feature (ordinal: its level)."""
    if f.kind is FeatureKind.ORDINAL:
        return float(block.sum())
    return float(block[0])


def validate_actionability(
    schema: FeatureSchema, x: np.ndarray, x_ref: np.ndarray
) -> list[str]:
    """Violations of the per-feature change rules of ``x`` relative to ``x_ref``."""
    x = _check_point(schema, x)
    x_ref = _check_point(schema, x_ref)
    d = per_feature_distances(schema, x, x_ref)
    out = []
    for i, (f, sl) in enumerate(zip(schema.features, schema.slices())):
        rule = f.actionability
        if rule is Actionability.FREE:
            continue
        if rule is Actionability.FIXED:
            if d[i] > CHANGE_TOLERANCE:
                out.append(f"{f.name}: fixed feature changed")
            continue
        delta = _scalar_value(f, x[sl]) - _scalar_value(f, x_ref[sl])
        if rule is Actionability.INCREASE_ONLY and delta < -1e-9:
            out.append(f"{f.name}: increase-only feature decreased")
        elif rule is Actionability.DECREASE_ONLY and delta > 1e-9:
            out.append(f"{f.name}: decrease-only feature increased")
    return out


# ---------------------------------------------------------------------------
# schema / dataset I/O

_KIND_ALIASES = {k.value: k for k in FeatureKind}
_ACTION_ALIASES = {a.value: a for a in Actionability}


def load_schema(text: str) -> FeatureSchema:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"parse error: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != SCHEMA_FORMAT_VERSION:
        raise SchemaError(
            f"unsupported schema format {doc.get('format') if isinstance(doc, dict) else doc!r}"
        )
    raw = doc.get("features")
    if not isinstance(raw, list) or not raw:
        raise SchemaError("schema must list features")
    feats = []
    for item in raw:
        if not isinstance(item, dict) or "name" not in item or "kind" not in item:
            raise SchemaError(f"bad feature entry: {item!r}")
        kind = _KIND_ALIASES.get(str(item["kind"]).lower())
        if kind is None:
            raise SchemaError(f"{item['name']}: unknown kind {item['kind']!r}")
        action = _ACTION_ALIASES.get(
            str(item.get("actionability", "free")).lower().replace("-", "_")
        )
        if action is None:
            raise SchemaError(
                f"{item['name']}: unknown actionability {item['actionability']!r}"
            )
        k = item.get("levels", item.get("categories", item.get("k")))
        feats.append(
            FeatureDescriptor(
                name=str(item["name"]),
                kind=kind,
                lb=item.get("lb"),
                ub=item.get("ub"),
                k=int(k) if k is not None else None,
                actionability=action,
            )
        )
    return FeatureSchema(tuple(feats))


def load_schema_file(path) -> FeatureSchema:
    with open(path, "r", encoding="utf-8") as fh:
        return load_schema(fh.read())


def serialize_schema(schema: FeatureSchema) -> str:
    items = []
    for f in schema.features:
        item: dict = {"name": f.name, "kind": f.kind.value}
        if f.kind in (FeatureKind.REAL, FeatureKind.INTEGER):
            item["lb"], item["ub"] = f.lb, f.ub
        elif f.kind is FeatureKind.ORDINAL:
            item["levels"] = f.k
        elif f.kind is FeatureKind.CATEGORICAL:
            item["categories"] = f.k
        if f.actionability is not Actionability.FREE:
            item["actionability"] = f.actionability.value
        items.append(item)
    return json.dumps({"format": SCHEMA_FORMAT_VERSION, "features": items}, indent=2)


def save_schema(schema: FeatureSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_schema(schema))


def read_dataset(path, schema: FeatureSchema) -> list[dict]:
    """CSV with a header row matching schema feature names, one record per row."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("dataset has no header row")
        missing = [f.name for f in schema.features if f.name not in reader.fieldnames]
        if missing:
            raise SchemaError(f"dataset header missing feature(s): {missing}")
        records = []
        for row in reader:
            record = {}
            for f in schema.features:
                raw = row[f.name]
                record[f.name] = float(raw) if f.kind is FeatureKind.REAL else int(float(raw))
            records.append(record)
    return records


def write_dataset(records: list[dict], schema: FeatureSchema, path) -> None:
    names = [f.name for f in schema.features]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for record in records:
            writer.writerow({n: record[n] for n in names})
