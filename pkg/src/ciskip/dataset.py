"""Tabular data model: feature schema, labeled rows, CSV I/O, splitting and
the Pearson correlation filter."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

KINDS = ("numeric", "boolean", "categorical-coded")


class DatasetError(ValueError):
    pass


class Label(IntEnum):
    BUILD = 0
    SKIP = 1


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str = "numeric"
    min: float = 0.0
    max: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DatasetError(f"unknown feature kind {self.kind!r} for {self.name}")
        if not self.min <= self.max:
            raise DatasetError(f"feature {self.name}: min {self.min} > max {self.max}")
        if self.kind == "boolean" and (self.min, self.max) != (0.0, 1.0):
            raise DatasetError(f"boolean feature {self.name} must span [0, 1]")

    @property
    def span(self) -> float:
        return self.max - self.min


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]

    def __post_init__(self):
        if not self.features:
            raise DatasetError("schema needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DatasetError(f"duplicate feature names in {names}")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def lows(self) -> np.ndarray:
        return np.array([f.min for f in self.features], dtype=np.float64)

    @property
    def highs(self) -> np.ndarray:
        return np.array([f.max for f in self.features], dtype=np.float64)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def select(self, names) -> "FeatureSchema":
        keep = set(names)
        return FeatureSchema(tuple(f for f in self.features if f.name in keep))

    def digest(self) -> str:
        """Hash of feature names and kinds.

        Ranges are left out on purpose: they are inferred per file, so a test
        split legitimately carries different min/max than its training split.
        """
        payload = json.dumps([[f.name, f.kind] for f in self.features])
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_json(self) -> list[dict]:
        return [{"name": f.name, "kind": f.kind, "min": f.min, "max": f.max} for f in self.features]

    @classmethod
    def from_json(cls, items) -> "FeatureSchema":
        return cls(tuple(Feature(d["name"], d.get("kind", "numeric"), float(d["min"]), float(d["max"]))
                         for d in items))

    @classmethod
    def infer(cls, names, X: np.ndarray, kinds=None) -> "FeatureSchema":
        kinds = kinds or {}
        feats = []
        for j, name in enumerate(names):
            kind = kinds.get(name, "numeric")
            if kind == "boolean":
                lo, hi = 0.0, 1.0
            elif len(X):
                lo, hi = float(X[:, j].min()), float(X[:, j].max())
            else:
                lo, hi = 0.0, 0.0
            feats.append(Feature(name, kind, lo, hi))
        return cls(tuple(feats))


@dataclass
class Dataset:
    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(-1, len(self.schema))
        self.y = np.asarray(self.y, dtype=np.int8).reshape(-1)
        if len(self.X) != len(self.y):
            raise DatasetError(f"{len(self.X)} feature rows but {len(self.y)} labels")
        if not np.all(np.isfinite(self.X)):
            raise DatasetError("non-finite feature value")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise DatasetError("labels must be 0 (build) or 1 (skip)")
        self.X.setflags(write=False)
        self.y.setflags(write=False)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return len(self.schema)

    @property
    def skip_fraction(self) -> float:
        return float(self.y.mean()) if len(self.y) else 0.0

    def class_counts(self) -> tuple[int, int]:
        """(skip, build) counts."""
        n_skip = int(self.y.sum())
        return n_skip, len(self.y) - n_skip

    def require_both_classes(self, what="dataset"):
        n_skip, n_build = self.class_counts()
        if n_skip == 0 or n_build == 0:
            raise DatasetError(f"{what} {self.provenance!r} must contain both classes "
                               f"(skip={n_skip}, build={n_build})")

    def subset(self, idx, provenance=None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.schema, self.X[idx], self.y[idx],
                       self.provenance if provenance is None else provenance)

    def with_columns(self, names) -> "Dataset":
        cols = [self.schema.index(n) for n in names]
        schema = FeatureSchema(tuple(self.schema.features[c] for c in cols))
        return Dataset(schema, self.X[:, cols], self.y, self.provenance)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.schema == other.schema and np.array_equal(self.X, other.X)
                and np.array_equal(self.y, other.y))


def load_csv(path, schema_path=None, provenance=None) -> Dataset:
    """Read a labeled CSV (``label`` column, 1 = skip, 0 = build).

    Without a schema sidecar every column is numeric with min/max taken from
    the data.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "label" not in header:
            raise DatasetError(f"{path}:1: no 'label' column in header")
        label_col = header.index("label")
        names = [h for i, h in enumerate(header) if i != label_col]
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            values = []
            for i, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(f"{path}:{lineno}: non-numeric cell {cell!r} "
                                       f"in column {header[i]!r}") from None
                if not math.isfinite(v):
                    raise DatasetError(f"{path}:{lineno}: non-finite cell {cell!r}")
                values.append(v)
            lab = values.pop(label_col)
            if lab not in (0.0, 1.0):
                raise DatasetError(f"{path}:{lineno}: unknown label value {row[label_col]!r}")
            rows.append(values)
            labels.append(int(lab))
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    X = np.array(rows, dtype=np.float64)
    if schema_path is not None:
        schema = read_schema(schema_path)
        if schema.names != names:
            raise DatasetError(f"{path}: header {names} does not match schema sidecar {schema.names}")
    else:
        schema = FeatureSchema.infer(names, X)
    return Dataset(schema, X, np.array(labels), provenance or path.stem)


def _fmt(v: float) -> str:
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


def write_csv(ds: Dataset, path, schema_path=None):
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.schema.names + ["label"])
        for xrow, lab in zip(ds.X, ds.y):
            w.writerow([_fmt(v) for v in xrow] + [int(lab)])
    if schema_path is not None:
        write_schema(ds.schema, schema_path)


def write_schema(schema: FeatureSchema, path):
    Path(path).write_text(json.dumps({"features": schema.to_json()}, indent=2) + "\n")


def read_schema(path) -> FeatureSchema:
    data = json.loads(Path(path).read_text())
    return FeatureSchema.from_json(data["features"] if isinstance(data, dict) else data)


def concat(datasets, provenance="") -> Dataset:
    names = datasets[0].schema.names
    for ds in datasets[1:]:
        if ds.schema.names != names:
            raise DatasetError(f"schema mismatch: {ds.provenance!r} has {ds.schema.names}, "
                               f"expected {names}")
    X = np.vstack([ds.X for ds in datasets])
    y = np.concatenate([ds.y for ds in datasets])
    kinds = {f.name: f.kind for f in datasets[0].schema.features}
    return Dataset(FeatureSchema.infer(names, X, kinds), X, y, provenance)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    test_idx = []
    for cls in (Label.SKIP, Label.BUILD):
        members = np.flatnonzero(ds.y == cls)
        if len(members) < 2:
            raise DatasetError(f"class {cls.name} has {len(members)} rows; need at least 2 to split")
        n_test = _round_half_up(len(members) * test_fraction)
        test_idx.append(rng.permutation(members)[:n_test])
    test_idx = np.sort(np.concatenate(test_idx))
    mask = np.zeros(len(ds), dtype=bool)
    mask[test_idx] = True
    return ds.subset(np.flatnonzero(~mask)), ds.subset(test_idx)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson r; 0 when either column is constant."""
    da, db = a - a.mean(), b - b.mean()
    den = math.sqrt(float(da @ da) * float(db @ db))
    if den == 0.0:
        return 0.0
    return float(da @ db) / den


def correlation_filter(ds: Dataset, threshold: float = 0.8) -> tuple[Dataset, list[str]]:
    """Drop the later feature of every pair with |r| >= threshold (schema order)."""
    if len(ds) < 2:
        raise DatasetError("correlation filter needs at least 2 rows")
    kept: list[int] = []
    dropped: list[str] = []
    for j in range(ds.n_features):
        col = ds.X[:, j]
        redundant = False
        for i in kept:
            other = ds.X[:, i]
            if np.array_equal(col, other) or abs(pearson(other, col)) >= threshold:
                redundant = True
                break
        if redundant:
            dropped.append(ds.schema.names[j])
        else:
            kept.append(j)
    return ds.with_columns([ds.schema.names[j] for j in kept]), dropped
