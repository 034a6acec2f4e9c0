"""Tabular data loading, dummy encoding, label normalization and splitting.

A dataset is parsed from CSV against a column schema, categoricals are
expanded to per-category indicators plus a missing flag, numeric gaps are
filled with the training median, and the result is a dense float matrix
whose columns are traceable back to their source columns.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .rng import STREAM_SPLIT_DATA, sub_rng

KIND_NUMERIC = "numeric"
KIND_CATEGORICAL = "categorical"
KIND_LABEL = "label"
_KINDS = (KIND_NUMERIC, KIND_CATEGORICAL, KIND_LABEL)

LABEL_CLASS = "class"
LABEL_REAL = "real"

# Cell values treated as absent. '?' covers the common UCI convention.
MISSING_TOKENS = frozenset({"", "?", "NA"})


@dataclass
class ColumnSchema:
    """One source column: its kind plus any fitted encoding state.

    ``categories`` (categorical or class label) and ``median`` (numeric)
    are learned from training data on the first load and reused verbatim
    for any later dataset encoded against the same schema.
    """

    name: str
    kind: str
    categories: list[str] | None = None
    median: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.categories is not None and len(set(self.categories)) != len(self.categories):
            raise ValueError(f"column {self.name!r}: duplicate categories")


@dataclass
class Dataset:
    """Encoded instances: an (n, d) float matrix plus label vector.

    ``feature_names`` names each encoded dimension ("gender=male"),
    ``feature_sources`` maps it back to the source column ("gender"), and
    ``binary_dims`` flags the dummy-indicator dimensions whose split
    threshold is pinned to 0.5.
    """

    x: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    feature_sources: list[str]
    binary_dims: np.ndarray
    label_kind: str
    label_names: list[str] | None = None
    label_bounds: tuple[float, float] | None = None
    schema: list[ColumnSchema] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ValueError("x must be a 2-d matrix")
        if len(self.y) != self.x.shape[0]:
            raise ValueError("y length does not match row count")
        if len(self.feature_names) != self.x.shape[1]:
            raise ValueError("feature_names length does not match column count")
        if self.label_kind not in (LABEL_CLASS, LABEL_REAL):
            raise ValueError(f"unknown label kind {self.label_kind!r}")
        self.binary_dims = np.asarray(self.binary_dims, dtype=bool)
        for j in np.flatnonzero(self.binary_dims):
            col = self.x[:, j]
            if not np.all((col == 0.0) | (col == 1.0)):
                raise ValueError(f"dummy dimension {self.feature_names[j]!r} has non-binary values")
        if self.label_kind == LABEL_REAL and self.label_bounds is not None and len(self.y):
            if self.y.min() < -1e-12 or self.y.max() > 1.0 + 1e-12:
                raise ValueError("normalized labels must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


def read_schema_file(path) -> tuple[str, list[ColumnSchema]]:
    """Parse a schema file: a `label_task,<class|real>` line then `name,kind` lines."""
    label_task = None
    columns = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row[0].strip() == "label_task":
                if len(row) != 2 or row[1].strip() not in (LABEL_CLASS, LABEL_REAL):
                    raise ValueError(f"schema line {lineno}: label_task must be 'class' or 'real'")
                label_task = row[1].strip()
                continue
            if len(row) != 2:
                raise ValueError(f"schema line {lineno}: expected 'name,kind'")
            columns.append(ColumnSchema(name=row[0].strip(), kind=row[1].strip()))
    if label_task is None:
        raise ValueError("schema file is missing the label_task line")
    if sum(c.kind == KIND_LABEL for c in columns) != 1:
        raise ValueError("schema must declare exactly one label column")
    return label_task, columns


def write_schema_file(path, label_task: str, schema: list[ColumnSchema]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label_task", label_task])
        for col in schema:
            writer.writerow([col.name, col.kind])


def load_csv(path, schema: list[ColumnSchema], label_task: str = LABEL_CLASS,
             strict: bool = False, allow_missing_labels: bool = False) -> Dataset:
    """Load and encode a CSV file against ``schema``.

    The header must match the schema column names in order. Categories and
    medians missing from the schema are learned from this file (training
    load); already-fitted schemas are applied as-is (test load).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        expected = [c.name for c in schema]
        if [h.strip() for h in header] != expected:
            raise ValueError(f"{path}: header {header!r} does not match schema columns {expected!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(schema):
                raise ValueError(f"{path}: line {lineno} has {len(row)} cells, expected {len(schema)}")
            rows.append(row)
    return encode_categoricals(rows, schema, label_task=label_task, strict=strict,
                               allow_missing_labels=allow_missing_labels)


def encoded_feature_names(schema: list[ColumnSchema]) -> tuple[list[str], list[str], list[bool]]:
    """Return (feature_names, feature_sources, binary flags) for a fitted schema."""
    names, sources, binary = [], [], []
    for col in schema:
        if col.kind == KIND_NUMERIC:
            names.append(col.name)
            sources.append(col.name)
            binary.append(False)
        elif col.kind == KIND_CATEGORICAL:
            for cat in col.categories or []:
                names.append(f"{col.name}={cat}")
                sources.append(col.name)
                binary.append(True)
            names.append(f"{col.name}=?")
            sources.append(col.name)
            binary.append(True)
    return names, sources, binary


def encode_categoricals(rows: list[list[str]], schema: list[ColumnSchema],
                        label_task: str = LABEL_CLASS, strict: bool = False,
                        allow_missing_labels: bool = False) -> Dataset:
    """Encode parsed string rows to a Dataset.

    Each categorical column with c categories becomes c+1 indicator
    dimensions (one per category, one for missing/unseen); numeric columns
    pass through with missing cells imputed by the fitted median.
    """
    label_cols = [i for i, c in enumerate(schema) if c.kind == KIND_LABEL]
    if len(label_cols) != 1:
        raise ValueError("schema must declare exactly one label column")
    label_idx = label_cols[0]
    if label_task not in (LABEL_CLASS, LABEL_REAL):
        raise ValueError(f"unknown label task {label_task!r}")

    fitted = [replace(c) for c in schema]
    n = len(rows)

    # Fit pass: learn category sets (first-seen order) and numeric medians.
    for j, col in enumerate(fitted):
        if col.kind == KIND_CATEGORICAL and col.categories is None:
            seen: list[str] = []
            for row in rows:
                v = row[j].strip()
                if v not in MISSING_TOKENS and v not in seen:
                    seen.append(v)
            if not seen:
                raise ValueError(f"column {col.name!r}: empty category set")
            col.categories = seen
        elif col.kind == KIND_NUMERIC and col.median is None:
            vals = []
            for i, row in enumerate(rows):
                v = row[j].strip()
                if v in MISSING_TOKENS:
                    continue
                vals.append(_parse_number(v, i + 1, col.name))
            col.median = float(np.median(vals)) if vals else 0.0
        elif col.kind == KIND_LABEL and label_task == LABEL_CLASS and col.categories is None:
            seen = []
            for row in rows:
                v = row[j].strip()
                if v in MISSING_TOKENS:
                    continue
                if v not in seen:
                    seen.append(v)
            col.categories = seen

    names, sources, binary = encoded_feature_names(fitted)
    d = len(names)
    x = np.zeros((n, d), dtype=np.float64)
    label_col = fitted[label_idx]
    if label_task == LABEL_CLASS:
        y = np.full(n, -1, dtype=np.int64)
        class_index = {c: i for i, c in enumerate(label_col.categories or [])}
    else:
        y = np.full(n, np.nan, dtype=np.float64)

    for i, row in enumerate(rows):
        k = 0
        for j, col in enumerate(fitted):
            v = row[j].strip()
            if col.kind == KIND_NUMERIC:
                if v in MISSING_TOKENS:
                    x[i, k] = col.median
                else:
                    x[i, k] = _parse_number(v, i + 1, col.name)
                k += 1
            elif col.kind == KIND_CATEGORICAL:
                cats = col.categories
                width = len(cats) + 1
                if v in MISSING_TOKENS:
                    x[i, k + width - 1] = 1.0
                elif v in cats:
                    x[i, k + cats.index(v)] = 1.0
                elif strict:
                    raise ValueError(f"row {i + 1}, column {col.name!r}: unknown category {v!r}")
                else:
                    x[i, k + width - 1] = 1.0
                k += width
            else:
                if v in MISSING_TOKENS:
                    if not allow_missing_labels:
                        raise ValueError(f"row {i + 1}: missing label value")
                elif label_task == LABEL_CLASS:
                    if v not in class_index:
                        raise ValueError(f"row {i + 1}: unknown class label {v!r}")
                    y[i] = class_index[v]
                else:
                    y[i] = _parse_number(v, i + 1, col.name)

    return Dataset(
        x=x,
        y=y,
        feature_names=names,
        feature_sources=sources,
        binary_dims=np.array(binary, dtype=bool),
        label_kind=label_task,
        label_names=list(label_col.categories) if label_task == LABEL_CLASS else None,
        schema=fitted,
    )


def _parse_number(value: str, row: int, column: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"row {row}, column {column!r}: cannot parse {value!r} as a number") from None


def minmax_normalize_labels(ds: Dataset) -> Dataset:
    """Rescale real labels to [0, 1], recording the bounds for inverse mapping."""
    if ds.label_kind != LABEL_REAL:
        raise ValueError("label normalization applies to real labels only")
    lo, hi = float(ds.y.min()), float(ds.y.max())
    if hi <= lo:
        raise ValueError("cannot normalize constant labels (max equals min)")
    y = (ds.y - lo) / (hi - lo)
    return replace(ds, y=y, label_bounds=(lo, hi))


def denormalize_labels(values: np.ndarray, bounds: tuple[float, float]) -> np.ndarray:
    lo, hi = bounds
    return values * (hi - lo) + lo


def subset(ds: Dataset, indices: np.ndarray) -> Dataset:
    """A new Dataset holding the given rows (metadata shared)."""
    indices = np.asarray(indices)
    return replace(ds, x=ds.x[indices], y=ds.y[indices])


def split_train_test(ds: Dataset, ratio: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint uniform split into ceil(n * ratio) train rows and the rest."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must be strictly between 0 and 1")
    if ds.n < 2:
        raise ValueError("need at least 2 instances to split")
    # small epsilon so float ratios like 2/3 do not overshoot the exact product
    n_train = int(math.ceil(ds.n * ratio - 1e-9))
    n_train = min(max(n_train, 1), ds.n - 1)
    perm = sub_rng(seed, STREAM_SPLIT_DATA).permutation(ds.n)
    return subset(ds, np.sort(perm[:n_train])), subset(ds, np.sort(perm[n_train:]))
