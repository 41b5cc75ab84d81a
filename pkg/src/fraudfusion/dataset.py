"""Labeled applicant data with feature-group provenance.

A :class:`LabeledDataset` is either *raw* (one column per schema column,
categorical values kept as strings) or *encoded* (float matrix, one-hot
indicators for categoricals, ``NaN`` for missing). Scenario views are
column subsets of either form.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .errors import ConfigError, DataError, SchemaError

logger = logging.getLogger(__name__)


class FeatureGroup(str, Enum):
    SUPER_APP = "SuperApp"
    MOBILE = "Mobile"
    BUREAU = "Bureau"

    @classmethod
    def parse(cls, value: str | FeatureGroup) -> FeatureGroup:
        if isinstance(value, FeatureGroup):
            return value
        for g in cls:
            if value in (g.value, g.name):
                return g
        raise SchemaError(f"unknown feature group {value!r}")


@dataclass(frozen=True)
class Column:
    """One raw schema column. ``categories`` is None for numeric columns."""

    name: str
    group: FeatureGroup
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.categories is not None:
            if len(self.categories) == 0:
                raise SchemaError(f"categorical column {self.name!r} declares no categories")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"duplicate categories in column {self.name!r}")

    @property
    def is_categorical(self) -> bool:
        return self.categories is not None

    @property
    def kind(self) -> str:
        return "categorical" if self.is_categorical else "numeric"

    @property
    def width(self) -> int:
        """Number of encoded columns this column expands to."""
        return len(self.categories) if self.categories is not None else 1


@dataclass(frozen=True)
class EncodedColumn:
    name: str
    group: FeatureGroup
    source: str


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[Column, ...]
    label_column: str = "is_fraud"
    order_column: str = "application_order"

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        seen = set()
        for n in names:
            if n in seen:
                raise SchemaError(f"duplicate column name {n!r}")
            seen.add(n)
        for reserved in (self.label_column, self.order_column):
            if reserved in seen:
                raise SchemaError(f"feature column clashes with reserved column {reserved!r}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def encoded_columns(self) -> tuple[EncodedColumn, ...]:
        out = []
        for c in self.columns:
            if c.is_categorical:
                out.extend(EncodedColumn(f"{c.name}={v}", c.group, c.name) for v in c.categories)
            else:
                out.append(EncodedColumn(c.name, c.group, c.name))
        return tuple(out)

    def raw_counts(self) -> dict[FeatureGroup, int]:
        counts = {g: 0 for g in FeatureGroup}
        for c in self.columns:
            counts[c.group] += 1
        return counts

    def subset(self, groups: Iterable[FeatureGroup]) -> FeatureSchema:
        groups = set(groups)
        return FeatureSchema(
            tuple(c for c in self.columns if c.group in groups),
            self.label_column,
            self.order_column,
        )

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            d = {"name": c.name, "group": c.group.value, "kind": c.kind}
            if c.is_categorical:
                d["categories"] = list(c.categories)
            cols.append(d)
        return {
            "label_column": self.label_column,
            "order_column": self.order_column,
            "columns": cols,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeatureSchema:
        try:
            raw_cols = d["columns"]
        except (KeyError, TypeError):
            raise SchemaError("schema must define a 'columns' list") from None
        cols = []
        for entry in raw_cols:
            kind = entry.get("kind", "numeric")
            if kind == "numeric":
                cats = None
            elif kind == "categorical":
                cats = tuple(str(v) for v in entry.get("categories") or ())
            else:
                raise SchemaError(f"column {entry.get('name')!r}: unknown kind {kind!r}")
            cols.append(Column(str(entry["name"]), FeatureGroup.parse(entry["group"]), cats))
        return cls(
            tuple(cols),
            d.get("label_column", "is_fraud"),
            d.get("order_column", "application_order"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> FeatureSchema:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except FileNotFoundError:
            raise SchemaError(f"schema file not found: {path}") from None
        return cls.from_dict(yaml.safe_load(text))


def fingerprint(columns: Sequence[EncodedColumn]) -> str:
    """Stable hash of encoded column names and groups."""
    payload = json.dumps([[c.name, c.group.value] for c in columns], separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    order: np.ndarray
    columns: tuple[EncodedColumn, ...]
    encoded: bool = False
    _fp: str = field(default="", repr=False)

    def __post_init__(self):
        n = len(self.y)
        if self.X.shape[0] != n or len(self.order) != n:
            raise DataError(
                f"row count mismatch: X has {self.X.shape[0]}, labels {n}, order {len(self.order)}"
            )
        if self.X.ndim != 2 or self.X.shape[1] != len(self.columns):
            raise DataError("matrix width does not match column list")
        if n and not np.isin(self.y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if n > 1 and not (np.diff(self.order) > 0).all():
            raise DataError("order index must be strictly increasing")
        for arr in (self.X, self.y, self.order):
            arr.setflags(write=False)
        object.__setattr__(self, "_fp", fingerprint(self.columns))

    @property
    def n_rows(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return len(self.columns)

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def groups(self) -> list[FeatureGroup]:
        return [c.group for c in self.columns]

    @property
    def fraud_rate(self) -> float:
        return float(self.y.mean()) if self.n_rows else float("nan")

    @property
    def schema_fingerprint(self) -> str:
        return self._fp

    def take(self, idx: np.ndarray) -> LabeledDataset:
        return LabeledDataset(
            self.schema, self.X[idx], self.y[idx], self.order[idx], self.columns, self.encoded
        )


def from_arrays(
    schema: FeatureSchema, X, y, order=None, encoded: bool | None = None
) -> LabeledDataset:
    """Build a dataset from in-memory arrays.

    ``encoded`` defaults to True when the schema is all-numeric or the matrix
    width equals the encoded width, which covers the usual test fixtures.
    """
    y = np.asarray(y, dtype=np.int8)
    order = np.arange(len(y), dtype=np.int64) if order is None else np.asarray(order, dtype=np.int64)
    if encoded is None:
        encoded = np.asarray(X).dtype != object
    if encoded:
        X = np.array(X, dtype=np.float64, ndmin=2)
        cols = schema.encoded_columns()
    else:
        X = np.array(X, dtype=object, ndmin=2)
        cols = tuple(EncodedColumn(c.name, c.group, c.name) for c in schema.columns)
    return LabeledDataset(schema, X, y, order, cols, bool(encoded))


def _parse_label(value: str, row_no: int) -> int:
    v = value.strip()
    if v in ("0", "1"):
        return int(v)
    try:
        f = float(v)
    except ValueError:
        f = math.nan
    if f in (0.0, 1.0):
        return int(f)
    raise DataError(f"row {row_no}: label value {value!r} is not binary")


def ingest_csv(
    path: str | Path,
    schema: FeatureSchema,
    label_column: str | None = None,
    order_column: str | None = None,
) -> LabeledDataset:
    """Read a comma-separated file into a raw (un-encoded) dataset sorted by order."""
    label_column = label_column or schema.label_column
    order_column = order_column or schema.order_column
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header row") from None
        pos = {name: i for i, name in enumerate(header)}
        for needed in [*schema.names, label_column, order_column]:
            if needed not in pos:
                raise SchemaError(f"missing column {needed!r}")
        feat_idx = [pos[n] for n in schema.names]
        li, oi = pos[label_column], pos[order_column]
        cat_flags = [c.is_categorical for c in schema.columns]

        rows, labels, order = [], [], []
        for row_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"row {row_no}: expected {len(header)} fields, got {len(rec)}")
            values = []
            for j, (ci, is_cat) in enumerate(zip(feat_idx, cat_flags)):
                cell = rec[ci]
                if cell == "":
                    values.append(None if is_cat else math.nan)
                elif is_cat:
                    values.append(cell)
                else:
                    try:
                        values.append(float(cell))
                    except ValueError:
                        raise DataError(
                            f"row {row_no}, column {schema.names[j]!r}: cannot parse {cell!r} as a number"
                        ) from None
            rows.append(values)
            labels.append(_parse_label(rec[li], row_no))
            try:
                order.append(int(rec[oi]))
            except ValueError:
                raise DataError(
                    f"row {row_no}, column {order_column!r}: cannot parse {rec[oi]!r} as an integer"
                ) from None

    X = np.empty((len(rows), len(schema.columns)), dtype=object)
    for i, values in enumerate(rows):
        X[i, :] = values
    y = np.asarray(labels, dtype=np.int8)
    order_arr = np.asarray(order, dtype=np.int64)
    perm = np.argsort(order_arr, kind="stable")
    X, y, order_arr = X[perm], y[perm], order_arr[perm]
    if len(order_arr) > 1 and (np.diff(order_arr) == 0).any():
        logger.warning("%s: duplicate %s values; ties broken by file order and renumbered", path, order_column)
        order_arr = np.arange(len(order_arr), dtype=np.int64)
    cols = tuple(EncodedColumn(c.name, c.group, c.name) for c in schema.columns)
    return LabeledDataset(schema, X, y, order_arr, cols, encoded=False)


def _format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    f = float(v)
    return "" if math.isnan(f) else repr(f)


def write_csv(dataset: LabeledDataset, path: str | Path) -> None:
    """Write a raw dataset in the format :func:`ingest_csv` reads back exactly."""
    if dataset.encoded:
        raise ConfigError("write_csv expects a raw dataset; encoded matrices are not written")
    schema = dataset.schema
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([schema.order_column, *schema.names, schema.label_column])
        for i in range(dataset.n_rows):
            w.writerow(
                [str(int(dataset.order[i])), *(_format_cell(v) for v in dataset.X[i]), str(int(dataset.y[i]))]
            )


def encode(dataset: LabeledDataset) -> LabeledDataset:
    """One-hot encode categoricals; numerics pass through. Missing stays NaN."""
    if dataset.encoded:
        raise ConfigError("dataset is already encoded")
    schema = dataset.schema
    n = dataset.n_rows
    blocks = []
    for j, col in enumerate(schema.columns):
        raw = dataset.X[:, j]
        if not col.is_categorical:
            blocks.append(np.array([math.nan if v is None else v for v in raw], dtype=np.float64)[:, None])
            continue
        lookup = {v: k for k, v in enumerate(col.categories)}
        block = np.zeros((n, len(col.categories)), dtype=np.float64)
        for i, v in enumerate(raw):
            if v is None or (isinstance(v, float) and math.isnan(v)):
                block[i, :] = math.nan
                continue
            k = lookup.get(v)
            if k is None:
                raise DataError(f"unseen category {v!r} in column {col.name!r}")
            block[i, k] = 1.0
        blocks.append(block)
    X = np.hstack(blocks) if blocks else np.empty((n, 0))
    return LabeledDataset(schema, X, dataset.y.copy(), dataset.order.copy(), schema.encoded_columns(), True)


def time_split(
    dataset: LabeledDataset,
    train_fraction: float | None = None,
    train_size: int | None = None,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Chronological split: the first rows train, the rest test. No shuffling."""
    n = dataset.n_rows
    if (train_fraction is None) == (train_size is None):
        raise ConfigError("give exactly one of train_fraction or train_size")
    if train_size is None:
        if not 0.0 < train_fraction < 1.0:
            raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
        train_size = math.floor(train_fraction * n)
    if not 0 < train_size < n:
        raise ConfigError(f"split leaves an empty side: train_size={train_size}, rows={n}")
    idx = np.arange(n)
    return dataset.take(idx[:train_size]), dataset.take(idx[train_size:])


@dataclass(frozen=True)
class Scenario:
    id: str
    groups: frozenset

    def __str__(self):
        return self.id

    @classmethod
    def parse(cls, value: str | Scenario) -> Scenario:
        if isinstance(value, Scenario):
            return value
        key = value.strip().upper().replace(" ", "")
        if key not in SCENARIOS:
            raise ConfigError(f"unknown scenario {value!r}; expected one of {', '.join(SCENARIOS)}")
        return SCENARIOS[key]


_G = FeatureGroup
# Display order of the six input combinations.
SCENARIOS: dict[str, Scenario] = {
    s.id: s
    for s in (
        Scenario("C", frozenset({_G.BUREAU})),
        Scenario("S", frozenset({_G.SUPER_APP})),
        Scenario("M", frozenset({_G.MOBILE})),
        Scenario("S+M", frozenset({_G.SUPER_APP, _G.MOBILE})),
        Scenario("S+C", frozenset({_G.SUPER_APP, _G.BUREAU})),
        Scenario("S+M+C", frozenset({_G.SUPER_APP, _G.MOBILE, _G.BUREAU})),
    )
}


def select_scenario(dataset: LabeledDataset, scenario: Scenario | str) -> LabeledDataset:
    """Column view holding only the scenario's feature groups, schema order kept."""
    scenario = Scenario.parse(scenario)
    keep = [j for j, c in enumerate(dataset.columns) if c.group in scenario.groups]
    if not keep:
        raise ConfigError(f"scenario {scenario.id} selects zero columns")
    return LabeledDataset(
        dataset.schema.subset(scenario.groups),
        dataset.X[:, keep],
        dataset.y,
        dataset.order,
        tuple(dataset.columns[j] for j in keep),
        dataset.encoded,
    )
