"""CSV ingestion, ordinal encoding, train/test splitting and min-max scaling.

The student-performance files are semicolon-delimited with a header row.
Categorical columns get an alphabetical 0-based ordinal code, which for the
father's-job column gives ``other -> 2`` and ``teacher -> 4``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EncodingError, ParseError, SchemaError, ShapeError

DEFAULT_TARGET = "G3"
PERIOD_GRADES = ("G1", "G2")


@dataclass(frozen=True)
class RawTable:
    """Untyped column-oriented view of a CSV file."""

    columns: tuple[tuple[str, tuple[str, ...]], ...]
    row_count: int

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {', '.join(dupes)}")
        for name, values in self.columns:
            if len(values) != self.row_count:
                raise SchemaError(
                    f"column {name!r} has {len(values)} values, expected {self.row_count}"
                )

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.columns]

    def column(self, name: str) -> tuple[str, ...]:
        for col_name, values in self.columns:
            if col_name == name:
                return values
        raise SchemaError(f"no column named {name!r}")


@dataclass(frozen=True)
class EncodingSchema:
    ordinal_maps: Mapping[str, Mapping[str, int]]
    numeric_columns: frozenset[str]
    target_column: str = DEFAULT_TARGET
    # Feature order as it appears in the encoded matrix.
    feature_names: tuple[str, ...] = ()
    dropped_columns: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "ordinal_maps": {c: dict(m) for c, m in self.ordinal_maps.items()},
            "numeric_columns": sorted(self.numeric_columns),
            "target_column": self.target_column,
            "feature_names": list(self.feature_names),
            "dropped_columns": list(self.dropped_columns),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EncodingSchema":
        return cls(
            ordinal_maps={c: {k: int(v) for k, v in m.items()}
                          for c, m in data["ordinal_maps"].items()},
            numeric_columns=frozenset(data["numeric_columns"]),
            target_column=data["target_column"],
            feature_names=tuple(data["feature_names"]),
            dropped_columns=tuple(data.get("dropped_columns", ())),
        )


@dataclass(frozen=True)
class Scaler:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise ShapeError("scaler mins and maxs must be 1-D arrays of equal length")
        if np.any(self.mins > self.maxs):
            raise ValueError("scaler has min > max for some feature")

    @property
    def n_features(self) -> int:
        return self.mins.shape[0]

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Scaler":
        return cls(np.asarray(data["mins"], dtype=np.float64),
                   np.asarray(data["maxs"], dtype=np.float64))


@dataclass(frozen=True)
class NumericTable:
    features: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ShapeError("features must be a 2-D matrix")
        if self.target.shape != (self.features.shape[0],):
            raise ShapeError(
                f"target length {self.target.shape} does not match "
                f"{self.features.shape[0]} feature rows"
            )
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.target))):
            raise ValueError("table contains non-finite entries")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, rows: Sequence[int] | np.ndarray) -> "NumericTable":
        idx = np.asarray(rows, dtype=np.intp)
        return NumericTable(self.features[idx], self.target[idx], self.feature_names)

    def with_features(self, features: np.ndarray) -> "NumericTable":
        return NumericTable(features, self.target, self.feature_names)


def _detect_delimiter(header: str) -> str:
    return ";" if ";" in header else ","


def parse_table(csv_text: str) -> RawTable:
    """Parse CSV text into a :class:`RawTable`.

    The delimiter is taken from the header line: ``;`` if it occurs there,
    otherwise ``,``. Double-quoted fields are unquoted. Rows with a different
    field count than the header, or with empty cells, are rejected.
    """
    if not csv_text or not csv_text.strip():
        raise ParseError("empty input")
    header_line = csv_text.lstrip("﻿").splitlines()[0]
    delimiter = _detect_delimiter(header_line)
    reader = csv.reader(io.StringIO(csv_text.lstrip("﻿")), delimiter=delimiter)

    header: list[str] | None = None
    rows: list[list[str]] = []
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if header is None:
            header = [cell.strip() for cell in row]
            continue
        if len(row) != len(header):
            raise ParseError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        cells = [cell.strip() for cell in row]
        for name, cell in zip(header, cells):
            if cell == "":
                raise ParseError(f"line {line}: empty value in column {name!r}")
        rows.append(cells)

    if header is None:
        raise ParseError("no header line")
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise SchemaError(f"duplicate header names: {', '.join(dupes)}")
    columns = tuple(
        (name, tuple(r[j] for r in rows)) for j, name in enumerate(header)
    )
    return RawTable(columns=columns, row_count=len(rows))


def read_table(path) -> RawTable:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_table(fh.read())


def _is_numeric(values: Iterable[str]) -> bool:
    for v in values:
        try:
            x = float(v)
        except ValueError:
            return False
        if not math.isfinite(x):
            return False
    return True


def build_encoding_schema(
    raw: RawTable,
    target: str = DEFAULT_TARGET,
    drop_columns: Sequence[str] = (),
) -> EncodingSchema:
    """Fit an alphabetical ordinal code for every non-numeric column."""
    if target not in raw.names:
        raise SchemaError(f"target column {target!r} not found")
    if not _is_numeric(raw.column(target)):
        raise SchemaError(f"target column {target!r} is not numeric")
    for name in drop_columns:
        if name not in raw.names:
            raise SchemaError(f"cannot drop unknown column {name!r}")
        if name == target:
            raise SchemaError("the target column cannot be dropped")

    ordinal_maps: dict[str, dict[str, int]] = {}
    numeric: set[str] = set()
    features: list[str] = []
    for name, values in raw.columns:
        if name in drop_columns:
            continue
        if _is_numeric(values):
            numeric.add(name)
        else:
            ordinal_maps[name] = {cat: code for code, cat in enumerate(sorted(set(values)))}
        if name != target:
            features.append(name)
    return EncodingSchema(
        ordinal_maps=ordinal_maps,
        numeric_columns=frozenset(numeric),
        target_column=target,
        feature_names=tuple(features),
        dropped_columns=tuple(drop_columns),
    )


def encode(raw: RawTable, schema: EncodingSchema) -> NumericTable:
    """Apply ``schema`` to ``raw``; the target column is split out of the matrix."""
    n = raw.row_count
    features = np.empty((n, len(schema.feature_names)), dtype=np.float64)
    for j, name in enumerate(schema.feature_names):
        values = raw.column(name)
        if name in schema.ordinal_maps:
            codes = schema.ordinal_maps[name]
            for i, v in enumerate(values):
                try:
                    features[i, j] = codes[v]
                except KeyError:
                    raise EncodingError(
                        f"column {name!r}: unseen category {v!r}"
                    ) from None
        else:
            try:
                features[:, j] = [float(v) for v in values]
            except ValueError as exc:
                raise EncodingError(f"column {name!r}: {exc}") from None
    try:
        target = np.array([float(v) for v in raw.column(schema.target_column)])
    except ValueError as exc:
        raise EncodingError(f"target column {schema.target_column!r}: {exc}") from None
    return NumericTable(features, target, schema.feature_names)


def split_train_test(
    table: NumericTable, train_fraction: float = 0.7, seed: int = 0
) -> tuple[NumericTable, NumericTable]:
    """Seeded shuffle, then the first ``floor(train_fraction * n)`` rows train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = table.n_rows
    if n < 2:
        raise ValueError(f"cannot split a table with {n} row(s)")
    order = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(train_fraction * n)
    return table.take(order[:n_train]), table.take(order[n_train:])


def fit_minmax(train: NumericTable | np.ndarray) -> Scaler:
    X = train.features if isinstance(train, NumericTable) else np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("fit_minmax needs at least one row")
    return Scaler(X.min(axis=0).copy(), X.max(axis=0).copy())


def apply_minmax(scaler: Scaler, table: NumericTable | np.ndarray):
    """Map each feature through ``(x - min) / (max - min)``.

    Constant features map to 0. Values outside the fitted range are not
    clamped. Returns the same kind of object it was given.
    """
    X = table.features if isinstance(table, NumericTable) else np.asarray(table, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != scaler.n_features:
        raise ShapeError(
            f"scaler fitted on {scaler.n_features} features, got shape {X.shape}"
        )
    span = scaler.maxs - scaler.mins
    constant = span == 0
    safe = np.where(constant, 1.0, span)
    scaled = np.where(constant, 0.0, (X - scaler.mins) / safe)
    if isinstance(table, NumericTable):
        return table.with_features(scaled)
    return scaled
