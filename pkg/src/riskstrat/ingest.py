"""Loading, validation, imputation and encoding of coded cohort tables.

Raw values are kept in a float matrix with ``NaN`` marking a missing slot;
categorical features hold their integer survey codes as floats.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from riskstrat.errors import (
    AllMissingColumn,
    EmptyCohort,
    InputFileError,
    InvalidCode,
    MissingColumn,
    NonBinaryLabel,
    SchemaError,
    UnknownLevel,
    ZeroVarianceWarning,
)
from riskstrat.fileio import atomic_write

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
DEFAULT_LABEL = "RISK"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    valid_codes: tuple[int, ...] = ()
    missing_codes: tuple[int, ...] = ()
    minimum: float | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.kind == CATEGORICAL and not self.levels:
            raise ValueError(f"categorical feature {self.name} needs at least one level")

    @property
    def levels(self) -> tuple[int, ...]:
        """Valid codes that are real levels (missing codes excluded), ascending."""
        return tuple(sorted(c for c in self.valid_codes if c not in self.missing_codes))


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureSpec, ...]
    label_name: str = DEFAULT_LABEL

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        if self.label_name in names:
            raise ValueError("label name collides with a feature name")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def __len__(self):
        return len(self.features)

    def __getitem__(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def with_label(self, label_name: str) -> FeatureSchema:
        return FeatureSchema(self.features, label_name)

    def to_dict(self) -> dict:
        return {
            "label_name": self.label_name,
            "features": [
                {
                    "name": f.name,
                    "kind": f.kind,
                    "valid_codes": list(f.valid_codes),
                    "missing_codes": list(f.missing_codes),
                    "minimum": f.minimum,
                }
                for f in self.features
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> FeatureSchema:
        feats = tuple(
            FeatureSpec(
                d["name"], d["kind"], tuple(d["valid_codes"]), tuple(d["missing_codes"]), d.get("minimum")
            )
            for d in doc["features"]
        )
        return cls(feats, doc["label_name"])


def default_schema(label_name: str = DEFAULT_LABEL) -> FeatureSchema:
    """Age, income-to-poverty ratio, race/ethnicity, gender and medical history."""
    return FeatureSchema(
        (
            FeatureSpec("RIDAGEYR", CONTINUOUS),
            FeatureSpec("INDFMPIR", CONTINUOUS, minimum=0.0),
            FeatureSpec("RIDRETH1", CATEGORICAL, valid_codes=(1, 2, 3, 4, 5)),
            FeatureSpec("RIAGENDR", CATEGORICAL, valid_codes=(1, 2)),
            # 9 = "don't know"
            FeatureSpec("MCQ010", CATEGORICAL, valid_codes=(1, 2, 9), missing_codes=(9,)),
        ),
        label_name,
    )


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Cohort:
    """Per-child records: ``values`` is (n, M) with NaN for missing slots."""

    schema: FeatureSchema
    values: np.ndarray
    labels: np.ndarray
    fill_values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.schema):
            raise SchemaError("cohort values must have one column per schema feature")
        if self.values.shape[0] != self.labels.shape[0]:
            raise SchemaError("cohort values and labels differ in length")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise SchemaError("cohort labels must be 0/1")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def missing_counts(self) -> dict[str, int]:
        miss = np.isnan(self.values).sum(axis=0)
        return {name: int(c) for name, c in zip(self.schema.names, miss)}

    def record(self, i: int) -> dict[str, float]:
        return dict(zip(self.schema.names, self.values[i].tolist()))


def make_cohort(schema, values, labels, fill_values=None) -> Cohort:
    values = _frozen(np.array(values, dtype=np.float64, copy=True))
    labels = _frozen(np.array(labels, dtype=np.int8, copy=True))
    return Cohort(schema, values, labels, dict(fill_values or {}))


def _parse_number(text):
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _parse_label(text, row):
    v = _parse_number(text.strip())
    if v is None or v not in (0.0, 1.0):
        raise NonBinaryLabel(row, text)
    return int(v)


def _parse_cell(spec: FeatureSpec, text: str, row: int) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    v = _parse_number(text)
    if v is None:
        raise InvalidCode(spec.name, row, text)
    if spec.kind == CATEGORICAL:
        if not v.is_integer():
            raise InvalidCode(spec.name, row, text)
        code = int(v)
        if code in spec.missing_codes:
            return math.nan
        if code not in spec.valid_codes:
            raise InvalidCode(spec.name, row, code)
        return float(code)
    if v in spec.missing_codes:
        return math.nan
    if spec.minimum is not None and v < spec.minimum:
        raise InvalidCode(spec.name, row, text)
    return v


def load_cohort(path, schema: FeatureSchema | None = None) -> Cohort:
    """Read a comma-delimited table with a header row into a validated cohort.

    Columns are matched by header name in any order; extra columns are ignored.
    Data rows are numbered from 1 in error messages.
    """
    schema = schema or default_schema()
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise InputFileError(f"file not found: {path}") from None
    except OSError as exc:
        raise InputFileError(f"cannot read {path}: {exc}") from None
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise EmptyCohort("file is empty")
        header = [h.strip().lstrip("﻿") for h in header]
        positions = {}
        for name in (*schema.names, schema.label_name):
            if name not in header:
                raise MissingColumn(name)
            positions[name] = header.index(name)
        values, labels = [], []
        for row_no, cells in enumerate(reader, start=1):
            if not any(c.strip() for c in cells):
                continue
            if len(cells) < len(header):
                cells = cells + [""] * (len(header) - len(cells))
            labels.append(_parse_label(cells[positions[schema.label_name]], row_no))
            values.append([_parse_cell(spec, cells[positions[spec.name]], row_no) for spec in schema.features])
    if not values:
        raise EmptyCohort()
    return make_cohort(schema, values, labels)


def write_cohort(cohort: Cohort, path) -> None:
    """Write a cohort in the format ``load_cohort`` reads; missing slots are blank."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*cohort.schema.names, cohort.schema.label_name])
    for row, label in zip(cohort.values, cohort.labels):
        writer.writerow([_format_value(v) for v in row] + [int(label)])
    atomic_write(path, buf.getvalue())


def _format_value(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return ""
    if v.is_integer():
        return str(int(v))
    return repr(v)


def impute_missing(cohort: Cohort) -> Cohort:
    """Median fill for continuous features, modal code for categorical ones.

    Mode ties go to the lowest code.  The fills are recorded on the returned
    cohort (only for features that had missing slots).
    """
    if cohort.n == 0:
        raise EmptyCohort()
    values = np.array(cohort.values, copy=True)
    fills = dict(cohort.fill_values)
    for j, spec in enumerate(cohort.schema.features):
        col = values[:, j]
        miss = np.isnan(col)
        if not miss.any():
            continue
        observed = col[~miss]
        if observed.size == 0:
            raise AllMissingColumn(spec.name)
        if spec.kind == CONTINUOUS:
            fill = float(np.median(observed))
        else:
            counts = Counter(observed.tolist())
            fill = min(counts, key=lambda code: (-counts[code], code))
        col[miss] = fill
        fills[spec.name] = fill
    return make_cohort(cohort.schema, values, cohort.labels, fills)


# -- encoding -----------------------------------------------------------------

@dataclass(frozen=True)
class Column:
    source: str
    kind: str  # "standardized" or "indicator"
    level: int | None = None

    @property
    def name(self) -> str:
        return self.source if self.level is None else f"{self.source}={self.level}"


@dataclass(frozen=True)
class Recipe:
    """Everything needed to encode a raw record: z-score stats and reference levels."""

    schema: FeatureSchema
    scaling: Mapping[str, tuple[float, float]]
    reference: Mapping[str, int]

    @property
    def columns(self) -> tuple[Column, ...]:
        cols = []
        for spec in self.schema.features:
            if spec.kind == CONTINUOUS:
                cols.append(Column(spec.name, "standardized"))
            else:
                ref = self.reference[spec.name]
                cols.extend(Column(spec.name, "indicator", lvl) for lvl in spec.levels if lvl != ref)
        return tuple(cols)

    def groups(self) -> list[list[int]]:
        """Encoded column indices belonging to each schema feature, in schema order."""
        out = [[] for _ in self.schema.features]
        for k, col in enumerate(self.columns):
            out[self.schema.index(col.source)].append(k)
        return out

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "scaling": {k: [m, s] for k, (m, s) in self.scaling.items()},
            "reference": dict(self.reference),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> Recipe:
        return cls(
            FeatureSchema.from_dict(doc["schema"]),
            {k: (float(v[0]), float(v[1])) for k, v in doc["scaling"].items()},
            {k: int(v) for k, v in doc["reference"].items()},
        )


@dataclass(frozen=True)
class DesignMatrix:
    columns: tuple[Column, ...]
    values: np.ndarray
    labels: np.ndarray
    recipe: Recipe
    warnings: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def subset(self, rows) -> DesignMatrix:
        return DesignMatrix(
            self.columns,
            _frozen(self.values[rows]),
            _frozen(self.labels[rows]),
            self.recipe,
            self.warnings,
        )


def fit_recipe(cohort: Cohort) -> tuple[Recipe, tuple[str, ...]]:
    scaling, reference, notes = {}, {}, []
    for j, spec in enumerate(cohort.schema.features):
        col = cohort.values[:, j]
        if spec.kind == CONTINUOUS:
            mean = float(np.mean(col))
            sd = float(np.std(col, ddof=1)) if col.size > 1 else 0.0
            if not sd > 0:
                sd = 0.0
                msg = f"ZeroVariance({spec.name}): constant column encoded as zeros"
                warnings.warn(msg, ZeroVarianceWarning, stacklevel=3)
                notes.append(msg)
            scaling[spec.name] = (mean, sd)
        else:
            reference[spec.name] = spec.levels[0]
    return Recipe(cohort.schema, scaling, reference), tuple(notes)


def encode_matrix(recipe: Recipe, raw) -> np.ndarray:
    """Encode a (k, M) raw matrix row-wise.  ``apply_recipe`` and ``encode`` both go through here."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != len(recipe.schema):
        raise SchemaError(f"expected raw rows with {len(recipe.schema)} features")
    if np.isnan(raw).any():
        raise SchemaError("cannot encode missing values; impute first")
    blocks = []
    for j, spec in enumerate(recipe.schema.features):
        col = raw[:, j]
        if spec.kind == CONTINUOUS:
            mean, sd = recipe.scaling[spec.name]
            blocks.append(((col - mean) / sd if sd > 0 else np.zeros_like(col))[:, None])
            continue
        levels = spec.levels
        known = np.isin(col, levels)
        if not known.all():
            raise UnknownLevel(spec.name, _as_code(col[~known][0]))
        ref = recipe.reference[spec.name]
        blocks.append(np.stack([(col == lvl).astype(np.float64) for lvl in levels if lvl != ref], axis=1)
                      if len(levels) > 1 else np.zeros((col.size, 0)))
    return np.concatenate(blocks, axis=1) if blocks else np.zeros((raw.shape[0], 0))


def _as_code(v):
    return int(v) if float(v).is_integer() else v


def encode(cohort: Cohort) -> DesignMatrix:
    """Standardize continuous features and one-hot the categorical ones.

    Each categorical feature drops its lowest code as the reference level.
    A constant continuous column emits all zeros and a ``ZeroVarianceWarning``.
    """
    if np.isnan(cohort.values).any():
        raise SchemaError("cohort has missing slots; impute before encoding")
    recipe, notes = fit_recipe(cohort)
    values = encode_matrix(recipe, cohort.values)
    return DesignMatrix(recipe.columns, _frozen(values), _frozen(np.array(cohort.labels)), recipe, notes)


def raw_row(schema: FeatureSchema, record) -> np.ndarray:
    """Coerce a mapping (by feature name) or sequence (schema order) into a raw row."""
    if isinstance(record, Mapping):
        try:
            return np.array([float(record[name]) for name in schema.names])
        except KeyError as exc:
            raise MissingColumn(exc.args[0]) from None
    row = np.asarray(record, dtype=np.float64).reshape(-1)
    if row.shape[0] != len(schema):
        raise SchemaError(f"record has {row.shape[0]} values, schema has {len(schema)} features")
    return row


def apply_recipe(recipe: Recipe, record: Mapping | Sequence[float]) -> np.ndarray:
    return encode_matrix(recipe, raw_row(recipe.schema, record)[None, :])[0]
