"""CSV ingestion, schema resolution, imputation, and dataset summaries.

Files are UTF-8 CSV with a mandatory header row. Every cell is either
numeric or the missing token (an empty cell by default). Missing feature
cells are carried as NaN plus an explicit mask until impute_median fills
them; missing treatment or outcome cells are rejected outright. All numeric
text written back out uses shortest round-trip decimal form, so a
load -> write -> load cycle reproduces values bit-exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import DataError


def format_value(v: float) -> str:
    """Shortest decimal text that parses back to exactly the same float."""
    return repr(float(v))


@dataclass
class SchemaConfig:
    """Column roles for a dataset.

    feature_columns empty means "all columns except treatment, outcome, and
    excluded ones, in header order". nuisance_feature_columns optionally
    names a separate feature set for the nuisance models; empty means the
    same columns as feature_columns.
    """

    treatment_column: str
    outcome_column: str
    feature_columns: List[str] = field(default_factory=list)
    excluded_columns: List[str] = field(default_factory=list)
    nuisance_feature_columns: List[str] = field(default_factory=list)
    missing_token: str = ""

    def __post_init__(self):
        if not self.treatment_column or not self.outcome_column:
            raise DataError("schema needs both a treatment and an outcome column")
        if self.treatment_column == self.outcome_column:
            raise DataError("treatment and outcome columns must differ")
        for name in self.feature_columns + self.nuisance_feature_columns:
            if name in (self.treatment_column, self.outcome_column):
                raise DataError(f"column {name!r} cannot be both a feature and a role column")


_SCHEMA_KEYS = {
    "treatment": "treatment_column",
    "outcome": "outcome_column",
    "features": "feature_columns",
    "nuisance_features": "nuisance_feature_columns",
    "exclude": "excluded_columns",
    "missing_token": "missing_token",
}

_LIST_KEYS = {"feature_columns", "nuisance_feature_columns", "excluded_columns"}


def parse_schema_file(path: str) -> SchemaConfig:
    """Read a plain-text schema: 'key = value' lines, '#' comments.

    Keys: treatment, outcome, features, nuisance_features, exclude,
    missing_token. List values are comma separated.
    """
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{lineno}: expected 'key = value'")
                key, _, val = line.partition("=")
                key = key.strip().lower()
                if key not in _SCHEMA_KEYS:
                    raise DataError(f"{path}:{lineno}: unknown schema key {key!r}")
                attr = _SCHEMA_KEYS[key]
                if attr in _LIST_KEYS:
                    values[attr] = [c.strip() for c in val.split(",") if c.strip()]
                else:
                    values[attr] = val.strip()
    except OSError as exc:
        raise DataError(f"cannot read schema file {path}: {exc}") from exc
    if "treatment_column" not in values or "outcome_column" not in values:
        raise DataError(f"schema file {path} must set treatment and outcome")
    return SchemaConfig(**values)


@dataclass
class Dataset:
    """A resolved dataset: features, treatment, outcome, and missingness.

    x is (n, p) float64 with NaN at missing cells until imputation;
    missing_mask marks the originally missing cells and survives imputation.
    """

    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    feature_names: List[str]
    missing_mask: np.ndarray
    treatment_name: str = "w"
    outcome_name: str = "y"
    nuisance_feature_idx: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def treatment_is_binary(self) -> bool:
        vals = np.unique(self.w)
        return bool(np.all((vals == 0.0) | (vals == 1.0)))

    def validate(self) -> None:
        n = self.x.shape[0]
        if self.w.shape != (n,) or self.y.shape != (n,):
            raise DataError("treatment/outcome length does not match features")
        if self.missing_mask.shape != self.x.shape:
            raise DataError("missing mask shape does not match features")
        if len(self.feature_names) != self.x.shape[1]:
            raise DataError("feature name count does not match columns")
        if not np.all(np.isfinite(self.w)) or not np.all(np.isfinite(self.y)):
            raise DataError("treatment and outcome must be finite")
        bad = ~np.isfinite(self.x) & ~self.missing_mask
        if bad.any():
            raise DataError("features contain non-finite values outside the missing mask")


def _parse_cell(text: str, missing_token: str, lineno: int, colname: str):
    cell = text.strip()
    if cell == missing_token:
        return None
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"row {lineno}, column {colname!r}: "
                        f"cannot parse {text!r} as a number") from None
    if not np.isfinite(v):
        raise DataError(f"row {lineno}, column {colname!r}: non-finite value {text!r}")
    return v


def load_csv(path: str, schema: SchemaConfig) -> Dataset:
    """Load a CSV against a schema.

    Feature order follows the header. Missing cells are only legal in
    feature columns. Raises DataError on structural problems: no header,
    ragged rows, unknown schema columns, duplicate header names, or
    unparseable cells (reported with row and column).
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: file is empty, expected a header row") from None
            header = [h.strip() for h in header]
            rows = [row for row in reader]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"{path}: duplicate column names {dupes}")
    col_idx = {name: i for i, name in enumerate(header)}

    for name in ([schema.treatment_column, schema.outcome_column]
                 + schema.feature_columns + schema.excluded_columns
                 + schema.nuisance_feature_columns):
        if name not in col_idx:
            raise DataError(f"{path}: schema names column {name!r} "
                            f"not present in header {header}")

    reserved = {schema.treatment_column, schema.outcome_column, *schema.excluded_columns}
    if schema.feature_columns:
        feature_names = list(schema.feature_columns)
    else:
        feature_names = [h for h in header if h not in reserved]
    if not feature_names:
        raise DataError(f"{path}: no feature columns remain after exclusions")

    n, width = len(rows), len(header)
    if n == 0:
        raise DataError(f"{path}: no data rows")
    x = np.empty((n, len(feature_names)), dtype=np.float64)
    mask = np.zeros((n, len(feature_names)), dtype=bool)
    w = np.empty(n, dtype=np.float64)
    y = np.empty(n, dtype=np.float64)
    f_idx = [col_idx[name] for name in feature_names]
    w_idx = col_idx[schema.treatment_column]
    y_idx = col_idx[schema.outcome_column]
    token = schema.missing_token

    for r, row in enumerate(rows):
        lineno = r + 2  # header is line 1
        if len(row) != width:
            raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {width}")
        v = _parse_cell(row[w_idx], token, lineno, schema.treatment_column)
        if v is None:
            raise DataError(f"{path}: row {lineno}: treatment value is missing")
        w[r] = v
        v = _parse_cell(row[y_idx], token, lineno, schema.outcome_column)
        if v is None:
            raise DataError(f"{path}: row {lineno}: outcome value is missing")
        y[r] = v
        for c, ci in enumerate(f_idx):
            v = _parse_cell(row[ci], token, lineno, feature_names[c])
            if v is None:
                x[r, c] = np.nan
                mask[r, c] = True
            else:
                x[r, c] = v

    nuisance_idx = None
    if schema.nuisance_feature_columns:
        pos = {name: i for i, name in enumerate(feature_names)}
        missing = [c for c in schema.nuisance_feature_columns if c not in pos]
        if missing:
            raise DataError(f"{path}: nuisance features {missing} are not load features")
        nuisance_idx = np.array([pos[c] for c in schema.nuisance_feature_columns],
                                dtype=np.int64)

    d = Dataset(x=x, w=w, y=y, feature_names=feature_names, missing_mask=mask,
                treatment_name=schema.treatment_column,
                outcome_name=schema.outcome_column,
                nuisance_feature_idx=nuisance_idx)
    d.validate()
    return d


def write_csv(d: Dataset, path: str, missing_token: str = "") -> None:
    """Write a dataset back out; originally missing cells emit the token."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(d.feature_names) + [d.treatment_name, d.outcome_name])
        for r in range(d.n):
            row = []
            for c in range(d.p):
                if d.missing_mask[r, c] and not np.isfinite(d.x[r, c]):
                    row.append(missing_token)
                else:
                    row.append(format_value(d.x[r, c]))
            row.append(format_value(d.w[r]))
            row.append(format_value(d.y[r]))
            writer.writerow(row)


def impute_median(d: Dataset) -> Dataset:
    """Fill masked feature cells with the column median of observed values.

    The median of an even count is the mean of the two central order
    statistics. A column with no observed values is an error. Imputation is
    idempotent: observed cells are untouched and the mask is preserved, so a
    second pass recomputes identical medians.
    """
    x = d.x.copy()
    for c in range(d.p):
        miss = d.missing_mask[:, c]
        if not miss.any():
            continue
        observed = x[~miss, c]
        if observed.size == 0:
            raise DataError(f"feature column {d.feature_names[c]!r} has no observed "
                            "values to impute from")
        x[miss, c] = np.median(observed)
    out = replace(d, x=x, missing_mask=d.missing_mask.copy())
    out.validate()
    return out


@dataclass
class ColumnSummary:
    role: str
    name: str
    count: int
    missing_fraction: float
    minimum: float
    median: float
    maximum: float


@dataclass
class DatasetSummary:
    columns: List[ColumnSummary]
    n: int
    treatment_is_binary: bool

    def to_text(self) -> str:
        lines = [f"rows: {self.n}",
                 f"treatment type: {'binary' if self.treatment_is_binary else 'continuous'}",
                 f"{'role':<10}{'column':<24}{'count':>8}{'missing':>10}"
                 f"{'min':>14}{'median':>14}{'max':>14}"]
        for c in self.columns:
            lines.append(f"{c.role:<10}{c.name:<24}{c.count:>8}"
                         f"{c.missing_fraction:>10.4f}{c.minimum:>14.6g}"
                         f"{c.median:>14.6g}{c.maximum:>14.6g}")
        return "\n".join(lines)


def _column_summary(role: str, name: str, values: np.ndarray,
                    miss: np.ndarray) -> ColumnSummary:
    observed = values[~miss]
    if observed.size == 0:
        return ColumnSummary(role, name, 0, 1.0, float("nan"), float("nan"), float("nan"))
    return ColumnSummary(role=role, name=name, count=int(observed.size),
                         missing_fraction=float(miss.mean()),
                         minimum=float(observed.min()),
                         median=float(np.median(observed)),
                         maximum=float(observed.max()))


def summarize(d: Dataset) -> DatasetSummary:
    """Per-column counts, missingness, and order statistics."""
    none = np.zeros(d.n, dtype=bool)
    cols = [_column_summary("feature", d.feature_names[c], d.x[:, c], d.missing_mask[:, c])
            for c in range(d.p)]
    cols.append(_column_summary("treatment", d.treatment_name, d.w, none))
    cols.append(_column_summary("outcome", d.outcome_name, d.y, none))
    return DatasetSummary(columns=cols, n=d.n, treatment_is_binary=d.treatment_is_binary)
