"""Policy datasets: loading, validation, pre-aggregation and time-splitting.

A :class:`Dataset` is a column store of exposure-weighted observations.
Covariates are kept per column (``str`` values for categorical columns,
``float64`` for numeric ones); exposure, response and the optional
frequency prediction are numpy arrays. Instances are immutable: every
operation returns a new dataset.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace as _dc_replace
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DataError,
    InsufficientExposure,
    InvalidRecord,
    MissingColumn,
    MixedPredictionPresence,
    ParseError,
    ZeroExposure,
)

CATEGORICAL = "categorical"
NUMERIC = "numeric"
_KIND_ALIASES = {"cat": CATEGORICAL, "categorical": CATEGORICAL,
                 "num": NUMERIC, "numeric": NUMERIC}

DAY_FRACTION = 1.0 / 365.0


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PolicyRecord:
    covariates: tuple  # ((name, value), ...)
    exposure: float
    response: int
    prediction: float | None = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable collection of policy records sharing one schema."""

    covariates: Mapping[str, np.ndarray]
    kinds: Mapping[str, str]
    exposure: np.ndarray
    response: np.ndarray
    prediction: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        names = list(self.covariates)
        if set(names) != set(self.kinds):
            raise DataError("covariate columns and declared kinds differ")
        exposure = _frozen(self.exposure, np.float64)
        n = exposure.shape[0]
        if exposure.ndim != 1 or n < 1:
            raise DataError("a dataset needs at least one record")
        response = np.asarray(self.response)
        if response.shape != (n,):
            raise DataError("response length does not match exposure")
        if response.dtype.kind == "f":
            if not np.all(np.isfinite(response)) or np.any(response != np.round(response)):
                bad = int(np.flatnonzero(~np.isfinite(response) | (response != np.round(response)))[0])
                raise InvalidRecord(bad, "response must be a nonnegative integer")
        response = _frozen(response, np.int64)
        covs = {}
        for name in names:
            kind = self.kinds[name]
            if kind not in (CATEGORICAL, NUMERIC):
                raise DataError(f"unknown covariate kind {kind!r} for {name!r}")
            col = _frozen(self.covariates[name], object if kind == CATEGORICAL else np.float64)
            if col.shape != (n,):
                raise DataError(f"covariate {name!r} has wrong length")
            covs[name] = col
        bad = np.flatnonzero(~np.isfinite(exposure) | (exposure <= 0))
        if bad.size:
            raise ZeroExposure(int(bad[0]))
        bad = np.flatnonzero(response < 0)
        if bad.size:
            raise InvalidRecord(int(bad[0]), "response must be a nonnegative integer")
        prediction = self.prediction
        if prediction is not None:
            prediction = _frozen(prediction, np.float64)
            if prediction.shape != (n,):
                raise DataError("prediction length does not match exposure")
            bad = np.flatnonzero(~np.isfinite(prediction) | (prediction < 0))
            if bad.size:
                raise InvalidRecord(int(bad[0]), "prediction must be finite and >= 0")
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "kinds", {k: self.kinds[k] for k in names})
        object.__setattr__(self, "exposure", exposure)
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "prediction", prediction)

    @property
    def n(self) -> int:
        return self.exposure.shape[0]

    def __len__(self):
        return self.n

    @property
    def covariate_names(self) -> list[str]:
        return list(self.covariates)

    @property
    def has_predictions(self) -> bool:
        return self.prediction is not None

    def total_exposure(self) -> float:
        return math.fsum(self.exposure)

    def total_response(self) -> int:
        return int(self.response.sum())

    def record(self, i: int) -> PolicyRecord:
        covs = tuple((name, _py(col[i])) for name, col in self.covariates.items())
        pred = None if self.prediction is None else float(self.prediction[i])
        return PolicyRecord(covs, float(self.exposure[i]), int(self.response[i]), pred)

    def records(self) -> Iterator[PolicyRecord]:
        for i in range(self.n):
            yield self.record(i)

    def replace(self, **changes) -> "Dataset":
        fields = dict(covariates=self.covariates, kinds=self.kinds, exposure=self.exposure,
                      response=self.response, prediction=self.prediction,
                      provenance=self.provenance)
        fields.update(changes)
        return Dataset(**fields)

    def with_predictions(self, prediction) -> "Dataset":
        return self.replace(prediction=prediction)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return self.replace(
            covariates={k: v[idx] for k, v in self.covariates.items()},
            exposure=self.exposure[idx],
            response=self.response[idx],
            prediction=None if self.prediction is None else self.prediction[idx],
        )

    @classmethod
    def from_records(cls, records: Iterable[PolicyRecord], kinds: Mapping[str, str],
                     provenance: str = "") -> "Dataset":
        records = list(records)
        if not records:
            raise DataError("a dataset needs at least one record")
        names = list(kinds)
        covs = {name: [] for name in names}
        for r in records:
            if [c[0] for c in r.covariates] != names:
                raise DataError("record does not match the dataset schema")
            for name, value in r.covariates:
                covs[name].append(value)
        preds = [r.prediction for r in records]
        if all(p is None for p in preds):
            prediction = None
        elif any(p is None for p in preds):
            raise MixedPredictionPresence("some records carry predictions and others do not")
        else:
            prediction = preds
        return cls(covs, dict(kinds), [r.exposure for r in records],
                   [r.response for r in records], prediction, provenance)


def _py(v):
    return v.item() if isinstance(v, np.generic) else v


# --------------------------------------------------------------------------
# CSV input/output


@dataclass(frozen=True)
class ColumnRoles:
    """Maps CSV columns onto dataset roles.

    ``covariate_cols=None`` takes every column not used by another role.
    ``kinds`` overrides the inferred kind of individual covariates.
    """

    exposure_col: str = "exposure"
    response_col: str = "response"
    prediction_col: str | None = None
    covariate_cols: tuple[str, ...] | None = None
    kinds: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, str]) -> "ColumnRoles":
        """Build roles from ``key=value`` settings.

        ``covariate_cols`` is a comma list; an entry may carry a kind suffix,
        e.g. ``Area:cat,DrivAge:num``.
        """
        known = {"exposure_col", "response_col", "prediction_col", "covariate_cols"}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown column-role keys: {sorted(unknown)}")
        covs, kinds = None, {}
        if cfg.get("covariate_cols"):
            covs = []
            for item in cfg["covariate_cols"].split(","):
                item = item.strip()
                if not item:
                    continue
                name, _, kind = item.partition(":")
                covs.append(name.strip())
                if kind:
                    if kind.strip() not in _KIND_ALIASES:
                        raise ValueError(f"unknown covariate kind {kind!r}")
                    kinds[name.strip()] = _KIND_ALIASES[kind.strip()]
            covs = tuple(covs)
        return cls(
            exposure_col=cfg.get("exposure_col", "exposure"),
            response_col=cfg.get("response_col", "response"),
            prediction_col=cfg.get("prediction_col") or None,
            covariate_cols=covs,
            kinds=kinds,
        )


def read_kv_config(path) -> dict[str, str]:
    """Read ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _parse_float(text, row, column):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(row, column, text) from None
    if not math.isfinite(v):
        raise ParseError(row, column, text)
    return v


def load_csv(path, roles: ColumnRoles | None = None, *, strict: bool = True,
             provenance: str | None = None) -> Dataset:
    """Load a comma-separated file with a header row.

    Rows are numbered from 1 (the first data row). In strict mode a
    zero-exposure row raises :class:`ZeroExposure`; otherwise it is dropped
    with a warning. Without explicit ``roles`` a column named
    ``prediction`` is taken as the prediction.
    """
    default_roles = roles is None
    roles = roles or ColumnRoles()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    pos = {name: j for j, name in enumerate(header)}
    if default_roles and "prediction" in pos:
        roles = _dc_replace(roles, prediction_col="prediction")
    role_cols = [roles.exposure_col, roles.response_col]
    if roles.prediction_col:
        role_cols.append(roles.prediction_col)
    for col in role_cols:
        if col not in pos:
            raise MissingColumn(col, path)
    if roles.covariate_cols is None:
        cov_names = [h for h in header if h not in role_cols]
    else:
        cov_names = list(roles.covariate_cols)
        for col in cov_names:
            if col not in pos:
                raise MissingColumn(col, path)

    exposure, response, prediction, keep = [], [], [], []
    je, jr = pos[roles.exposure_col], pos[roles.response_col]
    jp = pos[roles.prediction_col] if roles.prediction_col else None
    dropped = []
    for i, row in enumerate(rows, 1):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(i, "<row>", ",".join(row))
        e = _parse_float(row[je], i, roles.exposure_col)
        y = _parse_float(row[jr], i, roles.response_col)
        if y < 0 or y != int(y):
            raise ParseError(i, roles.response_col, row[jr])
        if e < 0:
            raise InvalidRecord(i, "negative exposure")
        if e == 0:
            if strict:
                raise ZeroExposure(i)
            dropped.append(i)
            continue
        exposure.append(e)
        response.append(int(y))
        if jp is not None:
            p = _parse_float(row[jp], i, roles.prediction_col)
            if p < 0:
                raise InvalidRecord(i, "negative prediction")
            prediction.append(p)
        keep.append(row)
    if dropped:
        warnings.warn(f"{path}: dropped {len(dropped)} zero-exposure rows "
                      f"(first: row {dropped[0]})", stacklevel=2)
    if not keep:
        raise DataError(f"{path}: no records")

    covs, kinds = {}, {}
    for name in cov_names:
        raw = [row[pos[name]] for row in keep]
        kind = roles.kinds.get(name) or _infer_kind(raw)
        if kind == NUMERIC:
            vals = []
            for i, text in enumerate(raw, 1):
                vals.append(_parse_float(text, i, name))
            covs[name] = np.array(vals, dtype=np.float64)
        else:
            covs[name] = np.array(raw, dtype=object)
        kinds[name] = kind
    return Dataset(covs, kinds, exposure, response,
                   prediction if jp is not None else None,
                   provenance if provenance is not None else str(path))


def _infer_kind(values: Sequence[str]) -> str:
    try:
        for v in values:
            if not math.isfinite(float(v)):
                return CATEGORICAL
    except ValueError:
        return CATEGORICAL
    return NUMERIC


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(d: Dataset, path, roles: ColumnRoles | None = None) -> None:
    """Write a dataset so that :func:`load_csv` reads it back bit-exactly."""
    roles = roles or ColumnRoles(prediction_col="prediction" if d.has_predictions else None)
    header = d.covariate_names + [roles.exposure_col, roles.response_col]
    pred_col = roles.prediction_col or "prediction"
    if d.has_predictions:
        header.append(pred_col)
    cols = [d.covariates[c] for c in d.covariate_names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(d.n):
            row = [_fmt(c[i]) for c in cols]
            row.append(repr(float(d.exposure[i])))
            row.append(str(int(d.response[i])))
            if d.has_predictions:
                row.append(repr(float(d.prediction[i])))
            w.writerow(row)


# --------------------------------------------------------------------------
# Transformations


def _key_strings(d: Dataset, name: str) -> list[str]:
    col = d.covariates[name]
    if d.kinds[name] == NUMERIC:
        return [repr(float(v)) for v in col]
    return [str(v) for v in col]


def preaggregate(d: Dataset, key: Sequence[str] | None = None) -> Dataset:
    """Collapse records sharing the same key tuple into one record.

    Exposure and response are summed; the frequency prediction becomes the
    exposure-weighted mean of the members. Output is ordered by the key tuple
    compared lexicographically over stringified values, and keeps only the
    key columns as covariates. ``key=None`` aggregates over all covariates.
    """
    key = list(d.covariate_names if key is None else key)
    if not key:
        raise DataError("aggregation key must name at least one covariate")
    if len(set(key)) != len(key):
        raise DataError("aggregation key columns must be unique")
    for name in key:
        if name not in d.covariates:
            raise MissingColumn(name)

    groups: dict[tuple, list[int]] = {}
    for i, t in enumerate(zip(*(_key_strings(d, c) for c in key))):
        groups.setdefault(t, []).append(i)
    order = sorted(groups)

    exposure = np.empty(len(order))
    response = np.empty(len(order), dtype=np.int64)
    prediction = None if d.prediction is None else np.empty(len(order))
    first = np.empty(len(order), dtype=np.int64)
    for g, t in enumerate(order):
        idx = groups[t]
        first[g] = idx[0]
        if len(idx) == 1:
            exposure[g] = d.exposure[idx[0]]
            response[g] = d.response[idx[0]]
            if prediction is not None:
                prediction[g] = d.prediction[idx[0]]
            continue
        e = d.exposure[idx]
        exposure[g] = math.fsum(e)
        response[g] = int(d.response[idx].sum())
        if prediction is not None:
            prediction[g] = math.fsum(d.prediction[idx] * e) / exposure[g]
    return Dataset({c: d.covariates[c][first] for c in key}, {c: d.kinds[c] for c in key},
                   exposure, response, prediction, d.provenance)


def time_split_extreme(d: Dataset, day_fraction: float = DAY_FRACTION) -> Dataset:
    """Split every claim onto its own row of exposure ``day_fraction``.

    A record with ``k >= 1`` claims becomes ``k`` rows ``(day_fraction, 1)``
    followed by one row ``(exposure - k*day_fraction, 0)``; the remainder row
    is omitted when its exposure is exactly zero. Claim-free records pass
    through. Covariates and frequency predictions are copied unchanged.
    """
    if not day_fraction > 0:
        raise ValueError("day_fraction must be positive")
    k = d.response
    remainder = d.exposure - k * day_fraction
    bad = np.flatnonzero(remainder < 0)
    if bad.size:
        raise InsufficientExposure(int(bad[0]))
    has_rem = (k == 0) | (remainder > 0)
    reps = k + has_rem.astype(np.int64)
    src = np.repeat(np.arange(d.n), reps)
    # position of each output row within its source block
    starts = np.cumsum(reps) - reps
    pos = np.arange(src.size) - starts[src]
    is_claim = pos < k[src]
    exposure = np.where(is_claim, day_fraction, remainder[src])
    exposure = np.where(k[src] == 0, d.exposure[src], exposure)
    response = is_claim.astype(np.int64)
    out = d.take(src)
    return out.replace(exposure=exposure, response=response)
