"""CAP curves, Gini indices, Poisson deviance and balance correction.

Observations are ranked descending by score (by default the predicted
claim count, frequency x exposure). The x-axis of the CAP accumulates
either observation counts or exposure. Curves are the piecewise-linear
interpolation of the cumulative points anchored at (0, 0), integrated
exactly with the trapezoidal rule.

Tie handling inside blocks of bitwise-equal scores:

* ``best``: steepest segments first, i.e. descending response per unit of
  x-axis weight (descending response under count weighting). This maximises
  the area over all orders compatible with the scores.
* ``worst``: the reverse, minimising the area.
* ``random``: a seeded uniform shuffle (PCG64).
* ``average``: mean of the ``best`` and ``worst`` Gini values.

The Best CAP that normalises the Gini ranks by the same per-weight
response, so ``numerator_area <= denominator_area`` holds for either
weighting.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import Dataset
from .errors import (
    DataError,
    DegenerateDenominator,
    EmptyInput,
    MissingPrediction,
    NonpositivePrediction,
    ZeroTotalResponse,
)
from .rng import generator


class WeightingMode(str, enum.Enum):
    COUNT = "count"
    EXPOSURE = "exposure"

    @classmethod
    def parse(cls, value) -> "WeightingMode":
        return value if isinstance(value, cls) else cls(str(value).lower())


@dataclass(frozen=True)
class TiePolicy:
    kind: str
    seed: int | None = None

    BEST = "best"
    WORST = "worst"
    RANDOM = "random"
    AVERAGE = "average-extremes"

    def __post_init__(self):
        if self.kind not in (self.BEST, self.WORST, self.RANDOM, self.AVERAGE):
            raise ValueError(f"unknown tie policy {self.kind!r}")
        if (self.kind == self.RANDOM) != (self.seed is not None):
            raise ValueError("a seed is required for, and only for, random tie breaking")

    @classmethod
    def best(cls):
        return cls(cls.BEST)

    @classmethod
    def worst(cls):
        return cls(cls.WORST)

    @classmethod
    def average(cls):
        return cls(cls.AVERAGE)

    @classmethod
    def random(cls, seed: int):
        return cls(cls.RANDOM, int(seed))

    @classmethod
    def parse(cls, text) -> "TiePolicy":
        """Parse ``best``, ``worst``, ``average-extremes`` or ``random:SEED``."""
        if isinstance(text, cls):
            return text
        text = str(text).strip().lower()
        if text.startswith("random"):
            _, _, seed = text.partition(":")
            if not seed:
                raise ValueError("random tie policy needs a seed, e.g. random:42")
            return cls.random(int(seed))
        if text in ("average", "average-extremes", "averageofextremes"):
            return cls.average()
        return cls(text)

    def __str__(self):
        return f"random:{self.seed}" if self.kind == self.RANDOM else self.kind


@dataclass(frozen=True, eq=False)
class ScoredObservations:
    """Column arrays of (response, score, exposure) tuples.

    ``exposure`` is the x-axis weight used under exposure weighting; count
    weighting ignores it.
    """

    response: np.ndarray
    score: np.ndarray
    exposure: np.ndarray | None = None

    def __post_init__(self):
        y = np.array(self.response, dtype=np.float64)
        s = np.array(self.score, dtype=np.float64)
        e = np.ones_like(y) if self.exposure is None else np.array(self.exposure, dtype=np.float64)
        if not (y.ndim == 1 and y.shape == s.shape == e.shape):
            raise DataError("response, score and exposure must be 1-d arrays of equal length")
        if np.any(~np.isfinite(y) | (y < 0)):
            raise DataError("responses must be finite and nonnegative")
        if np.any(~np.isfinite(s)):
            raise DataError("scores must be finite")
        if np.any(~np.isfinite(e) | (e <= 0)):
            raise DataError("weights must be positive")
        for a in (y, s, e):
            a.setflags(write=False)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "score", s)
        object.__setattr__(self, "exposure", e)

    def __len__(self):
        return self.response.shape[0]

    def weights(self, weighting) -> np.ndarray:
        if WeightingMode.parse(weighting) is WeightingMode.COUNT:
            return np.ones_like(self.response)
        return self.exposure

    def take(self, idx) -> "ScoredObservations":
        return ScoredObservations(self.response[idx], self.score[idx], self.exposure[idx])


def score_dataset(d: Dataset, rank_by: str = "count") -> ScoredObservations:
    """Turn a predicted dataset into scored observations.

    ``rank_by="count"`` (default) scores by the predicted claim count
    prediction x exposure; ``"frequency"`` keeps the raw frequency, for
    sensitivity analysis only.
    """
    if d.prediction is None:
        raise MissingPrediction()
    if rank_by == "count":
        score = d.prediction * d.exposure
    elif rank_by == "frequency":
        score = d.prediction
    else:
        raise ValueError(f"rank_by must be 'count' or 'frequency', not {rank_by!r}")
    return ScoredObservations(d.response, score, d.exposure)


# --------------------------------------------------------------------------
# Orderings


def _check(obs: ScoredObservations):
    if len(obs) == 0:
        raise EmptyInput("no observations")
    if not obs.response.sum() > 0:
        raise ZeroTotalResponse("total response is zero")


def _slope(obs: ScoredObservations, weighting) -> np.ndarray:
    return obs.response / obs.weights(weighting)


def score_order(obs: ScoredObservations, tie_kind: str, weighting, seed: int | None = None):
    """Indices visiting observations by descending score, ties per ``tie_kind``."""
    slope = _slope(obs, weighting)
    if tie_kind == TiePolicy.BEST:
        return np.lexsort((-slope, -obs.score))
    if tie_kind == TiePolicy.WORST:
        return np.lexsort((slope, -obs.score))
    if tie_kind == TiePolicy.RANDOM:
        perm = generator(seed).permutation(len(obs))
        return np.lexsort((perm, -obs.score))
    raise ValueError(f"no single ordering for tie policy {tie_kind!r}")


def response_order(obs: ScoredObservations, weighting):
    """Ordering that produces the Best CAP."""
    return np.argsort(-_slope(obs, weighting), kind="stable")


def _is_degenerate(slope: np.ndarray) -> bool:
    return bool(slope.min() == slope.max())


# --------------------------------------------------------------------------
# CAP curves


@dataclass(frozen=True, eq=False)
class CapCurve:
    alpha: np.ndarray
    cap: np.ndarray
    weighting: WeightingMode

    def __post_init__(self):
        a = np.array(self.alpha, dtype=np.float64)
        c = np.array(self.cap, dtype=np.float64)
        if a.ndim != 1 or a.shape != c.shape or a.size < 2:
            raise DataError("CAP curve needs matching point arrays of length >= 2")
        if a[0] != 0.0 or c[0] != 0.0 or a[-1] != 1.0 or c[-1] != 1.0:
            raise DataError("CAP curve must run from (0, 0) to (1, 1)")
        if np.any(np.diff(a) <= 0) or np.any(np.diff(c) < 0):
            raise DataError("CAP curve must have increasing alpha and nondecreasing cap")
        a.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "cap", c)
        object.__setattr__(self, "weighting", WeightingMode.parse(self.weighting))

    def __call__(self, alpha):
        return np.interp(alpha, self.alpha, self.cap)

    def area(self) -> float:
        a, c = self.alpha, self.cap
        return float(np.sum(np.diff(a) * (c[1:] + c[:-1]) * 0.5))

    def to_dict(self) -> dict:
        return {"weighting": self.weighting.value,
                "alpha": self.alpha.tolist(), "cap": self.cap.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj) -> "CapCurve":
        return cls(obj["alpha"], obj["cap"], obj["weighting"])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["alpha", "cap"])
            for a, c in zip(self.alpha, self.cap):
                w.writerow([repr(float(a)), repr(float(c))])


def empirical_cap(obs: ScoredObservations, order_by: str = "score",
                  tie_policy: TiePolicy | str = TiePolicy.BEST,
                  weighting=WeightingMode.COUNT) -> CapCurve:
    """Empirical CAP, ranking by score (``order_by="score"``) or response.

    Averaging is not a curve; ``average-extremes`` is rejected here and
    handled by :func:`gini`.
    """
    _check(obs)
    weighting = WeightingMode.parse(weighting)
    tie_policy = TiePolicy.parse(tie_policy)
    if order_by == "response":
        order = response_order(obs, weighting)
    elif order_by == "score":
        if tie_policy.kind == TiePolicy.AVERAGE:
            raise ValueError("average-extremes defines a Gini value, not a single curve")
        order = score_order(obs, tie_policy.kind, weighting, tie_policy.seed)
    else:
        raise ValueError(f"order_by must be 'score' or 'response', not {order_by!r}")
    xs, cs = kernels.cap_points(obs.response, obs.weights(weighting), order)
    alpha, cap = xs / xs[-1], cs / cs[-1]
    # absorb steps too small to move alpha in floating point
    keep = np.ones(alpha.size, dtype=bool)
    keep[1:] = np.diff(alpha) > 0
    if not keep.all():
        keep[-1] = True
        alpha, cap = alpha[keep], np.maximum.accumulate(cap)[keep]
    return CapCurve(alpha, cap, weighting)


# --------------------------------------------------------------------------
# Gini


@dataclass(frozen=True)
class GiniResult:
    value: float
    tie_policy: TiePolicy
    weighting: WeightingMode
    n: int
    numerator_area: float
    denominator_area: float

    def to_dict(self) -> dict:
        return {"value": self.value, "tie_policy": str(self.tie_policy),
                "weighting": self.weighting.value, "n": self.n,
                "numerator_area": self.numerator_area,
                "denominator_area": self.denominator_area}

    @classmethod
    def from_dict(cls, obj) -> "GiniResult":
        return cls(float(obj["value"]), TiePolicy.parse(obj["tie_policy"]),
                   WeightingMode.parse(obj["weighting"]), int(obj["n"]),
                   float(obj["numerator_area"]), float(obj["denominator_area"]))


def gini(obs: ScoredObservations, tie_policy: TiePolicy | str = TiePolicy.AVERAGE,
         weighting=WeightingMode.COUNT) -> GiniResult:
    """Empirical Gini index: excess CAP area over the excess Best CAP area."""
    _check(obs)
    tie_policy = TiePolicy.parse(tie_policy)
    weighting = WeightingMode.parse(weighting)
    y, w = obs.response, obs.weights(weighting)
    if _is_degenerate(y / w):
        raise DegenerateDenominator("all responses per unit weight are equal; "
                                    "the Best CAP is the diagonal")
    denominator = kernels.cap_area(y, w, response_order(obs, weighting)) - 0.5
    if tie_policy.kind == TiePolicy.AVERAGE:
        best = kernels.cap_area(y, w, score_order(obs, TiePolicy.BEST, weighting)) - 0.5
        worst = kernels.cap_area(y, w, score_order(obs, TiePolicy.WORST, weighting)) - 0.5
        numerator = 0.5 * (best + worst)
        value = 0.5 * (best / denominator + worst / denominator)
    else:
        order = score_order(obs, tie_policy.kind, weighting, tie_policy.seed)
        numerator = kernels.cap_area(y, w, order) - 0.5
        value = numerator / denominator
    return GiniResult(float(value), tie_policy, weighting, len(obs),
                      float(numerator), float(denominator))


# --------------------------------------------------------------------------
# Deviance


@dataclass(frozen=True)
class DevianceConfig:
    dispersion: float = 1.0

    def __post_init__(self):
        if not self.dispersion > 0:
            raise ValueError("dispersion must be positive")


def poisson_unit_deviance(y, m) -> np.ndarray:
    """``2 (y log(y/m) - y + m)`` with the ``y = 0`` log term taken as 0."""
    y = np.asarray(y, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    pos = y > 0
    ylog = np.zeros_like(y)
    ylog[pos] = y[pos] * np.log(y[pos] / m[pos])
    return 2.0 * (ylog - y + m)


def poisson_deviance_loss(response, predicted_count, cfg: DevianceConfig = DevianceConfig()) -> float:
    """Mean Poisson unit deviance on the count scale, divided by the dispersion."""
    y = np.asarray(response, dtype=np.float64)
    m = np.asarray(predicted_count, dtype=np.float64)
    if y.shape != m.shape or y.ndim != 1 or y.size == 0:
        raise DataError("response and predicted_count must be nonempty 1-d arrays of equal length")
    bad = np.flatnonzero(~(m > 0) | ~np.isfinite(m))
    if bad.size:
        raise NonpositivePrediction(int(bad[0]))
    return math.fsum(poisson_unit_deviance(y, m)) / (y.size * cfg.dispersion)


def dataset_deviance_loss(d: Dataset, cfg: DevianceConfig = DevianceConfig()) -> float:
    if d.prediction is None:
        raise MissingPrediction()
    return poisson_deviance_loss(d.response, d.prediction * d.exposure, cfg)


# --------------------------------------------------------------------------
# Calibration


BY_UNIQUE_PREDICTION = "unique"


def _bin_labels(d: Dataset, bins) -> np.ndarray:
    if d.prediction is None:
        raise MissingPrediction()
    if bins == BY_UNIQUE_PREDICTION:
        _, labels = np.unique(d.prediction, return_inverse=True)
        return labels.reshape(-1)
    bins = int(bins)
    if bins < 1:
        raise ValueError("bins must be a positive integer")
    bins = min(bins, d.n)
    order = np.argsort(d.prediction, kind="stable")
    e = d.exposure[order]
    mid = np.cumsum(e) - 0.5 * e
    total = mid[-1] + 0.5 * e[-1]
    labels = np.empty(d.n, dtype=np.int64)
    labels[order] = np.minimum((mid / total * bins).astype(np.int64), bins - 1)
    return labels


def _group_sums(labels, values, size):
    return np.bincount(labels, weights=values, minlength=size)


def balance_correct(d: Dataset, bins=BY_UNIQUE_PREDICTION) -> Dataset:
    """Replace predictions by the observed frequency of their cohort.

    Cohorts are the records sharing a bitwise-equal prediction (default) or
    ``bins`` prediction-ranked groups of roughly equal exposure.
    """
    labels = _bin_labels(d, bins)
    size = int(labels.max()) + 1
    exposure = _group_sums(labels, d.exposure, size)
    response = _group_sums(labels, d.response.astype(np.float64), size)
    freq = np.divide(response, exposure, out=np.zeros(size), where=exposure > 0)
    return d.with_predictions(freq[labels])


@dataclass(frozen=True)
class CalibrationRow:
    bin: int
    exposure: float
    observed: float
    predicted: float


def calibration_table(d: Dataset, bins: int) -> list[CalibrationRow]:
    """Observed vs. predicted frequency over exposure-quantile bins.

    ``bins`` larger than the record count is clamped to it.
    """
    labels = _bin_labels(d, int(bins))
    size = int(labels.max()) + 1
    exposure = _group_sums(labels, d.exposure, size)
    response = _group_sums(labels, d.response.astype(np.float64), size)
    expected = _group_sums(labels, d.prediction * d.exposure, size)
    return [CalibrationRow(b, float(exposure[b]), float(response[b] / exposure[b]),
                           float(expected[b] / exposure[b]))
            for b in range(size) if exposure[b] > 0]


def write_calibration_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "exposure", "observed", "predicted"])
        for r in rows:
            w.writerow([r.bin, repr(r.exposure), repr(r.observed), repr(r.predicted)])
