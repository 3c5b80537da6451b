"""Bootstrap null distribution of the holdout Gini and the drift z-test.

The null is estimated by resampling (response, score, exposure) tuples of
the holdout with replacement, without refitting the model. Replicate ``b``
draws from its own PCG64 stream keyed by ``mix64(seed, b)``, so results do
not depend on how replicates are spread across threads.

For deterministic tie policies the holdout is sorted once; a resample is
then a multiplicity vector over the original observations and each
replicate costs one linear pass per curve (see :mod:`ginidrift.kernels`).
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._version import TOOL_VERSION
from .data import Dataset, preaggregate
from .errors import (
    DegenerateDenominator,
    DegenerateResamples,
    GiniDriftError,
    InsufficientNewData,
    ZeroSd,
)
from .metrics import (
    GiniResult,
    ScoredObservations,
    TiePolicy,
    WeightingMode,
    gini,
    response_order,
    score_dataset,
    score_order,
)
from .rng import mix64, stream

MAX_RESAMPLE_RETRIES = 100
REPORT_SCHEMA_VERSION = 1

TWO_SIDED = "two-sided"
ONE_SIDED = "one-sided-deterioration"


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 10_000
    seed: int = 0
    tie_policy: TiePolicy = field(default_factory=TiePolicy.average)
    weighting: WeightingMode = WeightingMode.COUNT
    n_jobs: int = 1

    def __post_init__(self):
        if int(self.B) < 2:
            raise ValueError("B must be at least 2")
        if int(self.n_jobs) < 1:
            raise ValueError("n_jobs must be positive")
        object.__setattr__(self, "tie_policy", TiePolicy.parse(self.tie_policy))
        object.__setattr__(self, "weighting", WeightingMode.parse(self.weighting))


@dataclass(frozen=True, eq=False)
class NullDistribution:
    mean: float
    sd: float
    B: int
    n: int
    seed: int
    tie_policy: TiePolicy
    weighting: WeightingMode
    replicate_values: np.ndarray | None = None

    def to_dict(self, include_replicates: bool = False) -> dict:
        out = {"mean": self.mean, "sd": self.sd, "B": self.B, "n": self.n,
               "seed": self.seed, "tie_policy": str(self.tie_policy),
               "weighting": self.weighting.value}
        if include_replicates and self.replicate_values is not None:
            out["replicate_values"] = self.replicate_values.tolist()
        return out

    @classmethod
    def from_dict(cls, obj) -> "NullDistribution":
        reps = obj.get("replicate_values")
        return cls(float(obj["mean"]), float(obj["sd"]), int(obj["B"]), int(obj["n"]),
                   int(obj["seed"]), TiePolicy.parse(obj["tie_policy"]),
                   WeightingMode.parse(obj["weighting"]),
                   None if reps is None else np.asarray(reps, dtype=np.float64))


def _summary(values: np.ndarray) -> tuple[float, float]:
    mean = math.fsum(values) / values.size
    sd = math.sqrt(math.fsum((values - mean) ** 2) / (values.size - 1))
    return mean, sd


class _Replicator:
    """Computes one bootstrap Gini replicate per index."""

    def __init__(self, obs: ScoredObservations, cfg: BootstrapConfig):
        self.obs, self.cfg = obs, cfg
        self.n = len(obs)
        self.y = obs.response
        self.w = obs.weights(cfg.weighting)
        self.slope = self.y / self.w
        kind = cfg.tie_policy.kind
        orders = [response_order(obs, cfg.weighting)]
        if kind in (TiePolicy.BEST, TiePolicy.AVERAGE):
            orders.append(score_order(obs, TiePolicy.BEST, cfg.weighting))
        if kind in (TiePolicy.WORST, TiePolicy.AVERAGE):
            orders.append(score_order(obs, TiePolicy.WORST, cfg.weighting))
        self.orders = np.ascontiguousarray(np.vstack(orders), dtype=np.int64)
        self.ys = np.ascontiguousarray(self.y[self.orders], dtype=np.float64)
        self.ws = np.ascontiguousarray(self.w[self.orders], dtype=np.float64)

    def _draw(self, rng) -> np.ndarray:
        for _ in range(MAX_RESAMPLE_RETRIES + 1):
            idx = rng.integers(0, self.n, size=self.n)
            s = self.slope[idx]
            if s.min() != s.max():
                return idx
        raise DegenerateResamples(
            f"{MAX_RESAMPLE_RETRIES} consecutive resamples had a degenerate Best CAP")

    def __call__(self, b: int) -> float:
        rng = stream(self.cfg.seed, b)
        idx = self._draw(rng)
        if self.cfg.tie_policy.kind == TiePolicy.RANDOM:
            tie_seed = mix64(self.cfg.tie_policy.seed, b)
            return gini(self.obs.take(idx), TiePolicy.random(tie_seed), self.cfg.weighting).value
        counts = np.bincount(idx, minlength=self.n).astype(np.int64, copy=False)
        areas = kernels.ordered_areas(self.ys, self.ws, self.orders, counts) - 0.5
        den = areas[0]
        if len(areas) == 3:
            return 0.5 * (areas[1] / den + areas[2] / den)
        return areas[1] / den


def bootstrap_replicates(obs: ScoredObservations, cfg: BootstrapConfig) -> np.ndarray:
    """The ``B`` bootstrap Gini values, in replicate order."""
    if len(obs) == 0 or not obs.response.sum() > 0:
        gini(obs, cfg.tie_policy, cfg.weighting)  # raises the precise error
    slope = obs.response / obs.weights(cfg.weighting)
    if slope.min() == slope.max():
        raise DegenerateDenominator("all responses per unit weight are equal")
    rep = _Replicator(obs, cfg)
    out = np.empty(cfg.B, dtype=np.float64)
    if cfg.n_jobs == 1:
        for b in range(cfg.B):
            out[b] = rep(b)
        return out

    def run(chunk):
        return chunk, [rep(b) for b in chunk]

    chunks = np.array_split(np.arange(cfg.B), cfg.n_jobs * 4)
    with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
        for chunk, vals in pool.map(run, chunks):
            out[chunk] = vals
    return out


def bootstrap_null(obs: ScoredObservations, cfg: BootstrapConfig,
                   keep_replicates: bool = True) -> NullDistribution:
    """Mean and standard deviation (divisor ``B - 1``) of bootstrap Gini values."""
    values = bootstrap_replicates(obs, cfg)
    mean, sd = _summary(values)
    return NullDistribution(mean, sd, cfg.B, len(obs), cfg.seed, cfg.tie_policy,
                            cfg.weighting, values if keep_replicates else None)


# --------------------------------------------------------------------------
# Test


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


@dataclass(frozen=True)
class DriftTestResult:
    gini_new: float
    z: float
    p_two_sided: float
    p_one_sided_deterioration: float
    alpha: float
    sided: str
    reject: bool

    def to_dict(self) -> dict:
        return {"gini_new": self.gini_new, "z": self.z, "p_two_sided": self.p_two_sided,
                "p_one_sided": self.p_one_sided_deterioration, "alpha": self.alpha,
                "sided": self.sided, "reject": self.reject}


def drift_test(gini_new: float, null: NullDistribution, alpha: float,
               sided: str = TWO_SIDED) -> DriftTestResult:
    """z-test of a new-data Gini against the bootstrap null.

    ``one-sided-deterioration`` rejects only for a Gini significantly below
    the null mean.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if sided not in (TWO_SIDED, ONE_SIDED):
        raise ValueError(f"sided must be {TWO_SIDED!r} or {ONE_SIDED!r}")
    if not null.sd > 0:
        raise ZeroSd("null distribution has zero standard deviation")
    z = (gini_new - null.mean) / null.sd
    p_two = math.erfc(abs(z) / math.sqrt(2.0))
    p_one = normal_cdf(z)
    p = p_two if sided == TWO_SIDED else p_one
    return DriftTestResult(float(gini_new), z, p_two, p_one, float(alpha), sided, p < alpha)


# --------------------------------------------------------------------------
# Monitoring pipeline


@dataclass(frozen=True, eq=False)
class MonitoringReport:
    provenance_old: str
    provenance_new: str
    n_old: int
    n_new: int
    null: NullDistribution
    gini_old: GiniResult
    gini_new: GiniResult
    test: DriftTestResult
    actual_to_expected_new: float
    warnings: tuple[str, ...] = ()
    period: str | None = None

    def to_dict(self, include_replicates: bool = False) -> dict:
        out = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "tool_version": TOOL_VERSION,
            "period": self.period,
            "provenance_old": self.provenance_old,
            "provenance_new": self.provenance_new,
            "n_old": self.n_old,
            "n_new": self.n_new,
            "tie_policy": str(self.null.tie_policy),
            "weighting": self.null.weighting.value,
            "B": self.null.B,
            "seed": self.null.seed,
            "mean": self.null.mean,
            "sd": self.null.sd,
            "gini_old": self.gini_old.value,
            "gini_new": self.test.gini_new,
            "z": self.test.z,
            "p_two_sided": self.test.p_two_sided,
            "p_one_sided": self.test.p_one_sided_deterioration,
            "sided": self.test.sided,
            "alpha": self.test.alpha,
            "reject": self.test.reject,
            "actual_to_expected_new": self.actual_to_expected_new,
            "warnings": list(self.warnings),
        }
        if include_replicates and self.null.replicate_values is not None:
            out["replicate_values"] = self.null.replicate_values.tolist()
        return out

    def to_json(self, include_replicates: bool = False) -> str:
        return json.dumps(self.to_dict(include_replicates), indent=2)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except GiniDriftError as exc:
        exc.stage = name
        exc.args = (f"[{name}] {exc}",)
        raise


def monitor(old_holdout: Dataset, new_data: Dataset, cfg: BootstrapConfig, alpha: float,
            sided: str = TWO_SIDED, allow_smaller: bool = False,
            key=None, period: str | None = None) -> MonitoringReport:
    """Full drift check of ``new_data`` against the holdout of the training period.

    Both datasets are pre-aggregated over ``key`` (default: all covariates
    of the holdout), scored by predicted count, and compared with the same
    tie policy and weighting.
    """
    notes = []
    key = list(old_holdout.covariate_names if key is None else key)
    old = _stage("aggregate-old", preaggregate, old_holdout, key)
    new = _stage("aggregate-new", preaggregate, new_data, key)
    if new.n < old.n:
        msg = (f"new data has fewer observations ({new.n}) than the holdout "
               f"used for the bootstrap ({old.n})")
        if not allow_smaller:
            raise InsufficientNewData(f"[precondition] {msg}; pass allow_smaller to override")
        notes.append(msg)
    obs_old = _stage("score-old", score_dataset, old)
    obs_new = _stage("score-new", score_dataset, new)
    null = _stage("bootstrap", bootstrap_null, obs_old, cfg)
    g_old = _stage("gini-old", gini, obs_old, cfg.tie_policy, cfg.weighting)
    g_new = _stage("gini-new", gini, obs_new, cfg.tie_policy, cfg.weighting)
    test = _stage("test", drift_test, g_new.value, null, alpha, sided)
    expected = math.fsum(new.prediction * new.exposure)
    ae = new.total_response() / expected if expected > 0 else math.inf
    return MonitoringReport(old_holdout.provenance, new_data.provenance, old.n, new.n,
                            null, g_old, g_new, test, ae, tuple(notes), period)


def per_period_monitor(old_holdouts, new_data: Dataset, cfg: BootstrapConfig, alpha: float,
                       sided: str = TWO_SIDED, allow_smaller: bool = False,
                       key=None) -> list[MonitoringReport]:
    """One independent :func:`monitor` run per ``(label, holdout)`` pair.

    p-values are raw: no multiple-testing correction is applied, and each
    report says so when more than one period is tested.
    """
    reports = []
    old_holdouts = list(old_holdouts)
    for label, holdout in old_holdouts:
        r = monitor(holdout, new_data, cfg, alpha, sided, allow_smaller, key, period=label)
        if len(old_holdouts) > 1:
            r = MonitoringReport(**{**r.__dict__, "warnings": r.warnings + (
                f"raw p-value: {len(old_holdouts)} periods tested without multiplicity correction",)})
        reports.append(r)
    return reports


def write_replicates_csv(values, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("gini\n")
        for v in values:
            fh.write(repr(float(v)) + "\n")


def histogram_bins(values, bins: int = 50) -> list[tuple[float, float, int]]:
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]
