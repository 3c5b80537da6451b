"""Synthetic portfolios and controlled real concept drift.

Drift is injected by moving claims between two covariate groups: sampled
source records with at least one claim lose one, sampled target records
gain one. Exposures, covariates and predictions stay untouched, so the
model's view of the portfolio is unchanged while the conditional claim
frequency shifts.

Drift schedules follow the usual taxonomy: *sudden* (everything at once in
the last period), *incremental* (equal cumulative steps) and *gradual*
(each transfer present with a probability ramping up across periods).
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

import numpy as np

from .data import CATEGORICAL, NUMERIC, Dataset, read_kv_config
from .errors import (
    DisjointnessViolation,
    EmptyGroup,
    InsufficientClaimsInSource,
    InsufficientTargetRecords,
    MissingColumn,
)
from .rng import generator, mix64


@dataclass(frozen=True)
class GroupPredicate:
    """Selects records by a covariate value set or a half-open interval."""

    column: str
    values: frozenset | None = None
    interval: tuple[float, float] | None = None

    def __post_init__(self):
        if (self.values is None) == (self.interval is None):
            raise ValueError("give exactly one of values or interval")
        if self.values is not None:
            object.__setattr__(self, "values", frozenset(str(v) for v in self.values))

    _RE = re.compile(r"^\s*(\S+)\s+in\s+(.+?)\s*$")

    @classmethod
    def parse(cls, text: str) -> "GroupPredicate":
        """Parse ``DrivAge in [25, 35)`` or ``Area in {A, B}``."""
        m = cls._RE.match(text)
        if not m:
            raise ValueError(f"cannot parse group predicate {text!r}")
        column, rhs = m.groups()
        if rhs.startswith("{") and rhs.endswith("}"):
            vals = [v.strip() for v in rhs[1:-1].split(",") if v.strip()]
            return cls(column, values=frozenset(vals))
        if rhs.startswith("[") and rhs.endswith(")"):
            lo, hi = (float(v) for v in rhs[1:-1].split(","))
            return cls(column, interval=(lo, hi))
        raise ValueError(f"expected {{a, b}} or [lo, hi) in {text!r}")

    def __str__(self):
        if self.values is not None:
            return f"{self.column} in {{{', '.join(sorted(self.values))}}}"
        return f"{self.column} in [{self.interval[0]:g}, {self.interval[1]:g})"

    def mask(self, d: Dataset) -> np.ndarray:
        if self.column not in d.covariates:
            raise MissingColumn(self.column)
        col = d.covariates[self.column]
        if self.values is not None:
            if d.kinds[self.column] == NUMERIC:
                wanted = {float(v) for v in self.values}
                return np.isin(col, list(wanted))
            return np.array([str(v) in self.values for v in col], dtype=bool)
        lo, hi = self.interval
        vals = col.astype(np.float64)
        return (vals >= lo) & (vals < hi)


@dataclass(frozen=True)
class DriftScenario:
    source: GroupPredicate
    target: GroupPredicate
    transfer_count: int
    seed: int = 0

    def __post_init__(self):
        if self.transfer_count < 0:
            raise ValueError("transfer_count must be nonnegative")

    @classmethod
    def from_config(cls, cfg: dict) -> "DriftScenario":
        return cls(GroupPredicate.parse(cfg["source"]), GroupPredicate.parse(cfg["target"]),
                   int(cfg["transfer_count"]), int(cfg.get("seed", 0)))

    @classmethod
    def read(cls, path) -> "DriftScenario":
        return cls.from_config(read_kv_config(path))


def _groups(d: Dataset, source: GroupPredicate, target: GroupPredicate):
    src, tgt = source.mask(d), target.mask(d)
    if not src.any():
        raise EmptyGroup(f"source group {source} selects no records")
    if not tgt.any():
        raise EmptyGroup(f"target group {target} selects no records")
    if np.any(src & tgt):
        raise DisjointnessViolation(f"{source} and {target} overlap")
    return src, tgt


def _transfer_pairs(d: Dataset, s: DriftScenario):
    """Sampled (decremented, incremented) record indices of a scenario."""
    src, tgt = _groups(d, s.source, s.target)
    eligible = np.flatnonzero(src & (d.response >= 1))
    targets = np.flatnonzero(tgt)
    k = s.transfer_count
    if eligible.size < k:
        raise InsufficientClaimsInSource(
            f"source group has {eligible.size} records with claims, {k} needed")
    if targets.size < k:
        raise InsufficientTargetRecords(f"target group has {targets.size} records, {k} needed")
    rng = generator(s.seed)
    down = rng.choice(eligible, size=k, replace=False)
    up = rng.choice(targets, size=k, replace=False)
    return down, up


def _apply(d: Dataset, down, up) -> Dataset:
    y = d.response.copy()
    np.subtract.at(y, down, 1)
    np.add.at(y, up, 1)
    return d.replace(response=y)


def inject_drift(d: Dataset, s: DriftScenario) -> Dataset:
    """Move ``transfer_count`` claims from the source group to the target group.

    Decrements hit distinct source records with at least one claim, and
    increments hit distinct target records regardless of their claim count,
    both sampled uniformly without replacement.
    """
    if s.transfer_count == 0:
        _groups(d, s.source, s.target)
        return d
    down, up = _transfer_pairs(d, s)
    return _apply(d, down, up)


# --------------------------------------------------------------------------
# Synthetic portfolios


@dataclass(frozen=True)
class GroupSpec:
    label: str
    share: float
    frequency: float
    age: tuple[int, int] | None = None  # half-open range of integer ages

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError(f"group {self.label!r}: frequency must be positive")
        if not self.share > 0:
            raise ValueError(f"group {self.label!r}: share must be positive")


@dataclass(frozen=True)
class SyntheticSpec:
    """Groups with true frequencies; exposures uniform on (low, high]."""

    groups: tuple[GroupSpec, ...]
    n: int
    seed: int = 0
    exposure_range: tuple[float, float] = (0.05, 1.0)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not self.groups:
            raise ValueError("at least one group is required")
        lo, hi = self.exposure_range
        if not 0 <= lo < hi:
            raise ValueError("exposure range must satisfy 0 <= low < high")
        object.__setattr__(self, "groups", tuple(self.groups))

    @classmethod
    def from_config(cls, cfg: dict) -> "SyntheticSpec":
        """Build from ``key=value`` settings.

        Groups are lines ``group.<label> = share=0.5; frequency=0.05; age=18:40``.
        """
        groups = []
        for key, value in cfg.items():
            if not key.startswith("group."):
                continue
            fields = {}
            for part in value.split(";"):
                if part.strip():
                    k, _, v = part.partition("=")
                    fields[k.strip()] = v.strip()
            age = None
            if "age" in fields:
                lo, hi = fields["age"].split(":")
                age = (int(lo), int(hi))
            groups.append(GroupSpec(key[len("group."):], float(fields.get("share", 1.0)),
                                    float(fields["frequency"]), age))
        exposure = (0.05, 1.0)
        if "exposure" in cfg:
            lo, hi = cfg["exposure"].split(",")
            exposure = (float(lo), float(hi))
        return cls(tuple(groups), int(cfg["n"]), int(cfg.get("seed", 0)), exposure)

    @classmethod
    def read(cls, path) -> "SyntheticSpec":
        return cls.from_config(read_kv_config(path))


def generate_portfolio(spec: SyntheticSpec, provenance: str = "synthetic") -> Dataset:
    """Draw a portfolio; predictions are the true group frequencies."""
    rng = generator(spec.seed)
    shares = np.array([g.share for g in spec.groups])
    group = rng.choice(len(spec.groups), size=spec.n, p=shares / shares.sum())
    lo, hi = spec.exposure_range
    exposure = hi - rng.random(spec.n) * (hi - lo)
    freq = np.array([g.frequency for g in spec.groups])[group]
    response = rng.poisson(freq * exposure)
    covs = {"group": np.array([spec.groups[i].label for i in group], dtype=object)}
    kinds = {"group": CATEGORICAL}
    if any(g.age is not None for g in spec.groups):
        age = np.empty(spec.n)
        for j, g in enumerate(spec.groups):
            sel = group == j
            a_lo, a_hi = g.age if g.age is not None else (18, 90)
            age[sel] = rng.integers(a_lo, a_hi, size=int(sel.sum()))
        covs["age"] = age
        kinds["age"] = NUMERIC
    return Dataset(covs, kinds, exposure, response, freq, provenance)


# --------------------------------------------------------------------------
# Schedules


class DriftKind(str, enum.Enum):
    SUDDEN = "sudden"
    GRADUAL = "gradual"
    INCREMENTAL = "incremental"


def _split_evenly(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if k < extra else 0) for k in range(parts)]


def drift_schedule(d0: Dataset, kind, periods: int, total_transfer: int,
                   groups: tuple[GroupPredicate, GroupPredicate], seed: int = 0):
    """Per-period datasets ``[(label, dataset), ...]`` drifting from ``d0``.

    * sudden: periods before the last are ``d0``; the last carries the full
      transfer.
    * incremental: period ``k`` carries the cumulative transfer
      ``total * k / periods`` (integer split), each step applied to the
      previous period's data.
    * gradual: one full transfer is sampled; in period ``k`` each transfer
      pair is present independently with probability ``k / periods``.

    Every period keeps the portfolio's total claim count.
    """
    kind = DriftKind(kind)
    if periods < 1:
        raise ValueError("periods must be positive")
    source, target = groups
    labels = [f"period-{k}" for k in range(1, periods + 1)]
    if kind is DriftKind.SUDDEN:
        last = inject_drift(d0, DriftScenario(source, target, total_transfer, seed))
        return [(lab, d0) for lab in labels[:-1]] + [(labels[-1], last)]
    if kind is DriftKind.INCREMENTAL:
        out, current = [], d0
        for k, (lab, step) in enumerate(zip(labels, _split_evenly(total_transfer, periods))):
            step_seed = seed if periods == 1 else mix64(seed, k)
            current = inject_drift(current, DriftScenario(source, target, step, step_seed))
            out.append((lab, current))
        return out
    down, up = _transfer_pairs(d0, DriftScenario(source, target, total_transfer, seed))
    out = []
    for k, lab in enumerate(labels, 1):
        if k == periods:
            keep = np.ones(down.size, dtype=bool)
        else:
            keep = generator(mix64(seed, k)).random(down.size) < k / periods
        out.append((lab, _apply(d0, down[keep], up[keep])))
    return out


def claim_share(transfer_count: int, d: Dataset) -> float:
    """Transfer size as a fraction of all claims in ``d``."""
    total = d.total_response()
    return transfer_count / total if total else math.nan
