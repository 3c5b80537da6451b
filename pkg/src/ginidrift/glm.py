"""Poisson log-link GLM with a log-exposure offset.

Covariates enter as reference-coded one-hot blocks (categorical columns, or
numeric columns cut into labelled buckets) or as plain linear terms. The
fit maximises the Poisson log-likelihood by Newton's method with
step-halving on the deviance; no penalty is applied.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data import CATEGORICAL, Dataset
from .errors import (
    ConvergenceWarning,
    DataError,
    MissingColumn,
    NonConvergence,
    RankDeficientDesign,
    UnseenLevel,
)

MAX_HALVINGS = 20
INTERCEPT = "(Intercept)"


@dataclass(frozen=True)
class CategoricalTerm:
    name: str
    levels: tuple[str, ...]
    reference: str

    def __post_init__(self):
        if self.reference not in self.levels:
            raise DataError(f"{self.name}: reference level {self.reference!r} not among levels")

    def columns(self):
        return [f"{self.name}={lv}" for lv in self.levels if lv != self.reference]

    def codes(self, d: Dataset) -> np.ndarray:
        index = {lv: j for j, lv in enumerate(self.levels)}
        out = np.empty(d.n, dtype=np.int64)
        for i, v in enumerate(d.covariates[self.name]):
            key = _level_str(v, d.kinds[self.name])
            if key not in index:
                raise UnseenLevel(self.name, key)
            out[i] = index[key]
        return out

    def to_dict(self):
        return {"type": "categorical", "name": self.name, "levels": list(self.levels),
                "reference": self.reference}


@dataclass(frozen=True)
class BinnedTerm:
    """Numeric covariate cut at ``edges``: ``[e0, e1), ..., [e_{k-1}, e_k]``."""

    name: str
    edges: tuple[float, ...]
    reference: int = 0  # bucket index

    def __post_init__(self):
        if len(self.edges) < 2 or any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise DataError(f"{self.name}: bin edges must be strictly increasing")
        if not 0 <= self.reference < len(self.edges) - 1:
            raise DataError(f"{self.name}: reference bucket out of range")

    @property
    def labels(self):
        e = self.edges
        return [f"[{e[k]:g},{e[k + 1]:g}{']' if k == len(e) - 2 else ')'}"
                for k in range(len(e) - 1)]

    def columns(self):
        return [f"{self.name}={lab}" for k, lab in enumerate(self.labels) if k != self.reference]

    def codes(self, d: Dataset) -> np.ndarray:
        x = d.covariates[self.name].astype(np.float64)
        bad = np.flatnonzero((x < self.edges[0]) | (x > self.edges[-1]))
        if bad.size:
            raise UnseenLevel(self.name, float(x[bad[0]]))
        k = np.searchsorted(self.edges, x, side="right") - 1
        return np.minimum(k, len(self.edges) - 2)

    def to_dict(self):
        return {"type": "binned", "name": self.name, "edges": list(self.edges),
                "reference": self.reference}


@dataclass(frozen=True)
class LinearTerm:
    name: str

    def columns(self):
        return [self.name]

    def to_dict(self):
        return {"type": "linear", "name": self.name}


def _level_str(v, kind) -> str:
    return str(v) if kind == CATEGORICAL else repr(float(v))


def _term_from_dict(obj):
    t = obj["type"]
    if t == "categorical":
        return CategoricalTerm(obj["name"], tuple(obj["levels"]), obj["reference"])
    if t == "binned":
        return BinnedTerm(obj["name"], tuple(float(e) for e in obj["edges"]), int(obj["reference"]))
    if t == "linear":
        return LinearTerm(obj["name"])
    raise DataError(f"unknown term type {t!r}")


@dataclass(frozen=True)
class DesignSpec:
    terms: tuple

    @property
    def columns(self) -> list[str]:
        cols = [INTERCEPT]
        for t in self.terms:
            cols.extend(t.columns())
        return cols

    @classmethod
    def from_dataset(cls, d: Dataset, covariates=None, bins=None, references=None,
                     linear=()) -> "DesignSpec":
        """Derive a design from the levels present in ``d``.

        Categorical columns become one-hot blocks; numeric columns listed in
        ``bins`` (name -> edges) are bucketed, other numeric columns enter
        linearly. Reference levels default to the first sorted level (first
        bucket); ``references`` overrides them by level string or bucket index.
        """
        bins, references = bins or {}, references or {}
        terms = []
        for name in (d.covariate_names if covariates is None else covariates):
            if name not in d.covariates:
                raise MissingColumn(name)
            if name in bins:
                terms.append(BinnedTerm(name, tuple(float(e) for e in bins[name]),
                                        int(references.get(name, 0))))
            elif d.kinds[name] == CATEGORICAL and name not in linear:
                levels = tuple(sorted({_level_str(v, CATEGORICAL) for v in d.covariates[name]}))
                terms.append(CategoricalTerm(name, levels, str(references.get(name, levels[0]))))
            else:
                terms.append(LinearTerm(name))
        return cls(tuple(terms))

    def matrix(self, d: Dataset) -> np.ndarray:
        blocks = [np.ones((d.n, 1))]
        for t in self.terms:
            if t.name not in d.covariates:
                raise MissingColumn(t.name)
            if isinstance(t, LinearTerm):
                blocks.append(d.covariates[t.name].astype(np.float64).reshape(-1, 1))
                continue
            codes = t.codes(d)
            ref = t.levels.index(t.reference) if isinstance(t, CategoricalTerm) else t.reference
            n_levels = len(t.levels) if isinstance(t, CategoricalTerm) else len(t.edges) - 1
            keep = [k for k in range(n_levels) if k != ref]
            block = np.zeros((d.n, len(keep)))
            for j, k in enumerate(keep):
                block[codes == k, j] = 1.0
            blocks.append(block)
        return np.hstack(blocks)

    def to_dict(self):
        return {"terms": [t.to_dict() for t in self.terms]}

    @classmethod
    def from_dict(cls, obj) -> "DesignSpec":
        return cls(tuple(_term_from_dict(t) for t in obj["terms"]))


@dataclass(frozen=True, eq=False)
class GlmModel:
    coefficients: np.ndarray
    design: DesignSpec
    iterations: int
    gradient_norm: float
    converged: bool
    deviance: float

    def to_dict(self) -> dict:
        return {"family": "poisson", "link": "log", "offset": "log(exposure)",
                "design": self.design.to_dict(),
                "columns": self.design.columns,
                "coefficients": [float(b) for b in self.coefficients],
                "iterations": self.iterations, "gradient_norm": self.gradient_norm,
                "converged": self.converged, "deviance": self.deviance}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, obj) -> "GlmModel":
        design = DesignSpec.from_dict(obj["design"])
        beta = np.array(obj["coefficients"], dtype=np.float64)
        if beta.size != len(design.columns):
            raise DataError("coefficient count does not match the design")
        return cls(beta, design, int(obj["iterations"]), float(obj["gradient_norm"]),
                   bool(obj["converged"]), float(obj["deviance"]))

    @classmethod
    def from_json(cls, text: str) -> "GlmModel":
        return cls.from_dict(json.loads(text))

    def coef_dict(self) -> dict:
        return dict(zip(self.design.columns, self.coefficients.tolist()))


def _deviance(y, mu) -> float:
    pos = y > 0
    t = mu - y
    t[pos] += y[pos] * np.log(y[pos] / mu[pos])
    return 2.0 * math.fsum(t)


def _dependent_columns(X, columns) -> list[str]:
    gram = X.T @ X
    _, r, piv = scipy.linalg.qr(gram, pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(gram.shape) * np.finfo(float).eps * 1e3 if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    return [columns[j] for j in sorted(piv[rank:])]


def fit_poisson(d: Dataset, spec: DesignSpec | None = None, tol: float = 1e-10,
                max_iter: int = 50, trace=None) -> GlmModel:
    """Maximum-likelihood Poisson fit with ``log(exposure)`` offset.

    Converges when the max-norm of the score vector falls below ``tol``;
    stopping at ``max_iter`` emits a :class:`ConvergenceWarning`. ``trace``,
    if given, is a list that receives the deviance after every iteration.
    """
    spec = spec or DesignSpec.from_dataset(d)
    X = spec.matrix(d)
    columns = spec.columns
    dependent = _dependent_columns(X, columns)
    if dependent:
        raise RankDeficientDesign(dependent)
    y = d.response.astype(np.float64)
    offset = np.log(d.exposure)
    total_y, total_e = float(y.sum()), d.total_exposure()
    if total_y <= 0:
        raise DataError("cannot fit a Poisson GLM without any claims")

    beta = np.zeros(X.shape[1])
    beta[0] = math.log(total_y / total_e)
    mu = np.exp(X @ beta + offset)
    dev = _deviance(y, mu)
    if trace is not None:
        trace.append(dev)
    grad = X.T @ (y - mu)
    gnorm = float(np.max(np.abs(grad)))
    it = 0
    while gnorm >= tol and it < max_iter:
        it += 1
        hess = (X * mu[:, None]).T @ X
        step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(hess), grad)
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + t * step
            eta = X @ cand + offset
            if np.all(np.isfinite(eta)) and eta.max() < 700:
                mu_c = np.exp(eta)
                dev_c = _deviance(y, mu_c)
                if dev_c <= dev * (1 + 1e-14):
                    break
            t *= 0.5
        else:
            raise NonConvergence(it, gnorm)
        beta, mu, dev = cand, mu_c, dev_c
        if trace is not None:
            trace.append(dev)
        grad = X.T @ (y - mu)
        gnorm = float(np.max(np.abs(grad)))
    converged = gnorm < tol
    if not converged:
        warnings.warn(f"Poisson fit stopped after {it} iterations with gradient "
                      f"max-norm {gnorm:.3e}", ConvergenceWarning, stacklevel=2)
    if not np.all(np.isfinite(beta)):
        raise NonConvergence(it, gnorm)
    return GlmModel(beta, spec, it, gnorm, converged, dev)


def predict(m: GlmModel, d: Dataset) -> Dataset:
    """Attach per-unit-exposure frequency predictions ``exp(x'beta)``."""
    X = m.design.matrix(d)
    return d.with_predictions(np.exp(X @ m.coefficients))
