"""Gini-index hypothesis tests for concept drift in claim frequency models."""
from ._version import TOOL_VERSION as __version__
from .data import ColumnRoles, Dataset, PolicyRecord, load_csv, preaggregate, time_split_extreme, write_csv
from .drift import (
    DriftKind,
    DriftScenario,
    GroupPredicate,
    GroupSpec,
    SyntheticSpec,
    drift_schedule,
    generate_portfolio,
    inject_drift,
)
from .glm import DesignSpec, GlmModel, fit_poisson, predict
from .inference import (
    BootstrapConfig,
    DriftTestResult,
    MonitoringReport,
    NullDistribution,
    bootstrap_null,
    drift_test,
    monitor,
    per_period_monitor,
)
from .kernels import BACKEND
from .metrics import (
    CapCurve,
    DevianceConfig,
    GiniResult,
    ScoredObservations,
    TiePolicy,
    WeightingMode,
    balance_correct,
    calibration_table,
    empirical_cap,
    gini,
    poisson_deviance_loss,
    score_dataset,
)

__all__ = [
    "BACKEND", "BootstrapConfig", "CapCurve", "ColumnRoles", "Dataset", "DesignSpec",
    "DevianceConfig", "DriftKind", "DriftScenario", "DriftTestResult", "GiniResult",
    "GlmModel", "GroupPredicate", "GroupSpec", "MonitoringReport", "NullDistribution",
    "PolicyRecord", "ScoredObservations", "SyntheticSpec", "TiePolicy", "WeightingMode",
    "__version__", "balance_correct", "bootstrap_null", "calibration_table", "drift_schedule",
    "drift_test", "empirical_cap", "fit_poisson", "generate_portfolio", "gini", "inject_drift",
    "load_csv", "monitor", "per_period_monitor", "poisson_deviance_loss", "predict",
    "preaggregate", "score_dataset", "time_split_extreme", "write_csv",
]
