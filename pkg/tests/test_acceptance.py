"""Acceptance suite: one verdict line per criterion in the terminal summary.

Tolerances are pinned as module constants. Criterion 7 needs the public
French motor third-party liability frequency data (``freMTPL2freq``) as a
train/test pair of CSV files given by ``GINIDRIFT_FREMTPL_TRAIN`` and
``GINIDRIFT_FREMTPL_TEST``; without them it is skipped.
"""
import math
import os
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from ginidrift.data import CATEGORICAL, NUMERIC, Dataset, preaggregate, time_split_extreme
from ginidrift.drift import (
    DriftScenario,
    GroupPredicate,
    GroupSpec,
    SyntheticSpec,
    generate_portfolio,
    inject_drift,
)
from ginidrift.errors import DegenerateDenominator, ZeroTotalResponse
from ginidrift.glm import DesignSpec, fit_poisson, predict
from ginidrift.inference import BootstrapConfig, bootstrap_null, drift_test
from ginidrift.metrics import (
    CapCurve,
    ScoredObservations,
    TiePolicy,
    balance_correct,
    dataset_deviance_loss,
    empirical_cap,
    gini,
    score_dataset,
)
from oracles import brute_force_gini

ORACLE_TOL = 1e-12
ANCHOR_TOL = 1e-12
TIE_BOUND_INSTANCES = 1000
BOOT_B = 5000
MAX_ABS_SKEW = 0.15
MAX_ABS_EXCESS_KURTOSIS = 0.3
BOOT_SECONDS = 60.0
DRIFT_SHARES = (0.02, 0.04, 0.06)
DRIFT_SEEDS = 100
MIN_REJECTIONS = 90
ALPHA = 0.05
TIME_SPLIT_COEF_TOL = 1e-8
# float64 cannot represent every exp(b) exactly; 4 ulp is the attainable resolution
INTERCEPT_REL_TOL = 2.0 ** -50
BALANCE_REL_TOL = 1e-9
FREMTPL_GINI, FREMTPL_GINI_TOL = 0.3779, 0.003
FREMTPL_SD, FREMTPL_SD_TOL = 0.0109, 0.0015
FREMTPL_Z, FREMTPL_Z_TOL = (-1.2794, -1.9285, -2.3805), 0.15
FREMTPL_CLAIM_SHARES = (0.038, 0.057, 0.0756)
FREMTPL_AGG = (64_978, 35_967, 2_645)

HIGH = GroupPredicate.parse("group in {high}")
LOW = GroupPredicate.parse("group in {low}")
POLICIES = (TiePolicy.best(), TiePolicy.worst(), TiePolicy.average())


@pytest.fixture(scope="module")
def synthetic():
    spec = SyntheticSpec((GroupSpec("low", 0.5, 0.05), GroupSpec("high", 0.5, 0.15)),
                         20_000, seed=2024)
    return generate_portfolio(spec, provenance="holdout-synthetic")


@pytest.fixture(scope="module")
def synthetic_null(synthetic):
    t0 = time.perf_counter()
    null = bootstrap_null(score_dataset(synthetic), BootstrapConfig(B=BOOT_B, seed=1))
    return null, time.perf_counter() - t0


def _random_instance(rng, n_max=8):
    n = int(rng.integers(2, n_max + 1))
    y = rng.integers(0, 3, n)
    score = rng.integers(0, 3, n) / 4.0  # few levels, many ties
    w = rng.choice([0.25, 0.5, 1.0], n)
    return y, score, w


def test_criterion_1_oracle_equivalence(criterion):
    rng = np.random.default_rng(1)
    worst_err, checked, degenerate = 0.0, 0, 0
    for _ in range(400):
        y, score, w = _random_instance(rng)
        for weighting, ww in (("count", None), ("exposure", w)):
            obs = ScoredObservations(y, score, w)
            if y.sum() == 0:
                with pytest.raises(ZeroTotalResponse):
                    gini(obs, TiePolicy.best(), weighting)
                degenerate += 1
                continue
            slope = y / (w if ww is not None else 1.0)
            if slope.min() == slope.max():
                with pytest.raises(DegenerateDenominator):
                    gini(obs, TiePolicy.best(), weighting)
                degenerate += 1
                continue
            ref = brute_force_gini(y, score, ww)
            got = [gini(obs, p, weighting).value for p in POLICIES]
            worst_err = max(worst_err, *(abs(a - b) for a, b in zip(got, ref)))
            checked += 1
    ok = worst_err <= ORACLE_TOL
    criterion(1, ok, f"{checked} cases (n<=8, both weightings), max |error| {worst_err:.2e} "
                     f"<= {ORACLE_TOL:g}; {degenerate} degenerate cases raised")
    assert ok


def test_criterion_2_anchors(criterion):
    y = np.array([0, 3, 1, 0, 2])
    perfect = gini(ScoredObservations(y, y.astype(float) + 0.1), TiePolicy.best()).value
    flat = gini(ScoredObservations(y, np.full(5, 0.7)), TiePolicy.average()).value
    rng = np.random.default_rng(2)
    violations = 0
    for k in range(TIE_BOUND_INSTANCES):
        while True:
            y, score, w = _random_instance(rng, 12)
            if y.sum() > 0 and (y / w).min() != (y / w).max():
                break
        obs = ScoredObservations(y, score, w)
        weighting = "count" if k % 2 else "exposure"
        if weighting == "count" and y.min() == y.max():
            continue
        lo = gini(obs, TiePolicy.worst(), weighting).value
        mid = gini(obs, TiePolicy.random(k), weighting).value
        hi = gini(obs, TiePolicy.best(), weighting).value
        violations += not (lo - 1e-15 <= mid <= hi + 1e-15)
    ok = perfect == 1.0 and abs(flat) <= ANCHOR_TOL and violations == 0
    criterion(2, ok, f"perfect ranking {perfect!r}, constant score {flat:.1e}, "
                     f"Worst<=Random<=Best violated {violations}/{TIE_BOUND_INSTANCES}")
    assert ok


def test_criterion_3_bootstrap(criterion, synthetic, synthetic_null):
    null, seconds = synthetic_null
    obs = score_dataset(synthetic)
    again = bootstrap_null(obs, BootstrapConfig(B=BOOT_B, seed=1))
    threaded = bootstrap_null(obs, BootstrapConfig(B=BOOT_B, seed=1, n_jobs=4))
    identical = (null.replicate_values.tobytes() == again.replicate_values.tobytes()
                 == threaded.replicate_values.tobytes()
                 and null.to_dict() == again.to_dict() == threaded.to_dict())
    skew = float(stats.skew(null.replicate_values))
    kurt = float(stats.kurtosis(null.replicate_values))
    ok = (identical and abs(skew) < MAX_ABS_SKEW and abs(kurt) < MAX_ABS_EXCESS_KURTOSIS
          and seconds < BOOT_SECONDS)
    criterion(3, ok, f"bit-identical across runs/threads: {identical}; skew {skew:+.4f}, "
                     f"excess kurtosis {kurt:+.4f}; B={BOOT_B} in {seconds:.1f}s")
    assert ok


def test_criterion_4_monotone_drift(criterion, synthetic, synthetic_null):
    null, _ = synthetic_null
    total = synthetic.total_response()
    counts = [round(s * total) for s in DRIFT_SHARES]
    non_monotone, rejections, zs = 0, 0, []
    for seed in range(DRIFT_SEEDS):
        res = [drift_test(gini(score_dataset(inject_drift(
            synthetic, DriftScenario(HIGH, LOW, k, seed)))).value, null, ALPHA) for k in counts]
        z = [r.z for r in res]
        zs.append(z)
        non_monotone += not (z[0] > z[1] > z[2])
        rejections += res[2].reject
    mean_z = np.mean(zs, axis=0)
    ok = non_monotone == 0 and rejections >= MIN_REJECTIONS
    criterion(4, ok, f"transfers {counts} of {total} claims: mean z "
                     f"{', '.join(f'{v:.2f}' for v in mean_z)}; strictly decreasing in "
                     f"{DRIFT_SEEDS - non_monotone}/{DRIFT_SEEDS} seeds; 6% rejects in "
                     f"{rejections}/{DRIFT_SEEDS} (need {MIN_REJECTIONS})")
    assert ok


def test_criterion_5_time_split(criterion, two_group_spec):
    worst, all_drop, all_rise = 0.0, True, True
    details = []
    for seed in range(3):
        d = generate_portfolio(replace(two_group_spec, seed=seed))
        spec = DesignSpec.from_dataset(d)  # group one-hot, age linear
        before = fit_poisson(d, spec)
        split = time_split_extreme(d)
        after = fit_poisson(split, spec)
        worst = max(worst, float(np.max(np.abs(before.coefficients - after.coefficients))))
        agg = preaggregate(predict(before, d))
        split_agg = time_split_extreme(agg)
        g0, g1 = gini(score_dataset(agg)).value, gini(score_dataset(split_agg)).value
        l0, l1 = dataset_deviance_loss(agg), dataset_deviance_loss(split_agg)
        all_drop &= g1 < g0
        all_rise &= l1 > l0
        details.append(f"Gini {g0:.3f}->{g1:.3f}, deviance {l0:.4f}->{l1:.4f}")
    ok = worst <= TIME_SPLIT_COEF_TOL and all_drop and all_rise
    criterion(5, ok, f"max coefficient change {worst:.1e} <= {TIME_SPLIT_COEF_TOL:g}; "
                     + "; ".join(details))
    assert ok


def test_criterion_6_balance(criterion, portfolio, synthetic):
    worst_intercept, worst_balance = 0.0, 0.0
    for d in (portfolio, synthetic, time_split_extreme(portfolio)):
        freq = d.total_response() / d.total_exposure()
        m = fit_poisson(d, DesignSpec(()))
        worst_intercept = max(worst_intercept, abs(math.exp(m.coefficients[0]) / freq - 1))
        for bins in ("unique", 10):
            # a deliberately miscalibrated model
            skewed = d.with_predictions(d.prediction * np.linspace(0.5, 1.7, d.n))
            bc = balance_correct(skewed, bins)
            fitted = math.fsum(bc.prediction * bc.exposure)
            worst_balance = max(worst_balance, abs(fitted / d.total_response() - 1))
    ok = worst_intercept <= INTERCEPT_REL_TOL and worst_balance <= BALANCE_REL_TOL
    criterion(6, ok, f"intercept-only frequency rel. error {worst_intercept:.1e} "
                     f"(<= 4 ulp); balance_correct global rel. error {worst_balance:.1e} "
                     f"<= {BALANCE_REL_TOL:g}")
    assert ok


# ---------------------------------------------------------------- criterion 7


def _load_fremtpl(path):
    """Read a freMTPL2freq CSV and apply the usual frequency-model feature preprocessing."""
    import csv
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    col = lambda k: np.array([r[k].strip().strip("'\"") for r in rows])  # noqa: E731
    num = lambda k: col(k).astype(float)  # noqa: E731
    covs = {
        "Area": np.array([float("ABCDEF".index(a) + 1) for a in col("Area")]),
        "VehPower": np.array([str(int(min(v, 9))) for v in num("VehPower")], dtype=object),
        "VehAge": num("VehAge"),
        "DrivAge": num("DrivAge"),
        "BonusMalus": np.minimum(num("BonusMalus"), 150.0),
        "VehBrand": col("VehBrand").astype(object),
        "VehGas": col("VehGas").astype(object),
        "Density": np.log(num("Density")),
        "Region": col("Region").astype(object),
    }
    kinds = {k: (NUMERIC if v.dtype.kind == "f" else CATEGORICAL) for k, v in covs.items()}
    return Dataset(covs, kinds, np.minimum(num("Exposure"), 1.0),
                   np.minimum(num("ClaimNb"), 4).astype(np.int64), provenance=str(path))


FREMTPL_BINS = {"VehAge": [0, 1, 11, 1000], "DrivAge": [18, 21, 26, 31, 41, 51, 71, 200]}
FREMTPL_REFS = {"VehAge": 1, "DrivAge": 5}  # [1,11) and [51,71)


def test_criterion_7_fremtpl_reference(criterion):
    train_path = os.environ.get("GINIDRIFT_FREMTPL_TRAIN")
    test_path = os.environ.get("GINIDRIFT_FREMTPL_TEST")
    if not (train_path and test_path and os.path.exists(train_path)
            and os.path.exists(test_path)):
        criterion(7, None, "freMTPL2freq train/test files not available "
                           "(set GINIDRIFT_FREMTPL_TRAIN and GINIDRIFT_FREMTPL_TEST)")
        pytest.skip("freMTPL2freq not available")
    train, test = _load_fremtpl(train_path), _load_fremtpl(test_path)
    spec = DesignSpec.from_dataset(train, bins=FREMTPL_BINS, references=FREMTPL_REFS)
    model = fit_poisson(train, spec)
    hold = preaggregate(predict(model, test))
    checks = []
    checks.append(((hold.n, round(hold.total_exposure()), hold.total_response()) == FREMTPL_AGG,
                   f"aggregated n/exposure/claims {hold.n}/{hold.total_exposure():.0f}/"
                   f"{hold.total_response()}"))
    g = gini(score_dataset(hold)).value
    checks.append((abs(g - FREMTPL_GINI) <= FREMTPL_GINI_TOL, f"Gini {g:.4f}"))
    null = bootstrap_null(score_dataset(hold), BootstrapConfig(B=10_000, seed=0, n_jobs=4))
    checks.append((abs(null.sd - FREMTPL_SD) <= FREMTPL_SD_TOL, f"sd {null.sd:.4f}"))
    young = GroupPredicate.parse("DrivAge in [18, 35)")
    old = GroupPredicate.parse("DrivAge in [35, 200)")
    total = hold.total_response()
    for share, z_ref in zip(FREMTPL_CLAIM_SHARES, FREMTPL_Z):
        zs = [drift_test(gini(score_dataset(inject_drift(
            hold, DriftScenario(young, old, round(share * total), s)))).value, null, ALPHA).z
            for s in range(20)]
        checks.append((abs(np.mean(zs) - z_ref) <= FREMTPL_Z_TOL, f"z {np.mean(zs):.3f}"))
    ok = all(c for c, _ in checks)
    criterion(7, ok, "; ".join(t for _, t in checks))
    assert ok


# ---------------------------------------------------------------- criterion 8


def _fig6_portfolio():
    rng = np.random.default_rng(0)
    n1 = n2 = 2000
    e = np.r_[np.ones(n1), np.full(n2, 0.02)]
    f = np.r_[rng.uniform(0.05, 0.3, n1), np.full(n2, 0.1)]
    y = np.r_[rng.poisson(f[:n1]), np.zeros(n2, dtype=np.int64)]
    y[n1 + rng.choice(n2, 40, replace=False)] = 1  # small exposures, low scores, claims
    return ScoredObservations(y, f * e, e)


def test_criterion_8_cap_validity(criterion, portfolio):
    curves = 0
    sources = [score_dataset(portfolio), score_dataset(preaggregate(portfolio)), _fig6_portfolio()]
    for obs in sources:
        for weighting in ("count", "exposure"):
            for order_by in ("score", "response"):
                for policy in (TiePolicy.best(), TiePolicy.worst(), TiePolicy.random(3)):
                    c = empirical_cap(obs, order_by, policy, weighting)
                    CapCurve(c.alpha, c.cap, c.weighting)  # re-validates invariants
                    assert c.alpha[0] == 0 and c.cap[0] == 0
                    assert c.alpha[-1] == 1 and c.cap[-1] == 1
                    assert np.all(np.diff(c.alpha) > 0) and np.all(np.diff(c.cap) >= 0)
                    curves += 1
    fig6 = _fig6_portfolio()
    g_count = gini(fig6, weighting="count").value
    g_exposure = gini(fig6, weighting="exposure").value
    ok = g_count > g_exposure
    criterion(8, ok, f"{curves} curves valid; constructed portfolio Gini count-weighted "
                     f"{g_count:.4f} > exposure-weighted {g_exposure:.4f}")
    assert ok
