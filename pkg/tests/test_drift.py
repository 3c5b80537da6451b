from dataclasses import replace

import numpy as np
import pytest

from ginidrift.data import CATEGORICAL, NUMERIC, Dataset
from ginidrift.drift import (
    DriftKind,
    DriftScenario,
    GroupPredicate,
    GroupSpec,
    SyntheticSpec,
    claim_share,
    drift_schedule,
    generate_portfolio,
    inject_drift,
)
from ginidrift.errors import (
    DisjointnessViolation,
    EmptyGroup,
    InsufficientClaimsInSource,
    InsufficientTargetRecords,
)
from ginidrift.inference import BootstrapConfig, bootstrap_null, drift_test
from ginidrift.metrics import gini, score_dataset

HIGH = GroupPredicate.parse("group in {high}")
LOW = GroupPredicate.parse("group in {low}")


def _totals(d, pred):
    return int(d.response[pred.mask(d)].sum())


def _toy():
    return Dataset({"group": ["high", "low"]}, {"group": CATEGORICAL},
                   [1.0, 1.0], [1, 0], [0.5, 0.1])


# ---------------------------------------------------------------- predicates


def test_predicate_parse_values_and_interval():
    p = GroupPredicate.parse("Area in {A, B}")
    assert p.values == frozenset({"A", "B"})
    q = GroupPredicate.parse("DrivAge in [25, 35)")
    assert q.interval == (25.0, 35.0)
    d = Dataset({"DrivAge": [24.0, 25.0, 34.9, 35.0]}, {"DrivAge": NUMERIC},
                [1.0] * 4, [0] * 4)
    assert q.mask(d).tolist() == [False, True, True, False]
    assert str(GroupPredicate.parse(str(q))) == str(q)


@pytest.mark.parametrize("text", ["DrivAge = 3", "DrivAge in (1, 2]", "x in"])
def test_predicate_parse_errors(text):
    with pytest.raises(ValueError):
        GroupPredicate.parse(text)


# ---------------------------------------------------------------- injection


def test_single_claim_transfer():
    out = inject_drift(_toy(), DriftScenario(HIGH, LOW, 1, 0))
    assert out.response.tolist() == [0, 1]
    assert out.exposure.tolist() == [1.0, 1.0]
    assert out.prediction.tolist() == [0.5, 0.1]


def test_zero_transfer_is_identity(portfolio):
    out = inject_drift(portfolio, DriftScenario(HIGH, LOW, 0, 3))
    assert np.array_equal(out.response, portfolio.response)


def test_transfer_moves_exactly_k(portfolio):
    out = inject_drift(portfolio, DriftScenario(HIGH, LOW, 150, 8))
    assert out.total_response() == portfolio.total_response()
    assert _totals(out, HIGH) == _totals(portfolio, HIGH) - 150
    assert _totals(out, LOW) == _totals(portfolio, LOW) + 150
    diff = out.response - portfolio.response
    assert set(np.unique(diff)) <= {-1, 0, 1}
    assert (out.response >= 0).all()
    assert out.exposure.tobytes() == portfolio.exposure.tobytes()
    assert out.prediction.tobytes() == portfolio.prediction.tobytes()
    assert all(np.array_equal(out.covariates[k], portfolio.covariates[k])
               for k in portfolio.covariates)


def test_seed_determinism(portfolio):
    a = inject_drift(portfolio, DriftScenario(HIGH, LOW, 50, 1))
    b = inject_drift(portfolio, DriftScenario(HIGH, LOW, 50, 1))
    c = inject_drift(portfolio, DriftScenario(HIGH, LOW, 50, 2))
    assert np.array_equal(a.response, b.response)
    assert not np.array_equal(a.response, c.response)
    assert _totals(a, HIGH) == _totals(c, HIGH)


def test_overlapping_groups():
    d = _toy()
    with pytest.raises(DisjointnessViolation):
        inject_drift(d, DriftScenario(HIGH, GroupPredicate.parse("group in {high, low}"), 1))


def test_empty_group():
    with pytest.raises(EmptyGroup):
        inject_drift(_toy(), DriftScenario(HIGH, GroupPredicate.parse("group in {mid}"), 1))


def test_insufficient_claims():
    with pytest.raises(InsufficientClaimsInSource):
        inject_drift(_toy(), DriftScenario(HIGH, LOW, 2))
    with pytest.raises(InsufficientClaimsInSource):
        inject_drift(_toy(), DriftScenario(LOW, HIGH, 1))


def test_insufficient_targets():
    d = Dataset({"group": ["high", "high", "low"]}, {"group": CATEGORICAL},
                [1.0] * 3, [1, 1, 0])
    with pytest.raises(InsufficientTargetRecords):
        inject_drift(d, DriftScenario(HIGH, LOW, 2))


def test_scenario_config(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text("# drift\nsource = group in {high}\ntarget = group in {low}\n"
                 "transfer_count = 150\nseed = 7\n")
    s = DriftScenario.read(p)
    assert s == DriftScenario(HIGH, LOW, 150, 7)


def test_claim_share(portfolio):
    assert claim_share(int(portfolio.total_response()), portfolio) == 1.0


# ---------------------------------------------------------------- portfolios


def test_generated_group_frequencies(portfolio, two_group_spec):
    for g in two_group_spec.groups:
        m = GroupPredicate("group", values={g.label}).mask(portfolio)
        e = portfolio.exposure[m].sum()
        freq = portfolio.response[m].sum() / e
        se = np.sqrt(g.frequency / e)
        assert abs(freq - g.frequency) < 3 * se
        assert np.all(portfolio.prediction[m] == g.frequency)


def test_generated_ages(portfolio, two_group_spec):
    for g in two_group_spec.groups:
        m = GroupPredicate("group", values={g.label}).mask(portfolio)
        age = portfolio.covariates["age"][m]
        assert age.min() >= g.age[0] and age.max() < g.age[1]
        assert np.all(age == np.round(age))


def test_generated_exposure_range(portfolio):
    assert portfolio.exposure.min() > 0.05 and portfolio.exposure.max() <= 1.0


def test_tiny_frequency_gives_no_claims():
    spec = SyntheticSpec((GroupSpec("a", 1.0, 1e-9),), 1000, 1)
    assert generate_portfolio(spec).total_response() == 0


def test_generation_deterministic(two_group_spec):
    a = generate_portfolio(replace(two_group_spec, n=500))
    b = generate_portfolio(replace(two_group_spec, n=500))
    assert a.response.tobytes() == b.response.tobytes()
    assert a.exposure.tobytes() == b.exposure.tobytes()


def test_synthetic_config():
    spec = SyntheticSpec.from_config({
        "n": "100", "seed": "3",
        "group.low": "share=0.7; frequency=0.05; age=35:45",
        "group.high": "share=0.3; frequency=0.15",
    })
    assert spec.n == 100 and spec.seed == 3
    assert spec.groups[0] == GroupSpec("low", 0.7, 0.05, (35, 45))
    assert spec.groups[1].age is None


def test_invalid_specs():
    with pytest.raises(ValueError):
        GroupSpec("a", 1.0, 0.0)
    with pytest.raises(ValueError):
        SyntheticSpec((GroupSpec("a", 1.0, 0.1),), 0)


# ---------------------------------------------------------------- schedules


@pytest.mark.parametrize("kind", list(DriftKind))
def test_single_period_matches_injection(portfolio, kind):
    ((_, d),) = drift_schedule(portfolio, kind, 1, 90, (HIGH, LOW), seed=5)
    ref = inject_drift(portfolio, DriftScenario(HIGH, LOW, 90, 5))
    assert np.array_equal(d.response, ref.response)


@pytest.mark.parametrize("kind", list(DriftKind))
def test_schedule_conserves_totals(portfolio, kind):
    out = drift_schedule(portfolio, kind, 4, 120, (HIGH, LOW), seed=2)
    assert [lab for lab, _ in out] == ["period-1", "period-2", "period-3", "period-4"]
    for _, d in out:
        assert d.total_response() == portfolio.total_response()
    assert _totals(out[-1][1], HIGH) == _totals(portfolio, HIGH) - 120


def test_incremental_cumulative_steps(portfolio):
    out = drift_schedule(portfolio, "incremental", 4, 120, (HIGH, LOW), seed=2)
    moved = [_totals(portfolio, HIGH) - _totals(d, HIGH) for _, d in out]
    assert moved == [30, 60, 90, 120]


def test_sudden_vs_incremental_pattern(portfolio):
    null = bootstrap_null(score_dataset(portfolio), BootstrapConfig(B=400, seed=1))

    def zs(kind):
        return [drift_test(gini(score_dataset(d)).value, null, 0.05).z
                for _, d in drift_schedule(portfolio, kind, 4, 200, (HIGH, LOW), seed=3)]

    sudden, incr = zs("sudden"), zs("incremental")
    g0 = drift_test(gini(score_dataset(portfolio)).value, null, 0.05).z
    assert sudden[:3] == [g0] * 3
    assert incr[0] > incr[1] > incr[2] > incr[3]
    assert abs(sudden[3]) > 3 and abs(incr[3]) > 3


def test_gradual_ramps(portfolio):
    out = drift_schedule(portfolio, "gradual", 5, 200, (HIGH, LOW), seed=4)
    moved = [_totals(portfolio, HIGH) - _totals(d, HIGH) for _, d in out]
    assert moved[-1] == 200
    assert moved[0] < moved[2] < moved[4]
    assert abs(moved[0] - 40) < 25
