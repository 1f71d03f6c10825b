import numpy as np
import pytest

from jointsync.errors import DomainError, NumericalError
from jointsync.harness import (
    GROUPS,
    ExperimentConfig,
    TrialResult,
    aggregate_rmse,
    montecarlo,
    run_trial,
    run_trials,
)


def test_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.n_nodes == 4 and cfg.k_list == tuple(range(5, 21))
    assert cfg.sigma == 1e-8 and cfg.span == (0.1, 10.0) and cfg.reference == 1


@pytest.mark.parametrize("kw", [{"trials": 0}, {"k_list": (4, 5)}, {"sigma": 0.0}, {"reference": 9},
                                {"estimators": ("foo",)}, {"span": (1.0, 1.0)}])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        ExperimentConfig(**kw)


def test_config_from_dict():
    cfg = ExperimentConfig.from_dict({"k_list": [5, 6], "pairs": [[2, 1], [1, 3], [2, 3]], "n_nodes": 3,
                                      "ranges": {"r_max": 500.0}})
    assert cfg.pairs == ((1, 2), (1, 3), (2, 3)) and cfg.ranges.r_max == 500.0
    with pytest.raises(DomainError):
        ExperimentConfig.from_dict({"bogus": 1})


def test_noise_free_trial_is_exact():
    cfg = ExperimentConfig(trials=1)
    for K in (5, 12, 20):
        res = run_trial(cfg, K, 3, sigma=0.0)
        for est in ("eepls", "eegls"):
            for g in ("omega", "phi"):
                assert np.all(res.sq_err[est][g] < 1e-16)
        assert not res.failed


def test_trial_deterministic():
    cfg = ExperimentConfig(trials=1, seed=5)
    a, b = run_trial(cfg, 10, 7), run_trial(cfg, 10, 7)
    for est in a.sq_err:
        for g in GROUPS:
            assert a.sq_err[est][g].tobytes() == b.sq_err[est][g].tobytes()
            assert a.crb[est][g].tobytes() == b.crb[est][g].tobytes()


def test_trial_entry_counts():
    cfg = ExperimentConfig(trials=1, n_nodes=5)
    res = run_trial(cfg, 8, 0)
    N, M = 5, 10
    for g in ("omega", "phi"):
        assert res.sq_err["eegls"][g].size == N - 1
        assert res.sq_err["eepls"][g].size == N - 1
    for g in ("rddot", "rdot", "r"):
        assert res.sq_err["eegls"][g].size == M
        assert res.sq_err["eepls"][g].size == N - 1


def test_trial_missing_link_reduces_pairwise_entries():
    cfg = ExperimentConfig(trials=1, pairs=((1, 2), (1, 3), (2, 3), (2, 4), (3, 4)))
    res = run_trial(cfg, 8, 0)
    assert res.sq_err["eegls"]["omega"].size == 3
    assert res.sq_err["eepls"]["omega"].size == 2  # node 4 has no link to the reference
    assert res.sq_err["eegls"]["r"].size == 5


def test_aggregate_single_entry():
    r = TrialResult(0, {"eegls": {"omega": np.array([0.25])}}, {"eegls": {"omega": np.array([4.0])}})
    row = aggregate_rmse([r], "eegls", "omega", 5)
    assert row.rmse == 0.5 and row.rcrb_root == 2.0 and row.trials == 1 and row.failed == 0


def test_aggregate_counts_failures_and_rejects_empty():
    good = TrialResult(0, {"eegls": {"omega": np.array([1.0, 9.0])}}, {"eegls": {"omega": np.array([1.0, 1.0])}})
    bad = TrialResult(1, failed={"eegls": "SingularSystemError"})
    row = aggregate_rmse([good, bad], "eegls", "omega")
    assert row.rmse == pytest.approx(np.sqrt(5.0)) and row.failed == 1 and row.trials == 1
    with pytest.raises(NumericalError):
        aggregate_rmse([bad], "eegls", "omega")


def test_omega_group_excludes_reference():
    cfg = ExperimentConfig(trials=1, reference=2)
    res = run_trial(cfg, 10, 0)
    assert np.all(res.crb["eegls"]["omega"] > 0)  # reference has zero bound and is excluded
    assert res.sq_err["eegls"]["omega"].size == 3


def test_rmse_doubles_with_sigma():
    cfg = ExperimentConfig(trials=300)
    rows = {}
    for s in (1e-8, 2e-8):
        results = run_trials(cfg, 15, sigma=s)
        rows[s] = {g: aggregate_rmse(results, "eegls", g) for g in GROUPS}
    for g in GROUPS:
        ratio = rows[2e-8][g].rmse / rows[1e-8][g].rmse
        assert ratio == pytest.approx(2.0, rel=0.05)


def test_montecarlo_row_cardinality():
    cfg = ExperimentConfig(trials=2)
    rows = montecarlo(cfg)
    assert len(rows) == 16 * 2 * 5
    assert all(np.isfinite(r.rmse) and np.isfinite(r.rcrb_root) and r.rcrb_root > 0 for r in rows)


def test_montecarlo_parallel_matches_serial():
    cfg = ExperimentConfig(trials=6, k_list=(6, 9))
    assert montecarlo(cfg, threads=1) == montecarlo(cfg, threads=2)


@pytest.mark.slow
def test_ratio_to_bound_approaches_one():
    cfg = ExperimentConfig(trials=400, k_list=(5, 20))
    rows = {(r.K, r.estimator, r.param_group): r for r in montecarlo(cfg)}
    for g in GROUPS:
        hi = rows[(20, "eegls", g)]
        assert abs(hi.rmse / hi.rcrb_root - 1) < 0.1
