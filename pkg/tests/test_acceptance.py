"""End-to-end acceptance checks; each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also collected in the terminal summary.
"""
import json
import time

import numpy as np
import pytest
from conftest import record, scaled_rel_err

from jointsync import (
    IdentifiabilityError,
    NoiseSpec,
    UnderdeterminedError,
    build_constraints,
    build_global_system,
    build_pair_system,
    ccrb,
    ccrb_theta,
    default_schedule,
    eegls_solve,
    eepls_solve,
    eta_from_theta,
    jacobian_theta_to_eta,
    sample_scenario,
    simulate_network,
    theta_from_eta,
)
from jointsync.model import split_blocks
from jointsync.ccrb import is_psd, nullspace_basis
from jointsync.cli import main
from jointsync.exchange import ExchangeLog, PairLog
from jointsync.harness import GROUPS, ExperimentConfig, aggregate_rmse, run_trials

TRIALS = 1000


@pytest.fixture(scope="module")
def mc_results():
    """Trials at the default setup for K in {5, 10, 15, 20}, plus their wall time."""
    cfg = ExperimentConfig(trials=TRIALS)
    t0 = time.perf_counter()
    res = {K: run_trials(cfg, K) for K in (5, 10, 15, 20)}
    return res, time.perf_counter() - t0


def test_noise_free_exactness():
    rng = np.random.default_rng(1)
    worst_p = worst_g = 0.0
    t0 = time.perf_counter()
    for _ in range(100):
        K = int(rng.integers(5, 21))
        sc = sample_scenario(4, rng)
        log = simulate_network(sc, default_schedule(K), NoiseSpec(0.0))
        gs = build_global_system(log)
        for method in ("nullspace", "kkt"):
            est = eegls_solve(gs, build_constraints(4, 6, 1), method=method)
            worst_g = max(worst_g, scaled_rel_err(est.theta_hat, sc.theta(), gs.A))
        th = sc.theta()
        for m, (i, j) in enumerate(gs.pairs):
            if i != 1:
                continue
            ps = build_pair_system(log[(i, j)])
            truth = np.array([th[j - 1], th[4 + j - 1], th[8 + m], th[14 + m], th[20 + m]])
            worst_p = max(worst_p, scaled_rel_err(eepls_solve(ps).theta_hat, truth, ps.A))
    elapsed = time.perf_counter() - t0
    ok = worst_p < 1e-8 and worst_g < 1e-8 and elapsed < 10
    record("1 noise-free exactness", ok,
           f"max scaled rel err eepls={worst_p:.2e} eegls={worst_g:.2e}, {elapsed:.2f} s")
    assert ok


def _block_rel_err(x, ref, n):
    """Relative error of each of the five parameter blocks, normwise within the block."""
    return max(float(np.linalg.norm(a - b) / np.linalg.norm(b))
               for a, b in zip(split_blocks(x, n), split_blocks(ref, n)))


def test_transform_round_trip():
    # Per-entry relative error of a small rdot is limited by the float64
    # rounding of delta (condition number |2 beta rddot / rdot|), so the
    # criterion is applied per parameter block; per-entry is reported.
    rng = np.random.default_rng(2)
    worst = worst_entry = 0.0
    for _ in range(10_000):
        sc = sample_scenario(4, rng, reference=None)
        eta = sc.eta()
        theta = theta_from_eta(eta, 4)
        back = eta_from_theta(theta, 4)
        worst = max(worst, _block_rel_err(back, eta, 4),
                    _block_rel_err(theta_from_eta(back, 4), theta, 4))
        worst_entry = max(worst_entry, float(np.max(np.abs(back - eta) / np.abs(eta))))
    ok = worst < 1e-12
    record("2 transform round trip", ok,
           f"max blockwise rel err {worst:.2e} over 1e4 draws (per-entry {worst_entry:.1e})")
    assert ok


def _fd_jacobian(theta, n, rel_step=1e-6):
    th = np.asarray(theta, dtype=np.longdouble)
    J = np.zeros((th.size, th.size))
    for k in range(th.size):
        h = rel_step * max(abs(float(th[k])), 1.0)
        tp, tm = th.copy(), th.copy()
        tp[k] += h
        tm[k] -= h
        J[:, k] = ((eta_from_theta(tp, n) - eta_from_theta(tm, n)) / (2 * h)).astype(float)
    return J


def test_jacobian_correctness():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        theta = sample_scenario(4, rng, reference=None).theta()
        J, F = jacobian_theta_to_eta(theta, 4), _fd_jacobian(theta, 4)
        mask = (J != 0) | (F != 0)
        worst = max(worst, float(np.max(np.abs(J - F)[mask] / np.abs(J)[mask])))
    ok = worst < 1e-6
    record("3 jacobian vs finite differences", ok, f"max rel deviation {worst:.2e} on 100 draws")
    assert ok


def test_ccrb_properties():
    rng = np.random.default_rng(4)
    sc = sample_scenario(4, rng)
    log = simulate_network(sc, default_schedule(20), NoiseSpec(0.0))
    gs, cs = build_global_system(log), build_constraints(4, 6, 1)
    res = ccrb(gs, cs, 1e-8, sc.theta())
    psd = is_psd(res.Sigma_theta) and is_psd(res.Sigma_eta)
    scaled = ccrb_theta(gs, cs, 4e-8)
    scaling = np.array_equal(scaled, 16.0 * ccrb_theta(gs, cs, 1e-8))
    U = nullspace_basis(cs)
    Qr, _ = np.linalg.qr(rng.normal(size=(U.shape[1], U.shape[1])))
    rotated = ccrb_theta(gs, cs, 1e-8, U @ Qr)
    basis = float(np.max(np.abs(rotated - res.Sigma_theta)) / np.max(np.abs(res.Sigma_theta)))
    ref_zero = not res.Sigma_theta[[0, 4], :].any() and not res.Sigma_eta[[0, 4], :].any()
    ok = psd and scaling and basis < 1e-10 and ref_zero
    record("4 CCRB properties", ok,
           f"psd={psd} exact sigma^2 scaling={scaling} basis dev={basis:.1e} reference zero={ref_zero}")
    assert ok


def test_global_beats_pairwise_on_clocks(mc_results):
    res, elapsed = mc_results
    worst_margin, parts = np.inf, []
    for K, results in res.items():
        for g in ("omega", "phi"):
            a = aggregate_rmse(results, "eegls", g, K)
            b = aggregate_rmse(results, "eepls", g, K)
            slack = 3.0 * np.hypot(a.rmse_se, b.rmse_se)
            worst_margin = min(worst_margin, (b.rmse - a.rmse + slack) / b.rmse)
            parts.append(f"K={K} {g} {a.rmse / b.rmse:.3f}")
    ok = worst_margin >= 0 and elapsed < 300
    record("5 eegls clock RMSE <= eepls", ok,
           f"eegls/eepls ratios [{', '.join(parts)}], {TRIALS} trials/K, {elapsed:.1f} s")
    assert ok


def test_range_bound_attainment(mc_results):
    results = mc_results[0][20]
    ratios = {g: aggregate_rmse(results, "eegls", g, 20) for g in ("rddot", "rdot", "r")}
    vals = {g: r.rmse / r.rcrb_root for g, r in ratios.items()}
    ok = all(0.95 <= v <= 1.3 for v in vals.values())
    record("6 range RMSE/RCRB at K=20", ok, " ".join(f"{g}={v:.3f}" for g, v in vals.items()))
    assert ok


def test_noise_linearity():
    cfg = ExperimentConfig(trials=TRIALS)
    sigmas = np.array([1e-7, 1e-8, 1e-9])
    slopes = {}
    for est in ("eegls", "eepls"):
        runs = [run_trials(cfg, 20, sigma=s) for s in sigmas]
        for g in GROUPS:
            rmse = [aggregate_rmse(r, est, g).rmse for r in runs]
            slopes[f"{est}.{g}"] = float(np.polyfit(np.log10(sigmas), np.log10(rmse), 1)[0])
    ok = all(abs(s - 1.0) <= 0.1 for s in slopes.values())
    lo, hi = min(slopes.values()), max(slopes.values())
    record("7 RMSE slope vs sigma", ok, f"slopes in [{lo:.4f}, {hi:.4f}] over {len(slopes)} groups")
    assert ok


def test_identifiability_guards():
    short = PairLog(np.arange(4.0), np.arange(4.0) + 1e-6, np.array([1.0, -1, 1, -1]))
    oneway = PairLog(np.arange(8.0), np.arange(8.0) + 1e-6, np.ones(8))
    checks = {}
    for name, entry, exc in (("K=4", short, UnderdeterminedError), ("one-direction", oneway, IdentifiabilityError)):
        log = ExchangeLog(2, {(1, 2): entry})
        caught = []
        for fn in (lambda: build_pair_system(entry), lambda: build_global_system(log)):
            try:
                fn()
                caught.append(False)
            except exc:
                caught.append(True)
        checks[name] = all(caught)

    rng = np.random.default_rng(8)
    sc = sample_scenario(4, rng)
    pairs = [(1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]  # link (1,4) removed
    log = simulate_network(sc, default_schedule(10), NoiseSpec(0.0), pairs=pairs)
    est = eegls_solve(build_global_system(log, pairs), build_constraints(4, pairs, 1))
    clock_err = float(np.max(np.abs(est.eta_hat[:8] - sc.eta(pairs)[:8])))
    checks["missing link"] = clock_err < 1e-9
    ok = all(checks.values())
    record("8 identifiability guards", ok,
           " ".join(f"{k}={'ok' if v else 'bad'}" for k, v in checks.items()) + f" (clock err {clock_err:.1e})")
    assert ok


def test_montecarlo_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k_list": [5, 10, 20], "trials": 50, "seed": 11}))
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    codes = [main(["montecarlo", "--config", str(cfg), "--out", str(o)]) for o in outs]
    same = outs[0].read_bytes() == outs[1].read_bytes()
    ok = codes == [0, 0] and same
    record("9 montecarlo determinism", ok, f"exit codes {codes}, byte-identical={same}")
    assert ok
