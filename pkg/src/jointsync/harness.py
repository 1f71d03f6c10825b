"""Monte Carlo driver: RMSE of both estimators against the root CCRB.

Each trial draws a fresh scenario from its own RNG stream
``default_rng(seed + trial_index)``, so trial ``k`` sees the same geometry
for every ``K`` and trials can be evaluated in any order or in parallel.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .ccrb import ccrb
from .errors import DomainError, IdentifiabilityError, NumericalError
from .estimators import (
    build_constraints,
    build_global_system,
    eegls_solve,
    eepls_network,
)
from .exchange import NoiseSpec, ScenarioRanges, default_schedule, sample_scenario, simulate_network
from .model import SPEED_OF_LIGHT, Pair, all_pairs, normalize_pairs

GROUPS = ("omega", "phi", "rddot", "rdot", "r")
ESTIMATORS = ("eepls", "eegls")


@dataclass(frozen=True)
class ExperimentConfig:
    n_nodes: int = 4
    k_list: tuple[int, ...] = tuple(range(5, 21))
    trials: int = 1000
    sigma: float = 1e-8
    seed: int = 0
    span: tuple[float, float] = (0.1, 10.0)
    reference: int = 1
    ranges: ScenarioRanges = ScenarioRanges()
    pairs: tuple[Pair, ...] | None = None
    estimators: tuple[str, ...] = ESTIMATORS
    c: float = SPEED_OF_LIGHT
    k: int | None = None  # single K used by ``simulate`` and ``crb``

    def __post_init__(self):
        if self.n_nodes < 2:
            raise DomainError("n_nodes must be at least 2")
        if self.trials < 1:
            raise DomainError("trials must be at least 1")
        if not self.k_list or min(self.k_list) < 5:
            raise DomainError("every K in k_list must be >= 5")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if not 1 <= self.reference <= self.n_nodes:
            raise DomainError("reference node out of range")
        if not self.span[0] < self.span[1]:
            raise DomainError("schedule span is empty")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise DomainError(f"unknown estimators {sorted(unknown)}")
        if self.pairs is not None:
            object.__setattr__(self, "pairs", tuple(normalize_pairs(self.pairs, self.n_nodes)))

    @property
    def pair_list(self) -> list[Pair]:
        return list(self.pairs) if self.pairs is not None else all_pairs(self.n_nodes)

    @property
    def single_k(self) -> int:
        return self.k if self.k is not None else max(self.k_list)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise DomainError(f"unknown config keys {sorted(extra)}")
        kw = dict(raw)
        if "k_list" in kw:
            kw["k_list"] = tuple(int(k) for k in kw["k_list"])
        if "span" in kw:
            kw["span"] = tuple(float(v) for v in kw["span"])
        if "ranges" in kw:
            kw["ranges"] = ScenarioRanges(**kw["ranges"])
        if kw.get("pairs") is not None:
            kw["pairs"] = tuple(tuple(p) for p in kw["pairs"])
        if "estimators" in kw:
            kw["estimators"] = tuple(kw["estimators"])
        return cls(**kw)


@dataclass
class TrialResult:
    """Squared errors and bound diagonals of one trial, keyed by estimator then group."""

    trial_index: int
    sq_err: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    crb: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    failed: dict[str, str] = field(default_factory=dict)


def _group_slices(n_nodes: int, n_pair: int, reference: int) -> dict[str, np.ndarray]:
    nodes = np.array([k for k in range(n_nodes) if k != reference - 1], dtype=np.intp)
    m = np.arange(n_pair)
    N, M = n_nodes, n_pair
    return {"omega": nodes, "phi": N + nodes, "rddot": 2 * N + m, "rdot": 2 * N + M + m, "r": 2 * N + 2 * M + m}


def run_trial(cfg: ExperimentConfig, K: int, trial_index: int, sigma: float | None = None) -> TrialResult:
    """One Monte Carlo draw: scenario, logs, both estimators, per-trial bound.

    ``sigma`` overrides ``cfg.sigma`` (``0`` gives noise-free data and zero bounds).
    """
    sigma = cfg.sigma if sigma is None else sigma
    rng = np.random.default_rng(cfg.seed + trial_index)
    N, ref = cfg.n_nodes, cfg.reference
    pairs = cfg.pair_list
    sc = sample_scenario(N, rng, reference=ref, ranges=cfg.ranges, c=cfg.c)
    sch = default_schedule(K, cfg.span)
    log = simulate_network(sc, sch, NoiseSpec(sigma), pairs, rng)
    eta_true = sc.eta(pairs)
    groups = _group_slices(N, len(pairs), ref)
    out = TrialResult(trial_index)

    cs = build_constraints(N, pairs, ref)
    if sigma > 0:
        clean = simulate_network(sc, sch, NoiseSpec(0.0), pairs)
        bound = ccrb(build_global_system(clean, pairs), cs, sigma, sc.theta(pairs), cfg.c)
        crb_diag = np.diag(bound.Sigma_eta)
    else:
        crb_diag = np.zeros(eta_true.size)

    if "eegls" in cfg.estimators:
        try:
            est = eegls_solve(build_global_system(log, pairs), cs, c=cfg.c)
            err = est.eta_hat - eta_true
            out.sq_err["eegls"] = {g: err[idx] ** 2 for g, idx in groups.items()}
            out.crb["eegls"] = {g: crb_diag[idx] for g, idx in groups.items()}
        except (IdentifiabilityError, NumericalError) as exc:
            out.failed["eegls"] = f"{type(exc).__name__}: {exc}"

    if "eepls" in cfg.estimators:
        try:
            results = eepls_network(log, ref, cfg.c)
            node_idx, pair_idx, sq = [], [], {g: [] for g in GROUPS}
            for pair, est in results.items():
                u = pair[1] if pair[0] == ref else pair[0]
                m = pairs.index(pair)
                node_idx.append(u - 1)
                pair_idx.append(m)
                sq["omega"].append((est.eta_hat[0] - eta_true[u - 1]) ** 2)
                sq["phi"].append((est.eta_hat[1] - eta_true[N + u - 1]) ** 2)
                for k, g in enumerate(("rddot", "rdot", "r")):
                    sq[g].append((est.eta_hat[2 + k] - eta_true[groups[g][m]]) ** 2)
            node_idx = np.array(node_idx, dtype=np.intp)
            pair_idx = np.array(pair_idx, dtype=np.intp)
            M = len(pairs)
            crb_idx = {"omega": node_idx, "phi": N + node_idx, "rddot": 2 * N + pair_idx,
                       "rdot": 2 * N + M + pair_idx, "r": 2 * N + 2 * M + pair_idx}
            out.sq_err["eepls"] = {g: np.array(v) for g, v in sq.items()}
            out.crb["eepls"] = {g: crb_diag[idx] for g, idx in crb_idx.items()}
        except (IdentifiabilityError, NumericalError) as exc:
            out.failed["eepls"] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass(frozen=True)
class RmseRow:
    K: int
    estimator: str
    param_group: str
    rmse: float
    rmse_se: float
    rcrb_root: float
    trials: int
    failed: int

    HEADER = ("K", "estimator", "param_group", "rmse", "rmse_se", "rcrb_root", "trials", "failed")


def aggregate_rmse(results: Sequence[TrialResult], estimator: str, group: str, K: int = 0) -> RmseRow:
    """Pool squared errors over successful trials and entries of ``group``.

    ``rmse_se`` is the delta-method standard error of the RMSE, from the
    spread of the per-trial mean squared errors.
    """
    ok = [r for r in results if estimator in r.sq_err and r.sq_err[estimator][group].size]
    failed = sum(1 for r in results if estimator in r.failed)
    if not ok:
        raise NumericalError(f"no successful {estimator} trials to aggregate")
    sq = np.concatenate([r.sq_err[estimator][group] for r in ok])
    bounds = np.concatenate([r.crb[estimator][group] for r in ok])
    rmse = float(np.sqrt(sq.mean()))
    per_trial = np.array([r.sq_err[estimator][group].mean() for r in ok])
    if len(ok) > 1 and rmse > 0:
        se = float(per_trial.std(ddof=1) / np.sqrt(len(ok)) / (2.0 * rmse))
    else:
        se = 0.0
    rcrb = float(np.sqrt(np.clip(bounds, 0.0, None).mean()))
    return RmseRow(K, estimator, group, rmse, se, rcrb, len(ok), failed)


def _trial_batch(args):
    cfg, K, indices, sigma = args
    return [run_trial(cfg, K, t, sigma) for t in indices]


def run_trials(cfg: ExperimentConfig, K: int, threads: int = 1, sigma: float | None = None) -> list[TrialResult]:
    indices = list(range(cfg.trials))
    if threads <= 1:
        return [run_trial(cfg, K, t, sigma) for t in indices]
    chunks = [indices[k::threads] for k in range(threads)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(_trial_batch, [(cfg, K, ch, sigma) for ch in chunks if ch])
        results = [r for part in parts for r in part]
    return sorted(results, key=lambda r: r.trial_index)


def montecarlo(cfg: ExperimentConfig, threads: int = 1) -> list[RmseRow]:
    """RMSE/RCRB table for every ``(K, estimator, group)``."""
    rows = []
    for K in cfg.k_list:
        results = run_trials(cfg, K, threads)
        for est in cfg.estimators:
            for g in GROUPS:
                rows.append(aggregate_rmse(results, est, g, K))
    return rows


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg
