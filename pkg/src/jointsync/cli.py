"""Command line entry point: ``jointsync {simulate,estimate,crb,montecarlo}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .ccrb import ccrb
from .errors import DomainError, IdentifiabilityError, JointSyncError, NumericalError
from .estimators import (
    build_constraints,
    build_global_system,
    eegls_solve,
    eepls_network,
)
from .exchange import NoiseSpec, default_schedule, sample_scenario, simulate_network
from .harness import ExperimentConfig, montecarlo, with_overrides
from .model import param_labels

log = logging.getLogger("jointsync")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IDENTIFIABILITY = 3
EXIT_NUMERICAL = 4


def _load_config(args) -> ExperimentConfig:
    cfg = io.read_config_json(args.config) if args.config else ExperimentConfig()
    return with_overrides(cfg, seed=args.seed)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    rng = np.random.default_rng(cfg.seed)
    if args.scenario:
        sc = io.read_scenario_json(args.scenario)
    else:
        sc = sample_scenario(cfg.n_nodes, rng, reference=cfg.reference, ranges=cfg.ranges, c=cfg.c)
    sch = default_schedule(cfg.single_k, cfg.span)
    sim = simulate_network(sc, sch, NoiseSpec(cfg.sigma, cfg.seed), cfg.pair_list, rng)
    io.write_log_csv(sim, args.out)
    if args.scenario_out:
        io.write_scenario_json(sc, args.scenario_out)
    log.info("wrote %d pairs x K=%d to %s", len(sim), sch.K, args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    data = io.read_log_csv(args.inp, args.nodes)
    sc = io.read_scenario_json(args.scenario) if args.scenario else None
    N, ref = data.n_nodes, args.ref
    rows = []
    if args.method == "eegls":
        pairs = data.pairs
        est = eegls_solve(build_global_system(data, pairs), build_constraints(N, pairs, ref), c=args.c)
        truth_t = sc.theta(pairs) if sc else None
        truth_e = sc.eta(pairs) if sc else None
        for k, (name, where) in enumerate(param_labels(N, pairs, "theta")):
            rows.append((name, where, None if sc is None else truth_t[k], est.theta_hat[k]))
        for k, (name, where) in enumerate(param_labels(N, pairs, "eta")):
            rows.append((name, where, None if sc is None else truth_e[k], est.eta_hat[k]))
        log.info("E2GLS cond=%.3g residual=%.3g", est.cond, est.residual_norm)
    else:
        results = eepls_network(data, ref, c=args.c)
        for pair, est in results.items():
            u = pair[1] if pair[0] == ref else pair[0]
            tag = f"{pair[0]}-{pair[1]}"
            true_t = sc.theta([pair]) if sc else None
            true_e = sc.eta([pair]) if sc else None
            # single-pair theta/eta blocks: [alpha(N); beta(N); gamma; delta; epsilon]
            picks = [("alpha", str(u), u - 1), ("beta", str(u), N + u - 1),
                     ("gamma", tag, 2 * N), ("delta", tag, 2 * N + 1), ("epsilon", tag, 2 * N + 2)]
            for k, (name, where, idx) in enumerate(picks):
                rows.append((name, where, None if sc is None else true_t[idx], est.theta_hat[k]))
            for k, (name, where, idx) in enumerate(picks):
                ename = ("omega", "phi", "rddot", "rdot", "r")[k]
                rows.append((ename, where, None if sc is None else true_e[idx], est.eta_hat[k]))
    io.write_estimates_csv(rows, args.out)
    return EXIT_OK


def cmd_crb(args) -> int:
    cfg = _load_config(args)
    if args.scenario:
        sc = io.read_scenario_json(args.scenario)
    else:
        sc = sample_scenario(cfg.n_nodes, np.random.default_rng(cfg.seed), reference=cfg.reference,
                             ranges=cfg.ranges, c=cfg.c)
    pairs = cfg.pair_list
    clean = simulate_network(sc, default_schedule(cfg.single_k, cfg.span), NoiseSpec(0.0), pairs)
    res = ccrb(build_global_system(clean, pairs), build_constraints(sc.n_nodes, pairs, cfg.reference),
               cfg.sigma, sc.theta(pairs), sc.c)
    labels = param_labels(sc.n_nodes, pairs, "theta") + param_labels(sc.n_nodes, pairs, "eta")
    variances = np.concatenate([np.diag(res.Sigma_theta), np.diag(res.Sigma_eta)])
    io.write_crb_csv(labels, variances, args.out)
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    cfg = _load_config(args)
    rows = montecarlo(cfg, threads=args.threads)
    io.write_rmse_csv(rows, args.out)
    meta = {
        "config": asdict(cfg),
        "notes": {
            "eepls": "range groups cover reference-anchored pairs only; clock groups exclude the reference node",
            "rcrb_root": "root of the trial-averaged constrained CRB diagonal for the same entries",
        },
    }
    Path(str(args.out) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (overrides config)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="jointsync", parents=[common],
                                     description="Joint clock synchronization and quadratic ranging.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a noisy exchange log")
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--scenario", type=Path, help="use this scenario JSON instead of sampling one")
    p.add_argument("--scenario-out", type=Path, help="also write the ground-truth scenario JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="estimate clocks and ranges from a log")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--method", choices=("eepls", "eegls"), required=True)
    p.add_argument("--ref", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--scenario", type=Path, help="ground truth for the error column")
    p.add_argument("--nodes", type=int, help="node count (default: largest id in the log)")
    p.add_argument("--c", type=float, default=3e8, help="wave speed in m/s")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("crb", parents=[common], help="constrained Cramer-Rao bound for one scenario")
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--scenario", type=Path)
    p.set_defaults(func=cmd_crb)

    p = sub.add_parser("montecarlo", parents=[common], help="RMSE vs K against the RCRB")
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed = getattr(args, "seed", None)
    args.threads = getattr(args, "threads", 1)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except IdentifiabilityError as exc:
        print(f"identifiability error: {exc}", file=sys.stderr)
        return EXIT_IDENTIFIABILITY
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, JointSyncError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
