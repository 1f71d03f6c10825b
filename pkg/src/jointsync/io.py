"""CSV and JSON file formats.

Floats are written with 17 significant digits so every file round-trips
bit-exactly and identical runs give byte-identical output.
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError
from .exchange import ExchangeLog, PairLog, Scenario
from .harness import ExperimentConfig, RmseRow
from .model import ClockParams, Pair, RangePoly, all_pairs, pair_index

LOG_HEADER = ("i", "j", "k", "direction", "t_ij_seconds", "t_ji_seconds")
ESTIMATE_HEADER = ("param_name", "node_or_pair", "true_value", "estimate", "error")
CRB_HEADER = ("param_name", "node_or_pair", "crb_variance", "rcrb_root")


def fmt(x) -> str:
    return format(float(x), ".17g")


def _writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_log_csv(log: ExchangeLog, path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(LOG_HEADER)
        for (i, j) in log.pairs:
            e = log[(i, j)]
            for k in range(e.K):
                w.writerow((i, j, k, int(e.e_ij[k]), fmt(e.t_ij[k]), fmt(e.t_ji[k])))


def read_log_csv(path, n_nodes: int | None = None) -> ExchangeLog:
    """Read an exchange log; ``n_nodes`` defaults to the largest node id seen."""
    rows: dict[Pair, list] = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LOG_HEADER:
            raise DomainError(f"{path}: expected columns {LOG_HEADER}")
        for rec in reader:
            i, j = int(rec["i"]), int(rec["j"])
            rows[(i, j)].append((int(rec["k"]), float(rec["direction"]),
                                 float(rec["t_ij_seconds"]), float(rec["t_ji_seconds"])))
    if not rows:
        raise DomainError(f"{path}: log is empty")
    n = n_nodes or max(j for _, j in rows)
    log = ExchangeLog(n)
    for (i, j), recs in rows.items():
        pair_index(i, j, n)
        recs.sort()
        k, e, t_ij, t_ji = (np.array(col) for col in zip(*recs))
        log.entries[(i, j)] = PairLog(t_ij, t_ji, e)
    return log


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "n_nodes": sc.n_nodes,
        "c": sc.c,
        "reference": sc.reference,
        "omega": sc.clock.omega.tolist(),
        "phi": sc.clock.phi.tolist(),
        "pairs": [
            {"i": i, "j": j, "r": float(sc.ranges.r[m]), "rdot": float(sc.ranges.rdot[m]),
             "rddot": float(sc.ranges.rddot[m])}
            for m, (i, j) in enumerate(all_pairs(sc.n_nodes))
        ],
    }


def scenario_from_dict(raw: dict) -> Scenario:
    n = int(raw["n_nodes"])
    M = n * (n - 1) // 2
    r, rdot, rddot = np.zeros(M), np.zeros(M), np.zeros(M)
    seen = set()
    for p in raw["pairs"]:
        m = pair_index(int(p["i"]), int(p["j"]), n)
        seen.add(m)
        r[m], rdot[m], rddot[m] = p["r"], p["rdot"], p["rddot"]
    if len(seen) != M:
        raise DomainError(f"scenario must list all {M} pairs")
    return Scenario(n, ClockParams(raw["omega"], raw["phi"]), RangePoly(r, rdot, rddot),
                    float(raw.get("c", 3e8)), int(raw.get("reference", 1)))


def write_scenario_json(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")


def read_scenario_json(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def read_config_json(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


def write_estimates_csv(rows: Iterable[tuple[str, str, float | None, float]], path) -> None:
    """Rows of ``(param_name, node_or_pair, true_value_or_None, estimate)``."""
    fh, w = _writer(path)
    with fh:
        w.writerow(ESTIMATE_HEADER)
        for name, where, truth, est in rows:
            if truth is None:
                w.writerow((name, where, "", fmt(est), ""))
            else:
                w.writerow((name, where, fmt(truth), fmt(est), fmt(est - truth)))


def write_crb_csv(labels: Sequence[tuple[str, str]], variances, path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(CRB_HEADER)
        for (name, where), v in zip(labels, variances):
            w.writerow((name, where, fmt(v), fmt(np.sqrt(max(float(v), 0.0)))))


def write_rmse_csv(rows: Iterable[RmseRow], path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(RmseRow.HEADER)
        for r in rows:
            w.writerow((r.K, r.estimator, r.param_group, fmt(r.rmse), fmt(r.rmse_se),
                        fmt(r.rcrb_root), r.trials, r.failed))


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
