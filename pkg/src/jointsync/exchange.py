"""Scenario sampling and two-way timestamp exchange simulation.

Logs are generated directly from the measurement relation rather than from a
physical time-of-flight simulation: the receive timestamp at node ``j`` is
solved from

    alpha_j * T_ji = alpha_i * T_ij + beta_i - beta_j + E * tau_ij(T_ij)

with ``tau_ij`` evaluated in node ``i``'s local time, and independent
Gaussian noise of variance ``sigma**2 / 2`` is then added to each recorded
timestamp.  Ground truth is therefore exact for the estimators' data model.

The transmit grid lives on node ``i``'s local timeline for both directions,
so ``T_ij`` is the grid itself before noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .model import (
    SPEED_OF_LIGHT,
    ClockParams,
    Pair,
    RangePoly,
    all_pairs,
    calib_from_clock,
    derived_from_range,
    normalize_pairs,
    pair_index,
    theta_from_eta,
)


@dataclass(frozen=True)
class ScenarioRanges:
    """Half-widths / bounds of the uniform parameter distributions."""

    skew_ppm: float = 10.0
    offset_max: float = 10.0
    rddot_max: float = 0.1
    rdot_max: float = 1.0
    r_max: float = 10_000.0


@dataclass(frozen=True)
class Scenario:
    n_nodes: int
    clock: ClockParams
    ranges: RangePoly  # one entry per pair, lexicographic order over all pairs
    c: float = SPEED_OF_LIGHT
    reference: int = 1

    def __post_init__(self):
        if self.n_nodes < 2:
            raise DomainError("a scenario needs at least two nodes")
        if not 1 <= self.reference <= self.n_nodes:
            raise DomainError(f"reference node {self.reference} outside [1, {self.n_nodes}]")
        if self.clock.n_nodes != self.n_nodes:
            raise DomainError("clock parameters do not match node count")
        m = self.n_nodes * (self.n_nodes - 1) // 2
        if not (self.ranges.r.shape == self.ranges.rdot.shape == self.ranges.rddot.shape == (m,)):
            raise DomainError(f"range arrays must have length M={m}")

    def pair_range(self, pair: Pair) -> RangePoly:
        m = pair_index(pair[0], pair[1], self.n_nodes)
        return RangePoly(self.ranges.r[m], self.ranges.rdot[m], self.ranges.rddot[m])

    def eta(self, pairs: Sequence[Pair] | None = None) -> np.ndarray:
        """True physical parameter vector, restricted to ``pairs`` if given."""
        idx = self._pair_rows(pairs)
        rp = self.ranges
        return np.concatenate([self.clock.omega, self.clock.phi,
                               rp.rddot[idx], rp.rdot[idx], rp.r[idx]])

    def theta(self, pairs: Sequence[Pair] | None = None) -> np.ndarray:
        pairs = all_pairs(self.n_nodes) if pairs is None else list(pairs)
        return theta_from_eta(self.eta(pairs), self.n_nodes, pairs, self.c)

    def _pair_rows(self, pairs):
        if pairs is None:
            return np.arange(self.ranges.r.size)
        return np.array([pair_index(i, j, self.n_nodes) for i, j in pairs], dtype=np.intp)


def sample_scenario(n_nodes: int, rng: np.random.Generator, reference: int | None = 1,
                    ranges: ScenarioRanges = ScenarioRanges(),
                    c: float = SPEED_OF_LIGHT) -> Scenario:
    """Draw clock and range parameters uniformly from ``ranges``.

    When ``reference`` is not None that node's clock is pinned to the ideal
    ``[omega, phi] = [1, 0]`` so estimates constrained to it can be compared
    with the truth directly.
    """
    if n_nodes < 2:
        raise DomainError("need at least two nodes")
    m = n_nodes * (n_nodes - 1) // 2
    skew = ranges.skew_ppm * 1e-6
    omega = rng.uniform(1.0 - skew, 1.0 + skew, n_nodes)
    phi = rng.uniform(-ranges.offset_max, ranges.offset_max, n_nodes)
    rddot = rng.uniform(-ranges.rddot_max, ranges.rddot_max, m)
    rdot = rng.uniform(-ranges.rdot_max, ranges.rdot_max, m)
    # 1 - U[0, 1) lies in (0, 1], so ranges are strictly positive
    r = ranges.r_max * (1.0 - rng.random(m))
    ref = 1 if reference is None else reference
    if reference is not None:
        if not 1 <= reference <= n_nodes:
            raise DomainError(f"reference node {reference} outside [1, {n_nodes}]")
        omega[reference - 1] = 1.0
        phi[reference - 1] = 0.0
    return Scenario(n_nodes, ClockParams(omega, phi), RangePoly(r, rdot, rddot), c, ref)


@dataclass(frozen=True)
class Schedule:
    transmit_times: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.transmit_times, dtype=float)
        e = np.asarray(self.directions, dtype=float)
        object.__setattr__(self, "transmit_times", t)
        object.__setattr__(self, "directions", e)
        if t.ndim != 1 or t.size < 1 or t.shape != e.shape:
            raise DomainError("schedule needs K >= 1 times with matching directions")
        if not np.all(np.abs(e) == 1.0):
            raise DomainError("directions must be +1 or -1")

    @property
    def K(self) -> int:
        return self.transmit_times.size


def default_schedule(K: int, span: tuple[float, float] = (0.1, 10.0)) -> Schedule:
    """``K`` equally spaced times on ``span`` with directions +1, -1, +1, ..."""
    t_min, t_max = float(span[0]), float(span[1])
    if K < 1:
        raise DomainError("K must be at least 1")
    if not t_min < t_max:
        raise DomainError(f"empty schedule span [{t_min}, {t_max}]")
    directions = np.where(np.arange(K) % 2 == 0, 1.0, -1.0)
    return Schedule(np.linspace(t_min, t_max, K), directions)


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DomainError("sigma must be nonnegative")


@dataclass(frozen=True)
class PairLog:
    t_ij: np.ndarray
    t_ji: np.ndarray
    e_ij: np.ndarray

    @property
    def e_ji(self) -> np.ndarray:
        return -self.e_ij

    @property
    def K(self) -> int:
        return self.t_ij.size


@dataclass
class ExchangeLog:
    n_nodes: int
    entries: dict[Pair, PairLog] = field(default_factory=dict)

    @property
    def pairs(self) -> list[Pair]:
        return sorted(self.entries)

    def __getitem__(self, pair: Pair) -> PairLog:
        return self.entries[pair]

    def __len__(self) -> int:
        return len(self.entries)


def noise_free_receive(sc: Scenario, pair: Pair, t_ij, e_ij) -> np.ndarray:
    """Receive-side timestamps ``T_ji`` implied by the model for given ``T_ij``."""
    i, j = pair
    calib = calib_from_clock(sc.clock)
    a_i, b_i = calib.alpha[i - 1], calib.beta[i - 1]
    a_j, b_j = calib.alpha[j - 1], calib.beta[j - 1]
    dr = derived_from_range(sc.pair_range(pair), a_i, b_i, sc.c)
    t = np.asarray(t_ij, dtype=float)
    tau = (dr.gamma * t + dr.delta) * t + dr.epsilon
    return (a_i * t + (b_i - b_j) + e_ij * tau) / a_j


def generate_pair_log(sc: Scenario, pair: Pair, sch: Schedule, noise: NoiseSpec,
                      rng: np.random.Generator | None = None) -> PairLog:
    i, j = pair
    pair_index(i, j, sc.n_nodes)
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    t_ij = sch.transmit_times.copy()
    e_ij = sch.directions.copy()
    t_ji = noise_free_receive(sc, pair, t_ij, e_ij)
    if noise.sigma > 0:
        scale = noise.sigma * np.sqrt(0.5)
        t_ij = t_ij + rng.normal(0.0, scale, t_ij.size)
        t_ji = t_ji + rng.normal(0.0, scale, t_ji.size)
    return PairLog(t_ij, t_ji, e_ij)


def simulate_network(sc: Scenario, sch: Schedule, noise: NoiseSpec,
                     pairs: Sequence[Pair] | None = None,
                     rng: np.random.Generator | None = None) -> ExchangeLog:
    """Generate one log entry per requested pair, each with its own noise draws."""
    pairs = all_pairs(sc.n_nodes) if pairs is None else normalize_pairs(pairs, sc.n_nodes)
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    log = ExchangeLog(sc.n_nodes)
    for p in pairs:
        log.entries[p] = generate_pair_log(sc, p, sch, noise, rng)
    return log
