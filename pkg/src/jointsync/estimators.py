"""Pairwise (E2PLS) and global constrained (E2GLS) least-squares estimators.

Both estimators solve a linear model in the derived parameters.  The raw
columns span many orders of magnitude (``t**2`` up to ~100 next to a column
of ones, unknowns from ~1e-10 to ~10), so every solve works on a copy of the
design matrix whose columns have unit 2-norm and unscales the result.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    ConnectivityError,
    DomainError,
    IdentifiabilityError,
    NumericalError,
    SingularSystemError,
    UnderdeterminedError,
)
from .exchange import ExchangeLog, PairLog
from .model import (
    SPEED_OF_LIGHT,
    Pair,
    eta_from_theta,
    n_params,
    normalize_pairs,
    param_labels,
    range_from_derived,
    DerivedRange,
)

PAIR_PARAMS = 5
KKT_RTOL = 1e-8
REFINE_STEPS = 2


def _column_scale(A: np.ndarray) -> np.ndarray:
    s = np.linalg.norm(A, axis=0)
    s[s == 0] = 1.0
    return s


def _ld(x) -> np.ndarray:
    return np.asarray(x, dtype=np.longdouble)


# --------------------------------------------------------------------------
# pairwise
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PairSystem:
    """``A @ theta_pair ~= rhs`` for one pair with one node fixed as reference.

    ``theta_pair = [alpha_u, beta_u, gamma, delta, epsilon]`` where ``u`` is
    the non-reference node of the pair.
    """

    A: np.ndarray
    rhs: np.ndarray
    scale: np.ndarray
    pair: Pair | None = None
    reference_is_i: bool = True

    @property
    def unknown_node(self) -> int | None:
        if self.pair is None:
            return None
        return self.pair[1] if self.reference_is_i else self.pair[0]


def _check_pair_entry(entry: PairLog, pair: Pair | None = None) -> None:
    where = "" if pair is None else f"pair {pair}: "
    K = entry.t_ij.size
    if not (entry.t_ji.size == entry.e_ij.size == K):
        raise DomainError(f"{where}t_ij, t_ji and e_ij must have equal length")
    if K < PAIR_PARAMS:
        raise UnderdeterminedError(f"{where}K={K} messages cannot determine {PAIR_PARAMS} pair parameters; need K >= 5")
    if np.all(entry.e_ij > 0) or np.all(entry.e_ij < 0):
        raise IdentifiabilityError(f"{where}all messages travel in one direction; delay and offset are inseparable")


def build_pair_system(entry: PairLog, reference_is_i: bool = True, pair: Pair | None = None) -> PairSystem:
    """Assemble the pairwise system with the reference clock set to ``[1, 0]``.

    Reference ``i``:  ``[-t_ji, -1, e*t_ij**2, e*t_ij, e] @ theta = -t_ij``.
    Reference ``j``:  ``[t_ij, 1, e*t_ij**2, e*t_ij, e] @ theta = t_ji``.
    """
    _check_pair_entry(entry, pair)
    t, e = entry.t_ij, entry.e_ij
    if reference_is_i:
        A = np.column_stack([-entry.t_ji, -np.ones_like(t), e * t * t, e * t, e])
        rhs = -t
    else:
        A = np.column_stack([t, np.ones_like(t), e * t * t, e * t, e])
        rhs = entry.t_ji.copy()
    return PairSystem(A, rhs, _column_scale(A), pair, reference_is_i)


@dataclass(frozen=True)
class Estimate:
    theta_hat: np.ndarray
    eta_hat: np.ndarray
    residual_norm: float
    cond: float
    lam: np.ndarray | None = None
    n_nodes: int | None = None
    pairs: tuple[Pair, ...] = ()


def eepls_solve(ps: PairSystem, anchor_calib: tuple[float, float] | None = None,
                c: float = SPEED_OF_LIGHT) -> Estimate:
    """Closed-form pairwise least squares.

    ``anchor_calib`` gives ``(alpha_i, beta_i)`` of the pair's smaller node
    and is only needed when that node is not the reference; by default the
    estimated values are used.
    """
    As = ps.A / ps.scale
    z, _, rank, sv = np.linalg.lstsq(As, ps.rhs, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if rank < PAIR_PARAMS:
        raise SingularSystemError(f"pairwise system has rank {rank} < 5 (cond={cond:.3g})", cond)
    # refinement with extended-precision residuals of the unscaled system
    A_ld, rhs_ld, s_ld = _ld(ps.A), _ld(ps.rhs), _ld(ps.scale)
    theta_ld = _ld(z) / s_ld
    for _ in range(REFINE_STEPS):
        r = (A_ld @ theta_ld - rhs_ld).astype(float)
        dz = np.linalg.lstsq(As, -r, rcond=None)[0]
        theta_ld += _ld(dz) / s_ld
    theta = theta_ld.astype(float)
    a_u, b_u, gamma, delta, epsilon = theta
    if a_u <= 0:
        raise NumericalError(f"estimated alpha {a_u:.6g} is not positive")
    if ps.reference_is_i:
        a_i, b_i = 1.0, 0.0
    else:
        a_i, b_i = (a_u, b_u) if anchor_calib is None else anchor_calib
    rp = range_from_derived(DerivedRange(gamma, delta, epsilon), a_i, b_i, c)
    eta = np.array([1.0 / a_u, -b_u / a_u, rp.rddot, rp.rdot, rp.r], dtype=float)
    resid = float(np.linalg.norm(ps.A @ theta - ps.rhs))
    pairs = (ps.pair,) if ps.pair is not None else ()
    return Estimate(theta, eta, resid, cond, pairs=pairs)


def eepls_network(log: ExchangeLog, reference: int = 1, c: float = SPEED_OF_LIGHT) -> dict[Pair, Estimate]:
    """Apply E2PLS independently on every logged pair that contains ``reference``."""
    out: dict[Pair, Estimate] = {}
    for pair in log.pairs:
        if reference not in pair:
            continue
        ps = build_pair_system(log[pair], reference_is_i=(pair[0] == reference), pair=pair)
        out[pair] = eepls_solve(ps, c=c)
    if not out:
        raise ConnectivityError(f"reference node {reference} has no logged links")
    return out


# --------------------------------------------------------------------------
# global
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GlobalSystem:
    """Homogeneous model ``A @ theta ~= 0`` over the logged pairs."""

    A: np.ndarray
    n_nodes: int
    pairs: tuple[Pair, ...]
    row_pair: np.ndarray  # pair position of every row

    @property
    def L(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class ConstraintSet:
    C: np.ndarray
    d: np.ndarray


def check_connectivity(n_nodes: int, pairs: Sequence[Pair]) -> None:
    """Raise :class:`ConnectivityError` unless the link graph spans all nodes."""
    present = {k for p in pairs for k in p}
    isolated = sorted(set(range(1, n_nodes + 1)) - present)
    if isolated:
        raise ConnectivityError(f"node(s) {isolated} have no links")
    rows = [p[0] - 1 for p in pairs]
    cols = [p[1] - 1 for p in pairs]
    graph = coo_matrix((np.ones(len(pairs)), (rows, cols)), shape=(n_nodes, n_nodes))
    n_comp, labels = connected_components(graph, directed=False)
    if n_comp > 1:
        groups = [sorted(int(k) + 1 for k in np.flatnonzero(labels == g)) for g in range(n_comp)]
        raise ConnectivityError(f"link graph splits into {n_comp} components: {groups}")


def build_global_system(log: ExchangeLog, pairs: Sequence[Pair] | None = None) -> GlobalSystem:
    """Stack every pair's rows into the network model.

    Columns follow theta order ``[alpha; beta; gamma; delta; epsilon]``
    restricted to the given pairs; row blocks follow pair order.
    """
    N = log.n_nodes
    pairs = log.pairs if pairs is None else normalize_pairs(pairs, N)
    missing = [p for p in pairs if p not in log.entries]
    if missing:
        raise DomainError(f"pairs {missing} are not in the log")
    check_connectivity(N, pairs)
    for p in pairs:
        _check_pair_entry(log[p], p)
    M = len(pairs)
    L = n_params(N, M)
    sizes = [log[p].K for p in pairs]
    A = np.zeros((sum(sizes), L))
    row_pair = np.repeat(np.arange(M), sizes)
    r0 = 0
    for m, ((i, j), K) in enumerate(zip(pairs, sizes)):
        entry = log[(i, j)]
        rows = slice(r0, r0 + K)
        t, e = entry.t_ij, entry.e_ij
        A[rows, i - 1] = t
        A[rows, j - 1] = -entry.t_ji
        A[rows, N + i - 1] = 1.0
        A[rows, N + j - 1] = -1.0
        A[rows, 2 * N + m] = e * t * t
        A[rows, 2 * N + M + m] = e * t
        A[rows, 2 * N + 2 * M + m] = e
        r0 += K
    return GlobalSystem(A, N, tuple(pairs), row_pair)


def build_constraints(n_nodes: int, pairs: Sequence[Pair] | int, reference: int = 1) -> ConstraintSet:
    """Select ``alpha_ref = 1`` and ``beta_ref = 0``.

    ``pairs`` may be the pair list or just the number of pairs.
    """
    if not 1 <= reference <= n_nodes:
        raise DomainError(f"reference node {reference} outside [1, {n_nodes}]")
    M = pairs if isinstance(pairs, (int, np.integer)) else len(pairs)
    C = np.zeros((2, n_params(n_nodes, int(M))))
    C[0, reference - 1] = 1.0
    C[1, n_nodes + reference - 1] = 1.0
    return ConstraintSet(C, np.array([1.0, 0.0]))


def _deficient_columns(B: np.ndarray, basis: np.ndarray, labels: list[str]) -> tuple[str, ...]:
    _, _, vt = np.linalg.svd(B)
    direction = basis @ vt[-1]
    mag = np.abs(direction)
    return tuple(labels[k] for k in np.flatnonzero(mag > 0.1 * mag.max()))


def kkt_residual(A: np.ndarray, C: np.ndarray, d: np.ndarray, theta: np.ndarray, lam: np.ndarray) -> float:
    """Relative residual of the bordered system ``[[2A'A, C'], [C, 0]] [theta; lam] = [0; d]``."""
    G = 2.0 * (A.T @ A)
    r = np.concatenate([G @ theta + C.T @ lam, C @ theta - d])
    denom = np.linalg.norm(G, 2) * np.linalg.norm(theta) + np.linalg.norm(C, 2) * np.linalg.norm(lam) \
        + np.linalg.norm(d)
    return float(np.linalg.norm(r) / denom) if denom > 0 else float(np.linalg.norm(r))


def eegls_solve(gs: GlobalSystem, cs: ConstraintSet, method: str = "nullspace",
                c: float = SPEED_OF_LIGHT) -> Estimate:
    """Constrained global least squares ``min ||A theta||^2  s.t.  C theta = d``.

    ``method="nullspace"`` eliminates the constraints through an orthonormal
    basis of ``null(C)``; ``method="kkt"`` solves the bordered KKT matrix
    directly.  Both work on the column-scaled problem.
    """
    A, C, d = gs.A, np.asarray(cs.C, dtype=float), np.asarray(cs.d, dtype=float)
    L = A.shape[1]
    if C.shape[1] != L:
        raise DomainError(f"constraint matrix has {C.shape[1]} columns, system has {L}")
    M2 = C.shape[0]
    s = _column_scale(A)
    As, Cs = A / s, C / s
    labels = [f"{n}_{k}" for n, k in param_labels(gs.n_nodes, gs.pairs)]

    Q, R = sla.qr(Cs.T)
    R1 = R[:M2, :M2]
    if np.any(np.abs(np.diag(R1)) <= 1e-12 * np.abs(R1).max()):
        raise DomainError("constraint rows are linearly dependent")
    Q1, U = Q[:, :M2], Q[:, M2:]
    B = As @ U
    sv = np.linalg.svd(B, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if B.shape[0] < B.shape[1] or sv[-1] <= sv[0] * max(B.shape) * np.finfo(float).eps:
        raise SingularSystemError(
            f"constrained system is rank deficient (cond={cond:.3g})", cond, _deficient_columns(B, U, labels))

    A_ld, s_ld, d_ld, C_ld = _ld(A), _ld(s), _ld(d), _ld(C)

    def residuals(theta_ld):
        # extended precision: A theta, C theta - d
        return (A_ld @ theta_ld).astype(float), (C_ld @ theta_ld - d_ld).astype(float)

    if method == "nullspace":
        z_p = Q1 @ sla.solve_triangular(R1, d, trans="T")
        y, *_ = np.linalg.lstsq(B, -(As @ z_p), rcond=None)
        theta_ld = _ld(z_p + U @ y) / s_ld
        for _ in range(REFINE_STEPS):
            r, rc = residuals(theta_ld)
            dz_p = -(Q1 @ sla.solve_triangular(R1, rc, trans="T"))
            dy, *_ = np.linalg.lstsq(B, -(r + As @ dz_p), rcond=None)
            theta_ld += _ld(dz_p + U @ dy) / s_ld
        r, _ = residuals(theta_ld)
        lam = -sla.solve_triangular(R1, Q1.T @ (2.0 * (As.T @ r)))
    elif method == "kkt":
        K = np.zeros((L + M2, L + M2))
        K[:L, :L] = 2.0 * (As.T @ As)
        K[:L, L:] = Cs.T
        K[L:, :L] = Cs
        lu = sla.lu_factor(K)
        sol = sla.lu_solve(lu, np.concatenate([np.zeros(L), d]))
        theta_ld, lam = _ld(sol[:L]) / s_ld, sol[L:]
        for _ in range(REFINE_STEPS):
            r, rc = residuals(theta_ld)
            r1 = 2.0 * (As.T @ r) + Cs.T @ lam
            delta = sla.lu_solve(lu, -np.concatenate([r1, rc]))
            theta_ld += _ld(delta[:L]) / s_ld
            lam = lam + delta[L:]
    else:
        raise ValueError(f"unknown method {method!r}")
    z = (theta_ld * s_ld).astype(float)

    res = kkt_residual(As, Cs, d, z, lam)
    if not res < KKT_RTOL:
        raise NumericalError(f"KKT residual {res:.3g} exceeds {KKT_RTOL:g}")
    theta = theta_ld.astype(float)
    if np.any(theta[:gs.n_nodes] <= 0):
        raise NumericalError("estimated alpha is not positive")
    eta = eta_from_theta(theta, gs.n_nodes, gs.pairs, c)
    return Estimate(theta, eta, float(np.linalg.norm(A @ theta)), cond, lam, gs.n_nodes, gs.pairs)


def pair_estimates_to_network(est: dict[Pair, Estimate], n_nodes: int, reference: int = 1):
    """Collect pairwise results into node clocks and per-pair range triples.

    Returns ``(omega, phi, ranges)`` where ``omega``/``phi`` hold NaN for
    nodes without a reference link and ``ranges`` maps each pair to
    ``(rddot, rdot, r)``.
    """
    omega = np.full(n_nodes, np.nan)
    phi = np.full(n_nodes, np.nan)
    omega[reference - 1], phi[reference - 1] = 1.0, 0.0
    ranges = {}
    for pair, e in est.items():
        u = pair[1] if pair[0] == reference else pair[0]
        omega[u - 1], phi[u - 1] = e.eta_hat[0], e.eta_hat[1]
        ranges[pair] = tuple(e.eta_hat[2:])
    return omega, phi, ranges


__all__ = [
    "PairSystem", "GlobalSystem", "ConstraintSet", "Estimate",
    "build_pair_system", "eepls_solve", "eepls_network",
    "build_global_system", "build_constraints", "eegls_solve",
    "check_connectivity", "kkt_residual", "pair_estimates_to_network",
]
