"""Constrained Cramer-Rao bound for the global timestamp model.

With white timestamp-pair noise of variance ``sigma**2`` the Fisher
information of the linear model is ``F = A'A / sigma**2`` evaluated at the
noise-free design matrix.  Equality constraints ``C theta = d`` enter through
an orthonormal basis ``U`` of ``null(C)``:

    Sigma_theta = U (U' F U)^-1 U'

and the bound on the physical parameters follows from first-order error
propagation ``Sigma_eta = J Sigma_theta J'`` with ``J = d eta / d theta'``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import DomainError, IdentifiabilityError
from .estimators import ConstraintSet, GlobalSystem
from .model import SPEED_OF_LIGHT, Pair, all_pairs, split_blocks

PSD_RTOL = 1e-10


@dataclass(frozen=True)
class CrbResult:
    Sigma_theta: np.ndarray
    Sigma_eta: np.ndarray
    U: np.ndarray

    def rcrb_eta(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.Sigma_eta), 0.0, None))


def fisher_information(gs: GlobalSystem, sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise DomainError("sigma must be positive for a Fisher information")
    return (gs.A.T @ gs.A) / (sigma * sigma)


def nullspace_basis(cs: ConstraintSet) -> np.ndarray:
    """Orthonormal basis of ``null(C)`` as the columns of an ``L x (L - M2)`` matrix."""
    C = np.asarray(cs.C, dtype=float)
    M2 = C.shape[0]
    Q, R = sla.qr(C.T)
    diag = np.abs(np.diag(R[:M2, :M2]))
    if M2 and diag.min() <= 1e-12 * max(diag.max(), 1.0):
        raise DomainError("constraint matrix is not of full row rank")
    return Q[:, M2:]


def ccrb_theta(gs: GlobalSystem, cs: ConstraintSet, sigma: float,
               U: np.ndarray | None = None) -> np.ndarray:
    """Bound on the covariance of any unbiased constrained estimator of theta.

    ``gs`` must be built from noise-free timestamps.  The result does not
    depend on which orthonormal ``U`` is used; the computation first maps
    ``range(U)`` into column-scaled coordinates and re-orthonormalizes it so
    that the badly scaled ``U'A'AU`` is never formed.
    """
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if U is None:
        U = nullspace_basis(cs)
    A = gs.A
    s = np.linalg.norm(A, axis=0)
    s[s == 0] = 1.0
    # Sigma = S^-1 W (W' As' As W)^-1 W' S^-1 with W = S U, As = A S^-1;
    # the middle factor only depends on range(W), so W may be replaced by Q.
    Q, _ = np.linalg.qr(U * s[:, None])
    B = (A / s) @ Q
    _, R = np.linalg.qr(B)
    d = np.abs(np.diag(R))
    if d.min() <= d.max() * max(B.shape) * np.finfo(float).eps:
        raise IdentifiabilityError("U'FU is singular: the constrained network is not identifiable")
    Rinv_t = sla.solve_triangular(R, Q.T, trans="T")  # R^-T Q'
    inner = Rinv_t.T @ Rinv_t  # Q R^-1 R^-T Q'
    Sigma = (sigma * sigma) * (inner / s[:, None] / s[None, :])
    return 0.5 * (Sigma + Sigma.T)


def jacobian_theta_to_eta(theta, n_nodes: int, pairs: Sequence[Pair] | None = None,
                          c: float = SPEED_OF_LIGHT) -> np.ndarray:
    """Analytic ``d eta / d theta'`` of the map used by ``eta_from_theta``.

    For pair ``m = (i, j)`` the range rows depend on ``alpha_i``, ``beta_i``
    of the smaller node id and on the pair's own ``gamma, delta, epsilon``.
    """
    pairs = all_pairs(n_nodes) if pairs is None else list(pairs)
    alpha, beta, gamma, delta, _ = split_blocks(theta, n_nodes)
    if np.any(alpha <= 0):
        raise DomainError("alpha must be positive")
    N, M = n_nodes, len(pairs)
    L = 2 * N + 3 * M
    J = np.zeros((L, L))
    nodes = np.arange(N)
    J[nodes, nodes] = -1.0 / alpha**2
    J[N + nodes, nodes] = beta / alpha**2
    J[N + nodes, N + nodes] = -1.0 / alpha

    anchor = np.array([p[0] - 1 for p in pairs], dtype=np.intp)
    a, b = alpha[anchor], beta[anchor]
    g, dl = gamma, delta
    m = np.arange(M)
    acc, vel, rng = 2 * N + m, 2 * N + M + m, 2 * N + 2 * M + m
    col_a, col_b = anchor, N + anchor
    col_g, col_d, col_e = 2 * N + m, 2 * N + M + m, 2 * N + 2 * M + m

    # rddot = c g / a^2
    J[acc, col_a] = -2.0 * c * g / a**3
    J[acc, col_g] = c / a**2
    # rdot = c (d / a - 2 b g / a^2)
    J[vel, col_a] = c * (-dl / a**2 + 4.0 * b * g / a**3)
    J[vel, col_b] = -2.0 * c * g / a**2
    J[vel, col_g] = -2.0 * c * b / a**2
    J[vel, col_d] = c / a
    # r = c (e - p d + p^2 g), p = b / a
    p = b / a
    J[rng, col_a] = c * (b * dl / a**2 - 2.0 * b * b * g / a**3)
    J[rng, col_b] = c * (-dl + 2.0 * p * g) / a
    J[rng, col_g] = c * p * p
    J[rng, col_d] = -c * p
    J[rng, col_e] = c
    return J


def ccrb_eta(Sigma_theta: np.ndarray, J: np.ndarray) -> np.ndarray:
    if Sigma_theta.shape != J.shape or J.shape[0] != J.shape[1]:
        raise DomainError("Sigma_theta and J must both be L x L")
    S = J @ Sigma_theta @ J.T
    return 0.5 * (S + S.T)


def ccrb(gs: GlobalSystem, cs: ConstraintSet, sigma: float, theta,
         c: float = SPEED_OF_LIGHT) -> CrbResult:
    """Bounds on theta and eta for one noise-free system and its true theta."""
    U = nullspace_basis(cs)
    St = ccrb_theta(gs, cs, sigma, U)
    J = jacobian_theta_to_eta(theta, gs.n_nodes, gs.pairs, c)
    return CrbResult(St, ccrb_eta(St, J), U)


def is_psd(S: np.ndarray, rtol: float = PSD_RTOL) -> bool:
    """Symmetric and no eigenvalue below ``-rtol * trace``."""
    if not np.allclose(S, S.T, rtol=1e-12, atol=0.0):
        return False
    w = np.linalg.eigvalsh(S)
    return bool(w.min() >= -rtol * max(np.trace(S), 0.0))
