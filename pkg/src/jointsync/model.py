"""Clock and range parameterizations for a network of mobile nodes.

Every node ``i`` carries an affine clock ``t_i = omega_i * t + phi_i`` whose
inverse ``t = alpha_i * t_i + beta_i`` is described by the calibration
parameters.  Every unordered pair ``(i, j)``, ``i < j``, carries a quadratic
range ``d_ij(t) = rddot * t**2 + rdot * t + r``.  Expressed in the local time
of the smaller node id ``i`` the propagation delay becomes
``gamma * t_i**2 + delta * t_i + epsilon``.

Two stacked parameter vectors of length ``L = 2N + 3M`` are used throughout:

* ``theta = [alpha(N); beta(N); gamma(M); delta(M); epsilon(M)]``
* ``eta   = [omega(N); phi(N); rddot(M); rdot(M); r(M)]``

Node ids are 1-based; pair blocks follow lexicographic pair order
``(1,2), (1,3), ..., (1,N), (2,3), ..., (N-1,N)``.

Note on ``delta``: substituting the clock model into the range polynomial
gives ``delta = (2*alpha_i*beta_i*rddot + alpha_i*rdot) / c``.  This is the
form that makes :func:`eta_from_theta` an exact inverse of
:func:`theta_from_eta`; a variant with ``alpha_i**-1`` in the first term is
not consistent with that inverse.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

SPEED_OF_LIGHT = 3e8
"""Default wave speed in m/s."""

Pair = tuple[int, int]


def _as_float(x) -> np.ndarray:
    """Array of at least float64 precision; extended precision input is kept."""
    x = np.asarray(x)
    return x.astype(np.result_type(x.dtype, np.float64), copy=False)


def n_pairs(n_nodes: int) -> int:
    return n_nodes * (n_nodes - 1) // 2


def n_params(n_nodes: int, n_pair: int | None = None) -> int:
    """Length ``2N + 3M`` of theta/eta (``M`` defaults to all pairs)."""
    if n_pair is None:
        n_pair = n_pairs(n_nodes)
    return 2 * n_nodes + 3 * n_pair


def pair_index(i: int, j: int, n_nodes: int) -> int:
    """Zero-based lexicographic index of pair ``(i, j)`` among all ``N(N-1)/2`` pairs."""
    if not (1 <= i < j <= n_nodes):
        raise DomainError(f"invalid pair ({i}, {j}) for N={n_nodes}; need 1 <= i < j <= N")
    # pairs with a smaller first node: sum_{a=1}^{i-1} (N - a)
    before = (i - 1) * n_nodes - (i - 1) * i // 2
    return before + (j - i - 1)


def all_pairs(n_nodes: int) -> list[Pair]:
    return list(combinations(range(1, n_nodes + 1), 2))


def normalize_pairs(pairs: Iterable[Sequence[int]], n_nodes: int) -> list[Pair]:
    """Validate a pair list and return it sorted in lexicographic order.

    Pairs may be given in either orientation; duplicates are rejected.
    """
    out: list[Pair] = []
    for p in pairs:
        a, b = int(p[0]), int(p[1])
        i, j = min(a, b), max(a, b)
        pair_index(i, j, n_nodes)
        out.append((i, j))
    if len(set(out)) != len(out):
        raise DomainError("duplicate pairs in pair list")
    if not out:
        raise DomainError("pair list is empty")
    return sorted(out)


@dataclass(frozen=True)
class ClockParams:
    omega: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", _as_float(self.omega))
        object.__setattr__(self, "phi", _as_float(self.phi))
        if np.any(self.omega <= 0):
            raise DomainError("clock skew must be positive")

    @property
    def n_nodes(self) -> int:
        return self.omega.size


@dataclass(frozen=True)
class CalibParams:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _as_float(self.alpha))
        object.__setattr__(self, "beta", _as_float(self.beta))
        if np.any(self.alpha <= 0):
            raise DomainError("alpha must be positive")


@dataclass(frozen=True)
class RangePoly:
    """Quadratic range coefficients of one or more pairs (SI units)."""

    r: np.ndarray
    rdot: np.ndarray
    rddot: np.ndarray

    def __post_init__(self):
        for name in ("r", "rdot", "rddot"):
            object.__setattr__(self, name, _as_float(getattr(self, name)))


@dataclass(frozen=True)
class DerivedRange:
    """Delay coefficients in the anchoring node's local time."""

    gamma: np.ndarray
    delta: np.ndarray
    epsilon: np.ndarray

    def __post_init__(self):
        for name in ("gamma", "delta", "epsilon"):
            object.__setattr__(self, name, _as_float(getattr(self, name)))


def calib_from_clock(clock: ClockParams) -> CalibParams:
    return CalibParams(alpha=1.0 / clock.omega, beta=-clock.phi / clock.omega)


def clock_from_calib(calib: CalibParams) -> ClockParams:
    return ClockParams(omega=1.0 / calib.alpha, phi=-calib.beta / calib.alpha)


def _anchors(pairs: Sequence[Pair]) -> np.ndarray:
    return np.fromiter((p[0] - 1 for p in pairs), dtype=np.intp, count=len(pairs))


def derived_from_range(rp: RangePoly, alpha_i, beta_i, c: float = SPEED_OF_LIGHT) -> DerivedRange:
    """Forward map from range coefficients to local-time delay coefficients."""
    a = _as_float(alpha_i)
    b = _as_float(beta_i)
    return DerivedRange(
        gamma=a * a * rp.rddot / c,
        delta=(2.0 * a * b * rp.rddot + a * rp.rdot) / c,
        epsilon=(b * b * rp.rddot + b * rp.rdot + rp.r) / c,
    )


def range_from_derived(dr: DerivedRange, alpha_i, beta_i, c: float = SPEED_OF_LIGHT) -> RangePoly:
    a = _as_float(alpha_i)
    b = _as_float(beta_i)
    p = b / a
    return RangePoly(
        rddot=c * dr.gamma / (a * a),
        rdot=c * (dr.delta - 2.0 * p * dr.gamma) / a,
        r=c * (dr.epsilon - p * dr.delta + p * p * dr.gamma),
    )


def _check_length(vec: np.ndarray, n_nodes: int, pairs: Sequence[Pair]) -> None:
    expected = n_params(n_nodes, len(pairs))
    if vec.shape != (expected,):
        raise DomainError(f"parameter vector has shape {vec.shape}, expected ({expected},)")


def split_blocks(vec, n_nodes: int) -> tuple[np.ndarray, ...]:
    """Split a stacked vector into its five blocks (node, node, pair, pair, pair)."""
    vec = _as_float(vec)
    m = (vec.size - 2 * n_nodes) // 3
    n = n_nodes
    return vec[:n], vec[n:2 * n], vec[2 * n:2 * n + m], vec[2 * n + m:2 * n + 2 * m], vec[2 * n + 2 * m:]


def theta_from_eta(eta, n_nodes: int, pairs: Sequence[Pair] | None = None,
                   c: float = SPEED_OF_LIGHT) -> np.ndarray:
    """Map physical parameters ``eta`` to derived parameters ``theta``."""
    pairs = all_pairs(n_nodes) if pairs is None else pairs
    eta = _as_float(eta)
    _check_length(eta, n_nodes, pairs)
    omega, phi, rddot, rdot, r = split_blocks(eta, n_nodes)
    calib = calib_from_clock(ClockParams(omega, phi))
    anchor = _anchors(pairs)
    dr = derived_from_range(RangePoly(r, rdot, rddot), calib.alpha[anchor], calib.beta[anchor], c)
    return np.concatenate([calib.alpha, calib.beta, dr.gamma, dr.delta, dr.epsilon])


def eta_from_theta(theta, n_nodes: int, pairs: Sequence[Pair] | None = None,
                   c: float = SPEED_OF_LIGHT) -> np.ndarray:
    """Map derived parameters ``theta`` back to physical parameters ``eta``."""
    pairs = all_pairs(n_nodes) if pairs is None else pairs
    theta = _as_float(theta)
    _check_length(theta, n_nodes, pairs)
    alpha, beta, gamma, delta, epsilon = split_blocks(theta, n_nodes)
    clock = clock_from_calib(CalibParams(alpha, beta))
    anchor = _anchors(pairs)
    rp = range_from_derived(DerivedRange(gamma, delta, epsilon), alpha[anchor], beta[anchor], c)
    return np.concatenate([clock.omega, clock.phi, rp.rddot, rp.rdot, rp.r])


def delay_local(dr: DerivedRange, t_i):
    """Propagation delay (s) at local time ``t_i`` of the anchoring node."""
    t_i = _as_float(t_i)
    return (dr.gamma * t_i + dr.delta) * t_i + dr.epsilon


def delay_global(rp: RangePoly, t, c: float = SPEED_OF_LIGHT):
    """Propagation delay (s) at global time ``t``."""
    t = _as_float(t)
    return ((rp.rddot * t + rp.rdot) * t + rp.r) / c


def param_labels(n_nodes: int, pairs: Sequence[Pair] | None = None,
                 kind: str = "theta") -> list[tuple[str, str]]:
    """``(param_name, node_or_pair)`` labels for every entry of theta or eta."""
    pairs = all_pairs(n_nodes) if pairs is None else pairs
    names = ("alpha", "beta", "gamma", "delta", "epsilon") if kind == "theta" else \
        ("omega", "phi", "rddot", "rdot", "r")
    nodes = [str(k) for k in range(1, n_nodes + 1)]
    links = [f"{i}-{j}" for i, j in pairs]
    out = [(names[0], s) for s in nodes] + [(names[1], s) for s in nodes]
    for name in names[2:]:
        out.extend((name, s) for s in links)
    return out
