"""Bethe free energy of a binary pairwise model in the (q, xi) parameterization.

For an edge (i, j) the pairwise table is fully determined by the node
marginals q_i = p(s_i = 1), q_j and the joint xi_ij = p(s_i = 1, s_j = 1):

    p11 = xi,  p10 = q_i - xi,  p01 = q_j - xi,  p00 = xi + 1 - q_i - q_j.

With the marginals held fixed the free energy is strictly convex in xi and
its stationary point is the root of a quadratic, so xi can be eliminated
analytically and the free energy becomes a function of q alone.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit, xlogy

from .model import Model

Q_EPS = 1e-12
LN2 = float(np.log(2.0))


class BoundsError(ValueError):
    """A pairwise marginal lies outside its feasible interval."""


def _out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def _p11(a, b, ac, bc, w):
    """Stationary p(1, 1) for marginals (a, b), complements (ac, bc), coupling w.

    Each branch is a cancellation-free form of the in-bounds root, so the
    result keeps full relative precision even when it is exponentially small.
    """
    a, b, ac, bc, w = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, ac, bc, w)))
    s = a + b
    ab = a * b
    t = a * bc + b * ac
    d2 = (a - b) ** 2
    out = np.empty(a.shape)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        alpha = np.expm1(w)

        m = (w >= 0) & (w <= LN2)
        if m.any():
            al = alpha[m]
            Q = 1.0 + al * s[m]
            D = 1.0 + 2.0 * al * t[m] + al * al * d2[m]
            out[m] = 2.0 * (1.0 + al) * ab[m] / (Q + np.sqrt(D))

        m = w > LN2
        if m.any():
            beta = 1.0 / alpha[m]
            R = beta + s[m]
            D = beta * beta + 2.0 * beta * t[m] + d2[m]
            out[m] = 2.0 * (1.0 + beta) * ab[m] / (R + np.sqrt(D))

        m = w < 0
        if m.any():
            g = np.exp(w[m])
            k = -alpha[m]
            Q = 0.5 * ((ac[m] - b[m]) + (bc[m] - a[m])) + g * s[m]
            D = Q * Q + 4.0 * k * g * ab[m]
            sq = np.sqrt(D)
            out[m] = np.where(Q > 0, 2.0 * g * ab[m] / (Q + sq), (sq - Q) / (2.0 * k))
    return out


def edge_tables(qi, qj, w, qi_c=None, qj_c=None):
    """All four stationary pair probabilities (p11, p10, p01, p00).

    Every entry is computed directly rather than as a difference, so tiny
    entries at strong couplings stay positive and accurate. ``qi_c`` and
    ``qj_c`` are the complements 1 - q when known more precisely than by
    subtraction (e.g. from a logit).
    """
    qi = np.asarray(qi, dtype=float)
    qj = np.asarray(qj, dtype=float)
    w = np.asarray(w, dtype=float)
    qi_c = 1.0 - qi if qi_c is None else np.asarray(qi_c, dtype=float)
    qj_c = 1.0 - qj if qj_c is None else np.asarray(qj_c, dtype=float)
    p11 = _p11(qi, qj, qi_c, qj_c, w)
    p10 = _p11(qi, qj_c, qi_c, qj, -w)
    p01 = _p11(qi_c, qj, qi, qj_c, -w)
    p00 = _p11(qi_c, qj_c, qi, qj, w)
    return p11, p10, p01, p00


def xi_bounds(qi, qj):
    """Feasible interval max(0, q_i + q_j - 1) <= xi <= min(q_i, q_j)."""
    qi = np.asarray(qi, dtype=float)
    qj = np.asarray(qj, dtype=float)
    return _out(np.maximum(0.0, qi + qj - 1.0)), _out(np.minimum(qi, qj))


def xi_solve(qi, qj, w):
    """The unique stationary xi inside the feasible interval.

    Reduces to q_i q_j at w = 0 and approaches (without reaching) the
    interval ends as |w| grows.
    """
    qi = np.asarray(qi, dtype=float)
    qj = np.asarray(qj, dtype=float)
    w = np.asarray(w, dtype=float)
    if not (np.all(np.isfinite(qi)) and np.all(np.isfinite(qj)) and np.all(np.isfinite(w))):
        raise ValueError("xi_solve: non-finite input")
    return _out(_p11(qi, qj, 1.0 - qi, 1.0 - qj, w))


def positive_root_zeta(qi, qj, w):
    """The other root of the stationarity quadratic; never feasible."""
    qi = np.asarray(qi, dtype=float)
    qj = np.asarray(qj, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w == 0):
        raise ValueError("positive_root_zeta: quadratic is degenerate at w = 0")
    alpha = np.expm1(w)
    Q = 1.0 + alpha * (qi + qj)
    D = 1.0 + 2.0 * alpha * (qi * (1 - qj) + qj * (1 - qi)) + alpha ** 2 * (qi - qj) ** 2
    return _out((Q + np.sqrt(np.maximum(D, 0.0))) / (2.0 * alpha))


def pair_table(qi, qj, xi):
    """(p11, p10, p01, p00) from marginals and the joint; raises outside bounds."""
    qi = np.asarray(qi, dtype=float)
    qj = np.asarray(qj, dtype=float)
    xi = np.asarray(xi, dtype=float)
    tab = (xi, qi - xi, qj - xi, xi + 1.0 - qi - qj)
    if any(np.any(p < 0) for p in tab):
        raise BoundsError("pair table has a negative entry; xi outside its bounds")
    return tuple(_out(p) for p in tab)


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _compensated_p00(qi, qj, xi):
    # xi + 1 - qi - qj is the entry most prone to cancellation
    s, e1 = _two_sum(xi, -qi)
    s, e2 = _two_sum(s, 1.0 - qj)
    e3 = (1.0 - (1.0 - qj)) - qj
    return s + (e1 + e2 + e3)


def dF_dxi(qi, qj, xi, w):
    """Partial derivative of the Bethe free energy with respect to xi_ij."""
    qi = np.asarray(qi, dtype=float)
    qj = np.asarray(qj, dtype=float)
    xi = np.asarray(xi, dtype=float)
    p11, p10, p01, p00 = xi, qi - xi, qj - xi, _compensated_p00(qi, qj, xi)
    if any(np.any(p <= 0) for p in (p11, p10, p01, p00)):
        raise BoundsError("dF_dxi: xi must lie strictly inside its bounds")
    return _out(-np.asarray(w) + np.log(p11) + np.log(p00) - np.log(p10) - np.log(p01))


def d2F_dxi2(qi, qj, xi):
    """Second derivative in xi: the sum of inverse pair probabilities."""
    p = pair_table(qi, qj, xi)
    return _out(sum(1.0 / np.asarray(x) for x in p))


@dataclass(frozen=True)
class EdgeScratch:
    alpha: float
    beta: float
    Q: float
    R: float
    zeta: float


def edge_scratch(qi: float, qj: float, w: float) -> EdgeScratch:
    """Intermediate quantities of the per-edge solve (for inspection and tests)."""
    alpha = float(np.expm1(w))
    beta = 1.0 / alpha if alpha != 0 else float("inf")
    zeta = positive_root_zeta(qi, qj, w) if w != 0 else float("nan")
    return EdgeScratch(alpha, beta, 1 + alpha * qi + alpha * qj, beta + qi + qj, zeta)


@dataclass
class Beliefs:
    """Node marginals ``q`` (length n) and edge joints ``xi`` (one per edge)."""

    q: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)

    def covariances(self, model: Model) -> np.ndarray:
        return self.xi - self.q[model.ei] * self.q[model.ej]

    def check(self, model: Model) -> None:
        if self.q.shape != (model.n,) or self.xi.shape != (model.num_edges,):
            raise ValueError("beliefs do not match model shape")
        if np.any(self.q <= 0) or np.any(self.q >= 1):
            raise BoundsError("node marginals must lie in (0, 1)")
        lo, hi = xi_bounds(self.q[model.ei], self.q[model.ej])
        if np.any(self.xi <= lo) or np.any(self.xi >= hi):
            raise BoundsError("edge joints must lie strictly inside their bounds")


def beliefs_from_q(model: Model, q) -> Beliefs:
    q = np.asarray(q, dtype=float)
    return Beliefs(q.copy(), np.asarray(xi_solve(q[model.ei], q[model.ej], model.w)).reshape(-1))


def _node_entropy_terms(q, qc):
    return xlogy(q, q) + xlogy(qc, qc)


def bethe_free_energy(model: Model, beliefs: Beliefs) -> float:
    """F_b = E - S_1 - S_2 at arbitrary feasible (q, xi)."""
    q = np.asarray(beliefs.q, dtype=float)
    xi = np.asarray(beliefs.xi, dtype=float)
    if q.shape != (model.n,) or xi.shape != (model.num_edges,):
        raise ValueError("beliefs do not match model shape")
    if np.any(q < 0) or np.any(q > 1):
        raise BoundsError("node marginals outside [0, 1]")
    energy = -np.dot(model.w, xi) - np.dot(model.biases, q)
    s1 = np.dot(1 - model.degree, _node_entropy_terms(q, 1 - q))
    s2 = 0.0
    if model.num_edges:
        tab = pair_table(q[model.ei], q[model.ej], xi)
        s2 = sum(np.sum(xlogy(p, p)) for p in tab)
    return float(energy + s1 + s2)


def _logits(q):
    q = np.clip(np.asarray(q, dtype=float), Q_EPS, 1 - Q_EPS)
    return np.log(q) - np.log1p(-q)


Y_MAX = float(_logits(1 - Q_EPS))


class ReducedState(NamedTuple):
    F: float
    grad: np.ndarray  # dF/dy
    dq: np.ndarray  # dF/dq
    q: np.ndarray
    tables: tuple


def reduced_state(model: Model, y: np.ndarray) -> ReducedState:
    """Free energy with xi eliminated, and its gradient in logit space."""
    y = np.clip(np.asarray(y, dtype=float), -Y_MAX, Y_MAX)
    q = expit(y)
    qc = expit(-y)
    ei, ej, w = model.ei, model.ej, model.w
    tabs = edge_tables(q[ei], q[ej], w, qc[ei], qc[ej])
    p11, p10, p01, p00 = tabs
    z = model.degree
    F = (-np.dot(w, p11) - np.dot(model.biases, q)
         + np.dot(1 - z, _node_entropy_terms(q, qc))
         + sum(np.sum(xlogy(p, p)) for p in tabs))
    lp00 = np.log(p00)
    # ln[(1-q)/q]^(z-1) is -(z-1) y exactly
    dq = -model.biases - (z - 1) * y
    dq = dq + np.bincount(ei, np.log(p10) - lp00, minlength=model.n)
    dq = dq + np.bincount(ej, np.log(p01) - lp00, minlength=model.n)
    return ReducedState(float(F), dq * q * qc, dq, q, tabs)


def reduced_free_energy(model: Model, q) -> float:
    """F_b(q, xi*(q)) with each xi at its analytic minimum."""
    return reduced_state(model, _logits(q)).F


def grad_q(model: Model, q) -> np.ndarray:
    """dF_b/dy_i for q_i = sigmoid(y_i), with xi re-solved at q.

    The xi-derivatives vanish at the analytic solution, so only the explicit
    q-dependence contributes.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0) or np.any(q >= 1):
        raise BoundsError("grad_q: marginals must lie strictly inside (0, 1)")
    return reduced_state(model, _logits(q)).grad


def logits(q) -> np.ndarray:
    return _logits(q)
