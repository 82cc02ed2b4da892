"""Comparison methods: naive mean field, TAP and damped loopy belief propagation.

All three use the same damping protocol as the Bethe fixed-point solver: the
new iterate is mixed with the old one with a weight that ramps linearly from
0 to ``cfg.damping_max``, and convergence is judged on the undamped residual.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit, logsumexp, xlogy

from .bethe import Beliefs, Q_EPS, logits, reduced_state
from .model import Model
from .solver import SolveConfig, SolveReport, TraceRow, adaptive_descent, initial_q

MSG_FLOOR = 1e-300


def _neighbour_sum(model: Model, edge_vals_i: np.ndarray, edge_vals_j: np.ndarray) -> np.ndarray:
    """Per-node sum: node ei[k] receives edge_vals_i[k], node ej[k] receives edge_vals_j[k]."""
    return (np.bincount(model.ei, edge_vals_i, minlength=model.n)
            + np.bincount(model.ej, edge_vals_j, minlength=model.n))


def _node_neg_entropy(q):
    return xlogy(q, q) + xlogy(1 - q, 1 - q)


# -- mean field --------------------------------------------------------------

def mf_free_energy(model: Model, q) -> float:
    q = np.asarray(q, dtype=float)
    E = -np.dot(model.w, q[model.ei] * q[model.ej]) - np.dot(model.biases, q)
    return float(E + np.sum(_node_neg_entropy(q)))


def mf_map(model: Model, q: np.ndarray) -> np.ndarray:
    """q*_i = sigmoid(sum_j W_ij q_j + b_i)."""
    w = model.w
    return expit(model.biases + _neighbour_sum(model, w * q[model.ej], w * q[model.ei]))


def tap_map(model: Model, q: np.ndarray) -> np.ndarray:
    """Mean field map plus the second-order (Onsager) reaction term."""
    w, ei, ej = model.w, model.ei, model.ej
    v = q * (1 - q)
    field = model.biases + _neighbour_sum(model, w * q[ej], w * q[ei])
    react = _neighbour_sum(model, w * w * v[ej], w * w * v[ei])
    return expit(field + 0.5 * (1 - 2 * q) * react)


def _damped_iteration(model: Model, cfg: SolveConfig, update, energy, method: str):
    t0 = time.perf_counter()
    q = initial_q(model, cfg)
    trace = []
    converged = False
    it = 0
    while it < cfg.max_iters:
        it += 1
        q_star = update(model, q)
        resid = float(np.max(np.abs(q_star - q))) if model.n else 0.0
        if cfg.record_trace:
            trace.append(TraceRow(it, energy(model, q), resid, resid))
        if resid < cfg.tol_q:
            converged = True
            q = q_star
            break
        d = cfg.damping(it - 1)
        q = np.clip((1 - d) * q_star + d * q, Q_EPS, 1 - Q_EPS)
    resid = float(np.max(np.abs(update(model, q) - q))) if model.n else 0.0
    return q, SolveReport(method, converged, it, energy(model, q), resid,
                          time.perf_counter() - t0, trace)


def mf_solve(model: Model, cfg: SolveConfig = SolveConfig()) -> tuple[Beliefs, SolveReport]:
    """Damped naive mean field; pairwise joints are taken as q_i q_j."""
    q, report = _damped_iteration(model, cfg, mf_map, mf_free_energy, "mf")
    return Beliefs(q, q[model.ei] * q[model.ej]), report


# -- TAP ---------------------------------------------------------------------

def tap_free_energy(model: Model, q) -> float:
    """Mean field free energy minus half the summed squared-weight correction."""
    q = np.asarray(q, dtype=float)
    v = q * (1 - q)
    corr = 0.5 * np.dot(model.w ** 2, v[model.ei] * v[model.ej])
    return mf_free_energy(model, q) - float(corr)


def tap_grad_q(model: Model, q) -> np.ndarray:
    """dF_tap/dq_i.

    The reaction term enters with a minus sign, which is the derivative of
    the correction above and the form whose root is the TAP fixed point.
    """
    q = np.asarray(q, dtype=float)
    w, ei, ej = model.w, model.ei, model.ej
    v = q * (1 - q)
    field = model.biases + _neighbour_sum(model, w * q[ej], w * q[ei])
    react = _neighbour_sum(model, w * w * v[ej], w * w * v[ei])
    return -field + np.log(q) - np.log1p(-q) - 0.5 * (1 - 2 * q) * react


def xi_tap(qi, qj, w):
    """Second-order joint q_i q_j + W q_i(1-q_i) q_j(1-q_j); may leave the feasible interval."""
    qi = np.asarray(qi, dtype=float)
    qj = np.asarray(qj, dtype=float)
    out = qi * qj + np.asarray(w) * qi * (1 - qi) * qj * (1 - qj)
    return float(out) if out.ndim == 0 else out


class _TapState(NamedTuple):
    F: float
    grad: np.ndarray
    q: np.ndarray


def tap_solve(model: Model, cfg: SolveConfig = SolveConfig(),
              method: str = "fixed-point") -> tuple[Beliefs, SolveReport]:
    """TAP marginals by damped fixed-point iteration or by gradient descent."""
    if method == "fixed-point":
        q, report = _damped_iteration(model, cfg, tap_map, tap_free_energy, "tap")
    elif method == "gradient":
        def evaluate(y):
            q = expit(y)
            return _TapState(tap_free_energy(model, q), tap_grad_q(model, q) * q * (1 - q), q)
        st, _, report = adaptive_descent(evaluate, logits(initial_q(model, cfg)), cfg, "tap")
        q = st.q
    else:
        raise ValueError(f"unknown TAP method {method!r}")
    return Beliefs(q, xi_tap(q[model.ei], q[model.ej], model.w)), report


# -- loopy belief propagation ------------------------------------------------

@dataclass
class BpState:
    """Directed messages as normalized 2-entry tables.

    Row 2k carries edge k from ei[k] to ej[k]; row 2k + 1 the reverse.
    Column s is the message value at target state s.
    """

    messages: np.ndarray
    iteration: int = 0
    damping: float = 0.0

    @classmethod
    def uniform(cls, model: Model) -> "BpState":
        return cls(np.full((2 * model.num_edges, 2), 0.5))


def _directed(model: Model):
    src = np.empty(2 * model.num_edges, dtype=np.intp)
    dst = np.empty_like(src)
    src[0::2], dst[0::2] = model.ei, model.ej
    src[1::2], dst[1::2] = model.ej, model.ei
    return src, dst, np.repeat(model.w, 2)


def _log_ratio(m):
    return np.log(m[:, 1]) - np.log(m[:, 0])


def _bp_targets(model: Model, m: np.ndarray, src, dst, wd) -> np.ndarray:
    """Undamped sum-product update of every directed message."""
    lam = _log_ratio(m)
    incoming = np.bincount(dst, lam, minlength=model.n)
    cavity = model.biases[src] + incoming[src] - lam[np.arange(len(lam)) ^ 1]
    new_lam = np.logaddexp(0.0, cavity + wd) - np.logaddexp(0.0, cavity)
    return np.column_stack([expit(-new_lam), expit(new_lam)])


def bp_beliefs(model: Model, state: BpState) -> Beliefs:
    """Node and edge beliefs implied by the current messages."""
    lam = _log_ratio(state.messages)
    _, dst, _ = _directed(model)
    H = model.biases + np.bincount(dst, lam, minlength=model.n)
    q = expit(H)
    hi = H[model.ei] - lam[1::2]
    hj = H[model.ej] - lam[0::2]
    logits4 = np.column_stack([hi + hj + model.w, hi, hj, np.zeros_like(hi)])
    xi = np.exp(logits4[:, 0] - logsumexp(logits4, axis=1)) if model.num_edges else np.zeros(0)
    return Beliefs(q, xi)


def _floor_normalize(m):
    m = np.maximum(m, MSG_FLOOR)
    return m / m.sum(axis=1, keepdims=True)


def bp_solve(model: Model, cfg: SolveConfig = SolveConfig(),
             schedule: str = "synchronous") -> tuple[Beliefs, SolveReport]:
    """Damped sum-product on the pairwise model.

    Potentials are exp(W_ij s_i s_j) and exp(b_i s_i). Messages start
    uniform. Convergence means the largest undamped message change is below
    ``cfg.tol_q``; otherwise the run stops at ``max_iters`` and is reported as
    not converged. ``final_free_energy`` is the Bethe free energy at the BP
    node marginals with xi at its analytic minimum.
    """
    t0 = time.perf_counter()
    src, dst, wd = _directed(model)
    state = BpState.uniform(model)
    trace = []
    converged = model.num_edges == 0
    while not converged and state.iteration < cfg.max_iters:
        state.iteration += 1
        state.damping = cfg.damping(state.iteration - 1)
        if schedule == "synchronous":
            target = _bp_targets(model, state.messages, src, dst, wd)
            resid = float(np.max(np.abs(target - state.messages)))
            state.messages = _floor_normalize((1 - state.damping) * target + state.damping * state.messages)
        elif schedule == "sequential":
            resid = 0.0
            for d in range(len(src)):
                target = _bp_targets(model, state.messages, src, dst, wd)[d]
                resid = max(resid, float(np.max(np.abs(target - state.messages[d]))))
                state.messages[d] = _floor_normalize(
                    ((1 - state.damping) * target + state.damping * state.messages[d])[None])[0]
        else:
            raise ValueError(f"unknown schedule {schedule!r}")
        if cfg.record_trace:
            F = reduced_state(model, logits(bp_beliefs(model, state).q)).F
            trace.append(TraceRow(state.iteration, F, resid, resid))
        converged = resid < cfg.tol_q
    beliefs = bp_beliefs(model, state)
    st = reduced_state(model, logits(beliefs.q))
    return beliefs, SolveReport("bp", bool(converged), state.iteration, st.F,
                                float(np.linalg.norm(st.grad)), time.perf_counter() - t0, trace)
