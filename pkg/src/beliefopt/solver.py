"""Belief optimization: minimizing the Bethe free energy over node marginals.

Three drivers share the reduced free energy F(q) = F_b(q, xi*(q)):

* :func:`solve_gradient` -- adaptive gradient descent in logit space with
  accept/reject step control, so every accepted step lowers F.
* :func:`solve_fixed_point` -- damped synchronous fixed-point iteration of the
  stationarity condition (no descent guarantee).
* :func:`coordinate_descent` -- alternating exact q_i updates and xi refresh.
"""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .bethe import Beliefs, Q_EPS, Y_MAX, bethe_free_energy, logits, reduced_state, xi_solve
from .model import Model

INITS = ("uniform-half", "bias-sigmoid", "seeded-noise")


@dataclass(frozen=True)
class SolveConfig:
    """Solver hyperparameters shared by every inference method.

    Convergence is declared on an accepted step when max|dq| < tol_q or
    |dF| < tol_f, provided the gradient norm is below ``tol_grad * n``.
    Fixed-point methods converge when the undamped residual drops below tol_q.
    """

    max_iters: int = 1000
    tol_q: float = 1e-8
    tol_f: float = 1e-10
    tol_grad: float = 1e-8
    step0: float = 0.1
    step_up: float = 1.1
    step_down: float = 0.5
    damping_max: float = 0.9
    damping_ramp_iters: int = 100
    init: str = "seeded-noise"
    init_noise: float = 0.01
    seed: int = 0
    restarts: int = 0
    record_trace: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 <= self.damping_max < 1:
            raise ValueError("damping_max must lie in [0, 1)")
        if self.step0 <= 0:
            raise ValueError("step0 must be positive")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")

    def damping(self, it: int) -> float:
        """Linear ramp from 0 to damping_max over damping_ramp_iters sweeps."""
        if self.damping_ramp_iters <= 0:
            return self.damping_max
        return self.damping_max * min(1.0, it / self.damping_ramp_iters)

    @classmethod
    def from_dict(cls, data: dict) -> "SolveConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


class TraceRow(NamedTuple):
    iteration: int
    free_energy: float
    grad_norm: float
    max_dq: float


@dataclass
class SolveReport:
    method: str
    converged: bool
    iterations: int
    final_free_energy: float
    final_grad_norm: float
    wall_time: float = 0.0
    trace: list[TraceRow] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        return d


def write_trace(report: SolveReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(TraceRow._fields)
        out.writerows(report.trace)


def initial_q(model: Model, cfg: SolveConfig, seed: int | None = None) -> np.ndarray:
    if cfg.init == "uniform-half":
        return np.full(model.n, 0.5)
    if cfg.init == "bias-sigmoid":
        return np.clip(expit(model.biases), Q_EPS, 1 - Q_EPS)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    return 0.5 + rng.uniform(-cfg.init_noise, cfg.init_noise, model.n)


def _check_finite(F):
    if not np.isfinite(F):
        raise FloatingPointError("non-finite Bethe free energy")


def adaptive_descent(evaluate, y0: np.ndarray, cfg: SolveConfig, method: str,
                     y_max: float = Y_MAX):
    """Accept/reject gradient descent on an objective of logits.

    ``evaluate(y)`` returns an object with ``F``, ``grad`` (dF/dy) and ``q``.
    Returns the final evaluation, the final logits and a report.
    """
    t0 = time.perf_counter()
    y = np.asarray(y0, dtype=float)
    st = evaluate(y)
    _check_finite(st.F)
    n = len(y)
    gnorm = float(np.linalg.norm(st.grad))
    gtol = cfg.tol_grad * max(n, 1)
    trace = [TraceRow(0, st.F, gnorm, 0.0)] if cfg.record_trace else []
    eta = cfg.step0
    converged = gnorm == 0.0
    it = 0
    while not converged and it < cfg.max_iters:
        it += 1
        y_new = np.clip(y - eta * st.grad, -y_max, y_max)
        new = evaluate(y_new)
        _check_finite(new.F)
        if new.F <= st.F:
            dq = float(np.max(np.abs(new.q - st.q))) if n else 0.0
            dF = st.F - new.F
            y, st = y_new, new
            gnorm = float(np.linalg.norm(st.grad))
            eta *= cfg.step_up
            if cfg.record_trace:
                trace.append(TraceRow(it, st.F, gnorm, dq))
            converged = gnorm < gtol and (dq < cfg.tol_q or dF < cfg.tol_f)
        else:
            eta *= cfg.step_down
            # a rejected step at a stationary point is floating-point noise
            converged = gnorm < gtol and eta * gnorm < cfg.tol_q
    report = SolveReport(method, bool(converged), it, st.F, gnorm,
                         time.perf_counter() - t0, trace)
    return st, y, report


def _gradient_run(model: Model, cfg: SolveConfig, q0: np.ndarray):
    st, _, report = adaptive_descent(lambda y: reduced_state(model, y), logits(q0), cfg, "bo-grad")
    return Beliefs(st.q.copy(), st.tables[0].copy()), report


def solve_gradient(model: Model, cfg: SolveConfig = SolveConfig()) -> tuple[Beliefs, SolveReport]:
    """Minimize F_b by adaptive gradient descent on the logits y = logit(q).

    A trial step y - eta * dF/dy is kept only if it does not raise F, after
    which eta grows by ``step_up``; otherwise it is discarded and eta shrinks
    by ``step_down``. With ``cfg.restarts > 0`` extra runs from seeds
    ``seed + k`` are made and the lowest free energy wins.
    """
    best = _gradient_run(model, cfg, initial_q(model, cfg))
    for k in range(1, cfg.restarts + 1):
        cand = _gradient_run(model, cfg, initial_q(model, replace(cfg, init="seeded-noise"), cfg.seed + k))
        if cand[1].final_free_energy < best[1].final_free_energy:
            best = cand
    return best


def fixed_point_map(model: Model, q: np.ndarray) -> np.ndarray:
    """One undamped sweep q -> q* of the stationarity condition.

    q*_i = sigmoid(b_i + ln[q_i^z prod_j p00_ij / ((1 - q_i)^z prod_j p10_ij)])
    with the pair tables solved at the current q.
    """
    y = logits(q)
    st = reduced_state(model, y)
    return expit(y - st.dq)


def solve_fixed_point(model: Model, cfg: SolveConfig = SolveConfig()) -> tuple[Beliefs, SolveReport]:
    """Damped synchronous fixed-point iteration; may fail to converge."""
    t0 = time.perf_counter()
    q = initial_q(model, cfg)
    trace = []
    converged = False
    it = 0
    st = reduced_state(model, logits(q))
    while it < cfg.max_iters:
        it += 1
        y = logits(q)
        st = reduced_state(model, y)
        _check_finite(st.F)
        q_star = expit(y - st.dq)
        resid = float(np.max(np.abs(q_star - st.q))) if model.n else 0.0
        if cfg.record_trace:
            trace.append(TraceRow(it, st.F, float(np.linalg.norm(st.grad)), resid))
        if resid < cfg.tol_q:
            converged = True
            break
        d = cfg.damping(it - 1)
        q = np.clip((1 - d) * q_star + d * st.q, Q_EPS, 1 - Q_EPS)
    st = reduced_state(model, logits(q))
    beliefs = Beliefs(st.q.copy(), st.tables[0].copy())
    report = SolveReport("bo-fp", converged, it, st.F, float(np.linalg.norm(st.grad)),
                         time.perf_counter() - t0, trace)
    return beliefs, report


def _coord_derivative(model: Model, beliefs: Beliefs, i: int, qi: float) -> float:
    z = model.degree[i]
    g = -model.biases[i] + (z - 1) * (np.log1p(-qi) - np.log(qi))
    for j, k in model.adjacency[i]:
        xi = beliefs.xi[k]
        g += np.log(qi - xi) - np.log(xi + 1.0 - qi - beliefs.q[j])
    return g


def coordinate_interval(model: Model, beliefs: Beliefs, i: int) -> tuple[float, float]:
    """Open interval of feasible q_i with neighbours and edge joints fixed."""
    lo, hi = 0.0, 1.0
    for j, k in model.adjacency[i]:
        lo = max(lo, beliefs.xi[k])
        hi = min(hi, beliefs.xi[k] + 1.0 - beliefs.q[j])
    return lo, hi


def coordinate_update_q(model: Model, beliefs: Beliefs, i: int) -> float:
    """Exact minimizer of F_b over q_i alone, by bisection.

    With xi and neighbouring marginals fixed, dF/dq_i is strictly increasing
    on the feasible interval and runs from -inf to +inf, so the root is
    bracketed by the interval itself.
    """
    lo, hi = coordinate_interval(model, beliefs, i)
    if not lo < hi:
        raise ValueError(f"empty feasible interval for node {i}: ({lo}, {hi})")
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        if _coord_derivative(model, beliefs, i, mid) > 0:
            hi = mid
        else:
            lo = mid


def coordinate_descent(model: Model, cfg: SolveConfig = SolveConfig()) -> tuple[Beliefs, SolveReport]:
    """Alternate exact single-node q updates with refreshing incident xi.

    Each node update and each xi refresh is an exact minimization in its own
    block, so F_b never increases. Progress can be slow where the feasible
    intervals are narrow.
    """
    t0 = time.perf_counter()
    q = initial_q(model, cfg)
    beliefs = Beliefs(q, np.asarray(xi_solve(q[model.ei], q[model.ej], model.w)).reshape(-1))
    F = bethe_free_energy(model, beliefs)
    trace = [TraceRow(0, F, float("nan"), 0.0)]
    converged = False
    it = 0
    while it < cfg.max_iters:
        it += 1
        q_old = beliefs.q.copy()
        for i in range(model.n):
            beliefs.q[i] = coordinate_update_q(model, beliefs, i)
            for j, k in model.adjacency[i]:
                a, b = (i, j) if model.ei[k] == i else (j, i)
                beliefs.xi[k] = xi_solve(beliefs.q[a], beliefs.q[b], model.w[k])
        F_new = bethe_free_energy(model, beliefs)
        dq = float(np.max(np.abs(beliefs.q - q_old))) if model.n else 0.0
        trace.append(TraceRow(it, F_new, float("nan"), dq))
        dF, F = F - F_new, F_new
        if dq < cfg.tol_q:
            converged = True
            break
        # dF shrinks like dq^2, so a small dF alone stops far from the minimum
        if abs(dF) < cfg.tol_f:
            gnorm = float(np.linalg.norm(reduced_state(model, logits(beliefs.q)).grad))
            if gnorm < cfg.tol_grad * max(model.n, 1):
                converged = True
                break
    gnorm = float(np.linalg.norm(reduced_state(model, logits(beliefs.q)).grad))
    return beliefs, SolveReport("bo-cd", converged, it, F, gnorm, time.perf_counter() - t0, trace)
