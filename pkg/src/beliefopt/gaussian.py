"""Belief optimization for Gaussian pairwise models.

The density is proportional to exp(-x'Wx/2 - b'x), with W assembled from the
diagonal ``diag`` and symmetric off-diagonal couplings. Means decouple from
covariances: they are exact at the minimum (W mu = -b). Edge covariances
have a closed form given the node variances, and the variances are found by
descending the free energy in log-variance space.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.sparse.linalg import cg

from .model import Model, ModelError, Topology, _parse_edges
from .solver import SolveConfig

F_FLOOR = -1e12
V_CAP = 1e12


class NotPositiveDefinite(ValueError):
    pass


class _Diverged(Exception):
    pass


@dataclass(frozen=True, eq=False)
class GaussianModel:
    n: int
    edges: tuple[tuple[int, int, float], ...]
    diag: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if diag.shape != (self.n,) or b.shape != (self.n,):
            raise ModelError("diag and b must have one entry per node")
        if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(b))):
            raise ModelError("diag and b must be finite")
        graph = Model(self.n, self.edges, b)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "edges", graph.edges)
        object.__setattr__(self, "graph", graph)

    @property
    def ei(self):
        return self.graph.ei

    @property
    def ej(self):
        return self.graph.ej

    @property
    def w(self):
        return self.graph.w

    @property
    def degree(self):
        return self.graph.degree

    def matrix(self) -> np.ndarray:
        W = self.graph.weight_matrix()
        W[np.diag_indices(self.n)] = self.diag
        return W

    def is_positive_definite(self) -> bool:
        try:
            np.linalg.cholesky(self.matrix())
        except np.linalg.LinAlgError:
            return False
        return True

    def is_diagonally_dominant(self) -> bool:
        off = np.abs(self.graph.weight_matrix()).sum(axis=1)
        return bool(np.all(np.abs(self.diag) > off))


@dataclass
class GaussianBeliefs:
    mu: np.ndarray
    v: np.ndarray
    v_edge: np.ndarray


@dataclass
class GaussianReport:
    status: str  # converged | max_iters | diverged
    iterations: int
    final_free_energy: float
    final_grad_norm: float
    positive_definite: bool
    wall_time: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def ga_mean_solve(model: GaussianModel, cfg: SolveConfig = SolveConfig(), tol: float = 1e-10) -> np.ndarray:
    """Minimize the mean part of the free energy by conjugate gradients.

    The gradient is W mu + b; the minimizer exists only for positive
    definite W.
    """
    if not model.is_positive_definite():
        raise NotPositiveDefinite("mean problem is unbounded: W is not positive definite")
    mu, _ = cg(model.matrix(), -model.b, rtol=0.0, atol=tol,
               maxiter=max(cfg.max_iters, 2 * model.n))
    return mu


def ga_vij_solve(vi, vj, w):
    """In-range root of W V_ij^2 - V_ij - W V_i V_j = 0.

    Written as -2 W P / (1 + sqrt(1 + 4 W^2 P)) with P = V_i V_j, which is
    the usual closed form without its cancellation near W = 0.
    """
    vi = np.asarray(vi, dtype=float)
    vj = np.asarray(vj, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(vi <= 0) or np.any(vj <= 0):
        raise ValueError("variances must be positive")
    P = vi * vj
    out = -2.0 * w * P / (1.0 + np.sqrt(1.0 + 4.0 * w * w * P))
    return float(out) if out.ndim == 0 else out


def ga_free_energy(model: GaussianModel, beliefs: GaussianBeliefs) -> float:
    """Bethe free energy up to constants: energy minus node and edge entropies."""
    mu = np.asarray(beliefs.mu, dtype=float)
    v = np.asarray(beliefs.v, dtype=float)
    ve = np.asarray(beliefs.v_edge, dtype=float)
    ei, ej = model.ei, model.ej
    det = v[ei] * v[ej] - ve ** 2
    if np.any(v <= 0) or np.any(det <= 0):
        raise ValueError("covariance blocks must be positive definite")
    E = (np.dot(model.w, ve + mu[ei] * mu[ej])
         + 0.5 * np.dot(model.diag, v + mu ** 2) + np.dot(model.b, mu))
    S1 = 0.5 * np.dot(1 - model.degree, np.log(v))
    S2 = 0.5 * np.sum(np.log(det))
    return float(E - S1 - S2)


def _edge_blocks(vi, vj, w):
    """(V_ij, V_i V_j - V_ij^2) at the in-range root, both cancellation-free."""
    P = vi * vj
    root = 1.0 + np.sqrt(1.0 + 4.0 * w * w * P)
    return -2.0 * w * P / root, 2.0 * P / root


def _variance_objective(model: GaussianModel, y: np.ndarray):
    """Variance part of the free energy at V = exp(y), and dF/dy."""
    v = np.exp(y)
    ei, ej, w = model.ei, model.ej, model.w
    ve, det = _edge_blocks(v[ei], v[ej], w)
    z = model.degree
    F = (np.dot(w, ve) + 0.5 * np.dot(model.diag, v)
         - 0.5 * np.dot(1 - z, y) - 0.5 * np.sum(np.log(det)))
    if not np.isfinite(F) or F < F_FLOOR or np.max(v, initial=0.0) > V_CAP:
        raise _Diverged
    dv = 0.5 * (model.diag + (z - 1) / v
                - np.bincount(ei, v[ej] / det, minlength=model.n)
                - np.bincount(ej, v[ei] / det, minlength=model.n))
    return float(F), dv * v


def _mean_energy(model: GaussianModel, mu: np.ndarray) -> float:
    return float(np.dot(model.w, mu[model.ei] * mu[model.ej])
                 + 0.5 * np.dot(model.diag, mu ** 2) + np.dot(model.b, mu))


def ga_solve(model: GaussianModel, cfg: SolveConfig = SolveConfig()) -> tuple[GaussianBeliefs, GaussianReport]:
    """Exact means plus variances by quasi-Newton descent on y = log V.

    Edge covariances are re-solved in closed form at every evaluation, so
    their partial derivatives drop out of the gradient. Returns status
    ``diverged`` when the free energy is unbounded below: either W is not
    positive definite (the mean part has no minimum) or the variance descent
    drives F below ``F_FLOOR`` or a variance above ``V_CAP``.
    """
    t0 = time.perf_counter()
    pd = model.is_positive_definite()
    mu = ga_mean_solve(model, cfg) if pd else np.full(model.n, np.nan)
    safe = np.where(model.diag > 0, model.diag, 1.0)
    y0 = np.log(1.0 / safe)
    try:
        res = minimize(lambda y: _variance_objective(model, y), y0, jac=True, method="L-BFGS-B",
                       options={"maxiter": cfg.max_iters, "gtol": 1e-3 * cfg.tol_grad,
                                "ftol": 1e-16, "maxcor": 20})
    except _Diverged:
        nan = np.full(model.n, np.nan)
        return (GaussianBeliefs(nan, nan, np.full(len(model.edges), np.nan)),
                GaussianReport("diverged", cfg.max_iters, -math.inf, math.nan, pd,
                               time.perf_counter() - t0))
    F, grad = _variance_objective(model, res.x)
    gnorm = float(np.linalg.norm(grad))
    v = np.exp(res.x)
    ve, _ = _edge_blocks(v[model.ei], v[model.ej], model.w)
    beliefs = GaussianBeliefs(mu, v, ve)
    if not pd:
        status, F = "diverged", -math.inf
    else:
        status = "converged" if gnorm < cfg.tol_grad * max(model.n, 1) else "max_iters"
        F = F + _mean_energy(model, mu)
    return beliefs, GaussianReport(status, int(res.nit), F, gnorm, pd, time.perf_counter() - t0)


def gabp_solve(model: GaussianModel, cfg: SolveConfig = SolveConfig(),
               cap: float = 1e12) -> tuple[GaussianBeliefs, GaussianReport]:
    """Reference Gaussian belief propagation in information form.

    Scalar precision and potential messages, synchronous with the same damping
    ramp as the binary methods. Converged fixed points share their variances
    with the stationary points of the Gaussian Bethe free energy.
    """
    t0 = time.perf_counter()
    pd = model.is_positive_definite()
    m = len(model.edges)
    src = np.concatenate([model.ei, model.ej])
    dst = np.concatenate([model.ej, model.ei])
    wd = np.concatenate([model.w, model.w])
    rev = np.concatenate([np.arange(m, 2 * m), np.arange(m)])
    h = -model.b
    P = np.zeros(2 * m)
    H = np.zeros(2 * m)
    status = "max_iters"
    it = 0
    with np.errstate(all="ignore"):
        while it < cfg.max_iters:
            it += 1
            Pin = np.bincount(dst, P, minlength=model.n)
            Hin = np.bincount(dst, H, minlength=model.n)
            A = model.diag[src] + Pin[src] - P[rev]
            B = h[src] + Hin[src] - H[rev]
            P_new = -wd * wd / A
            H_new = -wd * B / A
            if not (np.all(np.isfinite(P_new)) and np.all(np.isfinite(H_new))) \
                    or np.max(np.abs(P_new), initial=0) > cap or np.max(np.abs(H_new), initial=0) > cap:
                status = "diverged"
                break
            resid = max(np.max(np.abs(P_new - P), initial=0), np.max(np.abs(H_new - H), initial=0))
            d = cfg.damping(it - 1)
            P = (1 - d) * P_new + d * P
            H = (1 - d) * H_new + d * H
            if resid < cfg.tol_q:
                status = "converged"
                break
        J = model.diag + np.bincount(dst, P, minlength=model.n)
        v = 1.0 / J
        mu = (h + np.bincount(dst, H, minlength=model.n)) * v
        Ai = J[model.ei] - P[np.arange(m, 2 * m)]
        Aj = J[model.ej] - P[np.arange(m)]
        ve = -model.w / (Ai * Aj - model.w ** 2)
    if status == "converged" and (np.any(J <= 0) or not np.all(np.isfinite(v))):
        status = "diverged"
    return GaussianBeliefs(mu, v, ve), GaussianReport(status, it, math.nan, math.nan, pd,
                                                      time.perf_counter() - t0)


PROBE_FIELDS = ("pd", "gabo_status", "gabp_status", "n", "seed")


def ga_boundedness_probe(model: GaussianModel, cfg: SolveConfig = SolveConfig(),
                         seed: int | None = None) -> dict:
    """One row of the convergence-versus-boundedness table for ``model``.

    Records whether W is positive definite and how Gaussian BO and Gaussian
    BP end. No conclusion is drawn from the row.
    """
    _, bo = ga_solve(model, cfg)
    _, bp = gabp_solve(model, cfg)
    return {"pd": model.is_positive_definite(), "gabo_status": bo.status,
            "gabp_status": bp.status, "n": model.n, "seed": seed}


def write_probe_csv(rows, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.DictWriter(fh, fieldnames=PROBE_FIELDS)
        out.writeheader()
        for row in rows:
            out.writerow({k: row[k] for k in PROBE_FIELDS})


def random_gaussian_model(topology: Topology, coupling_scale: float, seed: int,
                          dominant: bool = True, margin: float = 0.1,
                          diag: float = 1.0) -> GaussianModel:
    """Random couplings N(0, coupling_scale^2) and biases N(0, 1).

    With ``dominant`` the diagonal is the absolute row sum plus ``margin``;
    otherwise every diagonal entry equals ``diag``.
    """
    rng = np.random.default_rng(seed)
    w = coupling_scale * rng.standard_normal(len(topology.edges))
    b = rng.standard_normal(topology.n)
    if dominant:
        d = np.full(topology.n, margin)
        for (i, j), wk in zip(topology.edges, w):
            d[i] += abs(wk)
            d[j] += abs(wk)
    else:
        d = np.full(topology.n, diag)
    edges = tuple((i, j, float(wk)) for (i, j), wk in zip(topology.edges, w))
    return GaussianModel(topology.n, edges, d, b)


def gaussian_from_dict(data: dict) -> GaussianModel:
    if not isinstance(data.get("num_nodes"), int) or data["num_nodes"] < 0:
        raise ModelError("num_nodes: expected a non-negative integer")
    n = data["num_nodes"]
    for key in ("diag", "biases"):
        vals = data.get(key)
        if not isinstance(vals, list) or len(vals) != n:
            raise ModelError(f"{key}: expected a list of {n} numbers")
        for k, v in enumerate(vals):
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ModelError(f"{key}[{k}]: must be a finite number")
    edges = _parse_edges(data.get("edges", []), n)
    return GaussianModel(n, tuple(edges), np.array(data["diag"], float), np.array(data["biases"], float))


def gaussian_to_dict(model: GaussianModel) -> dict:
    return {"num_nodes": model.n, "diag": [float(x) for x in model.diag],
            "biases": [float(x) for x in model.b], "edges": [list(e) for e in model.edges]}


def load_gaussian(path: str | Path) -> GaussianModel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    try:
        return gaussian_from_dict(data)
    except ModelError as exc:
        raise ModelError(f"{path}: {exc}") from None
