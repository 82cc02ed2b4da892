"""Ground truth for small and lattice-like models.

``brute_force`` enumerates every state, ``eliminate`` sums variables out one
at a time, and ``exact_marginals_via_elimination`` obtains marginals as ratios
of clamped partition functions. ``gibbs`` is a Monte Carlo comparator only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import Model, condition

MAX_BRUTE_NODES = 20
WIDTH_CAP = 14


class WidthExceeded(ValueError):
    pass


@dataclass
class ExactResult:
    q: np.ndarray
    xi: np.ndarray
    log_z: float = float("nan")
    # Monte Carlo standard errors; None for exact results
    q_stderr: np.ndarray | None = None
    xi_stderr: np.ndarray | None = None

    def covariances(self, model: Model) -> np.ndarray:
        return self.xi - self.q[model.ei] * self.q[model.ej]


def brute_force(model: Model, chunk: int = 1 << 14) -> ExactResult:
    """Enumerate all 2^n states with a streaming log-sum-exp accumulator."""
    n = model.n
    if n > MAX_BRUTE_NODES:
        raise ValueError(f"brute_force refuses n={n} > {MAX_BRUTE_NODES}")
    shift = np.arange(n)
    m = -np.inf
    total = 0.0
    sq = np.zeros(n)
    sxi = np.zeros(model.num_edges)
    for start in range(0, 1 << n, chunk):
        idx = np.arange(start, min(start + chunk, 1 << n))
        s = ((idx[:, None] >> shift) & 1).astype(float)
        lp = model.log_potential(s)
        cm = lp.max()
        if cm > m:
            scale = np.exp(m - cm) if np.isfinite(m) else 0.0
            total, sq, sxi, m = total * scale, sq * scale, sxi * scale, cm
        p = np.exp(lp - m)
        total += p.sum()
        sq += p @ s
        if model.num_edges:
            sxi += p @ (s[:, model.ei] * s[:, model.ej])
    return ExactResult(sq / total, sxi / total, float(m + np.log(total)))


# -- variable elimination ----------------------------------------------------

def _interaction_graph(model: Model) -> list[set[int]]:
    return [set(model.neighbors(i)) for i in range(model.n)]


def induced_width(model: Model, order) -> int:
    """Largest neighbour set met while eliminating along ``order``."""
    adj = _interaction_graph(model)
    width = 0
    for v in order:
        nb = adj[v]
        width = max(width, len(nb))
        for a in nb:
            adj[a].discard(v)
            adj[a].update(nb - {a})
        adj[v] = set()
    return width


def min_fill_order(model: Model) -> list[int]:
    """Greedy min-fill ordering, ties broken by degree then index."""
    adj = _interaction_graph(model)
    remaining = set(range(model.n))
    order = []
    while remaining:
        def cost(v):
            nb = list(adj[v])
            fill = sum(1 for x in range(len(nb)) for y in range(x + 1, len(nb))
                       if nb[y] not in adj[nb[x]])
            return fill, len(nb), v
        v = min(remaining, key=cost)
        nb = adj[v]
        for a in nb:
            adj[a].discard(v)
            adj[a].update(nb - {a})
        adj[v] = set()
        remaining.discard(v)
        order.append(v)
    return order


def default_order(model: Model) -> list[int]:
    """Natural index order (row/column sweep on lattices) or min-fill, whichever is narrower."""
    natural = list(range(model.n))
    if model.n > 400:
        return natural
    greedy = min_fill_order(model)
    return natural if induced_width(model, natural) <= induced_width(model, greedy) else greedy


def _initial_factors(model: Model):
    factors = []
    for i in range(model.n):
        b = model.biases[i]
        top = max(b, 0.0)
        factors.append(((i,), np.exp(np.array([0.0, b]) - top), top))
    for i, j, w in model.edges:
        top = max(w, 0.0)
        factors.append(((i, j), np.exp(np.array([[0.0, 0.0], [0.0, w]]) - top), top))
    return factors


def eliminate(model: Model, order=None, width_cap: int = WIDTH_CAP) -> float:
    """Exact log partition function by summing out nodes along ``order``.

    Factor tables are kept in linear space, each rescaled to a maximum of one
    with the log scale carried alongside.
    """
    order = default_order(model) if order is None else list(order)
    if sorted(order) != list(range(model.n)):
        raise ValueError("order must be a permutation of the node indices")
    width = induced_width(model, order)
    if width > width_cap:
        raise WidthExceeded(f"induced width {width} exceeds cap {width_cap}")

    factors = dict(enumerate(_initial_factors(model)))
    by_var: list[set[int]] = [set() for _ in range(model.n)]
    for fid, (scope, _, _) in factors.items():
        for v in scope:
            by_var[v].add(fid)
    next_id = len(factors)
    log_z = 0.0
    for v in order:
        fids = by_var[v]
        by_var[v] = set()
        group = [factors.pop(f) for f in fids]
        for scope, _, _ in group:
            for u in scope:
                if u != v:
                    by_var[u] -= fids
        union = sorted(set().union(*(s for s, _, _ in group)))
        table = np.ones((2,) * len(union))
        scale = 0.0
        for scope, t, sc in group:
            shape = [2 if u in scope else 1 for u in union]
            table = table * t.reshape(shape)
            scale += sc
        table = table.sum(axis=union.index(v))
        top = table.max()
        table = table / top
        scale += np.log(top)
        rest = tuple(u for u in union if u != v)
        if rest:
            factors[next_id] = (rest, table, scale)
            for u in rest:
                by_var[u].add(next_id)
            next_id += 1
        else:
            log_z += scale + np.log(float(table))
    for scope, t, sc in factors.values():
        log_z += sc + np.log(float(t))
    return float(log_z)


def exact_marginals_via_elimination(model: Model, order=None,
                                    width_cap: int = WIDTH_CAP) -> ExactResult:
    """Marginals from clamped partition functions.

    q_i = exp(log Z[s_i = 1] - log Z) and xi_ij = exp(log Z[s_i = s_j = 1] - log Z),
    each clamped model being built with :func:`condition`.
    """
    order = default_order(model) if order is None else list(order)
    log_z = eliminate(model, order, width_cap)

    def clamped(evidence):
        cond = condition(model, evidence)
        sub = [cond.index_map[v] for v in order if v in cond.index_map]
        return eliminate(cond.model, sub, width_cap) + cond.log_offset

    q = np.array([np.exp(clamped({i: 1}) - log_z) for i in range(model.n)])
    xi = np.array([np.exp(clamped({i: 1, j: 1}) - log_z) for i, j, _ in model.edges])
    return ExactResult(q, xi, log_z)


# -- Gibbs sampling ----------------------------------------------------------

@dataclass(frozen=True)
class GibbsConfig:
    """Annealed Gibbs sampling settings.

    The temperature falls linearly from ``anneal_from`` to 1 over the first
    ``anneal_steps`` burn-in sweeps (all of them when None).
    """

    n_samples: int = 10000
    burn_in: int = 1000
    anneal_from: float = 4.0
    anneal_steps: int | None = None
    seed: int = 0
    n_batches: int = 50

    def __post_init__(self):
        if self.n_samples < 1 or self.burn_in < 0:
            raise ValueError("sample counts must be positive")
        if self.n_batches < 1:
            raise ValueError("n_batches must be positive")
        if self.anneal_from < 1:
            raise ValueError("anneal_from must be >= 1")


def greedy_coloring(model: Model) -> list[np.ndarray]:
    """Partition nodes into independent sets (no edge inside a class)."""
    color = np.full(model.n, -1)
    for v in range(model.n):
        used = {color[u] for u in model.neighbors(v)}
        c = 0
        while c in used:
            c += 1
        color[v] = c
    return [np.flatnonzero(color == c) for c in range(color.max() + 1)] if model.n else []


def gibbs(model: Model, cfg: GibbsConfig = GibbsConfig()) -> ExactResult:
    """Single-site Gibbs sampling, updating one colour class at a time.

    Nodes in a colour class are conditionally independent given the rest, so
    a blocked update of the class is an exact single-site sweep.
    """
    rng = np.random.default_rng(cfg.seed)
    W = model.weight_matrix()
    classes = greedy_coloring(model)
    s = rng.integers(0, 2, model.n).astype(float)
    steps = cfg.burn_in if cfg.anneal_steps is None else min(cfg.anneal_steps, cfg.burn_in)

    def sweep(T):
        for cls in classes:
            field = model.biases[cls] + W[cls] @ s
            s[cls] = rng.random(len(cls)) < expit(field / T)

    for t in range(cfg.burn_in):
        T = cfg.anneal_from + (1.0 - cfg.anneal_from) * min(1.0, (t + 1) / steps) if steps else 1.0
        sweep(T)
    # batch means give standard errors that account for autocorrelation
    n_batches = min(cfg.n_batches, cfg.n_samples)
    edges = np.linspace(0, cfg.n_samples, n_batches + 1).astype(int)
    bq = np.zeros((n_batches, model.n))
    bxi = np.zeros((n_batches, model.num_edges))
    for k in range(n_batches):
        for _ in range(edges[k], edges[k + 1]):
            sweep(1.0)
            bq[k] += s
            bxi[k] += s[model.ei] * s[model.ej]
    sizes = np.diff(edges)[:, None]
    q = bq.sum(axis=0) / cfg.n_samples
    xi = bxi.sum(axis=0) / cfg.n_samples
    if n_batches > 1:
        q_se = np.std(bq / sizes, axis=0, ddof=1) / np.sqrt(n_batches)
        xi_se = np.std(bxi / sizes, axis=0, ddof=1) / np.sqrt(n_batches)
    else:
        q_se = np.full(model.n, np.nan)
        xi_se = np.full(model.num_edges, np.nan)
    return ExactResult(q, xi, float("nan"), q_se, xi_se)
