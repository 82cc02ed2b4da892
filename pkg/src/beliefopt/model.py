"""Binary pairwise Markov random fields over {0, 1} variables.

The joint distribution of a :class:`Model` is

    p(s) ∝ exp( sum_(ij) W_ij s_i s_j + sum_i b_i s_i ),   s_i in {0, 1}.

Random instances are drawn with numpy's ``default_rng`` (PCG64 bit generator),
so a given seed reproduces the same instance on every platform numpy supports.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np


class ModelError(ValueError):
    """Structural problem with a model, topology or model file."""


def _check_edges(n: int, pairs: Iterable[tuple[int, int]], where: str = "edges") -> None:
    seen = set()
    for k, (i, j) in enumerate(pairs):
        if not (0 <= i < n and 0 <= j < n):
            raise ModelError(f"{where}[{k}]: node index out of range for n={n}: ({i}, {j})")
        if i == j:
            raise ModelError(f"{where}[{k}]: self-loop on node {i}")
        if i > j:
            raise ModelError(f"{where}[{k}]: edges must satisfy i < j, got ({i}, {j})")
        if (i, j) in seen:
            raise ModelError(f"{where}[{k}]: duplicate edge ({i}, {j})")
        seen.add((i, j))


@dataclass(frozen=True)
class Topology:
    """Unweighted graph structure. ``kind`` is a free-form tag."""

    n: int
    edges: tuple[tuple[int, int], ...]
    kind: str = "arbitrary"
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        edges = tuple((int(min(i, j)), int(max(i, j))) for i, j in self.edges)
        object.__setattr__(self, "edges", edges)
        _check_edges(self.n, edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg


@dataclass(frozen=True, eq=False)
class Model:
    """Boltzmann machine with symmetric weights on an explicit edge list.

    Parameters
    ----------
    n : int
        Number of nodes.
    edges : sequence of (i, j, w)
        Edge list with ``i < j``. ``w`` is the coupling W_ij.
    biases : sequence of float
        Per-node biases b_i.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]
    biases: np.ndarray
    kind: str = "arbitrary"
    # derived arrays, filled in __post_init__
    ei: np.ndarray = field(init=False, repr=False)
    ej: np.ndarray = field(init=False, repr=False)
    w: np.ndarray = field(init=False, repr=False)
    degree: np.ndarray = field(init=False, repr=False)
    adjacency: tuple[tuple[tuple[int, int], ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 0:
            raise ModelError("node count must be non-negative")
        edges = tuple((int(i), int(j), float(w)) for i, j, w in self.edges)
        _check_edges(n, [(i, j) for i, j, _ in edges])
        b = np.array(self.biases, dtype=float).reshape(-1)
        if b.shape != (n,):
            raise ModelError(f"biases: expected {n} values, got {b.size}")
        if not np.all(np.isfinite(b)):
            raise ModelError("biases must be finite")
        w = np.array([e[2] for e in edges], dtype=float)
        if not np.all(np.isfinite(w)):
            raise ModelError("weights must be finite")
        b.setflags(write=False)
        w.setflags(write=False)
        ei = np.array([e[0] for e in edges], dtype=np.intp)
        ej = np.array([e[1] for e in edges], dtype=np.intp)
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for k, (i, j, _) in enumerate(edges):
            adj[i].append((j, k))
            adj[j].append((i, k))
        deg = np.array([len(a) for a in adj], dtype=int)
        for name, val in [("n", n), ("edges", edges), ("biases", b), ("ei", ei),
                          ("ej", ej), ("w", w), ("degree", deg),
                          ("adjacency", tuple(tuple(a) for a in adj))]:
            object.__setattr__(self, name, val)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> list[int]:
        return [j for j, _ in self.adjacency[i]]

    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(i, j): k for k, (i, j, _) in enumerate(self.edges)}

    def weight_matrix(self) -> np.ndarray:
        W = np.zeros((self.n, self.n))
        W[self.ei, self.ej] = self.w
        W[self.ej, self.ei] = self.w
        return W

    def topology(self) -> Topology:
        return Topology(self.n, tuple((i, j) for i, j, _ in self.edges), self.kind)

    def scaled(self, w_factor: float = 1.0, b_factor: float = 1.0) -> "Model":
        return Model(self.n, [(i, j, w * w_factor) for i, j, w in self.edges],
                     self.biases * b_factor, self.kind)

    def log_potential(self, states: np.ndarray) -> np.ndarray:
        """Unnormalized log-probability of each row of a (k, n) 0/1 array."""
        s = np.asarray(states, dtype=float)
        out = s @ self.biases
        if self.num_edges:
            out = out + (s[:, self.ei] * s[:, self.ej]) @ self.w
        return out

    @classmethod
    def from_arrays(cls, biases, edges, kind="arbitrary") -> "Model":
        biases = np.asarray(biases, dtype=float)
        return cls(len(biases), tuple(edges), biases, kind)


class Conditioned(NamedTuple):
    """Result of clamping observed nodes.

    ``index_map`` maps old node index to new index for unobserved nodes.
    ``log_offset`` is the log-potential contributed by the observed nodes
    alone, so that ``log Z(original | evidence) = log Z(model) + log_offset``.
    """

    model: Model
    index_map: dict[int, int]
    log_offset: float


def condition(model: Model, evidence: Mapping[int, int] | Iterable[tuple[int, int]]) -> Conditioned:
    """Clamp observed nodes and fold their effect into neighbouring biases.

    An observed node j with value v_j adds W_ij v_j to the bias of every
    unobserved neighbour i. Observed nodes and their edges are removed.
    """
    items = evidence.items() if isinstance(evidence, Mapping) else evidence
    obs: dict[int, int] = {}
    for idx, val in items:
        idx = int(idx)
        if not 0 <= idx < model.n:
            raise ModelError(f"evidence: node index {idx} out of range for n={model.n}")
        if val not in (0, 1):
            raise ModelError(f"evidence: node {idx} has value {val!r}, expected 0 or 1")
        if idx in obs and obs[idx] != val:
            raise ModelError(f"evidence: contradictory assignments for node {idx}")
        obs[idx] = int(val)

    keep = [i for i in range(model.n) if i not in obs]
    index_map = {old: new for new, old in enumerate(keep)}
    b = model.biases[keep].copy() if keep else np.zeros(0)
    offset = sum(model.biases[j] * v for j, v in obs.items())
    edges = []
    for i, j, w in model.edges:
        ii, jj = i in obs, j in obs
        if ii and jj:
            offset += w * obs[i] * obs[j]
        elif jj:
            b[index_map[i]] += w * obs[j]
        elif ii:
            b[index_map[j]] += w * obs[i]
        else:
            edges.append((index_map[i], index_map[j], w))
    return Conditioned(Model(len(keep), edges, b, model.kind), index_map, float(offset))


def lattice_square(rows: int, cols: int) -> Topology:
    """Open-boundary 4-neighbour grid; node (r, c) has index r * cols + c."""
    if rows < 1 or cols < 1:
        raise ModelError("lattice dimensions must be >= 1")
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                edges.append((k, k + 1))
            if r + 1 < rows:
                edges.append((k, k + cols))
    return Topology(rows * cols, tuple(edges), "square", (rows, cols))


def lattice_cubic_periodic(side: int) -> Topology:
    """Cubic lattice with periodic boundaries; every node has degree 6."""
    if side < 3:
        raise ModelError("periodic cubic lattice needs side >= 3")

    def idx(x, y, z):
        return (x % side) * side * side + (y % side) * side + (z % side)

    edges = set()
    for x in range(side):
        for y in range(side):
            for z in range(side):
                a = idx(x, y, z)
                for b in (idx(x + 1, y, z), idx(x, y + 1, z), idx(x, y, z + 1)):
                    edges.add((min(a, b), max(a, b)))
    return Topology(side ** 3, tuple(sorted(edges)), "cubic", (side, side, side))


def random_tree(n: int, rng: np.random.Generator) -> Topology:
    """Random recursive tree: node k attaches to a uniform earlier node."""
    edges = tuple((int(rng.integers(k)), k) for k in range(1, n))
    return Topology(n, edges, "tree", (n,))


def supergaussian_scale(exponent: float) -> float:
    """Standard deviation of sign(x)|x|^p for x ~ N(0, 1)."""
    # E|x|^(2p) = 2^p Gamma(p + 1/2) / sqrt(pi)
    return math.sqrt(2.0 ** exponent * math.gamma(exponent + 0.5) / math.sqrt(math.pi))


def sample_instance(topology: Topology, w_scale: float, b_scale: float, seed: int,
                    exponent: float = 1.5) -> Model:
    """Random Boltzmann machine on ``topology``.

    Weights are ``w_scale * sign(x)|x|**exponent / c`` with x standard normal
    and c chosen so the weights have standard deviation ``w_scale``; the
    default exponent 1.5 gives a mildly heavy-tailed distribution. Biases are
    ``N(0, b_scale**2)`` shifted by ``-1/2 sum_j W_ij`` so that, with no
    further evidence, a node of zero raw bias sits at mean 1/2.
    """
    if w_scale < 0 or b_scale < 0:
        raise ModelError("scales must be non-negative")
    rng = np.random.default_rng(seed)
    m = len(topology.edges)
    x = rng.standard_normal(m)
    w = w_scale * np.sign(x) * np.abs(x) ** exponent / supergaussian_scale(exponent)
    b = b_scale * rng.standard_normal(topology.n)
    for (i, j), wij in zip(topology.edges, w):
        b[i] -= 0.5 * wij
        b[j] -= 0.5 * wij
    return Model(topology.n, tuple((i, j, float(wk)) for (i, j), wk in zip(topology.edges, w)),
                 b, topology.kind)


# -- file format -------------------------------------------------------------

def _parse_edges(raw, n, where="edges"):
    if not isinstance(raw, list):
        raise ModelError(f"{where}: expected a list")
    edges = []
    for k, e in enumerate(raw):
        if not (isinstance(e, (list, tuple)) and len(e) == 3):
            raise ModelError(f"{where}[{k}]: expected [i, j, w]")
        i, j, w = e
        if not (isinstance(i, int) and isinstance(j, int)):
            raise ModelError(f"{where}[{k}]: node indices must be integers")
        if not isinstance(w, (int, float)) or not math.isfinite(w):
            raise ModelError(f"{where}[{k}]: weight must be a finite number")
        edges.append((i, j, float(w)))
    _check_edges(n, [(i, j) for i, j, _ in edges], where)
    return edges


def _parse_evidence(raw, n) -> dict[int, int]:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ModelError("evidence: expected an object mapping node index to 0/1")
    out = {}
    for key, val in raw.items():
        try:
            idx = int(key)
        except (TypeError, ValueError):
            raise ModelError(f"evidence[{key!r}]: key is not an integer") from None
        if not 0 <= idx < n:
            raise ModelError(f"evidence[{key!r}]: node index out of range for n={n}")
        if val not in (0, 1):
            raise ModelError(f"evidence[{key!r}]: value must be 0 or 1")
        out[idx] = int(val)
    return out


def model_from_dict(data: Mapping) -> tuple[Model, dict[int, int]]:
    """Parse the JSON model format; returns the model and its evidence."""
    if "num_nodes" not in data:
        raise ModelError("num_nodes: missing field")
    n = data["num_nodes"]
    if not isinstance(n, int) or n < 0:
        raise ModelError("num_nodes: expected a non-negative integer")
    biases = data.get("biases", [0.0] * n)
    if not isinstance(biases, list) or len(biases) != n:
        raise ModelError(f"biases: expected a list of {n} numbers")
    for k, v in enumerate(biases):
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ModelError(f"biases[{k}]: must be a finite number")
    edges = _parse_edges(data.get("edges", []), n)
    evidence = _parse_evidence(data.get("evidence"), n)
    return Model(n, edges, np.array(biases, dtype=float)), evidence


def model_to_dict(model: Model, evidence: Mapping[int, int] | None = None) -> dict:
    out = {
        "num_nodes": model.n,
        "biases": [float(v) for v in model.biases],
        "edges": [[i, j, w] for i, j, w in model.edges],
    }
    if evidence:
        out["evidence"] = {str(k): int(v) for k, v in evidence.items()}
    return out


def load_model(path: str | Path) -> tuple[Model, dict[int, int]]:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ModelError(f"{path}: top level must be an object")
    try:
        return model_from_dict(data)
    except ModelError as exc:
        raise ModelError(f"{path}: {exc}") from None


def save_model(model: Model, path: str | Path, evidence: Mapping[int, int] | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, evidence), indent=1))

