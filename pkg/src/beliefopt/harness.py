"""Experiment driver: run inference methods over random instances and score them.

A sweep walks a grid of (w_scale, b_scale) cells, samples instances on a fixed
topology, runs every requested method and an exact oracle on each instance,
and streams one long-format CSV row per (cell, instance, method).
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .baselines import bp_solve, mf_solve, tap_solve
from .bethe import Beliefs
from .exact import (MAX_BRUTE_NODES, WIDTH_CAP, ExactResult, GibbsConfig, brute_force,
                    default_order, exact_marginals_via_elimination, gibbs, induced_width)
from .model import (Model, Topology, lattice_cubic_periodic, lattice_square, random_tree,
                    sample_instance)
from .solver import SolveConfig, SolveReport, coordinate_descent, solve_fixed_point, solve_gradient

SCHEMA_ID = "beliefopt-sweep/1"
FIELDS = ("w_scale", "b_scale", "instance", "seed", "method", "mean_err", "cov_err",
          "converged", "free_energy", "iterations")
TIMING_FIELDS = ("w_scale", "b_scale", "instance", "method", "wall_time")
SCATTER_FIELDS = ("kind", "instance", "index", "bp", "bo", "bp_converged")

SOLVERS = {
    "mf": mf_solve,
    "tap": tap_solve,
    "bp": bp_solve,
    "bo-grad": solve_gradient,
    "bo-fp": solve_fixed_point,
    "bo-cd": coordinate_descent,
}
SWEEP_METHODS = ("mf", "tap", "bp", "bo-grad", "bo-fp")
BASE_METHODS = ("mf", "tap", "bp", "bo-grad")
ORACLES = ("elimination", "brute", "gibbs")

# 0.1, 0.6, ..., 9.6
GRID_SCALES = tuple(round(0.1 + 0.5 * k, 10) for k in range(20))


class MethodRun(NamedTuple):
    beliefs: Beliefs | None
    report: SolveReport
    error: str | None = None


def run_methods(model: Model, methods, cfg: SolveConfig = SolveConfig()) -> dict[str, MethodRun]:
    """Run each method with the same config; a crash is recorded, not raised."""
    out = {}
    for name in methods:
        if name not in SOLVERS:
            raise ValueError(f"unknown method {name!r}")
        t0 = time.perf_counter()
        try:
            beliefs, report = SOLVERS[name](model, cfg)
            out[name] = MethodRun(beliefs, report)
        except (FloatingPointError, ArithmeticError, ValueError) as exc:
            report = SolveReport(name, False, cfg.max_iters, math.nan, math.nan,
                                 time.perf_counter() - t0)
            out[name] = MethodRun(None, report, f"{type(exc).__name__}: {exc}")
    return out


def error_metrics(estimate: Beliefs, oracle: ExactResult, model: Model) -> tuple[float, float]:
    """Mean absolute error of the node means and of the edge covariances."""
    q_hat = np.asarray(estimate.q, dtype=float)
    if q_hat.shape != oracle.q.shape or np.shape(estimate.xi) != oracle.xi.shape:
        raise ValueError("estimate and oracle shapes differ")
    if q_hat.shape != (model.n,) or oracle.xi.shape != (model.num_edges,):
        raise ValueError("beliefs do not match the model")
    mean_err = float(np.mean(np.abs(q_hat - oracle.q))) if model.n else 0.0
    if not model.num_edges:
        return mean_err, 0.0
    ei, ej = model.ei, model.ej
    cov_hat = np.asarray(estimate.xi) - q_hat[ei] * q_hat[ej]
    cov = oracle.xi - oracle.q[ei] * oracle.q[ej]
    return mean_err, float(np.mean(np.abs(cov_hat - cov)))


# -- sweep specification -----------------------------------------------------

def build_topology(kind: str, dims) -> Topology:
    dims = tuple(int(d) for d in dims)
    if kind == "square":
        return lattice_square(*dims)
    if kind == "cubic":
        return lattice_cubic_periodic(*dims)
    if kind == "tree":
        # fixed shape; instances differ only in their parameters
        return random_tree(dims[0], np.random.default_rng(dims[1] if len(dims) > 1 else 0))
    raise ValueError(f"unknown topology kind {kind!r}")


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    dims: tuple
    w_scales: tuple
    b_scales: tuple
    methods: tuple = BASE_METHODS
    oracle: str = "elimination"
    instances_per_cell: int = 1
    config: SolveConfig = field(default_factory=SolveConfig)
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    seed: int = 0
    workers: int = 1
    store_beliefs: bool = False

    def __post_init__(self):
        for name in ("dims", "w_scales", "b_scales", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.w_scales or not self.b_scales:
            raise ValueError("scale lists must be non-empty")
        if not self.methods:
            raise ValueError("at least one method is required")
        bad = set(self.methods) - set(SWEEP_METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {SWEEP_METHODS}")
        if self.oracle not in ORACLES:
            raise ValueError(f"oracle must be one of {ORACLES}")
        if any(s < 0 for s in self.w_scales + self.b_scales):
            raise ValueError("scales must be non-negative")
        if self.instances_per_cell < 1:
            raise ValueError("instances_per_cell must be >= 1")

    def topology(self) -> Topology:
        return build_topology(self.kind, self.dims)

    def cells(self):
        return [(w, b) for w in self.w_scales for b in self.b_scales]

    def check_oracle(self) -> None:
        """Refuse oracles that cannot handle the topology before any work is done."""
        topo = self.topology()
        if self.oracle == "brute" and topo.n > MAX_BRUTE_NODES:
            raise ValueError(f"brute-force oracle refuses n={topo.n} > {MAX_BRUTE_NODES}")
        if self.oracle == "elimination":
            probe = Model(topo.n, tuple((i, j, 1.0) for i, j in topo.edges), np.zeros(topo.n))
            width = induced_width(probe, default_order(probe))
            if width > WIDTH_CAP:
                raise ValueError(f"elimination oracle: induced width {width} exceeds cap {WIDTH_CAP}")

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown sweep spec keys: {sorted(unknown)}")
        if "config" in data:
            data["config"] = SolveConfig.from_dict(data["config"])
        if "gibbs" in data:
            data["gibbs"] = GibbsConfig(**data["gibbs"])
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("dims", "w_scales", "b_scales", "methods"):
            d[k] = list(d[k])
        return d


def load_spec(path: str | Path) -> SweepSpec:
    data = json.loads(Path(path).read_text())
    if "preset" in data:
        overrides = {k: v for k, v in data.items() if k != "preset"}
        base = PRESETS[data["preset"]].to_dict()
        base.update(overrides)
        data = base
    return SweepSpec.from_dict(data)


PRESETS = {
    "grid10": SweepSpec("square", (10, 10), GRID_SCALES, GRID_SCALES),
    "cubic5": SweepSpec("cubic", (5,), (0.1, 1.0, 10.0), (0.1, 1.0, 10.0), oracle="gibbs"),
    "desk": SweepSpec("square", (6, 6), GRID_SCALES, GRID_SCALES),
    "smoke": SweepSpec("square", (6, 6), (0.1, 1.0), (0.1, 1.0)),
}


# -- running ----------------------------------------------------------------

def instance_seed(seed: int, cell_index: int, instance: int) -> int:
    """Per-instance seed from the sweep seed and the cell position."""
    ss = np.random.SeedSequence(seed, spawn_key=(cell_index, instance))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class CellResult:
    w_scale: float
    b_scale: float
    instance: int
    seed: int
    method: str
    mean_err: float
    cov_err: float
    converged: bool
    free_energy: float
    iterations: int

    def row(self) -> list[str]:
        # repr round-trips floats exactly, which keeps reruns byte-identical
        return [repr(v) if isinstance(v, float) else str(v) for v in (getattr(self, f) for f in FIELDS)]


def run_oracle(model: Model, oracle: str, gibbs_cfg: GibbsConfig = GibbsConfig()) -> ExactResult:
    if oracle == "brute":
        return brute_force(model)
    if oracle == "elimination":
        return exact_marginals_via_elimination(model)
    if oracle == "gibbs":
        return gibbs(model, gibbs_cfg)
    raise ValueError(f"unknown oracle {oracle!r}")


def _run_instance(args):
    spec, topo, cell_index, w_scale, b_scale, instance = args
    seed = instance_seed(spec.seed, cell_index, instance)
    model = sample_instance(topo, w_scale, b_scale, seed)
    oracle = run_oracle(model, spec.oracle, spec.gibbs)
    runs = run_methods(model, spec.methods, spec.config)
    cells, timings, stored = [], [], {}
    for name, run in runs.items():
        if run.beliefs is None:
            errs = (math.nan, math.nan)
        else:
            errs = error_metrics(run.beliefs, oracle, model)
            stored[name] = {"q": run.beliefs.q.tolist(), "xi": run.beliefs.xi.tolist()}
        rep = run.report
        cells.append(CellResult(float(w_scale), float(b_scale), instance, seed, name, *errs,
                                bool(rep.converged), float(rep.final_free_energy), int(rep.iterations)))
        timings.append((w_scale, b_scale, instance, name, rep.wall_time))
    payload = {"w_scale": w_scale, "b_scale": b_scale, "instance": instance, "seed": seed,
               "oracle": {"q": oracle.q.tolist(), "xi": oracle.xi.tolist()}, "methods": stored}
    return cells, timings, payload


def sweep(spec: SweepSpec, out: str | Path) -> list[CellResult]:
    """Run the sweep, streaming rows to ``out``; wall times go to ``<out>.timing.csv``.

    Rows are written in cell order as each instance finishes, so a crash
    leaves a valid prefix. Results do not depend on ``spec.workers``.
    """
    spec.check_oracle()
    topo = spec.topology()
    out = Path(out)
    jobs = [(spec, topo, c, w, b, k)
            for c, (w, b) in enumerate(spec.cells())
            for k in range(spec.instances_per_cell)]
    results = []
    timing_path = out.with_name(out.name + ".timing.csv")
    beliefs_path = out.with_name(out.name + ".beliefs.jsonl")
    with open(out, "w", newline="") as fh, open(timing_path, "w", newline="") as th:
        bh = open(beliefs_path, "w") if spec.store_beliefs else None
        try:
            fh.write(f"# schema={SCHEMA_ID}\n")
            rows = csv.writer(fh, lineterminator="\n")
            rows.writerow(FIELDS)
            tw = csv.writer(th, lineterminator="\n")
            tw.writerow(TIMING_FIELDS)
            if spec.workers > 1:
                pool = ProcessPoolExecutor(spec.workers)
                stream = pool.map(_run_instance, jobs)
            else:
                pool = None
                stream = map(_run_instance, jobs)
            try:
                for cells, timings, payload in stream:
                    for cell in cells:
                        rows.writerow(cell.row())
                    tw.writerows(timings)
                    if bh is not None:
                        bh.write(json.dumps(payload) + "\n")
                    fh.flush()
                    results.extend(cells)
            finally:
                if pool is not None:
                    pool.shutdown()
        finally:
            if bh is not None:
                bh.close()
    return results


def read_sweep(path: str | Path) -> list[CellResult]:
    """Parse a sweep CSV back into CellResult rows; checks the schema line."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# schema={SCHEMA_ID}":
            raise ValueError(f"{path}: unexpected schema line {first!r}")
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for r in reader:
            out.append(CellResult(float(r["w_scale"]), float(r["b_scale"]), int(r["instance"]),
                                  int(r["seed"]), r["method"], float(r["mean_err"]),
                                  float(r["cov_err"]), r["converged"] == "True",
                                  float(r["free_energy"]), int(r["iterations"])))
    return out


# -- scatter output -----------------------------------------------------------

class ScatterRun(NamedTuple):
    model: Model
    bp: MethodRun
    bo: MethodRun


def scatter_runs(topology: Topology, w_scale: float, b_scale: float, seeds,
                 cfg: SolveConfig = SolveConfig()) -> list[ScatterRun]:
    """BP and gradient BO on the same instances, converged or not."""
    runs = []
    for s in seeds:
        model = sample_instance(topology, w_scale, b_scale, s)
        r = run_methods(model, ("bp", "bo-grad"), cfg)
        runs.append(ScatterRun(model, r["bp"], r["bo-grad"]))
    return runs


def scatter_dump(runs, path: str | Path) -> int:
    """Per-node means, per-edge covariances and per-instance free energies of BP vs BO.

    Writes n + |E| + 1 rows per instance and returns the row count.
    """
    count = 0
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(SCATTER_FIELDS)
        for k, (model, bp, bo) in enumerate(runs):
            if bp.beliefs is None or bo.beliefs is None:
                raise ValueError(f"instance {k}: a method produced no beliefs")
            for b in (bp.beliefs, bo.beliefs):
                if b.q.shape != (model.n,) or b.xi.shape != (model.num_edges,):
                    raise ValueError(f"instance {k}: beliefs do not match the model")
            conv = bool(bp.report.converged)
            for i in range(model.n):
                out.writerow(("node", k, i, repr(float(bp.beliefs.q[i])), repr(float(bo.beliefs.q[i])), conv))
            cov_bp = bp.beliefs.covariances(model)
            cov_bo = bo.beliefs.covariances(model)
            for e in range(model.num_edges):
                out.writerow(("edge", k, e, repr(float(cov_bp[e])), repr(float(cov_bo[e])), conv))
            out.writerow(("energy", k, -1, repr(float(bp.report.final_free_energy)),
                          repr(float(bo.report.final_free_energy)), conv))
            count += model.n + model.num_edges + 1
    return count
