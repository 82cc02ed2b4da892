"""Command line entry point.

    beliefopt infer --model m.json --method bo-grad [--config c.json] [--trace t.csv]
    beliefopt exact --model m.json --oracle elim
    beliefopt sweep --spec s.json --out results.csv
    beliefopt gaussian solve --model g.json
    beliefopt gaussian probe --model g.json [--out probe.csv]

Non-convergence is reported in the output and still exits 0; malformed input
exits 2.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bethe import Beliefs
from .exact import GibbsConfig, WidthExceeded, brute_force, exact_marginals_via_elimination, gibbs
from .gaussian import ga_boundedness_probe, ga_solve, load_gaussian, write_probe_csv, PROBE_FIELDS
from .harness import PRESETS, SOLVERS, SweepSpec, load_spec, sweep
from .model import Model, ModelError, condition, load_model
from .solver import SolveConfig, write_trace


def _config(args) -> SolveConfig:
    cfg = SolveConfig()
    if getattr(args, "config", None):
        cfg = SolveConfig.from_dict(json.loads(Path(args.config).read_text()))
    return _override(cfg, args)


def _override(cfg: SolveConfig, args) -> SolveConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.max_iters is not None:
        changes["max_iters"] = args.max_iters
    if args.tol is not None:
        changes["tol_q"] = args.tol
    return replace(cfg, **changes)


def _expand(model: Model, cond, evidence, q_sub, xi_sub) -> tuple[np.ndarray, np.ndarray]:
    """Lift beliefs of the conditioned model back onto every node and edge."""
    q = np.empty(model.n)
    for i in range(model.n):
        q[i] = evidence[i] if i in evidence else q_sub[cond.index_map[i]]
    sub_edges = cond.model.edge_index()
    xi = np.empty(model.num_edges)
    for k, (i, j, _) in enumerate(model.edges):
        if i in evidence or j in evidence:
            xi[k] = q[i] * q[j]
        else:
            xi[k] = xi_sub[sub_edges[(cond.index_map[i], cond.index_map[j])]]
    return q, xi


def _dump(obj) -> None:
    print(json.dumps(obj, indent=1, default=float))


def cmd_infer(args) -> int:
    model, evidence = load_model(args.model)
    cfg = _config(args)
    cond = condition(model, evidence)
    beliefs, report = SOLVERS[args.method](cond.model, cfg)
    q, xi = _expand(model, cond, evidence, beliefs.q, beliefs.xi)
    if args.trace:
        write_trace(report, args.trace)
    summary = report.summary()
    summary["final_free_energy"] = report.final_free_energy - cond.log_offset
    _dump({"q": q.tolist(), "xi": xi.tolist(), "free_energy": summary["final_free_energy"],
           "report": summary})
    return 0


def cmd_exact(args) -> int:
    model, evidence = load_model(args.model)
    cond = condition(model, evidence)
    if args.oracle == "brute":
        res = brute_force(cond.model)
    elif args.oracle == "elim":
        res = exact_marginals_via_elimination(cond.model)
    else:
        res = gibbs(cond.model, GibbsConfig(n_samples=args.samples, seed=args.seed or 0))
    q, xi = _expand(model, cond, evidence, res.q, res.xi)
    log_z = res.log_z + cond.log_offset
    _dump({"oracle": args.oracle, "q": q.tolist(), "xi": xi.tolist(),
           "log_z": None if np.isnan(log_z) else log_z})
    return 0


def cmd_sweep(args) -> int:
    if args.spec:
        spec = load_spec(args.spec)
    else:
        spec = PRESETS[args.preset]
    changes = {"config": _override(spec.config, args)}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    spec = replace(spec, **changes)
    rows = sweep(spec, args.out)
    n_conv = sum(r.converged for r in rows)
    print(f"{len(rows)} rows written to {args.out} ({n_conv} converged)")
    return 0


def cmd_gaussian(args) -> int:
    cfg = _config(args)
    if args.tol is not None:
        # the variance descent stops on its gradient, GaBP on its change
        cfg = replace(cfg, tol_grad=args.tol)
    if args.action == "solve":
        model = load_gaussian(args.model[0])
        beliefs, report = ga_solve(model, cfg)
        _dump({"mu": beliefs.mu.tolist(), "v": beliefs.v.tolist(),
               "v_edge": beliefs.v_edge.tolist(), "report": vars(report)})
        return 0
    rows = [ga_boundedness_probe(load_gaussian(p), cfg, cfg.seed) for p in args.model]
    if args.out:
        write_probe_csv(rows, args.out)
    else:
        print(",".join(PROBE_FIELDS))
        for r in rows:
            print(",".join(str(r[k]) for k in PROBE_FIELDS))
    return 0


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float, help="convergence threshold on max |dq| (gaussian: also the gradient threshold)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beliefopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="approximate marginals for one model")
    p.add_argument("--model", required=True)
    p.add_argument("--method", required=True, choices=sorted(SOLVERS))
    p.add_argument("--config")
    p.add_argument("--trace")
    _common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("exact", help="exact (or sampled) marginals")
    p.add_argument("--model", required=True)
    p.add_argument("--oracle", choices=("brute", "elim", "gibbs"), default="elim")
    p.add_argument("--samples", type=int, default=10000)
    _common(p)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("sweep", help="error sweep over weight and bias scales")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec")
    src.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gaussian", help="Gaussian belief optimization")
    p.add_argument("action", choices=("solve", "probe"))
    p.add_argument("--model", required=True, action="append")
    p.add_argument("--config")
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_gaussian)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, WidthExceeded, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
