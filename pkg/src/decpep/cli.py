"""Command line front end: ``decpep <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from decpep.algorithms import PepResult, beta_grid
from decpep.experiments import (ExperimentConfig, build_point, records_csv, records_json, run,
                                run_point, theoretical_dgd_bound, write_records)
from decpep.solver import Solution, SolveOptions


def _globals(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="JSON experiment config")
    parser.add_argument("--out", default=d(None), help="output directory")
    parser.add_argument("--solver", default=d(None), help="embedded or external:<command>")
    parser.add_argument("--tol", type=float, default=d(None), help="solver tolerance")
    parser.add_argument("--seed", type=int, default=d(None))
    parser.add_argument("--format", choices=("csv", "json"), default=d(None))


def _point_args(p: argparse.ArgumentParser, algo_default: str = "dgd") -> None:
    p.add_argument("--algo", choices=("dgd", "diging", "accdngd"), default=None,
                   help=f"algorithm (default {algo_default})")
    p.add_argument("--N", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--D", type=float)
    p.add_argument("--R", type=float)
    p.add_argument("--E", type=float)
    p.add_argument("--formulation", choices=("spectral", "exact-w1"))
    p.add_argument("--spectral-mode", choices=("auto", "full", "symmetric-range"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="decpep", description="Worst-case bounds for decentralized methods.")
    _globals(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _globals(p, suppress=True)
        return p

    p = cmd("analyze", "solve one point")
    _point_args(p)
    p.add_argument("--recover", action="store_true", help="recover the worst matrix")
    p.add_argument("--save", help="write the solution to this JSON file")

    cmd("sweep", "run the sweep described by --config")

    p = cmd("rate", "DIGing contraction factor over a weight grid")
    _point_args(p, "diging")
    p.add_argument("--beta-c", type=float, action="append", help="weight(s); default alpha/L")
    p.add_argument("--grid", action="store_true", help="log grid of weights around alpha/L")

    p = cmd("recover", "worst-case instance from a saved solution")
    p.add_argument("solution", help="file written by analyze --save")

    p = cmd("simulate", "Monte-Carlo lower bound")
    _point_args(p)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--dim", type=int, default=2)

    p = cmd("export-sdp", "write the SDP in SDPA sparse format")
    _point_args(p)
    p.add_argument("--output", help="target file (default <out>/problem.dat-s)")

    p = cmd("theory", "baseline DGD bound")
    p.add_argument("--D", type=float, default=1.0)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--h", type=float, default=1.0)
    return ap


_AXIS_FLAGS = {"N": "N", "K": "K", "lam": "lam", "h": "h", "alpha": "alpha", "eta": "eta", "beta": "beta"}
_SCALAR_FLAGS = {"mu": "mu", "L": "L", "D": "D", "R": "R", "E": "E", "formulation": "formulation",
                 "spectral_mode": "spectral_mode"}


def _config(args, algo_default: str = "dgd", mode: str = "worst-case") -> ExperimentConfig:
    """Config from --config (if any) with command line values layered on top."""
    raw = json.loads(Path(args.config).read_text()) if getattr(args, "config", None) else {}
    if getattr(args, "algo", None):
        raw["algorithm"] = args.algo
    raw.setdefault("algorithm", algo_default)
    raw["mode"] = mode
    for flag, key in _AXIS_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            raw[key] = [v]
    for flag, key in _SCALAR_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            raw[key] = v
    if args.tol is not None:
        raw["tol"] = args.tol
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.solver is not None:
        raw["solver"] = args.solver
    if args.out is not None:
        raw["out"] = args.out
    if args.format is not None:
        raw["format"] = args.format
    return ExperimentConfig.from_json(json.dumps(raw))


def _first_point(cfg: ExperimentConfig) -> dict:
    return cfg.points()[0]


def _opts(cfg: ExperimentConfig) -> SolveOptions:
    return SolveOptions(feas_tol=cfg.tol, rel_gap=cfg.tol, engine=cfg.engine)


def _emit(records, cfg: ExperimentConfig) -> None:
    if cfg.out:
        path = write_records(records, cfg.out, cfg)
        print(f"wrote {path}")
    else:
        sys.stdout.write(records_json(records) + "\n" if cfg.format == "json" else records_csv(records))


def cmd_analyze(args) -> int:
    cfg = _config(args)
    pt = _first_point(cfg)
    built, _ = build_point(cfg, pt)
    res = built.solve(_opts(cfg), cfg.solver)
    print(f"problem: {built.problem.name}")
    print(f"status: {res.status}")
    print(f"objective: {res.objective:.10g}")
    if cfg.algorithm == "dgd":
        p = built.params
        if 0 <= pt["lam"] < 1:
            print(f"theory: {theoretical_dgd_bound(p.D, p.R, p.K, pt['lam'], p.h):.4g}")
    print(f"solve time: {res.solution.solve_time:.2f}s")
    if args.save:
        _save(args.save, cfg, pt, res)
        print(f"saved {args.save}")
    if args.recover and built.groups:
        from decpep.recovery import worst_case_instance

        wc = worst_case_instance(res)
        for g in wc.groups:
            print(f"group {g.name}: method={g.method} remainder={g.remainder:.3g} member={g.member}")
            print(np.array2string(g.W, precision=6, suppress_small=True))
        if cfg.out:
            Path(cfg.out).mkdir(parents=True, exist_ok=True)
            (Path(cfg.out) / "worst_case.json").write_text(wc.to_json() + "\n")
    return 0 if res.status == "optimal" else 1


def _save(path, cfg, pt, res: PepResult) -> None:
    sol = res.solution
    doc = {
        "config": json.loads(cfg.to_json()),
        "point": pt,
        "status": sol.status,
        "objective": sol.objective,
        "blocks": [np.asarray(B).tolist() for B in sol.blocks],
        "free": np.asarray(sol.free).tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def cmd_recover(args) -> int:
    from decpep.recovery import worst_case_instance

    doc = json.loads(Path(args.solution).read_text())
    cfg = ExperimentConfig.from_json(json.dumps(doc["config"]))
    built, _ = build_point(cfg, doc["point"])
    sdp = built.assemble()
    blocks = tuple(np.array(B, dtype=float) for B in doc["blocks"])
    sol = Solution(doc["status"], float(doc["objective"]), blocks, np.array(doc["free"], dtype=float))
    wc = worst_case_instance(PepResult(built, sdp, sol))
    text = wc.to_json()
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "worst_case.json").write_text(text + "\n")
        print(f"wrote {Path(args.out) / 'worst_case.json'}")
    else:
        print(text)
    ok = all(g.member for g in wc.groups)
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    if not args.config:
        print("sweep needs --config", file=sys.stderr)
        return 2
    cfg = ExperimentConfig.load(args.config)
    for key in ("out", "format", "solver", "tol", "seed"):
        v = getattr(args, key)
        if v is not None:
            setattr(cfg, key, v)
    cfg.validate()
    records = run(cfg, out=None)
    _emit(records, cfg)
    return 0 if all(r["status"] == "optimal" for r in records) else 1


def cmd_rate(args) -> int:
    cfg = _config(args, "diging", mode="rate")
    if args.N is None:
        cfg.N = [2]
    alpha = cfg.alpha[0]
    if args.grid:
        cfg.beta_c = [float(b) for b in beta_grid(alpha, cfg.L)]
    elif args.beta_c:
        cfg.beta_c = list(args.beta_c)
    records = [run_point(cfg, pt) for pt in cfg.points()]
    for r in records:
        theta = r["objective"]
        one_minus = "" if theta is None else f"{1.0 - theta:.4g}"
        print(f"alpha={r['alpha_or_h']:g} beta_c={r['beta_c']:.4g} theta={theta!r} "
              f"1-theta={one_minus} status={r['status']}")
    good = [r for r in records if r["status"] == "optimal"]
    if good:
        best = min(good, key=lambda r: r["objective"])
        print(f"best: theta={best['objective']:.10g} 1-theta={1.0 - best['objective']:.4g} "
              f"at beta_c={best['beta_c']:.4g}")
    if cfg.out:
        write_records(records, cfg.out, cfg)
    return 0 if len(good) == len(records) else 1


def cmd_simulate(args) -> int:
    from decpep.simulate import monte_carlo_lower_bound

    cfg = _config(args)
    _, params = build_point(cfg, _first_point(cfg))
    lb = monte_carlo_lower_bound(params, args.samples, cfg.seed, args.dim)
    print(f"monte-carlo lower bound ({args.samples} samples, seed {cfg.seed}): {lb:.10g}")
    return 0


def cmd_export(args) -> int:
    from decpep.solver.sdpa import export_sdpa

    cfg = _config(args)
    built, _ = build_point(cfg, _first_point(cfg))
    target = args.output or str(Path(cfg.out or ".") / "problem.dat-s")
    Path(target).parent.mkdir(parents=True, exist_ok=True)
    export_sdpa(built.assemble(), target)
    print(f"wrote {target}")
    return 0


def cmd_theory(args) -> int:
    print(f"{theoretical_dgd_bound(args.D, args.R, args.K, args.lam, args.h):.6g}")
    return 0


_COMMANDS = {"analyze": cmd_analyze, "sweep": cmd_sweep, "rate": cmd_rate, "recover": cmd_recover,
             "simulate": cmd_simulate, "export-sdp": cmd_export, "theory": cmd_theory}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
