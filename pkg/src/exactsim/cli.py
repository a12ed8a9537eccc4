"""Command-line front end.

Replication ``i`` draws from ``np.random.default_rng(SeedSequence(seed, spawn_key=(i,)))``,
so results do not depend on the number of workers or the order they finish.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core_model import GlobalBound, ModelConfig, PRESETS, load_model
from .errors import (AttemptCapExceeded, ConfigError, ContractViolation, NumericalPrecisionError,
                     PreconditionError)

OUT_ENV = "EXACTSIM_OUT"
DIFFUSION_ALGOS = ("bea", "uea", "auea")
JUMP_ALGOS = ("bjea", "ujea", "aujea")
EPS_ALGOS = ("eps-bm", "eps-jd")


def stream(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))


def _config(args) -> ModelConfig:
    cfg = load_model(args.model)
    if args.horizon is not None:
        if not args.horizon > 0:
            raise ConfigError("--horizon must be positive")
        cfg = replace(cfg, horizon=float(args.horizon))
    return cfg


def _check_compat(cfg: ModelConfig, algo: str, superpose: bool) -> None:
    m = cfg.build()
    if algo in DIFFUSION_ALGOS and m.jumps is not None:
        raise ConfigError(f"model {cfg.name!r} has jumps; use one of {', '.join(JUMP_ALGOS)}")
    if algo in JUMP_ALGOS and m.jumps is None:
        raise ConfigError(f"model {cfg.name!r} has no jumps; use one of {', '.join(DIFFUSION_ALGOS)}")
    if algo == "bea" and m.global_phi_bounds is None:
        raise ConfigError(f"bea needs globally bounded phi, which model {cfg.name!r} lacks")
    if algo == "bjea" and not isinstance(m.jumps.intensity_bound, GlobalBound):
        raise ConfigError(f"bjea needs a global intensity bound, which model {cfg.name!r} lacks")
    if superpose and (algo not in ("ujea", "aujea") or not (m.jumps and m.jumps.intensity_floor)):
        raise ConfigError("--superpose needs ujea or aujea and a model with a positive intensity floor")


def _simulate_one(cfg_text: str, algo: str, opts: dict, seed: int, i: int) -> dict:
    from . import exact, jumps

    m = ModelConfig.from_text(cfg_text).build()
    rng = stream(seed, i)
    if algo == "bea":
        sk = exact.run_bea(m, rng)
    elif algo == "uea":
        sk = exact.run_uea(m, rng, backend=opts["backend"])
    elif algo == "auea":
        sk = exact.run_auea(m, rng)
    elif opts["superpose"]:
        sk = jumps.superposition_wrapper(m, rng, inner=algo)
    elif algo == "bjea":
        sk = jumps.run_bjea(m, rng, inner=opts["inner"])
    elif algo == "ujea":
        sk = jumps.run_ujea(m, rng)
    else:
        sk = jumps.run_aujea(m, rng)
    rec = sk.to_record()
    rec["replication"] = i
    if algo in DIFFUSION_ALGOS:
        rec["summary"] = {"end": sk.end_value, "kappa": sk.kappa, "attempts": sk.attempts, "jumps": 0}
    else:
        att = sum(s.attempts for s in sk.segments)
        rec["summary"] = {"end": sk.end_value, "kappa": sk.kappa, "attempts": att, "jumps": sk.n_jumps,
                          "segments": len(sk.segments)}
    return rec


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, *j) for j in jobs]
        return [f.result() for f in futs]


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else None
    return float(v.mean()), se


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.algo.endswith("-in-bjea"):
        # e.g. "auea-in-bjea": BJEA with the named diffusion algorithm between proposals
        inner = args.algo[: -len("-in-bjea")]
        if inner not in DIFFUSION_ALGOS:
            raise ConfigError(f"unknown inner algorithm {inner!r} in {args.algo!r}")
        args.algo, args.inner = "bjea", inner
    if args.algo not in DIFFUSION_ALGOS + JUMP_ALGOS:
        raise ConfigError(f"simulate supports {', '.join(DIFFUSION_ALGOS + JUMP_ALGOS)}; got {args.algo!r}")
    _check_compat(cfg, args.algo, args.superpose)
    opts = {"backend": args.backend, "inner": args.inner, "superpose": args.superpose}
    text = cfg.to_text()
    recs = _map(_simulate_one, [(text, args.algo, opts, args.seed, i) for i in range(args.reps)], args.workers)
    out = _outdir(args)
    with open(out / "skeletons.jsonl", "w") as fh:
        for r in recs:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    ends = [r["summary"]["end"] for r in recs]
    kap = [r["summary"]["kappa"] for r in recs]
    jmp = [r["summary"]["jumps"] for r in recs]
    att = sum(r["summary"]["attempts"] for r in recs)
    counts = np.bincount(np.asarray(kap, dtype=int)).tolist() if kap else []
    summary = {
        "model": cfg.name, "algo": args.algo, "seed": args.seed, "reps": args.reps,
        "horizon": cfg.horizon, "acceptance_rate": (len(recs) / att) if att else None,
        "end_mean_se": _mean_se(ends) if ends else None,
        "kappa_mean_se": _mean_se(kap) if kap else None, "kappa_counts": counts,
        "jumps_mean_se": _mean_se(jmp) if jmp else None,
    }
    _write_json(out / "summary.json", summary)
    (out / "config.ini").write_text(text)
    return 0


def _eps_one(cfg_text: str, algo: str, policy_kw: dict, seed: int, i: int):
    from .epsilon_strong import RefinePolicy, eps_strong_bm, eps_strong_jump_diffusion

    cfg = ModelConfig.from_text(cfg_text)
    m = cfg.build()
    rng = stream(seed, i)
    rows = []
    if "eps" in policy_kw:
        pol = RefinePolicy.tolerance(policy_kw["eps"])
        if algo == "eps-bm":
            bp = eps_strong_bm(cfg.horizon, cfg.start, pol, rng)
        else:
            bp = eps_strong_jump_diffusion(m, pol, rng, algo="bjea" if isinstance(
                m.jumps.intensity_bound, GlobalBound) else "aujea")
        rows.append((bp.bisections, bp.sup_gap(), bp.l1_gap()))
    else:
        pol = RefinePolicy.rounds(0)
        if algo == "eps-bm":
            bp = eps_strong_bm(cfg.horizon, cfg.start, pol, rng)
        else:
            bp = eps_strong_jump_diffusion(m, pol, rng, algo="bjea" if isinstance(
                m.jumps.intensity_bound, GlobalBound) else "aujea")
        for n in range(1, policy_kw["rounds"] + 1):
            bp.bisect_round(rng)
            rows.append((n, bp.sup_gap(), bp.l1_gap()))
    return bp.to_csv(), rows, len(bp.cells)


def cmd_epsstrong(args) -> int:
    from .epsilon_strong import convergence_table

    cfg = _config(args)
    if args.algo not in EPS_ALGOS:
        raise ConfigError(f"epsstrong supports {', '.join(EPS_ALGOS)}; got {args.algo!r}")
    if args.algo == "eps-jd" and cfg.build().jumps is None:
        raise ConfigError(f"eps-jd needs a model with jumps; {cfg.name!r} has none")
    if args.algo == "eps-bm" and cfg.drift != "zero":
        raise ConfigError("eps-bm needs a zero-drift model such as the 'bm' preset")
    if (args.rounds is None) == (args.epsilon is None):
        raise ConfigError("give exactly one of --rounds or --epsilon")
    if args.epsilon is not None:
        if not args.epsilon > 0:
            raise ConfigError("--epsilon must be positive")
        pkw = {"eps": float(args.epsilon)}
    else:
        if args.rounds < 1:
            raise ConfigError("--rounds must be >= 1")
        pkw = {"rounds": int(args.rounds)}
    text = cfg.to_text()
    res = _map(_eps_one, [(text, args.algo, pkw, args.seed, i) for i in range(args.reps)], args.workers)
    out = _outdir(args)
    for i, (csv_text, _, _) in enumerate(res):
        (out / f"staircase_{i:05d}.csv").write_text(csv_text)
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if "rounds" in pkw:
            w.writerow(["n", "mean_sup_gap", "mean_l1_gap", "scaled_l1"])
            for row in convergence_table([r for _, r, _ in res]):
                w.writerow([row[0]] + [repr(v) for v in row[1:]])
        else:
            w.writerow(["replication", "bisections", "cells", "sup_gap", "l1_gap"])
            for i, (_, rows, ncell) in enumerate(res):
                b, sup, l1 = rows[0]
                w.writerow([i, b, ncell, repr(sup), repr(l1)])
    (out / "config.ini").write_text(text)
    return 0


def cmd_oracle(args) -> int:
    from .euler import euler_paths

    cfg = _config(args)
    if not args.oracle_mesh > 0:
        raise ConfigError("--oracle-mesh must be positive")
    m = cfg.build()
    rng = stream(args.seed, 0)
    x, counts, _ = euler_paths(m, args.reps, args.oracle_mesh, rng)
    out = _outdir(args)
    with open(out / "oracle.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["end", "jumps"])
        for a, b in zip(x, counts):
            w.writerow([repr(float(a)), int(b)])
    _write_json(out / "oracle_summary.json", {
        "model": cfg.name, "mesh": args.oracle_mesh, "reps": args.reps, "seed": args.seed,
        "approximate": True, "end_mean_se": _mean_se(x), "jumps_mean_se": _mean_se(counts)})
    (out / "config.ini").write_text(cfg.to_text())
    return 0


def _outdir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "exactsim_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="exactsim", description="Exact and epsilon-strong path simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, algo_default):
        sp.add_argument("--model", default="bm", help=f"preset ({', '.join(PRESETS)}) or config file path")
        sp.add_argument("--algo", default=algo_default)
        sp.add_argument("--horizon", type=float, default=None, help="override the model horizon")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--reps", type=int, default=1)
        sp.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./exactsim_out)")
        sp.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("simulate", help="exact skeletons")
    common(s, "auea")
    s.add_argument("--inner", default="auea", choices=DIFFUSION_ALGOS, help="diffusion algorithm inside bjea")
    s.add_argument("--backend", default="intersection", choices=("intersection", "bessel"))
    s.add_argument("--superpose", action="store_true", help="split off the intensity floor (ujea/aujea)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("epsstrong", help="bounding staircases")
    common(e, "eps-bm")
    g = e.add_mutually_exclusive_group()
    g.add_argument("--rounds", type=int, default=None)
    g.add_argument("--epsilon", type=float, default=None)
    e.set_defaults(func=cmd_epsstrong)

    o = sub.add_parser("oracle", help="approximate Euler reference samples")
    common(o, "euler")
    o.add_argument("--oracle-mesh", type=float, default=1e-4)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        if args.reps < 1:
            raise ConfigError("--reps must be >= 1")
        return args.func(args)
    except (ConfigError, PreconditionError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ContractViolation, NumericalPrecisionError, AttemptCapExceeded) as e:
        print(f"numerical contract error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
