"""Command line: ``fccbf run | design | verify | list``.

Exit codes: 0 success (verdict pass / clean verify), 1 verdict fail or
problems found, 2 bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .bench import export, load_scenario, run_batch, run_passes, shipped_scenarios, verify
from .bench.export import json_safe
from .design import (
    MODE_SAMPLED,
    check_validity_initial,
    check_validity_sampled,
    reachable_set,
)
from .errors import FccbfError

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _cmd_run(args) -> int:
    sc = load_scenario(args.scenario, seed=args.seed, dt=args.dt, count=args.count)
    logs, summary = run_batch(sc, workers=args.workers, backend=args.backend)
    export(logs, summary, args.out)
    for rec in summary.runs:
        status = "pass" if run_passes(rec.to_dict()) else "FAIL"
        extra = f" error={rec.error}" if rec.error else ""
        goal = "-" if rec.h_at_tf is None else f"{rec.h_at_tf:.4g}"
        minb = "-" if rec.min_b is None else f"{rec.min_b:.4g}"
        tag = " (baseline)" if rec.baseline else ""
        print(f"run {rec.index:3d} {rec.controller:<12s}{tag} h(t_f)={goal:>9s} min b={minb:>10s} "
              f"relaxed={rec.qp_relaxed_count:<4d} {status}{extra}")
    print(f"verdict: {'pass' if summary.verdict else 'fail'}  ({len(summary.runs)} runs -> {args.out})")
    return EXIT_OK if summary.verdict else EXIT_FAIL


def _cmd_design(args) -> int:
    sc = load_scenario(args.scenario, seed=args.seed, count=args.count)
    if sc.goal is None:
        print("scenario has no goal constraint; nothing to design", file=sys.stderr)
        return EXIT_USAGE
    fcc = [c for c, cfg in enumerate(sc.controllers) if cfg.type == "fccbf"]
    if not fcc:
        print("scenario has no fccbf controller", file=sys.stderr)
        return EXIT_USAGE
    mode = args.mode or sc.design.mode
    n_samples = args.samples or sc.design.n_samples
    out = []
    ok = True
    for i, x0 in enumerate(sc.initial_states):
        resolved = sc.resolve(fcc[0], x0)
        spec = resolved.spec.goal
        if args.k is not None:
            spec = type(spec)(spec.constraint, spec.r, args.k, spec.t_f)
        if mode == MODE_SAMPLED:
            if sc.design.box is None:
                print("sampled mode needs design.box in the scenario", file=sys.stderr)
                return EXIT_USAGE
            reach = reachable_set(sc.goal, x0, box=sc.design.box)
            rep = check_validity_sampled(spec, sc.system, sc.bounds, reach, n_samples, sc.design.seed)
        else:
            rep = check_validity_initial(spec, sc.system, sc.bounds, x0)
        rep.k_interval = resolved.k_interval
        ok &= rep.pointwise_pass
        out.append({"init_index": i, "x0": x0.tolist(), **rep.to_dict()})
    json.dump(json_safe(out), sys.stdout, indent=2, sort_keys=True, allow_nan=False)
    sys.stdout.write("\n")
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_verify(args) -> int:
    problems = verify(args.out_dir)
    for p in problems:
        print(p)
    print("verify: clean" if not problems else f"verify: {len(problems)} problem(s)")
    return EXIT_OK if not problems else EXIT_FAIL


def _cmd_list(args) -> int:
    for name in shipped_scenarios():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fccbf", description="Finite-time convergent barrier controllers under input bounds.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate every start of a scenario and write CSV/JSON artifacts")
    r.add_argument("scenario", help="scenario file or shipped scenario name")
    r.add_argument("--out", default="out", help="output directory (default: out)")
    r.add_argument("--seed", type=int, help="override init.random.seed")
    r.add_argument("--count", type=int, help="override init.random.count")
    r.add_argument("--dt", type=float, help="override sim.dt")
    r.add_argument("--workers", type=int, help="worker processes (default: $FCCBF_WORKERS or 1)")
    r.add_argument("--backend", choices=["python", "cython"], help="QP kernel (default: compiled if available)")
    r.set_defaults(func=_cmd_run)

    d = sub.add_parser("design", help="k-interval and bound-compatibility report per start")
    d.add_argument("scenario")
    d.add_argument("--mode", choices=["initial-state", "sampled"])
    d.add_argument("--samples", type=int)
    d.add_argument("--k", type=float, help="check this gain instead of the resolved one")
    d.add_argument("--seed", type=int)
    d.add_argument("--count", type=int)
    d.set_defaults(func=_cmd_design)

    v = sub.add_parser("verify", help="re-check an output directory against its summary")
    v.add_argument("out_dir")
    v.set_defaults(func=_cmd_verify)

    ls = sub.add_parser("list", help="list shipped scenarios")
    ls.set_defaults(func=_cmd_list)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FccbfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
