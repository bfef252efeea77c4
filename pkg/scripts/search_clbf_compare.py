"""Search the quadrant behind the (-1, -1) obstacle for a start where the CLBF run
violates safety in t in [3, 6] s and the FCCBF run does not.

Each hit is re-run from starts perturbed by +-1e-9 per coordinate; a hit is
robust only if both outcomes survive every perturbation. Prints one line per
hit and the state to freeze into ``clbf_compare_1obs.yaml``.

    python scripts/search_clbf_compare.py [--step 0.25]
"""
import argparse
import itertools

import numpy as np

from fccbf.bench import load_scenario
from fccbf.bench.scenario import apply_overrides, load_raw, parse_scenario

WINDOW = (3.0, 6.0)
PERTURB = 1e-9


def outcome(sc, x0):
    """(CLBF violation time or None, FCCBF min b, FCCBF violated?)"""
    from fccbf.sim import run

    res = {}
    for c, cfg in enumerate(sc.controllers):
        ctrl = sc.resolve(c, x0).spec
        log = run(ctrl, sc.system, sc.bounds, x0, sc.sim)
        ev = log.first_event("safety-violated")
        res[cfg.type] = (None if ev is None else ev["time"], min(log.constraint_values[t].min() for t in log.safety_tags()))
    return res


def is_hit(res):
    t_clbf = res["clbf"][0]
    return t_clbf is not None and WINDOW[0] <= t_clbf <= WINDOW[1] and res["fccbf"][0] is None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--step", type=float, default=0.25)
    ap.add_argument("--lo", type=float, default=-4.0)
    ap.add_argument("--hi", type=float, default=-1.5)
    args = ap.parse_args()

    raw, source = load_raw("clbf_compare_1obs")
    sc = parse_scenario(raw, source)
    grid = np.round(np.arange(args.lo, args.hi + 1e-9, args.step), 10)
    first_clbf = None
    robust = []
    for x, y in itertools.product(grid, grid):
        x0 = np.array([x, y])
        if sc.goal(x0) >= 0 or any(s.constraint(x0) <= 0.1 for s in sc.safety):
            continue
        try:
            res = outcome(sc, x0)
        except Exception as exc:  # empty k-interval etc.
            print(f"{x0.tolist()}: skipped ({exc})")
            continue
        t_clbf = res["clbf"][0]
        if t_clbf is not None and WINDOW[0] <= t_clbf <= WINDOW[1] and first_clbf is None:
            first_clbf = (x0, res)
        if not (t_clbf is not None or res["fccbf"][0] is not None):
            continue
        stable = all(
            is_hit(outcome(sc, x0 + PERTURB * np.array(d))) == is_hit(res)
            for d in ((1, 0), (-1, 0), (0, 1), (0, -1))
        )
        print(
            f"{x0.tolist()}: clbf violation t={t_clbf} min b={res['clbf'][1]:.4g}; "
            f"fccbf violation t={res['fccbf'][0]} min b={res['fccbf'][1]:.4g}; "
            f"split={is_hit(res)} stable-under-1e-9={stable}"
        )
        if is_hit(res) and stable:
            robust.append(x0)
    if robust:
        print("robust split found:", robust[0].tolist())
    elif first_clbf is not None:
        x0, res = first_clbf
        print("no robust split; first CLBF violation in window at", x0.tolist(), res)
    else:
        print("no CLBF violation in window on this grid")


if __name__ == "__main__":
    main()
