"""Time the compiled QP kernel against the pure-Python fallback.

Two workloads: isolated random 2-variable problems (cold start every time)
and a full case-study batch, where the warm start carries the active set
from one sample to the next.

    python3 benchmarks/bench_qp_kernel.py [--problems 2000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from fccbf.barriers import LinearControlConstraint
from fccbf.bench import load_scenario, run_batch
from fccbf.model import ControlBounds
from fccbf.qp import QpProblem, QpSolver, available_backends


def random_problems(n: int, seed: int = 0) -> list[QpProblem]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        rows = tuple(
            LinearControlConstraint(rng.normal(size=2), float(rng.uniform(-3, 3)), f"r{i}")
            for i in range(int(rng.integers(1, 6)))
        )
        lim = rng.uniform(0.5, 3.0, size=2)
        tags = frozenset(r.tag for r in rows)
        out.append(QpProblem(np.eye(2), rows, ControlBounds(-lim, lim), tags))
    return out


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--problems", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    problems = random_problems(args.problems)
    sc = load_scenario("case_study_4obs")
    rows = []
    for backend in available_backends():
        def isolated():
            for p in problems:
                QpSolver(backend).solve(p)

        def batch():
            run_batch(sc, workers=1, backend=backend)

        rows.append((backend, best_of(isolated, args.repeat), best_of(batch, args.repeat)))

    print(f"{'backend':<8} {'isolated (us/QP)':>17} {'case study (s)':>15}")
    for backend, t_iso, t_batch in rows:
        print(f"{backend:<8} {1e6 * t_iso / len(problems):>17.1f} {t_batch:>15.2f}")
    if len(rows) == 2:
        (_, a_iso, a_b), (_, b_iso, b_b) = rows
        print(f"speedup  {a_iso / b_iso:>17.2f}x {a_b / b_b:>14.2f}x")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
