"""Per-step QP: minimize ``u'Hu`` over barrier rows and box bounds, with slack fallback."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..barriers import LinearControlConstraint
from ..errors import ConfigurationError
from ..model import ControlBounds
from . import _backend
from ._dense_py import INFEASIBLE, MAX_ITER, NOT_PD, OPTIMAL

logger = logging.getLogger(__name__)

SLACK_PENALTY = 1e6
KKT_TOL = 1e-7

STATUS_OPTIMAL = "optimal"
STATUS_RELAXED = "relaxed"
STATUS_INFEASIBLE = "infeasible-hard"
STATUSES = (STATUS_OPTIMAL, STATUS_RELAXED, STATUS_INFEASIBLE)

RELAX_UNIFORM = "uniform"
RELAX_GOAL_FIRST = "goal-first"
RELAX_POLICIES = (RELAX_UNIFORM, RELAX_GOAL_FIRST)


@dataclass(frozen=True)
class QpProblem:
    """``min u'Hu  s.t.  a_i . u + c_i >= 0,  u_min <= u <= u_max``.

    Rows whose tag is in ``relax_tags`` may be softened when the hard problem
    is infeasible; bounds never are. If ``relax_first`` is non-empty, only
    those tags are softened in a first attempt and the rest of ``relax_tags``
    join only if that attempt is still infeasible.
    """

    hessian: np.ndarray
    rows: tuple[LinearControlConstraint, ...]
    bounds: ControlBounds
    relax_tags: frozenset[str] = frozenset()
    relax_first: frozenset[str] = frozenset()

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        q = self.bounds.dim
        if H.shape != (q, q):
            raise ConfigurationError(f"hessian shape {H.shape} does not match control dimension {q}")
        if np.max(np.abs(H - H.T)) > 1e-12 * max(1.0, float(np.max(np.abs(H)))):
            raise ConfigurationError("hessian is not symmetric")
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            raise ConfigurationError("hessian is not positive definite") from None
        rows = tuple(self.rows)
        for row in rows:
            if row.coeff.shape != (q,):
                raise ConfigurationError(f"row {row.tag!r} has {row.coeff.shape[0]} coefficients, expected {q}")
        object.__setattr__(self, "hessian", H)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "relax_tags", frozenset(self.relax_tags))
        object.__setattr__(self, "relax_first", frozenset(self.relax_first) & self.relax_tags)

    @property
    def dim(self) -> int:
        return self.bounds.dim

    def relaxable(self) -> list[int]:
        return [i for i, row in enumerate(self.rows) if row.tag in self.relax_tags]

    def relax_stages(self) -> list[list[int]]:
        """Row index sets to soften, in the order they are tried."""
        full = self.relaxable()
        if not full:
            return []
        first = [i for i in full if self.rows[i].tag in self.relax_first]
        if first and len(first) < len(full):
            return [first, full]
        return [full]

    def scaled(self, c: float) -> "QpProblem":
        return QpProblem(c * self.hessian, self.rows, self.bounds, self.relax_tags, self.relax_first)


@dataclass
class QpSolution:
    """Result of one solve.

    ``active_set`` indexes rows first (``0 .. len(rows)-1``) and then bound
    faces: ``len(rows) + 2j`` is ``u_j >= u_min_j`` and ``len(rows) + 2j + 1``
    is ``u_j <= u_max_j``. ``slacks`` maps relaxable row tags to their slack.
    """

    status: str
    u: np.ndarray
    slacks: dict[str, float] = field(default_factory=dict)
    objective: float = 0.0
    active_set: tuple[int, ...] = ()
    multipliers: tuple[float, ...] = ()
    iterations: int = 0

    @property
    def slack_total(self) -> float:
        return float(sum(self.slacks.values()))


@dataclass
class _Standard:
    """``A z >= b`` with bookkeeping from kernel rows back to problem indices."""

    G: np.ndarray
    A: np.ndarray
    b: np.ndarray
    index: list[int]  # problem-level index per kernel row, -1 for slack faces
    keys: list[str]


def _standard_form(p: QpProblem, relax: Sequence[int] = ()) -> _Standard:
    q = p.dim
    nr = len(relax)
    nz = q + nr
    slot = {i: q + s for s, i in enumerate(relax)}
    A, b, index, keys = [], [], [], []
    for i, row in enumerate(p.rows):
        a = np.zeros(nz)
        a[:q] = row.coeff
        if i in slot:
            a[slot[i]] = 1.0
        A.append(a)
        b.append(-row.offset)
        index.append(i)
        keys.append(f"row:{row.tag}:{i}")
    m = len(p.rows)
    for j in range(q):
        if np.isfinite(p.bounds.u_min[j]):
            a = np.zeros(nz)
            a[j] = 1.0
            A.append(a)
            b.append(p.bounds.u_min[j])
            index.append(m + 2 * j)
            keys.append(f"lower:{j}")
        if np.isfinite(p.bounds.u_max[j]):
            a = np.zeros(nz)
            a[j] = -1.0
            A.append(a)
            b.append(-p.bounds.u_max[j])
            index.append(m + 2 * j + 1)
            keys.append(f"upper:{j}")
    for s, i in enumerate(relax):
        a = np.zeros(nz)
        a[q + s] = 1.0
        A.append(a)
        b.append(0.0)
        index.append(-1)
        keys.append(f"slack:{p.rows[i].tag}:{i}")
    G = np.zeros((nz, nz))
    G[:q, :q] = 2.0 * p.hessian
    for s in range(nr):
        G[q + s, q + s] = 2.0 * SLACK_PENALTY
    A_arr = np.array(A, dtype=float).reshape(len(A), nz)
    return _Standard(G, A_arr, np.array(b, dtype=float), index, keys)


class QpSolver:
    """Stateful solver: keeps the last active sets for warm starts and the last control.

    One instance per simulation; not thread-safe.
    """

    def __init__(self, backend: str | None = None, max_iter: int = 200):
        self.backend = backend
        self.max_iter = max_iter
        self.stats: Counter = Counter()
        self._warm: dict[tuple, list[str]] = {}
        self._last_u: np.ndarray | None = None

    def reset(self) -> None:
        self.stats.clear()
        self._warm = {}
        self._last_u = None

    def _kernel(self, std: _Standard, relaxed: tuple):
        lookup = {k: i for i, k in enumerate(std.keys)}
        prev = self._warm.get(relaxed, [])
        warm = [lookup[k] for k in prev if k in lookup]
        if len(warm) != len(prev):
            warm = []
        status, z, active, lam, iters = _backend.solve_dense(
            std.G, std.A, std.b, warm=warm, max_iter=self.max_iter, backend=self.backend
        )
        if status == NOT_PD:
            raise ConfigurationError("hessian is not positive definite")
        if status == MAX_ITER:
            raise RuntimeError(f"QP kernel hit the iteration limit ({self.max_iter})")
        self.stats["iterations"] += iters
        if iters == 0 and warm and status == OPTIMAL:
            self.stats["warm_hits"] += 1
        if status == OPTIMAL:
            self._warm[relaxed] = [std.keys[i] for i in active]
        return status, np.array(z, dtype=float), list(active), list(lam), iters

    def _finish(self, p: QpProblem, std: _Standard, status: str, z, active, lam, iters, relax=()) -> QpSolution:
        q = p.dim
        u = p.bounds.clamp(z[:q])
        slacks = {p.rows[i].tag: max(0.0, float(z[q + s])) for s, i in enumerate(relax)}
        objective = float(u @ p.hessian @ u) + SLACK_PENALTY * sum(v * v for v in slacks.values())
        pairs = sorted((std.index[a], l) for a, l in zip(active, lam) if std.index[a] >= 0)
        self._last_u = u
        self.stats[status] += 1
        return QpSolution(
            status=status,
            u=u,
            slacks=slacks,
            objective=objective,
            active_set=tuple(i for i, _ in pairs),
            multipliers=tuple(float(l) for _, l in pairs),
            iterations=iters,
        )

    def solve(self, p: QpProblem) -> QpSolution:
        std = _standard_form(p)
        status, z, active, lam, iters = self._kernel(std, ())
        if status == OPTIMAL:
            return self._finish(p, std, STATUS_OPTIMAL, z, active, lam, iters)
        return self.solve_relaxed(p, known_infeasible=True)

    def solve_relaxed(self, p: QpProblem, known_infeasible: bool = False) -> QpSolution:
        if not known_infeasible:
            std = _standard_form(p)
            status, z, active, lam, iters = self._kernel(std, ())
            if status == OPTIMAL:
                return self._finish(p, std, STATUS_OPTIMAL, z, active, lam, iters)
        relax = p.relaxable()
        for stage in p.relax_stages():
            std = _standard_form(p, stage)
            status, z, active, lam, iters = self._kernel(std, tuple(stage))
            if status == OPTIMAL:
                return self._finish(p, std, STATUS_RELAXED, z, active, lam, iters, stage)
        prev = self._last_u if self._last_u is not None else np.zeros(p.dim)
        u = p.bounds.clamp(prev)
        self._last_u = u
        self.stats[STATUS_INFEASIBLE] += 1
        logger.debug("QP infeasible with all eligible rows relaxed; holding %s", u)
        return QpSolution(
            status=STATUS_INFEASIBLE,
            u=u,
            slacks={p.rows[i].tag: 0.0 for i in relax},
            objective=float(u @ p.hessian @ u),
        )


def solve(p: QpProblem, backend: str | None = None) -> QpSolution:
    """One-shot solve with a fresh solver (no warm start)."""
    return QpSolver(backend).solve(p)


def solve_relaxed(p: QpProblem, backend: str | None = None) -> QpSolution:
    return QpSolver(backend).solve_relaxed(p)


def kkt_check(p: QpProblem, s: QpSolution, tol: float = KKT_TOL) -> bool:
    """Independent first-order optimality check of a returned solution.

    Multipliers are re-derived by least squares on the constraints that are
    tight at the solution; the kernel's own multipliers are not used.
    """
    if s.status == STATUS_INFEASIBLE:
        return False
    relax = [i for i in p.relaxable() if p.rows[i].tag in s.slacks] if s.status == STATUS_RELAXED else []
    std = _standard_form(p, relax)
    z = np.concatenate([np.asarray(s.u, dtype=float), [s.slacks.get(p.rows[i].tag, 0.0) for i in relax]])
    res = std.A @ z - std.b
    scale = 1.0 + np.abs(std.b)
    if np.any(res < -tol * scale):
        return False
    tight = np.abs(res) <= tol * scale
    grad = std.G @ z
    gscale = max(1.0, float(np.linalg.norm(grad)))
    if not np.any(tight):
        return bool(np.linalg.norm(grad) <= tol * gscale)
    At = std.A[tight].T
    lam, *_ = np.linalg.lstsq(At, grad, rcond=None)
    if np.linalg.norm(At @ lam - grad) > tol * gscale:
        return False
    if np.any(lam < -tol * gscale):
        return False
    return bool(np.all(np.abs(lam * res[tight]) <= tol * gscale))
