"""Feasible (r, k) design for the finite-time convergent barrier under control bounds.

Two conditions are combined. The deadline condition ``r >= (r - h0) e^{-k t_f}``
gives a lower bound on ``k``. The bound-compatibility condition, that
``L_f s + k s + max_{u in U} L_g s . u >= 0`` over the reachable set, gives an
upper bound. It is checked either at the initial state only (valid when the
worst case is known to sit there) or on a Monte-Carlo sample of the set.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .barriers import FccbfSpec
from .errors import ConfigurationError, DomainError
from .model import ConstraintFunction, ControlBounds, SystemModel, as_state, lie_f, lie_g

logger = logging.getLogger(__name__)

MODE_INITIAL = "initial-state"
MODE_SAMPLED = "sampled"
DEFAULT_SAMPLES = 10_000


def k_lower_bound(r: float, h0: float, t_f: float) -> float:
    """Smallest gain meeting the deadline: ``ln((r - h0) / r) / t_f``."""
    if not r > 0:
        raise DomainError(f"r must be positive, got {r}")
    if not h0 < 0:
        raise DomainError(f"h0 must be negative, got {h0}")
    if not t_f > 0:
        raise DomainError(f"t_f must be positive, got {t_f}")
    return math.log((r - h0) / r) / t_f


def actuation_max(lg: np.ndarray, bounds: ControlBounds) -> float:
    """``max_{u in U} lg . u`` for a box ``U``."""
    return bounds.box_max(np.asarray(lg, dtype=float))


def _k_upper(h: ConstraintFunction, r: float, sys: SystemModel, bounds: ControlBounds, x0) -> float:
    x0 = as_state(x0, sys.state_dim)
    s0 = h(x0) - r
    reach = lie_f(h, sys, x0) + actuation_max(lie_g(h, sys, x0), bounds)
    if s0 == 0.0:
        logger.warning("s(x0) = 0: the bound-compatibility condition holds for every k at x0")
        return math.inf
    if s0 > 0:
        # s(x0) > 0 makes k s(x0) grow with k; any k works once it holds at k = 0
        return math.inf if reach >= 0 else -math.inf
    return reach / (-s0)


def k_upper_bound_initial(spec: FccbfSpec, sys: SystemModel, bounds: ControlBounds, x0) -> float:
    """Largest ``k`` with ``L_f s + k s + max_U L_g s . u >= 0`` at ``x0``.

    Only a valid design bound when the worst case over the reachable set sits
    at the initial state; ``spec.k`` is ignored.
    """
    return _k_upper(spec.constraint, spec.r, sys, bounds, x0)


@dataclass(frozen=True)
class KInterval:
    k_min: float
    k_max: float

    @property
    def nonempty(self) -> bool:
        return self.k_min <= self.k_max

    def contains(self, k: float) -> bool:
        return self.k_min <= k <= self.k_max

    def midpoint(self) -> float:
        if not self.nonempty:
            raise DomainError(f"empty k-interval [{self.k_min:.6g}, {self.k_max:.6g}]")
        if math.isinf(self.k_max):
            return 2.0 * self.k_min
        return 0.5 * (self.k_min + self.k_max)

    def to_dict(self) -> dict:
        return {"k_min": self.k_min, "k_max": self.k_max, "nonempty": self.nonempty}


def feasible_k_interval(
    h: ConstraintFunction, r: float, t_f: float, sys: SystemModel, bounds: ControlBounds, x0
) -> KInterval:
    x0 = as_state(x0, sys.state_dim)
    return KInterval(k_lower_bound(r, h(x0), t_f), _k_upper(h, r, sys, bounds, x0))


@dataclass(frozen=True)
class ReachableSet:
    """States with ``h(x0) <= h(y) <= 0``.

    Sampling draws uniformly from ``box`` (optionally intersected with
    ``region``) and rejects non-members.
    """

    constraint: ConstraintFunction
    x0: np.ndarray
    h_lower: float
    h_upper: float = 0.0
    box: tuple[np.ndarray, np.ndarray] | None = None
    region: Callable[[np.ndarray], bool] | None = None
    segment_end: np.ndarray | None = None
    max_draws: int = 10_000_000

    def membership(self, y) -> bool:
        v = self.constraint(np.asarray(y, dtype=float))
        return self.h_lower <= v <= self.h_upper

    def contains(self, y) -> bool:
        return self.membership(y) and (self.region is None or bool(self.region(np.asarray(y, dtype=float))))

    def sample(self, n: int, seed: int) -> np.ndarray:
        """``n`` seeded member states; same seed gives the same states."""
        if n < 1:
            raise ConfigurationError("n_samples must be >= 1")
        rng = np.random.default_rng(seed)
        if self.segment_end is not None:
            return self._sample_segment(n, rng)
        if self.box is None:
            raise ConfigurationError("sampling the reachable set needs a bounding box")
        lo, hi = self.box
        out: list[np.ndarray] = []
        drawn = 0
        batch = max(1024, 4 * n)
        while len(out) < n:
            if drawn >= self.max_draws:
                raise DomainError(f"sampler exhausted after {drawn} draws ({len(out)}/{n} accepted)")
            cand = rng.uniform(lo, hi, size=(batch, lo.shape[0]))
            drawn += batch
            for y in cand:
                if self.contains(y):
                    out.append(y)
                    if len(out) == n:
                        break
        return np.array(out)

    def _sample_segment(self, n: int, rng: np.random.Generator) -> np.ndarray:
        ts = rng.uniform(0.0, 1.0, size=4 * n + 16)
        pts = [self.x0 + t * (self.segment_end - self.x0) for t in ts]
        members = [p for p in pts if self.contains(p)]
        if len(members) < n:
            raise DomainError(f"sampler exhausted: {len(members)}/{n} segment points in the set")
        return np.array(members[:n])


def reachable_set(
    h: ConstraintFunction,
    x0,
    box: tuple | None = None,
    region: Callable[[np.ndarray], bool] | None = None,
) -> ReachableSet:
    x0 = as_state(x0)
    h0 = h(x0)
    if not h0 < 0:
        raise ConfigurationError(f"h(x0) = {h0:.6g} >= 0: goal constraint is not initially violated")
    if box is not None:
        lo, hi = (np.asarray(b, dtype=float).reshape(-1) for b in box)
        if lo.shape != x0.shape or hi.shape != x0.shape or np.any(lo > hi):
            raise ConfigurationError("bounding box must match the state dimension with lo <= hi")
        box = (lo, hi)
    return ReachableSet(h, x0, h0, 0.0, box, region)


def segment_reachable_set(h: ConstraintFunction, x0, end) -> ReachableSet:
    """Members of the reachable set on the straight segment from ``x0`` to ``end``.

    Models a closed loop known to travel along that segment (the unobstructed
    single-integrator case study moves radially toward the goal center).
    """
    base = reachable_set(h, x0)
    return ReachableSet(h, base.x0, base.h_lower, 0.0, segment_end=as_state(end, base.x0.shape[0]))


@dataclass
class FeasibilityReport:
    mode: str
    decoupled_pass: bool
    pointwise_pass: bool
    worst_state: np.ndarray
    margin: float
    decoupled_margin: float
    n_samples: int
    r: float
    k: float
    k_interval: KInterval | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "decoupled_pass": self.decoupled_pass,
            "pointwise_pass": self.pointwise_pass,
            "worst_state": [float(v) for v in self.worst_state],
            "margin": self.margin,
            "decoupled_margin": self.decoupled_margin,
            "n_samples": self.n_samples,
            "r": self.r,
            "k": self.k,
        }
        if self.k_interval is not None:
            out["k_interval"] = self.k_interval.to_dict()
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def _margins(spec: FccbfSpec, sys: SystemModel, bounds: ControlBounds, states) -> tuple[np.ndarray, np.ndarray]:
    h = spec.constraint
    drift_terms = np.empty(len(states))
    act_terms = np.empty(len(states))
    for i, y in enumerate(states):
        drift_terms[i] = lie_f(h, sys, y) + spec.k * (h(y) - spec.r)
        act_terms[i] = actuation_max(lie_g(h, sys, y), bounds)
    return drift_terms, act_terms


def _report(mode, spec, sys, bounds, states, notes=()) -> FeasibilityReport:
    drift_terms, act_terms = _margins(spec, sys, bounds, states)
    with np.errstate(invalid="ignore"):
        pointwise = drift_terms + act_terms
    pointwise = np.where(np.isnan(pointwise), np.inf, pointwise)
    worst = int(np.argmin(pointwise))
    decoupled_margin = float(np.min(drift_terms) - np.max(-act_terms))
    return FeasibilityReport(
        mode=mode,
        decoupled_pass=bool(decoupled_margin >= 0),
        pointwise_pass=bool(pointwise[worst] >= 0),
        worst_state=np.asarray(states[worst], dtype=float),
        margin=float(pointwise[worst]),
        decoupled_margin=decoupled_margin,
        n_samples=len(states),
        r=spec.r,
        k=spec.k,
        notes=list(notes),
    )


def check_validity_initial(spec: FccbfSpec, sys: SystemModel, bounds: ControlBounds, x0) -> FeasibilityReport:
    """Bound compatibility at the initial state only."""
    x0 = as_state(x0, sys.state_dim)
    return _report(MODE_INITIAL, spec, sys, bounds, [x0], ["evaluated at x0 only; assumes the worst case sits there"])


def check_validity_sampled(
    spec: FccbfSpec,
    sys: SystemModel,
    bounds: ControlBounds,
    reach: ReachableSet,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> FeasibilityReport:
    """Monte-Carlo check of bound compatibility over the reachable set.

    ``decoupled_pass`` compares the minimum of ``L_f s + k s`` against the
    maximum of the worst-case actuation term separately; ``pointwise_pass``
    requires ``L_f s + k s + max_U L_g s . u >= 0`` at every sample. The
    initial state is always included. A pass is evidence, not a proof.
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    states = np.vstack([reach.x0[None, :], reach.sample(n_samples, seed)])
    return _report(MODE_SAMPLED, spec, sys, bounds, states, [f"{len(states)} states, seed {seed}"])
