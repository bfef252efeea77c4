"""Scenario files: parse, validate and resolve ``auto`` controller parameters.

A scenario is a YAML mapping. Errors carry the dotted path of the offending
field (``controllers[0].k``, ``init.random.count``) so a bad file can be fixed
without reading this module.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..barriers import ClbfSpec, FccbfSpec, HocbfSpec, clbf_gain
from ..design import KInterval, feasible_k_interval
from ..errors import DomainError, ScenarioError
from ..model import (
    ConstraintFunction,
    ControlBounds,
    SystemModel,
    double_integrator_1d,
    goal_disk,
    obstacle_disk,
    position_floor,
    single_integrator_2d,
)
from ..qp import RELAX_POLICIES, RELAX_UNIFORM
from ..sim import GOAL_TAG, ControllerSpec, SimConfig

SCHEMA_VERSION = 1
SYSTEMS = ("single-integrator-2d", "double-integrator-1d")
CONTROLLER_TYPES = ("fccbf", "clbf", "safety-only")
DESIGN_MODES = ("initial-state", "sampled")
AUTO = "auto"
R_FRACTION = 0.25

_TOP_KEYS = {
    "schema_version", "name", "description", "system", "goal", "obstacles", "floors",
    "safety_slope", "bounds", "controllers", "t_f", "horizon", "relaxation", "init", "sim", "design",
}


@dataclass(frozen=True)
class ControllerConfig:
    """One controller entry as written in the file (``auto`` still unresolved)."""

    type: str
    r: float | str = AUTO
    k: float | str = AUTO
    p: float | str = AUTO
    q_exp: float = 1.0 / 3.0
    baseline: bool = False
    label: str = ""


@dataclass(frozen=True)
class DesignConfig:
    mode: str = "initial-state"
    n_samples: int = 2000
    seed: int = 0
    box: tuple[tuple[float, ...], tuple[float, ...]] | None = None


@dataclass
class Scenario:
    name: str
    system: SystemModel
    system_name: str
    bounds: ControlBounds
    goal: ConstraintFunction | None
    goal_radius: float
    safety: tuple[HocbfSpec, ...]
    controllers: tuple[ControllerConfig, ...]
    t_f: float
    sim: SimConfig
    relaxation: str
    initial_states: np.ndarray
    design: DesignConfig
    raw: dict = field(repr=False, default_factory=dict)
    source: str = ""

    @property
    def n_runs(self) -> int:
        return len(self.initial_states) * len(self.controllers)

    def run_plan(self) -> list[tuple[int, int, int]]:
        """``(run index, init index, controller index)``, init-major."""
        plan = []
        for i in range(len(self.initial_states)):
            for c in range(len(self.controllers)):
                plan.append((len(plan), i, c))
        return plan

    def resolve(self, c_idx: int, x0) -> "ResolvedController":
        return resolve_controller(self, self.controllers[c_idx], np.asarray(x0, dtype=float), f"controllers[{c_idx}]")


@dataclass(frozen=True)
class ResolvedController:
    spec: ControllerSpec
    config: ControllerConfig
    params: dict
    k_interval: KInterval | None = None


# -- small typed readers ---------------------------------------------------


def _req(d: dict, key: str, path: str) -> Any:
    if key not in d:
        raise ScenarioError(f"{path}.{key}" if path else key, "required field missing")
    return d[key]


def _mapping(v: Any, path: str) -> dict:
    if not isinstance(v, dict):
        raise ScenarioError(path, f"expected a mapping, got {type(v).__name__}")
    return v


def _number(v: Any, path: str, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(path, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ScenarioError(path, f"must be finite, got {v}")
    if positive and not v > 0:
        raise ScenarioError(path, f"must be positive, got {v}")
    if nonneg and v < 0:
        raise ScenarioError(path, f"must be non-negative, got {v}")
    return v


def _integer(v: Any, path: str, minimum: int = 0) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(path, f"expected an integer, got {v!r}")
    if v < minimum:
        raise ScenarioError(path, f"must be >= {minimum}, got {v}")
    return v


def _vector(v: Any, path: str, dim: int | None = None) -> np.ndarray:
    if not isinstance(v, (list, tuple)):
        raise ScenarioError(path, f"expected a list of numbers, got {v!r}")
    out = np.array([_number(e, f"{path}[{i}]") for i, e in enumerate(v)], dtype=float)
    if dim is not None and out.shape[0] != dim:
        raise ScenarioError(path, f"expected {dim} entries, got {out.shape[0]}")
    return out


def _auto_or_number(v: Any, path: str) -> float | str:
    if v == AUTO:
        return AUTO
    return _number(v, path, positive=True)


def _choice(v: Any, path: str, allowed) -> str:
    if v not in allowed:
        raise ScenarioError(path, f"expected one of {list(allowed)}, got {v!r}")
    return v


# -- parsing ---------------------------------------------------------------


def _parse_bounds(d: dict, dim: int) -> ControlBounds:
    d = _mapping(d, "bounds")
    if "limit" in d:
        lim = _number(d["limit"], "bounds.limit", positive=True)
        return ControlBounds.symmetric(lim, dim)
    lo = _vector(_req(d, "u_min", "bounds"), "bounds.u_min", dim)
    hi = _vector(_req(d, "u_max", "bounds"), "bounds.u_max", dim)
    if np.any(lo > hi):
        raise ScenarioError("bounds", "u_min must not exceed u_max")
    return ControlBounds(lo, hi)


def _parse_controllers(raw: dict, has_goal: bool) -> tuple[ControllerConfig, ...]:
    entries = raw.get("controllers")
    if entries is None:
        entries = [_req(raw, "controller", "")] if "controller" in raw else []
    if not isinstance(entries, list) or not entries:
        raise ScenarioError("controllers", "expected a non-empty list")
    out = []
    for i, e in enumerate(entries):
        path = f"controllers[{i}]"
        e = _mapping(e, path)
        unknown = set(e) - {"type", "r", "k", "p", "q_exp", "baseline", "label"}
        if unknown:
            raise ScenarioError(path, f"unknown keys {sorted(unknown)}")
        kind = _choice(_req(e, "type", path), f"{path}.type", CONTROLLER_TYPES)
        if kind != "safety-only" and not has_goal:
            raise ScenarioError(f"{path}.type", f"{kind} needs a goal section")
        if kind == "safety-only" and has_goal:
            raise ScenarioError(f"{path}.type", "safety-only controller with a goal section")
        q = _number(e.get("q_exp", 1.0 / 3.0), f"{path}.q_exp")
        if not 0 < q < 1:
            raise ScenarioError(f"{path}.q_exp", f"must lie in (0, 1), got {q}")
        baseline = e.get("baseline", False)
        if not isinstance(baseline, bool):
            raise ScenarioError(f"{path}.baseline", "expected true or false")
        out.append(
            ControllerConfig(
                type=kind,
                r=_auto_or_number(e.get("r", AUTO), f"{path}.r"),
                k=_auto_or_number(e.get("k", AUTO), f"{path}.k"),
                p=_auto_or_number(e.get("p", AUTO), f"{path}.p"),
                q_exp=q,
                baseline=baseline,
                label=str(e.get("label", kind)),
            )
        )
    labels = [c.label for c in out]
    if len(set(labels)) != len(labels):
        raise ScenarioError("controllers", f"labels must be unique, got {labels}")
    return tuple(out)


def _parse_design(d: Any, n: int) -> DesignConfig:
    if d is None:
        return DesignConfig()
    d = _mapping(d, "design")
    mode = _choice(d.get("mode", "initial-state"), "design.mode", DESIGN_MODES)
    box = None
    if "box" in d:
        b = d["box"]
        if not isinstance(b, list) or len(b) != 2:
            raise ScenarioError("design.box", "expected [[lo...], [hi...]]")
        lo, hi = _vector(b[0], "design.box[0]", n), _vector(b[1], "design.box[1]", n)
        if np.any(lo > hi):
            raise ScenarioError("design.box", "lo must not exceed hi")
        box = (tuple(lo), tuple(hi))
    if mode == "sampled" and box is None:
        raise ScenarioError("design.box", "sampled design check needs a bounding box")
    return DesignConfig(
        mode=mode,
        n_samples=_integer(d.get("n_samples", 2000), "design.n_samples", 1),
        seed=_integer(d.get("seed", 0), "design.seed"),
        box=box,
    )


def _random_states(spec: dict, n: int, goal, obstacles, path: str) -> np.ndarray:
    count = _integer(_req(spec, "count", path), f"{path}.count")
    seed = _integer(_req(spec, "seed", path), f"{path}.seed")
    region = spec.get("region", [[-4.0] * n, [4.0] * n])
    if not isinstance(region, list) or len(region) != 2:
        raise ScenarioError(f"{path}.region", "expected [[lo...], [hi...]]")
    lo, hi = _vector(region[0], f"{path}.region[0]", n), _vector(region[1], f"{path}.region[1]", n)
    if np.any(lo >= hi):
        raise ScenarioError(f"{path}.region", "lo must be below hi")
    margin = _number(spec.get("margin", 0.1), f"{path}.margin", nonneg=True)
    rng = np.random.default_rng(seed)
    out: list[np.ndarray] = []
    draws = 0
    while len(out) < count:
        if draws >= 1_000_000:
            raise ScenarioError(path, f"only {len(out)}/{count} admissible states after {draws} draws")
        x = rng.uniform(lo, hi)
        draws += 1
        if goal is not None and not goal(x) < 0:
            continue
        if any(not b(x) > margin for b in obstacles):
            continue
        out.append(x)
    return np.array(out).reshape(count, n)


def _initial_states(raw: Any, n: int, goal, obstacles) -> np.ndarray:
    d = _mapping(raw, "init")
    if ("fixed" in d) == ("random" in d):
        raise ScenarioError("init", "give exactly one of 'fixed' or 'random'")
    if "random" in d:
        states = _random_states(_mapping(d["random"], "init.random"), n, goal, obstacles, "init.random")
    else:
        fixed = d["fixed"]
        if fixed and not isinstance(fixed[0], list):
            fixed = [fixed]
        states = np.array([_vector(x, f"init.fixed[{i}]", n) for i, x in enumerate(fixed)]).reshape(-1, n)
    for i, x in enumerate(states):
        if goal is not None and not goal(x) < 0:
            raise ScenarioError(f"init[{i}]", f"goal constraint already satisfied at {x.tolist()}")
        for b in obstacles:
            if not b(x) > 0:
                raise ScenarioError(f"init[{i}]", f"{x.tolist()} violates {b.name}")
    return states


def parse_scenario(raw: Any, source: str = "<dict>") -> Scenario:
    raw = _mapping(raw, "scenario")
    unknown = set(raw) - _TOP_KEYS - {"controller"}
    if unknown:
        raise ScenarioError("scenario", f"unknown keys {sorted(unknown)}")
    version = _req(raw, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"unsupported version {version!r} (expected {SCHEMA_VERSION})")
    name = str(_req(raw, "name", ""))
    system_name = _choice(_req(raw, "system", ""), "system", SYSTEMS)
    system = single_integrator_2d() if system_name == "single-integrator-2d" else double_integrator_1d()
    n, q = system.state_dim, system.control_dim
    bounds = _parse_bounds(_req(raw, "bounds", ""), q)

    goal = None
    goal_radius = math.nan
    if raw.get("goal") is not None:
        if system_name != "single-integrator-2d":
            raise ScenarioError("goal", "disk goal is only defined for single-integrator-2d")
        g = _mapping(raw["goal"], "goal")
        goal_radius = _number(_req(g, "radius", "goal"), "goal.radius", positive=True)
        goal = goal_disk(_vector(_req(g, "center", "goal"), "goal.center", 2), goal_radius, GOAL_TAG)

    slope = _number(raw.get("safety_slope", 2.0), "safety_slope", positive=True)
    safety: list[HocbfSpec] = []
    obstacles = raw.get("obstacles") or []
    if not isinstance(obstacles, list):
        raise ScenarioError("obstacles", "expected a list")
    if obstacles and system_name != "single-integrator-2d":
        raise ScenarioError("obstacles", "disk obstacles are only defined for single-integrator-2d")
    for i, o in enumerate(obstacles):
        path = f"obstacles[{i}]"
        o = _mapping(o, path)
        c = _vector(_req(o, "center", path), f"{path}.center", 2)
        rad = _number(_req(o, "radius", path), f"{path}.radius", positive=True)
        safety.append(HocbfSpec(obstacle_disk(c, rad, f"b_{len(safety) + 1}"), (slope,)))
    floors = raw.get("floors") or []
    if not isinstance(floors, list):
        raise ScenarioError("floors", "expected a list")
    if floors and system_name != "double-integrator-1d":
        raise ScenarioError("floors", "position floors are only defined for double-integrator-1d")
    for i, fl in enumerate(floors):
        path = f"floors[{i}]"
        fl = _mapping(fl, path)
        limit = _number(fl.get("limit", 0.0), f"{path}.limit")
        slopes = _vector(_req(fl, "slopes", path), f"{path}.slopes", 2)
        if np.any(slopes <= 0):
            raise ScenarioError(f"{path}.slopes", "class-K slopes must be positive")
        safety.append(HocbfSpec(position_floor(limit, f"b_{len(safety) + 1}"), tuple(slopes)))

    controllers = _parse_controllers(raw, goal is not None)
    t_f = _number(_req(raw, "t_f", ""), "t_f", positive=True)
    horizon = _number(raw.get("horizon", t_f), "horizon", positive=True)
    relaxation = _choice(raw.get("relaxation", RELAX_UNIFORM), "relaxation", RELAX_POLICIES)
    s = _mapping(raw.get("sim") or {}, "sim")
    unknown = set(s) - {"dt", "substeps", "constraint_tol", "event_tol"}
    if unknown:
        raise ScenarioError("sim", f"unknown keys {sorted(unknown)}")
    dt = _number(s.get("dt", 0.01), "sim.dt", positive=True)
    if horizon < dt:
        raise ScenarioError("horizon", f"shorter than sim.dt ({dt})")
    sim = SimConfig(
        dt=dt,
        horizon=horizon,
        substeps=_integer(s.get("substeps", 1), "sim.substeps", 1),
        constraint_tol=_number(s.get("constraint_tol", 1e-6), "sim.constraint_tol", nonneg=True),
        event_tol=_number(s.get("event_tol", 1e-6), "sim.event_tol", positive=True),
    )
    states = _initial_states(_req(raw, "init", ""), n, goal, [sp.constraint for sp in safety])
    design = _parse_design(raw.get("design"), n)
    scenario = Scenario(
        name=name,
        system=system,
        system_name=system_name,
        bounds=bounds,
        goal=goal,
        goal_radius=goal_radius,
        safety=tuple(safety),
        controllers=controllers,
        t_f=t_f,
        sim=sim,
        relaxation=relaxation,
        initial_states=states,
        design=design,
        raw=copy.deepcopy(raw),
        source=source,
    )
    # resolve once up front so an empty k-interval is reported at load time
    for _, i, c in scenario.run_plan():
        resolve_controller(scenario, controllers[c], states[i], f"controllers[{c}]", f"init[{i}]")
    return scenario


def resolve_controller(
    sc: Scenario, cfg: ControllerConfig, x0: np.ndarray, path: str, init_path: str = "init"
) -> ResolvedController:
    """Fill in ``auto`` parameters for one initial state."""
    if cfg.type == "safety-only":
        spec = ControllerSpec(None, sc.safety, relaxation=sc.relaxation)
        return ResolvedController(spec, cfg, {})
    h0 = sc.goal(x0)
    if cfg.type == "clbf":
        p = clbf_gain(h0, sc.t_f, cfg.q_exp) if cfg.p == AUTO else float(cfg.p)
        spec = ControllerSpec(ClbfSpec(sc.goal, p, cfg.q_exp), sc.safety, relaxation=sc.relaxation)
        return ResolvedController(spec, cfg, {"p": p, "q_exp": cfg.q_exp})
    r = R_FRACTION * sc.goal_radius**2 if cfg.r == AUTO else float(cfg.r)
    try:
        interval = feasible_k_interval(sc.goal, r, sc.t_f, sc.system, sc.bounds, x0)
    except DomainError as exc:
        raise ScenarioError(f"{path}.r", str(exc)) from None
    if cfg.k == AUTO:
        if not interval.nonempty:
            raise ScenarioError(
                f"{path}.k",
                f"empty k-interval [{interval.k_min:.6g}, {interval.k_max:.6g}] at {init_path} = {x0.tolist()}",
            )
        k = interval.midpoint()
    else:
        k = float(cfg.k)
    spec = FccbfSpec(sc.goal, r, k, sc.t_f)
    if not spec.converges_by_deadline(h0):
        raise ScenarioError(f"{path}.k", f"k = {k:.6g} is below the deadline bound {interval.k_min:.6g} at {init_path}")
    ctrl = ControllerSpec(spec, sc.safety, relaxation=sc.relaxation)
    params = {"r": r, "k": k, "k_min": interval.k_min, "k_max": interval.k_max}
    return ResolvedController(ctrl, cfg, params, interval)


def shipped_scenarios() -> list[str]:
    root = resources.files("fccbf") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def find_scenario(name_or_path: str | Path) -> Path:
    """A file path, or the name of a shipped scenario (with or without ``.yaml``)."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    stem = p.name[: -len(".yaml")] if p.name.endswith(".yaml") else p.name
    shipped = resources.files("fccbf") / "scenarios" / f"{stem}.yaml"
    if shipped.is_file():
        return Path(str(shipped))
    raise ScenarioError("scenario", f"no file {str(p)!r} and no shipped scenario named {stem!r}")


def load_raw(name_or_path: str | Path) -> tuple[dict, str]:
    path = find_scenario(name_or_path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ScenarioError("scenario", f"{path}: not valid YAML ({exc})") from None
    return raw, str(path)


def apply_overrides(raw: dict, seed: int | None = None, dt: float | None = None, count: int | None = None) -> dict:
    raw = copy.deepcopy(raw)
    init = raw.get("init") or {}
    if seed is not None or count is not None:
        if not isinstance(init, dict) or "random" not in init:
            raise ScenarioError("init", "--seed/--count need a random init section")
        if seed is not None:
            init["random"]["seed"] = seed
        if count is not None:
            init["random"]["count"] = count
    if dt is not None:
        raw.setdefault("sim", {})
        if raw["sim"] is None:
            raw["sim"] = {}
        raw["sim"]["dt"] = dt
    return raw


def load_scenario(name_or_path: str | Path, **overrides) -> Scenario:
    raw, source = load_raw(name_or_path)
    return parse_scenario(apply_overrides(raw, **overrides) if overrides else raw, source)
