"""Control-affine systems, control bounds and differentiable constraint functions."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

StateFn = Callable[[np.ndarray], np.ndarray]
ScalarFn = Callable[[np.ndarray], float]

ZERO_TOL = 1e-9


def as_state(x, n: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise ConfigurationError(f"expected a length-{n} vector, got length {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"non-finite entries in {arr!r}")
    return arr


@dataclass(frozen=True)
class SystemModel:
    """Dynamics ``xdot = f(x) + g(x) u``."""

    state_dim: int
    control_dim: int
    drift: StateFn
    actuation: StateFn
    name: str = "system"

    def __post_init__(self):
        if self.state_dim < 1 or self.control_dim < 1:
            raise ConfigurationError("state_dim and control_dim must be positive")

    def f(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.drift(x), dtype=float).reshape(-1)
        if out.shape != (self.state_dim,):
            raise ConfigurationError(f"{self.name}: drift returned shape {out.shape}")
        return out

    def g(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.actuation(x), dtype=float).reshape(self.state_dim, -1)
        if out.shape != (self.state_dim, self.control_dim):
            raise ConfigurationError(f"{self.name}: actuation returned shape {out.shape}")
        return out

    def xdot(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.f(x) + self.g(x) @ u


@dataclass(frozen=True)
class ControlBounds:
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.u_min, dtype=float).reshape(-1)
        hi = np.asarray(self.u_max, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ConfigurationError("u_min and u_max differ in length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ConfigurationError("NaN in control bounds")
        if np.any(lo > hi):
            raise ConfigurationError(f"u_min {lo} exceeds u_max {hi}")
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)

    @property
    def dim(self) -> int:
        return self.u_min.shape[0]

    @classmethod
    def symmetric(cls, limit: Sequence[float] | float, dim: int | None = None) -> "ControlBounds":
        lim = np.atleast_1d(np.asarray(limit, dtype=float))
        if dim is not None and lim.shape[0] == 1:
            lim = np.repeat(lim, dim)
        return cls(-lim, lim)

    @classmethod
    def unbounded(cls, dim: int) -> "ControlBounds":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    def clamp(self, u: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(u, self.u_min), self.u_max)

    def violation(self, u: np.ndarray) -> float:
        """Largest amount by which ``u`` leaves the box (0 when inside)."""
        u = np.asarray(u, dtype=float)
        return float(max(0.0, np.max(self.u_min - u), np.max(u - self.u_max)))

    def box_max(self, row: np.ndarray) -> float:
        """max over the box of ``row . u``, picking the bound by the sign of each entry."""
        total = 0.0
        for a, lo, hi in zip(row, self.u_min, self.u_max):
            if a > 0:
                total += a * hi
            elif a < 0:
                total += a * lo
        return float(total)


@dataclass(frozen=True)
class ConstraintFunction:
    """Scalar state function with analytic gradient.

    ``higher_lie_derivatives`` holds ``(value, gradient)`` evaluator pairs for
    ``L_f^i c`` with ``i = 1 .. m-1``; it is required only when the relative
    degree ``m`` exceeds one.
    """

    value: ScalarFn
    gradient: StateFn
    relative_degree: int = 1
    higher_lie_derivatives: tuple[tuple[ScalarFn, StateFn], ...] = field(default_factory=tuple)
    name: str = "c"

    def __post_init__(self):
        if self.relative_degree < 1:
            raise ConfigurationError(f"{self.name}: relative degree must be >= 1")
        object.__setattr__(self, "higher_lie_derivatives", tuple(self.higher_lie_derivatives))

    def __call__(self, x: np.ndarray) -> float:
        return float(self.value(x))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.gradient(x), dtype=float).reshape(-1)

    def lie_chain(self) -> list[tuple[ScalarFn, StateFn]]:
        """``[(L_f^0 c, grad), ..., (L_f^{m-1} c, grad)]``."""
        m = self.relative_degree
        if len(self.higher_lie_derivatives) < m - 1:
            raise ConfigurationError(
                f"{self.name}: relative degree {m} needs {m - 1} higher Lie-derivative "
                f"evaluators, got {len(self.higher_lie_derivatives)}"
            )
        return [(self.value, self.gradient), *self.higher_lie_derivatives[: m - 1]]


def _grad_checked(grad: np.ndarray, sys: SystemModel) -> np.ndarray:
    if grad.shape != (sys.state_dim,):
        raise ConfigurationError(f"gradient has shape {grad.shape}, system has n={sys.state_dim}")
    return grad


def lie_f(c: ConstraintFunction, sys: SystemModel, x) -> float:
    x = as_state(x, sys.state_dim)
    return float(_grad_checked(c.grad(x), sys) @ sys.f(x))


def lie_g(c: ConstraintFunction, sys: SystemModel, x) -> np.ndarray:
    x = as_state(x, sys.state_dim)
    return _grad_checked(c.grad(x), sys) @ sys.g(x)


def _lie_g_chain(c: ConstraintFunction, sys: SystemModel, x: np.ndarray) -> list[np.ndarray]:
    rows = []
    for _, grad in c.lie_chain():
        gv = np.asarray(grad(x), dtype=float).reshape(-1)
        rows.append(_grad_checked(gv, sys) @ sys.g(x))
    return rows


def degenerate_samples(c: ConstraintFunction, sys: SystemModel, samples) -> list[int]:
    """Indices of samples where ``L_g L_f^{m-1} c`` vanishes (control authority lost)."""
    out = []
    for i, x in enumerate(samples):
        x = as_state(x, sys.state_dim)
        if np.max(np.abs(_lie_g_chain(c, sys, x)[-1])) < ZERO_TOL:
            out.append(i)
    return out


def check_relative_degree(c: ConstraintFunction, sys: SystemModel, samples) -> bool:
    """Sample-based check of the declared relative degree.

    Fails if the control shows up before order ``m`` at any sample. Samples
    where it is absent at order ``m`` are flagged with a warning rather than
    failing the check, unless every sample is degenerate.
    """
    samples = list(samples)
    if not samples:
        raise ConfigurationError("check_relative_degree needs at least one sample")
    degenerate = 0
    for x in samples:
        x = as_state(x, sys.state_dim)
        chain = _lie_g_chain(c, sys, x)
        if any(np.max(np.abs(row)) >= ZERO_TOL for row in chain[:-1]):
            return False
        if np.max(np.abs(chain[-1])) < ZERO_TOL:
            degenerate += 1
            logger.warning("%s: control authority vanishes at sample %s", c.name, x)
    return degenerate < len(samples)


# --- built-in model library -------------------------------------------------

def single_integrator_2d() -> SystemModel:
    """Planar robot ``xdot = u1, ydot = u2``."""
    return SystemModel(
        state_dim=2,
        control_dim=2,
        drift=lambda x: np.zeros(2),
        actuation=lambda x: np.eye(2),
        name="single-integrator-2d",
    )


def double_integrator_1d() -> SystemModel:
    """State ``(position, velocity)``, control is acceleration."""
    return SystemModel(
        state_dim=2,
        control_dim=1,
        drift=lambda x: np.array([x[1], 0.0]),
        actuation=lambda x: np.array([[0.0], [1.0]]),
        name="double-integrator-1d",
    )


def goal_disk(center, radius: float, name: str = "h") -> ConstraintFunction:
    """``h(p) = R^2 - |p - c|^2``; non-negative inside the disk."""
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2
    if radius <= 0:
        raise ConfigurationError(f"{name}: radius must be positive")

    def value(x):
        d = x[:2] - c
        return r2 - float(d @ d)

    def gradient(x):
        return -2.0 * (x[:2] - c)

    return ConstraintFunction(value, gradient, 1, name=name)


def obstacle_disk(center, radius: float, name: str = "b") -> ConstraintFunction:
    """``b(p) = |p - c|^2 - R^2``; non-negative outside the disk."""
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2
    if radius <= 0:
        raise ConfigurationError(f"{name}: radius must be positive")

    def value(x):
        d = x[:2] - c
        return float(d @ d) - r2

    def gradient(x):
        return 2.0 * (x[:2] - c)

    return ConstraintFunction(value, gradient, 1, name=name)


def position_floor(limit: float = 0.0, name: str = "b") -> ConstraintFunction:
    """``b(x, v) = x - limit`` on the double integrator; relative degree two."""
    return ConstraintFunction(
        value=lambda x: float(x[0] - limit),
        gradient=lambda x: np.array([1.0, 0.0]),
        relative_degree=2,
        higher_lie_derivatives=((lambda x: float(x[1]), lambda x: np.array([0.0, 1.0])),),
        name=name,
    )
