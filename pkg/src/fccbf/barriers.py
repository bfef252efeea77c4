"""Barrier formulations as linear half-spaces in control space.

Every builder returns a :class:`LinearControlConstraint` ``coeff . u + offset >= 0``
evaluated at the current state, so the QP assembly does not care which
formulation produced a row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .model import ConstraintFunction, SystemModel, as_state, lie_f, lie_g


@dataclass(frozen=True)
class LinearControlConstraint:
    coeff: np.ndarray
    offset: float
    tag: str = ""

    def __post_init__(self):
        coeff = np.asarray(self.coeff, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(coeff)) and math.isfinite(self.offset)):
            raise ConfigurationError(f"row {self.tag!r} has non-finite entries")
        object.__setattr__(self, "coeff", coeff)
        object.__setattr__(self, "offset", float(self.offset))

    def residual(self, u) -> float:
        return float(self.coeff @ np.asarray(u, dtype=float) + self.offset)


@dataclass(frozen=True)
class HocbfSpec:
    """Barrier ``b`` with one linear class-K gain per order."""

    constraint: ConstraintFunction
    slopes: tuple[float, ...]

    def __post_init__(self):
        slopes = tuple(float(a) for a in np.atleast_1d(self.slopes))
        if any(not a > 0 for a in slopes):
            raise ConfigurationError(f"{self.constraint.name}: class-K slopes must be positive, got {slopes}")
        object.__setattr__(self, "slopes", slopes)


@dataclass(frozen=True)
class ClbfSpec:
    constraint: ConstraintFunction
    p: float
    q_exp: float = 1.0 / 3.0

    def __post_init__(self):
        if not self.p > 0:
            raise ConfigurationError(f"CLBF gain p must be positive, got {self.p}")
        if not 0 < self.q_exp < 1:
            raise ConfigurationError(f"CLBF exponent must lie in (0, 1), got {self.q_exp}")


@dataclass(frozen=True)
class FccbfSpec:
    """Strengthened goal constraint ``s = h - r`` with exponential gain ``k``."""

    constraint: ConstraintFunction
    r: float
    k: float
    t_f: float

    def __post_init__(self):
        if not self.r > 0:
            raise ConfigurationError(f"strengthening margin r must be positive, got {self.r}")
        if not self.k > 0:
            raise ConfigurationError(f"gain k must be positive, got {self.k}")
        if not self.t_f > 0:
            raise ConfigurationError(f"deadline t_f must be positive, got {self.t_f}")

    def converges_by_deadline(self, h0: float) -> bool:
        """``r >= (r - h0) exp(-k t_f)``, up to rounding so that ``k = k_min`` qualifies."""
        return self.r >= (self.r - h0) * math.exp(-self.k * self.t_f) * (1.0 - 1e-12)

    def validate_start(self, x0) -> None:
        h0 = self.constraint(as_state(x0))
        if not h0 < 0:
            raise ConfigurationError(f"goal constraint already satisfied at x0 (h = {h0:.6g})")
        if not self.converges_by_deadline(h0):
            raise ConfigurationError(
                f"r={self.r:.6g}, k={self.k:.6g} cannot reach h >= 0 by t_f={self.t_f:.6g} from h0={h0:.6g}"
            )


def signed_pow(v: float, q: float) -> float:
    """``sign(v) |v|^q``, the odd extension of a fractional power."""
    return math.copysign(abs(v) ** q, v) if v != 0 else 0.0


def clbf_gain(h0: float, t_f: float, q_exp: float = 1.0 / 3.0) -> float:
    """Gain that makes the CLBF settling-time bound equal ``t_f``.

    Uses ``|h0|`` because ``h0 < 0`` for an initially violated constraint.
    """
    if not t_f > 0:
        raise ConfigurationError(f"t_f must be positive, got {t_f}")
    return abs(h0) ** (1.0 - q_exp) / (t_f * (1.0 - q_exp))


def _require_degree_one(c: ConstraintFunction, what: str) -> None:
    if c.relative_degree != 1:
        raise ConfigurationError(f"{what} needs relative degree 1, {c.name} has {c.relative_degree}")


def build_cbf(b: ConstraintFunction, slope: float, sys: SystemModel, x, tag: str | None = None) -> LinearControlConstraint:
    _require_degree_one(b, "CBF")
    if not slope > 0:
        raise ConfigurationError(f"class-K slope must be positive, got {slope}")
    x = as_state(x, sys.state_dim)
    return LinearControlConstraint(lie_g(b, sys, x), lie_f(b, sys, x) + slope * b(x), tag or b.name)


def hocbf_weights(slopes: Sequence[float]) -> np.ndarray:
    """Coefficients ``w`` with ``psi_{m-1} = sum_j w_j L_f^j b`` for linear gains.

    ``psi_i = d/dt psi_{i-1} + a_i psi_{i-1}`` shifts the weights up one order
    and adds ``a_i`` times the previous ones.
    """
    w = np.array([1.0])
    for a in slopes[:-1]:
        nxt = np.zeros(w.shape[0] + 1)
        nxt[1:] += w
        nxt[:-1] += a * w
        w = nxt
    return w


def build_hocbf(spec: HocbfSpec, sys: SystemModel, x, tag: str | None = None) -> LinearControlConstraint:
    b = spec.constraint
    m = b.relative_degree
    if len(spec.slopes) != m:
        raise ConfigurationError(f"{b.name}: {len(spec.slopes)} slopes given for relative degree {m}")
    x = as_state(x, sys.state_dim)
    chain = b.lie_chain()
    weights = hocbf_weights(spec.slopes)
    f, g = sys.f(x), sys.g(x)

    psi = 0.0
    lf_psi = 0.0
    lg_psi = np.zeros(sys.control_dim)
    for w, (value, gradient) in zip(weights, chain):
        grad = np.asarray(gradient(x), dtype=float).reshape(-1)
        psi += w * float(value(x))
        lf_psi += w * float(grad @ f)
        lg_psi = lg_psi + w * (grad @ g)
    return LinearControlConstraint(lg_psi, lf_psi + spec.slopes[-1] * psi, tag or b.name)


def build_clbf(spec: ClbfSpec, sys: SystemModel, x, tag: str | None = None) -> LinearControlConstraint:
    b = spec.constraint
    _require_degree_one(b, "CLBF")
    x = as_state(x, sys.state_dim)
    term = spec.p * signed_pow(b(x), spec.q_exp)
    return LinearControlConstraint(lie_g(b, sys, x), lie_f(b, sys, x) + term, tag or b.name)


def build_fccbf(spec: FccbfSpec, sys: SystemModel, x, tag: str | None = None) -> LinearControlConstraint:
    h = spec.constraint
    _require_degree_one(h, "FCCBF")
    x = as_state(x, sys.state_dim)
    s = h(x) - spec.r
    return LinearControlConstraint(lie_g(h, sys, x), lie_f(h, sys, x) + spec.k * s, tag or h.name)
