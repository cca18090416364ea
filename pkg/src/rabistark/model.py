"""Mean-field Rabi-Stark model: parameters, phase points and the classical
Hamiltonian with its exact gradient.

Phase-space coordinates are ``(q1, p1, q2, p2)``: ``(q1, p1)`` parametrise the
Bloch sphere of the two-level atom on the open disk ``q1^2 + p1^2 < 2`` and
``(q2, p2)`` are the field quadratures.  With ``r = q1^2 + p1^2`` and
``rho = q2^2 + p2^2`` the Hamiltonian reads::

    H = 1/2 [ (r - 1)(U rho + omega) + omega0 rho ] + g q1 q2 sqrt(4 - 2 r)

The integrator works in Bloch-vector form ``(X, Y, Z, q2, p2)`` with
``X = q1 sqrt(2 - r)``, ``Y = -p1 sqrt(2 - r)``, ``Z = r - 1``.  That chart
covers the north pole ``r = 2`` where the ``(q1, p1)`` equations of motion are
singular, and the flow there is a polynomial vector field::

    H = 1/2 [ Z (U rho + omega) + omega0 rho ] + sqrt(2) g q2 X

with brackets ``{X, Y} = 2Z`` (cyclic).  The jitted kernels at the bottom are
shared with :mod:`rabistark.rk`.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass

import numba
import numpy as np

from .errors import DegenerateSectionError, InvalidPointError, SingularityError

#: Default margin on ``q1^2 + p1^2 <= 2 - BOUNDARY_MARGIN`` for the equations of motion.
BOUNDARY_MARGIN = 1e-9
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ModelParams:
    """Physical couplings shared by the quantum and semiclassical models."""

    omega: float
    omega0: float
    g: float
    U: float

    def __post_init__(self):
        for name in ("omega", "omega0", "g", "U"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if not self.omega0 > 0:
            raise ValueError(f"omega0 must be > 0, got {self.omega0}")
        if self.g < 0:
            raise ValueError(f"g must be >= 0, got {self.g}")

    def as_array(self) -> np.ndarray:
        return np.array([self.omega, self.omega0, self.g, self.U], dtype=np.float64)

    def replace(self, **kw) -> "ModelParams":
        d = dict(omega=self.omega, omega0=self.omega0, g=self.g, U=self.U)
        d.update(kw)
        return ModelParams(**d)


@dataclass(frozen=True)
class PhasePoint:
    q1: float
    p1: float
    q2: float
    p2: float

    def __post_init__(self):
        if not self.bloch_r2 < 2.0:
            raise InvalidPointError(
                f"q1^2 + p1^2 = {self.bloch_r2!r} must be < 2 for point {astuple(self)}"
            )

    @property
    def bloch_r2(self) -> float:
        return self.q1 * self.q1 + self.p1 * self.p1

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, y) -> "PhasePoint":
        return cls(float(y[0]), float(y[1]), float(y[2]), float(y[3]))

    def __iter__(self):
        return iter(astuple(self))


def _as_point(pt) -> PhasePoint:
    return pt if isinstance(pt, PhasePoint) else PhasePoint(*map(float, pt))


def hcl_energy(params: ModelParams, pt) -> float:
    """Semiclassical energy ``H_cl`` at ``pt``.

    Raises :class:`InvalidPointError` when ``q1^2 + p1^2 >= 2``.
    """
    pt = _as_point(pt)
    return float(_hcl(params.as_array(), pt.as_array()))


def eom_rhs(params: ModelParams, pt, margin: float = BOUNDARY_MARGIN) -> "PhaseVelocity":
    """Hamilton's equations ``(dq1, dp1, dq2, dp2)/dt`` at ``pt``.

    The derivative of the coupling term diverges on the Bloch boundary, so
    points with ``q1^2 + p1^2 > 2 - margin`` raise :class:`SingularityError`.
    """
    y = np.asarray(tuple(pt), dtype=np.float64)
    r = y[0] * y[0] + y[1] * y[1]
    if r > 2.0 - margin:
        raise SingularityError(f"q1^2 + p1^2 = {r!r} within margin {margin} of the Bloch boundary")
    out = np.empty(4)
    _rhs(params.as_array(), y, out)
    return PhaseVelocity(*out.tolist())


@dataclass(frozen=True)
class PhaseVelocity:
    """Time derivative of a :class:`PhasePoint`; not bound by the Bloch domain."""

    q1: float
    p1: float
    q2: float
    p2: float

    def __iter__(self):
        return iter(astuple(self))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


def section_denominator(params: ModelParams, q1: float, p1: float) -> float:
    return params.omega0 + params.U * (q1 * q1 + p1 * p1 - 1.0)


def solve_p2_on_section(params: ModelParams, E: float, q1: float, p1: float) -> float | None:
    """Positive ``p2`` with ``H_cl(q1, p1, 0, p2) = E``, or ``None`` off the surface.

    Raises :class:`DegenerateSectionError` if ``omega0 + U(q1^2 + p1^2 - 1)``
    vanishes, which is distinct from the point simply lying off the surface.
    """
    r = q1 * q1 + p1 * p1
    if not r < 2.0:
        raise InvalidPointError(f"q1^2 + p1^2 = {r!r} must be < 2")
    den = params.omega0 + params.U * (r - 1.0)
    if den == 0.0:
        raise DegenerateSectionError(f"section denominator vanishes at (q1, p1) = ({q1}, {p1})")
    num = 2.0 * E - (r - 1.0) * params.omega
    p2sq = num / den
    if p2sq < 0.0:
        return None
    p2 = math.sqrt(p2sq)
    # one Newton step on H(p2) - E tightens the round trip to machine precision
    f = 0.5 * ((r - 1.0) * (p2 * p2 * params.U + params.omega) + p2 * p2 * params.omega0) - E
    if p2 > 0.0:
        p2 -= f / (p2 * den)
    return p2


@numba.njit(cache=True, nogil=True)
def _hcl(par, y):
    w, w0, g, U = par[0], par[1], par[2], par[3]
    q1, p1, q2, p2 = y[0], y[1], y[2], y[3]
    r = q1 * q1 + p1 * p1
    rho = q2 * q2 + p2 * p2
    return 0.5 * ((r - 1.0) * (rho * U + w) + rho * w0) + g * q1 * q2 * math.sqrt(4.0 - 2.0 * r)


@numba.njit(cache=True, nogil=True)
def _rhs(par, y, out):
    w, w0, g, U = par[0], par[1], par[2], par[3]
    q1, p1, q2, p2 = y[0], y[1], y[2], y[3]
    r = q1 * q1 + p1 * p1
    rho = q2 * q2 + p2 * p2
    s = math.sqrt(4.0 - 2.0 * r)
    a = w + U * rho
    b = w0 + U * (r - 1.0)
    # dH/dp1, -dH/dq1, dH/dp2, -dH/dq2
    out[0] = p1 * a - 2.0 * g * q1 * p1 * q2 / s
    out[1] = -q1 * a - g * q2 * (s * s - 2.0 * q1 * q1) / s
    out[2] = p2 * b
    out[3] = -q2 * b - g * q1 * s


@numba.njit(cache=True, nogil=True)
def _rhs_bloch(par, y, out):
    w, w0, g, U = par[0], par[1], par[2], par[3]
    X, Y, Z, q2, p2 = y[0], y[1], y[2], y[3], y[4]
    a = w + U * (q2 * q2 + p2 * p2)
    b = w0 + U * Z
    c = 2.0 * SQRT2 * g * q2
    out[0] = -Y * a
    out[1] = X * a - c * Z
    out[2] = c * Y
    out[3] = p2 * b
    out[4] = -q2 * b - SQRT2 * g * X


@numba.njit(cache=True, nogil=True)
def _hcl_bloch(par, y):
    w, w0, g, U = par[0], par[1], par[2], par[3]
    rho = y[3] * y[3] + y[4] * y[4]
    return 0.5 * (y[2] * (U * rho + w) + w0 * rho) + SQRT2 * g * y[3] * y[0]


@numba.njit(cache=True, nogil=True)
def _to_bloch(y, out):
    r = y[0] * y[0] + y[1] * y[1]
    s = math.sqrt(2.0 - r)
    out[0] = y[0] * s
    out[1] = -y[1] * s
    out[2] = r - 1.0
    out[3] = y[2]
    out[4] = y[3]


@numba.njit(cache=True, nogil=True)
def _from_bloch(y, out):
    X, Y, Z = y[0], y[1], y[2]
    if Z < 0.0:
        f = 1.0 / math.sqrt(1.0 - Z)
    else:
        # 1 - Z = (X^2 + Y^2) / (1 + Z) on the sphere; avoids cancellation near the pole
        rxy = math.sqrt(X * X + Y * Y)
        f = math.sqrt(1.0 + Z) / rxy if rxy > 0.0 else 0.0
    out[0] = X * f
    out[1] = -Y * f
    out[2] = y[3]
    out[3] = y[4]


def to_bloch(pt) -> np.ndarray:
    """``(q1, p1, q2, p2) -> (X, Y, Z, q2, p2)``."""
    out = np.empty(5)
    _to_bloch(np.asarray(tuple(pt), dtype=np.float64), out)
    return out


def from_bloch(y) -> np.ndarray:
    """Inverse of :func:`to_bloch` for points on the unit Bloch sphere."""
    out = np.empty(4)
    _from_bloch(np.asarray(y, dtype=np.float64), out)
    return out
