"""Incident fields: plane waves and point dipoles, their traces, and BIE data.

Convention: time dependence exp(-i k t), eps = mu = 1, so curl E = ik H and
curl H = -ik E.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .quadrature import greens_derivatives
from .surfaces import SurfaceGrid

Array = np.ndarray


@dataclass(frozen=True)
class PlaneWave:
    p: Tuple[float, float, float]
    d: Tuple[float, float, float]
    k: float

    def __post_init__(self):
        p, d = np.asarray(self.p, float), np.asarray(self.d, float)
        if not self.k > 0:
            raise ValueError("wavenumber must be positive")
        if np.linalg.norm(p) == 0:
            raise ValueError("polarization must be nonzero")
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("propagation direction must be a unit vector")
        if abs(p @ d) > 1e-12:
            raise ValueError("polarization must be orthogonal to the direction")

    def fields(self, x: Array) -> Tuple[Array, Array]:
        p, d = np.asarray(self.p, float), np.asarray(self.d, float)
        ph = np.exp(1j * self.k * (np.atleast_2d(x) @ d))[:, None]
        return p * ph, np.cross(d, p) * ph


@dataclass(frozen=True)
class DipoleSource:
    """Point dipole at x0 with moment m.

    electric: H = grad G x m, E = -(1/ik)(hess G m + k^2 G m)
    magnetic: E = grad G x m, H = (1/ik)(hess G m + k^2 G m)
    """

    x0: Tuple[float, float, float]
    m: Tuple[complex, complex, complex]
    k: float
    kind: str = "electric"

    def __post_init__(self):
        if self.kind not in ("electric", "magnetic"):
            raise ValueError("dipole kind must be 'electric' or 'magnetic'")
        if not self.k > 0:
            raise ValueError("wavenumber must be positive")

    def fields(self, x: Array) -> Tuple[Array, Array]:
        return dipole_field_at(self, x)


def _dipole_parts(k: float, x0, m, X: Array, nu: Optional[Array] = None):
    """F1 = grad G x m and F2 = (1/ik)(hess G m + k^2 G m), plus their nu-derivatives."""
    m = np.asarray(m, complex)
    R = np.atleast_2d(X) - np.asarray(x0, float)
    G, g1, g2, g3 = greens_derivatives(k, R)
    Rm = R @ m
    F1 = g1[:, None] * np.cross(R, m)
    F2 = ((g1 + k * k * G)[:, None] * m + (g2 * Rm)[:, None] * R) / (1j * k)
    if nu is None:
        return F1, F2
    Rn = np.sum(R * nu, 1)
    mn = nu @ m
    Hn = g1[:, None] * nu + (g2 * Rn)[:, None] * R  # hess G . nu
    dF1 = np.cross(Hn, m)
    third = g2[:, None] * (m * Rn[:, None] + nu * Rm[:, None] + R * mn[:, None]) + (g3 * Rm * Rn)[:, None] * R
    dF2 = (third + (k * k * g1 * Rn)[:, None] * m) / (1j * k)
    return F1, F2, dF1, dF2


def dipole_field_at(src: DipoleSource, targets: Array) -> Tuple[Array, Array]:
    F1, F2 = _dipole_parts(src.k, src.x0, src.m, targets)
    return (-F2, F1) if src.kind == "electric" else (F1, F2)


def dipole_normal_derivatives(src: DipoleSource, X: Array, nu: Array):
    """(E, H, d_nu E, d_nu H) at points X with directions nu."""
    F1, F2, dF1, dF2 = _dipole_parts(src.k, src.x0, src.m, X, nu)
    if src.kind == "electric":
        return -F2, F1, -dF2, dF1
    return F1, F2, dF1, dF2


def fd_jacobian(fun: Callable[[Array], Array], X: Array, h: float) -> Array:
    """Fourth-order centred differences: J[n, i, l] = d fun_i / d x_l at X[n]."""
    X = np.atleast_2d(np.asarray(X, float))
    cols = []
    for l in range(3):
        e = np.zeros(3)
        e[l] = h
        cols.append((-fun(X + 2 * e) + 8 * fun(X + e) - 8 * fun(X - e) + fun(X - 2 * e)) / (12 * h))
    return np.stack(cols, -1)


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


@dataclass
class IncidentTraces:
    """Blocked 3N traces of the incident pair (E, H).

    ``regular_inside`` is False for sources inside the scatterer; such fields
    radiate into the exterior and need the scattered-field form of the data.
    """

    gE: Array
    dE: Array
    gH: Array
    dH: Array
    regular_inside: bool = True
    source: object = None

    def scale(self, c: complex) -> "IncidentTraces":
        return IncidentTraces(c * self.gE, c * self.dE, c * self.gH, c * self.dH, self.regular_inside, self.source)

    def __add__(self, other: "IncidentTraces") -> "IncidentTraces":
        if self.regular_inside != other.regular_inside:
            raise ValueError("cannot mix regular and radiating incident traces")
        return IncidentTraces(self.gE + other.gE, self.dE + other.dE, self.gH + other.gH, self.dH + other.dH,
                              self.regular_inside, None)

    def fields_at(self, targets: Array) -> Tuple[Array, Array]:
        if self.source is None:
            raise ValueError("traces carry no source description")
        return self.source.fields(targets)


def _blk(v: Array) -> Array:
    return np.ascontiguousarray(v.T).reshape(-1)


def planewave_traces(pw: PlaneWave, grid: SurfaceGrid) -> IncidentTraces:
    E, H = pw.fields(grid.points)
    fac = (1j * pw.k * (grid.normals @ np.asarray(pw.d, float)))[:, None]
    return IncidentTraces(_blk(E), _blk(fac * E), _blk(H), _blk(fac * H), True, pw)


def point_inside(grid: SurfaceGrid, x: Array) -> Array:
    """Gauss integral D0[1](x): -1 inside the body, 0 outside (smooth quadrature)."""
    x = np.atleast_2d(x)
    R = x[:, None, :] - grid.points[None]
    r = np.linalg.norm(R, axis=-1)
    val = np.sum(np.sum(R * grid.normals[None], -1) / (4 * np.pi * r**3) * grid.weights, 1)
    return val < -0.5


def dipole_traces(src: DipoleSource, grid: SurfaceGrid, check: bool = True) -> IncidentTraces:
    if check:
        dist = np.min(np.linalg.norm(grid.points - np.asarray(src.x0, float), axis=1))
        if not point_inside(grid, np.asarray(src.x0, float))[0]:
            raise ValueError("dipole must lie inside the scatterer")
        if dist <= 0.1 * grid.diameter():
            raise ValueError("dipole too close to the surface")
    E, H, dE, dH = dipole_normal_derivatives(src, grid.points, grid.normals)
    return IncidentTraces(_blk(E), _blk(dE), _blk(H), _blk(dH), False, src)


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------


def rhs(formulation: str, traces: IncidentTraces, eta: float) -> Array:
    """f = -d_nu E^i - i eta gamma E^i (electric), g = -d_nu H^i - i eta gamma H^i (magnetic)."""
    if eta == 0:
        raise ValueError("coupling parameter must be nonzero")
    if formulation in ("DE", "RDE"):
        return -traces.dE - 1j * eta * traces.gE
    if formulation in ("DM", "RDM"):
        return -traces.dH - 1j * eta * traces.gH
    raise ValueError(f"unknown formulation {formulation!r}")
