"""Fields from solved densities: representation formulas, divergence, charges,
surface currents and Stratton-Chu reconstruction, plus the error measures."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np

from .operators import to_nodal
from .quadrature import QuadConfig, check_targets, greens_derivatives, potential_derivatives
from .surfaces import SurfaceGrid

Array = np.ndarray


def fibonacci_sphere(n: int = 100, radius: float = 5.0, center=(0.0, 0.0, 0.0)) -> Array:
    """Approximately uniform points on a sphere (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rxy = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    pts = np.column_stack([rxy * np.cos(phi), rxy * np.sin(phi), z])
    return radius * pts + np.asarray(center, float)


@dataclass
class TargetSet:
    points: Array

    @staticmethod
    def default() -> "TargetSet":
        return TargetSet(fibonacci_sphere(100, 5.0))

    def validate(self, grid: SurfaceGrid, cfg: Optional[QuadConfig] = None) -> None:
        if not np.all(check_targets(grid, self.points, cfg)):
            raise ValueError("target set contains points too close to the surface")


# ---------------------------------------------------------------------------
# Representation formula
# ---------------------------------------------------------------------------


def representation(k: float, grid: SurfaceGrid, gamma: Array, dnu: Array, targets: Array,
                   cfg: Optional[QuadConfig] = None, check: bool = True):
    """F = D[gamma] - S[dnu] with its divergence and grad-divergence at targets."""
    Fd, dd, gd = potential_derivatives("double", k, grid, to_nodal(gamma), targets, cfg, check)
    Fs, ds, gs = potential_derivatives("single", k, grid, to_nodal(dnu), targets, cfg, check)
    return Fd - Fs, dd - ds, gd - gs


def scattered_field(formulation: str, traces: Tuple[Array, Array], k: float, grid: SurfaceGrid, targets: Array,
                    cfg: Optional[QuadConfig] = None) -> Array:
    """E^s (electric formulations) or H^s (magnetic) from representation traces."""
    if formulation not in ("DE", "RDE", "DM", "RDM"):
        raise ValueError(f"unknown formulation {formulation!r}")
    return representation(k, grid, traces[0], traces[1], targets, cfg)[0]


def divergence_at(traces: Tuple[Array, Array], k: float, grid: SurfaceGrid, targets: Array,
                  cfg: Optional[QuadConfig] = None) -> Array:
    return representation(k, grid, traces[0], traces[1], targets, cfg)[1]


def divergence_correction(F: Array, div: Array, grad_div: Array, k: float, scale: float = 1.0) -> Array:
    """F + grad div F / k^2; skipped (with a warning) when k^2 <= 1e-8 * scale."""
    if k * k <= 1e-8 * scale:
        warnings.warn("wavenumber too small for the divergence correction; field left unchanged")
        return F
    return F + grad_div / (k * k)


def charges(gamma_total: Array, gamma_incident: Array, grid: SurfaceGrid) -> Array:
    """q_j = integral over Gamma_j of nu . (gamma E - gamma E^i)."""
    gs = to_nodal(gamma_total - gamma_incident)
    vals = np.sum(grid.normals * gs, 1) * grid.weights
    return np.array([np.sum(vals[grid.component == j]) for j in range(grid.n_components)])


# ---------------------------------------------------------------------------
# Surface currents and Stratton-Chu
# ---------------------------------------------------------------------------


def surface_current(psi: Array, grid: SurfaceGrid) -> Array:
    """J = nu x P_t psi, as (N, 3)."""
    p = to_nodal(psi)
    nu = grid.normals
    pt = p - nu * np.sum(nu * p, 1)[:, None]
    return np.cross(nu, pt)


def strattonchu(J: Array, k: float, grid: SurfaceGrid, targets: Array, cfg: Optional[QuadConfig] = None,
                check: bool = True):
    """H^s = curl S[J], E^s = -(1/ik) curl curl S[J], with analytic divergences of both."""
    targets = np.atleast_2d(np.asarray(targets, float))
    if check and not np.all(check_targets(grid, targets, cfg)):
        raise ValueError("target too close to the surface for smooth quadrature")
    Jw = J * grid.weights[:, None]
    M = targets.shape[0]
    H = np.zeros((M, 3), complex)
    E = np.zeros((M, 3), complex)
    divH = np.zeros(M, complex)
    divE = np.zeros(M, complex)
    step = max(1, 1_000_000 // grid.N)
    for t0 in range(0, M, step):
        sl = slice(t0, min(M, t0 + step))
        R = targets[sl, None, :] - grid.points[None]
        G, g1, g2, g3 = greens_derivatives(k, R)
        RJ = np.einsum("tni,ni->tn", R, Jw)
        RxJ = np.cross(R, Jw[None])
        H[sl] = np.einsum("tn,tni->ti", g1, RxJ)
        # curl curl S[J] = grad div S[J] + k^2 S[J]
        ccs = g1 @ Jw + np.einsum("tn,tni->ti", g2 * RJ, R) + k * k * (G @ Jw)
        E[sl] = -ccs / (1j * k)
        # div(g1 R x J) = g2 R.(R x J); both divergences vanish up to rounding
        divH[sl] = np.sum(g2 * np.einsum("tni,tni->tn", R, RxJ), 1)
        # div curl curl S[J] = sum (5 g2 + g3 r^2 + k^2 g1) R.J
        r2 = np.sum(R * R, -1)
        divE[sl] = -np.sum((5 * g2 + g3 * r2 + k * k * g1) * RJ, 1) / (1j * k)
    return E, H, divE, divH


def currents_and_strattonchu(psi: Array, k: float, grid: SurfaceGrid, targets: Array,
                             cfg: Optional[QuadConfig] = None, incident=None):
    """Surface current J = nu x P_t psi and the Stratton-Chu fields (E^s, H^s).

    psi is the total magnetic density. For incidence radiating from inside the
    body the curls reproduce the total exterior field, so the incident field is
    subtracted at the targets.
    """
    J = surface_current(psi, grid)
    E, H, _, _ = strattonchu(J, k, grid, targets, cfg)
    if incident is not None and not incident.regular_inside:
        Ei, Hi = incident.fields_at(targets)
        E, H = E - Ei, H - Hi
    return J, E, H


# ---------------------------------------------------------------------------
# Error measures
# ---------------------------------------------------------------------------


def relative_field_error(F: Array, Fref: Array) -> float:
    return float(np.max(np.linalg.norm(F - Fref, axis=1) / np.linalg.norm(Fref, axis=1)))


def relative_divergence(F: Array, div: Array) -> float:
    return float(np.max(np.abs(div) / np.linalg.norm(F, axis=1)))


@dataclass
class ErrorReport:
    e_F: float
    e_divF: float
    q: List[float]
    iterations: int
    N: int
    h: float
    p: int
    converged: bool = True

    @property
    def q_max(self) -> float:
        return float(max(self.q)) if self.q else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["q_max"] = self.q_max
        return d


def evaluate_solution(sol, grid: SurfaceGrid, targets: Array, reference: Optional[Array] = None,
                      cfg: Optional[QuadConfig] = None) -> Tuple[ErrorReport, Array, Array]:
    """Field, divergence and error report of a Solution at targets."""
    k = sol.params.k
    g, d = sol.representation_traces()
    F, div, _ = representation(k, grid, g, d, targets, cfg)
    eF = relative_field_error(F, reference) if reference is not None else float("nan")
    q: List[float] = []
    if sol.params.electric:
        q = [float(abs(v)) for v in charges(sol.gamma, sol.incident.gE, grid)]
    rep = ErrorReport(eF, relative_divergence(F, div), q, sol.report.iterations, grid.N, grid.h, grid.p,
                      sol.report.converged)
    return rep, F, div
