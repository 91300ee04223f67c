"""GMRES, formulation solves and trace recovery."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg as sla

from .incident import IncidentTraces, rhs
from .operators import (BoundaryOperator, FormulationParams, OperatorMatrices, build_system, normal_projector_blocks)
from .surfaces import SurfaceGrid

Array = np.ndarray


@dataclass(frozen=True)
class SolveConfig:
    method: str = "gmres"
    tol: float = 1e-6
    maxiter: int = 500

    def __post_init__(self):
        if self.method not in ("gmres", "direct"):
            raise ValueError("method must be 'gmres' or 'direct'")
        if not (0 < self.tol < 1):
            raise ValueError("tol must lie in (0, 1)")
        if self.maxiter < 1:
            raise ValueError("maxiter must be >= 1")


@dataclass
class SolveReport:
    iterations: int
    residuals: List[float]
    converged: bool
    wall_time: float
    final_residual: float = float("nan")

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "converged": self.converged, "wall_time": self.wall_time,
                "final_residual": self.final_residual, "residuals": list(self.residuals)}


class ConvergenceError(RuntimeError):
    def __init__(self, report: SolveReport):
        super().__init__(f"GMRES did not converge in {report.iterations} iterations "
                         f"(last relative residual {report.residuals[-1]:.3e})")
        self.report = report


def _as_apply(A) -> Callable[[Array], Array]:
    if isinstance(A, BoundaryOperator):
        return A.apply
    if callable(A):
        return A
    return lambda x: A @ x


def gmres(A, b: Array, cfg: SolveConfig = SolveConfig(), raise_on_fail: bool = False) -> Tuple[Array, SolveReport]:
    """Restart-free GMRES (modified Gram-Schmidt, Givens rotations), x0 = 0.

    Residuals are relative to |b|; the history starts at 1.
    """
    t0 = time.perf_counter()
    apply = _as_apply(A)
    b = np.asarray(b, dtype=complex)
    n = b.size
    beta = np.linalg.norm(b)
    if beta == 0:
        return np.zeros_like(b), SolveReport(0, [0.0], True, 0.0, 0.0)
    m = min(cfg.maxiter, n)
    V = np.zeros((m + 1, n), complex)
    Hs = np.zeros((m + 1, m), complex)
    cs = np.zeros(m, complex)
    sn = np.zeros(m, complex)
    g = np.zeros(m + 1, complex)
    g[0] = beta
    V[0] = b / beta
    res = [1.0]
    j = 0
    converged = False
    for j in range(m):
        w = apply(V[j])
        for i in range(j + 1):
            Hs[i, j] = np.vdot(V[i], w)
            w = w - Hs[i, j] * V[i]
        hn = np.linalg.norm(w)
        Hs[j + 1, j] = hn
        for i in range(j):
            t = cs[i] * Hs[i, j] + sn[i] * Hs[i + 1, j]
            Hs[i + 1, j] = -np.conj(sn[i]) * Hs[i, j] + cs[i] * Hs[i + 1, j]
            Hs[i, j] = t
        a, c = Hs[j, j], Hs[j + 1, j]
        den = np.sqrt(abs(a) ** 2 + abs(c) ** 2)
        if den == 0:
            cs[j], sn[j] = 1.0, 0.0
        else:
            cs[j] = abs(a) / den if a != 0 else 0.0
            sn[j] = (a / abs(a)) * np.conj(c) / den if a != 0 else 1.0
        Hs[j, j] = cs[j] * a + sn[j] * c
        Hs[j + 1, j] = 0.0
        g[j + 1] = -np.conj(sn[j]) * g[j]
        g[j] = cs[j] * g[j]
        res.append(abs(g[j + 1]) / beta)
        if res[-1] <= cfg.tol or hn <= 1e-14 * beta:
            converged = res[-1] <= cfg.tol or hn <= 1e-14 * beta
            break
        V[j + 1] = w / hn
    k = j + 1
    y = sla.solve_triangular(Hs[:k, :k], g[:k])
    x = V[:k].T @ y
    final = np.linalg.norm(b - apply(x)) / beta
    rep = SolveReport(k, res, converged, time.perf_counter() - t0, float(final))
    if raise_on_fail and not converged:
        raise ConvergenceError(rep)
    return x, rep


def direct_solve(A, b: Array) -> Tuple[Array, SolveReport]:
    t0 = time.perf_counter()
    M = A.materialize() if isinstance(A, BoundaryOperator) else np.asarray(A)
    x = np.linalg.solve(M, b)
    final = np.linalg.norm(b - M @ x) / np.linalg.norm(b)
    return x, SolveReport(1, [1.0, float(final)], True, time.perf_counter() - t0, float(final))


# ---------------------------------------------------------------------------
# Trace recovery
# ---------------------------------------------------------------------------


def _pointwise(blocks: Array, f: Array) -> Array:
    X = f.reshape(3, -1)
    return np.einsum("nij,jn->in", blocks, X).reshape(-1)


def recover_traces(formulation: str, density: Array, grid: SurfaceGrid) -> Tuple[Array, Array]:
    """Dirichlet and Neumann traces encoded by a density.

    electric: gamma E = P_nu phi, d_nu E = P_t phi - 2H P_nu phi
    magnetic: gamma H = P_t psi, d_nu H = P_nu psi - R P_t psi
    """
    Pn = normal_projector_blocks(grid)
    Pt = np.eye(3) - Pn
    fn = _pointwise(Pn, density)
    ft = _pointwise(Pt, density)
    if formulation in ("DE", "RDE"):
        H = np.tile(grid.mean_curv, 3)
        return fn, ft - 2.0 * H * fn
    if formulation in ("DM", "RDM"):
        return ft, fn - _pointwise(grid.shape_op, ft)
    raise ValueError(f"unknown formulation {formulation!r}")


def incident_density(formulation: str, traces: IncidentTraces, grid: SurfaceGrid) -> Array:
    """phi^i = P_t d_nu E^i + P_nu gamma E^i (electric) or psi^i = P_t gamma H^i + P_nu d_nu H^i."""
    Pn = normal_projector_blocks(grid)
    Pt = np.eye(3) - Pn
    if formulation in ("DE", "RDE"):
        return _pointwise(Pt, traces.dE) + _pointwise(Pn, traces.gE)
    return _pointwise(Pt, traces.gH) + _pointwise(Pn, traces.dH)


def radiating_rhs(formulation: str, traces: IncidentTraces, grid: SurfaceGrid, mats: OperatorMatrices,
                  eta: float) -> Array:
    """Data for incident fields radiating from sources inside the scatterer.

    The unknown is then the scattered density. With a, b the parts of the
    scattered traces fixed by the boundary conditions (a = gamma_rec(phi^i) - gamma F^i,
    b = d_rec(phi^i) - d_nu F^i), the exterior Calderon identities of F^s give
    rhs = -T a + (K' + 1/2) b + i eta [(1/2 - K) a + S b].
    """
    electric = formulation in ("DE", "RDE")
    phi_i = incident_density(formulation, traces, grid)
    g_rec, d_rec = recover_traces(formulation, phi_i, grid)
    a = g_rec - (traces.gE if electric else traces.gH)
    b = d_rec - (traces.dE if electric else traces.dH)
    N = grid.N

    def op(M, v):
        return (M @ v.reshape(3, N).T).T.reshape(-1)

    if mats.T is None:
        from .operators import build_hypersingular
        build_hypersingular(mats.k, grid, mats)
    return (-op(mats.T, a) + op(mats.Kp, b) + 0.5 * b
            + 1j * eta * (0.5 * a - op(mats.K, a) + op(mats.S, b)))


# ---------------------------------------------------------------------------
# Formulation driver
# ---------------------------------------------------------------------------


@dataclass
class Solution:
    formulation: str
    params: FormulationParams
    raw: Array
    density: Array
    gamma: Array
    dnu: Array
    report: SolveReport
    incident: IncidentTraces
    grid: SurfaceGrid = field(repr=False, default=None)

    @property
    def scattered_density(self) -> Array:
        """Density of the scattered field, phi - phi^i (nonzero for the manufactured dipole case)."""
        return self.density - incident_density(self.formulation, self.incident, self.grid)

    def representation_traces(self) -> Tuple[Array, Array]:
        """Traces whose Green representation D[g] - S[d] is the scattered field."""
        if self.incident.regular_inside:
            return self.gamma, self.dnu
        e = self.params.electric
        return (self.gamma - (self.incident.gE if e else self.incident.gH),
                self.dnu - (self.incident.dE if e else self.incident.dH))


def solve_formulation(formulation: str, grid: SurfaceGrid, mats: OperatorMatrices, incident: IncidentTraces,
                      params: FormulationParams, cfg: SolveConfig = SolveConfig()) -> Solution:
    """Solve one of DE, RDE, DM, RDM; RD systems solve L R x = rhs and set density = R x.

    The returned density and traces always describe the total field.
    """
    if params.formulation != formulation:
        params = FormulationParams(params.k, params.eta, params.xi, formulation)
    system = build_system(params, grid, mats)
    eta = params.coupling
    if incident.regular_inside:
        b = rhs(formulation, incident, eta)
    else:
        b = radiating_rhs(formulation, incident, grid, mats, eta)
    if cfg.method == "gmres":
        x, rep = gmres(system.op, b, cfg)
    else:
        x, rep = direct_solve(system.op, b)
    dens = x if system.regularizer is None else system.regularizer.apply(x)
    if not incident.regular_inside:
        dens = dens + incident_density(formulation, incident, grid)
    g, d = recover_traces(formulation, dens, grid)
    return Solution(formulation, params, x, dens, g, d, rep, incident, grid)
