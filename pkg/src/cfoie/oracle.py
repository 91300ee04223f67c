"""Reference solutions: Mie series for the PEC sphere, the manufactured dipole
solution, and Green's identity checks for the layer quadrature."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.special import spherical_jn, spherical_yn

from .incident import DipoleSource, dipole_field_at
from .operators import OperatorMatrices, build_hypersingular
from .postprocess import fibonacci_sphere
from .quadrature import (AdjointDouble, DoubleLayer, HypersingularDiff, QuadConfig, SingleLayer, assemble_many,
                         check_targets, greens_derivatives, layer_potential)
from .surfaces import SurfaceGrid

Array = np.ndarray


# ---------------------------------------------------------------------------
# Mie series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MieConfig:
    radius: float = 1.0
    p: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    d: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    k: float = math.pi
    degree: Optional[int] = None
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not self.k > 0:
            raise ValueError("wavenumber must be positive")
        p, d = np.asarray(self.p, float), np.asarray(self.d, float)
        if abs(np.linalg.norm(d) - 1) > 1e-12 or abs(p @ d) > 1e-12 or np.linalg.norm(p) == 0:
            raise ValueError("need |d| = 1, p != 0 and p . d = 0")
        if self.degree is not None and self.degree < 5:
            raise ValueError("truncation degree must be >= 5")

    @property
    def L(self) -> int:
        return self.degree if self.degree is not None else math.ceil(self.k * self.radius) + 20


def _pec_coefficients(x: float, L: int):
    """a_n = psi_n'(x)/xi_n'(x), b_n = psi_n(x)/xi_n(x), n = 1..L."""
    n = np.arange(1, L + 1)
    j, jd = spherical_jn(n, x), spherical_jn(n, x, derivative=True)
    y, yd = spherical_yn(n, x), spherical_yn(n, x, derivative=True)
    h, hd = j + 1j * y, jd + 1j * yd
    a = (j + x * jd) / (h + x * hd)
    b = j / h
    return a, b


def _angular(ct: Array, L: int):
    """pi_n and tau_n for n = 1..L at cos(theta) = ct, shape (L, M)."""
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    pi = np.zeros((L + 1, ct.size))
    tau = np.zeros((L + 1, ct.size))
    pi[1] = 1.0
    for n in range(2, L + 1):
        pi[n] = (2 * n - 1) / (n - 1) * ct * pi[n - 1] - n / (n - 1) * pi[n - 2]
    for n in range(1, L + 1):
        tau[n] = n * ct * pi[n] - (n + 1) * pi[n - 1]
    return pi[1:], tau[1:], st


def _frame(cfg: MieConfig) -> Tuple[Array, float]:
    """Rotation whose columns are p/|p|, d x p/|p|, d."""
    p = np.asarray(cfg.p, float)
    d = np.asarray(cfg.d, float)
    ex = p / np.linalg.norm(p)
    return np.column_stack([ex, np.cross(d, ex), d]), float(np.linalg.norm(p))


def mie_scattered(cfg: MieConfig, targets: Array, tail_tol: float = 1e-10) -> Tuple[Array, Array]:
    """Scattered (E, H) of the PEC sphere under the plane wave p exp(ik x.d)."""
    X = np.atleast_2d(np.asarray(targets, float)) - np.asarray(cfg.center, float)
    Q, amp = _frame(cfg)
    Xl = X @ Q
    r = np.linalg.norm(Xl, axis=1)
    if np.any(r < cfg.radius * (1 - 1e-12)):
        raise ValueError("Mie targets must lie outside the sphere")
    k, L = cfg.k, cfg.L
    a, b = _pec_coefficients(k * cfg.radius, L)
    ct = np.clip(Xl[:, 2] / r, -1.0, 1.0)
    phi = np.arctan2(Xl[:, 1], Xl[:, 0])
    cp, sp = np.cos(phi), np.sin(phi)
    pi, tau, st = _angular(ct, L)
    rho = k * r
    n = np.arange(1, L + 1)[:, None]
    h = spherical_jn(n, rho) + 1j * spherical_yn(n, rho)
    hd = spherical_jn(n, rho, derivative=True) + 1j * spherical_yn(n, rho, derivative=True)
    dh = h / rho + hd  # (rho h_n)'/rho
    En = (1j ** n) * (2 * n + 1) / (n * (n + 1))
    nn1 = n * (n + 1)
    # Vector spherical harmonics of the outgoing kind (radial, theta, phi parts)
    M_o = (np.zeros_like(h), cp * pi * h, -sp * tau * h)
    M_e = (np.zeros_like(h), -sp * pi * h, -cp * tau * h)
    N_o = (sp * nn1 * st * pi * h / rho, sp * tau * dh, cp * pi * dh)
    N_e = (cp * nn1 * st * pi * h / rho, cp * tau * dh, -sp * pi * dh)
    ca, cb = (En * 1j * a[:, None]), (En * b[:, None])
    termsE = [ca * N_e[c] - cb * M_o[c] for c in range(3)]
    termsH = [1j * cb * N_o[c] + (En * a[:, None]) * M_e[c] for c in range(3)]
    Es = np.column_stack([t.sum(0) for t in termsE])
    Hs = np.column_stack([t.sum(0) for t in termsH])
    if not (np.all(np.isfinite(Es)) and np.all(np.isfinite(Hs))):
        raise FloatingPointError("Mie series overflowed; wavenumber too small for this truncation")
    tail = max(np.max(np.abs(np.column_stack([t[-1] for t in termsE]))),
               np.max(np.abs(np.column_stack([t[-1] for t in termsH]))))
    scale = max(np.max(np.linalg.norm(Es, axis=1)), np.max(np.linalg.norm(Hs, axis=1)), 1e-300)
    if tail / scale > tail_tol:
        raise ArithmeticError(f"Mie truncation at L={L} not converged (tail {tail / scale:.2e})")
    # spherical (r, theta, phi) -> local Cartesian -> global
    sth = st
    rhat = np.column_stack([sth * cp, sth * sp, ct])
    that = np.column_stack([ct * cp, ct * sp, -sth])
    phat = np.column_stack([-sp, cp, np.zeros_like(cp)])

    # the incident phase is measured from the origin, the expansion from the centre
    amp = amp * np.exp(1j * k * float(np.dot(cfg.center, cfg.d)))

    def to_global(F):
        loc = F[:, :1] * rhat + F[:, 1:2] * that + F[:, 2:3] * phat
        return amp * (loc @ Q.T)

    return to_global(Es), to_global(Hs)


def plane_wave_total_tangential_residual(cfg: MieConfig, n: int = 200) -> float:
    """max |nu x (E^s + E^i)| / |p| on the sphere surface (PEC self-check)."""
    nu = fibonacci_sphere(n, 1.0)
    X = np.asarray(cfg.center, float) + cfg.radius * nu
    Es, _ = mie_scattered(cfg, X)
    Ei = np.asarray(cfg.p, float) * np.exp(1j * cfg.k * (X @ np.asarray(cfg.d, float)))[:, None]
    return float(np.max(np.linalg.norm(np.cross(nu, Es + Ei), axis=1)) / np.linalg.norm(cfg.p))


# ---------------------------------------------------------------------------
# Manufactured dipole solution
# ---------------------------------------------------------------------------


def dipole_reference(src: DipoleSource, targets: Array) -> Tuple[Array, Array]:
    """Exact scattered pair for an interior source: the negated source field."""
    E, H = dipole_field_at(src, targets)
    return -E, -H


# ---------------------------------------------------------------------------
# Green's identity checks
# ---------------------------------------------------------------------------


@dataclass
class GreensReport:
    exterior: float
    near: float
    interior: float
    trace: float
    calderon: float
    n_exterior: int
    n_near: int
    n_interior: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _point_source(k: float, x0: Array, grid: SurfaceGrid):
    R = grid.points - x0
    G, g1, _, _ = greens_derivatives(k, R)
    dG = g1 * np.sum(R * grid.normals, 1)
    return G, dG


def _probes(grid: SurfaceGrid, x0: Array, cfg: QuadConfig, n_near: int = 100):
    """Exterior probes (a far sphere plus points just past the near-field
    threshold) and interior probes around x0."""
    rad = max(5.0, 2.0 * float(np.max(np.linalg.norm(grid.points, axis=1))))
    far = fibonacci_sphere(100, rad)
    idx = np.linspace(0, grid.N - 1, min(n_near, grid.N)).astype(int)
    base, nu = grid.points[idx], grid.normals[idx]
    step = np.full(len(idx), grid.h)
    ok = np.zeros(len(idx), bool)
    for _ in range(60):
        ok = check_targets(grid, base + step[:, None] * nu, cfg)
        if ok.all():
            break
        step[~ok] *= 1.2
    near = (base + step[:, None] * nu)[ok]
    dist = float(np.min(np.linalg.norm(grid.points - x0, axis=1)))
    cand = x0 + 0.5 * dist * fibonacci_sphere(50, 1.0)
    return far, near, cand[check_targets(grid, cand, cfg)]


def _hypersingular_apply(grid: SurfaceGrid, k: float, u: Array, du: Array, cfg: QuadConfig):
    """T u and K' du without forming T: T u = (K0'^2 - 1/4) S0^{-1} u + (T - T0) u."""
    ids0 = [SingleLayer(0.0), AdjointDouble(0.0)]
    m = assemble_many(ids0, grid, cfg)
    w = sla.solve(m[ids0[0]].data, u, overwrite_a=True, check_finite=False)
    K0p = m[ids0[1]].data
    Tu = K0p @ (K0p @ w) - 0.25 * w
    del m, K0p
    idk = [AdjointDouble(k)] + ([HypersingularDiff(k)] if k > 0 else [])
    m = assemble_many(idk, grid, cfg)
    if k > 0:
        Tu = Tu + m[idk[1]].data @ u
    return Tu, m[idk[0]].data @ du


def greens_identity_check(grid: SurfaceGrid, x0, k: float, cfg: Optional[QuadConfig] = None,
                          mats: Optional[OperatorMatrices] = None, calderon: bool = True,
                          trace: bool = True) -> GreensReport:
    """Residuals of Green's representation for u = G(., x0) with x0 inside.

    exterior: max |D[gu] - S[du] - u| / |u| on the far target sphere
    near:     the same at exterior points just past the near-field threshold
    interior: max |D[gu] - S[du]| / |u| at admissible probes around x0 (nan if none)
    trace:    |(1/2 - K) gu + S du| / |gu| on the grid
    calderon: |T gu - (1/2 + K') du| / |du| on the grid
    The last two need matrices; pass ``mats`` to reuse assembled ones.
    """
    cfg = cfg or QuadConfig()
    x0 = np.asarray(x0, float)
    u, du = _point_source(k, x0, grid)
    ext, near, inn = _probes(grid, x0, cfg)

    def rep(X):
        return (layer_potential("double", k, grid, u, X, cfg, check=False)
                - layer_potential("single", k, grid, du, X, cfg, check=False))

    ue = greens_derivatives(k, ext - x0)[0]
    res_ext = float(np.max(np.abs(rep(ext) - ue) / np.abs(ue)))
    res_near = float("nan")
    if len(near):
        un = greens_derivatives(k, near - x0)[0]
        res_near = float(np.max(np.abs(rep(near) - un) / np.abs(un)))
    res_int = float("nan")
    if len(inn):
        ui = greens_derivatives(k, inn - x0)[0]
        res_int = float(np.max(np.abs(rep(inn)) / np.abs(ui)))

    res_tr = res_cal = float("nan")
    if trace:
        if mats is not None and mats.k == k:
            S, K = mats.S, mats.K
        else:
            ids = [SingleLayer(k), DoubleLayer(k)]
            m = assemble_many(ids, grid, cfg)
            S, K = m[ids[0]].data, m[ids[1]].data
            del m
        res_tr = float(np.linalg.norm(0.5 * u - K @ u + S @ du) / np.linalg.norm(u))
        del S, K
    if calderon:
        if mats is not None and mats.k == k:
            Tu = build_hypersingular(k, grid, mats).matrix @ u
            Kp_du = mats.Kp @ du
        else:
            Tu, Kp_du = _hypersingular_apply(grid, k, u, du, cfg)
        res_cal = float(np.linalg.norm(Tu - 0.5 * du - Kp_du) / np.linalg.norm(du))
    return GreensReport(res_ext, res_near, res_int, res_tr, res_cal, len(ext), len(near), len(inn))
