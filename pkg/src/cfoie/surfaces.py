"""Analytic multi-patch surfaces and their tensor Gauss-Legendre discretization.

Every patch is a chart ``x(u, v)`` on ``[-1, 1]^2`` with closed-form first and
second derivatives, so normals, fundamental forms and curvature are exact at
the nodes. Sphere-like bodies use six cubed-sphere faces composed with a radial
map; tori use a rectangular split of the doubly periodic parameter square.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

SURFACE_KINDS = ("sphere", "torus", "flower", "union")


@dataclass(frozen=True)
class RigidTransform:
    """x -> rotation @ x + translation."""

    rotation: Tuple[Tuple[float, ...], ...] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def Q(self) -> np.ndarray:
        return np.asarray(self.rotation, dtype=float)

    @property
    def b(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=float)

    @staticmethod
    def about_x(angle: float, shift: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = np.cos(angle), np.sin(angle)
        rot = ((1.0, 0.0, 0.0), (0.0, c, -s), (0.0, s, c))
        return RigidTransform(rot, tuple(float(t) for t in shift))

    def is_identity(self) -> bool:
        return np.allclose(self.Q, np.eye(3), atol=0, rtol=0) and not np.any(self.b)


@dataclass(frozen=True)
class SurfaceSpec:
    """Description of a (possibly multi-component) closed surface.

    ``warp`` applies a smooth, non-symmetric reparametrization of a torus chart.
    The image surface is unchanged; only the node layout loses its symmetry.
    """

    kind: str
    radius: float = 1.0
    major: float = 1.0
    minor: float = 0.5
    warp: float = 0.0
    members: Tuple[Tuple["SurfaceSpec", RigidTransform], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in SURFACE_KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}")
        if self.kind == "sphere" and not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        if self.kind == "torus":
            if not (0 < self.minor < self.major):
                raise ValueError("torus needs 0 < minor < major")
            if not (0 <= abs(self.warp) < 0.45):
                raise ValueError("torus warp must satisfy |warp| < 0.45")
        if self.kind == "union":
            if not self.members:
                raise ValueError("union needs at least one member")
            for m, _ in self.members:
                if m.kind == "union":
                    raise ValueError("nested unions are not supported")

    @property
    def n_components(self) -> int:
        return len(self.members) if self.kind == "union" else 1

    # convenience constructors
    @staticmethod
    def sphere(radius: float = 1.0) -> "SurfaceSpec":
        return SurfaceSpec("sphere", radius=radius)

    @staticmethod
    def torus(major: float = 1.0, minor: float = 0.5, warp: float = 0.0) -> "SurfaceSpec":
        return SurfaceSpec("torus", major=major, minor=minor, warp=warp)

    @staticmethod
    def flower() -> "SurfaceSpec":
        return SurfaceSpec("flower")

    @staticmethod
    def union(members: Iterable[Tuple["SurfaceSpec", RigidTransform]]) -> "SurfaceSpec":
        return SurfaceSpec("union", members=tuple(members))


TWO_TORI_MINOR = 1.0 / 2.1


def two_tori(config: str = "interlocking", warp: float = 0.0) -> SurfaceSpec:
    """Two unit tori with minor radius 1/2.1, separated by a narrow gap.

    ``interlocking``: the second torus is turned into the xz-plane and centred
    on the first one's core circle (core circles are 1 apart, gap ~0.048).
    ``adjacent``: both lie in the xy-plane, centres at (+-1.55, 0, 0) (gap ~0.148).
    """
    t = SurfaceSpec.torus(1.0, TWO_TORI_MINOR, warp=warp)
    if config == "interlocking":
        return SurfaceSpec.union([(t, RigidTransform()), (t, RigidTransform.about_x(np.pi / 2, (1.0, 0.0, 0.0)))])
    if config == "adjacent":
        return SurfaceSpec.union(
            [(t, RigidTransform(translation=(-1.55, 0.0, 0.0))), (t, RigidTransform(translation=(1.55, 0.0, 0.0)))]
        )
    raise ValueError(f"unknown two-tori configuration {config!r}")


# ---------------------------------------------------------------------------
# Radial profiles for cubed-sphere bodies: rho(n), grad rho, hess rho
# ---------------------------------------------------------------------------


def _lincomb(M, comps, shift=None):
    """Apply a 3x3 matrix to a vector stored as three component arrays."""
    out = []
    for i in range(3):
        acc = None
        for j in range(3):
            if M[i, j] != 0.0:
                t = M[i, j] * comps[j]
                acc = t if acc is None else acc + t
        if acc is None:
            acc = np.zeros(np.broadcast_shapes(*(np.shape(c) for c in comps)))
        if shift is not None and shift[i] != 0.0:
            acc = acc + shift[i]
        out.append(acc)
    return tuple(out)


class _ConstantRadius:
    def __init__(self, radius: float):
        self.radius = float(radius)

    def __call__(self, n):
        shp = n.shape[:-1]
        return np.full(shp, self.radius), np.zeros(shp + (3,)), np.zeros(shp + (3, 3))

    def value_grad(self, n):
        return self.radius, None


class _FlowerRadius:
    # rho^2 = 0.8 + 0.5 (cos 2phi - 1)(cos 4theta - 1) = 0.8 + 8 ny^2 nz^2 on the unit sphere
    def __call__(self, n):
        ny, nz = n[..., 1], n[..., 2]
        f = 0.8 + 8.0 * ny**2 * nz**2
        rho = np.sqrt(f)
        gf = np.zeros(n.shape)
        gf[..., 1] = 16.0 * ny * nz**2
        gf[..., 2] = 16.0 * ny**2 * nz
        hf = np.zeros(n.shape + (3,))
        hf[..., 1, 1] = 16.0 * nz**2
        hf[..., 2, 2] = 16.0 * ny**2
        hf[..., 1, 2] = hf[..., 2, 1] = 32.0 * ny * nz
        grad = gf / (2.0 * rho[..., None])
        hess = hf / (2.0 * rho[..., None, None]) - gf[..., :, None] * gf[..., None, :] / (4.0 * rho[..., None, None] ** 3)
        return rho, grad, hess

    def value_grad(self, n):
        ny, nz = n[1], n[2]
        rho = np.sqrt(0.8 + 8.0 * ny * ny * nz * nz)
        return rho, (np.zeros_like(rho), 8.0 * ny * nz * nz / rho, 8.0 * ny * ny * nz / rho)


# ---------------------------------------------------------------------------
# Patches
# ---------------------------------------------------------------------------

_E = np.eye(3)
# (outward axis, t1, t2) with t1 x t2 = axis
_CUBE_FACES = (
    (_E[0], _E[1], _E[2]),
    (-_E[0], _E[2], _E[1]),
    (_E[1], _E[2], _E[0]),
    (-_E[1], _E[0], _E[2]),
    (_E[2], _E[0], _E[1]),
    (-_E[2], _E[1], _E[0]),
)


class Patch:
    """Base chart on [-1, 1]^2. Subclasses implement ``_local``."""

    component: int = 0
    rotation: np.ndarray = _E
    translation: np.ndarray = np.zeros(3)

    def _local(self, u, v, second: bool):
        raise NotImplementedError

    def evaluate(self, u, v, second: bool = False):
        """Return x, x_u, x_v (and x_uu, x_uv, x_vv when ``second``), shape (..., 3)."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        u, v = np.broadcast_arrays(u, v)
        out = self._local(u, v, second)
        Q = self.rotation
        res = [out[0] @ Q.T + self.translation]
        res += [d @ Q.T for d in out[1:]]
        return tuple(res)

    def frame(self, u, v):
        """Points, unit normals and area elements (no second derivatives)."""
        x, xu, xv = self.evaluate(u, v)
        c = np.cross(xu, xv)
        jac = np.linalg.norm(c, axis=-1)
        if np.any(jac < 1e-14):
            raise ValueError("degenerate chart: |x_u x x_v| < 1e-14")
        return x, c / jac[..., None], jac


class CubedSpherePatch(Patch):
    def __init__(self, face: int, alpha: Tuple[float, float], beta: Tuple[float, float], profile,
                 component: int = 0, rotation=None, translation=None):
        self.face = face
        self.axis, self.t1, self.t2 = _CUBE_FACES[face]
        # equiangular coordinate a = tan(pi/4 * alpha), alpha = ac + ah * u
        self.ac, self.ah = 0.5 * (alpha[0] + alpha[1]), 0.5 * (alpha[1] - alpha[0])
        self.bc, self.bh = 0.5 * (beta[0] + beta[1]), 0.5 * (beta[1] - beta[0])
        self.profile = profile
        self.component = component
        self.rotation = _E if rotation is None else rotation
        self.translation = np.zeros(3) if translation is None else translation

    def frame(self, u, v):
        u, v = np.asarray(u, float), np.asarray(v, float)
        a, a1, _ = self._angle(self.ac, self.ah, u)
        b, b1, _ = self._angle(self.bc, self.bh, v)
        # local frame (t1, t2, axis): c = (a, b, 1), n = c / s
        s = np.sqrt(a * a + b * b + 1.0)
        n0, n1, n2 = a / s, b / s, 1.0 / s
        B = np.stack([self.t1, self.t2, self.axis], 1)  # local -> global
        ng = _lincomb(B, (n0, n1, n2))
        rho, grad = self.profile.value_grad(ng)
        # n_u = a1 (e1 - n a / s) / s, n_v = b1 (e2 - n b / s) / s
        fu, fv = a1 / s, b1 / s
        nu = (fu * (1 - n0 * n0), -fu * n0 * n1, -fu * n0 * n2)
        nv = (-fv * n1 * n0, fv * (1 - n1 * n1), -fv * n1 * n2)
        if grad is None:
            xu = tuple(rho * c for c in nu)
            xv = tuple(rho * c for c in nv)
        else:
            gl = _lincomb(B.T, grad)
            ru = gl[0] * nu[0] + gl[1] * nu[1] + gl[2] * nu[2]
            rv = gl[0] * nv[0] + gl[1] * nv[1] + gl[2] * nv[2]
            xu = (ru * n0 + rho * nu[0], ru * n1 + rho * nu[1], ru * n2 + rho * nu[2])
            xv = (rv * n0 + rho * nv[0], rv * n1 + rho * nv[1], rv * n2 + rho * nv[2])
        c0 = xu[1] * xv[2] - xu[2] * xv[1]
        c1 = xu[2] * xv[0] - xu[0] * xv[2]
        c2 = xu[0] * xv[1] - xu[1] * xv[0]
        jac = np.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
        if np.any(jac < 1e-14):
            raise ValueError("degenerate chart: |x_u x x_v| < 1e-14")
        nrm = _lincomb(self.rotation @ B, (c0 / jac, c1 / jac, c2 / jac))
        x = _lincomb(self.rotation, tuple(rho * c for c in ng), self.translation)
        x = np.broadcast_arrays(*x, jac)[:3]
        return np.stack(x, -1), np.stack(nrm, -1), jac

    @staticmethod
    def _angle(c, h, u):
        q = np.pi / 4
        a = np.tan(q * (c + h * u))
        a1 = q * h * (1 + a * a)
        a2 = 2 * q * h * a * a1
        return a, a1, a2

    def _local(self, u, v, second):
        a, a1, a2 = self._angle(self.ac, self.ah, u)
        b, b1, b2 = self._angle(self.bc, self.bh, v)
        c = self.axis + a[..., None] * self.t1 + b[..., None] * self.t2
        s = np.linalg.norm(c, axis=-1)[..., None]
        n = c / s
        rho, g, H = self.profile(n)
        rho = rho[..., None]

        def n_d(p):
            return (p - n * np.sum(n * p, -1, keepdims=True)) / s

        def rho_d(np_):
            return np.sum(g * np_, -1, keepdims=True)

        cu = a1[..., None] * self.t1
        cv = b1[..., None] * self.t2
        nu, nv = n_d(cu), n_d(cv)
        ru, rv = rho_d(nu), rho_d(nv)
        x = rho * n
        xu = ru * n + rho * nu
        xv = rv * n + rho * nv
        if not second:
            return x, xu, xv

        def n_dd(p, q, np_, nq):
            return -(nq * np.sum(n * p, -1, keepdims=True) + n * np.sum(nq * p, -1, keepdims=True)
                     + np_ * np.sum(n * q, -1, keepdims=True)) / s

        def F_dd(p, q, np_, nq, rp, rq):
            npq = n_dd(p, q, np_, nq)
            rpq = np.einsum("...i,...ij,...j->...", np_, H, nq)[..., None] + np.sum(g * npq, -1, keepdims=True)
            return rpq * n + rp * nq + rq * np_ + rho * npq

        # F is linear in the direction, and c_uu is parallel to c_u
        xuu = F_dd(cu, cu, nu, nu, ru, ru) + (a2 / a1)[..., None] * xu
        xvv = F_dd(cv, cv, nv, nv, rv, rv) + (b2 / b1)[..., None] * xv
        xuv = F_dd(cu, cv, nu, nv, ru, rv)
        return x, xu, xv, xuu, xuv, xvv


def _warp_phi(s, w):
    # s + w (sin s + 0.5 sin(2s + 1)); derivative >= 1 - 2w > 0
    return (s + w * (np.sin(s) + 0.5 * np.sin(2 * s + 1.0)),
            1 + w * (np.cos(s) + np.cos(2 * s + 1.0)),
            -w * (np.sin(s) + 2 * np.sin(2 * s + 1.0)))


def _warp_theta(t, w):
    return (t + w * (np.sin(t + 0.3) + 0.5 * np.sin(2 * t + 2.0)),
            1 + w * (np.cos(t + 0.3) + np.cos(2 * t + 2.0)),
            -w * (np.sin(t + 0.3) + 2 * np.sin(2 * t + 2.0)))


class TorusPatch(Patch):
    """u -> azimuth phi, v -> poloidal angle theta (this order gives the outward normal)."""

    def __init__(self, major: float, minor: float, phi: Tuple[float, float], theta: Tuple[float, float],
                 warp: float = 0.0, component: int = 0, rotation=None, translation=None):
        self.R, self.r = float(major), float(minor)
        self.sc, self.sh = 0.5 * (phi[0] + phi[1]), 0.5 * (phi[1] - phi[0])
        self.tc, self.th = 0.5 * (theta[0] + theta[1]), 0.5 * (theta[1] - theta[0])
        self.warp = warp
        self.component = component
        self.rotation = _E if rotation is None else rotation
        self.translation = np.zeros(3) if translation is None else translation

    def frame(self, u, v):
        u, v = np.asarray(u, float), np.asarray(v, float)
        ph, ph1, _ = _warp_phi(self.sc + self.sh * u, self.warp)
        th, th1, _ = _warp_theta(self.tc + self.th * v, self.warp)
        cp, sp, ct, st = np.cos(ph), np.sin(ph), np.cos(th), np.sin(th)
        rad = self.R + self.r * ct
        jac = (ph1 * self.sh) * (th1 * self.th) * rad * self.r
        shape = np.broadcast_shapes(u.shape, v.shape)
        cp, sp, ct, st, rad = (np.broadcast_to(t, shape) for t in (cp, sp, ct, st, rad))
        jac = np.broadcast_to(jac, shape)
        x = _lincomb(self.rotation, (rad * cp, rad * sp, self.r * st), self.translation)
        nrm = _lincomb(self.rotation, (ct * cp, ct * sp, st))
        return np.stack(x, -1), np.stack(nrm, -1), jac

    def _local(self, u, v, second):
        ph, ph1, ph2 = _warp_phi(self.sc + self.sh * u, self.warp)
        th, th1, th2 = _warp_theta(self.tc + self.th * v, self.warp)
        ph1, ph2 = ph1 * self.sh, ph2 * self.sh**2
        th1, th2 = th1 * self.th, th2 * self.th**2
        R, r = self.R, self.r
        cp, sp, ct, st = np.cos(ph), np.sin(ph), np.cos(th), np.sin(th)
        rad = R + r * ct
        z = np.zeros_like(cp)
        x = np.stack([rad * cp, rad * sp, r * st], -1)
        x_p = np.stack([-rad * sp, rad * cp, z], -1)
        x_t = np.stack([-r * st * cp, -r * st * sp, r * ct], -1)
        xu = x_p * ph1[..., None]
        xv = x_t * th1[..., None]
        if not second:
            return x, xu, xv
        x_pp = np.stack([-rad * cp, -rad * sp, z], -1)
        x_pt = np.stack([r * st * sp, -r * st * cp, z], -1)
        x_tt = np.stack([-r * ct * cp, -r * ct * sp, -r * st], -1)
        xuu = x_pp * (ph1**2)[..., None] + x_p * ph2[..., None]
        xvv = x_tt * (th1**2)[..., None] + x_t * th2[..., None]
        xuv = x_pt * (ph1 * th1)[..., None]
        return x, xu, xv, xuu, xuv, xvv


@dataclass
class PatchedSurface:
    spec: SurfaceSpec
    refinement: int
    patches: List[Patch]
    n_components: int

    @property
    def n_patches(self) -> int:
        return len(self.patches)


def _component_patches(spec: SurfaceSpec, refinement: int, component: int,
                       rotation: np.ndarray, translation: np.ndarray) -> List[Patch]:
    out: List[Patch] = []
    if spec.kind in ("sphere", "flower"):
        profile = _ConstantRadius(spec.radius) if spec.kind == "sphere" else _FlowerRadius()
        edges = np.linspace(-1.0, 1.0, refinement + 1)
        for f in range(6):
            for i in range(refinement):
                for j in range(refinement):
                    out.append(CubedSpherePatch(f, (edges[i], edges[i + 1]), (edges[j], edges[j + 1]), profile,
                                                component, rotation, translation))
    elif spec.kind == "torus":
        edges = np.linspace(0.0, 2 * np.pi, refinement + 1)
        for i in range(refinement):
            for j in range(refinement):
                out.append(TorusPatch(spec.major, spec.minor, (edges[i], edges[i + 1]), (edges[j], edges[j + 1]),
                                      spec.warp, component, rotation, translation))
    else:
        raise ValueError(f"unknown surface kind {spec.kind!r}")
    return out


def make_surface(spec: SurfaceSpec, refinement: int) -> PatchedSurface:
    """Build the patch list. Sphere-like bodies get 6*refinement^2 patches, tori refinement^2."""
    if int(refinement) != refinement or refinement < 1:
        raise ValueError("refinement must be an integer >= 1")
    refinement = int(refinement)
    if spec.kind == "union":
        patches: List[Patch] = []
        for j, (member, tr) in enumerate(spec.members):
            patches += _component_patches(member, refinement, j, tr.Q, tr.b)
        return PatchedSurface(spec, refinement, patches, len(spec.members))
    return PatchedSurface(spec, refinement, _component_patches(spec, refinement, 0, _E, np.zeros(3)), 1)


# ---------------------------------------------------------------------------
# Differential geometry
# ---------------------------------------------------------------------------


@dataclass
class SurfaceNodeData:
    point: np.ndarray
    xu: np.ndarray
    xv: np.ndarray
    normal: np.ndarray
    area_element: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    L: np.ndarray
    M: np.ndarray
    N: np.ndarray
    shape_operator: np.ndarray
    mean_curvature: np.ndarray


def geometry_at(patch: Patch, u, v) -> SurfaceNodeData:
    """Exact differential geometry at parameter points (scalars or arrays)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(np.abs(u) > 1 + 1e-12) or np.any(np.abs(v) > 1 + 1e-12):
        raise ValueError("parameters must lie in [-1, 1]^2")
    x, xu, xv, xuu, xuv, xvv = patch.evaluate(u, v, second=True)
    c = np.cross(xu, xv)
    jac = np.linalg.norm(c, axis=-1)
    if np.any(jac < 1e-14):
        raise ValueError("degenerate chart: |x_u x x_v| < 1e-14")
    nu = c / jac[..., None]
    E = np.sum(xu * xu, -1)
    F = np.sum(xu * xv, -1)
    G = np.sum(xv * xv, -1)
    L = np.sum(xuu * nu, -1)
    M = np.sum(xuv * nu, -1)
    N = np.sum(xvv * nu, -1)
    det = E * G - F * F
    Iinv = np.stack([np.stack([G, -F], -1), np.stack([-F, E], -1)], -2) / det[..., None, None]
    II = np.stack([np.stack([L, M], -1), np.stack([M, N], -1)], -2)
    B = np.stack([xu, xv], -1)  # (..., 3, 2)
    core = Iinv @ II @ Iinv
    Rop = -(B @ core @ np.swapaxes(B, -1, -2))
    Rop = 0.5 * (Rop + np.swapaxes(Rop, -1, -2))
    H = 0.5 * np.trace(Rop, axis1=-2, axis2=-1)
    return SurfaceNodeData(x, xu, xv, nu, jac, E, F, G, L, M, N, Rop, H)


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------


def gauss_legendre(p: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(p)


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    d = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(d, 1.0)
    return 1.0 / np.prod(d, axis=1)


def lagrange_basis(nodes: np.ndarray, x, bw: Optional[np.ndarray] = None) -> np.ndarray:
    """Values of the Lagrange cardinal functions on ``nodes`` at points ``x``: shape x.shape + (p,)."""
    if bw is None:
        bw = barycentric_weights(nodes)
    x = np.asarray(x, dtype=float)
    diff = x[..., None] - nodes
    hit = diff == 0.0
    diff = np.where(hit, 1.0, diff)
    t = bw / diff
    out = t / np.sum(t, axis=-1, keepdims=True)
    if np.any(hit):
        rows = np.any(hit, axis=-1)
        out[rows] = hit[rows].astype(float)
    return out


@dataclass
class SurfaceGrid:
    """Nodes of a discretized surface, stored as flat arrays of length N.

    Node index = patch * p^2 + a * p + b, where (u, v) = (t_a, t_b) for GL nodes t.
    """

    surface: PatchedSurface
    p: int
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    shape_op: np.ndarray
    mean_curv: np.ndarray
    patch_id: np.ndarray
    uv: np.ndarray
    component: np.ndarray
    gl_nodes: np.ndarray
    gl_weights: np.ndarray
    _fingerprint: Optional[str] = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def n_components(self) -> int:
        return self.surface.n_components

    @property
    def patches(self) -> List[Patch]:
        return self.surface.patches

    def patch_range(self, i: int) -> slice:
        m = self.p * self.p
        return slice(i * m, (i + 1) * m)

    def component_mask(self, j: int) -> np.ndarray:
        return self.component == j

    def component_areas(self) -> np.ndarray:
        return np.bincount(self.component, weights=self.weights, minlength=self.n_components)

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            h = hashlib.sha1(np.ascontiguousarray(self.points).tobytes())
            h.update(np.ascontiguousarray(self.weights).tobytes())
            self._fingerprint = h.hexdigest()
        return self._fingerprint

    def patch_diameters(self) -> np.ndarray:
        s = np.array([-1.0, 0.0, 1.0])
        uu, vv = np.meshgrid(s, s, indexing="ij")
        out = []
        for P in self.patches:
            x = P.evaluate(uu.ravel(), vv.ravel())[0]
            out.append(np.max(np.linalg.norm(x[:, None] - x[None], axis=-1)))
        return np.array(out)

    @property
    def h(self) -> float:
        """Max over patches of patch diameter / p."""
        return float(np.max(self.patch_diameters()) / self.p)

    def diameter(self) -> float:
        x = self.points
        idx = np.unique(np.concatenate([np.argmin(x, 0), np.argmax(x, 0)]))
        ext = x[idx]
        far = np.max(np.linalg.norm(x[:, None, :] - ext[None], axis=-1))
        return float(far)

    def to_tsv(self, path) -> None:
        """Debug export: x y z nx ny nz w H component."""
        data = np.column_stack([self.points, self.normals, self.weights, self.mean_curv, self.component + 1])
        with open(path, "w") as fh:
            fh.write("x\ty\tz\tnx\tny\tnz\tw\tH\tcomponent\n")
            for row in data:
                fh.write("\t".join(f"{v:.6e}" for v in row[:-1]) + f"\t{int(row[-1])}\n")


def discretize(surface: PatchedSurface, p: int) -> SurfaceGrid:
    """p x p tensor Gauss-Legendre nodes per patch; weights = GL weight * area element."""
    if p < 3:
        raise ValueError("need p >= 3 nodes per direction")
    t, wt = gauss_legendre(p)
    uu, vv = np.meshgrid(t, t, indexing="ij")
    ww = np.outer(wt, wt).ravel()
    pts, nrm, wts, Rs, Hs, pid, uvs, comp = [], [], [], [], [], [], [], []
    for i, P in enumerate(surface.patches):
        g = geometry_at(P, uu.ravel(), vv.ravel())
        pts.append(g.point)
        nrm.append(g.normal)
        wts.append(ww * g.area_element)
        Rs.append(g.shape_operator)
        Hs.append(g.mean_curvature)
        pid.append(np.full(p * p, i))
        uvs.append(np.column_stack([uu.ravel(), vv.ravel()]))
        comp.append(np.full(p * p, P.component))
    grid = SurfaceGrid(
        surface, p, np.concatenate(pts), np.concatenate(nrm), np.concatenate(wts), np.concatenate(Rs),
        np.concatenate(Hs), np.concatenate(pid), np.concatenate(uvs), np.concatenate(comp), t, wt,
    )
    _orientation_smoke_test(grid)
    return grid


def _orientation_smoke_test(grid: SurfaceGrid) -> None:
    spec = grid.surface.spec
    members = spec.members if spec.kind == "union" else ((spec, RigidTransform()),)
    for j, (m, _) in enumerate(members):
        if m.kind != "sphere":
            continue
        mask = grid.component == j
        c = np.average(grid.points[mask], axis=0, weights=grid.weights[mask])
        if np.any(np.sum(grid.normals[mask] * (grid.points[mask] - c), -1) <= 0):
            raise AssertionError("inward-pointing normal on a convex component")


def surface_area(spec: SurfaceSpec) -> Optional[float]:
    """Closed-form area where one exists."""
    if spec.kind == "sphere":
        return 4 * np.pi * spec.radius**2
    if spec.kind == "torus":
        return 4 * np.pi**2 * spec.major * spec.minor
    if spec.kind == "union":
        parts = [surface_area(m) for m, _ in spec.members]
        return None if any(a is None for a in parts) else float(sum(parts))
    return None
