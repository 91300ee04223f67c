"""Helmholtz kernels, Nystrom assembly of scalar boundary operators, layer potentials.

Far interactions use the native Gauss-Legendre weights. When a target sits on a
source patch or close to it, the patch integral of kernel times each tensor
Lagrange basis function is computed directly:

* on-patch targets: a Duffy-transformed square around the target's (u, v),
  plus an adaptive quadtree over the rest of the patch;
* nearby targets: the same quadtree over the whole patch.

Quadtree cells are accepted once the target is ``accept_ratio`` cell radii away
from the cell centre, then integrated with an ``aux_order`` tensor GL rule.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .surfaces import Patch, SurfaceGrid, barycentric_weights, gauss_legendre, lagrange_basis

FOUR_PI = 4.0 * np.pi
KERNEL_KINDS = ("single", "double", "adjoint", "hyperdiff")
_KIND_CODE = {"single": 0, "double": 1, "adjoint": 2, "hyperdiff": 3}


@dataclass(frozen=True)
class KernelId:
    kind: str
    k: float = 0.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.k < 0:
            raise ValueError("wavenumber must be >= 0")
        if self.kind == "hyperdiff" and self.k == 0:
            raise ValueError("hyperdiff needs k > 0 (it vanishes identically at k = 0)")


def SingleLayer(k: float = 0.0) -> KernelId:
    return KernelId("single", k)


def DoubleLayer(k: float = 0.0) -> KernelId:
    return KernelId("double", k)


def AdjointDouble(k: float = 0.0) -> KernelId:
    return KernelId("adjoint", k)


def HypersingularDiff(k: float) -> KernelId:
    return KernelId("hyperdiff", k)


@dataclass(frozen=True)
class QuadConfig:
    """Near-field quadrature knobs.

    eta_near: a target is near a patch when closer to its centre than
        patch radius + eta_near * (patch diameter / p).
    duffy_order / aux_order: 1D GL orders of the Duffy rule and of quadtree
        leaves; ``None`` means 2p + 4 and p + 4.
    """

    eta_near: float = 3.0
    duffy_order: Optional[int] = None
    aux_order: Optional[int] = None
    accept_ratio: float = 1.8
    max_depth: int = 14
    series_kr: float = 1e-4
    row_block: int = 256

    def __post_init__(self):
        if self.eta_near <= 0 or self.accept_ratio <= 0 or self.max_depth < 1 or self.series_kr <= 0:
            raise ValueError("quadrature parameters must be positive")

    def orders(self, p: int) -> Tuple[int, int]:
        return (self.duffy_order or 2 * p + 4, self.aux_order or p + 4)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def greens(k: float, x, y):
    """G(x, y) = exp(ik|x-y|) / (4 pi |x-y|)."""
    r = np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)
    if np.any(r == 0):
        raise ValueError("coincident points")
    if k == 0:
        return 1.0 / (FOUR_PI * r)
    return np.exp(1j * k * r) / (FOUR_PI * r)


def _hyperdiff_coeffs(k: float, r: np.ndarray, series_kr: float):
    """A = e^z(z-1)+1 and B = e^z(z^2-3z+3)-3 with z = ikr (both O(z^2))."""
    r = np.asarray(r, float)
    shape = r.shape
    r = r.reshape(-1)
    z = 1j * k * r
    small = np.abs(k * r) < series_kr
    ez = np.exp(z)
    A = ez * (z - 1.0) + 1.0
    B = ez * (z * z - 3.0 * z + 3.0) - 3.0
    if np.any(small):
        zs = z[small]
        As = np.zeros_like(zs)
        Bs = np.zeros_like(zs)
        term = zs * zs / 2.0  # z^m / m! starting at m = 2
        for m in range(2, 10):
            As += (m - 1) * term
            Bs += (m - 1) * (m - 3) * term
            term = term * zs / (m + 1)
        A[small] = As
        B[small] = Bs
    return A.reshape(shape), B.reshape(shape)


def _dot(a, b):
    if a.shape == b.shape:
        return np.einsum("...i,...i->...", a, b)
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _kernel_eval(kinds: Sequence[str], k: float, R, nx, ny, series_kr: float = 1e-4) -> Dict[str, np.ndarray]:
    """Kernel values for R = x - y (..., 3); nx, ny normals (may be None if unused)."""
    r = np.sqrt(_dot(R, R))
    with np.errstate(divide="ignore", invalid="ignore"):
        ir = 1.0 / r
        ir3 = ir * ir * ir
        e = 1.0 if k == 0 else np.exp(1j * k * r)
        out: Dict[str, np.ndarray] = {}
        if "single" in kinds:
            out["single"] = e * ir / FOUR_PI
        if "double" in kinds or "adjoint" in kinds:
            g1 = (e * (1j * k * r - 1.0) if k != 0 else -1.0) * ir3 / FOUR_PI
            if "double" in kinds:
                out["double"] = -g1 * _dot(R, ny)
            if "adjoint" in kinds:
                out["adjoint"] = g1 * _dot(R, nx)
        if "hyperdiff" in kinds:
            A, B = _hyperdiff_coeffs(k, r, series_kr)
            rnx = _dot(R, nx)
            rny = _dot(R, ny)
            out["hyperdiff"] = -(B * rnx * rny * ir * ir + A * _dot(nx, ny)) * ir3 / FOUR_PI
    return out


def kernel_value(kid: KernelId, x, nx, y, ny, series_kr: float = 1e-4):
    """Single kernel evaluation between surface points (x, nx) and (y, ny)."""
    R = np.asarray(x, float) - np.asarray(y, float)
    if np.any(np.sum(R * R, -1) == 0):
        raise ValueError("coincident nodes")
    nx = None if nx is None else np.asarray(nx, float)
    ny = None if ny is None else np.asarray(ny, float)
    return _kernel_eval((kid.kind,), kid.k, R, nx, ny, series_kr)[kid.kind]


def greens_derivatives(k: float, R: np.ndarray):
    """Radial factors of G and its x-derivatives for R = x - y.

    grad G = g1 R, hess G = g1 I + g2 R R^T,
    d^3 G = g2 (d_ij R_l + d_il R_j + d_jl R_i) + g3 R_i R_j R_l.
    """
    r = np.linalg.norm(R, axis=-1)
    z = 1j * k * r
    e = np.exp(z)
    G = e / (FOUR_PI * r)
    g1 = e * (z - 1.0) / (FOUR_PI * r**3)
    g2 = e * (-(k * r) ** 2 - 3.0 * z + 3.0) / (FOUR_PI * r**5)
    g3 = e * (z**3 - 6.0 * z**2 + 15.0 * z - 15.0) / (FOUR_PI * r**7)
    return G, g1, g2, g3


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------


@dataclass
class KernelMatrix:
    data: np.ndarray
    kid: KernelId
    fingerprint: str

    @property
    def N(self) -> int:
        return self.data.shape[0]

    def __matmul__(self, x):
        return self.data @ x


def dump_matrix(km: KernelMatrix, path) -> None:
    """Binary dump: b'CFOM', u32 N, u8 kernel id, f64 k, then row-major (re, im) f64 pairs."""
    a = np.ascontiguousarray(km.data, dtype=np.complex128)
    with open(path, "wb") as fh:
        fh.write(b"CFOM")
        fh.write(struct.pack("<IBd", km.N, _KIND_CODE[km.kid.kind], float(km.kid.k)))
        fh.write(a.astype("<c16").tobytes())


def load_matrix(path) -> Tuple[np.ndarray, KernelId]:
    with open(path, "rb") as fh:
        if fh.read(4) != b"CFOM":
            raise ValueError("not a CFOM matrix dump")
        n, code, k = struct.unpack("<IBd", fh.read(13))
        data = np.frombuffer(fh.read(), dtype="<c16")
    kind = {v: key for key, v in _KIND_CODE.items()}[code]
    return data.reshape(n, n).astype(np.complex128), KernelId(kind, k)


# ---------------------------------------------------------------------------
# Near-field engine
# ---------------------------------------------------------------------------


@dataclass
class _Cells:
    u0: np.ndarray
    u1: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    tid: np.ndarray

    def take(self, m):
        return _Cells(self.u0[m], self.u1[m], self.v0[m], self.v1[m], self.tid[m])

    @staticmethod
    def concat(parts: List["_Cells"]) -> "_Cells":
        return _Cells(*(np.concatenate([getattr(c, f) for c in parts]) for f in ("u0", "u1", "v0", "v1", "tid")))

    def __len__(self):
        return self.u0.size


_S3 = np.array([-1.0, 0.0, 1.0])
_SU, _SV = (a.ravel() for a in np.meshgrid(_S3, _S3, indexing="ij"))


def _quadtree(patch: Patch, tx: np.ndarray, cells: _Cells, ratio: float, max_depth: int) -> _Cells:
    """Refine cells until each target sees its cell from ``ratio`` radii away."""
    done: List[_Cells] = []
    for depth in range(max_depth + 1):
        if len(cells) == 0:
            break
        uc, hu = 0.5 * (cells.u0 + cells.u1), 0.5 * (cells.u1 - cells.u0)
        vc, hv = 0.5 * (cells.v0 + cells.v1), 0.5 * (cells.v1 - cells.v0)
        X = patch.evaluate(uc[:, None] + hu[:, None] * _SU, vc[:, None] + hv[:, None] * _SV)[0]
        ctr = X[:, 4]
        rad = np.max(np.linalg.norm(X - ctr[:, None], axis=-1), axis=1)
        dist = np.linalg.norm(tx[cells.tid] - ctr, axis=-1)
        ok = dist >= ratio * rad
        if depth == max_depth:
            ok[:] = True
        done.append(cells.take(ok))
        rest = cells.take(~ok)
        if len(rest) == 0:
            break
        Xr = X[~ok]
        lu = np.linalg.norm(Xr[:, 7] - Xr[:, 1], axis=-1)  # (1,0) - (-1,0)
        lv = np.linalg.norm(Xr[:, 5] - Xr[:, 3], axis=-1)
        su = 2.0 * lu >= lv  # split in u unless the cell is long in v only
        sv = 2.0 * lv >= lu
        um = 0.5 * (rest.u0 + rest.u1)
        vm = 0.5 * (rest.v0 + rest.v1)
        new = []
        for lo_u, hi_u, lo_v, hi_v, m in (
            (rest.u0, um, rest.v0, vm, su & sv), (um, rest.u1, rest.v0, vm, su & sv),
            (rest.u0, um, vm, rest.v1, su & sv), (um, rest.u1, vm, rest.v1, su & sv),
            (rest.u0, um, rest.v0, rest.v1, su & ~sv), (um, rest.u1, rest.v0, rest.v1, su & ~sv),
            (rest.u0, rest.u1, rest.v0, vm, ~su & sv), (rest.u0, rest.u1, vm, rest.v1, ~su & sv),
        ):
            new.append(_Cells(lo_u[m], hi_u[m], lo_v[m], hi_v[m], rest.tid[m]))
        cells = _Cells.concat(new)
    return _Cells.concat(done) if done else cells


def _contract(Kw, Lu, Lv):
    """sum_ab Kw[l,a,b] Lu[l,a,i] Lv[l,b,j] -> (l, i, j)."""
    return np.matmul(np.matmul(np.swapaxes(Lu, 1, 2), Kw), Lv)


def _segment_sum(vals: np.ndarray, tid: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n,) + vals.shape[1:], dtype=vals.dtype)
    if tid.size == 0:
        return out
    order = np.argsort(tid, kind="stable")
    ts = tid[order]
    starts = np.flatnonzero(np.r_[True, ts[1:] != ts[:-1]])
    out[ts[starts]] = np.add.reduceat(vals[order], starts, axis=0)
    return out


class _NearEngine:
    def __init__(self, grid: SurfaceGrid, kinds: Sequence[str], k: float, cfg: QuadConfig):
        self.grid = grid
        self.kinds = list(kinds)
        self.k = k
        self.cfg = cfg
        self.p = grid.p
        self.nodes = grid.gl_nodes
        self.bw = barycentric_weights(self.nodes)
        qd, qa = cfg.orders(self.p)
        self.ta, self.wa = gauss_legendre(qa)
        td, wd = gauss_legendre(qd)
        self.td, self.wd = 0.5 * (td + 1.0), 0.5 * wd  # on [0, 1]
        self.dtype = np.float64 if k == 0 else np.complex128
        self.chunk_pts = 400_000

    def _leaf_rule(self, patch: Patch, cells: _Cells, tx, tnu):
        """Integrate kernel x Lagrange basis over cells; returns {kind: (n_cells, p, p)}."""
        q = self.ta.size
        uc, hu = 0.5 * (cells.u0 + cells.u1), 0.5 * (cells.u1 - cells.u0)
        vc, hv = 0.5 * (cells.v0 + cells.v1), 0.5 * (cells.v1 - cells.v0)
        U = uc[:, None] + hu[:, None] * self.ta  # (l, q)
        V = vc[:, None] + hv[:, None] * self.ta
        y, ny, jac = patch.frame(U[:, :, None], V[:, None, :])
        w = jac * (hu * hv)[:, None, None] * np.outer(self.wa, self.wa)
        R = tx[cells.tid][:, None, None, :] - y
        nx = None if tnu is None else tnu[cells.tid][:, None, None, :]
        kv = _kernel_eval(self.kinds, self.k, R, nx, ny, self.cfg.series_kr)
        Lu = lagrange_basis(self.nodes, U, self.bw)
        Lv = lagrange_basis(self.nodes, V, self.bw)
        return {kd: _contract(kv[kd] * w, Lu, Lv) for kd in self.kinds}

    def _duffy_rule(self, patch: Patch, u0, v0, a, tx, tnu):
        """Four Duffy triangles filling the square of half-width a around each target."""
        nt = u0.size
        s, t = np.meshgrid(self.td, self.td, indexing="ij")
        ws = np.outer(self.wd, self.wd)
        corners = np.array([[1, -1], [1, 1], [-1, 1], [-1, -1], [1, -1]], float)
        Us, Vs, Ws = [], [], []
        for c in range(4):
            A, B = corners[c], corners[c + 1]
            pu = A[0] + t * (B[0] - A[0])
            pv = A[1] + t * (B[1] - A[1])
            area2 = abs(A[0] * B[1] - A[1] * B[0])
            Us.append(s * pu)
            Vs.append(s * pv)
            Ws.append(ws * s * area2)
        du = np.concatenate([x.ravel() for x in Us])
        dv = np.concatenate([x.ravel() for x in Vs])
        dw = np.concatenate([x.ravel() for x in Ws])
        U = u0[:, None] + a[:, None] * du
        V = v0[:, None] + a[:, None] * dv
        y, ny, jac = patch.frame(U, V)
        w = jac * dw * (a * a)[:, None]
        R = tx[:, None, :] - y
        nx = None if tnu is None else tnu[:, None, :]
        kv = _kernel_eval(self.kinds, self.k, R, nx, ny, self.cfg.series_kr)
        Lu = lagrange_basis(self.nodes, U, self.bw)
        Lv = lagrange_basis(self.nodes, V, self.bw)
        return {kd: np.einsum("tq,tqa,tqb->tab", kv[kd] * w, Lu, Lv, optimize=True) for kd in self.kinds}

    def weights(self, patch: Patch, tx, tnu, own_uv=None) -> Dict[str, np.ndarray]:
        """(n_targets, p, p) weights of the patch's Lagrange basis for each kernel."""
        nt = tx.shape[0]
        p = self.p
        out = {kd: np.zeros((nt, p, p), self.dtype) for kd in self.kinds}
        if nt == 0:
            return out
        if own_uv is None:
            cells = _Cells(-np.ones(nt), np.ones(nt), -np.ones(nt), np.ones(nt), np.arange(nt))
        else:
            u0, v0 = own_uv[:, 0], own_uv[:, 1]
            a = np.min(np.stack([1 - u0, 1 + u0, 1 - v0, 1 + v0]), axis=0)
            dres = self._duffy_rule(patch, u0, v0, a, tx, tnu)
            for kd in self.kinds:
                out[kd] += dres[kd]
            parts = []
            ub = [(-np.ones(nt), u0 - a), (u0 - a, u0 + a), (u0 + a, np.ones(nt))]
            vb = [(-np.ones(nt), v0 - a), (v0 - a, v0 + a), (v0 + a, np.ones(nt))]
            for i in range(3):
                for j in range(3):
                    if i == 1 and j == 1:
                        continue
                    c = _Cells(ub[i][0], ub[i][1], vb[j][0], vb[j][1], np.arange(nt))
                    keep = (c.u1 - c.u0 > 1e-13) & (c.v1 - c.v0 > 1e-13)
                    parts.append(c.take(keep))
            cells = _Cells.concat(parts)
        leaves = _quadtree(patch, tx, cells, self.cfg.accept_ratio, self.cfg.max_depth)
        q2 = self.ta.size ** 2
        step = max(1, self.chunk_pts // q2)
        for s0 in range(0, len(leaves), step):
            sub = leaves.take(slice(s0, s0 + step))
            res = self._leaf_rule(patch, sub, tx, tnu)
            for kd in self.kinds:
                out[kd] += _segment_sum(res[kd], sub.tid, nt)
        return out


def _patch_balls(grid: SurfaceGrid, cfg: QuadConfig):
    """Centre and near radius for every patch."""
    ctr, rad = [], []
    s = np.linspace(-1, 1, 5)
    bu = np.concatenate([s, s, -np.ones(5), np.ones(5)])
    bv = np.concatenate([-np.ones(5), np.ones(5), s, s])
    diam = grid.patch_diameters()
    for i, P in enumerate(grid.patches):
        c = P.evaluate(0.0, 0.0)[0]
        xb = P.evaluate(bu, bv)[0]
        R = np.max(np.linalg.norm(xb - c, axis=-1))
        ctr.append(c)
        rad.append(R + cfg.eta_near * diam[i] / grid.p)
    return np.array(ctr), np.array(rad)


def near_pairs(grid: SurfaceGrid, targets: np.ndarray, cfg: QuadConfig) -> List[np.ndarray]:
    """For each patch, indices of targets inside its near ball."""
    ctr, rad = _patch_balls(grid, cfg)
    tree = cKDTree(targets)
    return [np.asarray(tree.query_ball_point(ctr[i], rad[i]), dtype=int) for i in range(len(ctr))]


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def assemble_many(kids: Iterable[KernelId], grid: SurfaceGrid, cfg: Optional[QuadConfig] = None) -> Dict[KernelId, KernelMatrix]:
    """Assemble several kernels sharing one wavenumber in a single pass."""
    cfg = cfg or QuadConfig()
    kids = list(kids)
    ks = {kid.k for kid in kids}
    if len(ks) != 1:
        out: Dict[KernelId, KernelMatrix] = {}
        for k in sorted(ks):
            out.update(assemble_many([kid for kid in kids if kid.k == k], grid, cfg))
        return out
    k = ks.pop()
    kinds = [kid.kind for kid in kids]
    N, p = grid.N, grid.p
    dtype = np.float64 if k == 0 else np.complex128
    mats = {kd: np.empty((N, N), dtype) for kd in kinds}
    x, nu, w = grid.points, grid.normals, grid.weights

    # far field, native weights
    for r0 in range(0, N, cfg.row_block):
        r1 = min(N, r0 + cfg.row_block)
        R = x[r0:r1, None, :] - x[None, :, :]
        kv = _kernel_eval(kinds, k, R, nu[r0:r1, None, :], nu[None, :, :], cfg.series_kr)
        for kd in kinds:
            blk = kv[kd] * w
            idx = np.arange(r0, r1)
            blk[idx - r0, idx] = 0.0
            mats[kd][r0:r1] = blk

    # near field and self patches
    eng = _NearEngine(grid, kinds, k, cfg)
    lists = near_pairs(grid, x, cfg)
    for i, P in enumerate(grid.patches):
        sl = grid.patch_range(i)
        tg = lists[i]
        own = (tg >= sl.start) & (tg < sl.stop)
        oth = tg[~own]
        own_idx = np.arange(sl.start, sl.stop)
        wo = eng.weights(P, x[own_idx], nu[own_idx], grid.uv[own_idx])
        wn = eng.weights(P, x[oth], nu[oth])
        for kd in kinds:
            mats[kd][own_idx, sl] = wo[kd].reshape(own_idx.size, p * p)
            mats[kd][oth, sl] = wn[kd].reshape(oth.size, p * p)

    out = {}
    for kid in kids:
        m = mats[kid.kind]
        if not np.all(np.isfinite(m)):
            i, j = np.argwhere(~np.isfinite(m))[0]
            raise FloatingPointError(f"non-finite entry at ({i}, {j}), patch {grid.patch_id[j]}")
        out[kid] = KernelMatrix(m, kid, grid.fingerprint)
    return out


def assemble(kid: KernelId, grid: SurfaceGrid, cfg: Optional[QuadConfig] = None) -> KernelMatrix:
    return assemble_many([kid], grid, cfg)[kid]


# ---------------------------------------------------------------------------
# Layer potentials at off-surface targets
# ---------------------------------------------------------------------------


def closest_point(patch: Patch, target, uv0=(0.0, 0.0), maxiter: int = 20, tol: float = 1e-12):
    """Gauss-Newton for min |x(u,v) - target|^2 on the patch, clamped to [-1,1]^2."""
    uv = np.array(uv0, float)
    for _ in range(maxiter):
        x, xu, xv = patch.evaluate(uv[0], uv[1])
        J = np.stack([xu, xv], -1)
        step = np.linalg.lstsq(J, target - x, rcond=None)[0]
        uv_new = np.clip(uv + step, -1.0, 1.0)
        if np.max(np.abs(uv_new - uv)) < tol:
            uv = uv_new
            break
        uv = uv_new
    x = patch.evaluate(uv[0], uv[1])[0]
    return uv, float(np.linalg.norm(x - target))


def check_targets(grid: SurfaceGrid, targets: np.ndarray, cfg: Optional[QuadConfig] = None) -> np.ndarray:
    """Boolean mask of targets that are safely away from the surface for smooth quadrature."""
    cfg = cfg or QuadConfig()
    ok = np.ones(len(targets), bool)
    for i, lst in enumerate(near_pairs(grid, targets, cfg)):
        ok[lst] = False
    return ok


def _source_chunks(N: int, M: int, budget: int = 2_000_000):
    step = max(1, budget // max(N, 1))
    for t0 in range(0, M, step):
        yield slice(t0, min(M, t0 + step))


def layer_potential(kind: str, k: float, grid: SurfaceGrid, density, targets, cfg: Optional[QuadConfig] = None,
                    check: bool = True):
    """Smooth-quadrature single ('single') or double ('double') layer potential.

    ``density`` is (N,) or (N, 3); the result has shape (M,) or (M, 3).
    """
    targets = np.atleast_2d(np.asarray(targets, float))
    if check and not np.all(check_targets(grid, targets, cfg)):
        raise ValueError("target too close to the surface for smooth quadrature")
    dens = np.asarray(density)
    wd = dens * (grid.weights if dens.ndim == 1 else grid.weights[:, None])
    out = np.zeros((targets.shape[0],) + dens.shape[1:], np.complex128)
    for sl in _source_chunks(grid.N, targets.shape[0]):
        R = targets[sl, None, :] - grid.points[None]
        kv = _kernel_eval((kind,), k, R, None, grid.normals[None], 1e-4)[kind]
        out[sl] = kv @ wd
    return out


def layer_potential_adaptive(k: float, grid: SurfaceGrid, densities: Dict[str, np.ndarray], targets,
                             cfg: Optional[QuadConfig] = None) -> np.ndarray:
    """Sum of single/double layer potentials valid at any exterior or interior point.

    ``densities`` maps 'single' / 'double' to (N,) or (N, 3) arrays. Targets
    inside a patch's near ball get that patch's contribution from the adaptive
    near-field rule instead of the native nodes.
    """
    cfg = cfg or QuadConfig()
    targets = np.atleast_2d(np.asarray(targets, float))
    kinds = sorted(densities)
    out = sum(layer_potential(kd, k, grid, densities[kd], targets, cfg, check=False) for kd in kinds)
    eng = _NearEngine(grid, kinds, k, cfg)
    p2 = grid.p ** 2
    for i, lst in enumerate(near_pairs(grid, targets, cfg)):
        if len(lst) == 0:
            continue
        rng = grid.patch_range(i)
        tx = targets[lst]
        W = eng.weights(grid.patches[i], tx, np.zeros_like(tx))
        R = tx[:, None, :] - grid.points[None, rng]
        kv = _kernel_eval(tuple(kinds), k, R, None, grid.normals[None, rng], cfg.series_kr)
        for kd in kinds:
            dens = np.asarray(densities[kd])[rng]
            smooth = kv[kd] * grid.weights[None, rng]
            out[lst] += (W[kd].reshape(len(lst), p2) - smooth) @ dens
    return out


def potential_derivatives(kind: str, k: float, grid: SurfaceGrid, density: np.ndarray, targets,
                          cfg: Optional[QuadConfig] = None, check: bool = True):
    """Value, divergence and gradient of the divergence of a vector layer potential.

    Returns (F (M,3), div F (M,), grad div F (M,3)) for F = S[a] or D[a].
    """
    targets = np.atleast_2d(np.asarray(targets, float))
    if check and not np.all(check_targets(grid, targets, cfg)):
        raise ValueError("target too close to the surface for smooth quadrature")
    a = np.asarray(density) * grid.weights[:, None]
    ny = grid.normals
    M = targets.shape[0]
    F = np.zeros((M, 3), np.complex128)
    div = np.zeros(M, np.complex128)
    gdiv = np.zeros((M, 3), np.complex128)
    for sl in _source_chunks(grid.N * 4, M):
        R = targets[sl, None, :] - grid.points[None]
        G, g1, g2, g3 = greens_derivatives(k, R)
        Ra = np.einsum("tni,ni->tn", R, a)
        if kind == "single":
            F[sl] = G @ a
            div[sl] = np.sum(g1 * Ra, 1)
            gdiv[sl] = g1 @ a + np.einsum("tn,tni->ti", g2 * Ra, R)
        elif kind == "double":
            Rn = np.einsum("tni,ni->tn", R, ny)
            na = np.sum(ny * a, 1)
            F[sl] = (-g1 * Rn) @ a
            div[sl] = -np.sum(g1 * na + g2 * Rn * Ra, 1)
            gdiv[sl] = -((g2 * Rn) @ a + (g2 * Ra) @ ny + np.einsum("tn,tni->ti", g2 * na + g3 * Ra * Rn, R))
        else:
            raise ValueError(f"unknown potential {kind!r}")
    return F, div, gdiv
