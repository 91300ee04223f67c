"""Operator algebra on surface vector fields.

A surface field is a complex vector of length 3N laid out component-blocked:
``[x-components | y-components | z-components]``. Kernel operators act on each
Cartesian component with the same scalar N x N matrix; projectors and curvature
multipliers act pointwise through 3x3 blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .quadrature import (AdjointDouble, DoubleLayer, HypersingularDiff, KernelMatrix, QuadConfig,
                         SingleLayer, assemble_many)
from .surfaces import SurfaceGrid

FORMULATIONS = ("DE", "RDE", "DM", "RDM")


# ---------------------------------------------------------------------------
# Field layout helpers
# ---------------------------------------------------------------------------


def to_blocked(v: np.ndarray) -> np.ndarray:
    """(N, 3) nodal vectors -> blocked 3N vector."""
    return np.ascontiguousarray(np.asarray(v).T).reshape(-1)


def to_nodal(f: np.ndarray) -> np.ndarray:
    """Blocked 3N vector -> (N, 3)."""
    f = np.asarray(f)
    return f.reshape(3, -1).T


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


class BoundaryOperator:
    """Linear map on blocked 3N fields. ``apply`` accepts (3N,) or (3N, m)."""

    n: int  # number of nodes

    @property
    def shape(self):
        return (3 * self.n, 3 * self.n)

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.apply(x)

    def __matmul__(self, other):
        if isinstance(other, BoundaryOperator):
            return Product([self, other])
        return self.apply(other)

    def __add__(self, other: "BoundaryOperator") -> "BoundaryOperator":
        return Sum([self, other])

    def __sub__(self, other: "BoundaryOperator") -> "BoundaryOperator":
        return Sum([self, Scaled(-1.0, other)])

    def __neg__(self):
        return Scaled(-1.0, self)

    def __rmul__(self, c):
        return Scaled(c, self)

    def materialize(self, block: int = 512) -> np.ndarray:
        """Dense 3N x 3N matrix, built column block by column block."""
        m = 3 * self.n
        out = None
        for c0 in range(0, m, block):
            c1 = min(m, c0 + block)
            E = np.zeros((m, c1 - c0))
            E[np.arange(c0, c1), np.arange(c1 - c0)] = 1.0
            cols = self.apply(E)
            if out is None:
                out = np.zeros((m, m), dtype=np.result_type(cols.dtype, np.float64))
            out[:, c0:c1] = cols
        return out


class Pointwise(BoundaryOperator):
    """Multiplication by a 3x3 matrix per node, blocks shape (N, 3, 3)."""

    def __init__(self, blocks: np.ndarray):
        self.blocks = np.asarray(blocks)
        if self.blocks.ndim != 3 or self.blocks.shape[1:] != (3, 3):
            raise ValueError("pointwise blocks must have shape (N, 3, 3)")
        self.n = self.blocks.shape[0]

    def apply(self, x):
        X = x.reshape(3, self.n, -1)
        out = np.einsum("nij,jnm->inm", self.blocks, X)
        return out.reshape(x.shape)


class Identity(BoundaryOperator):
    def __init__(self, n: int):
        self.n = n

    def apply(self, x):
        return x.copy()


class KernelOp(BoundaryOperator):
    """Scalar N x N matrix applied to each Cartesian component."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = matrix
        self.n = matrix.shape[0]

    def apply(self, x):
        X = x.reshape(3, self.n, -1)
        Y = self.matrix @ np.moveaxis(X, 1, 0).reshape(self.n, -1)
        return np.moveaxis(Y.reshape(self.n, 3, -1), 0, 1).reshape(x.shape)


class Sandwich(BoundaryOperator):
    """x -> left * A (right . x), with left/right nodal vectors (N, 3)."""

    def __init__(self, left: np.ndarray, matrix: np.ndarray, right: np.ndarray):
        self.left, self.matrix, self.right = left, matrix, right
        self.n = matrix.shape[0]

    def apply(self, x):
        X = x.reshape(3, self.n, -1)
        s = np.einsum("nj,jnm->nm", self.right, X)
        y = self.matrix @ s
        return np.einsum("ni,nm->inm", self.left, y).reshape(x.shape)


class RankK(BoundaryOperator):
    """x -> scale * cols @ (rows @ x); cols (3N, J), rows (J, 3N)."""

    def __init__(self, cols: np.ndarray, rows: np.ndarray, scale: complex = 1.0):
        self.cols, self.rows, self.scale = cols, rows, scale
        self.n = cols.shape[0] // 3

    def apply(self, x):
        return self.scale * (self.cols @ (self.rows @ x))


class Sum(BoundaryOperator):
    def __init__(self, terms: Sequence[BoundaryOperator]):
        self.terms = list(terms)
        self.n = self.terms[0].n
        if any(t.n != self.n for t in self.terms):
            raise ValueError("operator size mismatch")

    def apply(self, x):
        out = self.terms[0].apply(x)
        for t in self.terms[1:]:
            out = out + t.apply(x)
        return out


class Product(BoundaryOperator):
    """Composition; factors[0] is applied last."""

    def __init__(self, factors: Sequence[BoundaryOperator]):
        self.factors = list(factors)
        self.n = self.factors[0].n
        if any(f.n != self.n for f in self.factors):
            raise ValueError("operator size mismatch")

    def apply(self, x):
        for f in reversed(self.factors):
            x = f.apply(x)
        return x


class Scaled(BoundaryOperator):
    def __init__(self, c: complex, op: BoundaryOperator):
        self.c, self.op = c, op
        self.n = op.n

    def apply(self, x):
        return self.c * self.op.apply(x)


class Dense(BoundaryOperator):
    def __init__(self, matrix: np.ndarray):
        self.matrix = matrix
        self.n = matrix.shape[0] // 3

    def apply(self, x):
        return self.matrix @ x


# ---------------------------------------------------------------------------
# Geometric multipliers
# ---------------------------------------------------------------------------


def normal_projector_blocks(grid: SurfaceGrid) -> np.ndarray:
    nu = grid.normals
    return nu[:, :, None] * nu[:, None, :]


def projector(grid: SurfaceGrid, which: str) -> Pointwise:
    """P_nu = nu nu^T or P_t = I - nu nu^T."""
    Pn = normal_projector_blocks(grid)
    if which == "normal":
        return Pointwise(Pn)
    if which == "tangential":
        return Pointwise(np.eye(3) - Pn)
    raise ValueError(f"unknown projector {which!r}")


def curvature_multiplier(grid: SurfaceGrid, which: str) -> Pointwise:
    if which == "meanH":
        return Pointwise(grid.mean_curv[:, None, None] * np.eye(3))
    if which == "shapeR":
        return Pointwise(grid.shape_op)
    raise ValueError(f"unknown curvature multiplier {which!r}")


# ---------------------------------------------------------------------------
# Kernel matrices and the hypersingular operator
# ---------------------------------------------------------------------------


@dataclass
class OperatorMatrices:
    """Scalar matrices needed by the formulations at one wavenumber."""

    k: float
    S0: np.ndarray
    K0p: np.ndarray
    S: np.ndarray
    K: np.ndarray
    Kp: np.ndarray
    Tdiff: Optional[np.ndarray]
    fingerprint: str
    T: Optional[np.ndarray] = None
    s0_condition: float = float("nan")
    extra: Dict[str, np.ndarray] = field(default_factory=dict)


def assemble_matrices(grid: SurfaceGrid, k: float, cfg: Optional[QuadConfig] = None) -> OperatorMatrices:
    cfg = cfg or QuadConfig()
    ids0 = [SingleLayer(0.0), AdjointDouble(0.0)]
    idk = [SingleLayer(k), DoubleLayer(k), AdjointDouble(k), HypersingularDiff(k)]
    m = assemble_many(ids0 + idk, grid, cfg)
    mats = OperatorMatrices(k, m[ids0[0]].data, m[ids0[1]].data, m[idk[0]].data, m[idk[1]].data,
                            m[idk[2]].data, m[idk[3]].data, grid.fingerprint)
    del m
    build_hypersingular(k, grid, mats)
    return mats


def build_hypersingular(k: float, grid: SurfaceGrid, mats: OperatorMatrices, max_condition: float = 1e12) -> KernelOp:
    """T = (K0'^2 - I/4) S0^{-1} + (T - T0), realized with an LU factorization of S0."""
    if mats.fingerprint != grid.fingerprint:
        raise ValueError("matrices were assembled on a different grid")
    if mats.T is None:
        N = grid.N
        lu, piv = sla.lu_factor(mats.S0)
        anorm = np.linalg.norm(mats.S0, 1)
        rcond, info = sla.lapack.dgecon(lu, anorm, norm="1")
        mats.s0_condition = 1.0 / rcond if rcond > 0 else np.inf
        if mats.s0_condition > max_condition:
            raise np.linalg.LinAlgError(f"S0 numerically singular (condition ~ {mats.s0_condition:.2e})")
        A = mats.K0p @ mats.K0p
        A[np.diag_indices(N)] -= 0.25
        # A S0^{-1} = (S0^{-T} A^T)^T
        T0 = sla.lu_solve((lu, piv), A.T, trans=1).T
        del A, lu
        if k > 0:
            Tdiff = mats.Tdiff
            Tdiff += T0
            T0 = Tdiff
        mats.T = T0
        mats.Tdiff = None  # folded into T
    return KernelOp(mats.T)


# ---------------------------------------------------------------------------
# Formulations
# ---------------------------------------------------------------------------


def default_eta(k: float) -> float:
    return 100.0 * k if k >= np.pi else 100.0 * np.pi


@dataclass(frozen=True)
class FormulationParams:
    k: float
    eta: Optional[float] = None
    xi: complex = 0.0
    formulation: str = "DE"

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("wavenumber must be positive")
        if self.eta is not None and self.eta == 0:
            raise ValueError("coupling parameter must be nonzero")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.xi != 0 and self.formulation in ("DM", "RDM"):
            raise ValueError("charge stabilization applies to the electric formulations only")

    @property
    def coupling(self) -> float:
        return default_eta(self.k) if self.eta is None else float(self.eta)

    @property
    def electric(self) -> bool:
        return self.formulation in ("DE", "RDE")


def _combos(mats: OperatorMatrices, eta: float):
    M1 = mats.T + 1j * eta * mats.K
    M2 = mats.Kp + 1j * eta * mats.S
    return M1, M2


def _check_mats(params: FormulationParams, grid: SurfaceGrid, mats: OperatorMatrices):
    if mats.fingerprint != grid.fingerprint:
        raise ValueError("matrices were assembled on a different grid")
    if not np.isclose(mats.k, params.k, rtol=1e-14, atol=0):
        raise ValueError("matrices were assembled at a different wavenumber")
    if mats.T is None:
        build_hypersingular(mats.k, grid, mats)


def build_Le(params: FormulationParams, grid: SurfaceGrid, mats: OperatorMatrices) -> BoundaryOperator:
    """L_e = -1/2{P_t + (i eta - 2H)P_nu} + {T + i eta K + 2(K' + i eta S)H}P_nu - (K' + i eta S)P_t."""
    _check_mats(params, grid, mats)
    eta = params.coupling
    Pn = normal_projector_blocks(grid)
    Pt = np.eye(3) - Pn
    H = grid.mean_curv[:, None, None]
    local = -0.5 * (Pt + (1j * eta - 2.0 * H) * Pn)
    M1, M2 = _combos(mats, eta)
    return Sum([
        Pointwise(local),
        Product([KernelOp(M1), Pointwise(Pn)]),
        Product([KernelOp(M2), Pointwise(2.0 * H * Pn - Pt)]),
    ])


def build_Lm(params: FormulationParams, grid: SurfaceGrid, mats: OperatorMatrices) -> BoundaryOperator:
    """L_m = -1/2{P_nu + (i eta - R)P_t} + {T + i eta K + (K' + i eta S)R}P_t - (K' + i eta S)P_nu."""
    _check_mats(params, grid, mats)
    eta = params.coupling
    Pn = normal_projector_blocks(grid)
    Pt = np.eye(3) - Pn
    R = grid.shape_op
    local = -0.5 * (Pn + (1j * eta * np.eye(3) - R) @ Pt)
    M1, M2 = _combos(mats, eta)
    return Sum([
        Pointwise(local),
        Product([KernelOp(M1), Pointwise(Pt)]),
        Product([KernelOp(M2), Pointwise(R @ Pt - Pn)]),
    ])


def build_Rnu(grid: SurfaceGrid, S0: np.ndarray) -> BoundaryOperator:
    """R_nu x = -2 P_t x - 4 nu S0(nu . x)."""
    Pt = np.eye(3) - normal_projector_blocks(grid)
    return Sum([Pointwise(-2.0 * Pt), Scaled(-4.0, Sandwich(grid.normals, S0, grid.normals))])


def build_Rt(grid: SurfaceGrid, S0: np.ndarray) -> BoundaryOperator:
    """R_t x = -2(P_nu + 2 P_t S0 P_t) x."""
    Pn = normal_projector_blocks(grid)
    Pt = Pointwise(np.eye(3) - Pn)
    return Sum([Pointwise(-2.0 * Pn), Scaled(-4.0, Product([Pt, KernelOp(S0), Pt]))])


def component_normal_fields(grid: SurfaceGrid) -> np.ndarray:
    """Columns nu_j (3N, J): the normal field masked to component j."""
    J = grid.n_components
    out = np.zeros((3 * grid.N, J))
    for j in range(J):
        m = (grid.component == j)[:, None]
        out[:, j] = to_blocked(grid.normals * m)
    return out


def charge_functionals(grid: SurfaceGrid) -> np.ndarray:
    """Rows l_j (J, 3N): l_j(x) = sum over nodes of component j of w nu . x."""
    J = grid.n_components
    out = np.zeros((J, 3 * grid.N))
    for j in range(J):
        m = (grid.component == j)[:, None]
        out[j] = to_blocked(grid.normals * grid.weights[:, None] * m)
    return out


def charge_gram(grid: SurfaceGrid, Le: Optional[BoundaryOperator] = None) -> np.ndarray:
    """Xi = Q L_e^{-1} V with V = [L_e nu_j] and Q = [l_i]; diag(|Gamma_j|) for disjoint components.

    Without ``Le`` the inner solve is skipped and Xi_ij = l_i(nu_j).
    """
    nus = component_normal_fields(grid)
    if Le is None:
        return charge_functionals(grid) @ nus
    V = Le.apply(nus.astype(complex))
    return charge_functionals(grid) @ np.linalg.solve(Le.materialize(), V)


def check_xi(xi: complex, grid: SurfaceGrid, rtol: float = 1e-8) -> None:
    if xi == 0:
        return
    for area in grid.component_areas():
        if abs(xi + 1.0 / area) <= rtol * abs(1.0 / area):
            raise ValueError(f"xi = -1/|Gamma_j| = {-1.0 / area:.6g} makes the modified equation ill-posed")


def charge_stabilize(Le_like: BoundaryOperator, grid: SurfaceGrid, xi: complex, Le: Optional[BoundaryOperator] = None,
                     Rnu: Optional[BoundaryOperator] = None) -> BoundaryOperator:
    """Add xi sum_j phi_j l_j (composed with R_nu on the right when given), phi_j = L_e nu_j."""
    if xi == 0:
        return Le_like
    check_xi(xi, grid)
    Le = Le_like if Le is None else Le
    phis = Le.apply(component_normal_fields(grid).astype(complex))
    term: BoundaryOperator = RankK(phis, charge_functionals(grid), xi)
    if Rnu is not None:
        term = Product([term, Rnu])
    return Sum([Le_like, term])


@dataclass
class SystemOperator:
    """The operator actually handed to the linear solver, plus the regularizer for RD runs."""

    op: BoundaryOperator
    regularizer: Optional[BoundaryOperator]
    params: FormulationParams


def build_system(params: FormulationParams, grid: SurfaceGrid, mats: OperatorMatrices) -> SystemOperator:
    f = params.formulation
    if params.electric:
        check_xi(params.xi, grid)
        Le = build_Le(params, grid, mats)
        if f == "DE":
            return SystemOperator(charge_stabilize(Le, grid, params.xi), None, params)
        Rn = build_Rnu(grid, mats.S0)
        return SystemOperator(charge_stabilize(Product([Le, Rn]), grid, params.xi, Le=Le, Rnu=Rn), Rn, params)
    Lm = build_Lm(params, grid, mats)
    if f == "DM":
        return SystemOperator(Lm, None, params)
    Rt = build_Rt(grid, mats.S0)
    return SystemOperator(Product([Lm, Rt]), Rt, params)
