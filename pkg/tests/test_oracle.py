from __future__ import annotations

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from cfoie.incident import DipoleSource, dipole_field_at, fd_jacobian
from cfoie.oracle import (
    MieConfig,
    dipole_reference,
    greens_identity_check,
    mie_scattered,
    plane_wave_total_tangential_residual,
)
from cfoie.surfaces import SurfaceSpec, discretize, make_surface


def _curl(J):
    return np.stack([J[:, 2, 1] - J[:, 1, 2], J[:, 0, 2] - J[:, 2, 0], J[:, 1, 0] - J[:, 0, 1]], -1)


# ---------------------------------------------------------------------------
# Mie series
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "cfg",
    [
        MieConfig(),
        MieConfig(k=0.3),
        MieConfig(radius=2.0, k=4.0, p=(0.0, 1.0, 1.0), d=(1.0, 0.0, 0.0), center=(0.5, -1.0, 0.2)),
    ],
    ids=["k=pi", "k=0.3", "shifted"],
)
def test_mie_pec_residual(cfg):
    assert plane_wave_total_tangential_residual(cfg) <= 1e-8


def test_mie_maxwell_consistency(rng):
    cfg = MieConfig()
    X = rng.normal(size=(25, 3))
    X *= (1.5 + 2 * rng.random(25))[:, None] / np.linalg.norm(X, axis=1)[:, None]
    h = 1e-3
    JE = fd_jacobian(lambda x: mie_scattered(cfg, x)[0], X, h)
    JH = fd_jacobian(lambda x: mie_scattered(cfg, x)[1], X, h)
    Es, Hs = mie_scattered(cfg, X)
    scale = np.max(np.abs(Es))
    assert np.max(np.abs(_curl(JE) - 1j * cfg.k * Hs)) <= 1e-8 * scale
    assert np.max(np.abs(_curl(JH) + 1j * cfg.k * Es)) <= 1e-8 * scale


def test_mie_rotation_covariance(rng):
    Q = Rotation.from_rotvec([0.3, -1.1, 0.7]).as_matrix()
    p, d = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
    X = rng.normal(size=(20, 3)) * 3
    X = X[np.linalg.norm(X, axis=1) > 1.2]
    E1, H1 = mie_scattered(MieConfig(p=tuple(p), d=tuple(d)), X)
    E2, H2 = mie_scattered(MieConfig(p=tuple(Q @ p), d=tuple(Q @ d)), X @ Q.T)
    assert np.allclose(E2, E1 @ Q.T, atol=1e-12)
    assert np.allclose(H2, H1 @ Q.T, atol=1e-12)
    assert np.allclose(np.linalg.norm(E2, axis=1), np.linalg.norm(E1, axis=1), atol=1e-12)


def test_mie_errors():
    with pytest.raises(ValueError):
        MieConfig(radius=-1.0)
    with pytest.raises(ValueError):
        MieConfig(p=(1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        MieConfig(degree=3)
    with pytest.raises(ValueError):
        mie_scattered(MieConfig(), np.array([[0.0, 0.0, 0.5]]))
    with pytest.raises(ArithmeticError):
        mie_scattered(MieConfig(k=10.0, degree=5), np.array([[0.0, 0.0, 2.0]]))


def test_mie_default_truncation():
    assert MieConfig().L == 24
    assert MieConfig(degree=9).L == 9


# ---------------------------------------------------------------------------
# manufactured dipole and Green's identity
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["electric", "magnetic"])
def test_dipole_reference_cancels_incident(kind, rng):
    src = DipoleSource((0.0, 0.3, 0.0), (1.0, 0.5j, 0.0), 2.0, kind)
    X = rng.normal(size=(10, 3)) * 4
    Es, Hs = dipole_reference(src, X)
    Ei, Hi = dipole_field_at(src, X)
    assert np.all(Es + Ei == 0) and np.all(Hs + Hi == 0)


def test_greens_identity_refinement_sweep():
    res = []
    for p in (4, 6, 8):
        grid = discretize(make_surface(SurfaceSpec.sphere(), 2), p)
        rep = greens_identity_check(grid, (0.1, -0.2, 0.15), np.pi, calderon=False)
        res.append(rep)
    ext = [r.exterior for r in res]
    near = [r.near for r in res]
    assert ext[1] < ext[0] and ext[2] <= 1.1 * ext[1]
    assert near[1] < near[0] and near[2] <= 1.1 * near[1]
    assert ext[2] <= 1e-6
    assert res[2].n_near > 0 and res[2].n_exterior == 100
    assert res[2].n_interior > 0 and res[2].interior < 1e-6


def test_greens_identity_calderon_small_torus(torus16):
    rep = greens_identity_check(torus16, (1.0, 0.0, 0.0), 1.0)
    assert rep.n_interior == 0
    assert rep.trace < 1e-2
    assert rep.calderon < 5e-2
    assert set(rep.to_dict()) >= {"exterior", "near", "calderon", "trace"}
