from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from cfoie.incident import (
    DipoleSource,
    IncidentTraces,
    PlaneWave,
    dipole_field_at,
    dipole_normal_derivatives,
    dipole_traces,
    fd_jacobian,
    planewave_traces,
    point_inside,
    rhs,
)
from cfoie.operators import to_nodal

PW = PlaneWave((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), np.pi)


def _curl(J):
    return np.stack([J[:, 2, 1] - J[:, 1, 2], J[:, 0, 2] - J[:, 2, 0], J[:, 1, 0] - J[:, 0, 1]], -1)


# ---------------------------------------------------------------------------
# plane waves
# ---------------------------------------------------------------------------


def test_planewave_validation():
    with pytest.raises(ValueError):
        PlaneWave((1.0, 0.0, 0.0), (1.0, 0.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        PlaneWave((1.0, 0.0, 0.0), (0.0, 0.0, 2.0), 1.0)
    with pytest.raises(ValueError):
        PlaneWave((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.0)


def test_planewave_traces(sphere24):
    tr = planewave_traces(PW, sphere24)
    E = to_nodal(tr.gE)
    assert np.allclose(np.linalg.norm(E, axis=1), 1.0)
    assert np.max(np.abs(E[:, 2])) == 0.0
    fac = 1j * np.pi * sphere24.normals[:, 2]
    assert np.array_equal(to_nodal(tr.dE), fac[:, None] * E)
    assert PW.fields(np.zeros(3))[0][0] == pytest.approx(np.array([1.0, 0.0, 0.0]))


def test_planewave_maxwell_pair(rng):
    X = rng.normal(size=(20, 3))
    J = fd_jacobian(lambda x: PW.fields(x)[0], X, 1e-3)
    _, H = PW.fields(X)
    assert np.allclose(_curl(J), 1j * np.pi * H, atol=1e-9)


def test_rhs_at_pole():
    grid = SimpleNamespace(points=np.zeros((1, 3)), normals=np.array([[0.0, 0.0, 1.0]]))
    tr = planewave_traces(PW, grid)
    eta = 100 * np.pi
    f = to_nodal(rhs("DE", tr, eta))[0]
    assert np.allclose(f, -1j * (np.pi + eta) * np.array([1, 0, 0]), atol=1e-12)
    g = to_nodal(rhs("RDM", tr, eta))[0]
    assert np.allclose(g, -1j * (np.pi + eta) * np.array([0, 1, 0]), atol=1e-12)


def test_rhs_linear_and_validated(sphere6):
    tr = planewave_traces(PW, sphere6)
    assert np.allclose(rhs("DE", tr.scale(2 - 1j), 3.0), (2 - 1j) * rhs("DE", tr, 3.0))
    assert np.allclose(rhs("DE", tr + tr, 3.0), 2 * rhs("DE", tr, 3.0))
    assert np.allclose(rhs("DE", tr, 1e-300), -tr.dE)
    with pytest.raises(ValueError):
        rhs("DE", tr, 0.0)
    with pytest.raises(ValueError):
        rhs("XY", tr, 1.0)


# ---------------------------------------------------------------------------
# dipoles
# ---------------------------------------------------------------------------

SOURCES = [
    DipoleSource((0.1, -0.2, 0.15), (0.3, 1.0, -0.5j), np.pi, "electric"),
    DipoleSource((0.1, -0.2, 0.15), (0.3, 1.0, -0.5j), np.pi, "magnetic"),
]


@pytest.mark.parametrize("src", SOURCES, ids=["electric", "magnetic"])
def test_dipole_maxwell_consistency(src, rng):
    X = rng.normal(size=(30, 3))
    X *= (1.5 + rng.random(30))[:, None] / np.linalg.norm(X, axis=1)[:, None]
    h = 1e-4 * 2.0
    JE = fd_jacobian(lambda x: dipole_field_at(src, x)[0], X, h)
    JH = fd_jacobian(lambda x: dipole_field_at(src, x)[1], X, h)
    E, H = dipole_field_at(src, X)
    scale = np.max(np.abs(E))
    assert np.max(np.abs(_curl(JE) - 1j * src.k * H)) <= 1e-6 * scale
    assert np.max(np.abs(_curl(JH) + 1j * src.k * E)) <= 1e-6 * scale
    assert np.max(np.abs(np.trace(JE, axis1=1, axis2=2))) <= 1e-6 * scale
    assert np.max(np.abs(np.trace(JH, axis1=1, axis2=2))) <= 1e-6 * scale


@pytest.mark.parametrize("src", SOURCES, ids=["electric", "magnetic"])
def test_dipole_normal_derivatives_match_fd(src, rng):
    X = rng.normal(size=(100, 3))
    X *= (1.0 + rng.random(100))[:, None] / np.linalg.norm(X, axis=1)[:, None]
    nu = rng.normal(size=(100, 3))
    nu /= np.linalg.norm(nu, axis=1)[:, None]
    h = 1e-4 * 2.0
    for idx in (0, 1):
        J = fd_jacobian(lambda x: dipole_field_at(src, x)[idx], X, h)
        fd = np.einsum("nil,nl->ni", J, nu)
        an = dipole_normal_derivatives(src, X, nu)[2 + idx]
        assert np.max(np.abs(fd - an)) <= 1e-6 * np.max(np.abs(an))


def test_dipole_far_field_decay():
    src = SOURCES[0]
    xhat = np.array([0.6, 0.0, 0.8])
    vals = [np.linalg.norm(dipole_field_at(src, R * xhat)[0]) * R for R in np.logspace(1, 3, 7)]
    assert max(vals) / min(vals) < 1.5


def test_dipole_trace_guards(sphere24, torus16):
    with pytest.raises(ValueError):
        dipole_traces(DipoleSource((2.0, 0.0, 0.0), (0, 0, 1), 1.0), sphere24)
    with pytest.raises(ValueError):
        dipole_traces(DipoleSource((0.0, 0.0, 0.9), (0, 0, 1), 1.0), sphere24)
    # the hole of the torus is outside the body
    with pytest.raises(ValueError):
        dipole_traces(DipoleSource((0.0, 0.0, 0.0), (0, 0, 1), 1.0), torus16)
    tr = dipole_traces(DipoleSource((1.0, 0.0, 0.0), (0, 0, 1), 1.0), torus16)
    assert isinstance(tr, IncidentTraces) and not tr.regular_inside
    assert np.all(np.isfinite(tr.dE))
    with pytest.raises(ValueError):
        DipoleSource((0, 0, 0), (0, 0, 1), 1.0, kind="quadrupole")


def test_point_inside(torus16):
    pts = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, -1.0, 0.1], [3.0, 0.0, 0.0]])
    assert point_inside(torus16, pts).tolist() == [True, False, True, False]
