"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one PASS/FAIL line (printed and repeated in the terminal
summary) before asserting. Fixtures return small result dicts and drop the
dense matrices before returning, so only one large system is alive at a time.
"""

from __future__ import annotations

import gc
import time

import numpy as np
import pytest

from cfoie.incident import DipoleSource, PlaneWave, dipole_traces, planewave_traces
from cfoie.operators import (
    FormulationParams,
    assemble_matrices,
    build_Le,
    charge_gram,
    curvature_multiplier,
    projector,
)
from cfoie.oracle import MieConfig, dipole_reference, greens_identity_check, mie_scattered
from cfoie.postprocess import (
    currents_and_strattonchu,
    evaluate_solution,
    fibonacci_sphere,
    relative_field_error,
    strattonchu,
    surface_current,
)
from cfoie.quadrature import DoubleLayer, SingleLayer, assemble_many
from cfoie.solver import SolveConfig, solve_formulation
from cfoie.surfaces import SurfaceSpec, discretize, make_surface

K = np.pi
FORMS = ("DE", "RDE", "DM", "RDM")
TOL = 1e-6
XI_LF = np.pi * 1e4
LAMBDA_OVER_D = (1e16, 1e8, 1e4, 1e2, 1e1, 1e0)

SPHERE_SRC = (0.1, -0.2, 0.15)
TORUS_SRC = (1.0, 0.1, 0.05)
MOMENT = (1.0, 0.5j, -0.3)


def _grid(kind: str, refinement: int, p: int, warp: float = 0.0):
    spec = SurfaceSpec.sphere() if kind == "sphere" else SurfaceSpec.torus(warp=warp)
    return discretize(make_surface(spec, refinement), p)


def _record(log, n: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {n:>2}: {title} | {detail}"
    print(line)
    log.append(line)


# ---------------------------------------------------------------------------
# 1-2: quadrature identities and hypersingular consistency
# ---------------------------------------------------------------------------

IDENTITY_SURFACES = {
    # (kind, refinement, p, interior point); sphere 96 patches p=8, torus 64 patches p=6
    "sphere": ("sphere", 4, 8, SPHERE_SRC),
    "torus": ("torus", 8, 6, (1.0, 0.0, 0.0)),
}


def test_criterion_01_quadrature_identities(acceptance_log):
    ok, parts = True, []
    for name, (kind, ref, p, x0) in IDENTITY_SURFACES.items():
        t0 = time.perf_counter()
        grid = _grid(kind, ref, p)
        ids = [SingleLayer(0.0), DoubleLayer(0.0)]
        m = assemble_many(ids, grid)
        one = np.ones(grid.N)
        k0 = float(np.max(np.abs(m[ids[1]].data @ one + 0.5)))
        s0 = float(np.max(np.abs(m[ids[0]].data @ one - 1.0)))
        del m
        gc.collect()
        rep = greens_identity_check(grid, x0, K, calderon=False, trace=False)
        wall = time.perf_counter() - t0
        checks = [k0 <= 1e-4, rep.exterior <= 1e-5, rep.near <= 1e-5, wall <= 120.0]
        if kind == "sphere":
            checks += [s0 <= 1e-4, rep.interior <= 1e-5]
        ok &= all(checks)
        parts.append(f"{name} N={grid.N}: K0+1/2={k0:.1e}" + (f" S0-1={s0:.1e}" if kind == "sphere" else "")
                     + f" green ext={rep.exterior:.1e} near={rep.near:.1e} t={wall:.0f}s")
    _record(acceptance_log, 1, "quadrature identities", ok, "; ".join(parts))
    assert ok


def test_criterion_02_calderon_consistency(acceptance_log):
    ok, parts = True, []
    for name, (kind, ref, p, x0) in IDENTITY_SURFACES.items():
        grid = _grid(kind, ref, p)
        rep = greens_identity_check(grid, x0, K, calderon=True, trace=False)
        gc.collect()
        ok &= rep.calderon <= 5e-3
        parts.append(f"{name}: {rep.calderon:.2e}")
    _record(acceptance_log, 2, "Calderon trace test <= 5e-3", ok, ", ".join(parts))
    assert ok


# ---------------------------------------------------------------------------
# 3 and 8: manufactured dipole runs
# ---------------------------------------------------------------------------


def _dipole_runs(kind: str, refinement: int, x0, ps=(6, 8)):
    out = {}
    targets = fibonacci_sphere()
    for p in ps:
        grid = _grid(kind, refinement, p)
        mats = assemble_matrices(grid, K)
        for f in FORMS:
            src = DipoleSource(x0, MOMENT, K, "electric")
            tr = dipole_traces(src, grid)
            ref = dipole_reference(src, targets)[0 if f in ("DE", "RDE") else 1]
            sol = solve_formulation(f, grid, mats, tr, FormulationParams(K, 100 * K), SolveConfig(tol=TOL))
            rep, _, _ = evaluate_solution(sol, grid, targets, ref)
            out[(p, f)] = {"e_F": rep.e_F, "iterations": rep.iterations, "converged": rep.converged,
                           "scattered": sol.scattered_density, "N": grid.N}
        del mats
        gc.collect()
    return out


@pytest.fixture(scope="module")
def dipole_sphere():
    return _dipole_runs("sphere", 1, SPHERE_SRC)


@pytest.fixture(scope="module")
def dipole_torus():
    return _dipole_runs("torus", 8, TORUS_SRC)


def test_criterion_03_manufactured_dipole(acceptance_log, dipole_sphere, dipole_torus):
    ok, parts = True, []
    for name, runs in (("sphere", dipole_sphere), ("torus", dipole_torus)):
        for f in FORMS:
            e6, e8 = runs[(6, f)]["e_F"], runs[(8, f)]["e_F"]
            conv = runs[(6, f)]["converged"] and runs[(8, f)]["converged"]
            # desk resolution is the p=8 grid; p=6 only anchors the convergence factor
            good = conv and e8 <= 1e-3 and e6 / e8 >= 4.0
            ok &= good
            parts.append(f"{name} {f} {e6:.1e}->{e8:.1e} (x{e6 / e8:.0f})")
    _record(acceptance_log, 3, "dipole e_F <= 1e-3, p 6->8 gain >= 4", ok, ", ".join(parts))
    assert ok


def test_criterion_08_d_rd_equivalence(acceptance_log, dipole_sphere):
    ok, parts = True, []
    for p in (6, 8):
        for d, rd in (("DE", "RDE"), ("DM", "RDM")):
            a, b = dipole_sphere[(p, d)]["scattered"], dipole_sphere[(p, rd)]["scattered"]
            rel = float(np.linalg.norm(a - b) / np.linalg.norm(a))
            ok &= rel <= 1e-4
            parts.append(f"p={p} {d}/{rd} {rel:.1e}")
    _record(acceptance_log, 8, "D/RD physical densities agree to 1e-4", ok, ", ".join(parts))
    assert ok


# ---------------------------------------------------------------------------
# 4-6: Mie validation on the two finest desk grids
# ---------------------------------------------------------------------------

MIE_GRIDS = ((2, 8), (3, 8))


@pytest.fixture(scope="module")
def mie_runs():
    targets = fibonacci_sphere()
    Es, Hs = mie_scattered(MieConfig(), targets)
    out = {}
    for ref, p in MIE_GRIDS:
        grid = _grid("sphere", ref, p)
        mats = assemble_matrices(grid, K)
        tr = planewave_traces(PlaneWave((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), K), grid)
        for f in FORMS:
            sol = solve_formulation(f, grid, mats, tr, FormulationParams(K, 100 * K), SolveConfig(tol=TOL))
            electric = f in ("DE", "RDE")
            rep, _, _ = evaluate_solution(sol, grid, targets, Es if electric else Hs)
            row = {"e_F": rep.e_F, "iterations": rep.iterations, "converged": rep.converged,
                   "lambda_over_h": 2 * np.pi / K / grid.h}
            if not electric:
                # surface current route gives the electric field of the magnetic runs too
                _, E_sc, H_sc = currents_and_strattonchu(sol.density, K, grid, targets)
                row["e_E_sc"] = relative_field_error(E_sc, Es)
                row["e_H_sc"] = relative_field_error(H_sc, Hs)
            out[((ref, p), f)] = row
        del mats
        gc.collect()
    return out


def test_criterion_04_mie_validation(acceptance_log, mie_runs):
    fine = MIE_GRIDS[-1]
    eE = max(mie_runs[(fine, f)]["e_F"] for f in ("DE", "RDE"))
    eH = max(mie_runs[(fine, f)]["e_F"] for f in ("DM", "RDM"))
    eE_sc = max(mie_runs[(fine, f)]["e_E_sc"] for f in ("DM", "RDM"))
    ok = eE <= 1e-3 and eH <= 1e-3 and eE_sc <= 1e-3
    lh = mie_runs[(fine, "DE")]["lambda_over_h"]
    _record(acceptance_log, 4, "Mie e_Es, e_Hs <= 1e-3", ok,
            f"lambda/h={lh:.1f}: e_Es={eE:.2e} e_Hs={eH:.2e} (Stratton-Chu e_Es={eE_sc:.2e})")
    assert ok


def test_criterion_05_resonance_robustness(acceptance_log, mie_runs):
    fine = MIE_GRIDS[-1]
    conv = all(r["converged"] for r in mie_runs.values())
    acc = all(mie_runs[(fine, f)]["e_F"] <= 1e-3 for f in FORMS)
    its = max(r["iterations"] for r in mie_runs.values())
    ok = conv and acc
    _record(acceptance_log, 5, "k=pi: all formulations converge and meet criterion 4", ok,
            f"converged={conv}, max iterations={its}, finest e_F max="
            f"{max(mie_runs[(fine, f)]['e_F'] for f in FORMS):.2e}")
    assert ok


def test_criterion_06_preconditioning_trend(acceptance_log, mie_runs):
    ok, parts = True, []
    for g in MIE_GRIDS:
        it = {f: mie_runs[(g, f)]["iterations"] for f in FORMS}
        ok &= it["RDE"] <= it["DE"] and it["RDM"] <= it["DM"]
        parts.append(f"lambda/h={mie_runs[(g, 'DE')]['lambda_over_h']:.1f}: RDE {it['RDE']} vs DE {it['DE']}, "
                     f"RDM {it['RDM']} vs DM {it['DM']}")
    _record(acceptance_log, 6, "RD iterations <= D iterations", ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------------------
# 7: low-frequency breakdown and its cure
# ---------------------------------------------------------------------------


def _lowfreq(grid, lambdas, forms):
    targets = fibonacci_sphere()
    d = grid.diameter()
    out = {}
    for lam in lambdas:
        k = 2 * np.pi / (lam * d)
        mats = assemble_matrices(grid, k)
        tr = planewave_traces(PlaneWave((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), k), grid)
        for f in forms:
            for xi in ((0.0, XI_LF) if f in ("DE", "RDE") else (0.0,)):
                p = FormulationParams(k, 100 * np.pi, xi, f)
                sol = solve_formulation(f, grid, mats, tr, p, SolveConfig(tol=TOL))
                rep, _, _ = evaluate_solution(sol, grid, targets)
                out[(lam, f, xi)] = {"q": rep.q_max, "e_div": rep.e_divF, "iterations": rep.iterations,
                                     "converged": rep.converged}
        del mats
        gc.collect()
    return out


def test_criterion_07_low_frequency(acceptance_log):
    # torus with a small warp so the charge defect is excited; lambda/d = 1e8
    torus = _grid("torus", 6, 6, warp=0.1)
    tor = _lowfreq(torus, (1e8,), ("DE", "RDE"))
    ok, parts = True, []
    for f in ("DE", "RDE"):
        a, b = tor[(1e8, f, 0.0)], tor[(1e8, f, XI_LF)]
        good = (a["q"] >= 1e-2 and b["q"] <= 1e-4 and b["e_div"] <= 2 * a["e_div"]
                and a["converged"] and b["converged"])
        ok &= good
        parts.append(f"torus {f}: q {a['q']:.1e}->{b['q']:.1e}, e_div {a['e_div']:.1e}->{b['e_div']:.1e}")
    del torus
    sphere = _grid("sphere", 2, 6)
    sph = _lowfreq(sphere, LAMBDA_OVER_D, FORMS)
    qmax = max(r["q"] for (lam, f, xi), r in sph.items() if f in ("DE", "RDE"))
    itmax = max(r["iterations"] for r in sph.values())
    conv = all(r["converged"] for r in sph.values())
    ok &= qmax <= 1e-3 and itmax <= 50 and conv
    parts.append(f"sphere sweep 1e16..1: max q={qmax:.1e}, max iterations={itmax}")
    _record(acceptance_log, 7, "low-frequency breakdown and cure", ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------------------
# 9: operator algebra property suite
# ---------------------------------------------------------------------------


def test_criterion_09_operator_algebra(acceptance_log, sphere24, torus16, tori_pair):
    t0 = time.perf_counter()
    worst = {}
    for name, grid in (("sphere", sphere24), ("torus", torus16), ("two_tori", tori_pair)):
        Pn = projector(grid, "normal").materialize()
        Pt = projector(grid, "tangential").materialize()
        I = np.eye(3 * grid.N)
        defects = [Pn @ Pn - Pn, Pt @ Pt - Pt, Pn @ Pt, Pt @ Pn, Pn + Pt - I]
        worst["projectors"] = max([worst.get("projectors", 0.0)] + [float(np.max(np.abs(a))) for a in defects])
        R = grid.shape_op
        worst["R_nu"] = max(worst.get("R_nu", 0.0), float(np.max(np.abs(np.einsum("nij,nj->ni", R, grid.normals)))))
        worst["H_trace"] = max(worst.get("H_trace", 0.0),
                               float(np.max(np.abs(grid.mean_curv - 0.5 * np.trace(R, axis1=1, axis2=2)))))
    Rs = curvature_multiplier(sphere24, "shapeR").materialize()
    Pts = projector(sphere24, "tangential").materialize()
    sphere_R = float(np.max(np.abs(Rs - Pts)))
    area = float(charge_gram(sphere24)[0, 0])
    grid = tori_pair
    mats = assemble_matrices(grid, K)
    Xi = charge_gram(grid, build_Le(FormulationParams(K), grid, mats))
    del mats
    gc.collect()
    areas = grid.component_areas()
    off = float(np.max(np.abs(Xi - np.diag(np.diag(Xi)))))
    diag_err = float(np.max(np.abs(np.diag(Xi) - areas)))
    wall = time.perf_counter() - t0
    ok = (worst["projectors"] <= 1e-14 and worst["R_nu"] <= 1e-10 and worst["H_trace"] <= 1e-12
          and sphere_R <= 1e-10 and abs(area - 4 * np.pi) <= 1e-4
          and off <= 1e-4 * float(np.max(areas)) and wall <= 300.0)
    _record(acceptance_log, 9, "operator algebra", ok,
            f"proj {worst['projectors']:.0e}, R nu {worst['R_nu']:.0e}, H-tr/2 {worst['H_trace']:.0e}, "
            f"sphere R-Pt {sphere_R:.0e}, l(nu)-4pi {abs(area - 4 * np.pi):.0e}, "
            f"Xi offdiag {off:.1e} (diag err {diag_err:.1e}), t={wall:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 10: Stratton-Chu cross-check
# ---------------------------------------------------------------------------


def test_criterion_10_strattonchu(acceptance_log, sphere24):
    grid = sphere24
    targets = fibonacci_sphere()
    src = DipoleSource(SPHERE_SRC, (0.3, 1.0, -0.5j), K, "magnetic")
    tr = dipole_traces(src, grid)
    mats = assemble_matrices(grid, K)
    ok, parts = True, []
    for f in ("DM", "RDM"):
        sol = solve_formulation(f, grid, mats, tr, FormulationParams(K, 100 * K), SolveConfig(tol=TOL))
        _, H_rep, _ = evaluate_solution(sol, grid, targets)
        _, E_sc, H_sc = currents_and_strattonchu(sol.density, K, grid, targets, incident=tr)
        J = surface_current(sol.density, grid)
        _, _, divE, divH = strattonchu(J, K, grid, targets)
        agree = relative_field_error(H_sc, H_rep)
        dE = float(np.max(np.abs(divE) / np.linalg.norm(E_sc, axis=1)))
        dH = float(np.max(np.abs(divH) / np.linalg.norm(H_sc, axis=1)))
        ok &= agree <= 2e-3 and dE <= 1e-6 and dH <= 1e-6 and sol.report.converged
        parts.append(f"{f}: |H_rep-H_sc| {agree:.1e}, div E {dE:.0e}, div H {dH:.0e}")
    del mats
    _record(acceptance_log, 10, "Stratton-Chu vs representation", ok, "; ".join(parts))
    assert ok
