"""Config-driven experiment runner.

Subcommands: convergence, lowfreq, single, verify. Each run writes a TSV
table, a JSON metadata file and (unless --no-plots) PNG figures into --out.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import jsonschema

# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------

FORMULATION_IDS = ("DE", "RDE", "DM", "RDM")
DEFAULT_LAMBDA_OVER_D = [1e16, 1e8, 1e4, 1e2, 1e1, 1e0]

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC3 = {"type": "array", "items": {"type": ["number", "string"]}, "minItems": 3, "maxItems": 3}
_REAL3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}


def _obj(props: Dict[str, Any]) -> Dict[str, Any]:
    return {"type": "object", "properties": props, "additionalProperties": False}


CONFIG_SCHEMA: Dict[str, Any] = _obj({
    "surface": _obj({
        "kind": {"enum": ["sphere", "torus", "flower", "two_tori"]},
        "radius": _POS, "major": _POS, "minor": _POS,
        "warp": _NUM,
        "config": {"enum": ["interlocking", "adjacent"]},
    }),
    "formulations": {"type": "array", "items": {"enum": list(FORMULATION_IDS)}, "minItems": 1},
    "incident": _obj({
        "type": {"enum": ["planewave", "dipole"]},
        "p": _REAL3, "d": _REAL3, "x0": _REAL3,
        "m": _VEC3,
        "kind": {"enum": ["electric", "magnetic"]},
    }),
    "k": _POS,
    "lambda_over_d": {"type": "array", "items": _POS, "minItems": 1},
    "grids": {"type": "array", "minItems": 1, "items": {
        **_obj({"refinement": {"type": "integer", "minimum": 1}, "p": {"type": "integer", "minimum": 3}}),
        "required": ["refinement", "p"]}},
    "eta": {"type": ["number", "null"]},
    "xi": {"type": "array", "items": _NUM, "minItems": 1},
    "solver": _obj({
        "method": {"enum": ["gmres", "direct"]},
        "tol": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "maxiter": {"type": "integer", "minimum": 1},
    }),
    "targets": _obj({"n": {"type": "integer", "minimum": 1}, "radius": _POS}),
    "quadrature": _obj({
        "eta_near": _POS, "accept_ratio": _POS, "series_kr": _POS,
        "duffy_order": {"type": ["integer", "null"], "minimum": 1},
        "aux_order": {"type": ["integer", "null"], "minimum": 1},
        "max_depth": {"type": "integer", "minimum": 1},
    }),
    "slice": _obj({
        "u": {"anyOf": [_REAL3, {"type": "null"}]},
        "v": {"anyOf": [_REAL3, {"type": "null"}]},
        "extent": {"anyOf": [_POS, {"type": "null"}]},
        "n": {"type": "integer", "minimum": 2},
    }),
    "reference": {"enum": ["auto", "mie", "dipole", "none"]},
    "output": {"type": ["string", "null"]},
    "seed": {"type": "integer"},
})

DEFAULTS: Dict[str, Any] = {
    "surface": {"kind": "sphere", "radius": 1.0, "major": 1.0, "minor": 0.5, "warp": 0.0, "config": "interlocking"},
    "formulations": ["DE", "RDE", "DM", "RDM"],
    "incident": {"type": "planewave", "p": [1.0, 0.0, 0.0], "d": [0.0, 0.0, 1.0],
                 "x0": [0.1, -0.2, 0.15], "m": [1.0, 0.0, 0.0], "kind": "electric"},
    "k": math.pi,
    "lambda_over_d": DEFAULT_LAMBDA_OVER_D,
    "grids": [{"refinement": 2, "p": 6}],
    "eta": None,
    "xi": [0.0, math.pi * 1e4],
    "solver": {"method": "gmres", "tol": 1e-6, "maxiter": 500},
    "targets": {"n": 100, "radius": 5.0},
    "quadrature": {"eta_near": 3.0, "duffy_order": None, "aux_order": None, "accept_ratio": 1.8,
                   "max_depth": 14, "series_kr": 1e-4},
    "slice": {"u": None, "v": None, "extent": None, "n": 81},
    "reference": "auto",
    "output": None,
    "seed": 0,
}


class ConfigError(ValueError):
    pass


def _merge(defaults: Dict[str, Any], raw: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(defaults)
    for key, val in raw.items():
        if isinstance(out.get(key), dict) and isinstance(val, dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def validate_config(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Schema-check a raw config (unknown keys rejected) and fill in defaults."""
    err = jsonschema.exceptions.best_match(jsonschema.Draft7Validator(CONFIG_SCHEMA).iter_errors(raw))
    if err is not None:
        where = ".".join(str(p) for p in err.absolute_path) or "config"
        raise ConfigError(f"{where}: {err.message}")
    cfg = _merge(DEFAULTS, raw)
    if cfg["surface"]["kind"] == "two_tori" and "tol" not in raw.get("solver", {}):
        cfg["solver"]["tol"] = 1e-4  # looser default for the narrow-gap two-tori runs
    return cfg


def load_config(path: Optional[str]) -> Dict[str, Any]:
    raw: Dict[str, Any] = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    return validate_config(raw)


def config_hash(cfg: Dict[str, Any]) -> str:
    blob = json.dumps({k: v for k, v in cfg.items() if k != "output"}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.5e}"
    return str(v)


class TableWriter:
    """Single writer for one TSV table; rows are flushed as they arrive."""

    def __init__(self, path: Path, columns: Sequence[str]):
        self.path = path
        self.columns = list(columns)
        self.rows: List[Dict[str, Any]] = []
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\t".join(self.columns) + "\n")

    def write(self, row: Dict[str, Any]) -> None:
        self.rows.append(row)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write("\t".join(fmt(row.get(c, "")) for c in self.columns) + "\n")


def write_metadata(out: Path, name: str, cfg: Dict[str, Any], extra: Dict[str, Any]) -> Path:
    path = out / f"{name}.json"
    from . import __version__

    meta = {"command": name, "version": __version__, "config_hash": config_hash(cfg), "config": cfg}
    meta.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
    return path


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def build_surface(cfg: Dict[str, Any]):
    from .surfaces import SurfaceSpec, two_tori

    s = cfg["surface"]
    if s["kind"] == "sphere":
        return SurfaceSpec.sphere(float(s["radius"]))
    if s["kind"] == "torus":
        return SurfaceSpec.torus(float(s["major"]), float(s["minor"]), float(s["warp"]))
    if s["kind"] == "flower":
        return SurfaceSpec.flower()
    return two_tori(s["config"], float(s["warp"]))


def build_grid(cfg: Dict[str, Any], g: Dict[str, int]):
    from .surfaces import discretize, make_surface

    return discretize(make_surface(build_surface(cfg), g["refinement"]), g["p"])


def quad_config(cfg: Dict[str, Any]):
    from .quadrature import QuadConfig

    return QuadConfig(**cfg["quadrature"])


def solve_config(cfg: Dict[str, Any]):
    from .solver import SolveConfig

    s = cfg["solver"]
    return SolveConfig(s["method"], float(s["tol"]), int(s["maxiter"]))


def build_incident(cfg: Dict[str, Any], k: float, grid):
    """(traces, reference callable or None) for the configured incidence."""
    import numpy as np

    from .incident import DipoleSource, PlaneWave, dipole_traces, planewave_traces
    from .oracle import MieConfig, dipole_reference, mie_scattered

    inc = cfg["incident"]
    ref = cfg["reference"]
    if inc["type"] == "planewave":
        p = tuple(float(x) for x in inc["p"])
        d = tuple(float(x) for x in inc["d"])
        tr = planewave_traces(PlaneWave(p, d, k), grid)
        use_mie = ref == "mie" or (ref == "auto" and cfg["surface"]["kind"] == "sphere")
        if ref == "dipole":
            raise ConfigError("dipole reference needs a dipole incident field")
        if use_mie:
            if cfg["surface"]["kind"] != "sphere":
                raise ConfigError("Mie reference is only available for the sphere")
            mc = MieConfig(float(cfg["surface"]["radius"]), p, d, k)
            return tr, (lambda X: mie_scattered(mc, X))
        return tr, None
    m = tuple(complex(x) for x in inc["m"])
    src = DipoleSource(tuple(float(x) for x in inc["x0"]), m, k, inc["kind"])
    tr = dipole_traces(src, grid)
    if ref == "mie":
        raise ConfigError("Mie reference needs a plane wave")
    if ref == "none":
        return tr, None
    return tr, (lambda X: dipole_reference(src, X))


def _targets(cfg: Dict[str, Any]):
    from .postprocess import fibonacci_sphere

    return fibonacci_sphere(cfg["targets"]["n"], float(cfg["targets"]["radius"]))


def _error_row(formulation: str, exc: Exception) -> Dict[str, Any]:
    return {"formulation": formulation, "e_F": float("nan"), "e_divF": float("nan"), "q_max": float("nan"),
            "iterations": 0, "converged": False, "status": f"error: {type(exc).__name__}: {exc}".replace("\t", " ")}


def _solve_and_measure(f: str, grid, mats, traces, reference, targets, params, scfg, qcfg):
    from .postprocess import evaluate_solution
    from .solver import solve_formulation

    sol = solve_formulation(f, grid, mats, traces, params, scfg)
    ref = None
    if reference is not None:
        E, H = reference(targets)
        ref = E if params.electric else H
    rep, F, div = evaluate_solution(sol, grid, targets, ref, qcfg)
    row = {"formulation": f, "e_F": rep.e_F, "e_divF": rep.e_divF, "q_max": rep.q_max,
           "iterations": int(rep.iterations), "converged": bool(rep.converged),
           "status": "ok" if rep.converged else "not converged"}
    return row, sol, F


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

CONVERGENCE_COLUMNS = ["formulation", "lambda_over_h", "N", "e_F", "e_divF", "q_max", "iterations",
                       "refinement", "p", "converged", "status", "config_hash"]
LOWFREQ_COLUMNS = ["formulation", "xi", "lambda_over_d", "e_divF", "q_max", "iterations", "k", "N",
                   "converged", "status", "config_hash"]


@dataclass
class RunResult:
    rows: List[Dict[str, Any]]
    failed: bool
    files: List[str] = field(default_factory=list)


def run_convergence(cfg: Dict[str, Any], out: Path, plots: bool = True) -> RunResult:
    """Refinement sweep at fixed k; one row per (grid, formulation)."""
    import numpy as np

    from .operators import FormulationParams, assemble_matrices

    h = config_hash(cfg)
    k = float(cfg["k"])
    qcfg, scfg = quad_config(cfg), solve_config(cfg)
    targets = _targets(cfg)
    table = TableWriter(out / "convergence.tsv", CONVERGENCE_COLUMNS)
    failed = False
    timings = []
    for g in cfg["grids"]:
        t0 = time.perf_counter()
        grid = build_grid(cfg, g)
        base = {"lambda_over_h": 2 * np.pi / k / grid.h, "N": grid.N, "refinement": g["refinement"], "p": g["p"],
                "config_hash": h}
        try:
            mats = assemble_matrices(grid, k, qcfg)
            traces, reference = build_incident(cfg, k, grid)
        except Exception as exc:  # recorded per row, the sweep goes on
            for f in cfg["formulations"]:
                table.write({**base, **_error_row(f, exc)})
            failed = True
            continue
        for f in cfg["formulations"]:
            try:
                params = FormulationParams(k, cfg["eta"], 0.0, f)
                row, _, _ = _solve_and_measure(f, grid, mats, traces, reference, targets, params, scfg, qcfg)
            except Exception as exc:
                row = _error_row(f, exc)
            failed |= not row["converged"]
            table.write({**base, **row})
        del mats
        timings.append({"grid": g, "N": grid.N, "seconds": time.perf_counter() - t0})
    files = [str(table.path)]
    if plots:
        from .plotting import plot_convergence

        files.append(str(plot_convergence(table.rows, out / "convergence.png")))
    files.append(str(write_metadata(out, "convergence", cfg, {"timings": timings, "failed": failed})))
    return RunResult(table.rows, failed, files)


def run_lowfreq(cfg: Dict[str, Any], out: Path, plots: bool = True) -> RunResult:
    """Sweep lambda/d on the first configured grid, for each formulation and xi."""
    import numpy as np

    from .operators import FormulationParams, assemble_matrices

    h = config_hash(cfg)
    qcfg, scfg = quad_config(cfg), solve_config(cfg)
    targets = _targets(cfg)
    grid = build_grid(cfg, cfg["grids"][0])
    diam = grid.diameter()
    table = TableWriter(out / "lowfreq.tsv", LOWFREQ_COLUMNS)
    failed = False
    for lam in cfg["lambda_over_d"]:
        k = 2 * np.pi / (float(lam) * diam)
        base = {"lambda_over_d": float(lam), "k": k, "N": grid.N, "config_hash": h}
        try:
            mats = assemble_matrices(grid, k, qcfg)
            traces, _ = build_incident({**cfg, "reference": "none"}, k, grid)
        except Exception as exc:
            for f in cfg["formulations"]:
                table.write({**base, "xi": 0.0, **_error_row(f, exc)})
            failed = True
            continue
        for f in cfg["formulations"]:
            xis = cfg["xi"] if f in ("DE", "RDE") else [0.0]
            for xi in xis:
                try:
                    params = FormulationParams(k, cfg["eta"], float(xi), f)
                    row, _, _ = _solve_and_measure(f, grid, mats, traces, None, targets, params, scfg, qcfg)
                except Exception as exc:
                    row = _error_row(f, exc)
                failed |= not row["converged"]
                table.write({**base, "xi": float(xi), **row})
        del mats
    files = [str(table.path)]
    if plots:
        from .plotting import plot_lowfreq

        files.append(str(plot_lowfreq(table.rows, out / "lowfreq.png")))
    files.append(str(write_metadata(out, "lowfreq", cfg, {"diameter": diam, "failed": failed})))
    return RunResult(table.rows, failed, files)


def slice_grid(cfg: Dict[str, Any], grid):
    """Points on the plane through the origin spanned by (u, v); default u = p, v = d."""
    import numpy as np

    sl, inc = cfg["slice"], cfg["incident"]
    u = np.asarray(sl["u"] if sl["u"] is not None else (inc["p"] if inc["type"] == "planewave" else [1, 0, 0]), float)
    v = np.asarray(sl["v"] if sl["v"] is not None else (inc["d"] if inc["type"] == "planewave" else [0, 0, 1]), float)
    u = u / np.linalg.norm(u)
    v = v - (v @ u) * u
    if np.linalg.norm(v) < 1e-12:
        raise ConfigError("slice directions must be independent")
    v = v / np.linalg.norm(v)
    ext = sl["extent"] if sl["extent"] is not None else 1.5 * float(np.max(np.linalg.norm(grid.points, axis=1)))
    s = np.linspace(-ext, ext, sl["n"])
    S, T = np.meshgrid(s, s, indexing="xy")
    X = S.reshape(-1, 1) * u + T.reshape(-1, 1) * v
    return s, X, u, v


def run_single(cfg: Dict[str, Any], out: Path, plots: bool = True) -> RunResult:
    """One grid, one k: error rows, node traces/currents and fields on a slice."""
    import numpy as np

    from .operators import FormulationParams, assemble_matrices, to_nodal
    from .postprocess import surface_current
    from .quadrature import layer_potential_adaptive

    h = config_hash(cfg)
    k = float(cfg["k"])
    qcfg, scfg = quad_config(cfg), solve_config(cfg)
    targets = _targets(cfg)
    grid = build_grid(cfg, cfg["grids"][0])
    grid.to_tsv(out / "nodes.tsv")
    mats = assemble_matrices(grid, k, qcfg)
    traces, reference = build_incident(cfg, k, grid)
    s, X, u, v = slice_grid(cfg, grid)
    # 0 = exterior (evaluated), 1 = inside a body (NaN sentinel)
    gauss = layer_potential_adaptive(0.0, grid, {"double": np.ones(grid.N)}, X, qcfg).real
    mask = np.where(gauss < -0.5, 1, 0)
    ev = X[mask == 0]
    table = TableWriter(out / "single.tsv", CONVERGENCE_COLUMNS)
    base = {"lambda_over_h": 2 * np.pi / k / grid.h, "N": grid.N, "refinement": cfg["grids"][0]["refinement"],
            "p": grid.p, "config_hash": h}
    failed = False
    files = [str(out / "nodes.tsv")]
    for f in cfg["formulations"]:
        try:
            params = FormulationParams(k, cfg["eta"], 0.0, f)
            row, sol, _ = _solve_and_measure(f, grid, mats, traces, reference, targets, params, scfg, qcfg)
        except Exception as exc:
            table.write({**base, **_error_row(f, exc)})
            failed = True
            continue
        failed |= not row["converged"]
        table.write({**base, **row})
        g, d = sol.representation_traces()
        Fs = np.full((len(X), 3), complex(np.nan, np.nan))
        Fs[mask == 0] = layer_potential_adaptive(k, grid, {"double": to_nodal(g), "single": -to_nodal(d)}, ev, qcfg)
        Fi = np.full((len(X), 3), complex(np.nan, np.nan))
        if len(ev):
            E_i, H_i = traces.source.fields(ev)
            Fi[mask == 0] = E_i if params.electric else H_i
        Ft = Fs + Fi
        name = "E" if params.electric else "H"
        path = out / f"slice_{f}.tsv"
        cols = ["x", "y", "z", "s", "t", "mask"] + [f"{pre}{name}{c}_{part}" for pre in ("s", "t")
                                                      for c in "xyz" for part in ("re", "im")]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# config_hash {h}\n" + "\t".join(cols) + "\n")
            for i in range(len(X)):
                vals = list(X[i]) + [X[i] @ u, X[i] @ v]
                parts = []
                for F in (Fs, Ft):
                    for c in range(3):
                        parts += [F[i, c].real, F[i, c].imag]
                fh.write("\t".join([fmt(float(x)) for x in vals] + [str(int(mask[i]))]
                                   + [fmt(float(x)) for x in parts]) + "\n")
        files.append(str(path))
        # node data: traces, and currents for the magnetic formulations
        npath = out / f"traces_{f}.tsv"
        gn, dn = to_nodal(sol.gamma), to_nodal(sol.dnu)
        ncols = [f"g{c}_{pt}" for c in "xyz" for pt in ("re", "im")] + [f"d{c}_{pt}" for c in "xyz" for pt in ("re", "im")]
        J = None
        if not params.electric:
            J = surface_current(sol.density, grid)
            ncols += [f"J{c}_{pt}" for c in "xyz" for pt in ("re", "im")]
        with open(npath, "w", encoding="utf-8") as fh:
            fh.write(f"# config_hash {h}\n" + "\t".join(ncols) + "\n")
            for i in range(grid.N):
                arrs = [gn[i], dn[i]] + ([J[i]] if J is not None else [])
                fh.write("\t".join(fmt(float(part)) for a in arrs for z in a for part in (z.real, z.imag)) + "\n")
        files.append(str(npath))
        if plots:
            from .plotting import plot_slice

            n = len(s)
            files.append(str(plot_slice(s, s, Ft[:, 0].reshape(n, n), out / f"slice_{f}.png",
                                        f"Re {name}x (total), {f}")))
    del mats
    files.append(str(table.path))
    files.append(str(write_metadata(out, "single", cfg, {"failed": failed, "slice_u": list(u), "slice_v": list(v)})))
    return RunResult(table.rows, failed, files)


def run_verify(cfg: Dict[str, Any], out: Path, plots: bool = True) -> RunResult:
    """Oracle suite: Mie self-checks, dipole consistency and Green's identities."""
    import numpy as np

    from .incident import DipoleSource, dipole_field_at, dipole_normal_derivatives, fd_jacobian
    from .oracle import MieConfig, greens_identity_check, mie_scattered, plane_wave_total_tangential_residual

    rng = np.random.default_rng(cfg["seed"])
    h = config_hash(cfg)
    table = TableWriter(out / "verify.tsv", ["check", "value", "threshold", "passed", "config_hash"])
    failed = False

    def record(name: str, value: float, thr: float) -> None:
        nonlocal failed
        passed = bool(np.isfinite(value) and value <= thr)
        failed |= not passed
        table.write({"check": name, "value": float(value), "threshold": thr, "passed": passed, "config_hash": h})

    def curl(J):
        return np.stack([J[:, 2, 1] - J[:, 1, 2], J[:, 0, 2] - J[:, 2, 0], J[:, 1, 0] - J[:, 0, 1]], 1)

    k = float(cfg["k"])
    mc = MieConfig(k=k)
    record("mie_pec_residual", plane_wave_total_tangential_residual(mc), 1e-8)
    X = rng.normal(size=(20, 3))
    X *= rng.uniform(1.5, 4.0, (20, 1)) / np.linalg.norm(X, axis=1)[:, None]
    E, H = mie_scattered(mc, X)
    JE = fd_jacobian(lambda Y: mie_scattered(mc, Y)[0], X, 1e-4)
    record("mie_maxwell_curl", float(np.max(np.linalg.norm(curl(JE) - 1j * k * H, axis=1)
                                            / np.linalg.norm(H, axis=1))), 1e-6)
    src = DipoleSource((0.1, -0.2, 0.15), (1.0, 0.5j, -0.3), k)
    E, H = dipole_field_at(src, X)
    JE = fd_jacobian(lambda Y: dipole_field_at(src, Y)[0], X, 1e-4)
    record("dipole_maxwell_curl", float(np.max(np.linalg.norm(curl(JE) - 1j * k * H, axis=1)
                                               / np.linalg.norm(H, axis=1))), 1e-6)
    nu = rng.normal(size=(20, 3))
    nu /= np.linalg.norm(nu, axis=1)[:, None]
    _, _, dE, _ = dipole_normal_derivatives(src, X, nu)
    record("dipole_normal_derivative_fd", float(np.max(np.linalg.norm(dE - np.einsum("nil,nl->ni", JE, nu), axis=1)
                                                       / np.linalg.norm(dE, axis=1))), 1e-6)
    qcfg = quad_config(cfg)
    for g in cfg["grids"]:
        grid = build_grid(cfg, g)
        kind = cfg["surface"]["kind"]
        x0 = {"sphere": (0.1, -0.2, 0.15), "flower": (0.05, 0.02, -0.03)}.get(kind, (1.0, 0.0, 0.0))
        rep = greens_identity_check(grid, x0, k, qcfg, calderon=True, trace=True)
        tag = f"{kind}_r{g['refinement']}_p{g['p']}"
        record(f"greens_exterior_{tag}", rep.exterior, 1e-5)
        record(f"calderon_{tag}", rep.calderon, 5e-3)
    files = [str(table.path), str(write_metadata(out, "verify", cfg, {"failed": failed}))]
    return RunResult(table.rows, failed, files)


RUNNERS = {"convergence": run_convergence, "lowfreq": run_lowfreq, "single": run_single, "verify": run_verify}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _set_threads(n: Optional[int]) -> None:
    if n is None:
        env = os.environ.get("CFOIE_THREADS")
        n = int(env) if env else None
    if n is None:
        return
    if n < 1:
        raise SystemExit("--threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cfoie", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(RUNNERS))
    ap.add_argument("--config", help="JSON run config (defaults are used for missing keys)")
    ap.add_argument("--out", help="output directory (overrides the config's 'output')")
    ap.add_argument("--threads", type=int, default=None, help="BLAS threads (fallback: CFOIE_THREADS)")
    ap.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    ap.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"cfoie: config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = Path(args.out or cfg["output"] or f"cfoie_{args.command}")
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = RUNNERS[args.command](cfg, out, plots=not args.no_plots)
    except ConfigError as exc:
        print(f"cfoie: config error: {exc}", file=sys.stderr)
        return 2
    for f in res.files:
        print(f)
    if res.failed:
        print("cfoie: at least one solve or check failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
