from __future__ import annotations

import json
import math

import numpy as np
import pytest

from cfoie.cli import ConfigError, config_hash, fmt, main, validate_config

SMALL = {
    "surface": {"kind": "sphere"},
    "grids": [{"refinement": 1, "p": 4}, {"refinement": 1, "p": 5}],
    "formulations": ["DE", "RDM"],
    "targets": {"n": 20},
}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _read_tsv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    head = lines[0].split("\t")
    return [dict(zip(head, ln.split("\t"))) for ln in lines[1:]]


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def test_schema_rejects_unknown_and_invalid_keys():
    with pytest.raises(ConfigError):
        validate_config({"surface": {"kind": "sphere", "colour": 1}})
    with pytest.raises(ConfigError):
        validate_config({"grids": [{"refinement": 1}]})
    with pytest.raises(ConfigError):
        validate_config({"solver": {"tol": 2.0}})
    with pytest.raises(ConfigError):
        validate_config({"formulations": ["EFIE"]})


def test_defaults_filled():
    cfg = validate_config({})
    assert cfg["k"] == pytest.approx(math.pi)
    assert cfg["formulations"] == ["DE", "RDE", "DM", "RDM"]
    assert cfg["targets"] == {"n": 100, "radius": 5.0}
    assert validate_config({"surface": {"kind": "two_tori"}})["solver"]["tol"] == 1e-4
    assert validate_config({"surface": {"kind": "two_tori"}, "solver": {"tol": 1e-6}})["solver"]["tol"] == 1e-6


def test_config_hash_ignores_output_only():
    a = validate_config(SMALL)
    b = validate_config({**SMALL, "output": "elsewhere"})
    c = validate_config({**SMALL, "k": 2.0})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 12


def test_fmt():
    assert fmt(True) == "1" and fmt(False) == "0"
    assert fmt(42) == "42"
    assert fmt(1.0 / 3.0) == "3.33333e-01"
    assert fmt(float("nan")) == "nan"
    assert fmt("DE") == "DE"


def test_bad_config_exit_code(tmp_path, capsys):
    assert main(["convergence", "--config", _write(tmp_path, {"bogus": 1}), "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------


def test_convergence_run_is_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL)
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert main(["convergence", "--config", cfg, "--out", str(out), "--no-plots"]) == 0
        outs.append((out / "convergence.tsv").read_bytes())
    assert outs[0] == outs[1]
    rows = _read_tsv(tmp_path / "run0" / "convergence.tsv")
    assert len(rows) == 4
    assert {r["formulation"] for r in rows} == {"DE", "RDM"}
    assert all(r["converged"] == "1" and r["status"] == "ok" for r in rows)
    assert len({r["config_hash"] for r in rows}) == 1
    meta = json.loads((tmp_path / "run0" / "convergence.json").read_text())
    assert meta["config"]["grids"] == SMALL["grids"]


def test_convergence_writes_plot(tmp_path):
    cfg = _write(tmp_path, {**SMALL, "grids": [{"refinement": 1, "p": 4}], "formulations": ["DE"]})
    assert main(["convergence", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "convergence.png").stat().st_size > 0


def test_nonconvergence_gives_nonzero_exit(tmp_path):
    cfg = _write(tmp_path, {**SMALL, "solver": {"maxiter": 1}, "grids": [{"refinement": 1, "p": 4}]})
    assert main(["convergence", "--config", cfg, "--out", str(tmp_path / "o"), "--no-plots"]) == 1
    rows = _read_tsv(tmp_path / "o" / "convergence.tsv")
    assert all(r["converged"] == "0" for r in rows)


def test_lowfreq_run(tmp_path):
    cfg = _write(tmp_path, {**SMALL, "grids": [{"refinement": 1, "p": 4}], "formulations": ["DE", "DM"],
                            "lambda_over_d": [1e8, 1e0]})
    assert main(["lowfreq", "--config", cfg, "--out", str(tmp_path / "o"), "--no-plots"]) == 0
    rows = _read_tsv(tmp_path / "o" / "lowfreq.tsv")
    # DE at two xi values, DM at xi = 0 only
    assert len(rows) == 2 * 2 + 2
    assert all(float(r["q_max"]) < 1e-3 for r in rows if r["formulation"] == "DE")


def test_single_run_masks_interior(tmp_path):
    cfg = _write(tmp_path, {"surface": {"kind": "torus"}, "grids": [{"refinement": 4, "p": 5}],
                            "formulations": ["DM"], "slice": {"n": 21}, "targets": {"n": 20}})
    assert main(["single", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    out = tmp_path / "o"
    rows = _read_tsv(out / "slice_DM.tsv")
    mask = np.array([r["mask"] == "1" for r in rows])
    assert 0 < mask.sum() < mask.size
    field_cols = [c for c in rows[0] if c not in ("x", "y", "z", "s", "t", "mask")]
    vals = np.array([[float(r[c]) for c in field_cols] for r in rows])
    assert np.all(np.isnan(vals[mask]))
    assert np.all(np.isfinite(vals[~mask]))
    assert (out / "slice_DM.png").exists()
    assert (out / "traces_DM.tsv").exists() and (out / "nodes.tsv").exists()
    meta = json.loads((out / "single.json").read_text())
    assert meta["config"]["surface"]["kind"] == "torus"


def test_verify_run(tmp_path):
    cfg = _write(tmp_path, {"surface": {"kind": "sphere"}, "grids": [{"refinement": 2, "p": 8}]})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "7"]) == 0
    rows = _read_tsv(tmp_path / "o" / "verify.tsv")
    assert {r["check"] for r in rows} >= {"mie_pec_residual", "dipole_maxwell_curl", "calderon_sphere_r2_p8"}
    assert all(r["passed"] == "1" for r in rows)
