import numpy as np
import pytest

from phgasnet.dae import SnapshotSet
from phgasnet.diagnostics import (CSV_SCHEMA, RunReport, mor_error, projection_error, read_report_csv,
                                  relative_errors, run_report, structure_report, write_report_csv)
from phgasnet.errors import ConfigError
from phgasnet.mor import ReducedSystem, build_basis


def test_identical_trajectories_have_zero_error(small_fom):
    sys, _, snap = small_fom
    assert mor_error(snap, snap, sys) == 0.0
    per = mor_error(snap, snap, sys, per_field=True)
    assert set(per) == {"rho", "m", "e"} and max(per.values()) == 0.0


def test_relative_error_of_scaled_state(small_fom):
    sys, _, snap = small_fom
    err = relative_errors(sys, snap.Y, 1.1 * snap.Y)
    assert np.allclose(err, 0.1, rtol=1e-12)


def test_grid_mismatch_rejected(small_fom):
    sys, _, snap = small_fom
    short = SnapshotSet(snap.times[:10], snap.Y[:, :10], snap.iterations[:10], snap.layout, {})
    with pytest.raises(ConfigError):
        mor_error(snap, short, sys)


def test_projection_error_bounded_by_rom_error(small_fom):
    sys, _, snap = small_fom
    rom = ReducedSystem(sys, build_basis(snap, sys, "A_E", 8))
    ep = projection_error(snap, rom)
    assert 0.0 <= ep < 1e-2
    proj = SnapshotSet(snap.times, rom.project(snap.Y), snap.iterations, None, {})
    assert mor_error(snap, rom.lift_snapshots(proj), sys) == pytest.approx(ep, rel=1e-10)


def test_structure_report_full_model(small_fom):
    sys, _, snap = small_fom
    rep = structure_report(sys, snap.Y[:, ::20])
    assert rep["skew"] <= 1e-12
    assert rep["R_min_eig"] >= -1e-12
    assert rep["kernel_residual"] == 0.0


def test_report_csv_roundtrip(small_fom, tmp_path):
    sys, _, snap = small_fom
    rep = run_report(sys, snap, wall_time=1.5, ph_stride=10)
    p = tmp_path / "r.csv"
    write_report_csv(rep, p)
    back = read_report_csv(p)
    assert back["schema"] == CSV_SCHEMA
    assert len(back["steps"]) == snap.n_cols
    assert float(back["steps"][5]["H"]) == rep.H[5]
    assert float(back["summary"]["wall_time"]) == 1.5
    assert back["summary"]["E_t"] == ""


def test_report_csv_requires_schema(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("kind,step\n")
    with pytest.raises(ConfigError):
        read_report_csv(p)


def test_run_report_validation():
    t = np.arange(3.0)
    ok = dict(times=t, H=np.ones(3), mass=np.ones(3), mass_defect=np.zeros(3), power_defect=np.zeros(3),
              newton_iterations=np.ones(3), E_pH=np.zeros(3))
    RunReport(**ok)
    with pytest.raises(ConfigError):
        RunReport(**dict(ok, H=np.ones(2)))
    with pytest.raises(ConfigError):
        RunReport(**dict(ok, mass=np.array([1.0, np.nan, 1.0])))
