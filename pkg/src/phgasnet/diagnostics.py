"""Error measures, structure checks and balance reports for full and reduced runs."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem_pipe as fp
from .errors import ConfigError

CSV_SCHEMA = "phgasnet-run-report/1"
STEP_COLUMNS = ("kind", "step", "t", "H", "H_c", "mass", "mass_defect", "power_defect",
                "newton_iterations", "E_pH")
SUMMARY_COLUMNS = ("E_t", "E_tP", "wall_time")


def _full_system(model):
    return getattr(model, "sys", model)


def state_mass_matrix(sys):
    """Block-diagonal mass matrix of the stacked (rho, m, e) coefficients (area weighted)."""
    return sp.block_diag([sys.M_rho, sys.M_m, sys.M_e]).tocsr()


def _check_grids(a, b):
    if a.Y.shape != b.Y.shape:
        raise ConfigError(f"snapshot shapes differ: {a.Y.shape} vs {b.Y.shape}")
    if not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ConfigError("time grids differ")


def relative_errors(sys, Y_ref, Y, per_field: bool = False):
    """Per-column relative L2 distances of the state blocks of ``Y`` to ``Y_ref``."""
    L = sys.layout
    if not per_field:
        M = state_mass_matrix(sys)
        d = Y_ref[:L.n_state] - Y[:L.n_state]
        z = Y_ref[:L.n_state]
        num = np.einsum("ij,ij->j", d, M @ d)
        den = np.einsum("ij,ij->j", z, M @ z)
        return np.sqrt(num / den)
    out = {}
    for name, sl, M in (("rho", L.rho_slice, sys.M_rho), ("m", L.m_slice, sys.M_m),
                        ("e", L.e_slice, sys.M_e)):
        d = Y_ref[sl] - Y[sl]
        z = Y_ref[sl]
        den = np.einsum("ij,ij->j", z, M @ z)
        num = np.einsum("ij,ij->j", d, M @ d)
        out[name] = np.sqrt(num / np.where(den > 0, den, 1.0))
    return out


def mor_error(fom, rom_lifted, sys, per_field: bool = False):
    """Maximum over time of the relative L2 error of the lifted reduced trajectory."""
    _check_grids(fom, rom_lifted)
    err = relative_errors(sys, fom.Y, rom_lifted.Y, per_field)
    if per_field:
        return {k: float(v.max()) for k, v in err.items()}
    return float(err.max())


def projection_error(fom, rom, per_field: bool = False):
    """Maximum relative error of the mass-orthogonal projection onto the reduced spaces."""
    sys = rom.sys
    if fom.Y.shape[0] != sys.layout.size:
        raise ConfigError("snapshot dimension does not match the reduced model's full system")
    P = rom.V @ rom.project(fom.Y)
    err = relative_errors(sys, fom.Y, np.asarray(P), per_field)
    if per_field:
        return {k: float(v.max()) for k, v in err.items()}
    return float(err.max())


def ph_condition_error(model, Y) -> float:
    """max_t || E(z)^T e~(z) - grad H(z) ||_2 over the columns of ``Y``."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[0] == 1 and Y.shape[1] > 1 and Y.shape[1] == getattr(model, "size", -1):
        Y = Y.T
    worst = 0.0
    for k in range(Y.shape[1]):
        lhs, grad = model.ph_defect(Y[:, k])
        worst = max(worst, float(np.linalg.norm(lhs - grad)))
    return worst


def hamiltonian_gradient_fd(model, y, h: float = 1e-6):
    """Central-difference gradient of the (complexity reduced) Hamiltonian over the state coordinates."""
    n = getattr(model, "n_state", None) or model.layout.n_state
    g = np.zeros(n)
    for i in range(n):
        yp, ym = y.copy(), y.copy()
        yp[i] += h
        ym[i] -= h
        g[i] = (model.hamiltonian(yp) - model.hamiltonian(ym)) / (2 * h)
    return g


# ------------------------------------------------------------ structure
def _reduced_operators(model, y, t):
    sys = _full_system(model)
    weights = getattr(model, "weights", None)
    if model is sys:
        ops = sys.ph_operators(y, t, weights)
        return ops, None
    ops = sys.ph_operators(model.lift(y), t, weights)
    V = model.V.toarray()
    return {k: (V.T @ ops[k] @ V if k in ("E", "J", "R") else ops[k]) for k in ops}, V


def structure_report(model, states, t: float = 0.0, basis=None) -> dict:
    """Skew-symmetry, dissipation definiteness, kernel and compatibility metrics."""
    from .mor import compatibility_angles

    sys = _full_system(model)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.ndim == 2 and states.shape[0] != getattr(model, "size", sys.layout.size):
        states = states.T
    skew, r_min = 0.0, math.inf
    for k in range(states.shape[1]):
        ops, _ = _reduced_operators(model, states[:, k], t)
        J, R = ops["J"], ops["R"]
        skew = max(skew, float(np.abs(J + J.T).max(initial=0.0)))
        Rs = 0.5 * (R + R.T)
        ev = np.linalg.eigvalsh(Rs) if Rs.size else np.zeros(1)
        r_min = min(r_min, float(ev.min()))
    kernel = 0.0
    for k, mdl in enumerate(sys.models):
        D = fp.divergence(sys.layout.n[k])
        kernel = max(kernel, float(np.abs(D @ np.ones(D.shape[1])).max()))
    rep = {"skew": skew, "R_min_eig": r_min, "kernel_residual": kernel}
    b = basis if basis is not None else getattr(model, "basis", None)
    if b is not None:
        rep["angles"] = compatibility_angles(b, sys)
    return rep


# ------------------------------------------------------------ balances
def _lifted(model, Y):
    if hasattr(model, "lift"):
        return np.asarray(model.V @ Y)
    return Y


def balance_report(model, snap) -> dict:
    """Per-step mass defect |dM - tau sum f_B| and signed power defect dH/tau - ports."""
    sys = _full_system(model)
    Yl = _lifted(model, snap.Y)
    t = snap.times
    weights = getattr(model, "weights", None)
    M = np.array([sys.total_mass(Yl[:, k]) for k in range(Yl.shape[1])])
    H = np.array([sys.hamiltonian(Yl[:, k], weights) for k in range(Yl.shape[1])])
    mass_def = np.zeros(len(t))
    pow_def = np.zeros(len(t))
    for k in range(1, len(t)):
        tau = t[k] - t[k - 1]
        mass_def[k] = abs(M[k] - M[k - 1] - tau * sys.boundary_flow_sum(Yl[:, k], t[k]))
        pow_def[k] = (H[k] - H[k - 1]) / tau - sys.boundary_power(Yl[:, k], t[k])
    return {"mass": M, "H": H, "mass_defect": mass_def, "power_defect": pow_def}


# ------------------------------------------------------------ report / csv
@dataclass
class RunReport:
    times: np.ndarray
    H: np.ndarray
    mass: np.ndarray
    mass_defect: np.ndarray
    power_defect: np.ndarray
    newton_iterations: np.ndarray
    E_pH: np.ndarray
    H_c: np.ndarray | None = None
    E_t: float | None = None
    E_tP: float | None = None
    wall_time: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        for name in ("H", "mass", "mass_defect", "power_defect", "newton_iterations", "E_pH"):
            v = getattr(self, name)
            if len(v) != n:
                raise ConfigError(f"report column {name} has {len(v)} rows, expected {n}")
            if not np.all(np.isfinite(v)):
                raise ConfigError(f"report column {name} contains non-finite values")

    def summary(self) -> dict:
        return {"E_t": self.E_t, "E_tP": self.E_tP, "wall_time": self.wall_time,
                "max_mass_defect": float(np.max(self.mass_defect)),
                "max_E_pH": float(np.max(self.E_pH))}


def run_report(model, snap, wall_time=None, fom=None, ph_stride: int = 1) -> RunReport:
    """Collect the per-step diagnostics of a finished run (full or reduced)."""
    sys = _full_system(model)
    bal = balance_report(model, snap)
    eph = np.zeros(snap.n_cols)
    for k in range(0, snap.n_cols, max(1, ph_stride)):
        lhs, grad = model.ph_defect(snap.Y[:, k])
        eph[k] = np.linalg.norm(lhs - grad)
    H_c = None
    H = bal["H"]
    if getattr(model, "weights", None) is not None:
        H_c = H
        Yl = _lifted(model, snap.Y)
        H = np.array([sys.hamiltonian(Yl[:, k]) for k in range(Yl.shape[1])])
    E_t = E_tP = None
    if fom is not None and model is not sys:
        lifted = model.lift_snapshots(snap)
        E_t = mor_error(fom, lifted, sys)
        E_tP = projection_error(fom, model)
    return RunReport(snap.times, H, bal["mass"], bal["mass_defect"], bal["power_defect"],
                     np.asarray(snap.iterations), eph, H_c, E_t, E_tP, wall_time)


def write_report_csv(report: RunReport, path) -> None:
    """One row per step plus one summary row; the schema is named in a leading comment."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {CSV_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(STEP_COLUMNS + SUMMARY_COLUMNS)
        for k, t in enumerate(report.times):
            hc = "" if report.H_c is None else repr(float(report.H_c[k]))
            w.writerow(["step", k, repr(float(t)), repr(float(report.H[k])), hc,
                        repr(float(report.mass[k])), repr(float(report.mass_defect[k])),
                        repr(float(report.power_defect[k])), int(report.newton_iterations[k]),
                        repr(float(report.E_pH[k])), "", "", ""])
        fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        w.writerow(["summary"] + [""] * (len(STEP_COLUMNS) - 1)
                   + [fmt(report.E_t), fmt(report.E_tP), fmt(report.wall_time)])


def read_report_csv(path) -> dict:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# schema:"):
            raise ConfigError(f"{path}: missing schema header")
        rows = list(csv.DictReader(fh))
    steps = [r for r in rows if r["kind"] == "step"]
    summ = [r for r in rows if r["kind"] == "summary"]
    return {"schema": first.split(":", 1)[1].strip(), "steps": steps,
            "summary": summ[0] if summ else {}}
