"""Implicit Euler with Newton iteration for the index-2 network DAE."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (ConfigError, DomainError, InconsistentInitialDataError, NonConvergenceError,
                     SolverError)
from .gas import total_specific_enthalpy

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class SolverConfig:
    tau: float = 0.1
    t_f: float = 30.0
    newton_tol: float = 1e-10
    newton_max_iter: int = 20
    linear_solver: str = "auto"  # auto | dense | sparse
    line_search: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError("tau must be positive", "/solver/tau")
        if not self.t_f >= 0:
            raise ConfigError("t_f must be non-negative", "/solver/t_f")
        if not self.newton_tol > 0:
            raise ConfigError("newton_tol must be positive", "/solver/newton_tol")
        if int(self.newton_max_iter) < 1:
            raise ConfigError("newton_max_iter must be at least 1", "/solver/newton_max_iter")
        if self.linear_solver not in ("auto", "dense", "sparse"):
            raise ConfigError(f"unknown linear solver {self.linear_solver!r}", "/solver/linear_solver")

    @property
    def n_steps(self) -> int:
        k = self.t_f / self.tau
        n = int(round(k))
        if abs(k - n) > 1e-9 * max(1.0, k):
            raise ConfigError("t_f must be an integer multiple of tau", "/solver/t_f")
        return n

    def to_dict(self):
        return {"tau": self.tau, "t_f": self.t_f, "newton_tol": self.newton_tol,
                "newton_max_iter": self.newton_max_iter, "linear_solver": self.linear_solver,
                "line_search": self.line_search, "residual_norm": "max"}


@dataclass
class SnapshotSet:
    """Time grid and full unknown vectors at every accepted step (columns)."""

    times: np.ndarray
    Y: np.ndarray
    iterations: np.ndarray
    layout: object = None
    meta: dict = field(default_factory=dict)

    @property
    def n_cols(self) -> int:
        return self.Y.shape[1]

    def field(self, name: str, pipe: int | None = None) -> np.ndarray:
        L = self.layout
        if pipe is None:
            sl = {"rho": L.rho_slice, "m": L.m_slice, "e": L.e_slice}[name]
            return self.Y[sl]
        idx = {"rho": L.rho, "m": L.m, "e": L.e}[name][pipe]
        return self.Y[idx]

    @property
    def S_rho(self):
        return self.field("rho")

    @property
    def S_m(self):
        return self.field("m")

    @property
    def S_e(self):
        return self.field("e")

    @property
    def multipliers(self):
        return self.Y[self.layout.n_state:]


def _solve(J, F, mode):
    if sp.issparse(J):
        n = J.shape[0]
        if mode == "dense" or (mode == "auto" and n < DENSE_LIMIT):
            J = J.toarray()
        else:
            try:
                lu = spla.splu(J.tocsc())
            except RuntimeError as exc:
                raise SolverError(f"sparse LU failed: {exc}") from exc
            x = lu.solve(F)
            if not np.all(np.isfinite(x)):
                raise SolverError("sparse LU produced non-finite values (singular Jacobian)")
            return x
    J = np.asarray(J)
    try:
        with np.errstate(all="raise"), warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(J, check_finite=True)
    except (ValueError, FloatingPointError, sla.LinAlgError) as exc:
        raise SolverError(f"dense LU failed: {exc}") from exc
    if np.any(np.abs(np.diag(lu)) == 0.0):
        raise SolverError("singular Jacobian")
    x = sla.lu_solve((lu, piv), F)
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite values")
    return x


def newton(fun, y0, tol, max_iter, mode="auto", line_search=False, t=None):
    """Solve ``fun(y) = (F, J)`` for F = 0. Returns ``(y, iterations)``."""
    y = y0.copy()
    F, J = fun(y)
    nrm = np.max(np.abs(F)) if F.size else 0.0
    it = 0
    while nrm > tol:
        if it >= max_iter:
            raise NonConvergenceError(
                f"Newton did not converge in {max_iter} iterations at t={t} (|F|_max={nrm:.3e})",
                residual_norm=float(nrm), time=t)
        dy = _solve(J, F, mode)
        if line_search:
            a = 1.0
            phi0 = 0.5 * float(F @ F)
            while True:
                try:
                    Fn, Jn = fun(y - a * dy)
                    if 0.5 * float(Fn @ Fn) <= (1 - 1e-4 * a) * phi0 or a < 1e-8:
                        break
                except DomainError:
                    if a < 1e-8:
                        raise
                a *= 0.5
            y = y - a * dy
            F, J = Fn, Jn
        else:
            y = y - dy
            F, J = fun(y)
        nrm = np.max(np.abs(F))
        it += 1
        if not np.isfinite(nrm):
            raise NonConvergenceError(f"Newton diverged at t={t}", residual_norm=float(nrm), time=t)
    return y, it


def step(sys, y_k, t_k, config: SolverConfig):
    """One implicit Euler step; returns ``(y_{k+1}, iterations)``."""
    tau = config.tau
    t1 = t_k + tau

    def fun(y):
        return sys.residual_and_jacobian(y, (y - y_k) / tau, t1, 1.0 / tau)

    return newton(fun, y_k, config.newton_tol, config.newton_max_iter, config.linear_solver,
                  config.line_search, t=t1)


def simulate(sys, y0, config: SolverConfig, t0: float = 0.0, callback=None) -> SnapshotSet:
    """Integrate from ``y0`` and store every accepted step (including ``t0``)."""
    n = config.n_steps
    Y = np.empty((len(y0), n + 1))
    Y[:, 0] = y0
    its = np.zeros(n + 1, dtype=int)
    times = t0 + config.tau * np.arange(n + 1)
    y = np.asarray(y0, dtype=float).copy()
    for k in range(n):
        try:
            y, its[k + 1] = step(sys, y, times[k], config)
        except DomainError as exc:
            raise DomainError(f"{exc} (step to t={times[k + 1]:.6g})") from exc
        Y[:, k + 1] = y
        if callback is not None:
            callback(k + 1, times[k + 1], y)
    meta = {"solver": config.to_dict()}
    return SnapshotSet(times, Y, its, getattr(sys, "layout", None), meta)


# ------------------------------------------------------------ initialization
def initial_guess(sys, states, t: float = 0.0):
    """Unknown vector with closed-form multipliers and traced interface flows."""
    L = sys.layout
    y = sys.pack_states(states)
    g = sys.gas
    for k, s in enumerate(states):
        y[L.lam_m + 2 * k] = s.m[-1] ** 2 / (2 * s.rho[-1] ** 2)
        y[L.lam_m + 2 * k + 1] = s.m[0] ** 2 / (2 * s.rho[0] ** 2)
        y[L.lam_e + k] = s.m[0] * (1 + g.kappa) / s.rho[0]
    outs = {v: [] for v in sys.graph.interior_nodes}
    for kk, ent in enumerate(sys.entries):
        s = states[ent.edge]
        A = sys.models[ent.edge].A
        if ent.end == "tail":
            y[L.u0 + kk] = A * s.m[0]
            outs[ent.node].append(total_specific_enthalpy(s.rho[0], s.m[0], s.e[0], g))
        else:
            y[L.u0 + kk] = -A * s.m[-1]
            outs[ent.node].append(total_specific_enthalpy(s.rho[-1], s.m[-1], s.e[-1], g))
    for i, v in enumerate(sys.graph.interior_nodes):
        y[L.lam_h + i] = float(np.mean(outs[v]))
    for idx, k in enumerate(sys.promoted):
        y[L.fb + idx] = sys.models[k].A * states[k].m[0]
    return y


def consistent_init(sys, states, t: float = 0.0, tol: float = 1e-8, max_iter: int = 20):
    """Closed-form multipliers, then a Gauss-Newton polish of the algebraic rows.

    Only the multiplier/interface unknowns are adjusted; the pipe states are
    taken as given.
    """
    y = initial_guess(sys, states, t)
    L = sys.layout
    a = L.alg_slice
    zero = np.zeros(L.size)
    for _ in range(max_iter + 1):
        F = sys.residual(y, zero, t)[a]
        if np.max(np.abs(F)) <= tol:
            return y
        J = sys.jacobian(y, zero, t).toarray()[a, a]
        dy = np.linalg.lstsq(J, F, rcond=None)[0]
        y[a] -= dy
    F = sys.residual(y, zero, t)[a]
    res = float(np.max(np.abs(F)))
    if res > tol:
        raise InconsistentInitialDataError(
            f"algebraic constraints cannot be satisfied by the multipliers (|F|_max={res:.3e}); "
            "check that the initial states match the boundary data")
    return y
