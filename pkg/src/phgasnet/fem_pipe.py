"""P0/P1 finite elements on a single pipe.

Density lives in the piecewise-constant space (one value per element), mass
flow and energy density in the continuous piecewise-linear nodal space.
Two views are provided:

* explicit operator matrices (:func:`assemble_constant`, :func:`assemble_state`)
  used for structure checks and diagnostics, and
* a vectorised element kernel (:func:`element_terms`, :func:`element_jacobian`)
  used by the residual and Jacobian of the network system.

Both evaluate the same integrals with the same Gauss rule; the tests check that
they agree. Everything here is per unit cross-section; the network layer
applies the area weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryDegeneracyError, ConfigError, DomainError
from .gas import GasConstants, PipeParams, total_specific_enthalpy


def gauss_rule(npts: int = 3):
    """Gauss-Legendre points and weights on [0, 1] (weights sum to one)."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


_XI, _W = gauss_rule(3)
_N = np.stack([1.0 - _XI, _XI], axis=1)  # (Q, 2) local nodal shape functions


@dataclass(frozen=True)
class PipeMesh:
    L: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"a pipe needs at least 2 elements, got n={self.n}")
        if not self.L > 0:
            raise ConfigError("pipe length must be positive")

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dx


def build_mesh(L: float, n: int) -> PipeMesh:
    return PipeMesh(float(L), int(n))


@dataclass(frozen=True)
class PipeModel:
    """Coefficients entering the element kernel for one pipe."""

    h: float
    kappa: float
    c_v: float
    cf: float  # friction coefficient lambda/(2d) in the momentum row
    cf_e: float  # friction heating coefficient in the energy row (0 when moved to R_mm)
    kd: float  # cooling coefficient k/d
    T_inf: float
    A: float

    @classmethod
    def build(cls, mesh: PipeMesh, params: PipeParams, g: GasConstants,
              friction_in_energy: bool = True, cooling: bool = True) -> "PipeModel":
        cf = params.lambda_f / (2.0 * params.d)
        return cls(
            h=mesh.dx,
            kappa=g.kappa,
            c_v=g.c_v,
            cf=cf,
            cf_e=cf if friction_in_energy else 0.0,
            kd=params.k_omega / params.d if cooling else 0.0,
            T_inf=params.T_inf,
            A=params.A,
        )


@dataclass(frozen=True)
class PipeState:
    rho: np.ndarray
    m: np.ndarray
    e: np.ndarray

    def validate(self):
        if len(self.m) != len(self.rho) + 1 or len(self.e) != len(self.rho) + 1:
            raise ConfigError("state block sizes must be (n, n+1, n+1)")
        if np.any(~(self.rho > 0)):
            raise DomainError("density must be positive in every element")
        if np.any(~(self.e > 0)):
            raise DomainError("energy density must be positive at every node")


@dataclass(frozen=True)
class PipeConstantOps:
    M_rho: np.ndarray
    M_m: np.ndarray
    M_e: np.ndarray
    J_rho_m: np.ndarray
    T_m: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class PipeStateOps:
    M_m_rho: np.ndarray
    M_mm: np.ndarray
    J_me: np.ndarray
    Jt_me: np.ndarray
    R_mm: np.ndarray
    R_ee: np.ndarray
    b_e: np.ndarray
    t_e: np.ndarray
    eps: np.ndarray


def p1_mass(n: int, h: float) -> np.ndarray:
    M = np.zeros((n + 1, n + 1))
    idx = np.arange(n)
    M[idx, idx] += h / 3
    M[idx + 1, idx + 1] += h / 3
    M[idx, idx + 1] += h / 6
    M[idx + 1, idx] += h / 6
    return M


def divergence(n: int) -> np.ndarray:
    """J_rho_m[j, i] = -(d/dx phi_i, psi_j): +1 on the left node, -1 on the right."""
    J = np.zeros((n, n + 1))
    idx = np.arange(n)
    J[idx, idx] = 1.0
    J[idx, idx + 1] = -1.0
    return J


def assemble_constant(mesh: PipeMesh, params: PipeParams, g: GasConstants, cooling: bool = True) -> PipeConstantOps:
    n, h = mesh.n, mesh.dx
    T_m = np.zeros((n + 1, 2))
    T_m[0, 1] = 1.0
    T_m[n, 0] = -1.0
    kd = params.k_omega / params.d if cooling else 0.0
    b = kd * p1_mass(n, h).sum(axis=1)
    return PipeConstantOps(
        M_rho=h * np.eye(n),
        M_m=p1_mass(n, h),
        M_e=p1_mass(n, h),
        J_rho_m=divergence(n),
        T_m=T_m,
        b=b,
    )


def pairs(v):
    """Nodal vector(s) (..., n+1) -> element end values (..., n, 2)."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., :-1], v[..., 1:]], axis=-1)


def _interp(v2):
    """Values at the quadrature points of each element: (..., n, 2) -> (..., n, Q)."""
    return v2[..., 0, None] * _N[:, 0] + v2[..., 1, None] * _N[:, 1]


def element_terms(model: PipeModel, rho, m2, e2, rhodot=None, mdot2=None, o2=None):
    """Per-element, per-local-node integrals of every nonlinear residual term.

    Field arguments are element-pair arrays ``(..., n, 2)`` (see :func:`pairs`),
    densities ``(..., n)``; leading batch dimensions are allowed. Returns a dict of
    ``(..., n, 2)`` node contributions plus ``"kin"`` of shape ``(..., n)`` holding
    f_j, the integral of m^2/(2 rho^2) over element j.
    """
    rho = np.asarray(rho, dtype=float)
    h, kap = model.h, model.kappa
    r = rho[..., None]
    mq, eq = _interp(m2), _interp(e2)
    ex = (e2[..., 1] - e2[..., 0])[..., None] / h
    if o2 is None:
        oq, ox = 1.0, 0.0
    else:
        oq, ox = _interp(o2), (o2[..., 1] - o2[..., 0])[..., None] / h
    hw = h * _W
    D = np.array([-1.0, 1.0]) / h

    def node(integrand):
        return np.einsum("...q,q,qa->...a", integrand, hw, _N)

    out = {}
    if rhodot is not None:
        rd = np.asarray(rhodot, dtype=float)[..., None]
        out["mass_m"] = node((_interp(mdot2) - mq * rd / r) / r)
    out["conv_m"] = node((eq * ox + kap * ex * oq + kap * eq * ox) / r)
    o_fric = oq if model.cf_e != 0.0 else 1.0
    out["fric_m"] = node(model.cf * mq * np.abs(mq) * o_fric / r**2)
    flux = mq / r
    out["conv_e"] = -(
        np.einsum("...q,q->...", (1 + kap) * eq * flux, hw)[..., None] * D
        + node(kap * ex * flux)
    )
    out["fric_e"] = -node(model.cf_e * np.abs(mq) * mq**2 / r**2)
    out["cool_e"] = node(model.kd * eq * oq / (model.c_v * r))
    out["kin"] = np.einsum("...q,q->...", mq**2 / (2 * r**2), hw)
    return out


NL_M = ("mass_m", "conv_m", "fric_m")
NL_E = ("conv_e", "fric_e", "cool_e")


def element_jacobian(model: PipeModel, rho, m2, e2, rhodot, mdot2, o2=None):
    """Derivatives of the element terms (single state, element-pair inputs).

    Returns ``(dm, dm_dot, de, df)`` with shapes ``(n, 2, 5)``, ``(n, 2, 3)``,
    ``(n, 2, 5)`` and ``(n, 3)``. Local variable order is
    ``(rho_j, m_j, m_j+1, e_j, e_j+1)``; for time derivatives
    ``(rhodot_j, mdot_j, mdot_j+1)``; for f it is ``(rho_j, m_j, m_j+1)``.
    """
    h, kap, cf, cfe, kd, cv = model.h, model.kappa, model.cf, model.cf_e, model.kd, model.c_v
    n = len(rho)
    r = np.asarray(rho, dtype=float)[:, None]
    mq, eq = _interp(m2), _interp(e2)
    mdq = _interp(mdot2)
    rd = np.asarray(rhodot, dtype=float)[:, None]
    ex = (e2[:, 1] - e2[:, 0])[:, None] / h
    if o2 is None:
        oq, ox = np.ones_like(mq), np.zeros_like(mq)
    else:
        oq, ox = _interp(o2), (o2[:, 1] - o2[:, 0])[:, None] / h
    ofr = oq if cfe != 0.0 else np.ones_like(mq)
    hw = h * _W
    N = _N
    D = np.array([-1.0, 1.0]) / h
    am = np.abs(mq)

    dm = np.zeros((n, 2, 5))
    dmd = np.zeros((n, 2, 3))
    de = np.zeros((n, 2, 5))
    df = np.zeros((n, 3))

    conv = (eq * ox + kap * ex * oq + kap * eq * ox) / r
    g_rho = -mdq / r**2 + 2 * mq * rd / r**3 - conv / r - 2 * cf * mq * am * ofr / r**3
    g_m = -rd / r**2 + 2 * cf * am * ofr / r**2
    for a in range(2):
        wa = hw * N[:, a]
        dm[:, a, 0] = g_rho @ wa
        dmd[:, a, 0] = (-mq / r**2) @ wa
        for b in range(2):
            dm[:, a, 1 + b] = (g_m * N[:, b]) @ wa
            dm[:, a, 3 + b] = ((N[:, b] * ox + kap * D[b] * oq + kap * N[:, b] * ox) / r) @ wa
            dmd[:, a, 1 + b] = (N[:, b] / r) @ wa

        Ga = -(eq * D[a] + kap * ex * N[:, a] + kap * eq * D[a]) * mq / r
        Fa = -cfe * am * mq**2 / r**2 * N[:, a]
        Ca = kd * eq * oq / (cv * r) * N[:, a]
        de[:, a, 0] = (-Ga / r - 2 * Fa / r - Ca / r) @ hw
        for b in range(2):
            dG_dm = -(eq * D[a] + kap * ex * N[:, a] + kap * eq * D[a]) * N[:, b] / r
            dF_dm = -3 * cfe * mq * am / r**2 * N[:, b] * N[:, a]
            de[:, a, 1 + b] = (dG_dm + dF_dm) @ hw
            dG_de = -(N[:, b] * D[a] + kap * D[b] * N[:, a] + kap * N[:, b] * D[a]) * mq / r
            dC_de = kd * N[:, b] * oq / (cv * r) * N[:, a]
            de[:, a, 3 + b] = (dG_de + dC_de) @ hw
    df[:, 0] = (-(mq**2) / r**3) @ hw
    for b in range(2):
        df[:, 1 + b] = (mq * N[:, b] / r**2) @ hw
    return dm, dmd, de, df


def kinetic_gradient(model: PipeModel, rho, m, weights=None):
    """Gradient of int m^2/(2 rho) with respect to (rho, m) by element quadrature."""
    m2 = pairs(m)
    mq = _interp(m2)
    r = np.asarray(rho, dtype=float)[:, None]
    hw = model.h * _W
    w = np.ones(len(rho)) if weights is None else np.asarray(weights, dtype=float)
    g_rho = -w * ((mq**2 / (2 * r**2)) @ hw)
    el = np.einsum("jq,q,qa->ja", mq / r, hw, _N) * w[:, None]
    g_m = np.zeros(len(rho) + 1)
    g_m[:-1] += el[:, 0]
    g_m[1:] += el[:, 1]
    return g_rho, g_m


def state_matrices(model: PipeModel, rho, m, e, weights=None):
    """Vectorised dense assembly of the state-dependent blocks (unit area).

    Nonlinear blocks carry the optional element weights of a reduced quadrature.
    Returns ``(M_m_rho, M_mm, J_me, Jt_me, R_mm, R_ee, f)``.
    """
    n = len(rho)
    h, kap = model.h, model.kappa
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    m2, e2 = pairs(m), pairs(e)
    mq, eq = _interp(m2), _interp(e2)
    ex = (e2[:, 1] - e2[:, 0])[:, None] / h
    r = np.asarray(rho, dtype=float)[:, None]
    hw = h * _W
    N = _N
    D = np.array([-1.0, 1.0]) / h
    j = np.arange(n)
    M_m_rho = np.zeros((n + 1, n))
    M_mm = np.zeros((n + 1, n + 1))
    J_me = np.zeros((n + 1, n + 1))
    Jt = np.zeros((n + 1, n + 1))
    R_mm = np.zeros((n + 1, n + 1))
    R_ee = np.zeros((n + 1, n + 1))
    fr = model.cf * mq * np.abs(mq) / r**2
    for a in range(2):
        np.add.at(M_m_rho, (j + a, j), -w * ((N[:, a] * mq / r**2) @ hw))
        for b in range(2):
            NN = N[:, a] * N[:, b]
            np.add.at(M_mm, (j + a, j + b), w * ((NN / r) @ hw))
            np.add.at(J_me, (j + a, j + b),
                      w * (((-eq * D[b] - kap * ex * N[:, b] - kap * eq * D[b]) / r * N[:, a]) @ hw))
            if model.cf_e != 0.0:
                np.add.at(Jt, (j + a, j + b), -w * ((fr * NN) @ hw))
            else:
                np.add.at(R_mm, (j + a, j + b), w * ((model.cf * np.abs(mq) / r**2 * NN) @ hw))
            np.add.at(R_ee, (j + a, j + b), w * ((model.kd * eq / (model.c_v * r) * NN) @ hw))
    f = w * ((mq**2 / (2 * r**2)) @ hw)
    return M_m_rho, M_mm, J_me, Jt, R_mm, R_ee, f


def assemble_state(mesh: PipeMesh, params: PipeParams, g: GasConstants, z: PipeState,
                   e_in: float, f_B_in: float, friction_in_energy: bool = True,
                   cooling: bool = True, quad_points: int = 3) -> PipeStateOps:
    """Explicit state-dependent operator blocks at state ``z`` (unit cross-section)."""
    z.validate()
    if not e_in > 0:
        raise DomainError("inflow energy density must be positive")
    if f_B_in == 0:
        raise BoundaryDegeneracyError("inflow boundary flow is zero")
    model = PipeModel.build(mesh, params, g, friction_in_energy, cooling)
    n, h, kap = mesh.n, mesh.dx, g.kappa
    xi, w = gauss_rule(quad_points)
    N = np.stack([1 - xi, xi], axis=1)
    D = np.array([-1.0, 1.0]) / h
    hw = h * w
    M_m_rho = np.zeros((n + 1, n))
    M_mm = np.zeros((n + 1, n + 1))
    J_me = np.zeros((n + 1, n + 1))
    Jt = np.zeros((n + 1, n + 1))
    R_mm = np.zeros((n + 1, n + 1))
    R_ee = np.zeros((n + 1, n + 1))
    f = np.zeros(n)
    for j in range(n):
        rj = z.rho[j]
        mq = z.m[j] * N[:, 0] + z.m[j + 1] * N[:, 1]
        eq = z.e[j] * N[:, 0] + z.e[j + 1] * N[:, 1]
        ex = (z.e[j + 1] - z.e[j]) / h
        f[j] = hw @ (mq**2 / (2 * rj**2))
        for a in range(2):
            i = j + a
            M_m_rho[i, j] -= hw @ (N[:, a] * mq / rj**2)
            for b in range(2):
                k = j + b
                NaNb = N[:, a] * N[:, b]
                M_mm[i, k] += hw @ NaNb / rj
                J_me[i, k] += hw @ ((-eq * D[b] - kap * ex * N[:, b] - kap * eq * D[b]) / rj * N[:, a])
                fr = hw @ (model.cf * mq * np.abs(mq) / rj**2 * NaNb)
                if friction_in_energy:
                    Jt[i, k] -= fr
                else:
                    R_mm[i, k] += hw @ (model.cf * np.abs(mq) / rj**2 * NaNb)
                R_ee[i, k] += hw @ (model.kd * eq / (g.c_v * rj) * NaNb)
    b_e = np.zeros(n + 1)
    b_e[n] = (1 + kap) * z.e[n] / z.rho[n - 1]
    t_e = np.zeros(n + 1)
    t_e[0] = e_in
    return PipeStateOps(M_m_rho, M_mm, J_me, Jt, R_mm, R_ee, b_e, t_e, f / h)


def boundary_port(z: PipeState, params: PipeParams, g: GasConstants):
    """Return ``((f_B0, f_BL), (e_B0, e_BL))`` for a unit-area pipe."""
    if not (z.rho[0] > 0 and z.rho[-1] > 0):
        raise DomainError("density must be positive at both pipe ends")
    f0, fL = z.m[0], -z.m[-1]
    e0 = total_specific_enthalpy(z.rho[0], z.m[0], z.e[0], g)
    eL = total_specific_enthalpy(z.rho[-1], z.m[-1], z.e[-1], g)
    return (float(f0), float(fL)), (float(e0), float(eL))


def kinetic_energy(model: PipeModel, rho, m, weights=None):
    """int m^2/(2 rho) per unit area, optionally with element weights."""
    mq = _interp(pairs(m))
    per_el = np.einsum("...q,q->...", mq**2 / (2 * np.asarray(rho)[..., None]), model.h * _W)
    if weights is not None:
        per_el = per_el * weights
    return per_el.sum(axis=-1)


def internal_energy(h: float, e):
    e = np.asarray(e, dtype=float)
    return h * (e.sum(axis=-1) - 0.5 * (e[..., 0] + e[..., -1]))


def hamiltonian(z: PipeState, mesh: PipeMesh, params: PipeParams, g: GasConstants | None = None) -> float:
    if np.any(~(z.rho > 0)):
        raise DomainError("density must be positive in every element")
    model = PipeModel(mesh.dx, 0.4, 2.5, 0, 0, 0, 0, params.A)
    return float(params.A * (kinetic_energy(model, z.rho, z.m) + internal_energy(mesh.dx, z.e)))


def total_mass(z: PipeState, mesh: PipeMesh, params: PipeParams) -> float:
    return float(params.A * mesh.dx * np.sum(z.rho))
