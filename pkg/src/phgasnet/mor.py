"""Compatibility-preserving POD and Galerkin reduced models.

Bases are M-orthonormal (``V^T M V = I``) in the area-weighted network inner
products. The density basis is trained on density snapshots augmented with the
discrete density rates generated by the flux and energy snapshots; the
mass-flow basis is built so that the divergence maps it onto the density basis,
plus the constants per pipe (the divergence kernel). The energy basis equals
the mass-flow basis so that the constant function is represented exactly.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .dae import SnapshotSet, consistent_init
from .errors import ConfigError, RankDeficiencyError, StructureError

log = logging.getLogger(__name__)

RANK_RTOL = 1e-12
DEDUP_ANGLE = 1e-8


class ParityWarning(UserWarning):
    """Reduced density dimension and element count have different parity."""


# ------------------------------------------------------------------ POD
def _chol(M):
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    if np.allclose(M, np.diag(np.diag(M))):
        return np.diag(np.sqrt(np.diag(M))), True
    return np.linalg.cholesky(M), False


def pod(S, M, r: int, return_sv: bool = False):
    """Dominant ``r``-dimensional M-orthonormal basis of the columns of ``S``.

    ``M = L L^T`` (Cholesky), SVD of ``L^T S``, basis ``L^{-T} U_r``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    r = int(r)
    if r < 0:
        raise ConfigError("basis width must be non-negative")
    L, diag = _chol(M)
    Y = L.T @ S
    U, s, _ = np.linalg.svd(Y, full_matrices=False)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    if r > rank:
        raise RankDeficiencyError(f"requested r={r} exceeds the numerical rank {rank} of the snapshots",
                                  max_rank=rank)
    Ur = U[:, :r]
    if diag:
        V = Ur / np.diag(L)[:, None]
    else:
        V = sla.solve_triangular(L.T, Ur, lower=False)
    return (V, s) if return_sv else V


def m_orthonormalize(W, M, reorth: bool = True, drop_tol: float = DEDUP_ANGLE):
    """Modified Gram-Schmidt in the M inner product, one reorthogonalization pass.

    Columns whose remaining component is below ``drop_tol`` relative to their
    original M-norm are dropped (near-duplicates).
    """
    M = M.toarray() if sp.issparse(M) else np.asarray(M)
    out = []
    for j in range(W.shape[1]):
        v = W[:, j].astype(float).copy()
        n0 = np.sqrt(v @ M @ v)
        if n0 == 0:
            continue
        for _ in range(2 if reorth else 1):
            for q in out:
                v -= (q @ M @ v) * q
        nv = np.sqrt(v @ M @ v)
        if nv <= drop_tol * n0:
            continue
        out.append(v / nv)
    return np.column_stack(out) if out else np.zeros((W.shape[0], 0))


# ---------------------------------------------------------- network blocks
@dataclass(frozen=True)
class BlockOps:
    """Area-weighted constant operators of one reduction block (pipe or network)."""

    M_rho: object
    M_m: object
    J: object  # mass-row divergence, shape (n_rho, n_m)
    kernel: np.ndarray  # columns spanning ker J (one constant per pipe)

    @property
    def kdim(self) -> int:
        return self.kernel.shape[1]


def network_ops(sys) -> BlockOps:
    L = sys.layout
    A_rho = sp.diags(np.concatenate([np.full(n, mdl.A) for n, mdl in zip(L.n, sys.models)]))
    J = (A_rho @ sys.J_rho_m).tocsr()
    K = np.zeros((L.n_nodal, len(L.n)))
    for k in range(len(L.n)):
        K[sys.nodal_offsets[k]:sys.nodal_offsets[k + 1], k] = 1.0
    return BlockOps(sys.M_rho.tocsr(), sys.M_m.tocsr(), J, K)


def pipe_ops(sys, k) -> BlockOps:
    ops = network_ops(sys)
    r0, r1 = sys.rho_offsets[k], sys.rho_offsets[k + 1]
    n0, n1 = sys.nodal_offsets[k], sys.nodal_offsets[k + 1]
    return BlockOps(ops.M_rho[r0:r1, r0:r1], ops.M_m[n0:n1, n0:n1], ops.J[r0:r1, n0:n1],
                    np.ones((n1 - n0, 1)))


# ---------------------------------------------------------- algorithms
def build_rho_basis(S_rho, S_m, S_e, ops: BlockOps, r_rho: int, energy_augmentation: bool = True):
    """POD of density snapshots augmented with ``M_rho^{-1} J [S_m, S_e]``."""
    n = ops.M_rho.shape[0]
    if not 0 < r_rho < n:
        raise ConfigError(f"r_rho must satisfy 0 < r_rho < {n}, got {r_rho}")
    Minv = 1.0 / ops.M_rho.diagonal()
    blocks = [np.asarray(S_rho), Minv[:, None] * (ops.J @ S_m)]
    if energy_augmentation:
        blocks.append(Minv[:, None] * (ops.J @ S_e))
    return pod(np.hstack(blocks), ops.M_rho, r_rho)


def compatible_basis(V_rho, ops: BlockOps):
    """Mass-flow/energy basis ``[W_m, N]`` M_m-orthonormalized; returns ``(V_m, V_e)``."""
    Mm = ops.M_m.toarray() if sp.issparse(ops.M_m) else np.asarray(ops.M_m)
    J = ops.J.toarray() if sp.issparse(ops.J) else np.asarray(ops.J)
    Mr = ops.M_rho.toarray() if sp.issparse(ops.M_rho) else np.asarray(ops.M_rho)
    if V_rho.shape[1]:
        MinvJt = np.linalg.solve(Mm, J.T)
        S = J @ MinvJt
        c = np.linalg.cond(S)
        if c > 1e12:
            raise StructureError(f"J M_m^-1 J^T is ill-conditioned (cond={c:.2e})")
        W = MinvJt @ np.linalg.solve(S, Mr @ V_rho)
    else:
        W = np.zeros((Mm.shape[0], 0))
    V_m = m_orthonormalize(np.hstack([W, ops.kernel]), Mm)
    return V_m, V_m.copy()


def naive_basis(S_rho, S_m, S_e, ops: BlockOps, r_rho: int):
    """Separate POD of each field, widths ``(r, r + kdim, r + kdim)``; no compatibility."""
    r_m = r_rho + ops.kdim
    return (pod(S_rho, ops.M_rho, r_rho), pod(S_m, ops.M_m, r_m), pod(S_e, ops.M_m, r_m))


@dataclass
class ReductionBasis:
    V_rho: np.ndarray
    V_m: np.ndarray
    V_e: np.ndarray
    mode: str  # "A_E" | "A_omega"
    r_spec: object
    compatible: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def widths(self):
        return (self.V_rho.shape[1], self.V_m.shape[1], self.V_e.shape[1])


def _as_list(r, E):
    if np.isscalar(r):
        return None
    r = [int(x) for x in r]
    if len(r) != E:
        raise ConfigError(f"expected {E} per-pipe dimensions, got {len(r)}")
    return r


def check_parity(n, r, label=""):
    if (int(n) - int(r)) % 2:
        msg = (f"{label}reduced density dimension r={r} and element count n={n} have different parity; "
               "odd/even mismatches are known to produce zig-zag density modes and large errors")
        warnings.warn(msg, ParityWarning, stacklevel=3)
        return False
    return True


def build_basis(snap: SnapshotSet, sys, mode: str = "A_E", r=10, energy_augmentation: bool = True,
                compatible: bool = True) -> ReductionBasis:
    """Bases for the whole network (``A_E``) or block-diagonal per pipe (``A_omega``)."""
    L = sys.layout
    E = len(L.n)
    if mode not in ("A_E", "A_omega"):
        raise ConfigError(f"unknown reduction mode {mode!r}", "/mode")
    S_rho, S_m, S_e = snap.S_rho, snap.S_m, snap.S_e
    if mode == "A_E":
        if not np.isscalar(r):
            raise ConfigError("mode A_E takes a single r_rho")
        r = int(r)
        check_parity(L.n_rho, r)
        ops = network_ops(sys)
        if compatible:
            Vr = build_rho_basis(S_rho, S_m, S_e, ops, r, energy_augmentation)
            Vm, Ve = compatible_basis(Vr, ops)
        else:
            Vr, Vm, Ve = naive_basis(S_rho, S_m, S_e, ops, r)
        return ReductionBasis(Vr, Vm, Ve, mode, r, compatible,
                              {"energy_augmentation": energy_augmentation})
    rs = _as_list(r, E)
    if rs is None:
        raise ConfigError("mode A_omega takes one r_rho per pipe")
    blocks = []
    for k in range(E):
        check_parity(L.n[k], rs[k], f"pipe {sys.graph.edges[k].name}: ")
        ops = pipe_ops(sys, k)
        sr = S_rho[sys.rho_offsets[k]:sys.rho_offsets[k + 1]]
        sm = S_m[sys.nodal_offsets[k]:sys.nodal_offsets[k + 1]]
        se = S_e[sys.nodal_offsets[k]:sys.nodal_offsets[k + 1]]
        if compatible:
            Vr = build_rho_basis(sr, sm, se, ops, rs[k], energy_augmentation)
            Vm, Ve = compatible_basis(Vr, ops)
        else:
            Vr, Vm, Ve = naive_basis(sr, sm, se, ops, rs[k])
        blocks.append((Vr, Vm, Ve))
    Vr = sla.block_diag(*[b[0] for b in blocks])
    Vm = sla.block_diag(*[b[1] for b in blocks])
    Ve = sla.block_diag(*[b[2] for b in blocks])
    return ReductionBasis(Vr, Vm, Ve, mode, rs, compatible,
                          {"energy_augmentation": energy_augmentation,
                           "pipe_widths": [b[0].shape[1] for b in blocks]})


# ---------------------------------------------------------- diagnostics
def _orth(A, tol=1e-10):
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    if A.shape[1] == 0:
        return A
    return sla.orth(A, rcond=tol)


def subspace_gap(A, B):
    """Sine of the largest angle of span(A) to span(B) (containment A in B)."""
    QA, QB = _orth(A), _orth(B)
    if QA.shape[1] == 0:
        return 0.0
    if QB.shape[1] == 0:
        return 1.0
    R = QA - QB @ (QB.T @ QA)
    return float(np.linalg.norm(R, 2))


def compatibility_angles(basis: ReductionBasis, sys) -> dict:
    ops = network_ops(sys)
    MV = ops.M_rho @ basis.V_rho
    JV = ops.J @ basis.V_m
    return {
        "A1": max(subspace_gap(MV, JV), subspace_gap(JV, MV)),
        "A2": subspace_gap(ops.kernel, basis.V_m),
        "A3": subspace_gap(np.ones((ops.M_m.shape[0], 1)), basis.V_e),
        "orthonormality": max(
            np.abs(basis.V_rho.T @ (ops.M_rho @ basis.V_rho) - np.eye(basis.V_rho.shape[1])).max(initial=0),
            np.abs(basis.V_m.T @ (ops.M_m @ basis.V_m) - np.eye(basis.V_m.shape[1])).max(initial=0)),
    }


# ---------------------------------------------------------- reduced system
class ReducedSystem:
    """Galerkin projection of a ``NetworkSystem`` onto a ``ReductionBasis``.

    Multiplier and interface unknowns are not reduced. Nonlinear blocks are
    evaluated at the lifted state, optionally with element quadrature weights.
    """

    def __init__(self, sys, basis: ReductionBasis, weights=None, check: bool = True):
        self.sys = sys
        self.basis = basis
        self.weights = weights
        L = sys.layout
        self.n_alg = L.size - L.n_state
        self.r_rho, self.r_m, self.r_e = basis.widths
        if basis.V_rho.shape[0] != L.n_rho or basis.V_m.shape[0] != L.n_nodal:
            raise ConfigError("basis dimensions do not match the network")
        if check and basis.compatible:
            ang = compatibility_angles(basis, sys)
            bad = {k: v for k, v in ang.items() if v > 1e-8}
            if bad:
                raise StructureError(f"basis violates compatibility conditions: {bad}")
        self.V = sp.block_diag([sp.csr_matrix(basis.V_rho), sp.csr_matrix(basis.V_m),
                                sp.csr_matrix(basis.V_e), sp.identity(self.n_alg)]).tocsr()
        self.Vt = self.V.T.tocsr()
        self.n_state = self.r_rho + self.r_m + self.r_e
        self.size = self.n_state + self.n_alg
        Mr = sys.M_rho
        self.VrM = sp.csr_matrix(basis.V_rho.T @ Mr)  # eps projection coefficients
        self.Vr = sp.csr_matrix(basis.V_rho)
        self.GV = sp.csr_matrix(self.Vt @ sys.G @ self.Vr)
        Me = sys.M_e
        ones = np.ones(L.n_nodal)
        self.ones = basis.V_e @ (basis.V_e.T @ (Me @ ones))
        self.projectors = {
            "rho": basis.V_rho.T @ Mr, "m": basis.V_m.T @ sys.M_m, "e": basis.V_e.T @ Me}

    @property
    def alg_slice(self):
        return slice(self.n_state, self.size)

    @property
    def gas(self):
        return self.sys.gas

    def lift(self, yr):
        return self.V @ yr

    def project(self, y):
        L = self.sys.layout
        y = np.asarray(y)
        if y.shape[0] != L.size:
            raise ConfigError(f"state has length {y.shape[0]}, expected {L.size}")
        parts = [self.projectors["rho"] @ y[L.rho_slice], self.projectors["m"] @ y[L.m_slice],
                 self.projectors["e"] @ y[L.e_slice], y[L.alg_slice]]
        return np.concatenate(parts, axis=0)

    def _eval(self, yr, yrdot, t, shift, jac):
        s = self.sys
        y, yd = self.V @ yr, self.V @ yrdot
        ev = s.evaluate(y, yd, t, shift=shift, jac=jac, weights=self.weights, ones=self.ones)
        c = self.VrM @ ev.eps
        F = self.Vt @ ev.F_base + self.GV @ c
        if not jac:
            return F, None
        J = (self.Vt @ (ev.J_base @ self.V)) + self.GV @ (self.VrM @ (ev.deps @ self.V))
        return F, J.toarray() if sp.issparse(J) else J

    def residual(self, yr, yrdot, t, **kw):
        return self._eval(yr, yrdot, t, 0.0, False)[0]

    def jacobian(self, yr, yrdot, t, shift=0.0):
        return sp.csr_matrix(self._eval(yr, yrdot, t, shift, True)[1])

    def residual_and_jacobian(self, yr, yrdot, t, shift):
        return self._eval(yr, yrdot, t, shift, True)

    def hamiltonian(self, yr) -> float:
        return self.sys.hamiltonian(self.lift(yr), self.weights)

    def total_mass(self, yr) -> float:
        return self.sys.total_mass(self.lift(yr))

    def ph_defect(self, yr):
        """Reduced ``(E_r^T e~_r, grad H_r)`` in reduced state coordinates."""
        s = self.sys
        y = self.lift(yr)
        ev = s.evaluate(y, np.zeros_like(y), 0.0, jac=False, weights=self.weights, ones=self.ones)
        eps_l = self.Vr @ (self.VrM @ ev.eps)
        lhs, grad = s.ph_defect(y, self.weights, eps=eps_l, ones=self.ones)
        Vs = self.V[:s.layout.n_state, :self.n_state]
        return Vs.T @ lhs, Vs.T @ grad

    def initial_state(self, y0_full, t: float = 0.0):
        """Projected initial state with the algebraic rows polished over the multipliers."""
        yr = self.project(y0_full)
        return polish_algebraic(self, yr, t)

    def lift_snapshots(self, snap: SnapshotSet) -> SnapshotSet:
        Y = self.V @ snap.Y
        return SnapshotSet(snap.times, np.asarray(Y), snap.iterations, self.sys.layout, dict(snap.meta))


def polish_algebraic(model, y, t, tol=1e-12, max_iter=20):
    """Least-squares Newton on the algebraic rows over the algebraic unknowns (best effort)."""
    a = model.alg_slice
    y = y.copy()
    z = np.zeros_like(y)
    for _ in range(max_iter):
        F = model.residual(y, z, t)[a]
        if np.max(np.abs(F)) <= tol:
            break
        J = model.jacobian(y, z, t).toarray()[a, a]
        y[a] -= np.linalg.lstsq(J, F, rcond=None)[0]
    return y


def reduce_network(snap: SnapshotSet, sys, mode="A_E", r=10, energy_augmentation=True,
                   compatible=True):
    basis = build_basis(snap, sys, mode, r, energy_augmentation, compatible)
    return basis, ReducedSystem(sys, basis)


def galerkin_reduce(sys, basis: ReductionBasis, weights=None) -> ReducedSystem:
    return ReducedSystem(sys, basis, weights)


def project_state(rom: ReducedSystem, y):
    return rom.project(y)


def lift_state(rom: ReducedSystem, yr):
    return rom.lift(yr)
