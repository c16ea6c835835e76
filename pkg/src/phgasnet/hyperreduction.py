"""Empirical element quadrature for reduced models, and a DEIM baseline.

Weights are fitted by non-negative least squares so that, at training states,
the weighted element sums reproduce every nonlinear reduced-residual term
(momentum and energy rows tested with the reduced bases, the kinetic
integral defining eps, the kinetic energy) plus the pipe lengths. The learned
rule keeps only elements with strictly positive weight.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import nnls

from . import fem_pipe as fp
from .errors import AccuracyInfeasibleError, ConfigError, StructureError
from .mor import ReducedSystem, pod

log = logging.getLogger(__name__)

TERM_BLOCKS = fp.NL_M + fp.NL_E + ("eps", "kinetic")


@dataclass
class QuadratureRule:
    """Per-pipe element indices ``J`` and positive weights."""

    indices: list  # per pipe int arrays
    weights: list  # per pipe float arrays (same lengths)
    n_elements: list  # per pipe mesh sizes
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, (J, w) in enumerate(zip(self.indices, self.weights)):
            if len(J) != len(w):
                raise ConfigError(f"pipe {k}: index and weight counts differ")
            if np.any(np.asarray(w) <= 0):
                raise StructureError(f"pipe {k}: quadrature weights must be strictly positive")
            if len(J) and (np.min(J) < 0 or np.max(J) >= self.n_elements[k]):
                raise ConfigError(f"pipe {k}: element index out of range")

    @property
    def n_c(self) -> list:
        return [len(J) for J in self.indices]

    @property
    def total(self) -> int:
        return int(sum(self.n_c))

    def full_weights(self) -> list:
        out = []
        for J, w, n in zip(self.indices, self.weights, self.n_elements):
            v = np.zeros(n)
            v[np.asarray(J, dtype=int)] = w
            out.append(v)
        return out

    @classmethod
    def full(cls, n_elements):
        return cls([np.arange(n) for n in n_elements], [np.ones(n) for n in n_elements], list(n_elements))

    @classmethod
    def from_full_weights(cls, wlist, meta=None):
        idx = [np.flatnonzero(np.asarray(w) > 0) for w in wlist]
        return cls(idx, [np.asarray(w, dtype=float)[i] for w, i in zip(wlist, idx)],
                   [len(w) for w in wlist], meta or {})

    def to_dict(self):
        return {"indices": [np.asarray(J).tolist() for J in self.indices],
                "weights": [np.asarray(w).tolist() for w in self.weights],
                "n_elements": list(self.n_elements), "meta": self.meta}

    @classmethod
    def from_dict(cls, d):
        return cls([np.asarray(J, dtype=int) for J in d["indices"]],
                   [np.asarray(w, dtype=float) for w in d["weights"]],
                   list(d["n_elements"]), d.get("meta", {}))


def reduced_inner_product(rule: QuadratureRule, pipe: int, h: float, a, b, kinds=("p1", "p1")) -> float:
    """``sum_{j in J} w_j int_{omega_j} a b`` for P0 (``"p0"``) or P1 (``"p1"``) coefficients."""
    J = np.asarray(rule.indices[pipe], dtype=int)
    if J.size == 0:
        return 0.0
    w = np.asarray(rule.weights[pipe])

    def at_q(v, kind):
        v = np.asarray(v, dtype=float)
        if kind == "p0":
            return v[J][:, None] * np.ones(len(fp._W))
        return fp._interp(fp.pairs(v)[J])

    prod = at_q(a, kinds[0]) * at_q(b, kinds[1])
    return float(np.sum(w * (prod @ (h * fp._W))))


# ------------------------------------------------------------ training data
def _training_columns(snap, stride):
    cols = np.arange(1, snap.n_cols, max(1, int(stride)))
    return cols


def training_gram(rom: ReducedSystem, snap, stride: int = 1, blocks=TERM_BLOCKS):
    """Block-normalized Gram matrix ``G^T G`` of the element-contribution matrix.

    Columns index all network elements (pipe-major). Each row block holds one
    term, evaluated at the training snapshots and tested with the reduced basis.
    """
    sys = rom.sys
    L = sys.layout
    bas = rom.basis
    cols = _training_columns(snap, stride)
    tau = np.diff(snap.times)
    Y = snap.Y
    nE = L.n_elem
    grams = {}
    norms = {b: 0.0 for b in blocks}
    ones = rom.ones
    # element terms per pipe at all training states
    pipe_data = []
    for k, mdl in enumerate(sys.models):
        n = L.n[k]
        ri, mi, ei = L.rho[k], L.m[k], L.e[k]
        rho = Y[ri][:, cols].T
        m = Y[mi][:, cols].T
        e = Y[ei][:, cols].T
        rd = ((Y[ri][:, cols] - Y[ri][:, cols - 1]) / tau[cols - 1]).T
        md = ((Y[mi][:, cols] - Y[mi][:, cols - 1]) / tau[cols - 1]).T
        oloc = ones[ei - L.n_rho - L.n_nodal]
        terms = fp.element_terms(mdl, rho, fp.pairs(m), fp.pairs(e), rd, fp.pairs(md),
                                 np.broadcast_to(fp.pairs(oloc), (len(cols), n, 2)))
        mq = fp._interp(fp.pairs(m))
        terms["kinetic"] = np.einsum("kjq,q->kj", mq**2 / (2 * rho[..., None]), mdl.h * fp._W)
        pipe_data.append(terms)
    for b in blocks:
        parts = []
        for k, mdl in enumerate(sys.models):
            A, n = mdl.A, L.n[k]
            terms = pipe_data[k]
            nodal = sys.nodal_offsets[k]
            if b in fp.NL_M or b in fp.NL_E:
                V = bas.V_m if b in fp.NL_M else bas.V_e
                Vp = fp.pairs(V[nodal:nodal + n + 1].T).transpose(1, 2, 0)  # (n, 2, r)
                c = A * np.einsum("kja,jar->krj", terms[b], Vp)
            elif b == "eps":
                c = A * np.einsum("kj,jr->krj", terms["kin"], bas.V_rho[sys.rho_offsets[k]:sys.rho_offsets[k + 1]])
            elif b == "kinetic":
                c = A * terms["kinetic"][:, None, :]
            else:
                raise ConfigError(f"unknown training block {b!r}")
            parts.append(c)
        C = np.concatenate(parts, axis=2).reshape(-1, nE)
        nb = np.linalg.norm(C.sum(axis=1))
        norms[b] = nb
        s = 1.0 / nb if nb > 0 else 0.0
        grams[b] = s * s * (C.T @ C)
        del C, parts
    G = sum(grams.values())
    # element measures, one row per pipe
    meas = np.zeros((len(L.n), nE))
    for k, mdl in enumerate(sys.models):
        meas[k, sys.rho_offsets[k]:sys.rho_offsets[k + 1]] = mdl.A * mdl.h
    meas /= np.linalg.norm(meas.sum(axis=1))
    G = G + meas.T @ meas
    return G, {"block_norms": norms, "training_columns": int(len(cols))}


def _sqrt_system(G):
    lam, Q = np.linalg.eigh(G)
    keep = lam > 1e-14 * max(lam.max(), 1e-300)
    C = np.sqrt(lam[keep])[:, None] * Q[:, keep].T
    return C


def fit_weights(C, d, n_c: int, start=None):
    """NNLS ``min ||C w - d||, w >= 0`` with support pruned to at most ``n_c`` columns.

    Returns ``(w, relative_residual)``. Pruning removes the column with the
    smallest contribution ``w_j ||C_j||`` and refits on the remaining support.
    """
    n = C.shape[1]
    cand = np.arange(n) if start is None else np.asarray(start)
    w = np.zeros(n)
    sol, _ = nnls(C[:, cand], d, maxiter=50 * n)
    w[cand] = sol
    colnorm = np.linalg.norm(C, axis=0)
    while True:
        S = np.flatnonzero(w > 0)
        if len(S) <= n_c:
            break
        excess = len(S) - n_c
        score = w[S] * colnorm[S]
        drop = S[np.argsort(score, kind="stable")[:max(1, excess // 4)]]
        S = np.setdiff1d(S, drop)
        w = np.zeros(n)
        sol, _ = nnls(C[:, S], d, maxiter=50 * n)
        w[S] = sol
    dn = np.linalg.norm(d)
    res = np.linalg.norm(C @ w - d) / (dn if dn > 0 else 1.0)
    return w, float(res)


def learn_weights(rom: ReducedSystem, snap, n_c, mode: str = "A_omega", delta: float | None = None,
                  stride: int = 1, blocks=TERM_BLOCKS) -> QuadratureRule:
    """Learn a positive element quadrature for the nonlinear terms of ``rom``.

    ``mode="A_omega"`` solves one NNLS per pipe with per-pipe budgets ``n_c``
    (list); ``mode="A_E"`` solves one network-wide NNLS with a total budget
    (int) and lets the pruning allocate elements across pipes.
    """
    sys = rom.sys
    L = sys.layout
    G, info = training_gram(rom, snap, stride, blocks)
    off = sys.rho_offsets
    wfull = np.zeros(L.n_elem)
    residuals = []
    if mode == "A_omega":
        if np.isscalar(n_c) or len(n_c) != len(L.n):
            raise ConfigError("mode A_omega needs one budget per pipe", "/nc")
        for k in range(len(L.n)):
            sl = slice(off[k], off[k + 1])
            if not 1 <= int(n_c[k]) <= L.n[k]:
                raise ConfigError(f"pipe {k}: budget must be in [1, {L.n[k]}]", "/nc")
            C = _sqrt_system(G[sl, sl])
            w, res = fit_weights(C, C @ np.ones(L.n[k]), int(n_c[k]))
            wfull[sl] = w
            residuals.append(res)
        res_all = float(max(residuals))
    elif mode == "A_E":
        if not np.isscalar(n_c):
            raise ConfigError("mode A_E needs one total budget", "/nc")
        if not len(L.n) <= int(n_c) <= L.n_elem:
            raise ConfigError(f"budget must be in [{len(L.n)}, {L.n_elem}]", "/nc")
        C = _sqrt_system(G)
        wfull, res_all = fit_weights(C, C @ np.ones(L.n_elem), int(n_c))
        residuals = [res_all]
    else:
        raise ConfigError(f"unknown quadrature mode {mode!r}", "/mode")
    wl = [wfull[off[k]:off[k + 1]] for k in range(len(L.n))]
    if any(not np.any(w > 0) for w in wl):
        raise AccuracyInfeasibleError("a pipe received no quadrature elements", best_residual=res_all)
    if delta is not None and res_all > delta:
        raise AccuracyInfeasibleError(
            f"best achievable relative residual {res_all:.3e} exceeds delta={delta:.3e}", best_residual=res_all)
    meta = {"mode": mode, "budget": n_c if np.isscalar(n_c) else list(map(int, n_c)),
            "relative_residual": res_all, "pipe_residuals": residuals, "delta": delta,
            "blocks": list(blocks), **info}
    meta["block_norms"] = {k: float(v) for k, v in meta["block_norms"].items()}
    rule = QuadratureRule.from_full_weights(wl, meta)
    log.info("quadrature rule: n_c=%s, relative residual %.3e", rule.n_c, res_all)
    return rule


def norm_equivalence(rule: QuadratureRule, rom: ReducedSystem) -> dict:
    """Largest ratio ``||b|| / ||b||_c`` over all reduced basis functions, per field."""
    sys = rom.sys
    L = sys.layout
    out = {}
    for name, V, kind in (("rho", rom.basis.V_rho, "p0"), ("m", rom.basis.V_m, "p1"), ("e", rom.basis.V_e, "p1")):
        worst = 1.0
        for c in range(V.shape[1]):
            full = cmp = 0.0
            for k, mdl in enumerate(sys.models):
                if kind == "p0":
                    v = V[sys.rho_offsets[k]:sys.rho_offsets[k + 1], c]
                else:
                    v = V[sys.nodal_offsets[k]:sys.nodal_offsets[k + 1], c]
                allr = QuadratureRule.full([L.n[k]] * (k + 1))
                full += mdl.A * reduced_inner_product(allr, k, mdl.h, v, v, (kind, kind))
                cmp += mdl.A * reduced_inner_product(rule, k, mdl.h, v, v, (kind, kind))
            if full > 0 and cmp <= 0:
                raise StructureError(f"reduced {name}-basis function {c} vanishes in the reduced norm")
            if full > 0:
                worst = max(worst, np.sqrt(full / cmp))
        out[name] = float(worst)
    return out


def assemble_complexity_reduced(rom: ReducedSystem, rule: QuadratureRule) -> ReducedSystem:
    return ReducedSystem(rom.sys, rom.basis, weights=rule.full_weights(), check=False)


# ------------------------------------------------------------------ DEIM
@dataclass
class DeimOperator:
    U: np.ndarray
    P: np.ndarray  # interpolation indices
    UPinv: np.ndarray  # U (P^T U)^{-1}

    def apply(self, values_at_P):
        return self.UPinv @ values_at_P


def deim_indices(U):
    P = [int(np.argmax(np.abs(U[:, 0])))]
    for j in range(1, U.shape[1]):
        c = np.linalg.solve(U[np.ix_(P, range(j))], U[P, j])
        r = U[:, j] - U[:, :j] @ c
        P.append(int(np.argmax(np.abs(r))))
    return np.array(P)


def deim_build(snapshots, r: int) -> DeimOperator:
    S = np.asarray(snapshots, dtype=float)
    U = pod(S, np.eye(S.shape[0]), r)
    P = deim_indices(U)
    PU = U[P]
    if np.linalg.cond(PU) > 1e14:
        raise StructureError("DEIM interpolation matrix is singular")
    return DeimOperator(U, P, U @ np.linalg.inv(PU))


def deim_apply(op: DeimOperator, values_at_P):
    return op.apply(values_at_P)


def nonlinear_snapshots(sys, snap, stride: int = 1):
    """Nonlinear bulk contributions of the momentum and energy rows at training states."""
    L = sys.layout
    cols = _training_columns(snap, stride)
    Fm, Fe = [], []
    for c in cols:
        y = snap.Y[:, c]
        yd = (snap.Y[:, c] - snap.Y[:, c - 1]) / (snap.times[c] - snap.times[c - 1])
        nl = sys.evaluate(y, yd, snap.times[c], jac=False, nl_parts=True).nl["F"]
        Fm.append(nl[L.m_slice])
        Fe.append(nl[L.e_slice])
    return np.column_stack(Fm), np.column_stack(Fe)


class DeimReducedSystem(ReducedSystem):
    """Galerkin ROM whose nonlinear momentum/energy rows are replaced by DEIM interpolants.

    The full nonlinearity is evaluated and then sampled; this baseline is
    for accuracy comparisons, not speed.
    """

    def __init__(self, rom: ReducedSystem, deim_m: DeimOperator, deim_e: DeimOperator):
        super().__init__(rom.sys, rom.basis, weights=None, check=False)
        self.deim = (deim_m, deim_e)
        L = self.sys.layout
        N = L.size
        rows = []
        for op, sl in ((deim_m, L.m_slice), (deim_e, L.e_slice)):
            Pm = np.zeros((len(op.P), N))
            Pm[np.arange(len(op.P)), sl.start + op.P] = 1.0
            rows.append((sp.csr_matrix(Pm), op.UPinv, sl))
        self._interp = rows

    def _eval(self, yr, yrdot, t, shift, jac):
        s = self.sys
        y, yd = self.V @ yr, self.V @ yrdot
        ev = s.evaluate(y, yd, t, shift=shift, jac=jac, ones=self.ones, nl_parts=True)
        nlF = ev.nl["F"]
        F = ev.F_base - nlF
        J = (ev.J_base - ev.nl["J"]) if jac else None
        for Pm, UP, sl in self._interp:
            F[sl] += UP @ (Pm @ nlF)
        c = self.VrM @ ev.eps
        Fr = self.Vt @ F + self.GV @ c
        if not jac:
            return Fr, None
        Jr = self.Vt @ (J @ self.V)
        Jr = Jr.toarray() if sp.issparse(Jr) else np.asarray(Jr)
        for Pm, UP, sl in self._interp:
            Vt_sl = self.Vt[:, sl]
            Jr += (Vt_sl @ UP) @ (Pm @ ev.nl["J"] @ self.V).toarray()
        Jr += (self.GV @ (self.VrM @ (ev.deps @ self.V))).toarray()
        return Fr, Jr


def build_deim_rom(rom: ReducedSystem, snap, r: int, stride: int = 1) -> DeimReducedSystem:
    Fm, Fe = nonlinear_snapshots(rom.sys, snap, stride)
    return DeimReducedSystem(rom, deim_build(Fm, r), deim_build(Fe, r))
