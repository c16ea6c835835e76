"""Coupled network DAE: unknown layout, residual, analytic Jacobian and pH operators.

Every residual row is written as ``E(z) zdot - (J(z) - R(z)) e~(z) - B u``.

Unknown vector layout (``NetworkSystem.layout``)::

    [ rho (all pipes) | m (all pipes) | e (all pipes) |
      lambda_m (2 per pipe: outflow end, inflow end) | lambda_e (1 per pipe) |
      u_0 (interior boundary flows) | lambda_H (1 per interior node) |
      promoted inflow flows (density boundary conditions) ]

Rows follow the same order: dynamic rows of each field, then the algebraic rows
belonging to each multiplier, coupling rows ``C^T lambda_H - B_0^T e~`` (one per
u_0 entry), node balances ``C u_0`` (one per interior node) and density
boundary rows ``rho_1 - rho_bc``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem_pipe as fp
from .errors import (AssemblyError, BoundaryDegeneracyError, ConfigError, DegenerateNodeError,
                     DomainError, GraphError)
from .gas import GasConstants, total_specific_enthalpy
from .network import NetworkGraph, coupling_entries, coupling_matrix, flow_sets


@dataclass(frozen=True)
class BoundaryCondition:
    """Signals prescribed at one boundary node (callables of time)."""

    node: str
    m: object = None
    rho: object = None
    e: object = None


@dataclass
class Layout:
    n: list
    rho: list  # per pipe index arrays
    m: list
    e: list
    lam_m: int
    lam_e: int
    u0: int
    lam_h: int
    fb: int
    n_u0: int
    n_nodes: int
    n_fb: int

    @property
    def n_elem(self) -> int:
        return sum(self.n)

    @property
    def n_rho(self) -> int:
        return self.n_elem

    @property
    def n_nodal(self) -> int:
        return self.n_elem + len(self.n)

    @property
    def n_state(self) -> int:
        return self.n_rho + 2 * self.n_nodal

    @property
    def size(self) -> int:
        return self.fb + self.n_fb

    @property
    def rho_slice(self):
        return slice(0, self.n_rho)

    @property
    def m_slice(self):
        return slice(self.n_rho, self.n_rho + self.n_nodal)

    @property
    def e_slice(self):
        return slice(self.n_rho + self.n_nodal, self.n_state)

    @property
    def alg_slice(self):
        return slice(self.n_state, self.size)


@dataclass
class Evaluation:
    """Residual split into an eps-free part and the eps coupling ``G @ eps``."""

    F_base: np.ndarray
    J_base: object  # sparse, d/dy + shift d/dydot of F_base
    eps: np.ndarray  # network eps vector (rho space)
    deps: object  # sparse d eps / dy
    nl: dict = field(default_factory=dict)


class NetworkSystem:
    """Assembled semi-discrete network model (immutable after construction)."""

    def __init__(self, graph: NetworkGraph, gas: GasConstants, bcs):
        self.graph = graph
        self.gas = gas
        self.bcs = {bc.node: bc for bc in bcs}
        E = len(graph.edges)
        for e in graph.edges:
            if e.hint != 1:
                raise GraphError(
                    f"edge {e.name!r}: flow must be declared along the edge orientation "
                    "(reverse the edge instead of using a negative hint)")
        self.flows = flow_sets(graph)
        self.meshes = [fp.build_mesh(e.params.L, e.n) for e in graph.edges]
        self.models = [fp.PipeModel.build(ms, e.params, gas, e.friction_in_energy, e.cooling)
                       for ms, e in zip(self.meshes, graph.edges)]
        self.area = np.array([e.params.A for e in graph.edges])
        self.entries = coupling_entries(graph)
        self.C = coupling_matrix(graph, self.entries)
        self.entry_index = {(ent.edge, ent.end): k for k, ent in enumerate(self.entries)}
        self._check_bcs()

        n = [e.n for e in graph.edges]
        nE = sum(n)
        rho, m, e_ = [], [], []
        off = 0
        for k in range(E):
            rho.append(np.arange(off, off + n[k]))
            off += n[k]
        for k in range(E):
            m.append(np.arange(off, off + n[k] + 1))
            off += n[k] + 1
        for k in range(E):
            e_.append(np.arange(off, off + n[k] + 1))
            off += n[k] + 1
        lam_m = off
        lam_e = lam_m + 2 * E
        u0 = lam_e + E
        lam_h = u0 + len(self.entries)
        fb = lam_h + len(graph.interior_nodes)
        self.promoted = [k for k, ed in enumerate(graph.edges)
                         if ed.tail in self.bcs and self.bcs[ed.tail].rho is not None]
        self.layout = Layout(n, rho, m, e_, lam_m, lam_e, u0, lam_h, fb,
                             len(self.entries), len(graph.interior_nodes), len(self.promoted))
        self.rho_offsets = np.cumsum([0] + n)
        self.nodal_offsets = np.cumsum([0] + [x + 1 for x in n])
        self.tail_src, self.head_src, self.e_src = [], [], []
        for k, ed in enumerate(graph.edges):
            if ed.tail in graph.interior_nodes:
                self.tail_src.append(("var", u0 + self.entry_index[(k, "tail")]))
                self.e_src.append(("mix", ed.tail))
            elif self.bcs[ed.tail].rho is not None:
                self.tail_src.append(("var", fb + self.promoted.index(k)))
                self.e_src.append(("bc", ed.tail))
            else:
                self.tail_src.append(("input", ed.tail))
                self.e_src.append(("bc", ed.tail))
            if ed.head in graph.interior_nodes:
                self.head_src.append(("var", u0 + self.entry_index[(k, "head")]))
            else:
                self.head_src.append(("input", ed.head))
        self._build_constants()

    # ------------------------------------------------------------------ setup
    def _check_bcs(self):
        g = self.graph
        for v in g.boundary_nodes:
            if v not in self.bcs:
                raise ConfigError(f"boundary node {v!r} has no boundary conditions", f"/boundary/{v}")
            bc = self.bcs[v]
            k = g.adjacent(v)[0]
            if g.edges[k].tail == v:
                if bc.e is None:
                    raise ConfigError(f"inflow node {v!r} needs an energy density condition", f"/boundary/{v}")
                if (bc.m is None) == (bc.rho is None):
                    raise ConfigError(f"inflow node {v!r} needs exactly one of mass flow or density",
                                      f"/boundary/{v}")
            else:
                if bc.m is None or bc.rho is not None or bc.e is not None:
                    raise ConfigError(f"outflow node {v!r} takes exactly one mass-flow condition",
                                      f"/boundary/{v}")
        for v in self.bcs:
            if v not in g.boundary_nodes:
                raise ConfigError(f"boundary conditions given for non-boundary node {v!r}", f"/boundary/{v}")

    def _build_constants(self):
        L = self.layout
        N = L.size
        Gr, Gc, Gv = [], [], []
        Ky = ([], [], [])
        Kd = ([], [], [])

        def add(K, r, c, v):
            K[0].append(np.atleast_1d(r))
            K[1].append(np.atleast_1d(c))
            K[2].append(np.broadcast_to(np.asarray(v, dtype=float), np.shape(np.atleast_1d(r))).copy())

        self.Me = []
        self.b_inf = np.zeros(N)
        for k, mdl in enumerate(self.models):
            A, n, h = mdl.A, L.n[k], mdl.h
            r, m, e = L.rho[k], L.m[k], L.e[k]
            # mass rows: A (h rhodot + m_{j+1} - m_j)
            add(Kd, r, r, A * h)
            add(Ky, r, m[1:], A)
            add(Ky, r, m[:-1], -A)
            # energy rows: A M_e edot
            Me = sp.csr_matrix(fp.p1_mass(n, h))
            self.Me.append(Me)
            coo = Me.tocoo()
            add(Kd, e[coo.row], e[coo.col], A * coo.data)
            self.b_inf[e] = A * mdl.kd * mdl.T_inf * np.asarray(Me.sum(axis=1)).ravel()
            # lambda_m rows: (-A m_n - f_BL, A m_0 - f_B0)
            add(Ky, L.lam_m + 2 * k, m[n], -A)
            add(Ky, L.lam_m + 2 * k + 1, m[0], A)
            for src, row in ((self.head_src[k], L.lam_m + 2 * k), (self.tail_src[k], L.lam_m + 2 * k + 1)):
                if src[0] == "var":
                    add(Ky, row, src[1], -1.0)
            # m rows: -A T_m lambda_m
            add(Ky, m[0], L.lam_m + 2 * k + 1, -A)
            add(Ky, m[n], L.lam_m + 2 * k, A)
            # eps coupling: + A J_rho_m^T eps
            ro = self.rho_offsets[k]
            j = np.arange(n)
            Gr += [m[j], m[j + 1]]
            Gc += [ro + j, ro + j]
            Gv += [np.full(n, A), np.full(n, -A)]
        # node balances C u_0
        for i, v in enumerate(self.graph.interior_nodes):
            for kk, ent in enumerate(self.entries):
                if ent.node == v:
                    add(Ky, L.lam_h + i, L.u0 + kk, 1.0)
            # coupling rows: -lambda_H
        for kk, ent in enumerate(self.entries):
            i = self.graph.interior_nodes.index(ent.node)
            add(Ky, L.u0 + kk, L.lam_h + i, -1.0)
        for idx, k in enumerate(self.promoted):
            add(Ky, L.fb + idx, L.rho[k][0], 1.0)

        def build(K):
            if not K[0]:
                return sp.csr_matrix((N, N))
            return sp.csr_matrix((np.concatenate(K[2]), (np.concatenate(K[0]), np.concatenate(K[1]))),
                                 shape=(N, N))

        self.K_y = build(Ky)
        self.K_dot = build(Kd)
        self.G = sp.csr_matrix((np.concatenate(Gv), (np.concatenate(Gr), np.concatenate(Gc))),
                               shape=(N, L.n_rho))
        self.M_rho = sp.diags(np.concatenate([np.full(n, mdl.h * mdl.A) for n, mdl in zip(L.n, self.models)]))
        self.M_m = sp.block_diag([mdl.A * sp.csr_matrix(fp.p1_mass(n, mdl.h))
                                  for n, mdl in zip(L.n, self.models)]).tocsr()
        self.M_e = self.M_m
        self.J_rho_m = sp.block_diag([sp.csr_matrix(fp.divergence(n)) for n in L.n]).tocsr()

    # -------------------------------------------------------------- accessors
    @property
    def size(self) -> int:
        return self.layout.size

    def split(self, y):
        L = self.layout
        return ([y[i] for i in L.rho], [y[i] for i in L.m], [y[i] for i in L.e])

    def pack_states(self, states, y=None):
        """Write per-pipe ``PipeState`` blocks into an unknown vector."""
        L = self.layout
        y = np.zeros(L.size) if y is None else y.copy()
        if len(states) != len(L.n):
            raise AssemblyError("one state per pipe required")
        for k, s in enumerate(states):
            if len(s.rho) != L.n[k]:
                raise AssemblyError(f"pipe {k}: state has {len(s.rho)} elements, mesh has {L.n[k]}")
            y[L.rho[k]], y[L.m[k]], y[L.e[k]] = s.rho, s.m, s.e
        return y

    def states(self, y):
        rho, m, e = self.split(y)
        return [fp.PipeState(r, mm, ee) for r, mm, ee in zip(rho, m, e)]

    def _input_flow(self, k, end, y, t):
        """Boundary flow f_B of pipe k at ``end`` and the unknown index it comes from (or None)."""
        src = self.tail_src[k] if end == "tail" else self.head_src[k]
        if src[0] == "var":
            return y[src[1]], src[1]
        bc = self.bcs[src[1]]
        A = self.models[k].A
        val = bc.m(t)
        return (A * val if end == "tail" else -A * val), None

    def check_domain(self, y):
        L = self.layout
        rho = y[L.rho_slice]
        e = y[L.e_slice]
        if np.any(~(rho > 0)) or np.any(~(e > 0)):
            raise DomainError("iterate left the validity domain (rho <= 0 or e <= 0)")
        if not np.all(np.isfinite(y)):
            raise DomainError("non-finite entries in the unknown vector")

    # -------------------------------------------------------- entropy coupling
    def node_energy(self, k, y, t):
        """Inflow energy e|_nu for pipe k and its gradient as ``(value, [(index, d), ...])``."""
        src = self.e_src[k]
        if src[0] == "bc":
            return float(self.bcs[src[1]].e(t)), []
        v = src[1]
        g = self.gas
        L = self.layout
        flows, ents, grads = [], [], []
        for q in self.flows.inflow[v]:
            ui = L.u0 + self.entry_index[(q, "head")]
            iq_r = L.rho[q][-1]
            iq_e = L.e[q][-1]
            rq, eq = y[iq_r], y[iq_e]
            flows.append(y[ui])
            ents.append(g.c_v * np.log(g.kappa * eq / rq**g.gamma))
            grads.append((ui, iq_r, iq_e, rq, eq))
        S = float(np.sum(flows))
        if S == 0.0:
            raise DegenerateNodeError(f"zero total inflow at node {v!r}")
        s_star = float(np.dot(flows, ents) / S)
        r0 = y[L.rho[k][0]]
        ev = (g.c_v / g.R) * r0**g.gamma * np.exp(s_star / g.c_v)
        de_ds = ev / g.c_v
        out = [(L.rho[k][0], g.gamma * ev / r0)]
        for (ui, ir, ie, rq, eq), Fq, sq in zip(grads, flows, ents):
            out.append((ui, de_ds * (sq - s_star) / S))
            w = Fq / S
            out.append((ie, de_ds * w * g.c_v / eq))
            out.append((ir, -de_ds * w * g.c_v * g.gamma / rq))
        return float(ev), out

    # --------------------------------------------------------------- residual
    def evaluate(self, y, ydot, t, shift=0.0, jac=True, weights=None, ones=None, nl_parts=False):
        """Residual pieces and Jacobian at ``(y, ydot, t)``.

        ``weights`` (list of per-pipe element weight arrays) activates the reduced
        quadrature on nonlinear terms; ``ones`` replaces the all-ones energy effort
        (used by projected models). With ``nl_parts`` the bulk nonlinear row
        contributions of the momentum and energy rows are returned separately.
        """
        self.check_domain(y)
        L = self.layout
        N = L.size
        F = np.zeros(N)
        F += self.K_y @ y + self.K_dot @ ydot - self.b_inf
        rows, cols, vals = [], [], []
        erows, ecols, evals = [], [], []
        eps = np.zeros(L.n_rho)
        nlF = np.zeros(N) if nl_parts else None
        nlJ = ([], [], []) if nl_parts else None
        kap = self.gas.kappa

        def put(r, c, v):
            rows.append(np.ravel(r))
            cols.append(np.ravel(c))
            vals.append(np.ravel(v))

        for k, mdl in enumerate(self.models):
            A, n, h = mdl.A, L.n[k], mdl.h
            ri, mi, ei = L.rho[k], L.m[k], L.e[k]
            rho, m, e = y[ri], y[mi], y[ei]
            rd, md = ydot[ri], ydot[mi]
            o = None if ones is None else ones[ei - L.n_rho - L.n_nodal]
            if weights is None or weights[k] is None:
                act = np.arange(n)
                w = np.ones(n)
            else:
                act = np.flatnonzero(weights[k])
                w = np.asarray(weights[k], dtype=float)[act]
            if act.size:
                m2, e2 = fp.pairs(m)[act], fp.pairs(e)[act]
                md2 = fp.pairs(md)[act]
                o2 = None if o is None else fp.pairs(o)[act]
                terms = fp.element_terms(mdl, rho[act], m2, e2, rd[act], md2, o2)
                tm = sum(terms[x] for x in fp.NL_M) * (A * w)[:, None]
                te = sum(terms[x] for x in fp.NL_E) * (A * w)[:, None]
                nodes = np.stack([act, act + 1], axis=1)
                np.add.at(F, mi[nodes], tm)
                np.add.at(F, ei[nodes], te)
                if nl_parts:
                    np.add.at(nlF, mi[nodes], tm)
                    np.add.at(nlF, ei[nodes], te)
                eps[self.rho_offsets[k] + act] = w * terms["kin"] / h
                if jac:
                    dm, dmd, de, df = fp.element_jacobian(mdl, rho[act], m2, e2, rd[act], md2, o2)
                    sc = (A * w)[:, None, None]
                    loc = np.stack([ri[act], mi[act], mi[act + 1], ei[act], ei[act + 1]], axis=1)
                    locd = loc[:, :3]
                    R = np.broadcast_to(mi[nodes][:, :, None], dm.shape)
                    C5 = np.broadcast_to(loc[:, None, :], dm.shape)
                    Re = np.broadcast_to(ei[nodes][:, :, None], de.shape)
                    Rd = np.broadcast_to(mi[nodes][:, :, None], dmd.shape)
                    C3 = np.broadcast_to(locd[:, None, :], dmd.shape)
                    parts = [(R, C5, sc * dm), (Rd, C3, shift * sc * dmd), (Re, C5, sc * de)]
                    for pr, pc, pv in parts:
                        put(pr, pc, pv)
                        if nl_parts:
                            nlJ[0].append(pr.ravel())
                            nlJ[1].append(pc.ravel())
                            nlJ[2].append(pv.ravel())
                    erows.append(np.repeat(self.rho_offsets[k] + act, 3))
                    ecols.append(locd.ravel())
                    evals.append((w[:, None] * df / h).ravel())

            # boundary terms of the dynamic rows
            lamL, lam0 = y[L.lam_m + 2 * k], y[L.lam_m + 2 * k + 1]
            lame = y[L.lam_e + k]
            F[ei[0]] -= A * e[0] * lame
            if jac:
                put(ei[0], ei[0], -A * lame)
                put(ei[0], L.lam_e + k, -A * e[0])
            fBL, iL = self._input_flow(k, "head", y, t)
            be = (1 + kap) * e[n] / rho[n - 1]
            F[ei[n]] -= be * fBL
            if jac:
                put(ei[n], ei[n], -(1 + kap) * fBL / rho[n - 1])
                put(ei[n], ri[n - 1], (1 + kap) * e[n] * fBL / rho[n - 1] ** 2)
                if iL is not None:
                    put(ei[n], iL, -be)
            fB0, _ = self._input_flow(k, "tail", y, t)
            # lambda_m rows (linear part in K_y); add boundary inputs
            if iL is None:
                F[L.lam_m + 2 * k] -= fBL
            if self.tail_src[k][0] != "var":
                F[L.lam_m + 2 * k + 1] -= fB0
            # lambda_e row: A e_0 o_0 - A e_nu
            o0 = 1.0 if o is None else o[0]
            ev, dev = self.node_energy(k, y, t)
            F[L.lam_e + k] += A * e[0] * o0 - A * ev
            if jac:
                put(L.lam_e + k, ei[0], A * o0)
                for idx, d in dev:
                    put(L.lam_e + k, idx, -A * d)

        # coupling rows: output - lambda_H (the -lambda_H part is in K_y)
        for kk, ent in enumerate(self.entries):
            k = ent.edge
            row = L.u0 + kk
            A = self.models[k].A
            if ent.end == "head":
                n = L.n[k]
                ie, ir = L.e[k][n], L.rho[k][n - 1]
                on = 1.0 if ones is None else ones[ie - L.n_rho - L.n_nodal]
                F[row] += y[L.lam_m + 2 * k] + (1 + kap) * y[ie] * on / y[ir]
                if jac:
                    put(row, L.lam_m + 2 * k, 1.0)
                    put(row, ie, (1 + kap) * on / y[ir])
                    put(row, ir, -(1 + kap) * y[ie] * on / y[ir] ** 2)
            else:
                f = y[row]
                if f == 0.0:
                    raise BoundaryDegeneracyError(
                        f"zero boundary flow of pipe {self.graph.edges[k].name!r} at node {ent.node!r}")
                lame = y[L.lam_e + k]
                ev, dev = self.node_energy(k, y, t)
                F[row] += y[L.lam_m + 2 * k + 1] + lame * A * ev / f
                if jac:
                    put(row, L.lam_m + 2 * k + 1, 1.0)
                    put(row, L.lam_e + k, A * ev / f)
                    put(row, row, -lame * A * ev / f**2)
                    for idx, d in dev:
                        put(row, idx, lame * A * d / f)
        for idx, k in enumerate(self.promoted):
            F[L.fb + idx] -= self.bcs[self.graph.edges[k].tail].rho(t)

        J = deps = None
        if jac:
            Jn = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(N, N)) if rows else sp.csr_matrix((N, N))
            J = (self.K_y + shift * self.K_dot + Jn).tocsr()
            if erows:
                deps = sp.csr_matrix((np.concatenate(evals), (np.concatenate(erows), np.concatenate(ecols))),
                                     shape=(L.n_rho, N))
            else:
                deps = sp.csr_matrix((L.n_rho, N))
        nl = {}
        if nl_parts:
            nl["F"] = nlF
            if jac and nlJ[0]:
                nl["J"] = sp.csr_matrix((np.concatenate(nlJ[2]), (np.concatenate(nlJ[0]), np.concatenate(nlJ[1]))),
                                        shape=(N, N))
            elif jac:
                nl["J"] = sp.csr_matrix((N, N))
        return Evaluation(F, J, eps, deps, nl)

    def residual(self, y, ydot, t, **kw):
        ev = self.evaluate(y, ydot, t, jac=False, **kw)
        return ev.F_base + self.G @ ev.eps

    def jacobian(self, y, ydot, t, shift=0.0, **kw):
        ev = self.evaluate(y, ydot, t, shift=shift, jac=True, **kw)
        return (ev.J_base + self.G @ ev.deps).tocsr()

    def residual_and_jacobian(self, y, ydot, t, shift):
        ev = self.evaluate(y, ydot, t, shift=shift, jac=True)
        return ev.F_base + self.G @ ev.eps, (ev.J_base + self.G @ ev.deps).tocsr()

    # -------------------------------------------------------------- energies
    def hamiltonian(self, y, weights=None) -> float:
        rho, m, e = self.split(y)
        H = 0.0
        for k, mdl in enumerate(self.models):
            w = None if weights is None else weights[k]
            H += mdl.A * (fp.kinetic_energy(mdl, rho[k], m[k], w) + fp.internal_energy(mdl.h, e[k]))
        return float(H)

    def total_mass(self, y) -> float:
        return float(np.sum(self.M_rho @ y[self.layout.rho_slice]))

    def boundary_flow_sum(self, y, t) -> float:
        """Sum of the signed boundary flows f_B over all boundary pipe ends."""
        s = 0.0
        for k, ed in enumerate(self.graph.edges):
            if ed.tail in self.graph.boundary_nodes:
                s += self._input_flow(k, "tail", y, t)[0]
            if ed.head in self.graph.boundary_nodes:
                s += self._input_flow(k, "head", y, t)[0]
        return float(s)

    def boundary_power(self, y, t) -> float:
        """Boundary power sum f_B e_B over boundary pipe ends plus the ambient-temperature port."""
        g = self.gas
        L = self.layout
        P = 0.0
        for k, ed in enumerate(self.graph.edges):
            if ed.tail in self.graph.boundary_nodes:
                f = self._input_flow(k, "tail", y, t)[0]
                eB = total_specific_enthalpy(y[L.rho[k][0]], y[L.m[k][0]], y[L.e[k][0]], g)
                P += f * eB
            if ed.head in self.graph.boundary_nodes:
                f = self._input_flow(k, "head", y, t)[0]
                eB = total_specific_enthalpy(y[L.rho[k][-1]], y[L.m[k][-1]], y[L.e[k][-1]], g)
                P += f * eB
        P += float(np.sum(self.b_inf[L.e_slice]))
        return P

    # -------------------------------------------------------- pH structure
    def ph_operators(self, y, t, weights=None):
        """Dense ``E``, skew ``J``, ``R``, effort ``e~`` and input vector ``B u`` at ``y``.

        Density boundary rows are not part of the port-Hamiltonian form; their
        indices are returned in ``"closure_rows"`` and left zero.
        """
        L = self.layout
        N = L.size
        kap = self.gas.kappa
        E = np.zeros((N, N))
        J = np.zeros((N, N))
        R = np.zeros((N, N))
        eff = np.zeros(N)
        Bu = np.zeros(N)
        for k, mdl in enumerate(self.models):
            A, n, h = mdl.A, L.n[k], mdl.h
            ri, mi, ei = L.rho[k], L.m[k], L.e[k]
            rho, m, e = y[ri], y[mi], y[ei]
            w = None if weights is None else weights[k]
            Mmr, Mmm, Jme, Jt, Rmm, Ree, f = fp.state_matrices(mdl, rho, m, e, w)
            Me = fp.p1_mass(n, h)
            Jrm = fp.divergence(n)
            E[np.ix_(ri, ri)] = A * h * np.eye(n)
            E[np.ix_(mi, ri)] = A * Mmr
            E[np.ix_(mi, mi)] = A * Mmm
            E[np.ix_(ei, ei)] = A * Me
            J[np.ix_(ri, mi)] = A * Jrm
            J[np.ix_(mi, ri)] = -A * Jrm.T
            J[np.ix_(mi, ei)] = A * (Jme + Jt)
            J[np.ix_(ei, mi)] = -A * (Jme + Jt).T
            R[np.ix_(mi, mi)] = A * Rmm
            R[np.ix_(ei, ei)] = A * Ree
            lL, l0, le = L.lam_m + 2 * k, L.lam_m + 2 * k + 1, L.lam_e + k
            J[mi[0], l0] = A
            J[l0, mi[0]] = -A
            J[mi[n], lL] = -A
            J[lL, mi[n]] = A
            J[ei[0], le] = A * e[0]
            J[le, ei[0]] = -A * e[0]
            eff[ri] = f / h
            eff[mi] = m
            eff[ei] = 1.0
            eff[[lL, l0, le]] = y[[lL, l0, le]]
            Bu[ei] += self.b_inf[ei]
            be = (1 + kap) * e[n] / rho[n - 1]
            fBL, iL = self._input_flow(k, "head", y, t)
            fB0, i0 = self._input_flow(k, "tail", y, t)
            ev, _ = self.node_energy(k, y, t)
            if iL is None or iL >= L.fb:
                Bu[lL] += fBL
                Bu[ei[n]] += be * fBL
            if self.tail_src[k][0] != "var" or self.tail_src[k][1] >= L.fb:
                Bu[l0] += fB0
                Bu[le] += A * ev
        for kk, ent in enumerate(self.entries):
            k = ent.edge
            col = L.u0 + kk
            A = self.models[k].A
            if ent.end == "head":
                n = L.n[k]
                be = (1 + kap) * y[L.e[k][n]] / y[L.rho[k][n - 1]]
                B0 = {L.lam_m + 2 * k: 1.0, L.e[k][n]: be}
            else:
                ev, _ = self.node_energy(k, y, t)
                B0 = {L.lam_m + 2 * k + 1: 1.0, L.lam_e + k: A * ev / y[col]}
            for r_, v in B0.items():
                J[r_, col] += v
                J[col, r_] -= v
            i = self.graph.interior_nodes.index(ent.node)
            J[col, L.lam_h + i] += 1.0
            J[L.lam_h + i, col] -= 1.0
        eff[L.u0:L.lam_h] = y[L.u0:L.lam_h]
        eff[L.lam_h:L.fb] = y[L.lam_h:L.fb]
        closure = list(range(L.fb, L.size))
        return {"E": E, "J": J, "R": R, "effort": eff, "Bu": Bu, "closure_rows": closure}

    def ph_defect(self, y, weights=None, eps=None, ones=None):
        """``(E^T e~, grad H)`` restricted to the state coordinates.

        ``eps`` and ``ones`` override the efforts of the density and energy
        fields (projected models use projected efforts).
        """
        L = self.layout
        lhs = np.zeros(L.n_state)
        grad = np.zeros(L.n_state)
        for k, mdl in enumerate(self.models):
            A, n, h = mdl.A, L.n[k], mdl.h
            ri, mi, ei = L.rho[k], L.m[k], L.e[k]
            rho, m, e = y[ri], y[mi], y[ei]
            w = None if weights is None else weights[k]
            Mmr, Mmm, *_rest, f = fp.state_matrices(mdl, rho, m, e, w)
            ek = f / h if eps is None else eps[self.rho_offsets[k]:self.rho_offsets[k + 1]]
            ok = np.ones(n + 1) if ones is None else ones[ei - L.n_rho - L.n_nodal]
            Me = fp.p1_mass(n, h)
            lhs[ri] = A * (h * ek + Mmr.T @ m)
            lhs[mi] = A * (Mmm @ m)
            lhs[ei] = A * (Me @ ok)
            g_rho, g_m = fp.kinetic_gradient(mdl, rho, m, w)
            grad[ri] = A * g_rho
            grad[mi] = A * g_m
            grad[ei] = A * Me.sum(axis=1)
        return lhs, grad


def assemble_network(graph: NetworkGraph, gas: GasConstants, bcs) -> NetworkSystem:
    return NetworkSystem(graph, gas, bcs)


def network_hamiltonian(sys: NetworkSystem, y) -> float:
    return sys.hamiltonian(y)


def network_total_mass(sys: NetworkSystem, y) -> float:
    return sys.total_mass(y)
