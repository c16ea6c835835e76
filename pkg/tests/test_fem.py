import numpy as np
import pytest

from conftest import diamond, diamond_states, single_pipe, uniform_states
from phgasnet import fem_pipe as fp
from phgasnet.dae import consistent_init, initial_guess
from phgasnet.errors import BoundaryDegeneracyError, ConfigError, DomainError, GraphError
from phgasnet.fem_network import BoundaryCondition, NetworkSystem
from phgasnet.gas import GasConstants, PipeParams
from phgasnet.network import Edge, make_graph
from phgasnet.signals import Constant

G = GasConstants()


def test_mesh():
    assert fp.build_mesh(1.0, 100).dx == pytest.approx(0.01)
    assert np.allclose(fp.build_mesh(1.0, 2).x, [0.0, 0.5, 1.0])
    assert fp.build_mesh(0.55, 55).dx == pytest.approx(0.01)
    with pytest.raises(ConfigError):
        fp.build_mesh(1.0, 1)


def _uniform(n, rho=3.0, m=0.3, e=9.0):
    return fp.PipeState(np.full(n, rho), np.full(n + 1, m), np.full(n + 1, e))


def test_frictionless_pipe_has_no_friction_block():
    mesh = fp.build_mesh(1.0, 10)
    ops = fp.assemble_state(mesh, PipeParams(lambda_f=0.0), G, _uniform(10), 9.0, 0.3)
    assert np.count_nonzero(ops.Jt_me) == 0
    ops4 = fp.assemble_state(mesh, PipeParams(), G, _uniform(10), 9.0, 0.3)
    assert np.count_nonzero(ops4.Jt_me) > 0


def test_assemble_state_errors():
    mesh = fp.build_mesh(1.0, 4)
    bad = fp.PipeState(np.array([3.0, -1.0, 3.0, 3.0]), np.full(5, 0.3), np.full(5, 9.0))
    with pytest.raises(DomainError):
        fp.assemble_state(mesh, PipeParams(), G, bad, 9.0, 0.3)
    with pytest.raises(BoundaryDegeneracyError):
        fp.assemble_state(mesh, PipeParams(), G, _uniform(4), 9.0, 0.0)


def test_boundary_port():
    mesh_state = _uniform(10)
    (f0, fL), (e0, eL) = fp.boundary_port(mesh_state, PipeParams(), G)
    assert (f0, fL) == pytest.approx((0.3, -0.3))
    assert (e0, eL) == pytest.approx((4.205, 4.205))
    (f0, fL), _ = fp.boundary_port(_uniform(10, m=0.0), PipeParams(), G)
    assert (f0, fL) == (0.0, 0.0)


def test_pipe_hamiltonian_and_mass():
    mesh = fp.build_mesh(1.0, 10)
    z = _uniform(10)
    assert fp.hamiltonian(z, mesh, PipeParams(), G) == pytest.approx(9.015)
    assert fp.hamiltonian(_uniform(10, m=0.0), mesh, PipeParams(), G) == pytest.approx(
        np.ones(11) @ fp.p1_mass(10, 0.1) @ np.full(11, 9.0))
    kin1 = fp.hamiltonian(z, mesh, PipeParams(), G) - 9.0
    kin2 = fp.hamiltonian(_uniform(10, m=0.6), mesh, PipeParams(), G) - 9.0
    assert kin2 == pytest.approx(4 * kin1)
    assert fp.total_mass(z, mesh, PipeParams()) == pytest.approx(3.0)
    assert fp.total_mass(fp.PipeState(np.array([2.0, 4.0]), np.zeros(3), np.ones(3)),
                         fp.build_mesh(1.0, 2), PipeParams()) == pytest.approx(3.0)
    z2 = _uniform(10, rho=6.0)
    assert fp.total_mass(z2, mesh, PipeParams()) == pytest.approx(2 * fp.total_mass(z, mesh, PipeParams()))


def test_divergence_kernel():
    D = fp.divergence(7)
    assert np.array_equal(D @ np.ones(8), np.zeros(7))
    assert np.linalg.matrix_rank(D) == 7


def test_dimensions():
    assert single_pipe(100).layout.size == 305
    d = diamond()
    assert d.layout.n_elem == 310
    assert d.layout.size == 975


def test_disconnected_network_rejected():
    P = PipeParams()
    with pytest.raises(GraphError):
        make_graph(["a", "b", "c", "d"], [Edge("p", "a", "b", P, 4), Edge("q", "c", "d", P, 4)])


def test_missing_boundary_condition_rejected():
    g = make_graph(["a", "b"], [Edge("p", "a", "b", PipeParams(), 4)])
    with pytest.raises(ConfigError) as ei:
        NetworkSystem(g, G, [BoundaryCondition("a", m=Constant(0.3), e=Constant(9.0))])
    assert ei.value.pointer == "/boundary/b"
    with pytest.raises(ConfigError):
        NetworkSystem(g, G, [BoundaryCondition("a", m=Constant(0.3)), BoundaryCondition("b", m=Constant(0.3))])


def test_stationary_state_has_zero_residual():
    sys = single_pipe(20, PipeParams(lambda_f=0.0, k_omega=0.0))
    y = initial_guess(sys, uniform_states(sys))
    L = sys.layout
    assert y[L.lam_m:L.lam_m + 2] == pytest.approx([0.005, 0.005])
    assert y[L.lam_e] == pytest.approx(0.3 * 1.4 / 3.0)
    F = sys.residual(y, np.zeros_like(y), 0.0)
    assert np.abs(F).max() < 1e-12


def test_consistent_init_multipliers():
    sys = single_pipe(20)
    y = consistent_init(sys, uniform_states(sys))
    L = sys.layout
    assert y[L.lam_m:L.lam_m + 2] == pytest.approx([0.005, 0.005], rel=1e-10)
    assert y[L.lam_e] == pytest.approx(0.14, rel=1e-10)
    y0 = initial_guess(sys, uniform_states(sys, m=0.0))
    assert np.array_equal(y0[L.lam_m:L.lam_m + 2], [0.0, 0.0])


def test_inconsistent_initial_data_rejected():
    from phgasnet.errors import InconsistentInitialDataError
    sys = single_pipe(20)
    with pytest.raises(InconsistentInitialDataError):
        consistent_init(sys, uniform_states(sys, m=0.1))


def test_equal_enthalpy_node_multiplier():
    sys = diamond(5)
    y = initial_guess(sys, uniform_states(sys))
    L = sys.layout
    assert y[L.lam_h:L.lam_h + 4] == pytest.approx([4.205] * 4)


def test_diamond_total_mass():
    sys = diamond()
    y = sys.pack_states(diamond_states(sys))
    assert sys.total_mass(y) == pytest.approx(9.3)


def _perturbed(sys, seed=0, scale=0.02):
    rng = np.random.default_rng(seed)
    y = consistent_init(sys, uniform_states(sys) if len(sys.layout.n) == 1 else diamond_states(sys))
    L = sys.layout
    y[:L.n_state] *= 1 + scale * rng.standard_normal(L.n_state)
    ydot = 0.1 * rng.standard_normal(L.size)
    return y, ydot


@pytest.mark.parametrize("builder", [lambda: single_pipe(8), lambda: diamond(10)], ids=["pipe", "diamond"])
def test_jacobian_matches_central_differences(builder):
    sys = builder()
    y, ydot = _perturbed(sys)
    shift = 10.0
    J = sys.jacobian(y, ydot, 0.3, shift=shift).toarray()
    h = 1e-6
    Jfd = np.zeros_like(J)
    for i in range(len(y)):
        d = np.zeros_like(y)
        d[i] = h
        Fp = sys.residual(y + d, ydot + shift * d, 0.3)
        Fm = sys.residual(y - d, ydot - shift * d, 0.3)
        Jfd[:, i] = (Fp - Fm) / (2 * h)
    assert np.linalg.norm(J - Jfd) / np.linalg.norm(J) < 1e-6


@pytest.mark.parametrize("builder", [lambda: single_pipe(8), lambda: diamond(10)], ids=["pipe", "diamond"])
def test_operator_structure(builder):
    sys = builder()
    y, _ = _perturbed(sys, seed=1)
    ops = sys.ph_operators(y, 0.2)
    J, R = ops["J"], ops["R"]
    assert np.abs(J + J.T).max() <= 1e-12
    assert np.linalg.eigvalsh(0.5 * (R + R.T)).min() >= -1e-12
    lhs, grad = sys.ph_defect(y)
    assert np.linalg.norm(lhs - grad) <= 1e-12


def test_residual_matches_ph_form():
    sys = single_pipe(8)
    y, ydot = _perturbed(sys, seed=2)
    t = 0.4
    ops = sys.ph_operators(y, t)
    F = sys.residual(y, ydot, t)
    rows = [i for i in range(sys.layout.size) if i not in ops["closure_rows"]]
    F_ph = ops["E"] @ ydot - (ops["J"] - ops["R"]) @ ops["effort"] - ops["Bu"]
    assert np.abs(F[rows] - F_ph[rows]).max() < 1e-12
