"""Port-Hamiltonian finite-element simulation and structure-preserving reduction of gas pipe networks."""
import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "GasConstants": "gas", "PipeParams": "gas",
    "Edge": "network", "NetworkGraph": "network", "make_graph": "network",
    "BoundaryCondition": "fem_network", "NetworkSystem": "fem_network", "assemble_network": "fem_network",
    "SolverConfig": "dae", "SnapshotSet": "dae", "simulate": "dae", "consistent_init": "dae",
    "ReductionBasis": "mor", "ReducedSystem": "mor", "build_basis": "mor",
    "QuadratureRule": "hyperreduction", "learn_weights": "hyperreduction",
    "assemble_complexity_reduced": "hyperreduction",
    "load_scenario": "scenario", "load_preset": "scenario",
}
__all__ = sorted(_EXPORTS)


def __getattr__(name):
    # Lazy so that the command-line entry point can cap BLAS threads before numpy loads.
    mod = _EXPORTS.get(name)
    if mod is None:
        raise AttributeError(f"module 'phgasnet' has no attribute {name!r}")
    return getattr(importlib.import_module(f".{mod}", __name__), name)
