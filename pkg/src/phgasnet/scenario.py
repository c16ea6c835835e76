"""JSON scenario files: gas data, graph, initial/boundary data, solver settings."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dae import SolverConfig
from .errors import ConfigError, GraphError
from .fem_network import BoundaryCondition, NetworkSystem
from .fem_pipe import PipeState
from .gas import GasConstants, PipeParams
from .network import Edge, NetworkGraph, make_graph
from .signals import signal_from

PRESETS = ("single_pipe_5_1", "parity_rho_n100", "parity_rho_n99", "diamond_5_2", "mixed_5_2_2")
_PIPE_KEYS = {"L", "d", "lambda_f", "k_omega", "T_inf", "A"}


@dataclass
class ScenarioConfig:
    name: str
    gas: GasConstants
    graph: NetworkGraph
    initial: list  # per-edge dicts with rho, m, e (scalars or arrays)
    boundary: dict  # node -> {"rho"|"m"|"e": signal}
    solver: SolverConfig
    reduction: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def build_system(self) -> NetworkSystem:
        bcs = [BoundaryCondition(v, **sig) for v, sig in self.boundary.items()]
        return NetworkSystem(self.graph, self.gas, bcs)

    def initial_states(self) -> list:
        out = []
        for k, ed in enumerate(self.graph.edges):
            ic = self.initial[k]
            rho = _profile(ic["rho"], ed.n, f"/initial/{ed.name}/rho")
            m = _profile(ic["m"], ed.n + 1, f"/initial/{ed.name}/m")
            e = _profile(ic["e"], ed.n + 1, f"/initial/{ed.name}/e")
            st = PipeState(rho, m, e)
            st.validate()
            out.append(st)
        return out


def _profile(v, size, pointer):
    if isinstance(v, (int, float)):
        return np.full(size, float(v))
    arr = np.asarray(v, dtype=float)
    if arr.shape != (size,):
        raise ConfigError(f"profile must be a number or a list of length {size}", pointer)
    return arr


def _req(d, key, pointer, kind=None):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"missing required field {key!r}", pointer)
    v = d[key]
    if kind is not None and not isinstance(v, kind):
        raise ConfigError(f"field {key!r} has the wrong type", f"{pointer}/{key}")
    return v


def parse_scenario(raw: dict, name: str = "scenario") -> ScenarioConfig:
    """Validate a scenario dictionary; every error carries a JSON pointer."""
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a JSON object", "")
    raw = copy.deepcopy(raw)
    gas = GasConstants.from_dict(raw.get("gas", {}))

    nodes = _req(raw, "nodes", "", list)
    if not nodes:
        raise ConfigError("node list is empty", "/nodes")
    if len(set(nodes)) != len(nodes):
        raise ConfigError("duplicate node names", "/nodes")
    edges_raw = _req(raw, "edges", "", list)
    if not edges_raw:
        raise ConfigError("edge list is empty", "/edges")
    edges = []
    for i, e in enumerate(edges_raw):
        p = f"/edges/{i}"
        tail, head = _req(e, "tail", p, str), _req(e, "head", p, str)
        for key, v in (("tail", tail), ("head", head)):
            if v not in nodes:
                raise ConfigError(f"unknown node {v!r}", f"{p}/{key}")
        params = e.get("params", {})
        bad = set(params) - _PIPE_KEYS
        if bad:
            raise ConfigError(f"unknown pipe parameters {sorted(bad)}", f"{p}/params")
        try:
            pp = PipeParams(**{k: float(v) for k, v in params.items()})
        except ConfigError as exc:
            raise ConfigError(str(exc), f"{p}/params") from None
        n = e.get("n")
        if n is None:
            n = int(round(pp.L / float(_req(e, "dx", p))))
        if not isinstance(n, int) or n < 2:
            raise ConfigError("element count n must be an integer >= 2", f"{p}/n")
        edges.append(Edge(e.get("name", f"w{i + 1}"), tail, head, pp, n, int(e.get("hint", 1)),
                          bool(e.get("friction_in_energy", True)), bool(e.get("cooling", True))))
    try:
        graph = make_graph(nodes, edges)
    except GraphError as exc:
        raise ConfigError(str(exc), "/edges") from None

    init_raw = _req(raw, "initial", "", dict)
    default = init_raw.get("default", {})
    per_edge = init_raw.get("edges", {})
    initial = []
    for ed in edges:
        ic = dict(default)
        ic.update(per_edge.get(ed.name, {}))
        for key in ("rho", "m", "e"):
            if key not in ic:
                raise ConfigError(f"no initial {key} for edge {ed.name!r}", f"/initial/edges/{ed.name}")
        initial.append(ic)

    bnd_raw = _req(raw, "boundary", "", dict)
    boundary = {}
    for v, spec in bnd_raw.items():
        p = f"/boundary/{v}"
        if v not in nodes:
            raise ConfigError(f"unknown node {v!r}", p)
        if v not in graph.boundary_nodes:
            raise ConfigError(f"node {v!r} is an interior node and takes no boundary data", p)
        boundary[v] = {k: signal_from(s, f"{p}/{k}") for k, s in spec.items()
                       if k in ("rho", "m", "e")}
        extra = set(spec) - {"rho", "m", "e"}
        if extra:
            raise ConfigError(f"unknown boundary fields {sorted(extra)}", p)
    for v in graph.boundary_nodes:
        if v not in boundary:
            raise ConfigError(f"boundary node {v!r} has no boundary data", "/boundary")

    sol = raw.get("solver", {})
    try:
        solver = SolverConfig(**sol)
    except TypeError as exc:
        raise ConfigError(f"invalid solver settings: {exc}", "/solver") from None
    solver.n_steps  # validates t_f / tau

    cfg = ScenarioConfig(raw.get("name", name), gas, graph, initial, boundary, solver,
                         raw.get("reduction", {}), raw)
    try:
        cfg.build_system()
    except ConfigError as exc:
        if exc.pointer:
            raise
        raise ConfigError(str(exc), "/boundary") from None
    except GraphError as exc:
        raise ConfigError(str(exc), "/edges") from None
    return cfg


def load_scenario(path) -> ScenarioConfig:
    """Read a scenario from a JSON file or a bundled preset name."""
    p = Path(str(path))
    if not p.exists() and str(path) in PRESETS:
        return load_preset(str(path))
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"scenario file {str(path)!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return parse_scenario(raw, p.stem)


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files("phgasnet").joinpath("presets", f"{name}.json").read_text()
    return json.loads(text)


def load_preset(name: str) -> ScenarioConfig:
    return parse_scenario(preset_dict(name), name)
