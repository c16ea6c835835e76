"""Command-line interface.

Pipeline::

    phgasnet simulate single_pipe_5_1          -> fom-<id>
    phgasnet pod fom-<id> --mode A_E --r 12    -> basis-<id>
    phgasnet eq-train basis-<id> --mode A_omega --nc-per-pipe 30   -> rule-<id>
    phgasnet reduce basis-<id> [--rule rule-<id> | --deim 20]       -> rom-<id>
    phgasnet run-rom rom-<id>                  -> romrun-<id>
    phgasnet compare fom-<id> romrun-<id>
    phgasnet validate <any id>

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 numerical failure.
numpy is imported only after ``--threads`` has been applied.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import traceback

log = logging.getLogger("phgasnet")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "BLIS_NUM_THREADS", "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------ helpers
def _store(args):
    from .store import Store
    return Store(args.store)


def _scenario_from_meta(meta):
    from .scenario import parse_scenario
    return parse_scenario(meta["scenario"], meta.get("scenario_name", "scenario"))


def _load(store, run_id, kind=None):
    from .errors import ConfigError
    arrays, meta = store.load(run_id)
    if kind is not None:
        kinds = (kind,) if isinstance(kind, str) else kind
        if meta.get("kind") not in kinds:
            raise ConfigError(f"artifact {run_id!r} is a {meta.get('kind')!r}, expected {' or '.join(kinds)}")
    return arrays, meta


def require_same_mesh(meta_a: dict, meta_b: dict) -> None:
    """Refuse to combine artifacts produced from different configurations or meshes."""
    from .errors import ConfigError
    if meta_a.get("mesh") != meta_b.get("mesh"):
        raise ConfigError(f"mesh mismatch between {meta_a.get('run_id')} ({meta_a.get('mesh')}) "
                          f"and {meta_b.get('run_id')} ({meta_b.get('mesh')})")
    if meta_a.get("config_hash") != meta_b.get("config_hash"):
        raise ConfigError(f"config hash mismatch between {meta_a.get('run_id')} and {meta_b.get('run_id')}")


def _lineage(meta: dict) -> dict:
    return {k: meta[k] for k in ("config_hash", "mesh", "scenario", "scenario_name", "solver") if k in meta}


def _parse_int_list(text):
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _emit(**kv):
    for k, v in kv.items():
        print(f"{k}: {v}")


def _rebuild_rom(store, rom_meta):
    """Reconstruct the reduced model described by a ``rom`` artifact."""
    from .hyperreduction import assemble_complexity_reduced, build_deim_rom
    from .mor import ReducedSystem
    from .store import basis_from, rule_from, snapshots_from
    b_arr, b_meta = _load(store, rom_meta["basis_id"], "basis")
    cfg = _scenario_from_meta(b_meta)
    sysm = cfg.build_system()
    rom = ReducedSystem(sysm, basis_from(b_arr, b_meta))
    if rom_meta.get("rule_id"):
        r_arr, r_meta = _load(store, rom_meta["rule_id"], "rule")
        rom = assemble_complexity_reduced(rom, rule_from(r_arr, r_meta))
    if rom_meta.get("deim"):
        f_arr, f_meta = _load(store, b_meta["training_id"], "fom")
        snap = snapshots_from(f_arr, sysm.layout)
        rom = build_deim_rom(rom, snap, int(rom_meta["deim"]), int(rom_meta.get("deim_stride", 1)))
    return cfg, sysm, rom


# ------------------------------------------------------------ subcommands
def cmd_simulate(args):
    from .dae import consistent_init, simulate
    from .diagnostics import run_report, write_report_csv
    from .scenario import load_scenario, parse_scenario
    from .store import make_run_id, snapshot_arrays

    cfg = load_scenario(args.scenario)
    raw = dict(cfg.raw)
    if args.t_f is not None or args.tau is not None:
        sol = dict(raw.get("solver", {}))
        if args.t_f is not None:
            sol["t_f"] = args.t_f
        if args.tau is not None:
            sol["tau"] = args.tau
        raw["solver"] = sol
        cfg = parse_scenario(raw, cfg.name)
    sysm = cfg.build_system()
    log.info("scenario %s: %d pipes, dimension %d", cfg.name, len(sysm.layout.n), sysm.layout.size)
    y0 = consistent_init(sysm, cfg.initial_states())
    t0 = time.perf_counter()
    snap = simulate(sysm, y0, cfg.solver)
    wall = time.perf_counter() - t0

    store = _store(args)
    run_id = args.run_id or make_run_id("fom", cfg.config_hash)
    meta = {"kind": "fom", "config_hash": cfg.config_hash, "scenario": cfg.raw,
            "scenario_name": cfg.name, "solver": cfg.solver.to_dict(), "mesh": list(sysm.layout.n),
            "dimension": sysm.layout.size}
    d = store.save(run_id, snapshot_arrays(snap), meta)
    report = run_report(sysm, snap, wall, ph_stride=args.ph_stride)
    write_report_csv(report, d / "report.csv")
    if args.figures:
        from .plotting import run_figures
        run_figures(report, snap, d / "figures", "fom")
    _emit(run_id=run_id, dimension=sysm.layout.size, snapshots=snap.n_cols,
          wall_time=f"{wall:.3f}", report=d / "report.csv")
    return EXIT_OK


def cmd_pod(args):
    from .mor import build_basis
    from .store import basis_arrays, make_run_id, snapshots_from

    store = _store(args)
    f_arr, f_meta = _load(store, args.run, "fom")
    cfg = _scenario_from_meta(f_meta)
    sysm = cfg.build_system()
    snap = snapshots_from(f_arr, sysm.layout)
    if (args.r is None) == (args.r_per_pipe is None):
        raise UsageError("pod: give exactly one of --r or --r-per-pipe")
    r = args.r if args.r is not None else _parse_int_list(args.r_per_pipe)
    mode = args.mode or ("A_E" if args.r is not None else "A_omega")
    basis = build_basis(snap, sysm, mode, r, not args.no_energy_augmentation, not args.naive)
    run_id = args.run_id or make_run_id("basis", f_meta["run_id"], mode, r,
                                        not args.no_energy_augmentation, not args.naive)
    meta = {"kind": "basis", **_lineage(f_meta), "training_id": f_meta["run_id"], "mode": mode,
            "r_spec": r, "compatible": not args.naive, "basis_meta": basis.meta,
            "widths": list(basis.widths)}
    store.save(run_id, basis_arrays(basis), meta)
    _emit(run_id=run_id, mode=mode, widths=list(basis.widths))
    return EXIT_OK


def cmd_eq_train(args):
    from .hyperreduction import learn_weights
    from .mor import ReducedSystem
    from .store import basis_from, make_run_id, rule_arrays, snapshots_from

    store = _store(args)
    b_arr, b_meta = _load(store, args.basis, "basis")
    f_arr, f_meta = _load(store, b_meta["training_id"], "fom")
    require_same_mesh(b_meta, f_meta)
    sysm = _scenario_from_meta(b_meta).build_system()
    rom = ReducedSystem(sysm, basis_from(b_arr, b_meta))
    snap = snapshots_from(f_arr, sysm.layout)
    if (args.nc is None) == (args.nc_per_pipe is None):
        raise UsageError("eq-train: give exactly one of --nc or --nc-per-pipe")
    nc = args.nc if args.nc is not None else _parse_int_list(args.nc_per_pipe)
    mode = args.mode or ("A_E" if args.nc is not None else "A_omega")
    rule = learn_weights(rom, snap, nc, mode, args.delta, args.stride)
    run_id = args.run_id or make_run_id("rule", b_meta["run_id"], mode, nc, args.delta, args.stride)
    meta = {"kind": "rule", **_lineage(b_meta), "basis_id": b_meta["run_id"], "mode": mode,
            "budget": nc, "n_elements": list(rule.n_elements), "rule_meta": rule.meta}
    store.save(run_id, rule_arrays(rule), meta)
    _emit(run_id=run_id, n_c=rule.n_c, total=rule.total,
          relative_residual=f"{rule.meta['relative_residual']:.3e}")
    return EXIT_OK


def cmd_reduce(args):
    import numpy as np

    from .dae import consistent_init
    from .diagnostics import structure_report
    from .store import make_run_id

    store = _store(args)
    _, b_meta = _load(store, args.basis, "basis")
    if args.rule and args.deim:
        raise UsageError("reduce: --rule and --deim are mutually exclusive")
    if args.rule:
        _, r_meta = _load(store, args.rule, "rule")
        require_same_mesh(b_meta, r_meta)
        if r_meta.get("basis_id") != b_meta["run_id"]:
            log.warning("rule %s was trained on basis %s, not %s", args.rule, r_meta.get("basis_id"),
                        b_meta["run_id"])
    rom_meta = {"basis_id": b_meta["run_id"], "rule_id": args.rule, "deim": args.deim,
                "deim_stride": args.stride}
    cfg, sysm, rom = _rebuild_rom(store, rom_meta)
    y0 = consistent_init(sysm, cfg.initial_states())
    yr0 = rom.initial_state(y0)
    rep = structure_report(rom, yr0[:, None])
    rep = {k: (v if not isinstance(v, dict) else {kk: float(vv) for kk, vv in v.items()})
           for k, v in rep.items()}
    run_id = args.run_id or make_run_id("rom", rom_meta)
    meta = {"kind": "rom", **_lineage(b_meta), **rom_meta, "reduced_size": int(rom.size),
            "structure": rep}
    store.save(run_id, {"y0": np.asarray(yr0)}, meta)
    _emit(run_id=run_id, reduced_size=rom.size, skew=f"{rep['skew']:.2e}",
          R_min_eig=f"{rep['R_min_eig']:.2e}")
    return EXIT_OK


def cmd_run_rom(args):
    from .dae import simulate
    from .diagnostics import run_report, write_report_csv
    from .store import make_run_id, snapshot_arrays, snapshots_from

    store = _store(args)
    r_arr, r_meta = _load(store, args.rom, "rom")
    cfg, sysm, rom = _rebuild_rom(store, r_meta)
    b_meta = store.meta(r_meta["basis_id"])
    t0 = time.perf_counter()
    snap = simulate(rom, r_arr["y0"], cfg.solver)
    wall = time.perf_counter() - t0
    fom = None
    f_id = b_meta.get("training_id")
    if f_id and store.exists(f_id):
        f_arr, f_meta = _load(store, f_id, "fom")
        require_same_mesh(r_meta, f_meta)
        cand = snapshots_from(f_arr, sysm.layout)
        if cand.Y.shape[1] == snap.n_cols:
            fom = cand
    report = run_report(rom, snap, wall, fom=fom, ph_stride=args.ph_stride)
    lifted = rom.lift_snapshots(snap)
    run_id = args.run_id or make_run_id("romrun", r_meta["run_id"])
    meta = {"kind": "romrun", **_lineage(r_meta), "rom_id": r_meta["run_id"],
            "basis_id": r_meta["basis_id"], "training_id": f_id}
    arrays = snapshot_arrays(lifted)
    arrays["Y_reduced"] = snap.Y
    d = store.save(run_id, arrays, meta)
    write_report_csv(report, d / "report.csv")
    if args.figures:
        from .plotting import run_figures
        run_figures(report, lifted, d / "figures", "rom")
    fmt = lambda v: "n/a" if v is None else f"{v:.3e}"  # noqa: E731
    _emit(run_id=run_id, E_t=fmt(report.E_t), E_tP=fmt(report.E_tP), wall_time=f"{wall:.3f}",
          report=d / "report.csv")
    return EXIT_OK


def cmd_compare(args):
    from .diagnostics import mor_error, relative_errors
    from .store import snapshots_from

    store = _store(args)
    a_arr, a_meta = _load(store, args.reference, ("fom", "romrun"))
    b_arr, b_meta = _load(store, args.other, ("fom", "romrun"))
    require_same_mesh(a_meta, b_meta)
    sysm = _scenario_from_meta(a_meta).build_system()
    A = snapshots_from(a_arr, sysm.layout)
    B = snapshots_from(b_arr, sysm.layout)
    E_t = mor_error(A, B, sysm)
    out = {"E_t": f"{E_t:.3e}"}
    if b_meta["kind"] == "romrun":
        from .diagnostics import projection_error
        _, rom_meta = _load(store, b_meta["rom_id"], "rom")
        _, _, rom = _rebuild_rom(store, rom_meta)
        out["E_tP"] = f"{projection_error(A, rom):.3e}"
    if args.figures:
        from pathlib import Path

        from .plotting import error_figure
        d = Path(args.figures_dir or store.path(b_meta["run_id"]))
        d.mkdir(parents=True, exist_ok=True)
        error_figure(A.times, relative_errors(sysm, A.Y, B.Y), d / "compare_error.png")
    _emit(**out)
    return EXIT_OK


def validate_artifact(store, run_id) -> list:
    """Run the invariant checks for one artifact; returns a list of failure messages."""
    import numpy as np

    from .diagnostics import ph_condition_error
    from .store import basis_from, rule_from

    arrays, meta = store.load(run_id)
    kind = meta.get("kind")
    fails = []
    for name, a in arrays.items():
        if a.dtype.kind == "f" and not np.all(np.isfinite(a)):
            fails.append(f"{name}: non-finite entries")
    cfg = _scenario_from_meta(meta)
    if cfg.config_hash != meta.get("config_hash"):
        fails.append("stored scenario does not match the recorded config hash")
    sysm = cfg.build_system()
    if list(sysm.layout.n) != meta.get("mesh"):
        fails.append(f"mesh {meta.get('mesh')} does not match the scenario ({list(sysm.layout.n)})")
        return fails
    for key in ("training_id", "basis_id", "rom_id", "rule_id"):
        parent = meta.get(key)
        if parent and store.exists(parent):
            pm = store.meta(parent)
            if pm.get("mesh") != meta.get("mesh") or pm.get("config_hash") != meta.get("config_hash"):
                fails.append(f"parent {parent} was produced from a different configuration or mesh")
    if kind in ("fom", "romrun"):
        Y = arrays["Y"]
        if Y.shape[0] != sysm.layout.size:
            fails.append(f"snapshot dimension {Y.shape[0]} != {sysm.layout.size}")
        elif kind == "fom":
            cols = sorted({0, Y.shape[1] // 2, Y.shape[1] - 1})
            e = ph_condition_error(sysm, Y[:, cols])
            if e > 1e-8:
                fails.append(f"port-Hamiltonian condition error {e:.3e} > 1e-8")
        if arrays["times"].shape[0] != Y.shape[1]:
            fails.append("time grid and snapshot count differ")
    elif kind == "basis":
        from .mor import compatibility_angles
        b = basis_from(arrays, meta)
        if b.V_rho.shape[0] != sysm.layout.n_rho or b.V_m.shape[0] != sysm.layout.n_nodal:
            fails.append("basis row counts do not match the mesh")
        else:
            ang = compatibility_angles(b, sysm)
            if ang["orthonormality"] > 1e-8:
                fails.append(f"basis not mass-orthonormal ({ang['orthonormality']:.2e})")
            if b.compatible:
                for k in ("A1", "A2", "A3"):
                    if ang[k] > 1e-8:
                        fails.append(f"compatibility condition {k} violated (gap {ang[k]:.2e})")
    elif kind == "rule":
        r = rule_from(arrays, meta)
        if list(r.n_elements) != list(sysm.layout.n):
            fails.append("rule element counts do not match the mesh")
        if any(np.any(w <= 0) for w in r.weights):
            fails.append("non-positive quadrature weight")
    elif kind == "rom":
        st = meta.get("structure", {})
        if st.get("skew", 0.0) > 1e-10:
            fails.append(f"reduced J not skew-symmetric ({st['skew']:.2e})")
        if st.get("R_min_eig", 0.0) < -1e-10:
            fails.append(f"reduced R not positive semidefinite ({st['R_min_eig']:.2e})")
    else:
        fails.append(f"unknown artifact kind {kind!r}")
    return fails


def cmd_validate(args):
    from .errors import ConfigError
    store = _store(args)
    fails = []
    for rid in args.artifacts:
        try:
            f = validate_artifact(store, rid)
        except ConfigError as exc:
            f = [str(exc)]
        for msg in f:
            print(f"FAIL {rid}: {msg}")
        if not f:
            print(f"OK {rid}")
        fails += f
    return EXIT_INVALID if fails else EXIT_OK


# ------------------------------------------------------------ parser
def build_parser():
    p = _Parser(prog="phgasnet", description="Port-Hamiltonian gas network simulation and reduction.")
    p.add_argument("--store", help="artifact store root (default: $PHNET_STORE or ./phnet_store)")
    p.add_argument("--threads", type=int, help="cap BLAS/OpenMP threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run the full model and store its snapshots")
    s.add_argument("scenario", help="scenario JSON file or preset name")
    s.add_argument("--t-f", type=float)
    s.add_argument("--tau", type=float)
    s.add_argument("--ph-stride", type=int, default=1, help="evaluate the pH residual every k steps")
    s.add_argument("--figures", action="store_true", help="also render matplotlib figures")
    s.add_argument("--run-id")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("pod", help="build a reduced basis from a stored run")
    s.add_argument("run")
    s.add_argument("--mode", choices=("A_E", "A_omega"))
    s.add_argument("--r", type=int)
    s.add_argument("--r-per-pipe")
    s.add_argument("--no-energy-augmentation", action="store_true")
    s.add_argument("--naive", action="store_true", help="separate POD per field, no compatibility")
    s.add_argument("--run-id")
    s.set_defaults(func=cmd_pod)

    s = sub.add_parser("eq-train", help="learn a positive element quadrature")
    s.add_argument("basis")
    s.add_argument("--mode", choices=("A_E", "A_omega"))
    s.add_argument("--nc", type=int)
    s.add_argument("--nc-per-pipe")
    s.add_argument("--delta", type=float)
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--run-id")
    s.set_defaults(func=cmd_eq_train)

    s = sub.add_parser("reduce", help="assemble a reduced model from a basis (and rule)")
    s.add_argument("basis")
    s.add_argument("--rule")
    s.add_argument("--deim", type=int, help="DEIM dimension for the nonlinear rows")
    s.add_argument("--stride", type=int, default=1, help="DEIM training stride")
    s.add_argument("--run-id")
    s.set_defaults(func=cmd_reduce)

    s = sub.add_parser("run-rom", help="simulate a reduced model")
    s.add_argument("rom")
    s.add_argument("--ph-stride", type=int, default=1)
    s.add_argument("--figures", action="store_true")
    s.add_argument("--run-id")
    s.set_defaults(func=cmd_run_rom)

    s = sub.add_parser("validate", help="run invariant checks on stored artifacts")
    s.add_argument("artifacts", nargs="+")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("compare", help="relative error between two stored trajectories")
    s.add_argument("reference")
    s.add_argument("other")
    s.add_argument("--figures", action="store_true")
    s.add_argument("--figures-dir")
    s.set_defaults(func=cmd_compare)
    return p


def _apply_threads(argv):
    for i, a in enumerate(argv):
        val = None
        if a == "--threads" and i + 1 < len(argv):
            val = argv[i + 1]
        elif a.startswith("--threads="):
            val = a.split("=", 1)[1]
        if val is not None and val.isdigit() and int(val) > 0:
            for k in _THREAD_VARS:
                os.environ[k] = val
            if "numpy" in sys.modules:
                log.warning("numpy already loaded; --threads may not take effect")
            return


def _failure_report(args, exc) -> str:
    from .store import store_root
    root = store_root(getattr(args, "store", None))
    d = root / "failures"
    d.mkdir(parents=True, exist_ok=True)
    path = d / f"{args.command}-{int(time.time() * 1000)}.json"
    info = {"command": args.command, "argv": sys.argv[1:], "error": type(exc).__name__,
            "message": str(exc), "traceback": traceback.format_exc()}
    for k in ("residual_norm", "time"):
        if hasattr(exc, k):
            info[k] = getattr(exc, k)
    path.write_text(json.dumps(info, indent=1, default=str) + "\n")
    return str(path)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_threads(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    from .errors import (AccuracyInfeasibleError, BoundaryDegeneracyError, ConfigError, DomainError,
                         GraphError, InconsistentInitialDataError, NonConvergenceError,
                         RankDeficiencyError, SolverError, StructureError)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, GraphError, StructureError, RankDeficiencyError, AccuracyInfeasibleError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DomainError, NonConvergenceError, SolverError, BoundaryDegeneracyError,
            InconsistentInitialDataError, FloatingPointError, ArithmeticError) as exc:
        path = _failure_report(args, exc)
        print(f"numerical failure: {exc}\ndiagnostics: {path}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
