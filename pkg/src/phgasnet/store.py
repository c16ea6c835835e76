"""On-disk artifact store: runs, bases and quadrature rules.

Each artifact is a directory ``<root>/<run_id>/`` with a ``meta.json`` file and
one binary file per matrix.  Binary matrix layout (all integers little-endian)::

    bytes 0..7    magic  b"PHNETMAT"
    bytes 8..11   dtype  4 ASCII bytes, numpy dtype string padded with spaces ("<f8 ", "<i8 ")
    bytes 12..15  ndim   uint32
    next 8*ndim   shape  uint64 per axis
    rest          payload, little-endian, C (row-major) order

The store root defaults to ``./phnet_store`` and is overridden by ``PHNET_STORE``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError

MAGIC = b"PHNETMAT"
SUFFIX = ".phm"
_DTYPES = {"<f8", "<i8", "<f4", "<i4", "|b1", "|u1"}


def store_root(root=None) -> Path:
    if root is not None:
        return Path(root)
    return Path(os.environ.get("PHNET_STORE", "phnet_store"))


def code_version() -> str:
    from . import __version__
    return __version__


# ------------------------------------------------------------ matrices
def _le(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype == np.bool_:
        return np.ascontiguousarray(a)
    return np.ascontiguousarray(a.astype(a.dtype.newbyteorder("<"), copy=False))


def encode_matrix(a) -> bytes:
    a = _le(a)
    code = a.dtype.str
    if code not in _DTYPES:
        raise ConfigError(f"unsupported dtype {code!r} for the matrix store")
    head = MAGIC + code.ljust(4).encode("ascii") + struct.pack("<I", a.ndim)
    head += struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + a.tobytes(order="C")


def decode_matrix(buf: bytes, name: str = "<buffer>") -> np.ndarray:
    if buf[:8] != MAGIC:
        raise ConfigError(f"{name}: not a matrix file (bad magic)")
    code = buf[8:12].decode("ascii").strip()
    if code not in _DTYPES:
        raise ConfigError(f"{name}: unsupported dtype {code!r}")
    (ndim,) = struct.unpack("<I", buf[12:16])
    shape = struct.unpack(f"<{ndim}Q", buf[16:16 + 8 * ndim])
    off = 16 + 8 * ndim
    dt = np.dtype(code)
    count = int(np.prod(shape)) if ndim else 1
    if len(buf) - off != count * dt.itemsize:
        raise ConfigError(f"{name}: payload size does not match the header")
    return np.frombuffer(buf, dtype=dt, count=count, offset=off).reshape(shape).copy()


def save_matrix(path, a) -> None:
    Path(path).write_bytes(encode_matrix(a))


def load_matrix(path) -> np.ndarray:
    p = Path(path)
    try:
        return decode_matrix(p.read_bytes(), str(p))
    except FileNotFoundError:
        raise ConfigError(f"matrix file {str(p)!r} not found") from None


def export_csv(a, path) -> None:
    """Write a 1-D or 2-D array as CSV with round-trippable float formatting."""
    a = np.asarray(a)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ConfigError("CSV export supports 1-D and 2-D arrays only")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in a:
            w.writerow([repr(v.item()) for v in row])


# ------------------------------------------------------------ artifacts
def make_run_id(kind: str, *parts) -> str:
    """Deterministic id from the artifact kind and its defining inputs."""
    text = json.dumps([kind, *parts], sort_keys=True, default=str)
    return f"{kind}-{hashlib.sha256(text.encode()).hexdigest()[:12]}"


class Store:
    """Single-writer artifact directory."""

    def __init__(self, root=None):
        self.root = store_root(root)

    def path(self, run_id: str) -> Path:
        return self.root / run_id

    def exists(self, run_id: str) -> bool:
        return (self.path(run_id) / "meta.json").exists()

    def save(self, run_id: str, arrays: dict, meta: dict) -> Path:
        d = self.path(run_id)
        d.mkdir(parents=True, exist_ok=True)
        for name, a in arrays.items():
            save_matrix(d / f"{name}{SUFFIX}", a)
        meta = dict(meta, run_id=run_id, arrays=sorted(arrays))
        meta.setdefault("code_version", code_version())
        (d / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
        return d

    def load(self, run_id: str):
        d = Path(run_id) if Path(run_id).is_dir() else self.path(run_id)
        mp = d / "meta.json"
        if not mp.exists():
            raise ConfigError(f"no artifact {run_id!r} in {self.root}")
        meta = json.loads(mp.read_text())
        arrays = {n: load_matrix(d / f"{n}{SUFFIX}") for n in meta.get("arrays", [])}
        return arrays, meta

    def meta(self, run_id: str) -> dict:
        return self.load(run_id)[1]

    def export_csv(self, run_id: str, out_dir=None) -> list:
        arrays, _ = self.load(run_id)
        out = Path(out_dir) if out_dir else self.path(run_id)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for n, a in arrays.items():
            p = out / f"{n}.csv"
            export_csv(a, p)
            paths.append(p)
        return paths

    def list(self) -> list:
        if not self.root.exists():
            return []
        return sorted(p.name for p in self.root.iterdir() if (p / "meta.json").exists())


# ------------------------------------------------------------ typed helpers
def snapshot_arrays(snap) -> dict:
    return {"times": snap.times, "Y": snap.Y, "iterations": np.asarray(snap.iterations, dtype=np.int64)}


def snapshots_from(arrays: dict, layout=None, meta=None):
    from .dae import SnapshotSet
    return SnapshotSet(arrays["times"], arrays["Y"], arrays["iterations"], layout, meta or {})


def basis_arrays(basis) -> dict:
    return {"V_rho": basis.V_rho, "V_m": basis.V_m, "V_e": basis.V_e}


def basis_from(arrays: dict, meta: dict):
    from .mor import ReductionBasis
    return ReductionBasis(arrays["V_rho"], arrays["V_m"], arrays["V_e"], meta["mode"], meta["r_spec"],
                          bool(meta.get("compatible", True)), dict(meta.get("basis_meta", {})))


def rule_arrays(rule) -> dict:
    return {"weights": np.concatenate(rule.full_weights())}


def rule_from(arrays: dict, meta: dict):
    from .hyperreduction import QuadratureRule
    n = meta["n_elements"]
    w = arrays["weights"]
    off = np.concatenate([[0], np.cumsum(n)])
    return QuadratureRule.from_full_weights([w[off[k]:off[k + 1]] for k in range(len(n))],
                                            meta.get("rule_meta", {}))
