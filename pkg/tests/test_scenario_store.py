import json

import numpy as np
import pytest

from phgasnet.errors import ConfigError
from phgasnet.scenario import PRESETS, load_preset, load_scenario, parse_scenario, preset_dict
from phgasnet.store import (Store, decode_matrix, encode_matrix, export_csv, load_matrix, make_run_id,
                            save_matrix, store_root)


@pytest.mark.parametrize("name,size", [("single_pipe_5_1", 305), ("parity_rho_n100", 306),
                                       ("parity_rho_n99", 303), ("diamond_5_2", 975), ("mixed_5_2_2", 975)])
def test_presets_build(name, size):
    cfg = load_preset(name)
    assert cfg.build_system().layout.size == size


def test_single_pipe_preset_values(preset_single):
    cfg, sys = preset_single
    ed = cfg.graph.edges[0]
    assert ed.n == 100 and ed.params.L == 1.0
    assert cfg.solver.tau == 0.1 and cfg.solver.t_f == 30.0
    assert sorted(cfg.boundary) == ["in", "out"]


def test_diamond_lengths():
    cfg = load_preset("diamond_5_2")
    assert [e.params.L for e in cfg.graph.edges] == [0.55, 0.5, 0.5, 0.5, 0.5, 0.55]


def _base():
    return preset_dict("single_pipe_5_1")


@pytest.mark.parametrize("mutate,pointer", [
    (lambda d: d.update(nodes=[]), "/nodes"),
    (lambda d: d.update(edges=[]), "/edges"),
    (lambda d: d["edges"][0].update(tail="zz"), "/edges/0/tail"),
    (lambda d: d["edges"][0].update(n=1), "/edges/0/n"),
    (lambda d: d["edges"][0]["params"].update(bogus=1.0), "/edges/0/params"),
    (lambda d: d["boundary"].pop("out"), "/boundary"),
    (lambda d: d["solver"].update(t_f=0.35), "/solver"),
])
def test_config_errors_carry_pointer(mutate, pointer):
    d = _base()
    mutate(d)
    with pytest.raises(ConfigError) as ei:
        parse_scenario(d)
    assert ei.value.pointer is not None and ei.value.pointer.startswith(pointer)


def test_config_hash_stable_and_sensitive():
    a, b = parse_scenario(_base()), parse_scenario(_base())
    assert a.config_hash == b.config_hash
    d = _base()
    d["solver"]["tau"] = 0.05
    assert parse_scenario(d).config_hash != a.config_hash


def test_load_scenario_file_and_preset(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(_base()))
    assert load_scenario(p).config_hash == load_preset("single_pipe_5_1").config_hash
    assert load_scenario("diamond_5_2").name
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.json")
    assert set(PRESETS) >= {"single_pipe_5_1", "mixed_5_2_2"}


@pytest.mark.parametrize("a", [np.random.default_rng(0).standard_normal((4, 7)),
                               np.arange(5, dtype=np.int64), np.array([True, False])])
def test_matrix_roundtrip_bitwise(a, tmp_path):
    buf = encode_matrix(a)
    assert buf[:8] == b"PHNETMAT"
    b = decode_matrix(buf)
    assert b.dtype == a.dtype and b.shape == a.shape and b.tobytes() == a.tobytes()
    save_matrix(tmp_path / "x.phm", a)
    assert load_matrix(tmp_path / "x.phm").tobytes() == a.tobytes()


def test_matrix_corruption_detected():
    buf = encode_matrix(np.ones(3))
    with pytest.raises(ConfigError):
        decode_matrix(b"XXXXXXXX" + buf[8:])
    with pytest.raises(ConfigError):
        decode_matrix(buf[:-1])


def test_csv_export_exact(tmp_path):
    a = np.array([[0.1, 1 / 3], [2.0, -1e-300]])
    export_csv(a, tmp_path / "a.csv")
    back = np.loadtxt(tmp_path / "a.csv", delimiter=",")
    assert np.array_equal(back, a)


def test_store_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv("PHNET_STORE", str(tmp_path / "st"))
    assert store_root() == tmp_path / "st"
    st = Store()
    rid = make_run_id("fom", {"x": 1})
    assert rid == make_run_id("fom", {"x": 1}) and rid != make_run_id("fom", {"x": 2})
    Y = np.random.default_rng(1).standard_normal((6, 3))
    st.save(rid, {"Y": Y}, {"kind": "fom"})
    assert st.exists(rid) and st.list() == [rid]
    arrays, meta = st.load(rid)
    assert arrays["Y"].tobytes() == Y.tobytes()
    assert meta["kind"] == "fom" and meta["run_id"] == rid and "code_version" in meta
    assert [p.name for p in st.export_csv(rid)] == ["Y.csv"]
    with pytest.raises(ConfigError):
        st.load("nope")
