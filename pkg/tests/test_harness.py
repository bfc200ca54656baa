import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbopt.bosehubbard import build_basis, build_hamiltonian, ground_state
from qbopt.harness import (
    BenchmarkSummary,
    ConfigError,
    get_preset,
    list_presets,
    load_config,
    parse_config,
    run_scenario,
)
from qbopt.harness.cli import main
from qbopt.harness.config import dump_config
from qbopt.harness.export import export_figure_data
from qbopt.trace import OptimizationTrace

TINY_BH = {"system": "bose-hubbard", "fom": "fidelity", "optimizer": "random", "baseline": {"budget": 10},
           "bose_hubbard": {"steps": 40, "qsl_grid": 51}, "record_wall_time": False}


def tiny(**kw):
    doc = json.loads(json.dumps(TINY_BH))
    doc.update(kw)
    return parse_config(doc)


# --- config ------------------------------------------------------------------------


def test_minimal_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("system: rydberg-1d\nfom: manifold\noptimizer: bo\nbo: {n_init: 24, m_iters: 10}\n")
    cfg = load_config(path)
    assert cfg.geometry == "chain-9" and cfg.budget == 34 and cfg.repeats == 1


@pytest.mark.parametrize("doc", [
    {"system": "bose-hubbard", "fom": "manifold"},
    {"system": "rydberg-2d", "fom": "fexp"},
    {"system": "bose-hubbard", "fom": "fidelity", "optimiser": "bo"},
    {"system": "bose-hubbard", "fom": "fidelity", "bo": {"n_init": 0}},
    {"system": "bose-hubbard", "fom": "fidelity", "bo": {"ucb_k_start": 1, "ucb_k_end": 2}},
    {"system": "ising", "fom": "fidelity"},
    {"system": "bose-hubbard", "fom": "fidelity", "repeats": 0},
    ["system", "bose-hubbard"],
])
def test_invalid_configs(doc):
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("system: [unterminated\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_dump_roundtrip(tmp_path):
    cfg = get_preset("rydberg-1d-imperfect-bo")
    path = tmp_path / "r.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


@settings(max_examples=40)
@given(st.sampled_from(["seed", "repeats", "protocol_time_factor", "output_dir", "name"]), st.integers(1, 99))
def test_hash_changes_iff_field_changes(field, v):
    base = tiny()
    new = {"seed": v, "repeats": v + 1, "protocol_time_factor": 1.0 + v, "output_dir": f"x{v}", "name": f"n{v}"}[field]
    changed = base.with_overrides(**{field: new})
    assert changed.content_hash() != base.content_hash()
    assert base.with_overrides(**{field: getattr(base, field)}).content_hash() == base.content_hash()


def test_hash_is_git_blob_format():
    import hashlib

    cfg = tiny()
    body = json.dumps(cfg.canonical(), sort_keys=True, separators=(",", ":")).encode()
    assert cfg.content_hash() == hashlib.sha1(b"blob " + str(len(body)).encode() + b"\0" + body).hexdigest()


# --- presets --------------------------------------------------------------------------


def test_presets_budgets():
    names = dict(list_presets())
    assert {"bh-bo", "bh-nm", "bh-random", "rydberg-1d-bo", "rydberg-1d-imperfect-bo"} <= set(names)
    bh = get_preset("bh-bo")
    assert (bh.bo.n_init, bh.bo.m_iters, bh.bo.refit_every, bh.bo.acquisition) == (100, 1750, 10, "UCB")
    assert (bh.bo.ucb_k_start, bh.bo.ucb_k_end, bh.repeats) == (5.0, 0.0, 30)
    clean = get_preset("rydberg-1d-bo")
    assert (clean.bo.n_init, clean.bo.m_iters, clean.bo.acquisition) == (24, 10, "EI")
    noisy = get_preset("rydberg-1d-imperfect-bo")
    assert (noisy.bo.n_init, noisy.bo.m_iters, noisy.bo.acquisition) == (6, 50, "EI")
    assert (noisy.rydberg.detection_prob, noisy.rydberg.fill_prob, noisy.fom) == (0.9, 0.9, "detected-count")
    with pytest.raises(ConfigError):
        get_preset("nope")


def test_manifest_reproduces_preset_budget(tmp_path):
    cfg = get_preset("rydberg-3d-bo").with_overrides(repeats=1, bo={"n_init": 3, "m_iters": 0})
    run_scenario(cfg, tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["budget"] == 3 and man["config"]["bo"]["n_init"] == 3
    assert get_preset("rydberg-3d-bo").budget == 34 and get_preset("bh-bo").budget == 1850


# --- runner ------------------------------------------------------------------------------


def test_single_repeat_summary_equals_trace(tmp_path):
    res = run_scenario(tiny(), tmp_path)
    tr = res.runs[0].trace
    assert len(tr) == 10
    for arr in (res.summary.median, res.summary.q1, res.summary.q3):
        assert np.array_equal(arr, 1.0 - tr.best_so_far)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json", "summary.csv", "trace_000.csv"]
    back = OptimizationTrace.read_csv(tmp_path / "trace_000.csv")
    assert np.array_equal(back.foms, tr.foms)
    assert BenchmarkSummary.read_csv(tmp_path / "summary.csv").median.tolist() == res.summary.median.tolist()


def test_repeats_seeds_and_quartiles(tmp_path):
    res = run_scenario(tiny(repeats=4, seed=7), tmp_path)
    assert [r.seed for r in res.runs] == [7, 8, 9, 10]
    s = res.summary
    assert np.all(s.q1 <= s.median) and np.all(s.median <= s.q3)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert [r["trace"] for r in man["runs"]] == [f"trace_{i:03d}.csv" for i in range(4)]
    assert all("incumbent_fidelity" in r for r in man["runs"])


def test_byte_identical_reruns(tmp_path):
    cfg = tiny(repeats=2)
    run_scenario(cfg, tmp_path / "a")
    run_scenario(cfg, tmp_path / "b")
    for name in ("summary.csv", "trace_000.csv", "trace_001.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_parallel_matches_serial(tmp_path):
    cfg = tiny(repeats=2)
    a = run_scenario(cfg, tmp_path / "a", workers=1)
    b = run_scenario(cfg, tmp_path / "b", workers=2)
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()
    assert [r.seed for r in a.runs] == [r.seed for r in b.runs]


def test_unwritable_output_fails_before_compute():
    with pytest.raises(OSError):
        run_scenario(tiny(), "/proc/qbopt-unwritable")


def test_summary_rejects_bad_quartiles():
    with pytest.raises(AssertionError):
        BenchmarkSummary(np.array([0.5]), np.array([0.6]), np.array([0.7]))


def test_wall_time_column_switch(tmp_path):
    run_scenario(tiny(record_wall_time=True), tmp_path / "w")
    rows = list(csv.reader(open(tmp_path / "w" / "trace_000.csv")))
    assert rows[0][-1] == "wall_s" and any(float(r[-1]) > 0 for r in rows[1:])
    run_scenario(tiny(), tmp_path / "z")
    rows = list(csv.reader(open(tmp_path / "z" / "trace_000.csv")))
    assert all(float(r[-1]) == 0 for r in rows[1:])


# --- export -----------------------------------------------------------------------------------


def test_bh_spectrum_export(tmp_path):
    (path,) = export_figure_data("spectrum", tmp_path, points=101)
    arr = np.loadtxt(path, delimiter=",", skiprows=1)
    assert arr.shape[0] == 101
    basis = build_basis(5, 5)
    assert arr[0, 1] == pytest.approx(ground_state(build_hamiltonian(basis, 0.0))[0], abs=1e-9)
    assert arr[-1, 1] == pytest.approx(ground_state(build_hamiltonian(basis, 1.0))[0], abs=1e-9)


def test_rydberg_spectrum_export_slopes(tmp_path):
    (path,) = export_figure_data("spectrum", tmp_path, "rydberg-3d", points=11)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    grid, E = data[:, 0], data[:, 1:]
    assert E.shape == (11, 256) and np.all(np.diff(E, axis=1) >= 0)
    neg = grid < 0
    assert neg.sum() >= 3
    # for delta < 0 the lowest level is n_e = 0 and the highest is the fully excited state
    slopes = np.diff(E[neg], axis=0) / np.diff(grid[neg])[:, None]
    assert np.allclose(slopes[:, 0], 0.0, atol=1e-9) and np.allclose(slopes[:, -1], -8.0, atol=1e-6)


def test_export_kinds(tmp_path):
    (p,) = export_figure_data("pulse", tmp_path, "rydberg-1d", samples=5)
    assert p.read_text().splitlines()[0] == "t,omega,delta"
    (r,) = export_figure_data("pulse", tmp_path, samples=5)
    assert r.read_text().splitlines()[0] == "t,gamma"
    (f,) = export_figure_data("populations", tmp_path, "rydberg-3d", samples=5)
    arr = np.loadtxt(f, delimiter=",", skiprows=1)
    assert arr.shape == (5, 10) and np.allclose(arr[:, 1:].sum(axis=1), 1.0, atol=1e-9)
    (j,) = export_figure_data("site-probs", tmp_path, "rydberg-3d")
    doc = json.loads(j.read_text())
    assert len(doc["probabilities"]) == 8
    with pytest.raises(ValueError):
        export_figure_data("site-probs", tmp_path)
    with pytest.raises(ValueError):
        export_figure_data("heatmap", tmp_path)


# --- CLI -------------------------------------------------------------------------------------------


def test_cli_presets(capsys):
    assert main(["presets"]) == 0
    assert "bh-bo" in capsys.readouterr().out
    assert main(["presets", "--show", "rydberg-1d-bo"]) == 0
    assert "m_iters: 10" in capsys.readouterr().out
    assert main(["presets", "--show", "nope"]) == 2


def test_cli_optimize_and_benchmark(tmp_path, capsys):
    cfgfile = tmp_path / "c.yaml"
    cfgfile.write_text(dump_config(tiny(repeats=3)))
    assert main(["optimize", "--config", str(cfgfile), "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]["repeats"] == 1
    assert main(["benchmark", "--config", str(cfgfile), "--seed", "4", "--out", str(tmp_path / "b")]) == 0
    man = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert [r["seed"] for r in man["runs"]] == [4, 5, 6]
    assert "final infidelity median" in capsys.readouterr().out


def test_cli_error_codes(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("system: bose-hubbard\nfom: fidelity\ntypo: 1\n")
    assert main(["optimize", "--config", str(bad)]) == 2
    assert main(["optimize"]) == 2
    assert main(["optimize", "--preset", "bh-random", "--config", str(bad)]) == 2
    good = tmp_path / "g.yaml"
    good.write_text(dump_config(tiny()))
    assert main(["benchmark", "--config", str(good), "--out", "/proc/qbopt-unwritable"]) == 2
    assert main(["export", "--kind", "site-probs", "--out", str(tmp_path)]) == 2


def test_cli_numeric_failure_code(tmp_path, monkeypatch):
    import qbopt.harness.cli as cli

    def boom(*a, **k):
        raise ArithmeticError("norm drift")

    monkeypatch.setattr(cli, "run_scenario", boom)
    good = tmp_path / "g.yaml"
    good.write_text(dump_config(tiny()))
    assert main(["optimize", "--config", str(good)]) == 3


def test_cli_spectrum(tmp_path, capsys):
    assert main(["spectrum", "--system", "rydberg-3d", "--points", "7", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "rydberg-3d_spectrum.csv").read_text().splitlines()
    assert len(rows) == 8 and rows[0].startswith("delta,E_0")


def test_overrides_merge_nested_sections():
    cfg = get_preset("rydberg-3d-bo").with_overrides(bo={"m_iters": 2})
    assert (cfg.bo.n_init, cfg.bo.m_iters, cfg.bo.acquisition) == (24, 2, "EI")
    with pytest.raises(ConfigError):
        cfg.with_overrides(bo={"m_itrs": 2})
