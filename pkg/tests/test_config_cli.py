import copy
import csv
import json

import numpy as np
import pytest

from levycomp.cli import (EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_OK, EXIT_VIOLATION,
                          MissingReportError, _exit_code, emit_plot_data, main, run_job)
from levycomp.config import ConfigError, load_config, parse_config

BASE = {
    "schema_version": 1,
    "name": "small",
    "pair": [{"kind": "pii", "cov": 1.0}, {"kind": "pii", "cov": 4.0}],
    "order": "cx",
    "family": {"size": 6, "seed": 0, "mc_extras": ["exact_hinge"]},
    "seed": 5,
    "numerics": {"n_paths": 20000, "steps_per_unit": 8, "s_grid": {"n": 4}, "x_grid": {"radius": 4, "n": 17}},
}


def job(tmp_path, **changes):
    d = copy.deepcopy(BASE)
    for k, v in changes.items():
        d[k] = v
    d["output_dir"] = str(tmp_path / "out")
    return parse_config(d)


def write_config(tmp_path, **changes):
    d = copy.deepcopy(BASE)
    d.update(changes)
    path = tmp_path / "job.json"
    path.write_text(json.dumps(d))
    return path


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d["pair"][1].update(kind="piii"), "pair[1].kind"),
    (lambda d: d["pair"][0].update(cov="a"), "pair[0].cov"),
    (lambda d: d.update(order="foo"), "order"),
    (lambda d: d.update(numerics={"n_paths": -1}), "numerics.n_paths"),
    (lambda d: d.update(numerics={"bogus": 1}), "numerics.bogus"),
    (lambda d: d["pair"][0].update(levy={"atoms": [{"at": 1.0}]}), "pair[0].levy.atoms[0].mass"),
    (lambda d: d.update(schema_version=2), "schema_version"),
    (lambda d: d.update(pair=[d["pair"][0]]), "pair"),
    (lambda d: d["family"].update(mc_extras=["cube"]), "family.mc_extras"),
])
def test_parse_errors_name_the_field(mutate, field):
    d = copy.deepcopy(BASE)
    mutate(d)
    with pytest.raises(ConfigError) as e:
        parse_config(d)
    assert e.value.field == field
    assert str(e.value).startswith(field)


def test_stage_dependencies():
    with pytest.raises(ConfigError, match="requires stage 'validate'"):
        parse_config({**BASE, "stages": ["mc"]})
    sde = copy.deepcopy(BASE)
    sde["pair"] = [{"kind": "levy_sde", "cov": 1.0, "phi": {"matrix": 1.0}},
                   {"kind": "levy_sde", "cov": 1.0, "phi": {"matrix": 2.0}}]
    parse_config(sde)
    with pytest.raises(ConfigError, match="one-dimensional PII"):
        parse_config({**sde, "stages": ["spectral"]})


def test_default_stages_and_canonical_form():
    cfg = parse_config(BASE)
    assert cfg.stages == ("validate", "conditions", "dominance", "mc", "spectral")
    assert cfg.with_overrides(threads=4, output_dir="elsewhere").canonical() == cfg.canonical()
    assert cfg.with_overrides(stages="mc,validate").stages == ("validate", "mc")


def test_shipped_configs_parse():
    from pathlib import Path
    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.json")):
        assert load_config(path).name == path.stem


def test_unreadable_config_exits_with_error(tmp_path, capsys):
    assert main(["compare", str(tmp_path / "missing.json")]) == EXIT_ERROR
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["compare", str(bad)]) == EXIT_ERROR
    assert "<file>" in capsys.readouterr().err


def test_brownian_job_passes(tmp_path):
    res = run_job(job(tmp_path))
    assert res.exit_code == EXIT_OK
    assert res.summary["dominance"]["min_margin"] > 0
    assert res.summary["mc"]["overall"] == "supported"
    assert res.summary["spectral"]["overall"] == "supported"
    names = {p.name for p in res.files}
    assert {"validate.json", "summary.json", "margins_vs_s.csv", "ci_bars.csv", "density_overlay.csv"} <= names


def test_identical_job_has_zero_margins(tmp_path):
    same = {"kind": "pii", "drift": 0.5, "cov": 1.0, "levy": {"atoms": [{"at": 1.0, "mass": 1.0}]}}
    res = run_job(job(tmp_path, pair=[same, same], stages=list(
        ("validate", "conditions", "dominance", "mc", "spectral", "residuals", "norms"))))
    assert res.exit_code == EXIT_OK
    assert res.summary["dominance"]["min_margin"] == 0.0
    assert all(m["margin"] == 0.0 for m in res.reports["mc"]["members"])
    assert all(m["margin"] == 0.0 for m in res.reports["spectral"]["members"])


def test_reversed_job_reports_witness(tmp_path):
    res = run_job(job(tmp_path, pair=[{"kind": "pii", "cov": 2.0}, {"kind": "pii", "cov": 1.0}]))
    assert res.exit_code == EXIT_VIOLATION
    w = res.summary["dominance"]["witness"]
    assert {"s", "x", "member", "name"} <= set(w)
    assert res.summary["spectral"]["witness_x"] is not None


def test_conditions_failure_is_inconclusive(tmp_path):
    res = run_job(job(tmp_path, order="st", stages=["conditions"]))
    assert res.exit_code == EXIT_INCONCLUSIVE


def test_unsupported_condition_row_is_reported(tmp_path):
    res = run_job(job(tmp_path, order="dcx", stages=["conditions"]), write=False)
    assert res.reports["conditions"]["available"] is False
    assert res.exit_code == EXIT_OK


def test_exit_code_mapping_is_total():
    assert _exit_code({}) == EXIT_OK
    assert _exit_code({"validate": {"passed": False}}) == EXIT_ERROR
    assert _exit_code({"dominance": {"violations": [1]}}) == EXIT_VIOLATION
    assert _exit_code({"mc": {"overall": "inconclusive"}}) == EXIT_INCONCLUSIVE
    assert _exit_code({"mc": {"overall": "inconclusive"}, "spectral": {"overall": "violated"}}) == EXIT_VIOLATION
    assert _exit_code({"residuals": {"passed": False}}) == EXIT_INCONCLUSIVE


def test_plot_data_shapes(tmp_path):
    res = run_job(job(tmp_path))
    rows = list(csv.reader(open(tmp_path / "out" / "ci_bars.csv")))
    assert rows[0] == ["member", "mean", "lo", "hi"] and len(rows) == 1 + 7
    rows = list(csv.reader(open(tmp_path / "out" / "margins_vs_s.csv")))
    assert rows[0] == ["s", "min_margin"] and len(rows) == 1 + 4
    raw = (tmp_path / "out" / "ci_bars.csv").read_bytes()
    assert b"\r" not in raw
    with pytest.raises(MissingReportError):
        emit_plot_data({}, "ci_bars", tmp_path / "x.csv")
    with pytest.raises(ValueError):
        emit_plot_data(res.reports, "histogram", tmp_path / "x.csv")


def test_density_command_normalizes(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["density", str(cfg), "--t", "1", "--out", str(tmp_path / "d")]) == EXIT_OK
    data = np.loadtxt(tmp_path / "d" / "density_overlay.csv", delimiter=",", skiprows=1)
    dx = data[1, 0] - data[0, 0]
    assert abs(data[:, 1].sum() * dx - 1) <= 1e-6
    assert abs(data[:, 2].sum() * dx - 1) <= 1e-6
    assert json.loads(capsys.readouterr().out)["t"] == 1.0


def test_symbol_command(tmp_path, capsys):
    cfg = write_config(tmp_path, numerics={"symbol_paths": 20000})
    assert main(["symbol", str(cfg), "--x", "0", "--xi", "1", "--h", "0.001"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    a = out["estimates"][0]
    assert a["exact"] == [0.5, 0.0]
    assert abs(a["real"]["mean"] - 0.5) <= 4 * a["real"]["stderr"] + 0.01


def test_env_overrides(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, stages=["validate", "dominance"])
    monkeypatch.setenv("LEVYCOMP_OUT", str(tmp_path / "env_out"))
    monkeypatch.setenv("LEVYCOMP_THREADS", "3")
    assert main(["compare", str(cfg)]) == EXIT_OK
    info = json.loads((tmp_path / "env_out" / "run_info.json").read_text())
    assert info["threads"] == 3


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    for i, threads in enumerate(("1", "2")):
        assert main(["compare", str(cfg), "--out", str(tmp_path / f"r{i}"), "--threads", threads]) == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "r0").iterdir() if p.name != "run_info.json")
    assert files
    for name in files:
        assert (tmp_path / "r0" / name).read_bytes() == (tmp_path / "r1" / name).read_bytes(), name
