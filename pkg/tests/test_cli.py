"""Tests for the command line interface."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from conftest import small_config
from dynfourier.cli import bundled_configs, read_csv, render_svg, run


def test_list_configs(capsys):
    assert run(["--list-configs"]) == 0
    names = capsys.readouterr().out.split()
    assert set(names) == set(bundled_configs())
    assert {"cantor", "uni_mobius", "gauss_product", "lebesgue"} <= set(names)


def test_csv_is_byte_deterministic(tmp_path):
    cfg = small_config(tmp_path, "disintegrate")
    assert run(["disintegrate", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "3"]) == 0
    assert run(["disintegrate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "3"]) == 0
    a = (tmp_path / "a" / "disintegrate.csv").read_bytes()
    assert a == (tmp_path / "b" / "disintegrate.csv").read_bytes()
    assert run(["disintegrate", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "4"]) == 0
    assert a != (tmp_path / "c" / "disintegrate.csv").read_bytes()


def test_header_and_manifest(tmp_path):
    cfg = small_config(tmp_path, "uni")
    assert run(["uni", "--config", cfg, "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "uni.csv")
    assert header["seed"] == "0" and len(header["config_sha256"]) == 64
    assert json.loads(header["params"])["n_list"] == [3, 4]
    assert [int(r["n"]) for r in rows] == [3, 4]
    man = json.loads((tmp_path / "uni.manifest.json").read_text())
    assert man["config_sha256"] == header["config_sha256"] and man["violated"] is False
    assert man["wall_time_s"] >= 0


def test_environment_defaults(tmp_path, monkeypatch):
    cfg = small_config(tmp_path, "multinomial")
    monkeypatch.setenv("DYNFOURIER_OUT", str(tmp_path / "env"))
    monkeypatch.setenv("DYNFOURIER_SEED", "9")
    assert run(["multinomial", "--config", cfg]) == 0
    header, _ = read_csv(tmp_path / "env" / "multinomial.csv")
    assert header["seed"] == "9"


@pytest.mark.parametrize("command,config", [("separation", "homogeneous"), ("uni", "similitude_control")])
def test_violated_audit_exits_two(tmp_path, command, config):
    assert run([command, "--config", config, "--out", str(tmp_path)]) == 2
    man = json.loads((tmp_path / f"{command}.manifest.json").read_text())
    assert man["violated"] is True


def test_malformed_config_exits_one_without_output(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"system": {"dimension": 1,\n  "maps": [}\n')
    out = tmp_path / "out"
    assert run(["decay", "--config", str(bad), "--out", str(out)]) == 1
    assert "bad.json:2:" in capsys.readouterr().err
    assert not out.exists()


def test_missing_and_invalid_configs(tmp_path):
    assert run(["decay", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1
    assert run(["decay", "--out", str(tmp_path / "o")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"system": {"dimension": 1, "maps": [{"kind": "spiral"}]}}))
    assert run(["decay", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()


def test_plot_from_csv(tmp_path):
    cfg = small_config(tmp_path, "decay")
    assert run(["decay", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert run(["plot", "--input", str(tmp_path / "decay.csv"), "--x", "T_lo", "--y", "max,mean",
                "--out", str(tmp_path / "fig")]) == 0
    svg = (tmp_path / "fig" / "decay.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg
    assert run(["plot", "--input", str(tmp_path / "decay.csv"), "--out", str(tmp_path / "fig2")]) == 1


def test_svg_is_pure_function_of_rows():
    rows = [{"n": "1", "v": "0.5", "g": "a"}, {"n": "2", "v": "0.25", "g": "a"},
            {"n": "1", "v": "0.4", "g": "b"}, {"n": "2", "v": "0.3", "g": "b"}]
    a = render_svg(rows, "n", ["v"], group="g")
    assert a == render_svg(rows, "n", ["v"], group="g")
    assert 'width="1000"' in a and 'height="600"' in a


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dynfourier", "--list-configs"],
                         capture_output=True, text=True, check=True)
    assert "cantor" in res.stdout.split()


@pytest.mark.parametrize("argv", [[], ["bogus"], ["decay", "--seed", "x"]])
def test_usage_errors_exit_one(argv):
    with pytest.raises(SystemExit) as exc:
        run(argv)
    assert exc.value.code == 1
