from __future__ import annotations

import csv
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helmlab.cli import CSV_COLUMNS, RunConfig, main, parse_config
from helmlab.errors import ConfigError

SMALL_SWEEP = """
[geometry]
eps = 0.3, 0.25, 0.2, 0.16
[truncation]
k_neck = 16
k_levels = 1
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_default_config_round_trip():
    cfg = RunConfig()
    assert parse_config(cfg.to_ini()) == cfg


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(0.01, 0.45), min_size=1, max_size=6),
    st.integers(4, 64),
    st.one_of(st.none(), st.integers(10, 400)),
    st.integers(0, 2**31 - 1),
)
def test_config_round_trip(eps, k, m, seed):
    cfg = RunConfig(eps_list=tuple(eps), k_neck=k, m_cavity=m, seed=seed).validate()
    assert parse_config(cfg.to_ini()) == cfg


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="k_nek"):
        parse_config("[truncation]\nk_nek = 3\n")
    with pytest.raises(ConfigError):
        parse_config("[plotting]\ncolor = red\n")


def test_bad_eps_rejected():
    with pytest.raises(ConfigError):
        parse_config("[geometry]\neps = 0.7\n")


def test_missing_eps_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "[truncation]\nk_neck = 16\n")
    code = main(["sweep", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 2
    assert "geometry.eps" in capsys.readouterr().err


def test_verify_detects_bad_quoted_constant(tmp_path, capsys):
    cfg = _write(tmp_path, "[verify]\ngamma2_quoted = 0.5\n")
    out = tmp_path / "out"
    code = main(["verify", "--config", cfg, "--out", str(out)])
    assert code != 0
    assert "gamma2" in capsys.readouterr().err
    report = json.loads((out / "verify.json").read_text())
    assert "gamma2" in report["failed"]
    gate = next(c for c in report["checks"] if c["name"] == "dimension_gate")
    assert [r["n"] for r in gate["rows"]] == list(range(2, 17))


def test_dimension_gate_command(tmp_path):
    out = tmp_path / "out"
    assert main(["dimension-gate", "--out", str(out)]) == 0
    rows = json.loads((out / "dimension_gate.json").read_text())["rows"]
    assert [r["n"] for r in rows if r["pass"]] == list(range(2, 13))


@pytest.mark.slow
def test_sweep_is_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL_SWEEP)
    outputs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        outputs.append((out / "sweep.csv").read_bytes())
    assert outputs[0] == outputs[1]
    rows = list(csv.reader(outputs[0].decode().splitlines()))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [float(r[0]) for r in rows[1:]] == [0.3, 0.25, 0.2, 0.16]
    assert all(r[2] == "-1" for r in rows[1:])
    assert (tmp_path / "a" / "effective_config.ini").exists()


@pytest.mark.slow
def test_oracle_compare_reports_unresolved(tmp_path):
    cfg = _write(tmp_path, "[geometry]\neps = 0.05\n[truncation]\nk_neck = 16\nk_levels = 1\n[oracle]\npoints_across = 12\n")
    out = tmp_path / "out"
    assert main(["oracle-compare", "--config", cfg, "--out", str(out)]) == 0
    entry = json.loads((out / "oracle_compare.json").read_text())["comparisons"][0]
    assert entry["verdict"] == "unresolved"
    assert entry["solver"]["im_log"] < -60
