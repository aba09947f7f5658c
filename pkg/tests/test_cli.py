import csv
import json

import numpy as np
import pytest

from pmpo.cli import main
from pmpo.config import config_from_mapping, git_blob_hash, load_config
from pmpo.diagnostics import read_sink
from pmpo import InvalidInputError


def _write(path, text):
    path.write_text(text)
    return path


def test_load_config_and_hash(tmp_path):
    cfg_path = _write(tmp_path / "c.yaml", "total_steps: 7\ngeometry: gmpo\nlength_normalized: false\n")
    cfg, digest = load_config(cfg_path)
    assert cfg.total_steps == 7 and cfg.geometry == "gmpo" and cfg.length_normalized is False
    assert digest == git_blob_hash(cfg_path.read_bytes())
    # matches `git hash-object` for the empty blob
    assert git_blob_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"


def test_unknown_key_named(tmp_path):
    with pytest.raises(InvalidInputError, match="learnig_rate"):
        load_config(_write(tmp_path / "c.yaml", "learnig_rate: 0.1\n"))


def test_nested_value_rejected(tmp_path):
    with pytest.raises(InvalidInputError, match="clip_c"):
        load_config(_write(tmp_path / "c.yaml", "clip_c: {a: 1}\n"))


def test_type_errors():
    with pytest.raises(InvalidInputError, match="total_steps"):
        config_from_mapping({"total_steps": 1.5})
    with pytest.raises(InvalidInputError, match="length_normalized"):
        config_from_mapping({"length_normalized": "maybe"})


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "absent.yaml"
    assert main(["train", "--config", str(missing), "--out", str(tmp_path / "o")]) != 0
    assert str(missing) in capsys.readouterr().err


def test_invalid_key_exit(tmp_path, capsys):
    cfg = _write(tmp_path / "c.yaml", "bogus_key: 3\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) != 0
    assert "bogus_key" in capsys.readouterr().err


def test_zero_steps(tmp_path):
    out = tmp_path / "o"
    assert main(["train", "--geometry", "gmpo", "--total-steps", "0", "--out", str(out)]) == 0
    assert read_sink("csv", out / "metrics.csv") == []
    assert (out / "metrics.jsonl").read_text() == ""
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["geometry"] == "gmpo"
    assert manifest["overrides"] == {"geometry": "gmpo", "total_steps": 0}


def test_overrides_after_file(tmp_path):
    cfg = _write(tmp_path / "c.yaml", "total_steps: 50\nseed: 3\nprompts_per_batch: 8\nminibatch_size: 32\n")
    out = tmp_path / "o"
    assert main(["train", "--config", str(cfg), "--total-steps", "9", "--total-steps", "3",
                 "--seed", "5", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["total_steps"] == 3
    assert manifest["seed"] == 5
    assert manifest["config"]["prompts_per_batch"] == 8
    assert manifest["config_hash"] == git_blob_hash(cfg.read_bytes())
    assert len(read_sink("jsonl", out / "metrics.jsonl")) == 3


def test_sweep_fixed_p(tmp_path):
    out = tmp_path / "s"
    args = ["sweep", "--axis", "fixed-p", "--values", "0", "0.5", "1.0", "--total-steps", "2", "--out", str(out)]
    assert main(args) == 0
    subdirs = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert subdirs == ["fixed-p=0", "fixed-p=0.5", "fixed-p=1.0"]
    with (out / "summary.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["value"] for r in rows] == ["0", "0.5", "1.0"]
    manifest = json.loads((out / "fixed-p=0.5" / "manifest.json").read_text())
    assert manifest["config"]["geometry"] == "pmpo-fixed" and manifest["config"]["p_fixed"] == 0.5
    for sub in subdirs:
        assert json.loads((out / sub / "manifest.json").read_text())["seed"] == 1


def test_sweep_eps_ess_zero_pins_p(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--axis", "eps-ess", "--values", "0.0", "--total-steps", "24", "--out", str(out)]) == 0
    records = read_sink("csv", out / "eps-ess=0.0" / "metrics.csv")
    off_policy = [r for r in records if r.delta_abs_mean > 0]
    assert len(off_policy) >= 12
    assert all(r.p_mean <= 0.05 for r in off_policy)


def test_sweep_empty_values(tmp_path, capsys):
    assert main(["sweep", "--axis", "geometry", "--out", str(tmp_path / "s")]) != 0
    assert "at least one value" in capsys.readouterr().err


def test_sweep_bad_value(tmp_path):
    assert main(["sweep", "--axis", "fixed-p", "--values", "half", "--out", str(tmp_path / "s")]) != 0


@pytest.mark.parametrize("suite", ["math", "solver", "gradients"])
def test_check_suites_pass(suite, capsys):
    assert main(["check", suite, "--cases", "20"]) == 0
    assert "ok" in capsys.readouterr().out


def test_check_fault_injection(capsys):
    assert main(["check", "gradients", "--cases", "10", "--inject-fault", "sign"]) != 0
    out = capsys.readouterr().out
    assert "FAIL" in out and "deltas=" in out


def test_ess_curve_export(tmp_path):
    path = tmp_path / "ess.csv"
    assert main(["check", "ess-curve", "--out", str(path)]) == 0
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert {r["variance_class"] for r in rows} == {"low", "typical", "high"}
    for cls in ("low", "typical", "high"):
        p = np.array([float(r["p"]) for r in rows if r["variance_class"] == cls])
        ess = np.array([float(r["ess_norm"]) for r in rows if r["variance_class"] == cls])
        assert p[0] == 0.01 and p[-1] == 4.0
        assert np.all(np.diff(ess) <= 0)
