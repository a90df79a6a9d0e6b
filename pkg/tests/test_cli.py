import json

import pytest

from selftest_qrng.cli import main

CFG = "configs/paper.yaml"


def test_certify_only(capsys):
    assert main(["--config", CFG, "certify-only", "--probs", "0.46,0.54", "--omega", "0.01",
                 "--n", "12500000"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["probs"] == [0.46, 0.54] and out["p_x1"] == 0.16
    assert 0 < out["h"] < 1 and out["method"] == "convex-program"
    assert out["finite_size"]["c"] == 2.0 and out["total_certified_bits"] > 0


def test_certify_only_with_attack_check(capsys):
    assert main(["--config", CFG, "certify-only", "--probs", "0.46,0.54", "--omega", "0.01",
                 "--attack", "--d-t", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["d_t"] == 3 and -1e-6 <= out["attack_gap"] < 1e-3


def test_certify_only_infeasible(capsys):
    assert main(["--config", CFG, "certify-only", "--probs", "0,1", "--omega", "0.1"]) == 2
    assert "omega" in capsys.readouterr().err


def test_missing_config(capsys):
    assert main(["show-config"]) == 2
    assert "--config" in capsys.readouterr().err


def test_show_config_with_overrides(capsys, tmp_path):
    assert main(["--config", CFG, "--seed", "5", "--out-dir", str(tmp_path), "show-config"]) == 0
    out = capsys.readouterr().out
    assert "seed: 5" in out and str(tmp_path) in out


def test_run_and_experiment(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(open(CFG).read().replace("total_seconds: 20.0",
                                            "total_seconds: 2.0\n  time_compression: 100"))
    assert main(["--config", str(cfg), "--out-dir", str(tmp_path / "o"), "run"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["aggregate_certified_bits"] > 0 and (tmp_path / "o" / "bits.bin").exists()
    assert main(["--config", str(cfg), "--out-dir", str(tmp_path / "o"), "experiment",
                 "fig6-energy"]) == 0
    assert (tmp_path / "o" / "fig6-energy.csv").read_text().startswith("t_seconds")
    assert main(["--config", str(cfg), "experiment", "nope"]) == 2


def test_bad_config_value(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("finite_size: {c: 1, d: 1}\nsource: {p_x1: 1.5}\n")
    assert main(["--config", str(cfg), "show-config"]) == 2
    assert "source.p_x1" in capsys.readouterr().err


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for cmd in ("run", "experiment", "certify-only", "show-config"):
        assert cmd in out
