import json
import subprocess
import sys

import pytest

from rwre_lab.cli import main
from rwre_lab.config import load_config, parse_config
from rwre_lab.errors import ConfigError


def _write_config(path, **overrides):
    data = {
        "schema_version": 1,
        "law": {"builtin": "d1_drift"},
        "master_seed": 12345,
        "horizon": 400,
        "margin": 50,
        "reps": 64,
        "n_slabs": 80,
        "options": {"steps": 200},
    }
    data.update(overrides)
    path.write_text(json.dumps(data))
    return path


def test_parse_config_validates_before_running(tmp_path):
    with pytest.raises(ConfigError):
        parse_config({"schema_version": 2, "law": {"builtin": "d1_drift"},
                      "master_seed": 1})
    with pytest.raises(ConfigError):
        parse_config({"schema_version": 1, "master_seed": 1})
    with pytest.raises(ConfigError):
        parse_config({"schema_version": 1, "law": {"builtin": "nope"},
                      "master_seed": 1})
    with pytest.raises(ConfigError):
        parse_config({"schema_version": 1, "law": {"builtin": "d1_drift"},
                      "master_seed": 1, "margin": 500, "horizon": 100})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_inline_law_config(tmp_path):
    cfg = _write_config(tmp_path / "c.json", law={
        "dimension": 1, "epsilon": 0.4,
        "atoms": [{"weight": 1.0, "probs": [0.6, 0.4]}],
    })
    parsed = load_config(cfg)
    assert parsed.law.d == 1
    assert parsed.law.atoms[0][1].probs == (0.6, 0.4)


def test_invalid_config_exits_1_writes_nothing(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{\"schema_version\": 1}")
    out = tmp_path / "out"
    rc = main(["velocity", "--config", str(cfg), "--out", str(out)])
    assert rc == 1
    assert not out.exists()


def test_velocity_end_to_end(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json")
    out = tmp_path / "out"
    rc = main(["velocity", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "velocity.direct_vs_renewal_3sigma" in text
    report = json.loads((out / "report.json").read_text())
    assert report["subcommand"] == "velocity"
    assert report["config"]["master_seed"] == 12345
    assert report["config"]["law"]["atoms"][0]["probs"] == [0.6, 0.4]
    assert (out / "velocity.csv").read_text().startswith("coord,")


def test_deterministic_law_velocity_is_exact(tmp_path):
    cfg = _write_config(tmp_path / "c.json",
                        law={"builtin": "deterministic_right"})
    out = tmp_path / "out"
    rc = main(["velocity", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["results"]["direct"] == [1.0]
    assert report["results"]["renewal"] == [1.0]


def test_reruns_are_byte_identical(tmp_path):
    cfg = _write_config(tmp_path / "c.json")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["velocity", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["velocity", "--config", str(cfg), "--out", str(out2)]) == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out1 / "velocity.csv").read_bytes() == (out2 / "velocity.csv").read_bytes()


def test_worker_count_does_not_change_bytes(tmp_path):
    cfg = _write_config(tmp_path / "c.json", law={"builtin": "d2_random"},
                        horizon=1200, margin=150, n_slabs=60,
                        options={"worlds": 4, "sites": 1500})
    outs = []
    for w, name in ((1, "w1"), (3, "w3")):
        out = tmp_path / name
        assert main(["couple", "--config", str(cfg), "--out", str(out),
                     "--workers", str(w)]) == 0
        outs.append(out)
    assert (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()
    assert (outs[0] / "pvalues.csv").read_bytes() == (outs[1] / "pvalues.csv").read_bytes()


def test_seed_override_changes_report(tmp_path):
    cfg = _write_config(tmp_path / "c.json")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["velocity", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["velocity", "--config", str(cfg), "--out", str(out2),
                 "--seed", "999"]) == 0
    r1 = json.loads((out1 / "report.json").read_text())
    r2 = json.loads((out2 / "report.json").read_text())
    assert r1["results"]["direct"] != r2["results"]["direct"]
    assert r2["config"]["master_seed"] == 999


def test_runtime_failure_exits_2(tmp_path):
    # a symmetric law cannot pass the ballisticity pre-check
    cfg = _write_config(tmp_path / "c.json", law={"builtin": "d1_symmetric"})
    rc = main(["regen", "--config", str(cfg)])
    assert rc == 2


def test_glue_writes_slab_records(tmp_path):
    cfg = _write_config(tmp_path / "c.json", law={"builtin": "d2_random"},
                        horizon=1500, margin=150, n_slabs=60)
    out = tmp_path / "out"
    rc = main(["glue", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    lines = (out / "slabs.jsonl").read_text().strip().splitlines()
    assert len(lines) == 60
    rec = json.loads(lines[0])
    assert set(rec) == {"L", "u", "moves", "kernels", "strip_seed"}
    report = json.loads((out / "report.json").read_text())
    by = {c["name"]: c for c in report["checks"]}
    assert by["glue.records_roundtrip"]["passed"]


def test_expected_divergence_is_data_not_error(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json", law={"builtin": "d2_random"},
                        horizon=1500, margin=150, reps=300, z0=[-24, 32],
                        radius=12.0,
                        options={"n_max": 12, "tilde_horizon": 150,
                                 "expect_diverge": True})
    out = tmp_path / "out"
    rc = main(["certify", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["results"]["diverged"] is True
    assert report["results"]["certificate_passed"] is False


def test_config_out_dir_field(tmp_path):
    out = tmp_path / "from_config"
    cfg = _write_config(tmp_path / "c.json", out_dir=str(out))
    rc = main(["velocity", "--config", str(cfg)])
    assert rc == 0
    assert (out / "report.json").exists()


def test_env_var_worker_fallback(monkeypatch):
    from rwre_lab.parallel import worker_count

    monkeypatch.setenv("RWRE_LAB_WORKERS", "5")
    assert worker_count(None) == 5
    assert worker_count(2) == 2
    monkeypatch.delenv("RWRE_LAB_WORKERS")
    assert worker_count(None) == 1


def test_selftest_exit_codes(monkeypatch, capsys):
    import rwre_lab.experiments as ex

    def fake_suite(workers=1, only=None):
        return [
            {"criterion": "1", "name": "a", "passed": True,
             "expected_fail": False, "detail": "", "seconds": 0},
            {"criterion": "7", "name": "b", "passed": False,
             "expected_fail": True, "detail": "documented", "seconds": 0},
        ]

    monkeypatch.setattr(ex, "acceptance_suite", fake_suite)
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "XFAIL" in out and "PASS" in out

    def failing_suite(workers=1, only=None):
        return [{"criterion": "2", "name": "c", "passed": False,
                 "expected_fail": False, "detail": "", "seconds": 0}]

    monkeypatch.setattr(ex, "acceptance_suite", failing_suite)
    assert main(["selftest"]) == 3


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rwre_lab.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "selftest" in proc.stdout
