from __future__ import annotations

import json
import subprocess
import sys


from skewrat.cli import ExperimentConfig, main
from skewrat.visits import frame_at
from skewrat.mcf import DigitSequence

TAIL3 = '{"tail":[3]}'


def artifacts(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.name != "manifest.json"}


def test_config_round_trip():
    cfg = ExperimentConfig("experiment", "simulate", {"tail": [3]}, seed=3, trials=10, levels=4)
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg and again.digest() == cfg.digest()


def test_expand_golden(capsys):
    assert main(["expand", "--beta", "(sqrt(5)-1)/2", "--digits", "5"]) == 0
    assert capsys.readouterr().out == "k,digit\n1,2\n2,3\n3,3\n4,3\n5,3\n"


def test_expand_truncated_decimal_reports_cap(capsys):
    code = main(["expand", "--beta", "0.6180339887…", "--digits", "20"])
    out = capsys.readouterr().out
    assert code == 3
    assert out.startswith("k,digit\n1,2\n2,3\n")


def test_verify_biohazard(capsys):
    assert main(["verify", "biohazard", "--digits", TAIL3, "--levels", "8"]) == 0
    assert capsys.readouterr().out.startswith("PASS coordinate_laws")


def test_verify_blocks_tail23(capsys):
    assert main(["verify", "thm21", "--digits", '{"tail":[2,3]}', "--max-len", "100000"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_verify_variance(capsys):
    assert main(["verify", "variance", "--instances", "100", "--seed", "7"]) == 0


def test_unknown_suite():
    assert main(["verify", "nonsense"]) == 2


def test_missing_flag():
    assert main(["visits", "--digits", TAIL3]) == 2


def test_resource_cap():
    assert main(["blocks", "--digits", TAIL3, "--levels", "12", "--cap-block", "100"]) == 3


def test_railways_csv(capsys):
    assert main(["experiment", "railways", "--digits", TAIL3, "--nmax", "1000"]) == 0
    head = capsys.readouterr().out.splitlines()[0]
    assert "ratio1" in head and "ratio2" in head


def test_manifest(tmp_path):
    assert main(["genfun", "--digits", TAIL3, "--levels", "4", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert set(man["artifacts"]) == {"genfun.csv"}
    assert man["status"] == 0 and "numpy" in man["versions"]
    assert man["config"]["levels"] == 4


def test_simulate_byte_identical(tmp_path):
    args = ["experiment", "simulate", "--digits", TAIL3, "--levels", "6", "--trials", "30000",
            "--seed", "42", "--exact"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    a, b = artifacts(tmp_path / "a"), artifacts(tmp_path / "b")
    assert a == b and set(a) == {"simulation.csv", "exact.csv"}
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["artifacts"] == mb["artifacts"] and ma["config_sha256"] == mb["config_sha256"]


def test_simulate_from_corpus(tmp_path):
    main(["rat", "--digits", TAIL3, "--levels", "3", "--out", str(tmp_path / "r")])
    rats = tmp_path / "r" / "rats.json"
    assert main(["experiment", "simulate", "--rats", str(rats), "--trials", "1000", "--seed", "1"]) == 0


def test_visits_resume(tmp_path):
    main(["visits", "--digits", TAIL3, "--levels", "4", "--out", str(tmp_path / "a")])
    ck = tmp_path / "a" / "checkpoint.json"
    main(["visits", "--digits", TAIL3, "--levels", "9", "--resume", str(ck), "--out", str(tmp_path / "b")])
    resumed = (tmp_path / "b" / "checkpoint.json").read_text().strip()
    assert resumed == frame_at(DigitSequence((), (3,)), 9).to_json()


def test_rat_classify(capsys):
    assert main(["rat", "classify", "--digits", TAIL3, "--levels", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6 and lines[0].startswith("k,coefficient,parity")


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "skewrat.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
