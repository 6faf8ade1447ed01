import json
import subprocess
import sys

import pytest

from eu_kit.cli import RunConfig, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, [json.loads(line) for line in out.out.splitlines() if line.strip()], out.err


def test_check_log_additive_passes(capsys):
    code, recs, _ = run(capsys, "check", "--family", "log-additive", "--C", "1", "--S", "2",
                        "--weights", "0.5,0.5", "--seed", "7")
    assert code == 0
    assert recs[0]["record"] == "header" and recs[0]["config"]["seed"] == 7
    assert all(r["schema_version"] == 1 for r in recs)
    assert len(recs) == 9


def test_check_sqrt_additive_fails(capsys):
    code, recs, _ = run(capsys, "check", "--family", "sqrt-additive", "--C", "1", "--S", "2")
    assert code == 2
    assert any(r.get("property") == "boundary_divergence" and r["verdict"] == "fail" for r in recs)


def test_bad_weights_exit_64(capsys):
    code, _, err = run(capsys, "check", "--weights", "0.5,0.6")
    assert code == 64
    assert "weights" in err


@pytest.mark.parametrize("argv,field", [
    (["check", "--family", "nope"], "family"),
    (["check", "--family", "crra", "--params", "1"], "params"),
    (["check", "--S", "3", "--weights", "0.5,0.5"], "weights"),
    (["check", "--samples", "0"], "samples"),
    (["check", "--expr", "x +"], "expr"),
    (["search-qc", "--family", "crra", "--params", "-1"], "params"),
    (["search-qc", "--family", "blend", "--params", "1"], "params"),
])
def test_malformed_config_names_field(capsys, argv, field):
    code, _, err = run(capsys, *argv)
    assert code == 64
    assert field in err


def test_argparse_errors_exit_64(capsys):
    with pytest.raises(SystemExit) as info:
        main(["check", "--samples", "many"])
    assert info.value.code == 64


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"family": "crra", "params": [3.0], "states": 3, "seed": 4}))
    code, recs, _ = run(capsys, "check", "--config", str(cfg), "--seed", "9")
    assert code == 0
    assert recs[0]["config"]["family"] == "crra"
    assert recs[0]["config"]["params"] == [3.0]
    assert recs[0]["config"]["seed"] == 9


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"colour": "blue"}))
    code, _, err = run(capsys, "check", "--config", str(cfg))
    assert code == 64 and "colour" in err


def test_config_roundtrip():
    cfg = RunConfig(commodities=2, states=3, weights=[0.2, 0.3, 0.5], family="crra", params=[2.0], seed=2**63)
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_expression_check_carries_caveat(capsys):
    code, recs, _ = run(capsys, "check", "--expr", "ln(x) + ln(y)", "--S", "2", "--samples", "8")
    assert code == 0
    assert "finite-difference" in recs[0]["caveat"]


def test_verify_theorem_single_cell_with_oracle(capsys, tmp_path):
    out = tmp_path / "v.jsonl"
    code = main(["verify-theorem", "--C", "1", "--S", "2", "--brute-force", "--resolution", "10", "--out", str(out)])
    assert code == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["record"] for r in recs] == ["header", "equivalence", "brute-force", "summary"]
    assert recs[2]["agree"] is True
    assert "agrees" in capsys.readouterr().out


def test_verify_theorem_fault_injection_exit_1(capsys):
    code, recs, _ = run(capsys, "verify-theorem", "--inject-sign-flip")
    assert code == 1
    assert recs[-1]["consistent"] is False


def test_search_qc_default_exit_0(capsys):
    code, recs, _ = run(capsys, "search-qc", "--budget", "2000")
    assert code == 0
    summary = recs[-1]
    assert summary["record"] == "search-summary"
    assert summary["evaluations"] <= 2000


def test_search_qc_candidates_reverify(capsys):
    code, recs, _ = run(capsys, "search-qc", "--family", "cobb-douglas", "--params", "1,2", "--S", "2")
    assert code == 0
    cands = [r for r in recs if r["record"] == "candidate"]
    assert cands
    for c in cands:
        a, b = float(c["curvature_value"]), float(c["dense_curvature"])
        assert abs(a - b) <= 1e-8 * abs(a)


def test_bench_small(capsys, tmp_path):
    out = tmp_path / "b.jsonl"
    code = main(["bench", "--bench-states", "2,4", "--bench-commodities", "1", "--repetitions", "1",
                 "--out", str(out)])
    assert code == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert all(r["decisions_agree"] for r in recs if r["record"] == "bench")
    assert "structured" in capsys.readouterr().out


def test_threads_env_fallback(capsys, monkeypatch):
    monkeypatch.setenv("EU_KIT_THREADS", "zero")
    code, _, err = run(capsys, "check")
    assert code == 64 and "threads" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "eu_kit", "check", "--samples", "4", "--family", "crra"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout.splitlines()[0])["record"] == "header"
