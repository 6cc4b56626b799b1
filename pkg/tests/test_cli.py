"""Harness subcommands: reports, embedded checks, exit codes, determinism."""

import json
from pathlib import Path

import pytest

from bfexp.cli import main


def _read(path):
    with open(path) as f:
        return json.load(f)


def test_sweep_exp_end_to_end(tmp_path):
    rc = main(["sweep-exp", "--out", str(tmp_path)])
    assert rc == 0
    report = _read(tmp_path / "sweep_exp_report.json")
    assert report["all_passed"]
    assert report["reference_mismatches"] == 0
    assert report["stats"]["mean_rel_err"] <= 0.0016
    assert report["stats"]["max_rel_err"] <= 0.0085
    assert report["stats_without_correction"]["max_rel_err"] \
        > report["stats"]["max_rel_err"]
    lines = (tmp_path / "exp_golden_vectors.txt").read_text().splitlines()
    assert len(lines) == 65536
    assert lines[0] == "0000 3F80"
    csv_head = (tmp_path / "sweep_exp_buckets.csv").read_text().splitlines()[0]
    assert csv_head == "sign,biased_exponent,count,mean_rel_err,max_rel_err"


def test_softmax_eval_end_to_end(tmp_path):
    rc = main(["softmax-eval", "--rows", "300", "--row-len", "64",
               "--seed", "5", "--out", str(tmp_path)])
    assert rc == 0
    report = _read(tmp_path / "softmax_eval_report.json")
    assert report["all_passed"]
    assert report["config"]["rows"] == 300
    wide = report["modes"]["wide"]
    assert wide["mse"] <= 1e-8
    assert wide["argmax_attains_max_rate"] == 1.0
    assert sum(wide["sum_dev_histogram"].values()) == 300


def test_softmax_eval_constant_rows(tmp_path):
    rc = main(["softmax-eval", "--rows", "50", "--row-len", "16",
               "--distribution", "constant", "--out", str(tmp_path)])
    assert rc == 0
    report = _read(tmp_path / "softmax_eval_report.json")
    # uniform rows: the only error is the BF16 quantization of 1/n
    assert report["modes"]["wide"]["max_abs_err"] <= 2.0 ** -7 / 16


def test_attention_eval_end_to_end(tmp_path):
    rc = main(["attention-eval", "--seed", "9", "--out", str(tmp_path)])
    assert rc == 0
    report = _read(tmp_path / "attention_eval_report.json")
    assert report["all_passed"]
    assert report["tiling_max_ulp_diff"] <= 4.0
    assert report["oracle_rel_err"] <= 0.02
    shares = report["modeled_cost_gpt2_head"]
    assert shares["fa-optimized"]["softmax_share"] < 0.10
    assert shares["fa-baseline"]["softmax_share"] > 0.50


def test_cost_report_builtins(tmp_path, capsys):
    rc = main(["cost-report", "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "360/output" in out.replace(" ", "") or "(360/output)" in out
    report = _read(tmp_path / "cost_report.json")
    by_name = {r["schedule"]: r for r in report["reports"]}
    assert by_name["baseline"]["cycles_per_output"] == 360.0
    assert by_name["sw-exp-hw"]["cycles_per_output"] == 2.125
    assert by_name["vfexp-micro"]["cycles_per_output"] == 0.5
    csv = (tmp_path / "cost_report.csv").read_text().splitlines()
    assert len(csv) == 1 + len(report["reports"])


def test_cost_report_schedule_file(tmp_path, capsys):
    sched = tmp_path / "s.ini"
    sched.write_text(
        "[schedule]\nname = mini\n\n[loop.only]\nop.fadd = count=2 issue=3\n")
    rc = main(["cost-report", "--schedule-file", str(sched), "--outputs", "10",
               "--fmt", "csv", "--out", str(tmp_path)])
    assert rc == 0
    assert "mini,10,1,20,60,2.0,6.0" in capsys.readouterr().out


def test_codec_round_trip(capsys):
    assert main(["codec", "encode", "fexp", "1", "2"]) == 0
    assert capsys.readouterr().out.strip() == "3E0100D3"
    assert main(["codec", "encode", "vfexp", "1", "2"]) == 0
    assert capsys.readouterr().out.strip() == "BE0100D3"
    assert main(["codec", "decode", "3E0100D3"]) == 0
    assert capsys.readouterr().out.strip() == "fexp rd=1 rs1=2"
    assert main(["codec", "decode", "0x00000013"]) == 1
    assert main(["codec", "decode", "zz"]) == 2
    assert main(["codec", "encode", "fexp", "99", "0"]) == 2


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"rows": 40, "row_len": 8}')
    rc = main(["softmax-eval", "--rows", "777", "--config", str(cfg),
               "--out", str(tmp_path)])
    assert rc == 0
    report = _read(tmp_path / "softmax_eval_report.json")
    assert report["config"]["rows"] == 40
    assert report["config"]["row_len"] == 8


def test_config_errors_exit_2(tmp_path):
    assert main(["softmax-eval", "--rows", "0", "--out", str(tmp_path)]) == 2
    assert main(["softmax-eval", "--distribution", "zipf",
                 "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"bogus_key": 1}')
    assert main(["softmax-eval", "--config", str(bad),
                 "--out", str(tmp_path)]) == 2
    assert main(["cost-report", "--schedule", "nope",
                 "--out", str(tmp_path)]) == 2
    assert main(["attention-eval", "--tiles", "4,x",
                 "--out", str(tmp_path)]) == 2


def test_output_dir_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("BFEXP_OUTPUT_DIR", str(tmp_path / "envdir"))
    rc = main(["cost-report", "--fmt", "json"])
    assert rc == 0
    assert (tmp_path / "envdir" / "cost_report.json").exists()


@pytest.mark.parametrize("argv", [
    ["softmax-eval", "--rows", "120", "--row-len", "32", "--seed", "77"],
    ["attention-eval", "--seq-len", "16", "--head-dim", "8", "--seed", "77"],
    ["sweep-exp"],
    ["cost-report"],
])
def test_reruns_byte_identical(argv, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    files_a = sorted(p.name for p in a.iterdir())
    assert files_a == sorted(p.name for p in b.iterdir())
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_committed_golden_fixture_matches_regeneration(tmp_path):
    # the fixture is the published contract; sweep-exp must reproduce it
    fixture = Path(__file__).resolve().parent.parent \
        / "fixtures" / "exp_golden_vectors.txt"
    assert main(["sweep-exp", "--out", str(tmp_path)]) == 0
    regen = (tmp_path / "exp_golden_vectors.txt").read_bytes()
    assert regen == fixture.read_bytes()
