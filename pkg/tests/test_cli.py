"""CLI exit codes, report formats, determinism plumbing."""

import re

import pytest

from qtmlab.cli import EXIT_BOUND, EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, check_line, fmt, main
from qtmlab.machines import corpus_path

ID1 = str(corpus_path("id1.qtm"))
BAD1 = "tests/data/bad1.qtm"


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out.splitlines(), captured.err


def test_fmt_and_check_line():
    assert fmt(2) == "2"
    assert fmt(0.5) == "0.5"
    assert fmt(1 / 3) == "0.333333333333"
    assert check_line("x", True, 1, 2) == "CHECK x PASS 1 2"
    assert check_line("x", False, 0.25, 0.125) == "CHECK x FAIL 0.25 0.125"


def test_validate_ok(capsys):
    code, out, _ = run_cli(capsys, "validate", "--machine", ID1)
    assert code == EXIT_OK
    assert "machine id1" in out
    assert "backend exact" in out
    assert "exact-defect 0" in out
    assert any(l.startswith("CHECK wellformed PASS") for l in out)


def test_validate_bound_violation_exit4(capsys):
    code, out, _ = run_cli(capsys, "validate", "--machine", BAD1)
    assert code == EXIT_BOUND
    assert any(l.startswith("CHECK wellformed FAIL 1") for l in out)


def test_missing_file_exit3(capsys):
    code, _, err = run_cli(capsys, "validate", "--machine", "no/such/file.qtm")
    assert code == EXIT_VALIDATION
    assert "error" in err


def test_machine_syntax_error_exit2(capsys, tmp_path):
    f = tmp_path / "junk.qtm"
    f.write_text("this is not a machine\n")
    code, _, err = run_cli(capsys, "validate", "--machine", str(f))
    assert code == EXIT_PARSE
    assert "parse error" in err


def test_unknown_flag_exit2(capsys):
    assert main(["validate", "--machine", ID1, "--nope"]) == EXIT_PARSE
    capsys.readouterr()


def test_missing_rule_exit3(capsys):
    code, _, err = run_cli(capsys, "validate", "--machine", "tests/data/missing1.qtm")
    assert code == EXIT_VALIDATION
    assert "no rule" in err


def test_evolve_report(capsys):
    code, out, _ = run_cli(capsys, "evolve", "--machine", ID1, "--input", "01")
    assert code == EXIT_OK
    assert "weight 0 0" in out
    assert "weight 1 1" in out
    assert "halted 1" in out
    assert "output 01 1" in out


def test_evolve_empty_input_dash(capsys):
    code, out, _ = run_cli(capsys, "evolve", "--machine", ID1, "--input", "-")
    assert code == EXIT_OK
    assert "input -" in out
    assert "output - 1" in out


def test_evolve_rejects_nonbinary_input(capsys):
    code, _, err = run_cli(capsys, "evolve", "--machine", ID1, "--input", "0x1")
    assert code == EXIT_VALIDATION
    assert "bit string" in err


def test_evolve_nonhalting_diagnostic(capsys):
    code, out, _ = run_cli(
        capsys, "evolve", "--machine", str(corpus_path("nohalt1.qtm")), "--input", "0"
    )
    assert code == EXIT_OK
    assert "halted no" in out
    assert any("slides through" in l for l in out)


def test_halting_spaces_report(capsys):
    code, out, _ = run_cli(
        capsys,
        "halting-spaces",
        "--machine",
        str(corpus_path("branch1.qtm")),
        "--k",
        "2",
    )
    assert code == EXIT_OK
    assert "space t 3 rank 2" in out
    assert "space t 9 rank 1" in out
    assert "space t 13 rank 1" in out
    assert any(l.startswith("CHECK orthogonality PASS") for l in out)
    assert any(l.startswith("CHECK trace-sum PASS 4 4") for l in out)


def test_tmax_spellings_agree(capsys):
    args = ["halting-spaces", "--machine", ID1, "--k", "1"]
    code1, out1, _ = run_cli(capsys, *args, "--tmax", "8")
    code2, out2, _ = run_cli(capsys, *args, "--t-max", "8")
    assert code1 == code2 == EXIT_OK
    assert out1 == out2
    assert "t-max 8" in out1


def test_approx_without_cert(capsys):
    code, out, _ = run_cli(
        capsys, "approx", "--machine", ID1, "--k", "1", "--t", "2", "--delta", "1/8"
    )
    assert code == EXIT_OK
    assert "delta 1/8" in out
    assert "gamma 1/16" in out
    assert any(l.startswith("precision-bits ") for l in out)
    assert any(l.startswith("CHECK round-defect PASS") for l in out)
    assert not any(l.startswith("samples") for l in out)


def test_approx_with_cert(capsys):
    code, out, _ = run_cli(
        capsys,
        "approx",
        "--machine",
        str(corpus_path("mz1.qtm")),
        "--k",
        "1",
        "--t",
        "2",
        "--delta",
        "1/8",
        "--window",
        "4",
        "--cert",
        "--samples",
        "5",
    )
    assert code == EXIT_OK
    assert "samples 7" in out  # 5 random + 2 classical basis
    assert any(l.startswith("CHECK per-step PASS") for l in out)
    assert any(l.startswith("CHECK final PASS") for l in out)


def test_coverage_rows(capsys):
    code, out, _ = run_cli(capsys, "coverage", "--machine", ID1, "--k", "1")
    assert code == EXIT_OK
    assert "order lexicographic (t, ell, y)" in out
    rows = [l for l in out if l.startswith("row ")]
    assert len(rows) == 2
    assert re.fullmatch(r"row 1 1 0 (1|0\.99\d+)", rows[0])
    assert re.fullmatch(r"row 1 1 1 (1|0\.99\d+)", rows[1])
    assert any(l.startswith("CHECK rows PASS 2 4") for l in out)
    assert any(l.startswith("CHECK trace-sum PASS") for l in out)


def test_decode_prints_only_the_string(capsys):
    code, out, _ = run_cli(capsys, "decode", "--machine", ID1, "--k", "1", "--b", "1")
    assert code == EXIT_OK
    assert out == ["0"]
    code, out, _ = run_cli(capsys, "decode", "--machine", ID1, "--k", "1", "--b", "2")
    assert out == ["1"]


def test_decode_out_of_range_exit3(capsys):
    code, _, err = run_cli(capsys, "decode", "--machine", ID1, "--k", "1", "--b", "9")
    assert code == EXIT_VALIDATION
    assert "out of range" in err


def test_complexity_report(capsys):
    code, out, _ = run_cli(
        capsys,
        "complexity",
        "--x",
        "0000",
        "--classical",
        str(corpus_path("rm_plain1.tm")),
        "--quantum",
        str(corpus_path("copy1.qtm")),
        "--dict",
        "basic",
    )
    assert code == EXIT_OK
    assert "x 0000" in out
    assert "C 3" in out
    assert "Hbvl 4" in out
    assert "witness basis:0000" in out
    assert "gap 1" in out
    assert "hbvl-eps 1/1 0" in out  # eps = 1 accepts the empty program
    assert "hbvl-eps 1/4 4" in out


def test_gap_report(capsys):
    code, out, _ = run_cli(
        capsys,
        "gap",
        "--corpus",
        str(corpus_path("corpus4.txt")),
        "--classical",
        str(corpus_path("rm_plain1.tm")),
        "--quantum",
        str(corpus_path("copy1.qtm")),
    )
    assert code == EXIT_OK
    assert "corpus 31" in out
    assert "x - C 0 Hbvl 0 gap 0" in out
    assert "max-gap 1" in out
    assert "c-sim 1" in out
    assert not any(l.startswith("warning") for l in out)


def test_nu_report_golden(capsys):
    code, out, _ = run_cli(
        capsys,
        "nu",
        "--mix",
        str(corpus_path("mix1.txt")),
        "--check-domination",
        "--m-len",
        "4",
    )
    assert code == EXIT_OK
    assert "programs 3" in out
    assert "steps all" in out
    assert "program diag-m weight 1/2 terms 31" in out
    assert "trace 0.646484375" in out
    assert any(l.startswith("CHECK diag-semimeasure PASS") for l in out)
    assert "dominated diag-m yes ml-lower-bound 1/2 tail 0" in out
    assert "dominated geo-plus yes ml-lower-bound 1/4 tail 0" in out
    assert "c1 0.5 witness -" in out
    assert "c2 1.13 witness 1" in out


def test_nu_steps_zero_is_not_all(capsys):
    code, out, _ = run_cli(
        capsys, "nu", "--mix", str(corpus_path("mix1.txt")), "--steps", "0"
    )
    assert code == EXIT_OK
    assert "steps 0" in out
    assert "trace 0" in out


def test_nu_parse_error_exit2(capsys, tmp_path):
    f = tmp_path / "bad.mix"
    f.write_text("program a\nterm 1/2 0 2 0\n")
    code, _, err = run_cli(capsys, "nu", "--mix", str(f))
    assert code == EXIT_PARSE
    assert "parse error" in err


def test_threads_flag_before_and_after_subcommand(capsys, monkeypatch):
    monkeypatch.delenv("QTM_THREADS", raising=False)
    assert main(["--threads", "1", "validate", "--machine", ID1]) == EXIT_OK
    assert main(["validate", "--threads", "1", "--machine", ID1]) == EXIT_OK
    capsys.readouterr()
    import os

    main(["validate", "--machine", ID1, "--threads=3"])
    capsys.readouterr()
    assert os.environ["OMP_NUM_THREADS"] == "3"
    main(["validate", "--machine", ID1, "--threads", "1"])
    capsys.readouterr()
    assert os.environ["OMP_NUM_THREADS"] == "1"


def test_bundle_writes_manifest(capsys, tmp_path):
    out1 = tmp_path / "b1"
    out2 = tmp_path / "b2"
    code, lines, _ = run_cli(
        capsys, "bundle", "--out", str(out1), "--samples", "2", "--seed", "7"
    )
    assert code == EXIT_OK
    assert f"bundle {out1}" in lines
    assert "stages 28" in lines
    assert "status complete" in lines
    manifest = (out1 / "MANIFEST").read_text().splitlines()
    file_lines = [l for l in manifest if l.startswith("file ")]
    assert len(file_lines) == 28
    assert all(re.fullmatch(r"file \S+\.txt sha256 [0-9a-f]{64}", l) for l in file_lines)
    for l in file_lines:
        assert (out1 / l.split()[1]).exists()
    # same arguments, second directory: identical bytes stage by stage
    code, _, _ = run_cli(
        capsys, "bundle", "--out", str(out2), "--samples", "2", "--seed", "7"
    )
    assert code == EXIT_OK
    assert (out1 / "MANIFEST").read_bytes() == (out2 / "MANIFEST").read_bytes()
    for l in file_lines:
        name = l.split()[1]
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
