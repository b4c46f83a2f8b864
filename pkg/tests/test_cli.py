import json
import subprocess
import sys

import numpy as np
import pytest

from qplane.cli import RunConfig, load_config_file, main
from qplane.opkernel import read_matrix_market


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def records(path):
    return [json.loads(line) for line in open(path)]


def test_normalize(capsys):
    assert run(["normalize", "z2*z1", "--n", "2"], capsys)[:2] == (0, "q*z1*z2\n")
    assert run(["normalize", "z1*z1#", "--n", "2"], capsys)[1] == "q^2*z1#*z1 - (1-q^2)*z2#*z2\n"
    code, _, err = run(["normalize", "z1*(z2", "--n", "2"], capsys)
    assert code == 2 and "position 6" in err


def test_verify_default_passes(tmp_path, capsys):
    out = tmp_path / "r.jsonl"
    code, _, err = run(["verify", "--out", str(out)], capsys)
    assert code == 0 and "PASS" in err
    recs = records(out)
    assert recs[0]["schema"] == "qplane.report/1"
    assert recs[0]["config"]["q"] == "1/2" and recs[0]["config"]["N"] == 8
    body = [r for r in recs[1:-1]]
    assert {r["suite"] for r in body} == {"algebra", "rep", "symbol"}
    assert all(r["passed"] for r in body)
    assert max(r["residual"] for r in body if r["suite"] != "algebra") <= 1e-10
    assert recs[-1] == {"summary": True, "checks": len(body), "failures": 0, "passed": True}


def test_verify_without_margin_fails(tmp_path, capsys):
    out = tmp_path / "r.jsonl"
    code, _, _ = run(["verify", "--d", "0", "--suites", "rep", "--out", str(out)], capsys)
    assert code == 1
    failed = [r for r in records(out)[1:-1] if not r["passed"]]
    assert failed and all(r["suite"] == "rep" for r in failed)
    assert max(r["residual"] for r in failed) > 0.1


def test_verify_n1(capsys):
    code, out, _ = run(["verify", "--n", "1"], capsys)
    assert code == 0
    names = {json.loads(line).get("name") for line in out.splitlines()[1:-1]}
    assert "R2[z1z1#]" in names
    assert not any(n.startswith("R1") or n.startswith("w[") for n in names)


def test_verify_is_byte_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run(["verify", "--seed", "11", "--out", str(a)], capsys)
    run(["verify", "--seed", "11", "--out", str(b)], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# demo\nn = 1\nq = 1/3\nsamples = 0.5, 1\nsuites = algebra\n")
    assert load_config_file(cfg)["samples"] == (0.5, 1.0)
    code, out, _ = run(["verify", "--config", str(cfg), "--q", "2/5"], capsys)
    assert code == 0
    head = json.loads(out.splitlines()[0])["config"]
    assert head["n"] == 1 and head["q"] == "2/5" and head["suites"] == ["algebra"]


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "--q", "3/2"],
        ["verify", "--q", "abc"],
        ["verify", "--samples", "0.1"],
        ["verify", "--suites", "nope"],
        ["verify", "--sweep", "8,4"],
        ["verify", "--N", "3", "--d", "3"],
        ["frobnicate"],
    ],
)
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as info:
        raise SystemExit(main(argv))
    assert info.value.code == 2


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert run(["verify", "--config", str(cfg)], capsys)[0] == 2


def test_io_error(tmp_path, capsys):
    assert run(["verify", "--suites", "algebra", "--out", str(tmp_path / "no" / "x.jsonl")], capsys)[0] == 3
    assert run(["verify", "--config", str(tmp_path / "missing.cfg")], capsys)[0] == 3


def test_export_round_trip(tmp_path, capsys):
    code, out, _ = run(
        ["export", "z1", "--n", "1", "--M", "2", "--samples", "1", "--k", "1", "--outdir", str(tmp_path)], capsys
    )
    assert code == 0
    path = out.strip()
    assert path.endswith("z1_k1.mtx")
    A = read_matrix_market(path)
    assert A.shape == (5, 5)
    from qplane.qrep import MeasureSpec, TruncationSpec, build_component_lattice

    ref = build_component_lattice(1, TruncationSpec(1, 0.5, 8, 2, 1), MeasureSpec((1.0,))).z(1)
    assert A.entries == ref.entries


def test_export_Q_is_diagonal(tmp_path, capsys):
    code, out, _ = run(["export", "Q1", "--outdir", str(tmp_path)], capsys)
    assert code == 0
    paths = out.split()
    assert [p.rsplit("/", 1)[1] for p in paths] == ["Q1_k0.mtx", "Q1_k1.mtx", "Q1_k2.mtx"]
    for p in paths:
        assert read_matrix_market(p).is_diagonal()


def test_export_errors(tmp_path, capsys):
    assert run(["export", "x1", "--outdir", str(tmp_path)], capsys)[0] == 2
    assert run(["export", "z3", "--outdir", str(tmp_path)], capsys)[0] == 2
    assert run(["export", "w1", "--k", "1", "--outdir", str(tmp_path)], capsys)[0] == 2
    assert run(["export", "gen:a", "--outdir", str(tmp_path)], capsys)[0] == 2


def test_export_w_skips_undefined_components(tmp_path, capsys):
    code, out, _ = run(["export", "w1", "--outdir", str(tmp_path)], capsys)
    assert code == 0 and [p.rsplit("/", 1)[1] for p in out.split()] == ["w1_k2.mtx"]


def test_export_generator(tmp_path, capsys):
    terms = tmp_path / "t.txt"
    terms.write_text("sh: l=1,0; f=r1*exp(-(r1+r2))\n")
    code, out, _ = run(["export", "gen:sh", "--terms", str(terms), "--outdir", str(tmp_path)], capsys)
    assert code == 0 and len(out.split()) == 3


def test_norm_command(tmp_path, capsys):
    terms = tmp_path / "t.txt"
    terms.write_text("bump: l=0,0; f=r2*exp(-r2)\n")
    code, out, _ = run(["norm", "--terms", str(terms), "--sweep", "4,6"], capsys)
    assert code == 0
    recs = [json.loads(line) for line in out.splitlines()[1:]]
    sup = [r for r in recs if r["k"] == "sup"]
    assert [r["truncation"] for r in sup] == [[4, 4], [6, 6]]
    assert all(r["norm_lb"] == pytest.approx(np.exp(-1), rel=1e-15) for r in sup)
    assert set(recs[0]) == {"term_id", "k", "norm_lb", "truncation"}


def test_norm_rejects_vanishing_violation(tmp_path, capsys):
    terms = tmp_path / "t.txt"
    terms.write_text("bad: l=1,0; f=exp(-r2)\n")
    code, _, err = run(["norm", "--terms", str(terms)], capsys)
    assert code == 2 and "bad" in err


def test_separate_and_confluence(capsys):
    code, out, _ = run(["separate", "--n", "2", "--pairs", "100", "--zero-pairs", "10"], capsys)
    assert code == 0 and json.loads(out.splitlines()[-1])["passed"]
    code, out, _ = run(["confluence", "--n", "2", "--max-len", "3"], capsys)
    assert code == 0
    rec = json.loads(out.splitlines()[1])
    assert rec["exhaustive"] and rec["divergent"] == [] and rec["words_checked"] == 85


def test_rep_build(capsys):
    code, out, _ = run(["rep-build", "--n", "2", "--N", "4", "--M", "3"], capsys)
    assert code == 0
    recs = [json.loads(line) for line in out.splitlines()[1:]]
    assert [r["dim"] for r in recs] == [1, 3 * 7, 3 * 4 * 7]


def test_runconfig_defaults():
    cfg = RunConfig().validate()
    assert (cfg.n, cfg.q_value, cfg.N, cfg.M, cfg.d, cfg.tol) == (2, 0.5, 8, 8, 3, 1e-10)
    assert cfg.sweep == (4, 6, 8, 10)


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "qplane.cli", "normalize", "z2*z1", "--n", "2"], capture_output=True, text=True
    )
    assert res.returncode == 0 and res.stdout.strip() == "q*z1*z2"
