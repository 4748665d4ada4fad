import json

import pytest
import scipy.io
from click.testing import CliRunner

from monotone_elliptic.cli import build_problem_config, load_config, main, matrix_hash
from monotone_elliptic.problems import build_system


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def ex72(**over):
    cfg = {"schema_version": 1, "problem": "example72", "grid": {"level": 3}}
    cfg.update(over)
    return cfg


TRI = {
    "schema_version": 1,
    "domain": {"lower": [0.0, 0.0], "upper": [1.0, 0.5]},
    "grid": {"level": 2},
    "coefficients": {"builtin": "identity"},
}


@pytest.fixture
def runner():
    return CliRunner()


def test_check_admissible(runner, tmp_path):
    res = runner.invoke(main, ["check", "--config", write_cfg(tmp_path, ex72())])
    assert res.exit_code == 0
    rep = json.loads(res.output)
    assert rep["admissible"] and rep["omega"] == pytest.approx(1 / 3)


def test_check_inadmissible(runner, tmp_path):
    cfg = ex72(scheme={"region_strides": {"D0": [1, 3]}})
    res = runner.invoke(main, ["check", "--config", write_cfg(tmp_path, cfg)])
    assert res.exit_code == 1
    assert not json.loads(res.output)["admissible"]


def test_check_identity(runner, tmp_path):
    res = runner.invoke(main, ["check", "--config", write_cfg(tmp_path, TRI)])
    assert res.exit_code == 0
    assert json.loads(res.output)["omega"] == pytest.approx(1.0)


def test_parse_errors(runner, tmp_path):
    bad = write_cfg(tmp_path, ex72(grdi={"level": 3}))
    res = runner.invoke(main, ["check", "--config", bad])
    assert res.exit_code == 2 and "grdi" in res.output
    p = tmp_path / "broken.json"
    p.write_text('{"schema_version": 1,\n "problem": }')
    res = runner.invoke(main, ["check", "--config", str(p)])
    assert res.exit_code == 2 and "broken.json:2:13" in res.output


def test_solve_writes_outputs(runner, tmp_path):
    out = tmp_path / "run"
    res = runner.invoke(main, ["solve", "--config", write_cfg(tmp_path, ex72()), "--out", str(out), "--threads", "1"])
    assert res.exit_code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["certificate"]["compartmental"]
    assert rep["solver"]["converged"]
    assert rep["errors"]["eps1"] < 0.1
    assert (out / "solution.csv").read_text().startswith("k1,k2,x1,x2,value")


def test_solve_inadmissible_hard_fails(runner, tmp_path):
    cfg = ex72(scheme={"region_strides": {"D0": [1, 3]}})
    res = runner.invoke(main, ["solve", "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert res.exit_code == 1


def test_solve_nonconvergence(runner, tmp_path):
    cfg = ex72(solver={"max_iters": 2})
    res = runner.invoke(main, ["solve", "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert res.exit_code == 3


def test_export_tri_fixture_deterministic(runner, tmp_path):
    cfgp = write_cfg(tmp_path, TRI)
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        res = runner.invoke(main, ["export-matrix", "--config", cfgp, "--out", str(out)])
        assert res.exit_code == 0
        blobs.append(((out / "matrix.mtx").read_bytes(), (out / "index.csv").read_bytes()))
    assert blobs[0] == blobs[1]
    m = scipy.io.mmread(str(tmp_path / "a" / "matrix.mtx"))
    assert m.shape == (3, 3) and m.nnz == 7


def test_export_example72_symmetric(tmp_path):
    pc = build_problem_config(load_config(write_cfg(tmp_path, ex72())))
    m = build_system(pc.problem(), pc.spec).restricted.matrix
    assert abs(m - m.T).max() <= 1e-12 * abs(m).max()


def test_dump_config_round_trip(runner, tmp_path):
    src = write_cfg(tmp_path, ex72())
    dumped = tmp_path / "norm.json"
    res = runner.invoke(main, ["dump-config", "--config", src, "--output", str(dumped)])
    assert res.exit_code == 0
    hashes = []
    for p in (src, str(dumped)):
        pc = build_problem_config(load_config(p))
        hashes.append(matrix_hash(build_system(pc.problem(), pc.spec).restricted.matrix))
    assert hashes[0] == hashes[1]
    assert load_config(str(dumped)) == load_config(src)


def test_convergence_single_row(runner, tmp_path):
    cfg = {"schema_version": 1, "problem": "sine"}
    out = tmp_path / "conv"
    res = runner.invoke(main, ["convergence", "--config", write_cfg(tmp_path, cfg), "--levels", "3", "--out", str(out)])
    assert res.exit_code == 0
    text = (out / "convergence.csv").read_bytes().decode()
    lines = text.split("\r\n")
    assert lines[0].startswith("level,h,eps1") and lines[1].startswith("3,") and lines[2] == ""
