import os
import subprocess
import sys

import pytest

from specpencil.cli import main
from specpencil.mesh import load


def run_cli(*args, env=None):
    full_env = dict(os.environ)
    full_env.update(env or {})
    return subprocess.run([sys.executable, "-m", "specpencil", *args], capture_output=True, text=True, env=full_env)


@pytest.fixture(scope="module")
def mesh_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("mesh") / "v20.vempoly"
    assert main(["mesh", "gen", "--cells", "20", "--seed", "3", "--lloyd", "20", "--out", str(path)]) == 0
    return path


def test_mesh_gen(mesh_file, capsys):
    m = load(mesh_file)
    assert m.n_cells == 20
    out = mesh_file.parent / "again.vempoly"
    main(["mesh", "gen", "--cells", "20", "--seed", "3", "--lloyd", "20", "--out", str(out)])
    assert capsys.readouterr().out.strip() == f"cells=20 vertices={m.n_vertices} edges={m.n_edges}"
    assert out.read_bytes() == mesh_file.read_bytes()


def test_toy_success_and_csv(tmp_path):
    out = tmp_path / "toy.csv"
    assert main(["toy", "--case", "3", "--variant", "disjoint", "--grid", "0:2:0.5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "param,index,value,predicted,classification,max_discrepancy"
    assert len(lines) == 1 + 5 * 6


@pytest.mark.parametrize("argv", [
    ["toy", "--case", "7", "--grid", "0:1:0.5"],
    ["toy", "--case", "1", "--grid", "1:0:0.5"],
    ["sweep", "--mesh", "/nonexistent.vempoly", "--k", "1", "--axis", "alpha", "--fixed", "1", "--grid", "1"],
    ["converge", "--k", "1", "--grids", "4,x"],
    ["nope"],
])
def test_config_errors_exit_1(argv):
    assert main(argv) == 1


def test_bad_thread_env_exit_1(monkeypatch):
    monkeypatch.setenv("SPECPENCIL_THREADS", "zero")
    assert main(["toy", "--case", "1", "--grid", "1"]) == 1


def test_malformed_mesh_exit_1(tmp_path):
    p = tmp_path / "bad.vempoly"
    p.write_text("vempoly 1\nnv 2\n0 0\n")
    assert main(["tables", "--meshes", str(p)]) == 1


def test_sweep_tables_converge(mesh_file, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--mesh", str(mesh_file), "--k", "2", "--axis", "beta", "--fixed", "1",
                 "--grid", "0:1:0.5", "--m", "4", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1 + 3 * 4
    assert main(["tables", "--meshes", str(mesh_file), "--k", "1", "--out", str(tmp_path / "t.csv")]) == 0
    assert main(["converge", "--k", "1", "--grids", "4,8", "--out", str(tmp_path / "c.csv")]) == 0


def test_output_independent_of_thread_count(mesh_file, tmp_path):
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"s{threads}.csv"
        r = run_cli("sweep", "--mesh", str(mesh_file), "--k", "1", "--axis", "alpha", "--fixed", "1",
                    "--grid", "0:2:0.25", "--m", "6", "--out", str(out), env={"SPECPENCIL_THREADS": threads})
        assert r.returncode == 0, r.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
