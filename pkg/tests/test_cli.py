import subprocess
import sys

import pytest

from palette_mpc.cli import main
from palette_mpc.graph import parse_coloring, read_instance
from palette_mpc.report import parse_report, strip_wall_clock, summarize


@pytest.fixture
def triangle(tmp_path):
    path = tmp_path / "tri.edges"
    path.write_text("0 1\n1 2\n0 2\n")
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestRun:
    def test_triangle(self, triangle, tmp_path, capsys):
        out, rep = tmp_path / "tri.col", tmp_path / "tri.rep"
        assert run("run", triangle, "--out", out, "--report", rep) == 0
        assert "verdict: valid" in capsys.readouterr().out
        col = parse_coloring(out.read_text())
        assert sorted(col) == [0, 1, 2] and len(set(col.values())) == 3
        assert run("verify", triangle, out) == 0
        assert parse_report(rep.read_text())["run"]["verdict"] == "valid"

    def test_malformed_edges(self, tmp_path, capsys):
        bad = tmp_path / "bad.edges"
        bad.write_text("0 1\nzero two\n")
        assert run("run", bad) == 2
        assert "error" in capsys.readouterr().err

    def test_bad_config_value(self, triangle):
        assert run("run", triangle, "--delta", "2") == 2

    def test_missing_file(self, tmp_path):
        assert run("run", tmp_path / "nope.edges") == 2

    def test_reports_identical_modulo_wall_clock(self, tmp_path):
        prefix = tmp_path / "g"
        assert run("generate", "planted", "--out", prefix, "--k", 8, "--count", 3, "--noise", 0.02, "--seed", 4) == 0
        texts = []
        for i in range(2):
            rep = tmp_path / f"r{i}.rep"
            assert run("run", f"{prefix}.edges", "--palettes", f"{prefix}.pal", "--report", rep) == 0
            texts.append(strip_wall_clock(rep.read_text()))
        assert texts[0] == texts[1]

    def test_entropy_seed_ignored_when_derandomized(self, triangle, tmp_path):
        reps = []
        for seed in (1, 2):
            rep = tmp_path / f"e{seed}.rep"
            run("run", triangle, "--entropy-seed", seed, "--report", rep)
            reps.append(strip_wall_clock(rep.read_text()))
        assert reps[0] == reps[1]

    def test_config_file_and_no_partition(self, triangle, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# overrides\nmode = randomized\nentropy_seed = 5\n")
        rep = tmp_path / "r.rep"
        assert run("run", triangle, "--config", cfg, "--no-partition", "--report", rep) == 0
        conf = parse_report(rep.read_text())["config"]
        assert conf["mode"] == "randomized" and conf["entropy_seed"] == "5" and conf["partition"] == "false"


class TestGenerate:
    def test_reproducible(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for prefix in (a, b):
            assert run("generate", "gnp", "--n", 100, "--p", 0.1, "--seed", 1, "--out", prefix) == 0
        assert (tmp_path / "a.edges").read_bytes() == (tmp_path / "b.edges").read_bytes()
        assert (tmp_path / "a.pal").read_bytes() == (tmp_path / "b.pal").read_bytes()

    def test_planted_blocks(self, tmp_path):
        prefix = tmp_path / "p"
        assert run("generate", "planted", "--k", 8, "--count", 4, "--out", prefix) == 0
        inst = read_instance(f"{prefix}.edges", f"{prefix}.pal")
        assert inst.n == 32 and inst.graph.m == 4 * 28
        assert inst.graph.degrees.tolist() == [7] * 32

    @pytest.mark.parametrize(
        "args",
        [
            ("gnp", "--n", 50, "--avg-degree", 5, "--palettes", "random", "--extra", 2),
            ("hypercube", "--dim", 5),
            ("star-forest", "--stars", 3, "--leaves", 6),
            ("planted", "--k", 10, "--count", 3, "--noise", 0.1),
        ],
    )
    def test_outputs_load(self, tmp_path, args):
        prefix = tmp_path / "x"
        assert run("generate", *args, "--out", prefix) == 0
        inst = read_instance(f"{prefix}.edges", f"{prefix}.pal")
        assert (inst.palette_sizes > inst.graph.degrees).all()

    def test_gnp_needs_density(self, tmp_path):
        assert run("generate", "gnp", "--out", tmp_path / "g") == 2


class TestVerify:
    def test_cases(self, triangle, tmp_path, capsys):
        col = tmp_path / "c"
        col.write_text("0: 0\n1: 1\n2: 2\n")
        assert run("verify", triangle, col) == 0
        col.write_text("0: 0\n1: 1\n2: 7\n")
        assert run("verify", triangle, col) == 1
        assert "2" in capsys.readouterr().out
        col.write_text("0: 0\n1: 1\n")
        assert run("verify", triangle, col) == 1
        assert "Uncolored" in capsys.readouterr().out
        col.write_text("0: 0\n1: 0\n2: 1\n")
        assert run("verify", triangle, col) == 1
        col.write_text("0 - 1\n")
        assert run("verify", triangle, col) == 2


class TestReport:
    def test_summary_consistent(self, tmp_path, capsys):
        prefix = tmp_path / "h"
        run("generate", "hypercube", "--dim", 6, "--out", prefix)
        rep = tmp_path / "h.rep"
        assert run("run", f"{prefix}.edges", "--report", rep) == 0
        capsys.readouterr()
        assert run("report", rep) == 0
        text = capsys.readouterr().out
        assert "rounds fallback" in text and "(consistent)" in text
        summary, ok = summarize(rep.read_text())
        assert ok and "MISMATCH" not in summary

    def test_empty_report_zeros(self, tmp_path, capsys):
        rep = tmp_path / "empty.rep"
        rep.write_text("")
        assert run("report", rep) == 0
        out = capsys.readouterr().out
        assert "rounds total       0" in out and "(consistent)" in out

    def test_missing_report(self, tmp_path):
        assert run("report", tmp_path / "none") == 2


def test_module_entry_point(triangle):
    proc = subprocess.run([sys.executable, "-m", "palette_mpc", "run", str(triangle)], capture_output=True, text=True)
    assert proc.returncode == 0 and "valid" in proc.stdout
