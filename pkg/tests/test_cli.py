import json
import re

import pytest

from jointmc.cli import main
from jointmc.graph import load_graph, load_solution


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--seed", "2", "--out", str(root / "scene")]) == 0
    return root


def inputs(root):
    s = root / "scene"
    return [
        "--trajectories", str(s / "trajectories.txt"),
        "--detections", str(s / "detections.txt"),
        "--templates", str(s / "templates"),
    ]


def test_stepwise_commands(scene, capsys):
    g = scene / "g"
    assert main(["build-graph", *inputs(scene), "--out", str(g)]) == 0
    assert "edges=" in capsys.readouterr().out
    assert main(["solve", "--graph", str(g / "graph.txt"), "--out", str(g / "sol.txt")]) == 0
    line = capsys.readouterr().out.strip()
    assert re.fullmatch(r"objective=\S+ rounds=\d+ moves=\d+", line)
    graph = load_graph((g / "graph.txt").read_text())
    assert len(load_solution((g / "sol.txt").read_text())) == graph.n_nodes

    argv = [
        "track", "--graph", str(g / "graph.txt"), "--nodes", str(g / "nodes.txt"),
        "--solution", str(g / "sol.txt"), *inputs(scene), "--out", str(scene / "t"),
    ]
    assert main(argv) == 0
    capsys.readouterr()
    ev = [
        "evaluate", "--truth", str(scene / "scene" / "truth.txt"),
        "--trajectories", str(scene / "scene" / "trajectories.txt"),
        "--detections", str(scene / "scene" / "detections.txt"),
        "--segmentation", str(scene / "t" / "segmentation.txt"),
        "--tracks", str(scene / "t" / "tracks.txt"),
    ]
    assert main(ev) == 0
    header, values = capsys.readouterr().out.splitlines()
    assert header.startswith("P\tR\tF\tO\tRcll")
    assert main([*ev, "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert dict(zip(header.split("\t"), values.split("\t")))["IDs"] == str(doc["IDs"])


def test_run_matches_stepwise(scene, capsys):
    assert main(["run", *inputs(scene), "--out", str(scene / "r")]) == 0
    capsys.readouterr()
    assert (scene / "r" / "solution.txt").read_text() == (scene / "g" / "sol.txt").read_text()
    assert (scene / "r" / "tracks.txt").read_text() == (scene / "t" / "tracks.txt").read_text()


def test_run_from_seed_with_ablation_and_config(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("hl_weight = 2\n")
    argv = ["run", "--seed", "1", "--ablation", "no-high", "--config", str(cfg), "--out", str(tmp_path / "o")]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "tracks=0" in out
    assert (tmp_path / "o" / "metrics.tsv").is_file()


def test_missing_file_exit_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.txt"
    assert main(["solve", "--graph", str(missing), "--out", str(tmp_path / "s")]) == 1
    assert str(missing) in capsys.readouterr().err


def test_malformed_graph_exit(tmp_path, capsys):
    bad = tmp_path / "g.txt"
    bad.write_text("jtms-graph 1\nn 0 2\ne 0 0 LL 1.0\n")
    assert main(["solve", "--graph", str(bad), "--out", str(tmp_path / "s")]) == 1
    assert "self-loop" in capsys.readouterr().err


def test_exact_guard_exit(scene, capsys):
    argv = ["solve", "--graph", str(scene / "g" / "graph.txt"), "--out", str(scene / "x"), "--exact"]
    assert main(argv) == 1
    assert "limited to 12" in capsys.readouterr().err


def test_small_exact_solve(tmp_path, capsys):
    g = tmp_path / "g.txt"
    g.write_text("jtms-graph 1\nn 0 3\ne 0 1 LL -3.0\ne 0 2 LL 1.0\ne 1 2 LL 1.0\n")
    assert main(["solve", "--graph", str(g), "--out", str(tmp_path / "s"), "--exact"]) == 0
    assert capsys.readouterr().out.strip() == "objective=-2.0 rounds=0 moves=0"
    assert load_solution((tmp_path / "s").read_text()).labels == (0, 1, 0)


def test_usage_errors_exit_two():
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["run", "--out", "x", "--ablation", "sideways"])


def test_run_requires_inputs(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path)]) == 1
    assert "--seed" in capsys.readouterr().err
