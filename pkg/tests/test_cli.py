import json
from pathlib import Path

import pytest

from sensorimotor import __version__
from sensorimotor.cli import main
from sensorimotor.memory import load

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TINY = """seed = 7

[[substages]]
substage = 1
max_episodes = 3
max_steps = 30

[[substages]]
substage = 2
max_episodes = 3
max_steps = 30

[[substages]]
substage = 3
max_episodes = 2
max_steps = 30
"""


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.toml"
    cfg.write_text(TINY)
    return cfg


@pytest.fixture(scope="module")
def chained(tiny):
    out = tiny.parent / "chain"
    assert main(["chain", "--config", str(tiny), "-o", str(out), "--dump-maps"]) == 0
    return out


def test_chain_layout(chained):
    for n in (1, 2, 3):
        assert (chained / "memory" / f"s{n}.pmem").exists()
        assert (chained / "memory" / f"s{n}.csv").exists()
        assert (chained / "logs" / f"s{n}_metrics.csv").exists()
        assert (chained / "logs" / f"s{n}_steps.csv").exists()
        assert (chained / "plots" / f"s{n}_metrics.png").exists()
    assert (chained / "plots" / "chain.png").exists()
    assert load((chained / "memory" / "s3.pmem").read_bytes()).action_count == 17


def test_manifest(chained):
    m = json.loads((chained / "manifest.json").read_text())
    assert m["artifact_version"] == __version__
    assert m["config"]["seed"] == 7 and m["config"]["transfer"] is True
    assert [s["max_episodes"] for s in m["config"]["substages"]] == [3, 3, 2]
    assert "memory/s1.pmem" in m["artifacts"]
    for rel in m["artifacts"]:
        assert (chained / rel).exists()


def test_map_dumps(chained):
    snaps = chained / "snapshots" / "s3"
    # last episode, every cycle: seven maps plus combined and salience, CSV and PNG
    assert (snaps / "ep0001_c0000_color.csv").exists()
    assert (snaps / "ep0001_c0000_salience.png").exists()
    assert (snaps / "ep0001_c0000_winner.csv").exists()
    rows = (snaps / "ep0001_c0000_R.csv").read_text().splitlines()
    assert len(rows) == 16 and all(len(r.split(",")) == 16 for r in rows)
    assert not list(snaps.glob("ep0000_*"))


def test_chain_is_reproducible(tiny, chained):
    again = tiny.parent / "again"
    assert main(["chain", "--config", str(tiny), "-o", str(again), "--dump-maps"]) == 0
    rels = ("manifest.json", "logs/s1_metrics.csv", "logs/s2_steps.csv", "logs/s3_metrics.csv",
            "memory/s1.pmem", "memory/s3.pmem")
    for rel in rels:
        assert (again / rel).read_bytes() == (chained / rel).read_bytes()


def test_no_transfer_starts_from_scratch(tiny, chained):
    out = tiny.parent / "scratch"
    assert main(["chain", "--config", str(tiny), "-o", str(out), "--no-transfer"]) == 0
    assert (out / "logs" / "s1_metrics.csv").read_bytes() == (chained / "logs" / "s1_metrics.csv").read_bytes()
    assert (out / "memory" / "s2.pmem").read_bytes() != (chained / "memory" / "s2.pmem").read_bytes()
    assert json.loads((out / "manifest.json").read_text())["config"]["transfer"] is False


def test_train_with_prior(tiny, chained):
    out = tiny.parent / "train"
    args = ["train", "--config", str(tiny), "--substage", "3", "--memory", str(chained / "memory" / "s2.pmem")]
    assert main(args + ["-o", str(out)]) == 0
    s2 = load((chained / "memory" / "s2.pmem").read_bytes())
    s3 = load((out / "memory" / "s3.pmem").read_bytes())
    assert set(s2.schemas) <= set(s3.schemas)


def test_validate(tiny, chained, capsys):
    out = tiny.parent / "val"
    scenario = tiny.parent / "row.toml"
    scenario.write_text('preset = "s1_leaving"\nepisodes = 2\nmax_steps = 25\n')
    assert main(["validate", "--memory", str(chained / "memory" / "s1.pmem"), "--scenario", str(scenario),
                 "-o", str(out)]) == 0
    lines = (out / "logs" / "validation_s1_leaving.csv").read_text().splitlines()
    assert lines[0].startswith("episode,total_reward") and len(lines) == 3
    summary = (out / "logs" / "validation_s1_leaving_summary.csv").read_text().splitlines()
    assert summary[1].startswith("s1_leaving,1,2,25,")
    assert "time_on_target_ratio" in capsys.readouterr().out


def test_validate_with_wrong_memory(tiny, chained, capsys):
    code = main(["validate", "--memory", str(chained / "memory" / "s1.pmem"),
                 "--scenario", str(CONFIGS / "scenarios" / "s3_leaving.toml"), "-o", str(tiny.parent / "bad")])
    assert code == 3
    assert capsys.readouterr().err.startswith("error[config]:")


def test_inspect(chained, tmp_path, capsys):
    assert main(["inspect", "--memory", str(chained / "memory" / "s2.pmem"), "-o", str(tmp_path)]) == 0
    assert (tmp_path / "s2_q.csv").exists()
    assert "schemas" in capsys.readouterr().out


def test_render(tmp_path):
    assert main(["render", "--scene", str(CONFIGS / "scene.toml"), "--resolution", "64", "-o", str(tmp_path)]) == 0
    assert (tmp_path / "scene_rgb.png").exists() and (tmp_path / "scene_depth.png").exists()


def test_export(chained, tmp_path):
    logs = [str(chained / "logs" / f"s{n}_metrics.csv") for n in (1, 2)]
    assert main(["export", "--logs", *logs, "--name", "both", "-o", str(tmp_path)]) == 0
    assert (tmp_path / "plots" / "both.png").exists()
    assert (tmp_path / "logs" / "both.csv").read_text().count("episode,total_reward") == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SENSORIMOTOR_OUT", str(tmp_path / "env"))
    assert main(["render", "--scene", str(CONFIGS / "scene.toml"), "--resolution", "64"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


@pytest.mark.parametrize("argv", [[], ["fly"], ["chain", "--bogus"], ["render"], ["train", "--substage", "4"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = 1\n[world]\nn_blocks = 'x'\n")
    assert main(["chain", "--config", str(bad), "-o", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err.strip()
    assert err.count("\n") == 0 and err.startswith("error[config]:") and "bad.toml:3" in err


def test_io_errors(tmp_path, capsys):
    assert main(["inspect", "--memory", str(tmp_path / "missing.pmem"), "-o", str(tmp_path)]) == 4
    corrupt = tmp_path / "c.pmem"
    corrupt.write_bytes(b"PMEM\x01\x00")
    assert main(["inspect", "--memory", str(corrupt), "-o", str(tmp_path)]) == 4
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["render", "--scene", str(CONFIGS / "scene.toml"), "--resolution", "64", "-o", str(blocker / "x")]) == 4
    errs = capsys.readouterr().err.strip().splitlines()
    assert len(errs) == 3 and all(e.startswith("error[io]:") for e in errs)


def test_dump_episode_out_of_range(tiny, tmp_path):
    assert main(["chain", "--config", str(tiny), "-o", str(tmp_path), "--dump-maps", "--dump-episode", "9"]) == 2
