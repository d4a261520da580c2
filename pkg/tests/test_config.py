from dataclasses import replace
from pathlib import Path

import pytest

from sensorimotor.attention import KINDS
from sensorimotor.config import (
    FAST,
    TABLE_I,
    ConfigError,
    SubstageConfig,
    apply_preset,
    default_substage,
    load_run_config,
    load_scenario,
    parse_run_config,
    parse_scenario,
    parse_scene,
    to_dict,
)
from sensorimotor.world import GREEN, RED

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_protocol_defaults():
    for cfg in parse_run_config("").substages:
        assert (cfg.max_episodes, cfg.max_steps, cfg.max_no_salience) == (200, 500, 5)
        assert (cfg.alpha, cfg.gamma, cfg.exploration_start) == (0.9, 0.99, 0.95)
    assert SubstageConfig().max_episodes == 200


def test_substage_defaults():
    s1, s2, s3 = (default_substage(n) for n in (1, 2, 3))
    assert (s1.resolution, s1.action_count, s1.enabled_maps, s1.motivation_on) == (64, 10, ("R", "G", "B", "D"), False)
    assert (s2.resolution, s2.action_count, s2.enabled_maps, s2.motivation_on) == (128, 10, ("R", "G", "B", "D"), True)
    assert (s3.resolution, s3.action_count, s3.enabled_maps, s3.motivation_on) == (256, 17, KINDS, True)
    assert s1.reward.w_topdown == s2.reward.w_topdown == 0 < s3.reward.w_topdown
    assert s3.goal.target_color == RED


def test_shipped_config_equals_defaults():
    rc = load_run_config(CONFIGS / "substages.toml")
    assert rc.substages == tuple(default_substage(n) for n in (1, 2, 3))


def test_fast_preset():
    rc = parse_run_config('preset = "fast"')
    assert all((c.max_episodes, c.max_steps) == (60, 150) for c in rc.substages)
    assert apply_preset(default_substage(1), "fast") == replace(default_substage(1), **FAST)
    with pytest.raises(ConfigError):
        apply_preset(default_substage(1), "slow")


def test_overrides_and_seed():
    text = """seed = 4

[world]
n_blocks = 6

[[substages]]
substage = 2
max_episodes = 30

[substages.reward]
new_schema_mode = "pair"
"""
    rc = parse_run_config(text)
    (cfg,) = rc.substages
    assert (cfg.seed, cfg.max_episodes, cfg.world.n_blocks, cfg.reward.new_schema_mode) == (4, 30, 6, "pair")
    assert parse_run_config(text, seed=9).substages[0].seed == 9


@pytest.mark.parametrize(
    "text, line",
    [
        ("seed = 1\nbogus = 2\n", 2),
        ("[world]\nn_blocks = 'many'\n", 2),
        ("[[substages]]\nsubstage = 1\nalpha = true\n", 3),
        ("[[substages]]\nsubstage = 1\n\n[[substages]]\nsubstage = 2\ncolour = 1\n", 6),
        ("[[substages]]\nsubstage = 4\n", 1),
        ("[[substages]]\nsubstage = 3\n[substages.goal]\ntarget_color = 'mauve'\n", 4),
        ("[[substages]]\nsubstage = 1\n[substages.reward]\nw_topdown = 1.0\n", 1),
    ],
)
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_run_config(text, "x.toml")
    assert exc.value.line == line
    assert str(exc.value).startswith(f"x.toml:{line}:")


def test_syntax_error():
    with pytest.raises(ConfigError):
        parse_run_config("seed = = 3", "x.toml")


def test_validation_rules():
    for bad in (
        replace(default_substage(1), resolution=100),
        replace(default_substage(1), enabled_actions=(1, 3)),
        replace(default_substage(1), enabled_maps=("X",)),
        replace(default_substage(1), alpha=0.0),
        replace(default_substage(1), max_steps=0),
    ):
        with pytest.raises(ConfigError):
            bad.validate()


def test_missing_file():
    with pytest.raises(ConfigError):
        load_run_config("/nonexistent/run.toml")


def test_scenario_files_match_presets():
    for name, spec in TABLE_I.items():
        assert load_scenario(CONFIGS / "scenarios" / f"{name}.toml") == spec
    empty = load_scenario(CONFIGS / "scenarios" / "empty.toml")
    assert empty.empty


def test_scenario_parse_errors():
    with pytest.raises(ConfigError):
        parse_scenario('preset = "nope"')
    with pytest.raises(ConfigError):
        parse_scenario("distance = 1.0")
    with pytest.raises(ConfigError) as exc:
        parse_scenario('name = "a"\nspeed = "fast"\n', "s.toml")
    assert exc.value.line == 2


def test_scene_file():
    world, head = parse_scene((CONFIGS / "scene.toml").read_text())
    assert len(world.blocks) == 2 and world.blocks[1].color == GREEN and world.blocks[1].size == 0.3
    assert world.distractor.position == (0.2, -0.8)
    assert head.pitch == -0.25
    world, _ = parse_scene("seed = 2\n[distractor]\nabsent = true\n")
    assert world.distractor is None and len(world.blocks) == 12
    with pytest.raises(ConfigError):
        parse_scene("[[blocks]]\ncolor = 'blue'\n")
    with pytest.raises(ConfigError):
        parse_scene("wind = 3\n")


def test_to_dict_is_plain_data():
    d = to_dict(default_substage(3))
    assert d["reward"]["w_topdown"] == 1.0 and d["goal"]["target_color"] == [1.0, 0.0, 0.0]
