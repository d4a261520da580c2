"""Command-line entry point.

    sensorimotor chain    --config substages.toml --seed 7 -o out/
    sensorimotor train    --substage 2 --memory out/memory/s1.pmem -o out2/
    sensorimotor validate --memory out/memory/s1.pmem --scenario configs/scenarios/s1_leaving.toml
    sensorimotor inspect  --memory out/memory/s1.pmem
    sensorimotor render   --scene configs/scene.toml --resolution 256
    sensorimotor export   --logs out/logs/s1_metrics.csv out/logs/s2_metrics.csv

Every command writes under the output directory (``-o``, else
``$SENSORIMOTOR_OUT``, else ``./out``) and leaves a ``manifest.json`` there.
Failures print one line ``error[<class>]: <message>`` to stderr and exit with
2 (usage), 3 (config) or 4 (io).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import memory as pm
from .config import (
    ConfigError,
    RunConfig,
    SubstageConfig,
    apply_preset,
    default_substage,
    load_run_config,
    load_scenario,
    parse_run_config,
    parse_scene,
    to_dict,
)
from .experiment import (
    EpisodeLog,
    OutputError,
    Percept,
    _write,
    export_metrics,
    metrics_csv,
    plot_curves,
    read_metrics_csv,
    run_training,
    run_validation,
    steps_csv,
)
from .world import RESOLUTIONS, Camera, render_rgbd

OUTPUT_ENV = "SENSORIMOTOR_OUT"
EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- argument grammar


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensorimotor", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every episode")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, config=True):
        p.add_argument("-o", "--output-dir", type=Path, default=None, help=f"default ${OUTPUT_ENV} or ./out")
        if config:
            p.add_argument("--config", type=Path, help="substage TOML file (defaults when omitted)")
            p.add_argument("--seed", type=int, help="override the seed in the config")
            p.add_argument("--fast", action="store_true", help="60 episodes of 150 steps")

    p = sub.add_parser("chain", help="train substages 1, 2, 3 in order, each seeded by the previous memory")
    common(p)
    p.add_argument("--no-transfer", action="store_true", help="train every substage from scratch")
    p.add_argument("--dump-maps", action="store_true", help="dump every map of every cycle of one episode")
    p.add_argument("--dump-episode", type=int, default=-1, help="episode to dump (default: the last)")

    p = sub.add_parser("train", help="train one substage")
    common(p)
    p.add_argument("--substage", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--memory", type=Path, help="prior .pmem to transfer from")
    p.add_argument("--no-transfer", action="store_true", help="ignore --memory")
    p.add_argument("--dump-maps", action="store_true")
    p.add_argument("--dump-episode", type=int, default=-1)

    p = sub.add_parser("validate", help="frozen-policy validation of a memory on a scenario")
    common(p)
    p.add_argument("--memory", type=Path, required=True)
    p.add_argument("--scenario", type=Path, required=True)

    p = sub.add_parser("inspect", help="summarize a .pmem file and write its Q table as CSV")
    common(p, config=False)
    p.add_argument("--memory", type=Path, required=True)

    p = sub.add_parser("render", help="render a scene file to PNG")
    common(p, config=False)
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--resolution", type=int, choices=RESOLUTIONS, default=256)
    p.add_argument("--fov", type=float, default=75.0, help="horizontal field of view, degrees")

    p = sub.add_parser("export", help="plot reward/actions curves from metrics CSV files")
    common(p, config=False)
    p.add_argument("--logs", type=Path, nargs="+", required=True)
    p.add_argument("--name", default="curves")
    return parser


# --------------------------------------------------------------------------- helpers


def output_dir(args) -> Path:
    if args.output_dir is not None:
        return args.output_dir
    return Path(os.environ.get(OUTPUT_ENV, "out"))


def run_config(args) -> RunConfig:
    preset = "fast" if getattr(args, "fast", False) else None
    if args.config is not None:
        return load_run_config(args.config, seed=args.seed, preset=preset)
    return parse_run_config("", "<defaults>", seed=args.seed if args.seed is not None else 0, preset=preset)


def substage_cfg(rc: RunConfig, n: int) -> SubstageConfig:
    for cfg in rc.substages:
        if cfg.substage == n:
            return cfg
    return apply_preset(default_substage(n, rc.seed, rc.world), rc.preset)


def read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror}") from None


def load_memory(path: Path) -> pm.ProceduralMemory:
    try:
        return pm.load(read_bytes(path))
    except pm.MalformedFileError as exc:
        raise OutputError(f"{path}: {exc}") from None


def write_manifest(out: Path, args, config, artifacts: list[Path]) -> None:
    # no timestamps or output location: identical runs give identical manifests
    command = {k: v for k, v in vars(args).items() if k != "output_dir"}
    manifest = {
        "artifact_version": __version__,
        "command": command,
        "config": config,
        "artifacts": sorted(str(p.relative_to(out)) for p in artifacts),
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def save_png(path: Path, image: np.ndarray, **kwargs) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        plt.imsave(path, image, metadata={"Software": None}, **kwargs)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None
    return path


def grid_csv(cells: np.ndarray) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows([[repr(float(v)) for v in row] for row in cells])
    return buf.getvalue()


class MapDumper:
    """Writes every feature map, the combined and salience maps and the winner for one episode."""

    def __init__(self, root: Path, episode: int):
        self.root = root
        self.episode = episode
        self.written: list[Path] = []

    def __call__(self, episode: int, cycle: int, percept: Percept) -> None:
        if episode != self.episode:
            return
        maps = {m.kind: m.cells for m in percept.maps}
        maps["combined"] = percept.combined.cells
        maps["salience"] = percept.salience.cells
        stem = self.root / f"ep{episode:04d}_c{cycle:04d}"
        for kind, cells in maps.items():
            path = Path(f"{stem}_{kind}.csv")
            _write(path, grid_csv(cells))
            lo, hi = float(cells.min()), float(cells.max())
            self.written += [path, save_png(path.with_suffix(".png"), cells, cmap="gray", vmin=lo, vmax=max(hi, lo + 1e-12))]
        w = percept.winner
        path = Path(f"{stem}_winner.csv")
        _write(path, "row,col,value\n" + ("" if w is None else f"{w.row},{w.col},{w.value!r}\n"))
        self.written.append(path)


def dumper_for(args, out: Path, cfg: SubstageConfig) -> MapDumper | None:
    if not args.dump_maps:
        return None
    ep = args.dump_episode if args.dump_episode >= 0 else cfg.max_episodes + args.dump_episode
    if not 0 <= ep < cfg.max_episodes:
        raise UsageError(f"--dump-episode {args.dump_episode} outside the {cfg.max_episodes} episodes")
    return MapDumper(out / "snapshots" / f"s{cfg.substage}", ep)


def save_substage(out: Path, cfg: SubstageConfig, mem: pm.ProceduralMemory, logs: list[EpisodeLog]) -> list[Path]:
    n = cfg.substage
    written = export_metrics(logs, out / "logs" / f"s{n}_metrics.csv", out / "plots", f"substage {n}")
    steps = out / "logs" / f"s{n}_steps.csv"
    _write(steps, steps_csv(logs))
    pmem = out / "memory" / f"s{n}.pmem"
    _write(pmem, pm.save(mem))
    qcsv = out / "memory" / f"s{n}.csv"
    _write(qcsv, pm.to_csv(mem))
    return written + [steps, pmem, qcsv]


# --------------------------------------------------------------------------- verbs


def cmd_chain(args, out: Path) -> tuple[list[Path], dict]:
    rc = run_config(args)
    prior = None
    written: list[Path] = []
    curves = {}
    configs = []
    for n in (1, 2, 3):
        cfg = substage_cfg(rc, n)
        configs.append(cfg)
        dumper = dumper_for(args, out, cfg)
        mem, logs = run_training(cfg, None if args.no_transfer else prior, probe=dumper)
        written += save_substage(out, cfg, mem, logs)
        if dumper is not None:
            written += dumper.written
        curves[f"substage {n}"] = logs
        prior = mem
        print(f"substage {n}: {len(mem)} schemas, last-20 mean reward {np.mean([lg.total_reward for lg in logs[-20:]]):.2f}")
    written += plot_curves(curves, out / "plots", "chain")
    config = {"seed": rc.seed, "preset": rc.preset, "transfer": not args.no_transfer,
              "substages": [to_dict(c) for c in configs]}
    return written, config


def cmd_train(args, out: Path) -> tuple[list[Path], dict]:
    rc = run_config(args)
    cfg = substage_cfg(rc, args.substage)
    prior = None
    if args.memory is not None and not args.no_transfer:
        prior = load_memory(args.memory)
        if prior.action_count > cfg.action_count:
            raise ConfigError(
                f"prior memory has {prior.action_count} actions, substage {cfg.substage} only {cfg.action_count}"
            )
    dumper = dumper_for(args, out, cfg)
    mem, logs = run_training(cfg, prior, probe=dumper)
    written = save_substage(out, cfg, mem, logs)
    if dumper is not None:
        written += dumper.written
    print(f"substage {cfg.substage}: {len(mem)} schemas, last-20 mean reward "
          f"{np.mean([lg.total_reward for lg in logs[-20:]]):.2f}")
    config = {"seed": rc.seed, "preset": rc.preset, "prior": None if prior is None else str(args.memory),
              "substage": to_dict(cfg)}
    return written, config


VALIDATION_FIELDS = ("episode", "total_reward", "action_count", "termination", "on_target_steps")


def cmd_validate(args, out: Path):
    rc = run_config(args)
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    mem = load_memory(args.memory)
    cfg = substage_cfg(rc, scenario.substage)
    if mem.action_count != cfg.action_count:
        raise ConfigError(
            f"memory has {mem.action_count} actions but substage {scenario.substage} uses {cfg.action_count}",
            str(args.scenario),
        )
    report = run_validation(scenario, mem, cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VALIDATION_FIELDS)
    for lg in report.episodes:
        w.writerow([lg.episode, repr(lg.total_reward), lg.action_count, lg.termination, lg.on_target_steps])
    episodes = out / "logs" / f"validation_{scenario.name}.csv"
    _write(episodes, buf.getvalue())
    summary = out / "logs" / f"validation_{scenario.name}_summary.csv"
    _write(summary, "scenario,substage,episodes,max_steps,time_on_target_ratio,mean_reward\n"
           f"{scenario.name},{scenario.substage},{len(report.episodes)},{report.max_steps},"
           f"{report.time_on_target_ratio!r},{report.mean_reward!r}\n")
    print(f"{scenario.name}: time_on_target_ratio {report.time_on_target_ratio:.4f}, mean reward {report.mean_reward:.2f}")
    return [episodes, summary], {"scenario": to_dict(scenario), "memory": str(args.memory), "substage": to_dict(cfg)}


def cmd_inspect(args, out: Path):
    mem = load_memory(args.memory)
    path = out / f"{args.memory.stem}_q.csv"
    _write(path, pm.to_csv(mem, mem.action_count))
    visits = [s.visit_count for s in mem.schemas.values()]
    print(f"{args.memory}: {len(mem)} schemas, {mem.action_count} actions, tag {mem.action_set_version}, "
          f"visits total {sum(visits)}, max {max(visits, default=0)}")
    return [path], {"memory": str(args.memory)}


def cmd_render(args, out: Path):
    try:
        text = args.scene.read_text()
    except OSError as exc:
        raise OutputError(f"cannot read {args.scene}: {exc.strerror}") from None
    world, head = parse_scene(text, str(args.scene))
    half = world.arena_half_extent
    camera = Camera(fov_deg=args.fov, max_range=2.0 * np.sqrt(2.0) * half)
    obs = render_rgbd(world, head, args.resolution, camera)
    stem = out / args.scene.stem
    rgb = save_png(Path(f"{stem}_rgb.png"), np.clip(obs.rgb(), 0.0, 1.0))
    depth = save_png(Path(f"{stem}_depth.png"), obs.depth, cmap="gray", vmin=0.0, vmax=1.0)
    print(f"wrote {rgb} and {depth}")
    return [rgb, depth], {"scene": str(args.scene), "resolution": args.resolution, "fov_deg": args.fov}


def cmd_export(args, out: Path):
    curves = {}
    for path in args.logs:
        try:
            rows = read_metrics_csv(read_bytes(path).decode())
        except (KeyError, ValueError, UnicodeDecodeError) as exc:
            raise ConfigError(f"not a metrics CSV: {exc}", str(path)) from None
        curves[path.stem] = [
            EpisodeLog(r["episode"], total_reward=r["total_reward"], action_count=r["action_count"],
                       termination=r["termination"])
            for r in rows
        ]
    written = plot_curves(curves, out / "plots", args.name)
    merged = out / "logs" / f"{args.name}.csv"
    _write(merged, "".join(f"# {name}\n" + metrics_csv(logs) for name, logs in curves.items()))
    return written + [merged], {"logs": [str(p) for p in args.logs]}


VERBS = {
    "chain": cmd_chain,
    "train": cmd_train,
    "validate": cmd_validate,
    "inspect": cmd_inspect,
    "render": cmd_render,
    "export": cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    out = output_dir(args)
    try:
        written, config = VERBS[args.verb](args, out)
        write_manifest(out, args, config, written)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OutputError, OSError) as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
