"""Command line entry point: ``diffnav run | map | compare | plot``.

Exit status is 0 when the run succeeded or the requested report was
written, 2 for usage errors, 1 otherwise. Failures print one JSON line to
stderr with ``error`` and ``detail`` keys.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .grid import save_map
from .mapping import CollisionError
from .runner import (Outcome, compare, compute_metrics, report_csv, run_mapping_drive, run_pair,
                     run_scenario)
from .sim_world import ScenarioName
from .svg import traces_svg, trajectory_svg


class CliError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


def parse_seeds(text: str) -> list[int]:
    """``"1..20"``, ``"3,5,8"`` or a mix such as ``"1..3,7"``; ranges are inclusive."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            a, b = int(lo), int(hi)
            if b < a:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            seeds.extend(range(a, b + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def _seeds_arg(text: str) -> list[int]:
    try:
        return parse_seeds(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None


def _scenario_arg(text: str) -> str:
    try:
        return ScenarioName.parse(text).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffnav", description="Differential-drive navigation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=True):
        p.add_argument("--scenario", type=_scenario_arg, required=scenario_required,
                       help="obstacle_field, corner or straight_obstacle")
        p.add_argument("--config", action="append", default=[], metavar="FILE",
                       help="key=value config file; repeat to layer")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="single setting applied after the config files")
        p.add_argument("--out", required=True, type=Path, help="output directory")

    p = sub.add_parser("run", help="one scenario with one planner")
    common(p)
    p.add_argument("--planner", choices=("dwa", "mpc"), default="mpc")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("map", help="scripted drive mapped by the particle filter")
    common(p)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("compare", help="DWA against MPC over a batch of seeds")
    common(p)
    p.add_argument("--seeds", type=_seeds_arg, default=parse_seeds("1..20"))

    p = sub.add_parser("plot", help="SVG traces (and trajectories) from saved records")
    p.add_argument("records", nargs="+", type=Path, help="record.csv files or run directories")
    p.add_argument("--scenario", type=_scenario_arg, help="draw trajectories over this scenario's map")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    return parser


def _config(args, **fixed):
    try:
        cfg = load_config(args.config, args.set)
        return replace(cfg, scenario=args.scenario, **fixed)
    except ConfigError as exc:
        raise CliError("config", str(exc)) from None
    except OSError as exc:
        raise CliError("config", f"cannot read config: {exc}") from None
    except ValueError as exc:
        raise CliError("config", str(exc)) from None


def _series(rec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (np.array([r.time for r in rec.rows]), np.array([r.command.v for r in rec.rows]),
            np.array([r.command.w for r in rec.rows]))


def cmd_run(args) -> dict:
    cfg = _config(args, planner=args.planner, seed=args.seed)
    rec = run_scenario(cfg)
    rec.save(args.out)
    m = compute_metrics(rec)
    if rec.outcome is not Outcome.SUCCESS:
        raise CliError(rec.outcome.value, rec.message or f"{cfg.scenario}/{cfg.planner} seed {cfg.seed} "
                       f"ended with {rec.outcome.value} after {len(rec.rows)} cycles")
    return {"outcome": rec.outcome.value, "time_to_goal": m.time_to_goal, "out": str(args.out)}


def cmd_map(args) -> dict:
    cfg = _config(args, seed=args.seed)
    try:
        res = run_mapping_drive(cfg)
    except CollisionError as exc:
        raise CliError("collision", str(exc)) from None
    args.out.mkdir(parents=True, exist_ok=True)
    save_map(res.estimate, args.out / "map.txt")
    summary = {"scenario": cfg.scenario, "seed": cfg.seed, "agreement": res.agreement}
    (args.out / "mapping.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_compare(args) -> dict:
    base = _config(args)
    comparisons = []
    first = None
    for seed in args.seeds:
        dwa, mpc = run_pair(replace(base, seed=seed))
        comparisons.append(compare(compute_metrics(dwa), compute_metrics(mpc), base.scenario, seed))
        if first is None:
            first = (seed, dwa, mpc)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.csv").write_text(report_csv(comparisons))
    seed, dwa, mpc = first
    (args.out / "traces.svg").write_text(
        traces_svg({"DWA": _series(dwa), "MPC": _series(mpc)}, f"Speed output, {base.scenario}, seed {seed}"))
    grid, start, goal = base.world()
    xy = {name: [[r.true_pose.x, r.true_pose.y] for r in rec.rows] for name, rec in (("DWA", dwa), ("MPC", mpc))}
    path = mpc.path.xy() if mpc.path is not None else None
    (args.out / "trajectories.svg").write_text(
        trajectory_svg(grid, xy, path, start, goal, f"Trajectories, {base.scenario}, seed {seed}"))
    return {"scenario": base.scenario, "runs": len(comparisons),
            "dwa_successes": sum(c.dwa.success for c in comparisons),
            "mpc_successes": sum(c.mpc.success for c in comparisons),
            "mpc_w_std_lower": sum(c.verdicts["mpc_smoother"] for c in comparisons)}


def read_record(path: Path) -> dict[str, np.ndarray]:
    """Columns of a saved record.csv as float arrays."""
    if path.is_dir():
        path = path / "record.csv"
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CliError("record", f"{path} is empty")
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def cmd_plot(args) -> dict:
    series, trajs = {}, {}
    for p in args.records:
        try:
            rec = read_record(p)
        except (OSError, ValueError) as exc:
            raise CliError("record", f"cannot read {p}: {exc}") from None
        label = p.name if p.is_dir() else (p.parent.name or p.stem)
        while label in series:
            label += "'"
        series[label] = (rec["time"], rec["v"], rec["w"])
        trajs[label] = np.column_stack([rec["true_x"], rec["true_y"]])
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "traces.svg").write_text(traces_svg(series))
    written = ["traces.svg"]
    if args.scenario:
        from .runner import ScenarioConfig

        grid, start, goal = ScenarioConfig(scenario=args.scenario).world()
        (args.out / "trajectories.svg").write_text(trajectory_svg(grid, trajs, None, start, goal))
        written.append("trajectories.svg")
    return {"written": written}


COMMANDS = {"run": cmd_run, "map": cmd_map, "compare": cmd_compare, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = COMMANDS[args.command](args)
    except CliError as exc:
        print(json.dumps({"error": exc.code, "detail": exc.detail}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io", "detail": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
