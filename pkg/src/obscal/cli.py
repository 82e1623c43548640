"""Command-line interface for the calibration-observability study.

Subcommands:

- ``analyze``     build observability stacks, check the degenerate-motion
                  null-space structure, write JSON reports
- ``simulate``    dump raw measurement streams to CSV
- ``calibrate``   run one filter instance, write its error curve
- ``experiment``  run the full (or restricted) study matrix, write result
                  tables and per-run curves
- ``plot``        merge run curves into long-format plot data
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time

import numpy as np

from . import harness
from .harness import ExperimentConfig, RunKey, analysis_verdicts, analyze_combo
from .observability import compute_phi_sequence


def _load_config(args) -> ExperimentConfig:
    config = (ExperimentConfig.from_file(args.config) if args.config
              else ExperimentConfig())
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "traj", None):
        overrides["trajectories"] = tuple(args.traj)
    if getattr(args, "case", None):
        overrides["cases"] = tuple(args.case)
    if getattr(args, "mode", None):
        overrides["modes"] = tuple(args.mode)
    if overrides:
        config = config.override(**overrides)
    config.validate()
    return config


def cmd_analyze(args) -> int:
    config = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    failures = 0
    trajectories = list(config.trajectories)
    if args.with_control and "generic" not in trajectories:
        trajectories.append("generic")
    for traj in trajectories:
        spec = config.trajectory(traj)
        times = np.arange(0.0, config.duration_s + 1e-9, 1.0 / config.keyframe_hz)
        phi_seq = compute_phi_sequence(
            spec, times, gravity=np.asarray(config.gravity, dtype=float),
            substep=config.phi_substep_s)
        for mode in config.modes:
            for case in config.cases:
                t0 = time.time()
                report, doc = analyze_combo(config, mode, traj, case, phi_seq)
                checks = analysis_verdicts(config, mode, traj, case, report)
                doc["checks"] = {name: bool(ok) for name, ok in checks}
                doc["elapsed_s"] = time.time() - t0
                name = f"analysis_{mode}_traj{traj}_case{case}.json"
                with open(os.path.join(args.out, name), "w") as fh:
                    json.dump(doc, fh, indent=2)
                    fh.write("\n")
                for label, ok in checks:
                    failures += not ok
                    print(f"[{'PASS' if ok else 'FAIL'}] {mode} traj-{traj} "
                          f"case-{case}: {label}")
    return 1 if failures else 0


def cmd_simulate(args) -> int:
    config = _load_config(args)
    for mode in config.modes:
        for traj in config.trajectories:
            for case in config.cases:
                out = os.path.join(args.out, f"{mode}_traj{traj}_case{case}")
                harness.dump_measurements(config, mode, traj, case, out)
                print(f"wrote measurement streams: {out}")
    return 0


def _write_run(run, out_dir, label):
    csv_path = os.path.join(out_dir, f"{label}.csv")
    run.write_csv(csv_path)
    with open(os.path.join(out_dir, f"{label}.meta.json"), "w") as fh:
        json.dump(run.metadata(), fh, indent=2)
        fh.write("\n")
    return csv_path


def cmd_calibrate(args) -> int:
    config = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    mode = config.modes[0]
    traj = config.trajectories[0]
    case = config.cases[0]
    key = RunKey(mode, traj, case, args.perturbation_index)
    run = harness.execute_run(config, key)
    path = _write_run(run, args.out, key.label)
    print(f"wrote {path}; final |roll,pitch,yaw| errors "
          f"= {np.round(run.final_abs_errors, 4)} deg"
          + (" [DIVERGED]" if run.diverged else ""))
    return 0


def cmd_experiment(args) -> int:
    config = _load_config(args)
    runs_dir = os.path.join(args.out, "runs")
    tables_dir = os.path.join(args.out, "tables")
    os.makedirs(runs_dir, exist_ok=True)
    os.makedirs(tables_dir, exist_ok=True)
    keys = harness.run_matrix(config)
    print(f"running {len(keys)} calibration runs "
          f"({args.workers} worker{'s' if args.workers != 1 else ''})")
    t0 = time.time()
    done = [0]

    def progress(key):
        done[0] += 1
        if done[0] % 10 == 0 or done[0] == len(keys):
            print(f"  {done[0]}/{len(keys)} runs, {time.time() - t0:.0f} s")

    results = harness.execute_matrix(config, keys, workers=args.workers,
                                     progress=progress)
    for key in keys:
        _write_run(results[key], runs_dir, key.label)
    diverged = [k.label for k in keys if results[k].diverged]
    tables = harness.build_tables(config, results)
    for (mode, traj), table in sorted(tables.items()):
        path = os.path.join(tables_dir, f"{mode}_traj{traj}.csv")
        table.write_csv(path)
        print(f"wrote {path}")
    if diverged:
        print(f"diverged runs ({len(diverged)}): {', '.join(diverged)}")
    return 0


def cmd_plot(args) -> int:
    files = sorted(f for pattern in args.runs for f in glob.glob(pattern))
    if not files:
        print("no run CSVs matched", file=sys.stderr)
        return 1
    os.makedirs(os.path.dirname(os.path.abspath(args.out_file)), exist_ok=True)
    harness.aggregate_plot_data(files, args.out_file)
    print(f"wrote {args.out_file} ({len(files)} runs)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obscal",
        description="Degenerate-motion observability analysis and online "
                    "IMU-camera rotational calibration study")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", type=str, default=None,
                       help="JSON config file (defaults reproduce the study)")
        p.add_argument("--out", type=str, default=out_default)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--traj", action="append", choices=["1", "2", "generic"],
                       help="restrict to a trajectory (repeatable)")
        p.add_argument("--case", action="append", choices=["1", "2", "3"],
                       help="restrict to a ground-truth extrinsic (repeatable)")
        p.add_argument("--mode", action="append", choices=["pure", "global"],
                       help="restrict to a configuration (repeatable)")

    p = sub.add_parser("analyze", help="null-space analysis of the stacks")
    common(p, "out/analysis")
    p.add_argument("--with-control", action="store_true",
                   help="also analyze the fully excited control trajectory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="dump measurement CSV streams")
    common(p, "out/measurements")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="run a single calibration")
    common(p, "out/runs")
    p.add_argument("--perturbation-index", type=int, default=0,
                   help="index into the configured perturbation list")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("experiment", help="run the study matrix")
    common(p, "out/experiment")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot", help="aggregate run curves into plot data")
    p.add_argument("runs", nargs="+", help="run CSV paths or globs")
    p.add_argument("--out-file", type=str, default="out/plotdata/curves.csv")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
