"""Command-line front end.

Subcommands run one scenario and write ``trace.csv`` and ``report.json``
to the output directory (``--out-dir``, else ``$IMDOB_OUT_DIR``, else
``./out``); ``--plot`` adds SVG charts with matching ``.dat`` files.

Exit status: 0 on success, 2 on configuration errors, 1 on runtime failure.
"""
import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import config
from .errors import ConfigError, ImdobError
from .sim import analyze, error_norms, run_scenario
from .svgplot import write_chart

SUBCOMMANDS = ("observe", "track", "freq-id", "report")


def _mode_for(sub, cfg_mode):
    if sub == "observe":
        return cfg_mode if cfg_mode == "known_frequency" else "observe_only"
    if sub == "track":
        return cfg_mode if cfg_mode == "freq_id" else "track_and_reject"
    if sub == "freq-id":
        return "freq_id"
    return cfg_mode


def _clean(obj):
    """JSON-safe copy: NaN and inf become null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _plots(trace, out_dir, decimate):
    t = trace.t
    tr = trace
    paths = []

    def chart(name, series, title, ylabel):
        paths.extend(write_chart(os.path.join(out_dir, name), t, series, title, ylabel, decimate))

    e = tr.group("x2_hat") - tr.group("xi2")
    chart("x2_hat_error", {f"component {i + 1}": e[:, i] for i in range(e.shape[1])},
          "Estimation error of the actuator state estimate", "x2_hat - x2")
    e = tr.group("d_hat") - tr.group("d")
    chart("d_hat_error", {f"channel {i + 1}": e[:, i] for i in range(e.shape[1])},
          "Disturbance estimation error", "d_hat - d")
    e = tr.group("theta") - tr.blocks.theta_star
    chart("theta_error", {f"theta {i + 1}": e[:, i] for i in range(e.shape[1])},
          "Parameter estimation error", "theta - theta*")
    errs = {k: v for k, v in error_norms(tr).items() if k.startswith("omega")}
    if errs:
        series = {}
        for i, ch in enumerate(tr.scenario.disturbance.channels):
            for j, w in enumerate(sorted(ch.frequencies)):
                name = f"omega_hat{i}_{j}"
                if name in tr.columns:
                    series[f"channel {i + 1}, mode {j + 1}"] = tr[name] - w
        chart("omega_error", series, "Frequency estimation error", "omega_hat - omega")
    e = tr.group("e_q")
    chart("position_error", {f"joint {i + 1}": e[:, i] for i in range(2)},
          "Position tracking error", "q - q_d [rad]")
    e = tr.group("e_q_dot")
    chart("velocity_error", {f"joint {i + 1}": e[:, i] for i in range(2)},
          "Velocity tracking error", "q' - q_d' [rad/s]")
    return paths


def build_parser():
    p = argparse.ArgumentParser(
        prog="imdob",
        description="Simulate the adaptive disturbance observer on the flexible-joint manipulator.")
    sub = p.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")
    helps = {
        "observe": "estimate the disturbance without feedforward (or with the known-frequency estimate)",
        "track": "track the reference and reject the estimated disturbance",
        "freq-id": "track, reject and identify the disturbance frequencies online",
        "report": "run the scenario in its configured mode",
    }
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=helps[name], description=helps[name])
        s.add_argument("--config", required=True, help="scenario JSON file")
        s.add_argument("--out-dir", default=None,
                       help="output directory (default: $IMDOB_OUT_DIR or ./out)")
        s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. observer.Lambda=1000 (repeatable)")
        s.add_argument("--seed", type=int, default=None, help="random seed (same as --set seed=N)")
        s.add_argument("--t-end", type=float, default=None, help="horizon in seconds (same as --set t_end=T)")
        s.add_argument("--step", type=float, default=None, help="RK4 step (same as --set step=H)")
        s.add_argument("--plot", action="store_true", help="write SVG charts and .dat files")
    return p


def run(args):
    overrides = list(args.overrides)
    for flag, key in ((args.seed, "seed"), (args.t_end, "t_end"), (args.step, "step")):
        if flag is not None:
            overrides.append(f"{key}={json.dumps(flag)}")
    _, base = config.load(args.config, overrides)
    raw_mode = base.mode
    mode = _mode_for(args.command, raw_mode)
    if mode != raw_mode:
        overrides.append(f"mode={json.dumps(mode)}")
    cfg, sc = config.load(args.config, overrides)
    out_dir = args.out_dir or config.default_out_dir()
    os.makedirs(out_dir, exist_ok=True)

    trace = run_scenario(sc)
    rep = analyze(trace)
    csv_path = os.path.join(out_dir, "trace.csv")
    text = trace.to_csv(csv_path)
    files = ["trace.csv", "report.json"]
    if args.plot:
        files += [os.path.basename(p) for p in _plots(trace, out_dir, sc.decimate)]
    report = {
        "schema_version": config.SCHEMA_VERSION,
        "command": args.command,
        "mode": sc.mode,
        "seed": sc.seed,
        "scenario": cfg,
        "trace": {"file": "trace.csv", "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
                  "rows": text.count("\n") - 1, "decimate": sc.decimate},
        "metrics": rep.to_dict(),
        "files": files,
    }
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8", newline="") as f:
        json.dump(_clean(report), f, indent=2, sort_keys=True)
        f.write("\n")
    summary = ", ".join(f"{k}={v.final_window_error:.3g}" for k, v in rep.signals.items())
    print(f"{args.command}: wrote {len(files)} files to {out_dir} ({summary})")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ImdobError, ValueError, FloatingPointError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
