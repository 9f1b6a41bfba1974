"""Command-line entry point: simulate, estimate, experiment, controller-step."""
import argparse
import json
import os
import sys
from importlib import resources

from ..simworld import ConfigError, ScenarioConfig, read_log, run_scenario, write_log
from ..simworld.logio import write_table
from .runner import (ALL_VARIANTS, ExperimentResult, run_experiment, run_variant,
                     write_experiment)
from .stepresponse import step_response

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2
BASELINES = ("wheel-odom", "wheel-inertial-odom")


def preset_names():
    root = resources.files("mecslam.harness") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(ref, seed=None):
    """Load a scenario from a JSON path or a shipped preset name."""
    if os.path.exists(ref):
        cfg = ScenarioConfig.load(ref)
    else:
        path = resources.files("mecslam.harness") / "scenarios" / f"{ref}.json"
        if not path.is_file():
            raise ConfigError(f"scenario {ref!r}: no such file or preset "
                              f"(presets: {', '.join(preset_names())})")
        cfg = ScenarioConfig.from_dict(json.loads(path.read_text()))
    return cfg if seed is None else cfg.with_seed(seed)


def _variants(text):
    names = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in names if v not in ALL_VARIANTS]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown variant(s) {bad or text!r}; choose from {', '.join(ALL_VARIANTS)}")
    return names


def _print_metrics(result):
    for name, m in result.metrics.items():
        print(f"{name:20s} position_error={m.position_error:.4f} m  "
              f"rate={100 * m.position_error_rate:.2f}%  heading={m.heading_error:+.2f} deg  "
              f"gated={m.fused_count}/{m.intervals}")


def cmd_simulate(args):
    cfg = load_scenario(args.scenario, args.seed)
    log = run_scenario(cfg)
    write_log(log, args.out)
    s = log.summary
    print(f"wrote {args.out}: {cfg.name}, {cfg.duration:g} s, "
          f"displacement {s.get('displacement', float('nan')):.3f} m")
    return EXIT_OK


def cmd_estimate(args):
    log = read_log(args.log)
    result = ExperimentResult(log.config, log)
    for v in args.variants:
        result.runs[v] = run_variant(log, v)
    if args.out:
        write_experiment(result, args.out)
    _print_metrics(result)
    return EXIT_OK


def cmd_experiment(args):
    cfg = load_scenario(args.scenario, args.seed)
    result = run_experiment(cfg, args.variants, out_dir=args.out, workers=args.workers)
    _print_metrics(result)
    if args.check:
        m = result.metrics
        if "full-gated" not in m:
            print("check: full-gated was not run", file=sys.stderr)
            return EXIT_FAILED
        worse = [b for b in BASELINES if b in m
                 and not m["full-gated"].position_error_rate < m[b].position_error_rate]
        if worse:
            print(f"check failed: full-gated does not beat {', '.join(worse)}", file=sys.stderr)
            return EXIT_FAILED
        print("check passed")
    return EXIT_OK


def cmd_controller_step(args):
    cfg = load_scenario(args.scenario, args.seed)
    r = step_response(cfg, tolerance=args.tolerance)
    print(f"setpoint {r.setpoint.tolist()}  final {[round(float(x), 5) for x in r.final]}  "
          f"error {100 * r.error:.3f}%  settle {r.settle_time:.3f} s")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_table(os.path.join(args.out, "step_response.txt"), "step_response",
                    "vx vy omega final_vx final_vy final_omega error settle_time",
                    [[*r.setpoint, *r.final, r.error, r.settle_time]])
        write_table(os.path.join(args.out, "step_curve.txt"), "step_curve",
                    "t sp_vx sp_vy sp_omega vx vy omega constraint_error", r.curve)
    return EXIT_OK if r.converged else EXIT_FAILED


def build_parser():
    p = argparse.ArgumentParser(prog="mecslam", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, default=None):
        sp.add_argument("--scenario", default=default, required=default is None,
                        help="scenario JSON path or preset name")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    sp = sub.add_parser("simulate", help="run the simulator and write a sensor log")
    scenario_args(sp)
    sp.add_argument("--out", required=True, help="output directory for the log")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="run variants on a recorded sensor log")
    sp.add_argument("--log", required=True, help="sensor log directory")
    sp.add_argument("--variants", type=_variants, default=list(ALL_VARIANTS))
    sp.add_argument("--out", default=None, help="output directory")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("experiment", help="simulate once and compare variants")
    scenario_args(sp)
    sp.add_argument("--variants", type=_variants, default=list(ALL_VARIANTS))
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("--workers", type=int, default=1, help="processes for variant runs")
    sp.add_argument("--check", action="store_true",
                    help="fail unless full-gated beats the odometry baselines")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("controller-step", help="velocity step response of the chassis loop")
    scenario_args(sp, default="controller_step")
    sp.add_argument("--tolerance", type=float, default=0.02)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_controller_step)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
