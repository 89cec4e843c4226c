"""Command-line entry point: ``humanreach simulate | metrics | validate``.

Exit status
-----------
0  success (``simulate``: the run converged)
1  error (bad configuration, unreadable trace, numerical failure, failed checks)
2  ``simulate`` only: the run reached ``max_time`` without converging
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .chain import BUILTIN_ROBOTS, chain_to_dict, parse_yaml, resolve_chain
from .controller import params_to_dict, resolve_params
from .errors import ConfigError, DegenerateMotionError, HumanReachError
from .metrics import compute_metrics
from .sim import (
    CONVERGED,
    NUMERICAL_FAILURE,
    TIMEOUT,
    Disturbance,
    Simulation,
    TraceFormatError,
    config_from_dict,
    config_to_dict,
    read_trace_csv,
    write_trace_csv,
)
from .validate import DEFAULT_SEED, DEFAULT_TRIALS, MUTATIONS, run_suite

OUTDIR_ENV = "HUMANREACH_OUTDIR"
DEFAULT_TRACE_NAME = "trace.csv"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TIMEOUT = 2

_LINK_OPTIONAL = ("offset", "friction.viscous", "friction.coulomb", "friction.slope")


def _robot_defaulted(spec):
    """Names of robot-file fields that were filled in by defaults."""
    if str(spec) in BUILTIN_ROBOTS:
        return []
    doc = parse_yaml(Path(spec).read_text(), source=str(spec))
    if isinstance(doc, dict) and "robot" in doc and "links" not in doc:
        doc = doc["robot"]
    out = [key for key in ("name", "gravity") if key not in doc]
    for i, link in enumerate(doc.get("links", []), start=1):
        friction = link.get("friction") or {}
        for key in _LINK_OPTIONAL:
            present = (key.split(".")[1] in friction) if key.startswith("friction.") else key in link
            if not present:
                out.append(f"links[{i}].{key}")
    return out


def _load_scenario(path):
    if path is None:
        return config_from_dict({})
    p = Path(path)
    if not p.is_file():
        raise ConfigError("file not found", source=str(path))
    return config_from_dict(parse_yaml(p.read_text(), source=str(path)), source=str(path))


def _apply_overrides(cfg, defaulted, args):
    def take(name, value):
        setattr(cfg, name, value)
        if name in defaulted:
            defaulted.remove(name)

    if args.max_time is not None:
        take("max_time", args.max_time)
    if args.dt is not None:
        take("dt", args.dt)
    if args.observer is not None:
        cfg.observer_on = args.observer == "on"
        if "toggles.observer" in defaulted:
            defaulted.remove("toggles.observer")
    if args.perturb_mass is not None:
        cfg.mass_perturbation = args.perturb_mass
        if "perturbation.mass" in defaulted:
            defaulted.remove("perturbation.mass")
    if args.disturb:
        cfg.disturbances = cfg.disturbances + [Disturbance.parse(d) for d in args.disturb]
        if "disturbance" in defaulted:
            defaulted.remove("disturbance")
    return cfg.validate()


def _output_paths(out):
    if out is None:
        out = Path(os.environ.get(OUTDIR_ENV, ".")) / DEFAULT_TRACE_NAME
    trace = Path(out)
    manifest = trace.with_name(trace.stem + ".manifest.json")
    return trace, manifest


def build_manifest(chain, params, cfg, defaulted, trace, paths):
    """Run manifest as a plain dict; contains nothing that varies between runs."""
    return {
        "version": __version__,
        "robot": chain_to_dict(chain),
        "controller": params_to_dict(params),
        "simulation": config_to_dict(cfg),
        "defaulted": defaulted,
        "outputs": {"trace": str(paths[0]), "manifest": str(paths[1])},
        "termination": {
            "reason": trace.reason,
            "message": trace.message,
            "sim_time": float(trace.t[-1]) if len(trace) else 0.0,
            "records": len(trace),
            "final_error": trace.final_error if len(trace) else None,
        },
    }


def dump_manifest(manifest):
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def cmd_simulate(args):
    chain = resolve_chain(args.robot)
    robot_defaults = _robot_defaulted(args.robot)
    params, controller_defaults = resolve_params(args.controller)
    cfg, sim_defaults = _load_scenario(args.scenario)
    cfg = _apply_overrides(cfg, sim_defaults, args)
    paths = _output_paths(args.out)
    paths[0].parent.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    trace = Simulation(chain, params, cfg).run()
    wall = time.perf_counter() - start

    write_trace_csv(trace, paths[0])
    defaulted = {"robot": robot_defaults, "controller": controller_defaults,
                 "simulation": sim_defaults}
    manifest = build_manifest(chain, params, cfg, defaulted, trace, paths)
    paths[1].write_text(dump_manifest(manifest))

    print(f"{trace.reason}: t={trace.t[-1]:.3f} s, |dx|={trace.final_error:.4f} m")
    print(f"trace: {paths[0]}")
    print(f"manifest: {paths[1]}")
    print(f"wall-clock: {wall:.2f} s")
    if trace.reason == CONVERGED:
        return EXIT_OK
    if trace.reason == TIMEOUT:
        return EXIT_TIMEOUT
    if trace.reason == NUMERICAL_FAILURE:
        print(f"error: numerical failure at {trace.message}", file=sys.stderr)
    return EXIT_ERROR


def cmd_metrics(args):
    path = Path(args.trace)
    if not path.is_file():
        raise ConfigError("file not found", source=str(path))
    trace = read_trace_csv(path)
    m = compute_metrics(trace)
    if args.csv:
        sys.stdout.write(m.to_csv())
    else:
        sys.stdout.write(m.to_yaml())
    if args.out:
        Path(args.out).write_text(m.to_csv())
    return EXIT_OK


def cmd_validate(args):
    report = run_suite(seed=args.seed, trials=args.trials, mutate=args.mutate)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_ERROR


def _on_off(text):
    text = text.lower()
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text


def build_parser():
    parser = argparse.ArgumentParser(
        prog="humanreach", description="Human-like reaching simulation and checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one reaching simulation")
    sim.add_argument("--robot", default="builtin:7dof", help="robot file or builtin:7dof")
    sim.add_argument("--controller", default="builtin:table2",
                     help="controller file or builtin:table2 / builtin:tuned")
    sim.add_argument("--scenario", help="YAML file with a 'simulation' section")
    sim.add_argument("--out", help=f"trace CSV path (default ${OUTDIR_ENV}/{DEFAULT_TRACE_NAME})")
    sim.add_argument("--max-time", type=float, help="simulated time limit in seconds")
    sim.add_argument("--dt", type=float, help="integration step in seconds")
    sim.add_argument("--observer", type=_on_off, help="force the disturbance observer on or off")
    sim.add_argument("--perturb-mass", type=float, metavar="FRACTION",
                     help="scale plant masses by 1 + FRACTION")
    sim.add_argument("--disturb", action="append", metavar="J:TAU[:T0[:T1]]",
                     help="constant torque on joint J (repeatable)")
    sim.set_defaults(func=cmd_simulate)

    met = sub.add_parser("metrics", help="straightness and speed-profile metrics of a trace")
    met.add_argument("trace", help="trace CSV written by 'simulate'")
    met.add_argument("--csv", action="store_true", help="print one CSV row instead of YAML")
    met.add_argument("--out", help="also write the CSV row to this file")
    met.set_defaults(func=cmd_metrics)

    val = sub.add_parser("validate", help="randomized property checks")
    val.add_argument("--seed", type=int, default=DEFAULT_SEED)
    val.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    val.add_argument("--mutate", choices=MUTATIONS, help=argparse.SUPPRESS)
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TraceFormatError as exc:
        print(f"error: {args.trace}: {exc}", file=sys.stderr)
    except DegenerateMotionError as exc:
        print(f"error: degenerate motion: {exc}", file=sys.stderr)
    except (HumanReachError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
