"""Command-line pipeline: simulate, pseudo-label, localize, evaluate, sweep.

Exit codes: 0 on success, 2 for contract violations (bad inputs), 3 for
numerical failures (degenerate geometry, divergence).
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, harness, simulator
from .errors import ContractViolation, NumericalFailure
from .features import build_pels_and_f2, cda_label
from .gcn import ALL_ROUTINGS
from .training import TrainConfig

_ROUTING_BY_LABEL = {r.label(): r for r in ALL_ROUTINGS}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mingle", description="WiFi RTT positioning pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--preset", required=True,
                   choices=["type1", "type2", "type3", "type4", "day3"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=None,
                   help="range noise sigma (m)")
    p.add_argument("--nlos-p", type=float, default=None)
    p.add_argument("--nlos-mu", type=float, default=None)
    p.add_argument("--supervision", default=None,
                   choices=list(simulator.SUPERVISION_POLICIES))
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("cda", help="compute pseudo-labels for a scenario")
    p.add_argument("scene")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--q1", type=int, default=None)
    p.add_argument("--q2", type=int, default=None)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("localize", help="estimate the trajectory")
    p.add_argument("scene")
    p.add_argument("--method", required=True,
                   choices=["lls", "cda", "ekf", "mingle"])
    p.add_argument("--mode", default="self", choices=["self", "semi"])
    p.add_argument("--lambda", dest="lam", type=float, default=3.0)
    p.add_argument("--epsilon", type=int, default=2)
    p.add_argument("--h1", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--routing", default="f1-tmg+f2-dmg",
                   choices=sorted(_ROUTING_BY_LABEL))
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=6000)
    p.add_argument("--dump-graphs", default=None, metavar="PREFIX",
                   help="also write PREFIX_tmg.csv / PREFIX_dmg.csv")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("evaluate", help="score an estimate against ground truth")
    p.add_argument("scene")
    p.add_argument("estimate")
    p.add_argument("--cdf", default=None, help="also write the error CDF CSV")
    p.add_argument("--svg", default=None, help="also write a trajectory SVG")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("ablate", help="run all feature/graph routings")
    p.add_argument("scene")
    p.add_argument("--mode", default="self", choices=["self", "semi"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=6000)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("sweep-lambda", help="train across regularizer weights")
    p.add_argument("scene")
    p.add_argument("--values", required=True,
                   help="comma-separated non-negative weights")
    p.add_argument("--mode", default="self", choices=["self", "semi"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=6000)
    p.add_argument("-o", "--output", required=True)
    return parser


def _cmd_simulate(args) -> None:
    overrides = {"seed": args.seed}
    if args.noise is not None:
        overrides["rtt_sigma"] = args.noise
    if args.nlos_p is not None:
        overrides["nlos_p"] = args.nlos_p
    if args.nlos_mu is not None:
        overrides["nlos_mu"] = args.nlos_mu
    if args.supervision is not None:
        overrides["supervision"] = args.supervision
    scenario = simulator.generate(simulator.preset(args.preset, **overrides))
    harness.save_scenario(scenario, args.output)


def _cmd_cda(args) -> None:
    scenario = harness.load_scenario(args.scene)
    features = build_pels_and_f2(scenario.rtt, scenario.aps, args.k)
    labels = cda_label(features, scenario.rtt, scenario.aps, args.q1, args.q2)
    doc = {"c": labels.c.tolist(),
           "params": {"k": labels.k, "q1": labels.q1, "q2": labels.q2}}
    Path(args.output).write_text(json.dumps(doc))


def _cmd_localize(args) -> None:
    scenario = harness.load_scenario(args.scene)
    if args.method == "lls":
        estimate = baselines.lls_rs_trajectory(scenario)
    elif args.method == "cda":
        estimate = baselines.cda_trajectory(scenario)
    elif args.method == "ekf":
        estimate = baselines.ekf_trajectory(scenario)
    else:
        config = TrainConfig(lam=args.lam, epsilon=args.epsilon, h1=args.h1,
                             seed=args.seed,
                             routing=_ROUTING_BY_LABEL[args.routing],
                             repetitions=args.reps, max_epochs=args.max_epochs)
        estimate, _ = harness.mingle_localize(scenario, config, args.mode)
    if args.dump_graphs is not None:
        prepared = harness.prepare(scenario, epsilon=args.epsilon)
        harness.dump_graphs_csv(prepared.graphs, args.dump_graphs)
    harness.write_estimate_csv(estimate, args.output)


def _cmd_evaluate(args) -> None:
    scenario = harness.load_scenario(args.scene)
    coords = harness.read_estimate_csv(args.estimate)
    report = harness.evaluate(coords, scenario.gt)
    harness.write_report_json(report, args.output)
    if args.cdf is not None:
        harness.write_cdf_csv(report, args.cdf)
    if args.svg is not None:
        harness.write_trajectory_svg(args.svg, scenario.gt, coords,
                                     scenario.aps.positions)


def _train_config(args) -> TrainConfig:
    return TrainConfig(seed=args.seed, repetitions=args.reps,
                       max_epochs=args.max_epochs)


def _cmd_ablate(args) -> None:
    scenario = harness.load_scenario(args.scene)
    rows = harness.run_ablation(scenario, _train_config(args), args.mode)
    harness.write_ablation_csv(rows, args.output)


def _cmd_sweep(args) -> None:
    scenario = harness.load_scenario(args.scene)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ContractViolation(f"bad --values list: {args.values!r}") from exc
    if not values:
        raise ContractViolation("--values must list at least one weight")
    rows = harness.run_lambda_sweep(scenario, values, _train_config(args),
                                    args.mode)
    harness.write_sweep_csv(rows, args.output)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "cda": _cmd_cda,
    "localize": _cmd_localize,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
    "sweep-lambda": _cmd_sweep,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
