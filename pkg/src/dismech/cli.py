"""Command-line front end.

Subcommands: oracle, run-dd, run-consensus, run-direct, sweep-ic, replay.
Results go to stdout as JSON; transcripts and CSV tables go to files.  Exit
codes: 0 success, 1 mechanism failure (non-convergence, malformed reports,
replay mismatch), 2 configuration error.
"""

import argparse
import json
import sys

from . import strategies
from .analysis import asymptotic_ic_sweep
from .consensus import build_consensus_follower, default_averaging_weight, default_edge_dual_step
from .dd import build_dd_follower, default_step_size
from .errors import ConfigurationError, MechanismError, NonConvergenceError
from .oracle import exact_groves_tax, exact_vcg_tax, solve_social_optimum
from .protocol import Topology, Transcript, replay_reports
from .scenario import load_scenario, run_scenario

__all__ = ["main"]


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _parse_n_values(text):
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigurationError(f"bad accuracy list {text!r}; expected e.g. 10,100,1000")
    if not values:
        raise ConfigurationError("empty accuracy list")
    return values


def _deviant_from_args(args):
    if args.deviant == "honest":
        return strategies.honest()
    if args.deviant == "misreport":
        if args.fake is None:
            raise ConfigurationError("--deviant misreport needs --fake")
        return strategies.misreport([float(t) for t in args.fake.split(",")])
    if args.deviant == "stackelberg":
        return strategies.stackelberg()
    if args.deviant == "constant":
        if args.value is None:
            raise ConfigurationError("--deviant constant needs --value")
        return strategies.constant([float(t) for t in args.value.split(",")])
    raise ConfigurationError(f"unknown deviant {args.deviant!r}")


def _cmd_oracle(args):
    sc = load_scenario(args.scenario)
    problem = sc.as_allocation_problem()
    x_star, p_star, l_star = solve_social_optimum(problem)
    _emit({
        "x_star": x_star.tolist(),
        "p_star": p_star.tolist(),
        "L_star": l_star,
        "groves_tax": exact_groves_tax(problem, x_star).tolist(),
        "vcg_tax": exact_vcg_tax(problem).tolist(),
    })
    return 0


def _cmd_run_dd(args):
    sc = load_scenario(args.scenario)
    choice, transcript = run_scenario(
        sc, mechanism="alg1", n=args.n, tax_rule=args.tax,
        gamma=args.gamma, round_cap=args.round_cap,
    )
    if args.transcript:
        transcript.save(args.transcript)
    final = transcript.final_broadcast.payload
    _emit({
        "x_tilde": choice.x.tolist(),
        "t_tilde": choice.t.tolist(),
        "p_final": final["p"],
        "b_lower": final["b_lower"],
        "b_upper": final["b_upper"],
        "rounds": len(transcript) - 1,
        "seed": args.seed if args.seed is not None else sc.seed,
    })
    return 0


def _cmd_run_consensus(args):
    sc = load_scenario(args.scenario)
    mechanism = {"dd": "alg2", "linear": "alg3"}[args.alg]
    choice, transcript = run_scenario(
        sc, mechanism=mechanism, n=args.n, gamma=args.gamma,
        alpha=args.alpha, round_cap=args.round_cap,
    )
    if args.transcript:
        transcript.save(args.transcript)
    _emit({
        "x_tilde": choice.x.tolist(),
        "t_tilde": choice.t.tolist(),
        "residual": transcript.final_broadcast.payload["residual"],
        "rounds": len(transcript) - 1,
        "seed": args.seed if args.seed is not None else sc.seed,
    })
    return 0


def _cmd_run_direct(args):
    sc = load_scenario(args.scenario)
    choice, _ = run_scenario(sc, mechanism="direct", tax_rule=args.tax)
    _emit({"x": choice.x.tolist(), "t": choice.t.tolist()})
    return 0


def _cmd_sweep_ic(args):
    sc = load_scenario(args.scenario)
    deviant = _deviant_from_args(args)
    n_list = _parse_n_values(args.n) if args.n else (sc.n_list or [sc.n])
    if args.tax:
        sc.tax_rule = args.tax
    if args.round_cap:
        sc.round_cap = args.round_cap
    report = asymptotic_ic_sweep(sc, args.agent, deviant, n_list)
    if args.csv:
        report.save_csv(args.csv)
    _emit(report.to_obj())
    return 0


def _replay_programs(sc, args):
    if sc.mechanism == "alg1":
        problem = sc.as_allocation_problem()
        gamma = args.gamma or sc.gamma or default_step_size(problem)
        programs = [
            build_dd_follower(st, problem, i, gamma) for i, st in enumerate(sc.stances)
        ]
        return programs, Topology.leader_only(len(programs))
    kind = {"alg2": "dd", "alg3": "linear"}[sc.mechanism]
    gamma = args.gamma or sc.gamma or default_edge_dual_step(sc.graph)
    alpha = args.alpha or sc.alpha or default_averaging_weight(sc.graph)
    programs = [
        build_consensus_follower(st, sc.graph, sc.types[i], i, kind, gamma=gamma, alpha=alpha)
        for i, st in enumerate(sc.stances)
    ]
    return programs, sc.graph.topology()


def _cmd_replay(args):
    sc = load_scenario(args.scenario)
    if sc.mechanism == "direct":
        raise ConfigurationError("the direct mechanism records no transcript")
    transcript = Transcript.load(args.transcript)
    programs, topology = _replay_programs(sc, args)
    regenerated = replay_reports(transcript, programs, topology)
    recorded = [rnd.reports for rnd in transcript.rounds[1:]]
    match = all(
        [r.to_obj() for r in new] == [r.to_obj() for r in old]
        for new, old in zip(regenerated, recorded)
    ) and len(regenerated) == len(recorded)
    final = transcript.final_broadcast.payload
    _emit({
        "match": match,
        "rounds": len(transcript) - 1,
        "social_choice": {
            "x_tilde": final.get("x_tilde"),
            "t_tilde": final.get("t_tilde"),
        },
    })
    return 0 if match else 1


def _add_common(parser, alpha=False, gamma=True):
    parser.add_argument("scenario", help="scenario file path or bundled name")
    parser.add_argument("--n", type=int, default=None, help="accuracy parameter")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--round-cap", type=int, default=None)
    if gamma:
        parser.add_argument("--gamma", type=float, default=None, help="step size")
    if alpha:
        parser.add_argument("--alpha", type=float, default=None, help="averaging weight")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dismech",
        description="Distributed mechanism simulations with Groves/VCG-style taxes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle", help="exact optimum, multiplier, and taxes")
    p.add_argument("scenario")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("run-dd", help="run the dual-decomposition mechanism")
    _add_common(p)
    p.add_argument("--tax", choices=["groves", "price"], default=None)
    p.add_argument("--transcript", default=None, help="write the round log here")
    p.set_defaults(func=_cmd_run_dd)

    p = sub.add_parser("run-consensus", help="run a consensus mechanism")
    _add_common(p, alpha=True)
    p.add_argument("--alg", choices=["dd", "linear"], required=True)
    p.add_argument("--transcript", default=None)
    p.set_defaults(func=_cmd_run_consensus)

    p = sub.add_parser("run-direct", help="one-shot direct mechanism")
    p.add_argument("scenario")
    p.add_argument("--tax", choices=["groves", "vcg"], default=None)
    p.set_defaults(func=_cmd_run_direct)

    p = sub.add_parser("sweep-ic", help="deviation-gain sweep over accuracies")
    p.add_argument("scenario")
    p.add_argument("--agent", type=int, default=0)
    p.add_argument("--deviant", default="stackelberg",
                   choices=["honest", "misreport", "stackelberg", "constant"])
    p.add_argument("--fake", default=None, help="misreported type (comma separated)")
    p.add_argument("--value", default=None, help="constant report value")
    p.add_argument("--n", default=None, help="comma separated accuracy list")
    p.add_argument("--tax", default=None)
    p.add_argument("--round-cap", type=int, default=None)
    p.add_argument("--csv", default=None, help="write the report table here")
    p.set_defaults(func=_cmd_sweep_ic)

    p = sub.add_parser("replay", help="re-drive strategies from a transcript log")
    _add_common(p, alpha=True)
    p.add_argument("--transcript", required=True)
    p.set_defaults(func=_cmd_replay)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(f"mechanism did not converge: {exc}", file=sys.stderr)
        return 1
    except MechanismError as exc:
        print(f"mechanism error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
