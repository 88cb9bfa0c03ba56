"""``issf`` command line: validate scenarios, train services, simulate, benchmark.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .agents.builtin import HeuristicAttacker, NullDefender, PatrolDefender, RandomAgent
from .agents.model import LearnerConfig, ModelAgent
from .benchmark import (
    Contestant,
    agent_contestant,
    builtin_contestant,
    model_contestant,
    run_tournament,
    simulate,
)
from .engine import Role, write_traces
from .errors import (
    AdversaryRequired,
    CyclicPlan,
    DuplicateId,
    InsufficientServices,
    IssfError,
    LineageError,
    NotFound,
    ParseError,
    RoleMismatch,
    ShapeMismatch,
    UnknownService,
    ValidationError,
)
from .graph import load_scenario
from .pool import ROLE_NAMES, ServicePool, default_pool_path
from .trainer import PlanEntry, load_plan, training_curriculum

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2

# Errors caused by what the user asked for rather than by the run itself.
_INPUT_ERRORS = (ParseError, ValidationError, AdversaryRequired, CyclicPlan, UnknownService,
                 InsufficientServices, LineageError, RoleMismatch, NotFound, DuplicateId,
                 ShapeMismatch, FileNotFoundError, ValueError)

BUILTIN_ATTACKERS = ("random", "heuristic")
BUILTIN_DEFENDERS = ("NA", "random", "patrol")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _pool(args) -> ServicePool:
    return ServicePool(args.pool or default_pool_path())


# -- env-validate ----------------------------------------------------------------


def cmd_env_validate(args) -> int:
    graph = load_scenario(args.path)
    n_nodes, n_creds = len(graph.node_ids), len(graph.credential_ids)
    n_goal, n_land = len(graph.goal_ids), len(graph.landing_ids)

    def plural(n, word):
        return f"{n} {word}{'' if n == 1 else 's'}"

    print(f"{plural(n_nodes, 'node')}, {plural(n_creds, 'credential')}, "
          f"{plural(n_goal, 'goal node')}, {plural(n_land, 'landing node')}")
    if args.details:
        print(f"{len(graph.edges)} potential edges, toolkit {', '.join(graph.toolkit)}")
        print(f"env hash {graph.env_hash}")
    return EXIT_OK


# -- train -------------------------------------------------------------------------


def cmd_train(args) -> int:
    graph = load_scenario(args.scenario)
    pool = _pool(args)
    if args.plan:
        if args.role or args.id:
            raise UsageError("--plan cannot be combined with --role/--id")
        plan = load_plan(args.plan)
    else:
        if not args.role:
            raise UsageError("either --plan or --role is required")
        role = Role(args.role)
        if role is Role.DEFENDER and args.adversary == "NA":
            raise AdversaryRequired("a defender must be trained against an offense service; "
                                    "pass --adversary <attacker id>")
        service_id = args.id or _default_id(role, args.algo, args.adversary, args.pretrain, pool)
        plan = [PlanEntry(service_id, role, args.algo, args.adversary, args.pretrain,
                          args.seed, args.label)]
    overrides = {}
    if args.timesteps is not None:
        overrides["total_timesteps"] = args.timesteps
    if args.max_episode_length is not None:
        overrides["max_episode_length"] = args.max_episode_length
    if args.learning_start is not None:
        overrides["learning_start"] = args.learning_start
    base = LearnerConfig(**overrides)
    if args.plan and overrides:
        plan = [PlanEntry(e.id, e.role, e.algorithm, e.adversary, e.pretrain, e.seed, e.label,
                          {**overrides, **e.overrides}) for e in plan]
    results = training_curriculum(graph, plan, pool, base)
    summary = []
    for sid, report in results:
        service = pool.manifest(sid)
        row = {"id": sid, "role": service.role, "algorithm": service.algorithm,
               "adversary": service.adversary, "pretrain": service.pretrain, **report.to_dict()}
        summary.append(row)
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        for row in summary:
            eps = row["final_epsilon"]
            print(f"published {row['id']:<8} {row['role']:<8} algo={row['algorithm']:<16} "
                  f"adversary={row['adversary']:<6} pretrain={row['pretrain']:<6} "
                  f"episodes={row['episodes']} steps={row['timesteps']} "
                  f"attacker_wins={row['attacker_wins']} "
                  f"last10_len={row['mean_length_last_10']:.1f}"
                  + (f" epsilon={eps:.3f}" if eps is not None else ""))
    return EXIT_OK


def _default_id(role: Role, algo: str, adversary: str, pretrain: str, pool: ServicePool) -> str:
    stem = ("A" if role is Role.ATTACKER else "D") + algo[0].upper()
    if adversary != "NA":
        stem += adversary[-1]
    if pretrain != "NA":
        stem = f"{pretrain}-{stem}"
    candidate, n = stem, 2
    while candidate in pool:
        candidate, n = f"{stem}{n}", n + 1
    return candidate


# -- player resolution --------------------------------------------------------------


def _contestant(name: str, role: Role, pool: ServicePool, graph) -> Contestant:
    builtins = BUILTIN_ATTACKERS if role is Role.ATTACKER else BUILTIN_DEFENDERS
    if name in builtins:
        if name in ("NA", "random"):
            return builtin_contestant(name, role)
        factory = HeuristicAttacker if name == "heuristic" else PatrolDefender
        return agent_contestant(name, role, factory)
    if name not in pool:
        raise UnknownService(f"{name!r} is neither a pool service nor one of {', '.join(builtins)}")
    service, model = pool.load(name, graph)
    if service.agent_role is not role:
        raise RoleMismatch(f"{name!r} is a {service.role} service, not {ROLE_NAMES[role]}")
    return model_contestant(name, model)


# -- simulate -------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    graph = load_scenario(args.scenario)
    pool = _pool(args)
    attacker = _contestant(args.attacker, Role.ATTACKER, pool, graph)
    defender = _contestant(args.defender, Role.DEFENDER, pool, graph)
    traces: list | None = [] if args.trace_out else None
    metrics = simulate(graph, attacker.make_agent(), defender.make_agent(), args.episodes,
                       args.seed, traces=traces)
    if args.trace_out:
        with open(args.trace_out, "w") as fh:
            write_traces(traces, fh)
    if args.json:
        print(json.dumps({"attacker": attacker.id, "defender": defender.id,
                          "scenario": graph.scenario_id, "seed": args.seed,
                          "metrics": metrics.to_dict()}, indent=2, sort_keys=True))
        return EXIT_OK
    print(f"{attacker.id} vs {defender.id} on {graph.scenario_id}, "
          f"{metrics.episodes} episodes, seed {args.seed}")
    rows = [("AEL", metrics.ael), ("AER attacker", metrics.aer_attacker),
            ("AER defender", metrics.aer_defender), ("attacker win rate", metrics.attacker_win_rate),
            ("mean discovered", metrics.mean_discovered), ("mean owned", metrics.mean_owned)]
    for label, value in rows:
        print(f"  {label:<18} {value:>10.3f}")
    if args.trace_out:
        print(f"  traces written to {args.trace_out}")
    return EXIT_OK


# -- benchmark --------------------------------------------------------------------------


def cmd_benchmark(args) -> int:
    graph = load_scenario(args.scenario)
    pool = _pool(args)
    names = args.services or pool.ids()
    contestants = []
    for name in names:
        if name in pool:
            service, model = pool.load(name, graph)
            contestants.append(model_contestant(name, model))
        elif name in ("NA", "patrol"):
            contestants.append(_contestant(name, Role.DEFENDER, pool, graph))
        elif name == "heuristic":
            contestants.append(_contestant(name, Role.ATTACKER, pool, graph))
        else:
            raise UnknownService(f"{name!r} is not a pool service")
    roles = [Role(r) for r in args.role] if args.role else None
    report = run_tournament(contestants, graph, sims=args.sims, episodes=args.episodes,
                            base_seed=args.seed, roles=roles, parallel=args.parallel)
    if args.json:
        print(report.to_json())
    else:
        print(report.render())
    return EXIT_OK


# -- pool -------------------------------------------------------------------------------


def cmd_pool(args) -> int:
    pool = _pool(args)
    if args.rebuild_index:
        pool.rebuild_index()
    if args.lineage:
        chain = pool.lineage(args.lineage)
        print(" <- ".join(s.id for s in chain))
        return EXIT_OK
    services = pool.query(role=args.role, env=args.env, algorithm=args.algo,
                          adversary=args.adversary)
    if args.json:
        print(json.dumps([s.to_dict() for s in services], indent=2, sort_keys=True))
        return EXIT_OK
    for s in services:
        print(f"{s.id:<10} {s.role:<8} {s.algorithm:<16} adversary={s.adversary:<6} "
              f"pretrain={s.pretrain:<6} env={s.env['scenario_id']}")
    return EXIT_OK


# -- wiring -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="issf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"issf {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenario=True, pool=True):
        if scenario:
            sp.add_argument("--scenario", default="three_service_chain",
                            help="scenario file or catalog name (default: three_service_chain)")
        if pool:
            sp.add_argument("--pool", help="service pool directory (default: $ISSF_POOL or ./pool)")
        sp.add_argument("--json", action="store_true", help="machine-readable output")

    sp = sub.add_parser("env-validate", help="validate a scenario file")
    sp.add_argument("path")
    sp.add_argument("--verbose", dest="details", action="store_true",
                    help="also print edges and env hash")
    sp.set_defaults(func=cmd_env_validate)

    sp = sub.add_parser("train", help="train and publish services")
    common(sp)
    sp.add_argument("--plan", help="training plan JSON (path or shipped plan name)")
    sp.add_argument("--role", choices=[r.value for r in Role])
    sp.add_argument("--algo", default="qlearning", choices=["qlearning", "policy_gradient", "random"])
    sp.add_argument("--adversary", default="NA", help="adversary service id, or NA")
    sp.add_argument("--pretrain", default="NA", help="service id to fine-tune, or NA")
    sp.add_argument("--id", help="id for the new service (default derived from the lineage)")
    sp.add_argument("--label", help="algorithm label stored in the manifest")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--timesteps", type=_positive)
    sp.add_argument("--max-episode-length", type=_positive)
    sp.add_argument("--learning-start", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("simulate", help="run one attacker against one defender")
    common(sp)
    sp.add_argument("--attacker", required=True,
                    help=f"pool id or built-in ({', '.join(BUILTIN_ATTACKERS)})")
    sp.add_argument("--defender", default="NA",
                    help=f"pool id or built-in ({', '.join(BUILTIN_DEFENDERS)})")
    sp.add_argument("--episodes", type=_positive, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trace-out", help="write JSONL traces here")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("benchmark", help="ELO tournament over pool services")
    common(sp)
    sp.add_argument("--services", nargs="+", help="service ids (default: whole pool)")
    sp.add_argument("--role", nargs="+", choices=[r.value for r in Role],
                    help="which side(s) to rank (default: every side with two or more services)")
    sp.add_argument("--sims", type=_positive, default=25)
    sp.add_argument("--episodes", type=_positive, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--parallel", type=_positive, default=1)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("pool", help="list or inspect published services")
    common(sp, scenario=False)
    sp.add_argument("--role")
    sp.add_argument("--env")
    sp.add_argument("--algo")
    sp.add_argument("--adversary")
    sp.add_argument("--lineage", metavar="ID", help="print the pretrain chain of a service")
    sp.add_argument("--rebuild-index", action="store_true")
    sp.set_defaults(func=cmd_pool)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"issf: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _INPUT_ERRORS as exc:
        print(f"issf: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (IssfError, OSError) as exc:
        print(f"issf: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
