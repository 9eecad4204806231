"""Command-line harness: training, evaluation, feasibility search, suites, plots.

Exit codes: 0 success, 2 an evaluated run collided, 1 any error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .agent import DDPGAgent
from .env import SCENARIO_IDS, make_scenario
from .evaluation import evaluate, feasibility_oracle, parse_seeds, run_training_suite
from .plotting import KINDS, export_csv, export_svg, read_csv

SEED_ENV = "PLATOON_GUARD_SEED"
EXIT_OK, EXIT_ERROR, EXIT_COLLISION = 0, 1, 2
CONFIG_SECTIONS = ("sim", "scenario", "agent", "training")

DEFAULT_TRAINING = {"episodes": 2000, "stop_at": 22000.0, "window": 30}

log = logging.getLogger("platoon_guard")


def load_config(path) -> dict:
    """Read a JSON config with optional ``sim``, ``scenario``, ``agent`` and
    ``training`` sections. Unknown sections are rejected."""
    if path is None:
        return {k: {} for k in CONFIG_SECTIONS}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    unknown = set(data) - set(CONFIG_SECTIONS)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return {k: dict(data.get(k) or {}) for k in CONFIG_SECTIONS}


def scenario_from_config(cfg: dict, default_id: str = "train_random"):
    """Build a scenario from the ``scenario`` section (``id`` plus overrides)
    and the ``sim`` section (``dt``, ``horizon_steps``, ...)."""
    section = dict(cfg.get("scenario", {}))
    scenario_id = section.pop("id", default_id)
    return make_scenario(scenario_id, **section, **cfg.get("sim", {}))


def resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return None
    try:
        return int(env)
    except ValueError as exc:
        raise ValueError(f"{SEED_ENV} must be an integer, got {env!r}") from exc


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    training = {**DEFAULT_TRAINING, **cfg["training"]}
    if args.episodes is not None:
        training["episodes"] = args.episodes
    seed = resolve_seed(args.seed)
    agent = DDPGAgent(**{**cfg["agent"], "random_state": seed})
    scenario = scenario_from_config(cfg)

    def progress(ep, lg):
        log.info("episode %d return %.0f", ep + 1, lg.returns[-1])

    agent.fit(scenario, episodes=int(training["episodes"]), stop_at=training["stop_at"],
              window=int(training["window"]), callback=progress)
    os.makedirs(args.out, exist_ok=True)
    agent.save(os.path.join(args.out, "checkpoint.json"))
    agent.training_log_.to_json(os.path.join(args.out, "training_log.json"))
    reached = agent.training_log_.first_episode_reaching(22000.0, int(training["window"]))
    print(json.dumps({"episodes": len(agent.training_log_.returns), "reached_22000": reached,
                      "out": args.out}))
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.controller == "rl":
        if not args.checkpoint:
            raise ValueError("--controller rl needs --checkpoint")
        controller = DDPGAgent.load(args.checkpoint)
    else:
        controller = "baseline"
    cfg = load_config(args.config)
    scenario = make_scenario(args.scenario, **cfg["sim"])
    traj, report = evaluate(scenario, controller, seed=resolve_seed(args.seed) or 0,
                            deterministic=True)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        export_csv(traj, os.path.join(args.out, "trajectory.csv"))
        report.to_json(os.path.join(args.out, "report.json"))
        for kind in KINDS:
            export_svg(traj, kind, os.path.join(args.out, f"{kind}.svg"))
    print(report.to_json())
    return EXIT_COLLISION if report.collided else EXIT_OK


def cmd_feasibility(args) -> int:
    res = feasibility_oracle(args.scenario)
    out = {"scenario": args.scenario, "feasible": res.feasible, "plans_checked": res.plans_checked}
    if res.feasible:
        p = res.witness
        out.update(witness={"onset_step": p.onset_step, "decel": p.decel,
                            "terminal_step": p.terminal_step, "terminal_accel": p.terminal_accel},
                   min_gaps=res.min_gaps, verified=res.verified)
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_suite(args) -> int:
    cfg = load_config(args.config)
    training = {**DEFAULT_TRAINING, **cfg["training"]}
    if args.episodes is not None:
        training["episodes"] = args.episodes
    res = run_training_suite(parse_seeds(args.seeds), int(training["episodes"]),
                             scenario=scenario_from_config(cfg), agent_params=cfg["agent"],
                             stop_at=training["stop_at"], window=int(training["window"]),
                             out_dir=args.out, n_jobs=args.jobs)
    print(json.dumps({"seeds": res["seeds"], "reached_22000": res["reached"], "out": args.out}))
    return EXIT_OK


def cmd_plot(args) -> int:
    traj = read_csv(args.inp)
    out = args.out or os.path.splitext(args.inp)[0] + f"_{args.kind}.svg"
    export_svg(traj, args.kind, out)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platoon-guard", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DDPG agent")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    for name in ("eval", "baseline"):
        p = sub.add_parser(name, help="evaluate a controller on a fixed scenario")
        p.add_argument("--scenario", required=True, choices=[s for s in SCENARIO_IDS if s != "train_random"])
        p.add_argument("--controller", choices=("baseline", "rl"),
                       default="baseline")
        p.add_argument("--checkpoint")
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.set_defaults(func=cmd_eval)

    p = sub.add_parser("feasibility", help="search for a collision-free open-loop plan")
    p.add_argument("--scenario", required=True, choices=[s for s in SCENARIO_IDS if s != "train_random"])
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("suite", help="train several seeds and aggregate the curves")
    p.add_argument("--seeds", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("plot", help="render a trajectory CSV as an SVG chart")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; keep 2 reserved for collisions
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
