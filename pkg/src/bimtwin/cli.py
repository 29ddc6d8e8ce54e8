"""Command-line entry point.

Subcommands:

    run         serve one interactive session (scenario endpoint + socket)
    headless    policy-driven run, prints the outcome
    experiment  block pick-and-place evaluation over several gap sizes
    validate    scenario lint
    export      checkpoint document re-derived from a session log
    replay      re-derive final state from a log and print a summary

Everything is deterministic given --seed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .bim_repo import ScenarioError, export_checkpoint, load_scenario
from .geometry import Pose, quat_from_axis_angle, quat_mul, quat_normalize
from .perception import NoiseModel
from .scenarios import make_blocks_scenario, make_drywall_scenario
from .workflow import AutoApprovePolicy, WorkflowState, replay_log, run_headless


def _load_document(args) -> str:
    """Scenario from a path, or a bundled one by name (drywall | blocks)."""
    name = args.scenario
    path = Path(name)
    if path.exists():
        return path.read_text(encoding="utf-8")
    if name == "drywall":
        return json.dumps(make_drywall_scenario())
    if name == "blocks":
        gap = args.gap[0] if getattr(args, "gap", None) else 0.01
        return json.dumps(make_blocks_scenario(gap=gap))
    raise SystemExit(f"scenario {name!r}: no such file and not a bundled name (drywall, blocks)")


def _noise_from_args(args, document: str) -> NoiseModel | None:
    if args.noise_sigma_t is None and args.noise_sigma_r is None:
        return None
    base = NoiseModel.from_dict(json.loads(document).get("noise_model", {}))
    return base.replaced(
        sigma_translation=args.noise_sigma_t, sigma_rotation=args.noise_sigma_r
    )


def _parse_deviation(spec: str):
    """id:dx,dy,dz[,yaw_degrees] -> (object id, pose transformer)."""
    try:
        oid, rest = spec.split(":", 1)
        parts = [float(v) for v in rest.split(",")]
        dx, dy, dz = parts[0], parts[1], parts[2]
        yaw = math.radians(parts[3]) if len(parts) > 3 else 0.0
    except (ValueError, IndexError) as exc:
        raise SystemExit(f"bad --deviate spec {spec!r} (want id:dx,dy,dz[,yaw_deg])") from exc

    def apply(pose: Pose) -> Pose:
        q = quat_normalize(quat_mul(quat_from_axis_angle([0, 0, 1], yaw), pose.orientation))
        return Pose(pose.position + np.array([dx, dy, dz]), q)

    return oid, apply


def _world_overrides(args, document: str) -> dict | None:
    if not getattr(args, "deviate", None):
        return None
    repo = load_scenario(document)
    overrides = {}
    for spec in args.deviate:
        oid, apply = _parse_deviation(spec)
        if oid in repo.objects:
            overrides[oid] = apply(repo.objects[oid].pose)
        elif oid in repo.stacks:
            overrides[oid] = apply(repo.stacks[oid].base_pose)
        else:
            raise SystemExit(f"--deviate: unknown object {oid!r}")
    return overrides


def cmd_validate(args) -> int:
    try:
        repo = load_scenario(_load_document(args))
    except ScenarioError as exc:
        for oid, rule in exc.problems:
            print(f"INVALID {oid}: {rule}")
        return 1
    print(
        f"OK {repo.name}: {len(repo.objects)} objects, {len(repo.targets())} targets, "
        f"{len(repo.stacks)} stacks"
    )
    return 0


def cmd_headless(args) -> int:
    document = _load_document(args)
    engine = run_headless(
        document,
        seed=args.seed,
        noise=_noise_from_args(args, document),
        world_overrides=_world_overrides(args, document),
        policy=AutoApprovePolicy(),
    )
    trial = engine.trial
    summary = {
        "scenario": engine.repo.name,
        "seed": args.seed,
        "final_state": engine.state.value,
        "success": trial.success,
        "placements": trial.placements,
        "replan_requests": engine.replan_total,
        "failure_cause": trial.failure_cause,
        "outcomes": [
            {"target": o.target_id, "outcome": o.outcome, "cause": o.failure_cause}
            for o in trial.outcomes
        ],
        "human_decision_seconds": round(trial.decision_seconds, 2),
        "robot_seconds": round(trial.robot_seconds, 2),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.log:
        Path(args.log).write_text(engine.log_text(), encoding="utf-8")
    if args.out:
        Path(args.out).write_text(engine.last_checkpoint or export_checkpoint(engine.repo), encoding="utf-8")
    return 0 if trial.success else 1


def cmd_experiment(args) -> int:
    gaps = args.gap or list(ex.DEFAULT_GAPS)
    noise = NoiseModel(args.noise_sigma_t or 0.0, args.noise_sigma_r or 0.0, seed=0)
    records = ex.run_experiment(
        gaps=gaps,
        trials=args.trials,
        noise=noise,
        stud_fraction=args.stud_fraction,
        seed=args.seed,
    )
    meta = {
        "trials_per_gap": args.trials,
        "noise_sigma_translation_m": noise.sigma_translation,
        "noise_sigma_rotation_rad": noise.sigma_rotation,
        "stud_fraction": args.stud_fraction,
        "seed": args.seed,
    }
    table = ex.report_table(records)
    print(table, end="")
    if args.out:
        out = Path(args.out)
        out.write_text(ex.report_json(records, meta), encoding="utf-8")
        out.with_suffix(".txt").write_text(table, encoding="utf-8")
        print(f"report written to {out} and {out.with_suffix('.txt')}")
    return 0


def cmd_run(args) -> int:
    from .service import serve

    document = _load_document(args)
    print(f"serving on http://{args.bind}:{args.port} (scenario + /ws)")
    serve(
        document,
        bind=args.bind,
        port=args.port,
        seed=args.seed,
        noise=_noise_from_args(args, document),
    )
    return 0


def cmd_export(args) -> int:
    document = _load_document(args)
    engine = replay_log(document, Path(args.log).read_text(encoding="utf-8"))
    checkpoint = export_checkpoint(engine.repo)
    if args.out:
        Path(args.out).write_text(checkpoint, encoding="utf-8")
        print(f"checkpoint written to {args.out}")
    else:
        print(checkpoint, end="")
    return 0


def cmd_replay(args) -> int:
    document = _load_document(args)
    engine = replay_log(document, Path(args.log).read_text(encoding="utf-8"))
    print(
        json.dumps(
            {
                "final_state": engine.state.value,
                "placements": engine.trial.placements,
                "as_built_records": len(engine.repo.as_built_records),
                "success": engine.trial.success,
            },
            indent=2,
            sort_keys=True,
        )
    )
    if args.out:
        Path(args.out).write_text(export_checkpoint(engine.repo), encoding="utf-8")
    return 0 if engine.state in (WorkflowState.TASK_COMPLETE, WorkflowState.ABORTED) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bimtwin", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True,
                           help="scenario file path, or bundled name (drywall, blocks)")
        p.add_argument("--seed", type=int, default=0, help="master seed (u64)")
        p.add_argument("--noise-sigma-t", type=float, default=None, help="translation sigma, meters")
        p.add_argument("--noise-sigma-r", type=float, default=None, help="rotation sigma, radians")

    p = sub.add_parser("validate", help="lint a scenario document")
    p.add_argument("--scenario", required=True)
    p.add_argument("--gap", type=float, action="append")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("headless", help="policy-driven run")
    common(p)
    p.add_argument("--gap", type=float, action="append", help="gap for the bundled blocks scenario")
    p.add_argument("--deviate", action="append", help="scripted true-pose deviation id:dx,dy,dz[,yaw_deg]")
    p.add_argument("--policy", choices=["auto"], default="auto")
    p.add_argument("--log", help="write the event log here")
    p.add_argument("--out", help="write the checkpoint document here")
    p.set_defaults(fn=cmd_headless)

    p = sub.add_parser("experiment", help="block pick-and-place evaluation")
    p.add_argument("--gap", type=float, action="append", help="repeatable; default 10/5/3/1 mm")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--stud-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma-t", type=float, default=None)
    p.add_argument("--noise-sigma-r", type=float, default=None)
    p.add_argument("--out", help="write JSON (and .txt table) report here")
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("run", help="serve an interactive session")
    common(p)
    p.add_argument("--gap", type=float, action="append")
    p.add_argument("--port", type=int, default=8732)
    p.add_argument("--bind", default="127.0.0.1")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("export", help="checkpoint from a session log")
    p.add_argument("--scenario", required=True)
    p.add_argument("--gap", type=float, action="append")
    p.add_argument("--log", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("replay", help="re-derive final state from a log")
    p.add_argument("--scenario", required=True)
    p.add_argument("--gap", type=float, action="append")
    p.add_argument("--log", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
