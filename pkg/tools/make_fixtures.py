#!/usr/bin/env python3
"""Record a real engine session as a frontend test fixture.

The console's integration tests replay these genuinely recorded frames
through a mock transport, so UI behavior is checked against actual engine
output without needing a live server in CI.

Usage: python3 tools/make_fixtures.py
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from bimtwin.bim_repo import load_scenario, pose_to_dict
from bimtwin.perception import GroundTruthWorld
from bimtwin.scenarios import make_blocks_scenario
from bimtwin.workflow import (
    AUTONOMOUS_STATES,
    TERMINAL_STATES,
    AutoApprovePolicy,
    Command,
    Engine,
    WorkflowState,
)


def record_session():
    doc = make_blocks_scenario(gap=0.01)
    repo = load_scenario(doc)
    # stud deviated 12 mm toward the line: 2 mm into the first block's slot,
    # so the robot suggests an offset and the supervisor answers with a
    # 9 mm manual adjustment instead
    stud_true = repo.objects["stud"].pose.translated([0.012, 0.0, 0.0])
    world = GroundTruthWorld.from_repository(repo, {"stud": stud_true})
    engine = Engine(repo, world, seed=2024, fast_execution=True, emit_execution_states=True)
    engine.start()

    adjusted_pose = repo.objects["block-0"].pose.translated([0.009, 0.0, 0.0])
    scripted = [
        Command("ConfirmTarget"),
        Command("AdjustPose", {"pose": pose_to_dict(adjusted_pose)}),
        Command("RequestPreview"),
        Command("ApprovePlan"),
    ]
    auto = AutoApprovePolicy()
    while engine.state not in TERMINAL_STATES:
        if engine.state in AUTONOMOUS_STATES:
            engine.step()
        elif scripted:
            engine.handle(scripted.pop(0))
        else:
            engine.handle(auto.decide(engine))
    assert engine.state == WorkflowState.TASK_COMPLETE, engine.state
    assert engine.trial.placements == 4

    records = []
    for r in engine.event_log:
        entry = {
            "seq": r.seq,
            "time": r.time,
            "kind": r.kind,
            "name": r.name,
            "state": r.state,
            "data": r.data,
        }
        if r.applied is not None:
            entry["applied"] = r.applied
        records.append(entry)
    return {
        "scenario": doc,
        "session": engine.session_id,
        "adjusted_pose": pose_to_dict(adjusted_pose),
        "records": records,
    }


def main():
    out = Path(__file__).resolve().parents[1] / "frontend" / "tests" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    fixture = record_session()
    path = out / "session_blocks.json"
    path.write_text(json.dumps(fixture, sort_keys=True), encoding="utf-8")
    n_cmd = sum(1 for r in fixture["records"] if r["kind"] == "command")
    print(f"wrote {path} ({len(fixture['records'])} records, {n_cmd} commands)")


if __name__ == "__main__":
    main()
