"""Block pick-and-place evaluation harness.

Runs seeded headless trials over a set of inter-block gap sizes, with the
boundary stud deliberately deviated into the line for a configurable
fraction of trials (and just clear of it otherwise), and aggregates
success rates, replan counts and failure causes into a report table.

Success rates here are simulation calibration artifacts, not physical
measurements: they depend entirely on the configured localization noise.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .bim_repo import load_scenario
from .perception import NoiseModel
from .scenarios import make_blocks_scenario
from .workflow import AutoApprovePolicy, run_headless

DEFAULT_GAPS = (0.010, 0.005, 0.003, 0.001)
DEFAULT_INTRUSION = 0.008  # stud reaches 8 mm into the first block's footprint
DEFAULT_OUTWARD = 0.001  # or sits 1 mm further out than designed


@dataclass
class ExperimentRecord:
    gap: float
    trials: int
    successes: int = 0
    successful_placements: int = 0
    replan_requests: int = 0
    failure_causes: Counter = field(default_factory=Counter)
    human_seconds: float = 0.0
    robot_seconds: float = 0.0
    suggestions: int = 0
    intruding_trials: int = 0

    @property
    def success_rate(self) -> float:
        return 100.0 * self.successes / self.trials if self.trials else 0.0

    def to_dict(self) -> dict:
        return {
            "gap_m": self.gap,
            "trials": self.trials,
            "successes": self.successes,
            "success_rate_pct": round(self.success_rate, 2),
            "successful_placements": self.successful_placements,
            "replan_requests": self.replan_requests,
            "failure_causes": dict(sorted(self.failure_causes.items())),
            "avg_human_decision_seconds": round(self.human_seconds / self.trials, 2) if self.trials else 0.0,
            "avg_robot_seconds": round(self.robot_seconds / self.trials, 2) if self.trials else 0.0,
            "deviation_suggestions": self.suggestions,
            "intruding_trials": self.intruding_trials,
        }


def stud_schedule(trials: int, fraction: float) -> list:
    """Deterministic, evenly spread intruding-trial flags."""
    flags = []
    acc = 0.0
    for _ in range(trials):
        acc += fraction
        if acc >= 1.0 - 1e-12:
            acc -= 1.0
            flags.append(True)
        else:
            flags.append(False)
    return flags


def run_experiment(
    gaps=DEFAULT_GAPS,
    trials: int = 10,
    noise: NoiseModel | None = None,
    stud_fraction: float = 0.5,
    seed: int = 0,
    intrusion: float = DEFAULT_INTRUSION,
    outward: float = DEFAULT_OUTWARD,
    num_blocks: int = 4,
) -> list:
    """Run `trials` seeded sessions per gap; failures are data, not errors."""
    if any(g <= 0 for g in gaps):
        raise ValueError("gaps must be positive")
    records = []
    for gi, gap in enumerate(gaps):
        doc = make_blocks_scenario(gap=gap, num_blocks=num_blocks)
        stud_design = load_scenario(doc).objects["stud"].pose
        record = ExperimentRecord(gap=gap, trials=trials)
        flags = stud_schedule(trials, stud_fraction)
        for i, intruding in enumerate(flags):
            shift = (gap + intrusion) if intruding else -outward
            trial_seed = seed * 1_000_003 + gi * 10_007 + i
            engine = run_headless(
                doc,
                seed=trial_seed,
                noise=noise,
                world_overrides={"stud": stud_design.translated([shift, 0.0, 0.0])},
                policy=AutoApprovePolicy(),
            )
            trial = engine.trial
            record.intruding_trials += int(intruding)
            record.successes += int(trial.success)
            record.successful_placements += trial.placements
            record.replan_requests += engine.replan_total
            record.human_seconds += trial.decision_seconds
            record.robot_seconds += trial.robot_seconds
            record.suggestions += sum(
                1 for r in engine.event_log if r.kind == "event" and r.name == "deviation-found"
            )
            if trial.failure_cause:
                record.failure_causes[trial.failure_cause] += 1
        records.append(record)
    return records


def report_json(records: list, meta: dict | None = None) -> str:
    return json.dumps(
        {"meta": meta or {}, "records": [r.to_dict() for r in records]},
        indent=2,
        sort_keys=True,
    ) + "\n"


def report_table(records: list) -> str:
    """Aligned text table with the familiar four columns."""
    rows = [("Size of gap", "Success rate (%)", "Replan request / Successful placements",
             "Reason for failure (occurrence)")]
    for r in records:
        causes = ", ".join(f"{k} ({v})" for k, v in sorted(r.failure_causes.items())) or "-"
        rows.append(
            (
                f"{r.gap * 1000:g} mm",
                f"{r.success_rate:.0f}",
                f"{r.replan_requests} / {r.successful_placements}",
                causes,
            )
        )
    widths = [max(len(row[c]) for row in rows) for c in range(4)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[c] for c in range(4)))
    return "\n".join(lines) + "\n"
