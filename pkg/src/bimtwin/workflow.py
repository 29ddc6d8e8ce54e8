"""Collaborative construction state machine.

Sequences install targets, gates every consequential step on a supervisor
decision, and orchestrates scanning, deviation analysis, planning, preview,
execution, as-built recording and checkpointing. Strict single writer: all
commands (UI, CLI, policy, safety system) funnel through ``handle`` in one
ordered stream, and the append-only event log makes any session replayable.

State map (autonomous transitions in ``step``, command transitions in
``handle``):

    Idle -> Scanning -> FetchTarget -> AwaitTargetConfirm -> DeviationAnalysis
      -> [AwaitAdaptationDecision] -> Planning -> AwaitPlanApproval
      -> (Previewing ->) Executing -> RecordingAsBuilt -> FetchTarget ...
      -> Checkpointing -> TaskComplete

Executing can only be entered from AwaitPlanApproval via ApprovePlan.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import adaptation as adapt
from . import bim_repo as br
from . import perception as pc
from . import robot as rb
from .geometry import Pose, RigidTransform, compose, invert


class WorkflowState(Enum):
    IDLE = "idle"
    SCANNING = "scanning"
    FETCH_TARGET = "fetch-target"
    AWAIT_TARGET_CONFIRM = "await-target-confirm"
    DEVIATION_ANALYSIS = "deviation-analysis"
    AWAIT_ADAPTATION_DECISION = "await-adaptation-decision"
    PLANNING = "planning"
    AWAIT_PLAN_APPROVAL = "await-plan-approval"
    PREVIEWING = "previewing"
    EXECUTING = "executing"
    SAFETY_HOLD = "safety-hold"
    RECORDING_AS_BUILT = "recording-as-built"
    MANUAL_RESOLUTION = "manual-resolution"
    CHECKPOINTING = "checkpointing"
    TASK_COMPLETE = "task-complete"
    ABORTED = "aborted"


AUTONOMOUS_STATES = {
    WorkflowState.SCANNING,
    WorkflowState.FETCH_TARGET,
    WorkflowState.DEVIATION_ANALYSIS,
    WorkflowState.PLANNING,
    WorkflowState.PREVIEWING,
    WorkflowState.EXECUTING,
    WorkflowState.RECORDING_AS_BUILT,
    WorkflowState.CHECKPOINTING,
}

AWAIT_STATES = {
    WorkflowState.AWAIT_TARGET_CONFIRM,
    WorkflowState.AWAIT_ADAPTATION_DECISION,
    WorkflowState.AWAIT_PLAN_APPROVAL,
    WorkflowState.SAFETY_HOLD,
    WorkflowState.MANUAL_RESOLUTION,
}

TERMINAL_STATES = {WorkflowState.TASK_COMPLETE, WorkflowState.ABORTED}


@dataclass(frozen=True)
class Command:
    name: str
    data: dict = field(default_factory=dict)


def confirm_target() -> Command:
    return Command("ConfirmTarget")


def select_target(target_id: str) -> Command:
    return Command("SelectTarget", {"target_id": target_id})


def accept_suggestion() -> Command:
    return Command("AcceptSuggestion")


def adjust_pose(pose: Pose) -> Command:
    return Command("AdjustPose", {"pose": br.pose_to_dict(pose)})


def keep_original() -> Command:
    return Command("KeepOriginal")


def manual_resolve(placed_pose: Pose | None = None, boxes: list | None = None, note: str = "manual replacement") -> Command:
    data = {"note": note}
    if placed_pose is not None:
        data["pose"] = br.pose_to_dict(placed_pose)
    if boxes is not None:
        data["boxes"] = [br.obb_to_dict(b) for b in boxes]
    return Command("ManualResolve", data)


def request_preview() -> Command:
    return Command("RequestPreview")


def approve_plan() -> Command:
    return Command("ApprovePlan")


def request_replan() -> Command:
    return Command("RequestReplan")


def confirm_safety() -> Command:
    return Command("ConfirmSafety")


def request_checkpoint() -> Command:
    return Command("RequestCheckpoint")


def abort() -> Command:
    return Command("Abort")


# which commands are legal in which state; RequestCheckpoint is legal anywhere
LEGALITY = {
    WorkflowState.AWAIT_TARGET_CONFIRM: {"ConfirmTarget", "SelectTarget", "Abort"},
    WorkflowState.AWAIT_ADAPTATION_DECISION: {
        "AcceptSuggestion", "AdjustPose", "KeepOriginal", "ManualResolve", "Abort",
    },
    WorkflowState.AWAIT_PLAN_APPROVAL: {"RequestPreview", "ApprovePlan", "RequestReplan", "Abort"},
    WorkflowState.SAFETY_HOLD: {"ConfirmSafety", "Abort"},
    WorkflowState.MANUAL_RESOLUTION: {"ManualResolve", "SelectTarget", "Abort"},
    WorkflowState.EXECUTING: {"SafetyInterrupt"},
}

FAILURE_CAUSES = {
    "slab": "hit-ground",
    "ground": "hit-ground",
    "stud": "collide-with-stud",
    "block": "collide-with-block",
}


def failure_cause_for(workpiece_type: str, object_id: str) -> str:
    if workpiece_type in FAILURE_CAUSES:
        return FAILURE_CAUSES[workpiece_type]
    return f"collide-with-{workpiece_type or object_id}"


@dataclass
class LogRecord:
    seq: int
    time: float
    kind: str  # event | command
    name: str
    state: str
    data: dict
    applied: bool | None = None  # commands only

    def to_json(self) -> str:
        record = {
            "seq": self.seq,
            "time": round(self.time, 9),
            "kind": self.kind,
            "name": self.name,
            "state": self.state,
            "data": self.data,
        }
        if self.applied is not None:
            record["applied"] = self.applied
        return json.dumps(record, sort_keys=True)


@dataclass
class TargetOutcome:
    target_id: str
    outcome: str  # installed | manual | failed | unplaced
    failure_cause: str | None = None
    replans: int = 0


@dataclass
class TrialRecord:
    """Outcome of one headless run."""

    success: bool = False
    placements: int = 0
    replan_requests: int = 0
    failure_cause: str | None = None
    outcomes: list = field(default_factory=list)
    decision_seconds: float = 0.0
    robot_seconds: float = 0.0


class Engine:
    """Owns the repository, ground truth, robot and the event log."""

    def __init__(
        self,
        repo: br.BimRepository,
        world: pc.GroundTruthWorld,
        seed: int = 0,
        noise: pc.NoiseModel | None = None,
        emit_execution_states: bool = True,
        fast_execution: bool = False,
    ):
        self.repo = repo
        self.world = world
        self.seed = int(seed)
        self.cell = rb.WorkCell.from_dict(repo.workcell)
        self.adapt_cfg = adapt.AdaptationConfig.from_workcell(repo.workcell)
        # the session seed is mixed into the scan seed so one scenario file
        # serves any number of independent runs
        self.base_noise = noise if noise is not None else pc.NoiseModel.from_dict(repo.noise_model)
        self.noise = self.base_noise.replaced(seed=self.base_noise.seed + self.seed)
        self.emit_execution_states = emit_execution_states
        self.fast_execution = fast_execution

        self.state = WorkflowState.IDLE
        self.session_id = f"s{self.seed:016x}"
        self.sim_time = 0.0
        self.event_log: list = []
        self.observers: list = []

        self.robot_state = rb.RobotState(self.cell.home_pose)
        self.current_target: str | None = None
        self.pending_report = None
        self.pending_suggestion = None
        self.approved_pose: Pose | None = None
        self.pending_plan: rb.MotionPlan | None = None
        self.pending_plan_context: dict | None = None
        self.execution: rb.Execution | None = None
        self._exec_tick = 0
        self._exec_start_time = 0.0
        self.replans_used = 0
        self.replan_total = 0
        self._plan_counter = 0
        self.last_failure: TargetOutcome | None = None
        self.trial = TrialRecord()
        self.last_checkpoint: str | None = None

    # -- log plumbing --------------------------------------------------------

    def _append(self, record: LogRecord):
        self.event_log.append(record)
        for fn in self.observers:
            fn(record)

    def emit(self, name: str, data: dict | None = None):
        self._append(
            LogRecord(
                seq=len(self.event_log) + 1,
                time=self.sim_time,
                kind="event",
                name=name,
                state=self.state.value,
                data=data or {},
            )
        )

    def _log_command(self, cmd: Command, applied: bool):
        self._append(
            LogRecord(
                seq=len(self.event_log) + 1,
                time=self.sim_time,
                kind="command",
                name=cmd.name,
                state=self.state.value,
                data=cmd.data,
                applied=applied,
            )
        )

    def _enter(self, state: WorkflowState, event: str | None = None, data: dict | None = None):
        self.state = state
        if event is not None:
            self.emit(event, data)
        else:
            self.emit("billboard", {"text": f"state: {state.value}"})

    def log_text(self) -> str:
        header = json.dumps(
            {
                "session": self.session_id,
                "scenario": self.repo.name,
                "seed": self.seed,
                "schema_version": 1,
                "noise": {
                    "sigma_translation": self.base_noise.sigma_translation,
                    "sigma_rotation": self.base_noise.sigma_rotation,
                    "seed": self.base_noise.seed,
                },
            },
            sort_keys=True,
        )
        return "\n".join([header] + [r.to_json() for r in self.event_log]) + "\n"

    # -- lifecycle -----------------------------------------------------------

    def start(self):
        """Scan the environment and enter the fetch loop."""
        if self.state != WorkflowState.IDLE:
            raise rb.ExecutionFault(f"start() only from idle, currently {self.state.value}")
        self._enter(WorkflowState.SCANNING, "billboard", {"text": "scanning environment"})
        bindings = pc.build_bindings(self.repo)
        if not bindings:
            self.emit("billboard", {"text": "warning: no markers bound, proceeding with design poses"})
        else:
            detections = pc.scan_environment(self.world, bindings, self.noise)
            for det in detections:
                if det.metadata.get("kind") == "stack":
                    stack = pc.infer_stack(det, self.repo.stacks[det.object_id].item_vertical_pitch)
                    self.repo.update_stack(det.object_id, stack.base_pose, stack.quantity)
                else:
                    self.repo.record_scan(det.object_id, det.pose, time=self.sim_time)
                self.emit(
                    "billboard",
                    {"text": f"scanned {det.object_id}", "object_id": det.object_id,
                     "pose": br.pose_to_dict(det.pose)},
                )
        self._enter(WorkflowState.FETCH_TARGET)

    def step(self):
        """One autonomous transition; no-op outside autonomous states."""
        handler = {
            WorkflowState.FETCH_TARGET: self._step_fetch,
            WorkflowState.DEVIATION_ANALYSIS: self._step_analysis,
            WorkflowState.PLANNING: self._step_planning,
            WorkflowState.PREVIEWING: self._step_preview_done,
            WorkflowState.EXECUTING: self._step_execute,
            WorkflowState.RECORDING_AS_BUILT: self._step_record,
            WorkflowState.CHECKPOINTING: self._step_checkpoint,
        }.get(self.state)
        if handler is None:
            return
        handler()

    # -- autonomous steps ------------------------------------------------------

    def _step_fetch(self):
        target = self.repo.next_target()
        if target is None:
            self._enter(WorkflowState.CHECKPOINTING, "billboard", {"text": "queue empty, checkpointing"})
            return
        self.current_target = target.id
        self.replans_used = 0
        self._enter(
            WorkflowState.AWAIT_TARGET_CONFIRM,
            "target-proposed",
            {"target_id": target.id, "highlight": True, "sequence_index": target.sequence_index},
        )

    def _step_analysis(self):
        try:
            report, suggestion = adapt.analyze_target(self.repo, self.current_target, self.adapt_cfg)
        except (adapt.AdaptationError, br.RepositoryError) as exc:
            self._fail_to_manual(f"deviation analysis failed: {exc}")
            return
        self.pending_report = report
        self.pending_suggestion = suggestion
        if report.kind == adapt.DeviationKind.NONE:
            self.approved_pose = suggestion.pose
            self._enter(WorkflowState.PLANNING, "billboard", {"text": "no deviation, original pose"})
            return
        self._enter(
            WorkflowState.AWAIT_ADAPTATION_DECISION,
            "deviation-found",
            {
                "report": {
                    "kind": report.kind.value,
                    "target_id": report.target_id,
                    "reference_id": report.reference_id,
                    "magnitude_translation": report.magnitude_translation,
                    "magnitude_rotation": report.magnitude_rotation,
                },
                "suggestion": {
                    "pose": br.pose_to_dict(suggestion.pose),
                    "basis": suggestion.basis.value,
                    "affects_subsequent": suggestion.affects_subsequent,
                    "alternatives": list(suggestion.alternatives),
                },
            },
        )

    def _planning_inputs(self):
        target = self.repo.objects[self.current_target]
        stack = self.repo.stack_for_type(target.workpiece_type)
        if stack is None:
            raise rb.PlanningError(f"no material staged for {target.workpiece_type!r}")
        grip = target.grip_indicator.as_transform()
        pick_obj = stack.top_item_pose()
        ee_pick = compose(pick_obj.as_transform(), grip).as_pose()
        place_obj = self.approved_pose
        raised = Pose(
            place_obj.position + np.array([0.0, 0.0, self.cell.drop_height]), place_obj.orientation
        )
        ee_place = compose(raised.as_transform(), grip).as_pose()
        payload_in_ee = invert(grip)
        payload_boxes_ee = [b.transformed(payload_in_ee) for b in target.geometry]
        scene = [
            (oid, box)
            for oid, box in self.repo.collision_scene(exclude_ids={stack.id})
        ]
        approach = [(stack.id, box) for box in self.repo.stack_boxes(stack.id, skip_top=True)]
        return target, stack, grip, pick_obj, ee_pick, place_obj, ee_place, payload_in_ee, payload_boxes_ee, scene, approach

    def _step_planning(self):
        self.emit("billboard", {"text": "calculating the motion plan"})
        try:
            (target, stack, grip, pick_obj, ee_pick, place_obj, ee_place,
             payload_in_ee, payload_boxes_ee, scene, approach) = self._planning_inputs()
            seed = self.seed * 100003 + self._plan_counter
            self._plan_counter += 1
            plan = rb.plan_pick_and_place(
                self.robot_state, ee_pick, ee_place, payload_boxes_ee, scene, self.cell, seed, approach
            )
        except rb.PlanningError as exc:
            self._fail_to_manual(f"planning failed: {exc}")
            return
        self.pending_plan = plan
        self.pending_plan_context = {
            "stack_id": stack.id,
            "grip": grip,
            "payload_in_ee": payload_in_ee,
            "payload_boxes_ee": payload_boxes_ee,
            "place_obj": place_obj,
            "pick_obj": pick_obj,
        }
        self._enter(
            WorkflowState.AWAIT_PLAN_APPROVAL,
            "plan-ready",
            {
                "plan_id": plan.plan_id,
                "waypoints": len(plan.waypoints),
                "path_length": plan.path_length(),
                "straight_line": plan.straight_line_distance(),
            },
        )

    def _step_preview_done(self):
        self._enter(WorkflowState.AWAIT_PLAN_APPROVAL, "billboard", {"text": "preview finished"})

    def _true_obstacles(self, exclude_stack: str):
        obstacles = []
        for oid, pose in self.world.true_poses.items():
            obj = self.repo.objects.get(oid)
            if obj is None or obj.layer == br.Layer.VIRTUAL_COLLISION:
                continue
            t = pose.as_transform()
            for b in obj.geometry:
                obstacles.append((oid, b.transformed(t)))
        for target_id, pose in self.world.placed.items():
            twin = self.repo.as_built_of(target_id)
            geometry = twin.geometry if twin is not None else self.repo.objects[target_id].geometry
            t = pose.as_transform()
            for b in geometry:
                obstacles.append((target_id, b.transformed(t)))
        for sid, s in self.world.true_stacks.items():
            if sid == exclude_stack:
                continue
            proto = self.repo.item_geometry(self.repo.stacks[sid].workpiece_type)
            for k in range(s["quantity"]):
                item = s["base_pose"].translated([0, 0, k * s["pitch"]])
                t = item.as_transform()
                for b in proto:
                    obstacles.append((sid, b.transformed(t)))
        return obstacles

    def _begin_execution(self):
        ctx = self.pending_plan_context
        target = self.repo.objects[self.current_target]
        stack_id = ctx["stack_id"]
        detected_top = ctx["pick_obj"]
        true_top = self.world.stack_top_pose(stack_id)
        raw_error = compose(invert(detected_top.as_transform()), true_top.as_transform())
        grasp_error = rb.compensate_grasp_error(raw_error, ctx["grip"].rotation, self.cell.jaw_axis)
        payload = rb.Payload(
            object_id=target.id,
            boxes_local=list(target.geometry),
            in_ee=ctx["payload_in_ee"],
            true_error=grasp_error,
        )
        settle_to = None
        seat_id = None
        if target.relationship.kind == br.RelationshipKind.SEATED and target.relationship.parent_id:
            seat_id = target.relationship.parent_id
            seat_obj = self.repo.objects[seat_id]
            seat_pose = self.world.true_poses.get(seat_id, seat_obj.pose)
            t = seat_pose.as_transform()
            settle_to = max(float(np.max(b.transformed(t).corners()[:, 2])) for b in seat_obj.geometry)
        self.execution = rb.Execution(
            self.pending_plan,
            payload,
            ctx["place_obj"],
            self._true_obstacles(exclude_stack=stack_id),
            self.cell,
            settle_to=settle_to,
            seat_id=seat_id,
        )
        self._exec_tick = 0
        self._exec_start_time = self.sim_time

    def _emit_exec_state(self, tick: int):
        state = self.execution.state_at_tick(tick)
        self.emit(
            "execution-state",
            {
                "tick": tick,
                "pose": br.pose_to_dict(state.end_effector_pose),
                "gripper": state.gripper.value,
                "mode": state.mode.value,
                "payload": state.payload.object_id if state.payload else None,
            },
        )

    def _step_execute(self):
        ex = self.execution
        total = ex.num_ticks()
        if self.fast_execution:
            if self.emit_execution_states:
                for k in range(0, total + 1, max(1, self.cell.state_stride)):
                    k = min(k, total)
                    self.sim_time = self._exec_start_time + k * self.cell.tick
                    self._emit_exec_state(k)
            self._exec_tick = total
        else:
            self._exec_tick += 1
            self.sim_time = self._exec_start_time + self._exec_tick * self.cell.tick
            if self.emit_execution_states and (
                self._exec_tick % max(1, self.cell.state_stride) == 0 or self._exec_tick >= total
            ):
                self._emit_exec_state(self._exec_tick)
            if self._exec_tick < total:
                return
        # execution finished
        report = ex.report
        self.sim_time = self._exec_start_time + report.duration
        self.trial.robot_seconds += report.duration
        if report.success:
            self._enter(WorkflowState.RECORDING_AS_BUILT, "billboard", {"text": "recording as-built pose"})
        else:
            oid = report.contact.obstacle_id
            obj = self.repo.objects.get(oid)
            wtype = obj.workpiece_type if obj is not None else self.repo.stacks.get(oid, None)
            if not isinstance(wtype, str):
                wtype = wtype.workpiece_type if wtype is not None else ""
            cause = failure_cause_for(wtype, oid)
            self.last_failure = TargetOutcome(self.current_target, "failed", cause, self.replans_used)
            self.trial.outcomes.append(self.last_failure)
            self.trial.failure_cause = cause
            self._fail_to_manual(f"contact with {oid!r} during execution ({cause})")

    def _step_record(self):
        ex = self.execution
        ctx = self.pending_plan_context
        report = ex.report
        target_id = self.current_target
        self.repo.record_as_built(target_id, report.achieved_pose, time=self.sim_time)
        self.repo.consume_material(ctx["stack_id"])
        self.world.take_from_stack(ctx["stack_id"])
        self.world.record_placed(target_id, report.achieved_true_pose)
        self.robot_state = rb.RobotState(
            ex.plan.waypoints[-1], rb.GripperState.OPEN, None, rb.RobotMode.IDLE
        )
        self.trial.outcomes.append(TargetOutcome(target_id, "installed", None, self.replans_used))
        self.trial.placements += 1
        self.execution = None
        self.pending_plan = None
        self.pending_suggestion = None
        self.approved_pose = None
        self._enter(
            WorkflowState.FETCH_TARGET,
            "target-completed",
            {"target_id": target_id, "pose": br.pose_to_dict(report.achieved_pose)},
        )
        self.current_target = None

    def _step_checkpoint(self):
        self.last_checkpoint = br.export_checkpoint(self.repo)
        self.trial.success = all(o.outcome in ("installed", "manual") for o in self.trial.outcomes) and bool(
            self.trial.outcomes
        ) and self.repo.next_target() is None
        self._enter(WorkflowState.TASK_COMPLETE, "task-finished", {"targets_done": self.trial.placements})

    def _fail_to_manual(self, description: str):
        self.emit("error", {"description": description})
        self._enter(WorkflowState.MANUAL_RESOLUTION, "billboard", {"text": "supervisor intervention required"})

    # -- command handling ------------------------------------------------------

    def handle(self, cmd: Command) -> bool:
        """Apply one supervisor command; illegal commands are rejected without
        any state mutation. Returns True when applied."""
        legal = cmd.name == "RequestCheckpoint" or cmd.name in LEGALITY.get(self.state, set())
        if not legal:
            self._log_command(cmd, applied=False)
            self.emit(
                "error",
                {"description": f"command {cmd.name} is not legal in state {self.state.value}"},
            )
            return False
        if cmd.name != "SafetyInterrupt":
            # synthesized supervisor decision latency; environment signals and
            # rejected commands cost nothing, which keeps replays time-aligned
            self.sim_time += self.cell.decision_seconds
            self.trial.decision_seconds += self.cell.decision_seconds
        self._log_command(cmd, applied=True)
        getattr(self, f"_cmd_{cmd.name}")(cmd)
        return True

    def _cmd_RequestCheckpoint(self, cmd: Command):
        self.last_checkpoint = br.export_checkpoint(self.repo)
        self.emit("billboard", {"text": "checkpoint saved"})

    def _cmd_ConfirmTarget(self, cmd: Command):
        self._enter(WorkflowState.DEVIATION_ANALYSIS, "billboard", {"text": "checking for deviations"})

    def _cmd_SelectTarget(self, cmd: Command):
        tid = cmd.data.get("target_id")
        pending = {t.id for t in self.repo.pending_targets()}
        if tid not in pending:
            self.emit("error", {"description": f"target {tid!r} is not pending"})
            return
        self.current_target = tid
        target = self.repo.objects[tid]
        self._enter(
            WorkflowState.AWAIT_TARGET_CONFIRM,
            "target-proposed",
            {"target_id": tid, "highlight": True, "sequence_index": target.sequence_index},
        )

    def _cmd_AcceptSuggestion(self, cmd: Command):
        suggestion = self.pending_suggestion
        self.approved_pose = suggestion.pose
        if suggestion.affects_subsequent and suggestion.offset_vector is not None:
            # the accepted row offset shifts every later target in the line
            current = self.repo.objects[self.current_target]
            shifted = []
            for t in self.repo.pending_targets():
                if t.id != current.id and t.sequence_index > current.sequence_index:
                    self.repo.shift_target_pose(t.id, suggestion.offset_vector)
                    shifted.append(t.id)
            self.emit(
                "billboard",
                {"text": "offset accepted; subsequent targets shifted",
                 "offset": [float(v) for v in suggestion.offset_vector],
                 "target_ids": shifted},
            )
        self._enter(WorkflowState.PLANNING, "billboard", {"text": "suggestion accepted"})

    def _cmd_AdjustPose(self, cmd: Command):
        pose = br.pose_from_dict(cmd.data["pose"])
        target = self.repo.objects[self.current_target]
        exclude = {target.id}
        if target.relationship.parent_id:
            exclude.add(target.relationship.parent_id)
            built = self.repo.as_built_of(target.relationship.parent_id)
            if built is not None:
                exclude.add(built.id)
        scene = [(oid, b) for oid, b in self.repo.collision_scene() if oid not in exclude]
        intruders = adapt.check_nearby(pose, target.geometry, scene, self.adapt_cfg.clearance)
        if intruders:
            self.emit(
                "error",
                {"description": f"adjusted pose collides with {intruders}", "intruders": intruders},
            )
            return
        self.approved_pose = pose
        self._enter(WorkflowState.PLANNING, "billboard", {"text": "manual pose accepted"})

    def _cmd_KeepOriginal(self, cmd: Command):
        self.approved_pose = self.repo.objects[self.current_target].pose
        self._enter(WorkflowState.PLANNING, "billboard", {"text": "keeping original pose"})

    def _cmd_ManualResolve(self, cmd: Command):
        target = self.repo.objects[self.current_target]
        pose = br.pose_from_dict(cmd.data["pose"]) if "pose" in cmd.data else target.pose
        boxes = [br.obb_from_dict(b) for b in cmd.data["boxes"]] if "boxes" in cmd.data else list(target.geometry)
        try:
            adapt.apply_manual_replacement(
                self.repo, target.id, boxes, pose, time=self.sim_time,
                note=cmd.data.get("note", "manual replacement"),
            )
        except br.RepositoryError as exc:
            self.emit("error", {"description": str(exc)})
            return
        self.trial.outcomes.append(TargetOutcome(target.id, "manual", None, self.replans_used))
        self._enter(
            WorkflowState.FETCH_TARGET,
            "target-completed",
            {"target_id": target.id, "pose": br.pose_to_dict(pose), "manual": True},
        )
        self.current_target = None

    def _cmd_RequestPreview(self, cmd: Command):
        plan = self.pending_plan
        self._enter(
            WorkflowState.PREVIEWING,
            "preview-frames",
            {
                "plan_id": plan.plan_id,
                "waypoints": [br.pose_to_dict(w) for w in plan.waypoints],
                "attach_index": plan.attach_index,
                "detach_index": plan.detach_index,
            },
        )

    def _cmd_ApprovePlan(self, cmd: Command):
        self._begin_execution()
        self._enter(WorkflowState.EXECUTING, "billboard", {"text": "executing approved plan"})

    def _cmd_RequestReplan(self, cmd: Command):
        self.replans_used += 1
        self.replan_total += 1
        if self.replans_used > self.cell.max_replans:
            self._fail_to_manual("replan budget exhausted")
            return
        self.pending_plan = None
        self._enter(WorkflowState.PLANNING, "billboard", {"text": "replanning"})

    def _cmd_ConfirmSafety(self, cmd: Command):
        self._enter(WorkflowState.EXECUTING, "billboard", {"text": "safety confirmed, resuming"})

    def _cmd_Abort(self, cmd: Command):
        for t in self.repo.pending_targets():
            if all(o.target_id != t.id for o in self.trial.outcomes):
                self.trial.outcomes.append(TargetOutcome(t.id, "unplaced"))
        self._enter(WorkflowState.ABORTED, "billboard", {"text": "session aborted"})

    def _cmd_SafetyInterrupt(self, cmd: Command):
        self._enter(WorkflowState.SAFETY_HOLD, "safety-triggered", {"tick": self._exec_tick})

    def safety_interrupt(self) -> bool:
        """Environment signal (light curtain): freeze execution within a tick."""
        return self.handle(Command("SafetyInterrupt"))

    # -- run loops ---------------------------------------------------------------

    def pump(self, policy=None, max_iterations: int = 100000):
        """Advance autonomous states; consult the policy in await states."""
        for _ in range(max_iterations):
            if self.state in TERMINAL_STATES:
                return
            if self.state in AUTONOMOUS_STATES:
                self.step()
                continue
            if policy is None:
                return
            cmd = policy.decide(self)
            if cmd is None:
                return
            self.handle(cmd)
        raise rb.ExecutionFault("pump exceeded its iteration budget")


class AutoApprovePolicy:
    """Total policy: agrees with every robot suggestion, requests a replan
    when the planned path is disproportionately long, aborts on failures."""

    def __init__(self, replan_ratio: float | None = None, max_replans: int | None = None):
        self.replan_ratio = replan_ratio
        self.max_replans = max_replans

    def decide(self, engine: Engine) -> Command | None:
        s = engine.state
        if s == WorkflowState.AWAIT_TARGET_CONFIRM:
            return confirm_target()
        if s == WorkflowState.AWAIT_ADAPTATION_DECISION:
            return accept_suggestion()
        if s == WorkflowState.AWAIT_PLAN_APPROVAL:
            ratio = self.replan_ratio if self.replan_ratio is not None else engine.cell.replan_path_ratio
            cap = self.max_replans if self.max_replans is not None else engine.cell.max_replans
            plan = engine.pending_plan
            straight = max(plan.straight_line_distance(), 1e-6)
            if plan.path_length() > ratio * straight and engine.replans_used < cap:
                return request_replan()
            return approve_plan()
        if s == WorkflowState.SAFETY_HOLD:
            return confirm_safety()
        if s == WorkflowState.MANUAL_RESOLUTION:
            return abort()
        return None


class ScriptedPolicy:
    """Replays a recorded command stream."""

    def __init__(self, commands: list):
        self.queue = list(commands)

    def decide(self, engine: Engine) -> Command | None:
        if not self.queue:
            return None
        return self.queue.pop(0)


def run_headless(
    document: str | dict,
    seed: int = 0,
    noise: pc.NoiseModel | None = None,
    world_overrides: dict | None = None,
    policy=None,
    emit_execution_states: bool = False,
) -> Engine:
    """One policy-driven session from a scenario document to a terminal state."""
    repo = br.load_scenario(document)
    world = pc.GroundTruthWorld.from_repository(repo, world_overrides)
    engine = Engine(
        repo,
        world,
        seed=seed,
        noise=noise,
        emit_execution_states=emit_execution_states,
        fast_execution=True,
    )
    engine.start()
    engine.pump(policy or AutoApprovePolicy())
    return engine


def replay_log(document: str | dict, log_text: str) -> Engine:
    """Re-derive a session's final state from its event log."""
    lines = [ln for ln in log_text.splitlines() if ln.strip()]
    header = json.loads(lines[0])
    commands = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        if rec.get("kind") == "command":
            commands.append(Command(rec["name"], rec.get("data", {})))
    noise = pc.NoiseModel(
        header["noise"]["sigma_translation"],
        header["noise"]["sigma_rotation"],
        header["noise"]["seed"],
    )
    repo = br.load_scenario(document)
    world = pc.GroundTruthWorld.from_repository(repo)
    engine = Engine(
        repo, world, seed=header["seed"], noise=noise,
        emit_execution_states=False, fast_execution=True,
    )
    engine.start()
    engine.pump(ScriptedPolicy(commands))
    return engine
