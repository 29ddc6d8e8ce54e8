"""Manipulator simulation: planning, execution, and contact physics.

The robot is a free end-effector body (gripper boxes plus an attached
payload) constrained to a reach envelope; arm kinematics are out of scope.
Planning happens in *believed* coordinates (detected poses), execution
physics in *ground-truth* coordinates. The gap between the two frames is
what produces contact failures: the robot places exactly where it believes
it should, and reality disagrees by the localization error.

Contact detection runs on a spatial grid along the path, never on time
ticks, so the commanded speed scales timestamps without changing any
geometric outcome.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import (
    Obb,
    Pose,
    RigidTransform,
    batch_obb_hits,
    compose,
    interpolate_pose,
    obb_intersects,
    quat_angle,
    quat_conjugate,
    quat_mul_many,
    quat_rotate,
    quat_rotate_many,
    quat_slerp_many,
)
from .bim_repo import obb_from_dict, pose_from_dict


class PlanningError(Exception):
    pass


class UnreachableError(PlanningError):
    pass


class ExecutionFault(Exception):
    pass


class GripperState(Enum):
    OPEN = "open"
    CLOSED = "closed"


class RobotMode(Enum):
    IDLE = "idle"
    MOVING = "moving"
    SAFETY_HOLD = "safety-hold"


_JAW_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class WorkCell:
    reach_envelope: list
    base_travel: float = 4.5
    nominal_speed: float = 0.25
    speed_fraction: float = 1.0
    drop_height: float = 0.002
    safe_height: float = 1.0
    home_pose: Pose = field(default_factory=Pose.identity)
    gripper_boxes: list = field(default_factory=list)
    jaw_axis: str | None = "x"
    checked_step: float = 0.005
    contact_step: float = 0.005
    tick: float = 0.05
    state_stride: int = 25
    max_replans: int = 3
    replan_path_ratio: float = 1.8
    decision_seconds: float = 3.0
    planner_tries: int = 40

    def __post_init__(self):
        if not (0.0 < self.speed_fraction <= 1.0):
            raise ValueError("speed_fraction must be in (0, 1]")
        if self.drop_height < 0.0:
            raise ValueError("drop_height must be non-negative")

    @staticmethod
    def from_dict(d: dict) -> "WorkCell":
        cell = WorkCell(
            reach_envelope=[obb_from_dict(b) for b in d.get("reach_envelope", [])],
            gripper_boxes=[obb_from_dict(b) for b in d.get("gripper_boxes", [])],
        )
        if "home_pose" in d:
            cell.home_pose = pose_from_dict(d["home_pose"])
        for key in (
            "base_travel", "nominal_speed", "speed_fraction", "drop_height", "safe_height",
            "checked_step", "contact_step", "tick", "replan_path_ratio", "decision_seconds",
        ):
            if key in d:
                setattr(cell, key, float(d[key]))
        for key in ("state_stride", "max_replans", "planner_tries"):
            if key in d:
                setattr(cell, key, int(d[key]))
        if "jaw_axis" in d:
            cell.jaw_axis = d["jaw_axis"]
        cell.__post_init__()
        return cell

    @property
    def speed(self) -> float:
        return self.nominal_speed * self.speed_fraction

    def reachable(self, position) -> bool:
        if not self.reach_envelope:
            return True
        return any(box.contains_point(position) for box in self.reach_envelope)


@dataclass
class Payload:
    object_id: str
    boxes_local: list  # object frame
    in_ee: RigidTransform  # believed object pose relative to the end effector
    true_error: RigidTransform  # believed -> true object pose, fixed once grasped

    def believed_boxes_ee(self) -> list:
        return [b.transformed(self.in_ee) for b in self.boxes_local]

    def true_boxes_ee(self) -> list:
        t = compose(self.in_ee, self.true_error)
        return [b.transformed(t) for b in self.boxes_local]


@dataclass
class RobotState:
    end_effector_pose: Pose
    gripper: GripperState = GripperState.OPEN
    payload: Payload | None = None
    mode: RobotMode = RobotMode.IDLE

    def __post_init__(self):
        if self.payload is not None and self.gripper != GripperState.CLOSED:
            raise ValueError("payload requires a closed gripper")


@dataclass
class MotionPlan:
    plan_id: str
    waypoints: list  # end-effector poses, world frame
    attach_index: int
    detach_index: int
    checked_step: float

    def path_length(self) -> float:
        return float(
            sum(
                np.linalg.norm(b.position - a.position)
                for a, b in zip(self.waypoints, self.waypoints[1:])
            )
        )

    def straight_line_distance(self) -> float:
        pick = self.waypoints[self.attach_index].position
        place = self.waypoints[self.detach_index].position
        return float(np.linalg.norm(place - pick))


def compensate_grasp_error(error: RigidTransform, grip_rotation, jaw_axis: str | None) -> RigidTransform:
    """Zero the grasp translation error along the jaw closing axis: the jaws
    center the workpiece in that direction when they close."""
    if jaw_axis is None or jaw_axis not in _JAW_AXES:
        return error
    d_ee = np.array(quat_rotate(grip_rotation, error.translation), dtype=float)
    d_ee[_JAW_AXES[jaw_axis]] = 0.0
    back = quat_rotate(quat_conjugate(np.asarray(grip_rotation, dtype=float)), d_ee)
    return RigidTransform(error.rotation, back)


# ---------------------------------------------------------------------------
# sampled sweeps (shared by planner validation and execution physics)
# ---------------------------------------------------------------------------


def _segment_samples(a: Pose, b: Pose, step: float, swing: float):
    """Fractions sampled along one segment; power-of-two count so finer steps
    refine (never skip) coarser grids."""
    dist = float(np.linalg.norm(b.position - a.position))
    arc = max(dist, quat_angle(a.orientation, b.orientation) * max(swing, 1e-9))
    n = max(1, math.ceil(arc / step))
    n = 1 << (n - 1).bit_length()
    return np.linspace(0.0, 1.0, n + 1), arc


def _poses_along(a: Pose, b: Pose, fractions) -> tuple:
    positions = np.outer(1.0 - fractions, a.position) + np.outer(fractions, b.position)
    quats = quat_slerp_many(a.orientation, b.orientation, fractions)
    return positions, quats


def sweep_segment(a: Pose, b: Pose, body_boxes_ee: list, obstacles: list, step: float):
    """First contact along a->b carrying `body_boxes_ee`; obstacles are
    (object_id, world Obb) pairs. Returns (fraction, object_id) or None."""
    swing = max(
        (float(np.linalg.norm(box.center_pose.position)) + box.bounding_radius() for box in body_boxes_ee),
        default=0.0,
    )
    fractions, _ = _segment_samples(a, b, step, swing)
    positions, quats = _poses_along(a, b, fractions)
    first_idx = None
    first_obj = None
    for box in body_boxes_ee:
        box_pos = positions + quat_rotate_many(quats, box.center_pose.position)
        box_quat = quat_mul_many(quats, box.center_pose.orientation)
        for oid, obstacle in obstacles:
            mask = batch_obb_hits(box_pos, box_quat, box.half_extents, obstacle)
            if mask.any():
                idx = int(np.argmax(mask))
                if first_idx is None or idx < first_idx:
                    first_idx, first_obj = idx, oid
    if first_idx is None:
        return None
    return float(fractions[first_idx]), first_obj


def sweep_plan(plan: MotionPlan, gripper_boxes: list, payload_boxes_ee: list, obstacles_fn, step: float):
    """Sweep an entire plan. `obstacles_fn(segment_index, carrying)` supplies
    the obstacle set; returns (segment_index, fraction, object_id) or None."""
    for i in range(len(plan.waypoints) - 1):
        carrying = plan.attach_index <= i < plan.detach_index
        body = list(gripper_boxes) + (list(payload_boxes_ee) if carrying else [])
        obstacles = obstacles_fn(i, carrying)
        hit = sweep_segment(plan.waypoints[i], plan.waypoints[i + 1], body, obstacles, step)
        if hit is not None:
            return i, hit[0], hit[1]
    return None


# ---------------------------------------------------------------------------
# planner
# ---------------------------------------------------------------------------


def _plan_id(seed: int, attempt: int, waypoints: list) -> str:
    h = hashlib.sha1()
    h.update(f"{seed}:{attempt}".encode())
    for w in waypoints:
        h.update(np.asarray(w.position).tobytes())
        h.update(np.asarray(w.orientation).tobytes())
    return "plan-" + h.hexdigest()[:12]


def plan_pick_and_place(
    state: RobotState,
    pick: Pose,
    place: Pose,
    payload_boxes_ee: list,
    scene: list,
    cell: WorkCell,
    seed: int,
    approach_obstacles: list = (),
) -> MotionPlan:
    """Collision-checked pick-and-place plan between end-effector poses.

    `scene` applies to the whole plan; `approach_obstacles` only while the
    gripper is still empty (the pick stack itself: the carried item may brush
    its own stack on lift-off, which is a grasp transient, not a collision).
    Waypoint heights and the carry via point take seeded jitter, so a new
    seed yields a visibly different plan over the same endpoints.
    """
    if state.payload is not None:
        raise PlanningError("gripper already holds a payload")
    for name, pose in (("pick", pick), ("place", place)):
        if not cell.reachable(pose.position):
            raise UnreachableError(f"{name} pose {np.round(pose.position, 3)} outside the reach envelope")
    rng = np.random.default_rng(seed)

    def obstacles_fn(segment_index, carrying):
        if carrying:
            return scene
        return list(scene) + list(approach_obstacles)

    last_error = "no candidate produced"
    for attempt in range(max(1, cell.planner_tries)):
        safe_z = cell.safe_height + rng.uniform(0.0, 0.12)
        above_pick = Pose(np.array([pick.position[0], pick.position[1], safe_z]), pick.orientation)
        above_place = Pose(np.array([place.position[0], place.position[1], safe_z]), place.orientation)
        mid_xy = 0.5 * (pick.position[:2] + place.position[:2]) + rng.uniform(-0.08, 0.08, size=2)
        via = Pose(
            np.array([mid_xy[0], mid_xy[1], safe_z]),
            interpolate_pose(pick, place, 0.5).orientation,
        )
        waypoints = [state.end_effector_pose, above_pick, pick, above_pick, via, above_place, place]
        if attempt >= 2:
            # randomized fallback: extra via points drawn inside the envelope
            extra = []
            for _ in range(attempt % 3 + 1):
                box = cell.reach_envelope[rng.integers(len(cell.reach_envelope))] if cell.reach_envelope else None
                if box is None:
                    break
                local = rng.uniform(-1.0, 1.0, size=3) * box.half_extents * 0.8
                p = box.center_pose.as_transform().apply(local)
                extra.append(Pose(p, via.orientation))
            waypoints = [state.end_effector_pose, above_pick, pick, above_pick, *extra, above_place, place]
        if not all(cell.reachable(w.position) for w in waypoints):
            last_error = "candidate waypoint outside the reach envelope"
            continue
        plan = MotionPlan(
            plan_id=_plan_id(seed, attempt, waypoints),
            waypoints=waypoints,
            attach_index=2,
            detach_index=len(waypoints) - 1,
            checked_step=cell.checked_step,
        )
        hit = sweep_plan(plan, cell.gripper_boxes, payload_boxes_ee, obstacles_fn, cell.checked_step)
        if hit is None:
            return plan
        last_error = f"candidate collides with {hit[2]!r}"
    raise PlanningError(f"no collision-free plan within {cell.planner_tries} attempts: {last_error}")


def replan(
    previous: MotionPlan,
    state: RobotState,
    payload_boxes_ee: list,
    scene: list,
    cell: WorkCell,
    seed: int,
    approach_obstacles: list = (),
) -> MotionPlan:
    """Fresh plan over the previous endpoints with a new seed."""
    plan = plan_pick_and_place(
        state,
        previous.waypoints[previous.attach_index],
        previous.waypoints[previous.detach_index],
        payload_boxes_ee,
        scene,
        cell,
        seed,
        approach_obstacles,
    )
    if plan.plan_id == previous.plan_id:
        plan.plan_id = plan.plan_id + "-r"
    return plan


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


@dataclass
class ContactEvent:
    obstacle_id: str
    segment_index: int
    fraction: float
    time: float


@dataclass
class ExecutionReport:
    success: bool
    plan_id: str
    achieved_pose: Pose | None  # believed/recorded object pose
    achieved_true_pose: Pose | None
    contact: ContactEvent | None
    duration: float


class Execution:
    """Deterministic playback of one approved plan against ground truth.

    All contact answers are precomputed on the spatial grid; ticking only
    interpolates the synchronized-state stream, so interrupts never change
    the path and speed never changes the physics.
    """

    def __init__(
        self,
        plan: MotionPlan,
        payload: Payload,
        place_object_pose: Pose,
        true_obstacles: list,
        cell: WorkCell,
        settle_to: float | None = None,
        seat_id: str | None = None,
    ):
        self.plan = plan
        self.payload = payload
        self.place_object_pose = place_object_pose
        self.cell = cell
        self.true_obstacles = true_obstacles
        self.settle_to = settle_to
        self.seat_id = seat_id  # resting contact with the seat is intended
        self._segment_arcs = []
        swing = self._swing_radius()
        for a, b in zip(plan.waypoints, plan.waypoints[1:]):
            dist = float(np.linalg.norm(b.position - a.position))
            arc = max(dist, quat_angle(a.orientation, b.orientation) * swing)
            self._segment_arcs.append(arc)
        self.total_arc = float(sum(self._segment_arcs))
        self.duration = self.total_arc / self.cell.speed if self.cell.speed > 0 else 0.0
        self.contact = self._find_first_contact()
        self.report = self._conclude()

    def _swing_radius(self) -> float:
        boxes = list(self.cell.gripper_boxes) + self.payload.true_boxes_ee()
        return max(
            (float(np.linalg.norm(b.center_pose.position)) + b.bounding_radius() for b in boxes),
            default=0.1,
        )

    def _find_first_contact(self) -> ContactEvent | None:
        plan = self.plan
        arc_before = 0.0
        for i in range(len(plan.waypoints) - 1):
            carrying = plan.attach_index <= i < plan.detach_index
            body = list(self.cell.gripper_boxes)
            if carrying:
                body += self.payload.true_boxes_ee()
            hit = sweep_segment(
                plan.waypoints[i], plan.waypoints[i + 1], body, self.true_obstacles, self.cell.contact_step
            )
            if hit is not None:
                fraction, oid = hit
                t = (arc_before + fraction * self._segment_arcs[i]) / self.cell.speed
                return ContactEvent(oid, i, fraction, t)
            arc_before += self._segment_arcs[i]
        return None

    def _settled_true_pose(self) -> Pose:
        """Ground-truth rest pose of the released payload."""
        release_ee = self.plan.waypoints[self.plan.detach_index]
        true_obj = compose(
            release_ee.as_transform(), compose(self.payload.in_ee, self.payload.true_error)
        ).as_pose()
        if self.settle_to is None:
            # held in place (e.g. magnets): lands the drop height lower,
            # mirroring the believed-record convention
            return Pose(true_obj.position - np.array([0.0, 0.0, self.cell.drop_height]), true_obj.orientation)
        # dropped: the lowest corner comes to rest on the support plane
        t = true_obj.as_transform()
        lowest = min(
            float(np.min(b.transformed(t).corners()[:, 2])) for b in self.payload.boxes_local
        )
        return Pose(
            true_obj.position + np.array([0.0, 0.0, self.settle_to - lowest]),
            true_obj.orientation,
        )

    def _conclude(self) -> ExecutionReport:
        if self.contact is not None:
            return ExecutionReport(
                success=False,
                plan_id=self.plan.plan_id,
                achieved_pose=None,
                achieved_true_pose=None,
                contact=self.contact,
                duration=self.contact.time,
            )
        true_pose = self._settled_true_pose()
        # the dropped piece may still land against a neighbor it never swept
        t = true_pose.as_transform()
        for oid, obstacle in self.true_obstacles:
            if oid == self.seat_id:
                continue
            if any(obb_intersects(b.transformed(t), obstacle) for b in self.payload.boxes_local):
                return ExecutionReport(
                    success=False,
                    plan_id=self.plan.plan_id,
                    achieved_pose=None,
                    achieved_true_pose=true_pose,
                    contact=ContactEvent(oid, len(self.plan.waypoints) - 2, 1.0, self.duration),
                    duration=self.duration,
                )
        return ExecutionReport(
            success=True,
            plan_id=self.plan.plan_id,
            achieved_pose=self.place_object_pose,
            achieved_true_pose=true_pose,
            contact=None,
            duration=self.duration,
        )

    # -- state stream --------------------------------------------------------

    def pose_at_arc(self, s: float) -> Pose:
        s = min(max(s, 0.0), self.total_arc)
        for i, arc in enumerate(self._segment_arcs):
            if s <= arc or i == len(self._segment_arcs) - 1:
                f = 0.0 if arc <= 1e-12 else s / arc
                return interpolate_pose(self.plan.waypoints[i], self.plan.waypoints[i + 1], min(f, 1.0))
            s -= arc
        return self.plan.waypoints[-1]

    def arc_at_time(self, t: float) -> float:
        return min(self.total_arc, t * self.cell.speed)

    def num_ticks(self) -> int:
        end = self.contact.time if self.contact is not None else self.duration
        return max(1, int(math.ceil(end / self.cell.tick)))

    def state_at_tick(self, k: int) -> RobotState:
        end = self.contact.time if self.contact is not None else self.duration
        t = min(k * self.cell.tick, end)
        pose = self.pose_at_arc(self.arc_at_time(t))
        arc = self.arc_at_time(t)
        attach_arc = sum(self._segment_arcs[: self.plan.attach_index])
        detach_arc = sum(self._segment_arcs[: self.plan.detach_index])
        holding = attach_arc <= arc < detach_arc or (self.contact is not None and arc >= attach_arc)
        return RobotState(
            end_effector_pose=pose,
            gripper=GripperState.CLOSED if holding else GripperState.OPEN,
            payload=self.payload if holding else None,
            mode=RobotMode.MOVING,
        )


def safety_interrupt(state: RobotState) -> RobotState:
    """Freeze motion. Only a moving robot can be interrupted."""
    if state.mode != RobotMode.MOVING:
        raise ExecutionFault("safety interrupt outside of motion")
    return RobotState(state.end_effector_pose, state.gripper, state.payload, RobotMode.SAFETY_HOLD)


def resume(state: RobotState, confirmation_token: str | None) -> RobotState:
    """Resume after a hold; requires the supervisor's confirmation token."""
    if state.mode != RobotMode.SAFETY_HOLD:
        raise ExecutionFault("resume outside of a safety hold")
    if not confirmation_token:
        raise ExecutionFault("resume requires a safety confirmation")
    return RobotState(state.end_effector_pose, state.gripper, state.payload, RobotMode.MOVING)
