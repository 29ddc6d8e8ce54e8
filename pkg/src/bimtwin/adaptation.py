"""Design-vs-built deviation detection and installation-pose adaptation.

Three deviation families are handled, keyed by the target's relationship:

* parent deviation (fully connected): the target keeps its design placement
  relative to the parent. With local->world transforms composed right to
  left that is ``adapted = built o design^-1 o target_design``, which is the
  unique pose satisfying ``built^-1 o adapted = design^-1 o target_design``.
* seat deviation (seated): only the target's height follows the seat;
  x, y and orientation are passed through bit-identical.
* nearby-object deviation: a deviated neighbor occupies the planned space;
  the fix is the minimal row-axis offset that clears it plus a configured
  clearance, which the supervisor must approve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .bim_repo import BimObject, BimRepository, Layer, RelationshipKind, RepositoryError
from .geometry import Obb, Pose, RigidTransform, compose, invert, obb_intersects, quat_angle

# a supervisor can always answer a suggestion one of these four ways
ALTERNATIVES = ("accept-suggestion", "manual-pose-adjust", "manual-replacement", "keep-original")

_CLEAR_EPS = 1e-12  # nudge past exact tangency so the closed-set check passes


class DeviationKind(Enum):
    PARENT = "parent-deviation"
    SEAT = "seat-deviation"
    NEARBY_OBJECT = "nearby-object-deviation"
    NONE = "none"


class AdaptationError(Exception):
    pass


class UnsolvableOffsetError(AdaptationError):
    """No offset along the row axis clears the intruder within the budget."""


class MissingScanError(AdaptationError):
    """The target's parent/seat has never been scanned or built."""


@dataclass
class DeviationReport:
    kind: DeviationKind
    target_id: str
    reference_id: str | None
    design_transform: RigidTransform
    built_transform: RigidTransform
    magnitude_translation: float
    magnitude_rotation: float


@dataclass
class AdaptationSuggestion:
    target_id: str
    pose: Pose
    basis: DeviationKind
    affects_subsequent: bool = False
    offset_vector: np.ndarray | None = None  # set for row offsets, for propagation
    alternatives: tuple = ALTERNATIVES


@dataclass
class AdaptationConfig:
    clearance: float = 0.005
    tolerance_translation: float = 0.001
    tolerance_rotation: float = math.radians(0.2)
    row_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    max_offset: float = 0.5

    @staticmethod
    def from_workcell(cell: dict) -> "AdaptationConfig":
        cfg = AdaptationConfig()
        if "clearance" in cell:
            cfg.clearance = float(cell["clearance"])
        if "deviation_tolerance_translation" in cell:
            cfg.tolerance_translation = float(cell["deviation_tolerance_translation"])
        if "deviation_tolerance_rotation" in cell:
            cfg.tolerance_rotation = float(cell["deviation_tolerance_rotation"])
        if "row_axis" in cell:
            axis = np.array(cell["row_axis"], dtype=float)
            cfg.row_axis = axis / np.linalg.norm(axis)
        if "max_offset" in cell:
            cfg.max_offset = float(cell["max_offset"])
        return cfg


# ---------------------------------------------------------------------------
# core operations
# ---------------------------------------------------------------------------


def design_built_deviation(design: RigidTransform, built: RigidTransform) -> RigidTransform:
    """Relative transform from the design frame to the built frame."""
    return compose(invert(design), built)


def adapt_parent_deviation(
    target_design: RigidTransform, parent_design: RigidTransform, parent_built: RigidTransform
) -> Pose:
    """Installation pose that preserves the target's design placement relative
    to its deviated parent. Equal to the design pose when the parent did not
    move."""
    return compose(parent_built, compose(invert(parent_design), target_design)).as_pose()


def adapt_seat_deviation(target_design: Pose, seat_design_z: float, seat_built_z: float) -> Pose:
    """Shift the target vertically by the seat's height error; everything
    else, orientation included, passes through untouched."""
    p = target_design.position
    return Pose(
        np.array([p[0], p[1], p[2] + (seat_built_z - seat_design_z)]),
        target_design.orientation,
    )


def check_nearby(target_pose: Pose, target_geometry: list, scene: list, clearance: float) -> list:
    """Scene object ids whose boxes intersect the target inflated by
    `clearance` at `target_pose`. Empty means the plan can go ahead."""
    if clearance < 0:
        raise ValueError("clearance must be non-negative")
    t = target_pose.as_transform()
    world_boxes = [b.inflated(clearance).transformed(t) for b in target_geometry]
    intruders: list = []
    for oid, scene_box in scene:
        if oid in intruders:
            continue
        if any(obb_intersects(tb, scene_box) for tb in world_boxes):
            intruders.append(oid)
    return intruders


def _pair_collision_interval(a: Obb, b: Obb, direction: np.ndarray):
    """Interval of slide distances s (moving box a along `direction`) where
    the closed boxes intersect; None when they never do."""
    ra, rb = a.rotation_matrix(), b.rotation_matrix()
    ha, hb = a.half_extents, b.half_extents
    t = b.center_pose.position - a.center_pose.position
    lo, hi = -math.inf, math.inf
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            cr = np.cross(ra[:, i], rb[:, j])
            if float(cr @ cr) > 1e-12:
                axes.append(cr)
    for axis in axes:
        radius = float(ha @ np.abs(ra.T @ axis)) + float(hb @ np.abs(rb.T @ axis))
        proj_t = float(t @ axis)
        rate = float(direction @ axis)
        if abs(rate) < 1e-12:
            if abs(proj_t) > radius:
                return None  # separated on this axis no matter how far we slide
            continue
        s1 = (proj_t - radius) / rate
        s2 = (proj_t + radius) / rate
        lo = max(lo, min(s1, s2))
        hi = min(hi, max(s1, s2))
        if lo > hi:
            return None
    return lo, hi


def suggest_offset(
    target_pose: Pose,
    target_geometry: list,
    intruder: BimObject,
    row_axis: np.ndarray,
    clearance: float,
    max_offset: float = 0.5,
) -> AdaptationSuggestion:
    """Minimal translation along `row_axis` that moves the target clear of the
    intruder with `clearance` margin. Raises when no offset within the budget
    clears it, which is the signal for the supervisor to step in."""
    u = np.asarray(row_axis, dtype=float)
    u = u / np.linalg.norm(u)
    t = target_pose.as_transform()
    moving = [b.inflated(clearance).transformed(t) for b in target_geometry]
    intervals = []
    for body in moving:
        for other in intruder.world_boxes():
            iv = _pair_collision_interval(body, other, u)
            if iv is not None:
                intervals.append(iv)
    blocked = [iv for iv in intervals if iv[0] <= 0.0 <= iv[1]]
    if not blocked:
        # tangency counts as intruding under the closed-set check; clear it
        # by the epsilon alone
        offset = _CLEAR_EPS
    else:
        offset = 0.0
        # walk right past every interval containing the candidate
        for _ in range(len(intervals) + 1):
            hit = next((iv for iv in intervals if iv[0] <= offset <= iv[1]), None)
            if hit is None:
                break
            offset = hit[1] + _CLEAR_EPS
    if offset > max_offset:
        raise UnsolvableOffsetError(
            f"no offset along the row axis within {max_offset} m clears {intruder.id!r}"
        )
    vec = u * offset
    return AdaptationSuggestion(
        target_id="",
        pose=target_pose.translated(vec),
        basis=DeviationKind.NEARBY_OBJECT,
        affects_subsequent=True,
        offset_vector=vec,
    )


def apply_manual_replacement(
    repo: BimRepository,
    target_id: str,
    replacement_geometry: list,
    placed_pose: Pose,
    time: float = 0.0,
    note: str = "manual replacement",
) -> BimObject:
    """Record a human-performed install of a substitute workpiece. Subsequent
    targets keep their design poses."""
    target = repo.objects.get(target_id)
    if target is None or target.layer != Layer.TARGET:
        raise RepositoryError(f"unknown target {target_id!r}")
    if target_id in repo.consumed_target_ids():
        raise RepositoryError(f"target {target_id!r} already resolved")
    return repo.record_as_built(
        target_id, placed_pose, time=time, kind="manual", note=note, geometry=replacement_geometry
    )


# ---------------------------------------------------------------------------
# per-target analysis
# ---------------------------------------------------------------------------


def _relationship_adaptation(repo: BimRepository, target: BimObject, cfg: AdaptationConfig):
    """Dispatch the relationship rule; returns (report, adapted pose)."""
    rel = target.relationship
    design_pose = target.pose
    ident = RigidTransform.identity()
    if rel.kind == RelationshipKind.ADJACENT or not rel.parent_id:
        report = DeviationReport(DeviationKind.NONE, target.id, None, ident, ident, 0.0, 0.0)
        return report, design_pose
    parent = repo.objects[rel.parent_id]
    built = repo.as_built_of(rel.parent_id)
    if built is None:
        raise MissingScanError(f"parent {rel.parent_id!r} of {target.id!r} has never been scanned")
    parent_design = parent.design_pose if parent.design_pose is not None else parent.pose
    t_design = parent_design.as_transform()
    t_built = built.pose.as_transform()
    dev_translation = float(np.linalg.norm(t_built.translation - t_design.translation))
    dev_rotation = quat_angle(t_built.rotation, t_design.rotation)
    if rel.kind == RelationshipKind.FULLY_CONNECTED:
        if dev_translation < cfg.tolerance_translation and dev_rotation < cfg.tolerance_rotation:
            report = DeviationReport(DeviationKind.NONE, target.id, rel.parent_id, t_design, t_built,
                                     dev_translation, dev_rotation)
            return report, design_pose
        adapted = adapt_parent_deviation(design_pose.as_transform(), t_design, t_built)
        report = DeviationReport(DeviationKind.PARENT, target.id, rel.parent_id, t_design, t_built,
                                 dev_translation, dev_rotation)
        return report, adapted
    # seated: only the height difference of the seat matters
    dz = float(t_built.translation[2] - t_design.translation[2])
    if abs(dz) < cfg.tolerance_translation:
        report = DeviationReport(DeviationKind.NONE, target.id, rel.parent_id, t_design, t_built,
                                 abs(dz), 0.0)
        return report, design_pose
    adapted = adapt_seat_deviation(design_pose, float(t_design.translation[2]), float(t_built.translation[2]))
    report = DeviationReport(DeviationKind.SEAT, target.id, rel.parent_id, t_design, t_built, abs(dz), 0.0)
    return report, adapted


def analyze_target(repo: BimRepository, target_id: str, cfg: AdaptationConfig):
    """Full per-target analysis: relationship rule first, then the nearby
    check on the (possibly adapted) pose. Returns (report, suggestion)."""
    target = repo.objects.get(target_id)
    if target is None or target.layer != Layer.TARGET:
        raise RepositoryError(f"unknown target {target_id!r}")
    if target_id in repo.consumed_target_ids():
        raise RepositoryError(f"target {target_id!r} already resolved")
    report, pose = _relationship_adaptation(repo, target, cfg)

    exclude = {target.id}
    if target.relationship.parent_id:
        # the seat/parent is supposed to be in contact with the target
        parent_built = repo.as_built_of(target.relationship.parent_id)
        exclude.add(target.relationship.parent_id)
        if parent_built is not None:
            exclude.add(parent_built.id)
    scene = [
        (oid, box)
        for oid, box in repo.collision_scene()
        if oid not in exclude
    ]
    total_offset = np.zeros(3)
    for _ in range(8):
        intruders = check_nearby(pose, target.geometry, scene, cfg.clearance)
        if not intruders:
            break
        intruder = repo.objects.get(intruders[0])
        if intruder is None:
            # a material stack intrudes; no offset rule for it, escalate
            raise UnsolvableOffsetError(f"material stack {intruders[0]!r} occupies the target space")
        sub = suggest_offset(pose, target.geometry, intruder, cfg.row_axis, cfg.clearance, cfg.max_offset)
        pose = sub.pose
        total_offset = total_offset + sub.offset_vector
        if float(np.linalg.norm(total_offset)) > cfg.max_offset:
            raise UnsolvableOffsetError("accumulated row offset exceeds the budget")
        report = DeviationReport(
            DeviationKind.NEARBY_OBJECT, target.id, intruders[0],
            report.design_transform, report.built_transform,
            float(np.linalg.norm(total_offset)), report.magnitude_rotation,
        )
    else:
        raise UnsolvableOffsetError("nearby-object resolution did not converge")

    if report.kind == DeviationKind.NEARBY_OBJECT:
        suggestion = AdaptationSuggestion(
            target.id, pose, DeviationKind.NEARBY_OBJECT,
            affects_subsequent=True, offset_vector=total_offset,
        )
    elif report.kind == DeviationKind.NONE:
        suggestion = AdaptationSuggestion(target.id, target.pose, DeviationKind.NONE)
    else:
        suggestion = AdaptationSuggestion(target.id, pose, report.kind)
    return report, suggestion
