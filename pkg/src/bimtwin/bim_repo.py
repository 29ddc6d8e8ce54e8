"""Layered building-information repository.

Loads scenario documents, serves install targets in construction sequence,
tracks staged material stacks, and records scans and as-built poses so the
session can be checkpointed back into the same document format.

Scenario documents are UTF-8 JSON with top-level sections ``objects``,
``stacks``, ``noise_model`` and ``workcell`` (see docs/scenario_schema.md for
the frozen field names). Checkpoint exports add ``as_built_records`` and
``scan_records``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import Obb, Pose, RigidTransform

FORMAT_VERSION = 1

AS_BUILT_SUFFIX = "::as-built"


class Layer(Enum):
    TARGET = "target"
    AS_BUILT = "as-built"
    MATERIALS = "materials"
    AS_DESIGNED = "as-designed"
    VIRTUAL_COLLISION = "virtual-collision"


class RelationshipKind(Enum):
    ADJACENT = "adjacent"
    SEATED = "seated"
    FULLY_CONNECTED = "fully-connected"


class ScenarioError(Exception):
    """Parse or validation failure; problems carry (object id, rule)."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{oid}: {rule}" for oid, rule in self.problems))


class RepositoryError(Exception):
    pass


# ---------------------------------------------------------------------------
# serialization helpers (shared with the wire layer)
# ---------------------------------------------------------------------------


def pose_to_dict(pose: Pose) -> dict:
    return {
        "position": [float(v) for v in pose.position],
        "orientation": [float(v) for v in pose.orientation],
    }


def pose_from_dict(d: dict) -> Pose:
    return Pose(np.array(d["position"], dtype=float), np.array(d["orientation"], dtype=float))


def transform_to_dict(t: RigidTransform) -> dict:
    return {
        "rotation": [float(v) for v in t.rotation],
        "translation": [float(v) for v in t.translation],
    }


def transform_from_dict(d: dict) -> RigidTransform:
    return RigidTransform(np.array(d["rotation"], dtype=float), np.array(d["translation"], dtype=float))


def obb_to_dict(b: Obb) -> dict:
    return {"center": pose_to_dict(b.center_pose), "half_extents": [float(v) for v in b.half_extents]}


def obb_from_dict(d: dict) -> Obb:
    return Obb(pose_from_dict(d["center"]), np.array(d["half_extents"], dtype=float))


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass
class Relationship:
    kind: RelationshipKind = RelationshipKind.ADJACENT
    parent_id: str | None = None


@dataclass
class MarkerInfo:
    """Fiducial bound to an object or stack: fixed offset marker -> subject."""

    offset: RigidTransform


@dataclass
class BimObject:
    id: str
    name: str
    layer: Layer
    geometry: list  # list[Obb], local frame
    pose: Pose  # world; design pose on design layers, detected/installed on as-built
    relationship: Relationship = field(default_factory=Relationship)
    sequence_index: int | None = None
    workpiece_type: str = ""
    grip_indicator: Pose | None = None
    task_related: bool = True
    color: tuple = (0.7, 0.7, 0.7)
    marker: MarkerInfo | None = None
    design_pose: Pose | None = None  # pose at load time; survives in-place scans

    def world_boxes(self) -> list:
        t = self.pose.as_transform()
        return [b.transformed(t) for b in self.geometry]


@dataclass
class MaterialStack:
    id: str
    workpiece_type: str
    quantity: int
    base_pose: Pose
    item_vertical_pitch: float
    marker: MarkerInfo | None = None

    def top_item_pose(self) -> Pose:
        if self.quantity <= 0:
            raise RepositoryError(f"stack {self.id} is empty")
        rise = (self.quantity - 1) * self.item_vertical_pitch
        return self.base_pose.translated([0.0, 0.0, rise])


@dataclass
class AsBuiltRecord:
    target_id: str
    pose: Pose
    time: float
    kind: str = "installed"  # installed | manual
    note: str = ""


@dataclass
class ScanRecord:
    object_id: str
    pose: Pose
    time: float


class BimRepository:
    """One session's view of the model: objects, stacks, and closed-loop records.

    Single writer (the workflow engine); `snapshot()` hands out deep copies
    safe to share with observers.
    """

    def __init__(self, name: str = "scenario"):
        self.name = name
        self.objects: dict[str, BimObject] = {}
        self.stacks: dict[str, MaterialStack] = {}
        self.as_built_records: list[AsBuiltRecord] = []
        self.scan_records: list[ScanRecord] = []
        self.noise_model: dict = {"sigma_translation": 0.0, "sigma_rotation": 0.0, "seed": 0}
        self.workcell: dict = {}
        self._initial_stack_quantities: dict[str, int] = {}

    # -- queries ------------------------------------------------------------

    def objects_on_layer(self, layer: Layer) -> list:
        return [o for o in self.objects.values() if o.layer == layer]

    def targets(self) -> list:
        ts = self.objects_on_layer(Layer.TARGET)
        ts.sort(key=lambda o: o.sequence_index)
        return ts

    def consumed_target_ids(self) -> set:
        return {r.target_id for r in self.as_built_records}

    def next_target(self) -> BimObject | None:
        """Pending target with the smallest sequence index, or None when the
        queue is exhausted."""
        done = self.consumed_target_ids()
        for t in self.targets():
            if t.id not in done:
                return t
        return None

    def pending_targets(self) -> list:
        done = self.consumed_target_ids()
        return [t for t in self.targets() if t.id not in done]

    def collision_scene(self, exclude_ids=()) -> list:
        """(object_id, world Obb) pairs the robot must avoid: as-built,
        materials, and virtual-collision geometry."""
        scene = []
        for o in self.objects.values():
            if o.layer in (Layer.AS_BUILT, Layer.VIRTUAL_COLLISION) and o.id not in exclude_ids:
                for b in o.world_boxes():
                    scene.append((o.id, b))
        for s in self.stacks.values():
            if s.id in exclude_ids:
                continue
            for b in self.stack_boxes(s.id):
                scene.append((s.id, b))
        return scene

    def stack_boxes(self, stack_id: str, skip_top: bool = False) -> list:
        """World boxes for the remaining items of a stack."""
        s = self.stacks[stack_id]
        proto = self.item_geometry(s.workpiece_type)
        count = s.quantity - (1 if skip_top else 0)
        boxes = []
        for k in range(count):
            item_pose = s.base_pose.translated([0.0, 0.0, k * s.item_vertical_pitch])
            t = item_pose.as_transform()
            boxes.extend(b.transformed(t) for b in proto)
        return boxes

    def item_geometry(self, workpiece_type: str) -> list:
        for o in self.objects.values():
            if o.layer == Layer.TARGET and o.workpiece_type == workpiece_type:
                return o.geometry
        raise RepositoryError(f"no target defines geometry for workpiece type {workpiece_type!r}")

    def stack_for_type(self, workpiece_type: str) -> MaterialStack | None:
        for s in self.stacks.values():
            if s.workpiece_type == workpiece_type and s.quantity > 0:
                return s
        return None

    def initial_stack_quantity(self, stack_id: str) -> int:
        return self._initial_stack_quantities[stack_id]

    # -- mutations ----------------------------------------------------------

    def record_as_built(self, target_id: str, installed_pose: Pose, time: float = 0.0,
                        kind: str = "installed", note: str = "",
                        geometry=None) -> BimObject:
        """Append an install record and place an as-built copy of the target."""
        target = self.objects.get(target_id)
        if target is None or target.layer != Layer.TARGET:
            raise RepositoryError(f"unknown target {target_id!r}")
        if target_id in self.consumed_target_ids():
            raise RepositoryError(f"target {target_id!r} already recorded")
        self.as_built_records.append(AsBuiltRecord(target_id, installed_pose, time, kind, note))
        twin = BimObject(
            id=target_id + AS_BUILT_SUFFIX,
            name=target.name,
            layer=Layer.AS_BUILT,
            geometry=list(geometry) if geometry is not None else list(target.geometry),
            pose=installed_pose,
            relationship=copy.deepcopy(target.relationship),
            workpiece_type=target.workpiece_type,
            task_related=target.task_related,
            color=target.color,
            design_pose=target.design_pose,
        )
        if note:
            twin.name = f"{target.name} ({note})"
        self.objects[twin.id] = twin
        return twin

    def record_scan(self, object_id: str, detected_pose: Pose, time: float = 0.0) -> BimObject:
        """Append a scan record and create/update the object's as-built twin."""
        obj = self.objects.get(object_id)
        if obj is None or obj.layer not in (Layer.AS_DESIGNED, Layer.AS_BUILT):
            raise RepositoryError(f"cannot scan {object_id!r}: not a design or as-built object")
        self.scan_records.append(ScanRecord(object_id, detected_pose, time))
        if obj.layer == Layer.AS_BUILT:
            obj.pose = detected_pose
            return obj
        twin_id = object_id + AS_BUILT_SUFFIX
        twin = self.objects.get(twin_id)
        if twin is None:
            twin = BimObject(
                id=twin_id,
                name=obj.name,
                layer=Layer.AS_BUILT,
                geometry=list(obj.geometry),
                pose=detected_pose,
                relationship=copy.deepcopy(obj.relationship),
                workpiece_type=obj.workpiece_type,
                task_related=obj.task_related,
                color=obj.color,
                design_pose=obj.design_pose,
            )
            self.objects[twin_id] = twin
        else:
            twin.pose = detected_pose
        return twin

    def as_built_of(self, object_id: str) -> BimObject | None:
        """The live as-built version of an object, if any."""
        obj = self.objects.get(object_id)
        if obj is not None and obj.layer == Layer.AS_BUILT:
            return obj
        return self.objects.get(object_id + AS_BUILT_SUFFIX)

    def update_stack(self, stack_id: str, base_pose: Pose, quantity: int) -> None:
        s = self.stacks[stack_id]
        s.base_pose = base_pose
        s.quantity = quantity
        self._initial_stack_quantities[stack_id] = max(
            self._initial_stack_quantities.get(stack_id, quantity), quantity
        )

    def consume_material(self, stack_id: str) -> Pose:
        """Pop the top item: returns its pick pose, decrements the count."""
        if stack_id not in self.stacks:
            raise RepositoryError(f"unknown stack {stack_id!r}")
        s = self.stacks[stack_id]
        if s.quantity <= 0:
            raise RepositoryError(f"stack {stack_id!r} is empty")
        top = s.top_item_pose()
        s.quantity -= 1
        return top

    def shift_target_pose(self, target_id: str, delta) -> None:
        t = self.objects[target_id]
        t.pose = t.pose.translated(delta)

    def snapshot(self) -> "BimRepository":
        return copy.deepcopy(self)


# ---------------------------------------------------------------------------
# scenario document parsing / export
# ---------------------------------------------------------------------------

_LAYER_VALUES = {l.value for l in Layer}
_KIND_VALUES = {k.value for k in RelationshipKind}


def _parse_object(entry: dict, problems: list) -> BimObject | None:
    oid = entry.get("id", "<missing id>")
    try:
        layer = Layer(entry["layer"])
    except (KeyError, ValueError):
        problems.append((oid, f"unknown layer {entry.get('layer')!r}"))
        return None
    rel = entry.get("relationship") or {}
    try:
        kind = RelationshipKind(rel.get("kind", "adjacent"))
    except ValueError:
        problems.append((oid, f"unknown relationship kind {rel.get('kind')!r}"))
        return None
    try:
        geometry = [obb_from_dict(b) for b in entry.get("boxes", [])]
        pose = pose_from_dict(entry["pose"])
        grip = entry.get("grip_indicator")
        grip_pose = pose_from_dict(grip) if grip else None
        marker = entry.get("marker")
        marker_info = MarkerInfo(transform_from_dict(marker["offset"])) if marker else None
    except (KeyError, ValueError, TypeError) as exc:
        problems.append((oid, f"bad geometry/pose: {exc}"))
        return None
    if not geometry:
        problems.append((oid, "object has no collision boxes"))
        return None
    return BimObject(
        id=oid,
        name=entry.get("name", oid),
        layer=layer,
        geometry=geometry,
        pose=pose,
        relationship=Relationship(kind, rel.get("parent_id")),
        sequence_index=entry.get("sequence_index"),
        workpiece_type=entry.get("workpiece_type", ""),
        grip_indicator=grip_pose,
        task_related=bool(entry.get("task_related", True)),
        color=tuple(entry.get("color", (0.7, 0.7, 0.7))),
        marker=marker_info,
    )


def _validate(repo: BimRepository, problems: list) -> None:
    seq_seen: dict[int, str] = {}
    for o in repo.objects.values():
        if o.layer == Layer.TARGET:
            if o.sequence_index is None or o.sequence_index < 0:
                problems.append((o.id, "target missing non-negative sequence_index"))
            elif o.sequence_index in seq_seen:
                problems.append((seq_seen[o.sequence_index], f"duplicate sequence_index {o.sequence_index}"))
                problems.append((o.id, f"duplicate sequence_index {o.sequence_index}"))
            else:
                seq_seen[o.sequence_index] = o.id
            if o.grip_indicator is None:
                problems.append((o.id, "target missing grip_indicator"))
        rel = o.relationship
        if rel.kind != RelationshipKind.ADJACENT and not rel.parent_id:
            problems.append((o.id, f"relationship {rel.kind.value} requires parent_id"))
        if rel.parent_id and rel.parent_id not in repo.objects:
            problems.append((o.id, f"dangling parent_id {rel.parent_id!r}"))
    # cycle check over the parent graph
    for start in repo.objects.values():
        seen = set()
        node = start
        while node is not None and node.relationship.parent_id:
            if node.id in seen:
                problems.append((start.id, "cycle in parent graph"))
                break
            seen.add(node.id)
            node = repo.objects.get(node.relationship.parent_id)
    for s in repo.stacks.values():
        if s.quantity < 0:
            problems.append((s.id, "negative stack quantity"))
        if s.item_vertical_pitch < 0:
            problems.append((s.id, "negative item pitch"))


def load_scenario(document: str | dict) -> BimRepository:
    """Parse and validate a scenario document (JSON text or parsed dict)."""
    if isinstance(document, str):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError([("<document>", f"invalid JSON: {exc}")]) from exc
    else:
        data = document
    problems: list = []
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ScenarioError([("<document>", f"unsupported format_version {version!r}")])
    repo = BimRepository(name=data.get("name", "scenario"))
    for entry in data.get("objects", []):
        obj = _parse_object(entry, problems)
        if obj is None:
            continue
        if obj.id in repo.objects:
            problems.append((obj.id, "duplicate object id"))
            continue
        obj.design_pose = obj.pose
        repo.objects[obj.id] = obj
    for entry in data.get("stacks", []):
        sid = entry.get("id", "<missing id>")
        try:
            marker = entry.get("marker")
            stack = MaterialStack(
                id=sid,
                workpiece_type=entry["workpiece_type"],
                quantity=int(entry["quantity"]),
                base_pose=pose_from_dict(entry["base_pose"]),
                item_vertical_pitch=float(entry["item_vertical_pitch"]),
                marker=MarkerInfo(transform_from_dict(marker["offset"])) if marker else None,
            )
        except (KeyError, ValueError, TypeError) as exc:
            problems.append((sid, f"bad stack entry: {exc}"))
            continue
        if sid in repo.stacks:
            problems.append((sid, "duplicate stack id"))
            continue
        repo.stacks[sid] = stack
    repo.noise_model = dict(data.get("noise_model", repo.noise_model))
    repo.workcell = dict(data.get("workcell", {}))
    _validate(repo, problems)
    if problems:
        raise ScenarioError(problems)
    for record in data.get("as_built_records", []):
        if record["target_id"] not in repo.objects:
            raise ScenarioError([(record["target_id"], "as-built record for unknown target")])
        repo.as_built_records.append(
            AsBuiltRecord(
                record["target_id"],
                pose_from_dict(record["pose"]),
                float(record.get("time", 0.0)),
                record.get("kind", "installed"),
                record.get("note", ""),
            )
        )
    for record in data.get("scan_records", []):
        if record["object_id"] not in repo.objects:
            raise ScenarioError([(record["object_id"], "scan record for unknown object")])
        repo.scan_records.append(
            ScanRecord(record["object_id"], pose_from_dict(record["pose"]), float(record.get("time", 0.0)))
        )
    repo._initial_stack_quantities = {s.id: s.quantity for s in repo.stacks.values()}
    return repo


def _object_to_dict(o: BimObject) -> dict:
    entry = {
        "id": o.id,
        "name": o.name,
        "layer": o.layer.value,
        "boxes": [obb_to_dict(b) for b in o.geometry],
        "pose": pose_to_dict(o.pose),
        "relationship": {"kind": o.relationship.kind.value, "parent_id": o.relationship.parent_id},
        "sequence_index": o.sequence_index,
        "workpiece_type": o.workpiece_type,
        "grip_indicator": pose_to_dict(o.grip_indicator) if o.grip_indicator else None,
        "task_related": o.task_related,
        "color": list(o.color),
    }
    if o.marker is not None:
        entry["marker"] = {"offset": transform_to_dict(o.marker.offset)}
    return entry


def export_checkpoint(repo: BimRepository) -> str:
    """Serialize the repository back into the scenario format, including the
    session's scan and installation records and remaining material counts."""
    data = {
        "format_version": FORMAT_VERSION,
        "name": repo.name,
        "objects": [_object_to_dict(o) for o in repo.objects.values()],
        "stacks": [
            {
                "id": s.id,
                "workpiece_type": s.workpiece_type,
                "quantity": s.quantity,
                "base_pose": pose_to_dict(s.base_pose),
                "item_vertical_pitch": s.item_vertical_pitch,
                **({"marker": {"offset": transform_to_dict(s.marker.offset)}} if s.marker else {}),
            }
            for s in repo.stacks.values()
        ],
        "noise_model": repo.noise_model,
        "workcell": repo.workcell,
        "as_built_records": [
            {
                "target_id": r.target_id,
                "pose": pose_to_dict(r.pose),
                "time": r.time,
                "kind": r.kind,
                "note": r.note,
            }
            for r in repo.as_built_records
        ],
        "scan_records": [
            {"object_id": r.object_id, "pose": pose_to_dict(r.pose), "time": r.time}
            for r in repo.scan_records
        ],
    }
    return json.dumps(data, indent=2, sort_keys=False) + "\n"
