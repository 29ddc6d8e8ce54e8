// Pure scene state: built entirely from the scenario document plus the
// ordered event stream. No geometry is invented client-side, so feeding the
// same document and records always reconstructs the identical model, which
// is what makes reconnect-with-catch-up exact.

import type { EventPayload } from "./protocol.js";

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // w x y z

export interface PoseData {
  position: Vec3;
  orientation: Quat;
}

export interface BoxData {
  center: PoseData;
  half_extents: Vec3;
}

export interface SceneObject {
  id: string;
  name: string;
  layer: string;
  boxes: BoxData[];
  pose: PoseData;
  color: Vec3;
  sequenceIndex: number | null;
  workpieceType: string;
  highlighted: boolean;
  completed: boolean;
}

export interface StackState {
  id: string;
  workpieceType: string;
  quantity: number;
  basePose: PoseData;
  pitch: number;
}

export interface PreviewData {
  planId: string;
  waypoints: PoseData[];
  attachIndex: number;
  detachIndex: number;
}

export interface SuggestionData {
  pose: PoseData;
  basis: string;
  affectsSubsequent: boolean;
  alternatives: string[];
}

export interface PlanSummary {
  planId: string;
  waypoints: number;
  pathLength: number;
  straightLine: number;
}

export interface SceneModel {
  objects: Record<string, SceneObject>;
  stacks: Record<string, StackState>;
  workflowState: string;
  billboard: string;
  proposedTarget: string | null;
  pendingSuggestion: SuggestionData | null;
  pendingPlan: PlanSummary | null;
  preview: PreviewData | null;
  robotPose: PoseData | null;
  robotPayload: string | null;
  lastError: string | null;
  completedTargets: string[];
  taskFinished: boolean;
  safetyHold: boolean;
  recordCount: number;
}

function clonePose(p: PoseData): PoseData {
  return { position: [...p.position] as Vec3, orientation: [...p.orientation] as Quat };
}

export function newSceneModel(document: Record<string, unknown>): SceneModel {
  const objects: Record<string, SceneObject> = {};
  for (const raw of (document.objects as Record<string, unknown>[]) ?? []) {
    const o = raw as {
      id: string;
      name?: string;
      layer: string;
      boxes: BoxData[];
      pose: PoseData;
      color?: Vec3;
      sequence_index?: number | null;
      workpiece_type?: string;
    };
    objects[o.id] = {
      id: o.id,
      name: o.name ?? o.id,
      layer: o.layer,
      boxes: o.boxes,
      pose: clonePose(o.pose),
      color: o.color ?? [0.7, 0.7, 0.7],
      sequenceIndex: o.sequence_index ?? null,
      workpieceType: o.workpiece_type ?? "",
      highlighted: false,
      completed: false,
    };
  }
  const stacks: Record<string, StackState> = {};
  for (const raw of (document.stacks as Record<string, unknown>[]) ?? []) {
    const s = raw as {
      id: string;
      workpiece_type: string;
      quantity: number;
      base_pose: PoseData;
      item_vertical_pitch: number;
    };
    stacks[s.id] = {
      id: s.id,
      workpieceType: s.workpiece_type,
      quantity: s.quantity,
      basePose: clonePose(s.base_pose),
      pitch: s.item_vertical_pitch,
    };
  }
  return {
    objects,
    stacks,
    workflowState: "idle",
    billboard: "",
    proposedTarget: null,
    pendingSuggestion: null,
    pendingPlan: null,
    preview: null,
    robotPose: null,
    robotPayload: null,
    lastError: null,
    completedTargets: [],
    taskFinished: false,
    safetyHold: false,
    recordCount: 0,
  };
}

const AS_BUILT_SUFFIX = "::as-built";

function upsertAsBuilt(model: SceneModel, sourceId: string, pose: PoseData): void {
  const source = model.objects[sourceId];
  if (source === undefined) return;
  if (source.layer === "as-built") {
    source.pose = clonePose(pose);
    return;
  }
  const twinId = sourceId + AS_BUILT_SUFFIX;
  const existing = model.objects[twinId];
  if (existing !== undefined) {
    existing.pose = clonePose(pose);
    return;
  }
  model.objects[twinId] = {
    ...source,
    id: twinId,
    layer: "as-built",
    pose: clonePose(pose),
    highlighted: false,
    completed: false,
    boxes: source.boxes,
  };
}

// One ordered record from the stream (catch-up or live; they are the same).
export function applyRecord(model: SceneModel, record: EventPayload): void {
  model.recordCount += 1;
  model.workflowState = record.state;
  model.safetyHold = record.state === "safety-hold";
  if (record.kind === "command") {
    return; // commands appear in the stream for auditability only
  }
  const data = record.data as Record<string, any>;
  switch (record.name) {
    case "target-proposed": {
      const id = data.target_id as string;
      for (const obj of Object.values(model.objects)) obj.highlighted = false;
      if (model.objects[id] !== undefined) model.objects[id]!.highlighted = true;
      model.proposedTarget = id;
      model.pendingSuggestion = null;
      model.pendingPlan = null;
      model.preview = null;
      break;
    }
    case "deviation-found": {
      const s = data.suggestion;
      model.pendingSuggestion = {
        pose: s.pose as PoseData,
        basis: s.basis as string,
        affectsSubsequent: Boolean(s.affects_subsequent),
        alternatives: (s.alternatives as string[]) ?? [],
      };
      break;
    }
    case "plan-ready": {
      model.pendingPlan = {
        planId: data.plan_id as string,
        waypoints: data.waypoints as number,
        pathLength: data.path_length as number,
        straightLine: data.straight_line as number,
      };
      break;
    }
    case "preview-frames": {
      model.preview = {
        planId: data.plan_id as string,
        waypoints: data.waypoints as PoseData[],
        attachIndex: data.attach_index as number,
        detachIndex: data.detach_index as number,
      };
      break;
    }
    case "execution-state": {
      model.robotPose = data.pose as PoseData;
      model.robotPayload = (data.payload as string | null) ?? null;
      break;
    }
    case "billboard": {
      model.billboard = (data.text as string) ?? "";
      // scan results carry the detected object pose
      if (typeof data.object_id === "string" && data.pose !== undefined) {
        upsertAsBuilt(model, data.object_id, data.pose as PoseData);
      }
      // an accepted row offset shifts the named later targets
      if (Array.isArray(data.target_ids) && Array.isArray(data.offset)) {
        const off = data.offset as Vec3;
        for (const tid of data.target_ids as string[]) {
          const obj = model.objects[tid];
          if (obj !== undefined) {
            obj.pose.position = [
              obj.pose.position[0] + off[0],
              obj.pose.position[1] + off[1],
              obj.pose.position[2] + off[2],
            ];
          }
        }
      }
      break;
    }
    case "target-completed": {
      const id = data.target_id as string;
      const obj = model.objects[id];
      if (obj !== undefined) {
        obj.highlighted = false;
        obj.completed = true;
      }
      upsertAsBuilt(model, id, data.pose as PoseData);
      model.completedTargets.push(id);
      const stack = Object.values(model.stacks).find(
        (s) => obj !== undefined && s.workpieceType === obj.workpieceType && s.quantity > 0,
      );
      if (stack !== undefined && data.manual !== true) stack.quantity -= 1;
      model.preview = null;
      model.pendingPlan = null;
      model.pendingSuggestion = null;
      break;
    }
    case "task-finished": {
      model.taskFinished = true;
      break;
    }
    case "safety-triggered": {
      model.safetyHold = true;
      break;
    }
    case "error": {
      model.lastError = (data.description as string) ?? "unknown error";
      break;
    }
    default:
      break;
  }
}

export function buildModelFromLog(
  document: Record<string, unknown>,
  records: EventPayload[],
): SceneModel {
  const model = newSceneModel(document);
  for (const record of records) applyRecord(model, record);
  return model;
}

// Canonical deep snapshot for equality assertions (reconnect contract).
export function snapshot(model: SceneModel): string {
  return JSON.stringify(model);
}
