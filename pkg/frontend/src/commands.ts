// Supervisor command vocabulary and optimistic legality. The server remains
// the authority; this table only keeps the console from offering buttons the
// engine would reject for the state it last observed.

import type { PoseData } from "./sceneModel.js";

export const LEGALITY: Record<string, string[]> = {
  "await-target-confirm": ["ConfirmTarget", "SelectTarget", "Abort"],
  "await-adaptation-decision": [
    "AcceptSuggestion",
    "AdjustPose",
    "KeepOriginal",
    "ManualResolve",
    "Abort",
  ],
  "await-plan-approval": ["RequestPreview", "ApprovePlan", "RequestReplan", "Abort"],
  "safety-hold": ["ConfirmSafety", "Abort"],
  "manual-resolution": ["ManualResolve", "SelectTarget", "Abort"],
};

export function legalCommands(state: string): string[] {
  return [...(LEGALITY[state] ?? []), "RequestCheckpoint"];
}

export function isLegal(state: string, name: string): boolean {
  return legalCommands(state).includes(name);
}

export function confirmTarget() {
  return { name: "ConfirmTarget", data: {} };
}

export function selectTarget(targetId: string) {
  return { name: "SelectTarget", data: { target_id: targetId } };
}

export function acceptSuggestion() {
  return { name: "AcceptSuggestion", data: {} };
}

// The pose is forwarded verbatim: whatever the gizmo displays is exactly
// what the engine receives, to full float precision.
export function adjustPose(pose: PoseData) {
  return { name: "AdjustPose", data: { pose } };
}

export function keepOriginal() {
  return { name: "KeepOriginal", data: {} };
}

export function manualResolve(note: string, pose?: PoseData) {
  const data: Record<string, unknown> = { note };
  if (pose !== undefined) data.pose = pose;
  return { name: "ManualResolve", data };
}

export function requestPreview() {
  return { name: "RequestPreview", data: {} };
}

export function approvePlan() {
  return { name: "ApprovePlan", data: {} };
}

export function requestReplan() {
  return { name: "RequestReplan", data: {} };
}

export function confirmSafety() {
  return { name: "ConfirmSafety", data: {} };
}

export function requestCheckpoint() {
  return { name: "RequestCheckpoint", data: {} };
}

export function abortSession() {
  return { name: "Abort", data: {} };
}
