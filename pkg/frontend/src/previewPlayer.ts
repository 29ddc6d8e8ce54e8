// Plan preview playback: the ghost robot sweeps the plan's waypoints with
// linear position and slerp orientation. Pure arc-length parametrization, so
// tests can prove every waypoint is visited in order.

import type { PoseData, PreviewData, Quat, Vec3 } from "./sceneModel.js";

function lerp(a: Vec3, b: Vec3, t: number): Vec3 {
  return [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t];
}

function slerp(a: Quat, b: Quat, t: number): Quat {
  let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
  let bb: Quat = b;
  if (dot < 0) {
    bb = [-b[0], -b[1], -b[2], -b[3]];
    dot = -dot;
  }
  if (dot > 1 - 1e-12) {
    const out: Quat = [
      a[0] + (bb[0] - a[0]) * t,
      a[1] + (bb[1] - a[1]) * t,
      a[2] + (bb[2] - a[2]) * t,
      a[3] + (bb[3] - a[3]) * t,
    ];
    const n = Math.hypot(...out);
    return [out[0] / n, out[1] / n, out[2] / n, out[3] / n];
  }
  const theta = Math.acos(Math.min(1, dot));
  const s = Math.sin(theta);
  const wa = Math.sin((1 - t) * theta) / s;
  const wb = Math.sin(t * theta) / s;
  return [
    wa * a[0] + wb * bb[0],
    wa * a[1] + wb * bb[1],
    wa * a[2] + wb * bb[2],
    wa * a[3] + wb * bb[3],
  ];
}

function dist(a: Vec3, b: Vec3): number {
  return Math.hypot(b[0] - a[0], b[1] - a[1], b[2] - a[2]);
}

export class PreviewPlayer {
  readonly preview: PreviewData;
  private readonly arcs: number[];
  readonly totalArc: number;
  /** playback position along the path, 0..totalArc */
  position = 0;
  playing = false;

  constructor(preview: PreviewData) {
    this.preview = preview;
    this.arcs = [];
    for (let i = 0; i + 1 < preview.waypoints.length; i++) {
      const a = preview.waypoints[i]!;
      const b = preview.waypoints[i + 1]!;
      // zero-length segments still get a sliver so scrubbing passes them
      this.arcs.push(Math.max(dist(a.position, b.position), 1e-9));
    }
    this.totalArc = this.arcs.reduce((s, v) => s + v, 0);
  }

  /** Segment index and fraction at an arc position. */
  locate(s: number): { segment: number; fraction: number } {
    let remaining = Math.min(Math.max(s, 0), this.totalArc);
    for (let i = 0; i < this.arcs.length; i++) {
      const arc = this.arcs[i]!;
      if (remaining <= arc || i === this.arcs.length - 1) {
        return { segment: i, fraction: Math.min(remaining / arc, 1) };
      }
      remaining -= arc;
    }
    return { segment: Math.max(this.arcs.length - 1, 0), fraction: 1 };
  }

  poseAt(s: number): PoseData {
    const wps = this.preview.waypoints;
    if (wps.length === 1) return wps[0]!;
    const { segment, fraction } = this.locate(s);
    const a = wps[segment]!;
    const b = wps[segment + 1]!;
    return {
      position: lerp(a.position, b.position, fraction),
      orientation: slerp(a.orientation, b.orientation, fraction),
    };
  }

  /** Is the carried piece attached at this arc position? */
  carryingAt(s: number): boolean {
    const { segment } = this.locate(s);
    return segment >= this.preview.attachIndex && segment < this.preview.detachIndex;
  }

  scrub(fraction: number): PoseData {
    this.position = this.totalArc * Math.min(Math.max(fraction, 0), 1);
    return this.poseAt(this.position);
  }

  advance(ds: number): PoseData {
    this.position = Math.min(this.position + ds, this.totalArc);
    if (this.position >= this.totalArc) this.playing = false;
    return this.poseAt(this.position);
  }

  get finished(): boolean {
    return this.position >= this.totalArc;
  }

  /** Waypoint indices visited when stepping the whole path at `steps`
   * uniform samples; used to prove ordered coverage. */
  visitedWaypoints(steps: number): number[] {
    const seen: number[] = [];
    for (let k = 0; k <= steps; k++) {
      const s = (this.totalArc * k) / steps;
      const { segment, fraction } = this.locate(s);
      const index = fraction >= 1 - 1e-9 ? segment + 1 : segment;
      if (seen.length === 0 || seen[seen.length - 1] !== index) seen.push(index);
    }
    if (seen[0] !== 0) seen.unshift(0);
    return seen;
  }
}
