// Constrained pose-adjust gizmo: translation in the installation plane plus
// yaw about the world z axis. Unconstrained 6-DOF mouse input is exactly the
// imprecision a supervisor console should avoid; nudges are explicit and the
// emitted pose is the displayed pose, bit for bit (no rounding anywhere in
// the emission path).

import type { PoseData, Quat, Vec3 } from "./sceneModel.js";

function quatMul(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export class PoseGizmo {
  private position: Vec3;
  private orientation: Quat;
  readonly base: PoseData;

  constructor(base: PoseData) {
    this.base = base;
    this.position = [...base.position] as Vec3;
    this.orientation = [...base.orientation] as Quat;
  }

  /** Translate in the installation plane (world x/y). */
  nudge(dx: number, dy: number): void {
    this.position = [this.position[0] + dx, this.position[1] + dy, this.position[2]];
  }

  /** Raise or lower along world z. */
  lift(dz: number): void {
    this.position = [this.position[0], this.position[1], this.position[2] + dz];
  }

  /** Yaw about world z, radians. */
  yaw(angle: number): void {
    const half = angle / 2;
    const rot: Quat = [Math.cos(half), 0, 0, Math.sin(half)];
    this.orientation = quatNormalize(quatMul(rot, this.orientation));
  }

  reset(): void {
    this.position = [...this.base.position] as Vec3;
    this.orientation = [...this.base.orientation] as Quat;
  }

  /** The displayed pose; emitted verbatim by AdjustPose. */
  pose(): PoseData {
    return {
      position: [...this.position] as Vec3,
      orientation: [...this.orientation] as Quat,
    };
  }

  displacement(): Vec3 {
    return [
      this.position[0] - this.base.position[0],
      this.position[1] - this.base.position[1],
      this.position[2] - this.base.position[2],
    ];
  }
}
