// three.js projection of the SceneModel: one mesh per collision box, styled
// by layer, a solid avatar for the synchronized robot and a translucent
// ghost for plan previews. The renderer owns no scene state of its own; it
// just mirrors the model every frame.

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";
import type { PoseData, SceneModel, SceneObject } from "./sceneModel.js";

const LAYER_STYLE: Record<string, { opacity: number; emissive: number }> = {
  target: { opacity: 0.85, emissive: 0x000000 },
  "as-built": { opacity: 1.0, emissive: 0x000000 },
  materials: { opacity: 1.0, emissive: 0x000000 },
  "as-designed": { opacity: 0.25, emissive: 0x000000 },
  "virtual-collision": { opacity: 0.15, emissive: 0x550000 },
};

function applyPose(object3d: THREE.Object3D, pose: PoseData): void {
  object3d.position.set(...pose.position);
  const [w, x, y, z] = pose.orientation;
  object3d.quaternion.set(x, y, z, w);
}

export class SceneRenderer {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private controls: OrbitControls;
  private groups = new Map<string, THREE.Group>();
  private stackGroups = new Map<string, THREE.Group>();
  private avatar: THREE.Group;
  private ghost: THREE.Group;

  constructor(canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(55, 16 / 9, 0.01, 50);
    this.camera.position.set(2.5, -2.5, 2.0);
    this.camera.up.set(0, 0, 1);
    this.controls = new OrbitControls(this.camera, canvas);
    this.controls.target.set(1.0, 0.0, 0.5);
    this.scene.background = new THREE.Color(0x1c1f26);
    const sun = new THREE.DirectionalLight(0xffffff, 2.2);
    sun.position.set(2, -3, 5);
    this.scene.add(sun, new THREE.AmbientLight(0xffffff, 0.6));
    this.scene.add(new THREE.GridHelper(6, 30, 0x33404f, 0x26303c).rotateX(Math.PI / 2));
    this.avatar = this.makeRobotBody(0x3aa0ff, 1.0);
    this.ghost = this.makeRobotBody(0x7fe0a0, 0.35);
    this.ghost.visible = false;
    this.scene.add(this.avatar, this.ghost);
  }

  private makeRobotBody(color: number, opacity: number): THREE.Group {
    const group = new THREE.Group();
    const material = new THREE.MeshStandardMaterial({
      color,
      transparent: opacity < 1,
      opacity,
    });
    const body = new THREE.Mesh(new THREE.BoxGeometry(0.08, 0.08, 0.12), material);
    body.position.z = 0.08;
    const jaw = new THREE.Mesh(new THREE.BoxGeometry(0.1, 0.02, 0.04), material);
    jaw.position.z = 0.0;
    group.add(body, jaw);
    group.visible = false;
    return group;
  }

  private buildObject(obj: SceneObject): THREE.Group {
    const group = new THREE.Group();
    const [r, g, b] = obj.color;
    const style = LAYER_STYLE[obj.layer] ?? { opacity: 1, emissive: 0 };
    for (const box of obj.boxes) {
      const material = new THREE.MeshStandardMaterial({
        color: new THREE.Color(r, g, b),
        transparent: style.opacity < 1,
        opacity: style.opacity,
        emissive: style.emissive,
      });
      const mesh = new THREE.Mesh(
        new THREE.BoxGeometry(
          box.half_extents[0] * 2,
          box.half_extents[1] * 2,
          box.half_extents[2] * 2,
        ),
        material,
      );
      applyPose(mesh, box.center);
      group.add(mesh);
    }
    return group;
  }

  /** Mirror the model into the three scene. */
  sync(model: SceneModel, ghostPose: PoseData | null): void {
    for (const obj of Object.values(model.objects)) {
      let group = this.groups.get(obj.id);
      if (group === undefined) {
        group = this.buildObject(obj);
        this.groups.set(obj.id, group);
        this.scene.add(group);
      }
      applyPose(group, obj.pose);
      group.visible = !(obj.layer === "target" && obj.completed);
      for (const child of group.children) {
        const material = (child as THREE.Mesh).material as THREE.MeshStandardMaterial;
        material.emissive.setHex(obj.highlighted ? 0xcc8800 : (LAYER_STYLE[obj.layer]?.emissive ?? 0));
        material.emissiveIntensity = obj.highlighted ? 0.9 : 0.4;
      }
    }
    for (const stack of Object.values(model.stacks)) {
      let group = this.stackGroups.get(stack.id);
      if (group === undefined) {
        group = new THREE.Group();
        this.stackGroups.set(stack.id, group);
        this.scene.add(group);
      }
      this.syncStack(group, stack.quantity, stack.basePose, stack.pitch);
    }
    if (model.robotPose !== null) {
      this.avatar.visible = true;
      applyPose(this.avatar, model.robotPose);
    }
    this.ghost.visible = ghostPose !== null;
    if (ghostPose !== null) applyPose(this.ghost, ghostPose);
  }

  private syncStack(group: THREE.Group, quantity: number, base: PoseData, pitch: number): void {
    while (group.children.length > quantity) group.remove(group.children[group.children.length - 1]!);
    while (group.children.length < quantity) {
      const mesh = new THREE.Mesh(
        new THREE.BoxGeometry(0.09, 0.09, Math.max(pitch * 0.9, 0.01)),
        new THREE.MeshStandardMaterial({ color: 0x9a6b3f }),
      );
      group.add(mesh);
    }
    group.children.forEach((child, k) => {
      child.position.set(base.position[0], base.position[1], base.position[2] + k * pitch);
    });
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
  }

  render(): void {
    this.controls.update();
    this.renderer.render(this.scene, this.camera);
  }
}
