"""Rigid-body transform algebra and oriented-bounding-box collision primitives.

Conventions used throughout the package:

* Quaternions are stored ``[w, x, y, z]`` and kept unit-norm (renormalized
  after every composition, so drift over long chains stays below 1e-9).
* Transforms map local coordinates to world coordinates with column-vector
  semantics: ``compose(a, b)`` applies ``b`` first, then ``a``.
* All collision geometry is oriented boxes. The intersection test is
  closed-set: touching boxes count as colliding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Pose",
    "RigidTransform",
    "Obb",
    "SweptHit",
    "compose",
    "invert",
    "obb_intersects",
    "swept_collides",
    "interpolate_pose",
    "quat_from_axis_angle",
    "quat_mul",
    "quat_rotate",
    "quat_angle",
    "quat_slerp",
    "quat_to_matrix",
]

_QUAT_NORM_TOL = 1e-9


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3).copy()
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite 3-vector: {a}")
    a.flags.writeable = False
    return a


def _quat(q) -> np.ndarray:
    a = np.asarray(q, dtype=np.float64).reshape(4).copy()
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite quaternion: {a}")
    n = math.sqrt(float(a @ a))
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    if abs(n - 1.0) > _QUAT_NORM_TOL:
        a = a / n
    a.flags.writeable = False
    return a


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / math.sqrt(float(np.dot(q, q)))


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate one vector (3,) or a batch (n, 3) by quaternion q."""
    w = q[0]
    u = np.asarray(q[1:4])
    v = np.asarray(v, dtype=np.float64)
    # v' = v + 2w (u x v) + 2 (u x (u x v))
    uv = np.cross(u, v)
    return v + 2.0 * w * uv + 2.0 * np.cross(u, uv)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    ax = np.asarray(axis, dtype=np.float64).reshape(3)
    n = math.sqrt(float(ax @ ax))
    if n < 1e-12:
        raise ValueError("zero rotation axis")
    half = 0.5 * float(angle)
    s = math.sin(half) / n
    return np.array([math.cos(half), ax[0] * s, ax[1] * s, ax[2] * s])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angular distance between two unit quaternions, in radians.

    atan2 form keeps full precision for nearly identical rotations, where
    acos of the dot product would quantize around zero.
    """
    d_minus = float(np.linalg.norm(a - b))
    d_plus = float(np.linalg.norm(a + b))
    if d_minus > d_plus:
        d_minus, d_plus = d_plus, d_minus
    # ||a - b|| = 2 sin(theta/4) once signs are aligned
    return 4.0 * math.atan2(d_minus, d_plus)


def quat_slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(a + t * (b - a))
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    return quat_normalize(
        (math.sin((1.0 - t) * theta) / s) * a + (math.sin(t * theta) / s) * b
    )


@dataclass(frozen=True, eq=False)
class Pose:
    """Position plus unit-quaternion orientation of a frame in the world."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))
        object.__setattr__(self, "orientation", _quat(self.orientation))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_xyz(x: float, y: float, z: float, orientation=None) -> "Pose":
        q = np.array([1.0, 0.0, 0.0, 0.0]) if orientation is None else orientation
        return Pose(np.array([x, y, z]), q)

    def as_transform(self) -> "RigidTransform":
        return RigidTransform(self.orientation, self.position)

    def translated(self, delta) -> "Pose":
        return Pose(self.position + np.asarray(delta, dtype=np.float64), self.orientation)

    def approx_eq(self, other: "Pose", tol: float = 1e-9) -> bool:
        return (
            float(np.max(np.abs(self.position - other.position))) <= tol
            and quat_angle(self.orientation, other.orientation) <= tol
        )


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE(3) element: rotation quaternion plus translation, local -> world."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _quat(self.rotation))
        object.__setattr__(self, "translation", _vec3(self.translation))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @staticmethod
    def from_pose(pose: Pose) -> "RigidTransform":
        return RigidTransform(pose.orientation, pose.position)

    @staticmethod
    def translation_of(x: float, y: float, z: float) -> "RigidTransform":
        return RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), np.array([x, y, z]))

    @staticmethod
    def rotation_of(axis, angle: float) -> "RigidTransform":
        return RigidTransform(quat_from_axis_angle(axis, angle), np.zeros(3))

    def as_pose(self) -> Pose:
        return Pose(self.translation, self.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map local point(s) (3,) or (n, 3) into the world frame."""
        return quat_rotate(self.rotation, points) + self.translation

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def approx_eq(self, other: "RigidTransform", tol: float = 1e-9) -> bool:
        return (
            float(np.max(np.abs(self.translation - other.translation))) <= tol
            and quat_angle(self.rotation, other.rotation) <= tol
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform product: the result maps p to a(b(p))."""
    rot = quat_normalize(quat_mul(a.rotation, b.rotation))
    return RigidTransform(rot, quat_rotate(a.rotation, b.translation) + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    """Inverse element: compose(invert(t), t) is the identity."""
    inv_rot = quat_conjugate(t.rotation)
    return RigidTransform(inv_rot, -quat_rotate(inv_rot, t.translation))


def compose_pose(t: RigidTransform, pose: Pose) -> Pose:
    """Apply a transform to a pose (pose expressed in t's source frame)."""
    return compose(t, pose.as_transform()).as_pose()


@dataclass(frozen=True, eq=False)
class Obb:
    """Oriented box: a center pose plus strictly positive half extents."""

    center_pose: Pose
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "half_extents", _vec3(self.half_extents))
        if not np.all(self.half_extents > 0.0):
            raise ValueError(f"half extents must be strictly positive: {self.half_extents}")

    @staticmethod
    def axis_aligned(center, half_extents) -> "Obb":
        return Obb(Pose(np.asarray(center, dtype=np.float64), np.array([1.0, 0.0, 0.0, 0.0])), half_extents)

    @property
    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))

    def transformed(self, t: RigidTransform) -> "Obb":
        return Obb(compose_pose(t, self.center_pose), self.half_extents)

    def inflated(self, margin: float) -> "Obb":
        return Obb(self.center_pose, self.half_extents + margin)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.center_pose.orientation)

    def corners(self) -> np.ndarray:
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=np.float64,
        )
        local = signs * self.half_extents
        return self.center_pose.as_transform().apply(local)

    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.half_extents))

    def contains_point(self, point, tol: float = 0.0) -> bool:
        local = self.rotation_matrix().T @ (np.asarray(point, dtype=np.float64) - self.center_pose.position)
        return bool(np.all(np.abs(local) <= self.half_extents + tol))


def _separated_on_axis(axis, t, ra_axes, ha, rb_axes, hb) -> bool:
    ra = float(ha @ np.abs(ra_axes.T @ axis))
    rb = float(hb @ np.abs(rb_axes.T @ axis))
    return abs(float(t @ axis)) > ra + rb


def obb_intersects(a: Obb, b: Obb) -> bool:
    """Closed-set separating-axis test over the 15 candidate axes.

    Face normals of each box plus the nine edge cross products. Touching
    counts as intersecting; near-parallel cross products are skipped because
    a separating axis there is already covered by the face normals.
    """
    ra = a.rotation_matrix()
    rb = b.rotation_matrix()
    t = b.center_pose.position - a.center_pose.position
    # quick sphere rejection
    if float(np.linalg.norm(t)) > a.bounding_radius() + b.bounding_radius():
        return False
    ha, hb = a.half_extents, b.half_extents
    for i in range(3):
        if _separated_on_axis(ra[:, i], t, ra, ha, rb, hb):
            return False
        if _separated_on_axis(rb[:, i], t, ra, ha, rb, hb):
            return False
    for i in range(3):
        for j in range(3):
            axis = np.cross(ra[:, i], rb[:, j])
            if float(axis @ axis) < 1e-12:
                continue
            if _separated_on_axis(axis, t, ra, ha, rb, hb):
                return False
    return True


def interpolate_pose(a: Pose, b: Pose, t: float) -> Pose:
    """Linear position, spherical-linear orientation."""
    return Pose(
        (1.0 - t) * a.position + t * b.position,
        quat_slerp(a.orientation, b.orientation, t),
    )


def _segment_fractions(a: Pose, b: Pose, step: float, swing_radius: float) -> np.ndarray:
    """Sample fractions for one segment at spatial resolution <= step.

    The sample count is rounded up to a power of two so that grids at finer
    steps are strict supersets of coarser ones (a hit found coarse is always
    found fine).
    """
    dist = float(np.linalg.norm(b.position - a.position))
    arc = max(dist, quat_angle(a.orientation, b.orientation) * swing_radius)
    n = max(1, math.ceil(arc / step))
    n = 1 << (n - 1).bit_length()
    return np.linspace(0.0, 1.0, n + 1)


@dataclass(frozen=True)
class SweptHit:
    """First collision found along a swept path."""

    path_index: int  # index of the waypoint starting the colliding segment
    scene_index: int
    fraction: float  # position within that segment, 0..1


def swept_collides(
    path: list,
    body: Obb,
    scene: list,
    step: float,
) -> SweptHit | None:
    """Sweep `body` (local to the moving frame) along `path` against `scene`.

    Poses are interpolated per segment at spatial resolution <= step
    (positions linearly, orientations by slerp); returns the first sampled
    configuration that intersects a scene box, or None.
    """
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")
    if not path:
        raise ValueError("path must contain at least one pose")
    swing = body.bounding_radius() + float(np.linalg.norm(body.center_pose.position))
    if len(path) == 1:
        world = body.transformed(path[0].as_transform())
        for j, obstacle in enumerate(scene):
            if obb_intersects(world, obstacle):
                return SweptHit(0, j, 0.0)
        return None
    for i in range(len(path) - 1):
        a, b = path[i], path[i + 1]
        fractions = _segment_fractions(a, b, step, swing)
        if i > 0:
            fractions = fractions[1:]  # endpoint already checked
        for f in fractions:
            world = body.transformed(interpolate_pose(a, b, float(f)).as_transform())
            for j, obstacle in enumerate(scene):
                if obb_intersects(world, obstacle):
                    return SweptHit(i, j, float(f))
    return None


# ---------------------------------------------------------------------------
# Batched sweep used by the execution simulator. Semantically identical to
# looping obb_intersects over the samples, just vectorized.
# ---------------------------------------------------------------------------


def quat_mul_many(quats: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Multiply a batch of quaternions (n,4) by one fixed right factor."""
    aw, ax, ay, az = quats[:, 0], quats[:, 1], quats[:, 2], quats[:, 3]
    bw, bx, by, bz = q
    out = np.empty_like(quats)
    out[:, 0] = aw * bw - ax * bx - ay * by - az * bz
    out[:, 1] = aw * bx + ax * bw + ay * bz - az * by
    out[:, 2] = aw * by - ax * bz + ay * bw + az * bx
    out[:, 3] = aw * bz + ax * by - ay * bx + az * bw
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    return out / norms


def quat_rotate_many(quats: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate one fixed vector by a batch of quaternions (n,4) -> (n,3)."""
    w = quats[:, 0:1]
    u = quats[:, 1:4]
    uv = np.cross(u, np.broadcast_to(v, u.shape))
    return v + 2.0 * w * uv + 2.0 * np.cross(u, uv)


def quat_slerp_many(a: np.ndarray, b: np.ndarray, fractions: np.ndarray) -> np.ndarray:
    """Slerp between two quaternions at many fractions -> (n,4)."""
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    f = np.asarray(fractions, dtype=np.float64)[:, None]
    if dot > 1.0 - 1e-12:
        out = a + f * (b - a)
    else:
        theta = math.acos(min(1.0, dot))
        s = math.sin(theta)
        out = (np.sin((1.0 - f) * theta) / s) * a + (np.sin(f * theta) / s) * b
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def _quats_to_matrices(quats: np.ndarray) -> np.ndarray:
    w, x, y, z = quats[:, 0], quats[:, 1], quats[:, 2], quats[:, 3]
    m = np.empty((len(quats), 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def batch_obb_hits(
    centers: np.ndarray,
    quats: np.ndarray,
    half_extents: np.ndarray,
    obstacle: Obb,
) -> np.ndarray:
    """Boolean mask of which posed boxes intersect one obstacle box.

    centers (n,3) and quats (n,4) pose a box with fixed half_extents.
    """
    n = len(centers)
    if n == 0:
        return np.zeros(0, dtype=bool)
    ob_c = obstacle.center_pose.position
    ob_r = obstacle.bounding_radius()
    body_r = float(np.linalg.norm(half_extents))
    near = np.linalg.norm(centers - ob_c, axis=1) <= ob_r + body_r
    result = np.zeros(n, dtype=bool)
    if not np.any(near):
        return result
    idx = np.nonzero(near)[0]
    ra = _quats_to_matrices(quats[idx])  # (m,3,3)
    rb = obstacle.rotation_matrix()
    t = ob_c - centers[idx]  # (m,3)
    ha = np.asarray(half_extents, dtype=np.float64)
    hb = obstacle.half_extents
    alive = np.ones(len(idx), dtype=bool)
    # Loop over the 15 candidate axes with the sample dimension vectorized.
    a_axes = [ra[:, :, i] for i in range(3)]  # each (m,3)
    b_axes = [np.broadcast_to(rb[:, i], (len(idx), 3)) for i in range(3)]
    axes_list = a_axes + b_axes
    for i in range(3):
        for j in range(3):
            axes_list.append(np.cross(ra[:, :, i], np.broadcast_to(rb[:, j], (len(idx), 3))))
    for axes in axes_list:
        if not np.any(alive):
            break
        norms2 = np.einsum("ma,ma->m", axes, axes)
        usable = norms2 > 1e-12
        proj_t = np.abs(np.einsum("ma,ma->m", t, axes))
        # |half . (R^T axis)| for each box
        ra_proj = np.abs(np.einsum("mab,ma->mb", ra, axes)) @ ha
        rb_proj = np.abs(axes @ rb) @ hb
        separated = usable & (proj_t > ra_proj + rb_proj)
        alive &= ~separated
    result[idx] = alive
    return result
