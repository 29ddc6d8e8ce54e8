"""Bundled scenario builders: the drywall cell and the block line.

Both return plain scenario dicts in the documented format so they can be
dumped to JSON, loaded through the normal parser, or parametrized by tests
and the experiment harness.

Dimensions for the drywall cell follow the imperial shop sizes (4 ft x 8 ft
frame, 2 ft x 4 ft and 2 ft x 2 ft panels); source material also quotes
2.2384 m for the frame length, which contradicts 8 ft = 2.4384 m and is
treated as a typo here.
"""

from __future__ import annotations

import math

FT = 0.3048

# frame shop dimensions (1:4-scale wall)
FRAME_LEN = 8 * FT  # 2.4384
FRAME_HGT = 4 * FT  # 1.2192
FRAME_DEPTH = 0.089
RAIL_W = 0.0381

PANEL_THICK = 0.012
PANEL_STANDOFF = 0.002  # magnet pad gap between panel back and frame face
FRAME_LIFT = 0.02  # frame rests on its support plate, panels clear the floor

BLOCK_HALF = (0.045, 0.045, 0.09)  # 0.09 x 0.09 x 0.18 block, a knob
STUD_HALF = (0.02, 0.15, 0.025)


def _pose(x=0.0, y=0.0, z=0.0, q=(1.0, 0.0, 0.0, 0.0)):
    return {"position": [float(x), float(y), float(z)], "orientation": [float(v) for v in q]}


def _box(cx, cy, cz, hx, hy, hz, q=(1.0, 0.0, 0.0, 0.0)):
    return {"center": _pose(cx, cy, cz, q), "half_extents": [float(hx), float(hy), float(hz)]}


def _quat_x(angle):
    return (math.cos(angle / 2), math.sin(angle / 2), 0.0, 0.0)


def _default_workcell(**overrides):
    cell = {
        "reach_envelope": [_box(1.2, -0.6, 1.0, 2.6, 2.2, 1.1)],
        "base_travel": 4.5,
        "nominal_speed": 0.25,
        "speed_fraction": 0.03,
        "drop_height": 0.002,
        "safe_height": 1.6,
        "home_pose": _pose(2.4, -1.4, 1.2),
        "gripper_boxes": [_box(0.0, 0.0, 0.08, 0.04, 0.04, 0.06)],
        "jaw_axis": "x",
        "clearance": 0.005,
        "deviation_tolerance_translation": 0.001,
        "deviation_tolerance_rotation": math.radians(0.2),
        "row_axis": [1.0, 0.0, 0.0],
        "max_offset": 0.5,
        "checked_step": 0.005,
        "contact_step": 0.005,
        "tick": 0.05,
        "state_stride": 25,
        "max_replans": 3,
        "replan_path_ratio": 1.8,
        "decision_seconds": 3.0,
        "planner_tries": 40,
    }
    cell.update(overrides)
    return cell


def make_drywall_scenario() -> dict:
    """Wall-frame cell: scanned frame, four sequenced panels, two stacks."""
    objects = []
    frame_cz = FRAME_HGT / 2 + FRAME_LIFT
    stud_h = FRAME_HGT - 2 * RAIL_W
    frame_boxes = [
        _box(0, 0, -(FRAME_HGT - RAIL_W) / 2, FRAME_LEN / 2, FRAME_DEPTH / 2, RAIL_W / 2),
        _box(0, 0, (FRAME_HGT - RAIL_W) / 2, FRAME_LEN / 2, FRAME_DEPTH / 2, RAIL_W / 2),
    ]
    # verticals: two edge studs plus interior studs at the panel joints
    for sx in (-(FRAME_LEN - RAIL_W) / 2, -FT * 2, 0.0, FT * 2, (FRAME_LEN - RAIL_W) / 2):
        frame_boxes.append(_box(sx, 0, 0, RAIL_W / 2, FRAME_DEPTH / 2, stud_h / 2))
    objects.append(
        {
            "id": "ground-floor",
            "name": "Ground floor",
            "layer": "as-built",
            "boxes": [_box(0, 0, 0, 3.0, 2.4, 0.05)],
            "pose": _pose(1.2, -0.5, -0.05),
            "relationship": {"kind": "adjacent", "parent_id": None},
            "workpiece_type": "slab",
            "color": [0.45, 0.45, 0.45],
        }
    )
    objects.append(
        {
            "id": "surroundings",
            "name": "Workspace surroundings",
            "layer": "as-built",
            "boxes": [_box(0, 0, 0, 3.0, 0.05, 1.6)],
            "pose": _pose(1.2, 1.0, 1.6),
            "relationship": {"kind": "adjacent", "parent_id": None},
            "workpiece_type": "wall",
            "color": [0.3, 0.4, 0.8],
        }
    )
    objects.append(
        {
            "id": "frame-support",
            "name": "Frame support plate",
            "layer": "as-built",
            "boxes": [_box(0, 0, 0, FRAME_LEN / 2 + 0.1, 0.15, FRAME_LIFT / 2)],
            "pose": _pose(FRAME_LEN / 2, 0.16, FRAME_LIFT / 2),
            "relationship": {"kind": "adjacent", "parent_id": None},
            "workpiece_type": "support",
            "color": [0.5, 0.5, 0.55],
        }
    )
    objects.append(
        {
            "id": "frame",
            "name": "Wall frame (design)",
            "layer": "as-designed",
            "boxes": frame_boxes,
            "pose": _pose(FRAME_LEN / 2, FRAME_DEPTH / 2, frame_cz),
            "relationship": {"kind": "adjacent", "parent_id": None},
            "workpiece_type": "frame",
            "color": [0.85, 0.75, 0.3],
            # fiducial on the left end of the frame; the pose indicator sits
            # at frame center, a long lever away
            "marker": {
                "offset": {
                    "rotation": [1.0, 0.0, 0.0, 0.0],
                    "translation": [FRAME_LEN / 2 - 0.05, 0.05, 0.0],
                }
            },
        }
    )
    # panels: three 2x4 ft columns, one 2x2 ft under the window opening;
    # widths shave 2 mm per side so butted neighbors keep a designed gap
    panel_y = -(PANEL_STANDOFF + PANEL_THICK / 2)
    grip = _pose(0, -PANEL_THICK / 2, 0, _quat_x(math.pi / 2))
    large_half = (FT - 0.002, PANEL_THICK / 2, 2 * FT - 0.002)
    for k in range(3):
        objects.append(
            {
                "id": f"panel-{k}",
                "name": f"Drywall panel {k + 1} (2x4 ft)",
                "layer": "target",
                "boxes": [_box(0, 0, 0, *large_half)],
                "pose": _pose(FT + k * 2 * FT, panel_y, frame_cz),
                "relationship": {"kind": "fully-connected", "parent_id": "frame"},
                "sequence_index": k,
                "workpiece_type": "panel-large",
                "grip_indicator": grip,
                "color": [0.92, 0.9, 0.85],
            }
        )
    objects.append(
        {
            "id": "panel-3",
            "name": "Drywall panel 4 (2x2 ft)",
            "layer": "target",
            "boxes": [_box(0, 0, 0, FT - 0.002, PANEL_THICK / 2, FT - 0.002)],
            "pose": _pose(FT + 3 * 2 * FT, panel_y, FT + FRAME_LIFT),
            "relationship": {"kind": "fully-connected", "parent_id": "frame"},
            "sequence_index": 3,
            "workpiece_type": "panel-small",
            "grip_indicator": grip,
            "color": [0.92, 0.9, 0.85],
        }
    )
    objects.append(
        {
            "id": "laser-curtain",
            "name": "Safety laser curtain",
            "layer": "virtual-collision",
            "boxes": [_box(0, 0, 0, 3.0, 0.01, 1.3)],
            "pose": _pose(1.2, -2.1, 1.5),
            "relationship": {"kind": "adjacent", "parent_id": None},
            "workpiece_type": "curtain",
            "color": [1.0, 0.2, 0.2],
        }
    )
    # flat stacks: panels lie face-up (local -y face up => rot about x by -90)
    flat = _quat_x(-math.pi / 2)
    stacks = [
        {
            "id": "stack-large",
            "workpiece_type": "panel-large",
            "quantity": 3,
            "base_pose": _pose(0.6, -1.1, 0.010, flat),
            "item_vertical_pitch": 0.02,
            "marker": {
                "offset": {"rotation": [1.0, 0.0, 0.0, 0.0], "translation": [0.05, 0.0, -0.02]}
            },
        },
        {
            "id": "stack-small",
            "workpiece_type": "panel-small",
            "quantity": 1,
            "base_pose": _pose(1.8, -1.1, 0.010, flat),
            "item_vertical_pitch": 0.02,
            "marker": {
                "offset": {"rotation": [1.0, 0.0, 0.0, 0.0], "translation": [0.05, 0.0, -0.02]}
            },
        },
    ]
    return {
        "format_version": 1,
        "name": "drywall",
        "objects": objects,
        "stacks": stacks,
        "noise_model": {"sigma_translation": 0.0, "sigma_rotation": 0.0, "seed": 0},
        "workcell": _default_workcell(speed_fraction=0.03, drop_height=0.001, clearance=0.001),
    }


def make_blocks_scenario(gap: float = 0.01, num_blocks: int = 4, clearance: float | None = None) -> dict:
    """Block line next to a boundary stud, gaps of `gap` meters between
    footprints. Clearance defaults to half the gap so the nearby-object check
    never trips on the designed spacing itself."""
    if gap <= 0:
        raise ValueError("gap must be positive")
    if clearance is None:
        clearance = gap / 2
    bx, by, bz = BLOCK_HALF
    objects = [
        {
            "id": "ground-floor",
            "name": "Ground floor",
            "layer": "as-built",
            "boxes": [_box(0, 0, 0, 1.6, 1.2, 0.05)],
            "pose": _pose(0.6, 0.1, -0.05),
            "relationship": {"kind": "adjacent", "parent_id": None},
            "workpiece_type": "slab",
            "color": [0.45, 0.45, 0.45],
        },
        {
            "id": "stud",
            "name": "Boundary stud",
            "layer": "as-built",
            "boxes": [_box(0, 0, 0, *STUD_HALF)],
            "pose": _pose(0.0, 0.0, STUD_HALF[2]),
            "relationship": {"kind": "adjacent", "parent_id": None},
            "workpiece_type": "stud",
            "color": [0.6, 0.4, 0.2],
            "marker": {
                "offset": {"rotation": [1.0, 0.0, 0.0, 0.0], "translation": [0.03, 0.0, 0.01]}
            },
        },
        {
            "id": "laser-curtain",
            "name": "Safety laser curtain",
            "layer": "virtual-collision",
            "boxes": [_box(0, 0, 0, 1.6, 0.01, 0.8)],
            "pose": _pose(0.6, 0.9, 0.9),
            "relationship": {"kind": "adjacent", "parent_id": None},
            "workpiece_type": "curtain",
            "color": [1.0, 0.2, 0.2],
        },
    ]
    line_start = STUD_HALF[0] + gap + bx  # first block center x
    for i in range(num_blocks):
        objects.append(
            {
                "id": f"block-{i}",
                "name": f"Block {i + 1}",
                "layer": "target",
                "boxes": [_box(0, 0, 0, bx, by, bz)],
                "pose": _pose(line_start + i * (2 * bx + gap), 0.0, bz),
                "relationship": {"kind": "seated", "parent_id": "ground-floor"},
                "sequence_index": i,
                "workpiece_type": "block",
                "grip_indicator": _pose(0, 0, bz),
                "color": [0.85, 0.3, 0.25],
            }
        )
    stacks = [
        {
            "id": "stack-blocks",
            "workpiece_type": "block",
            "quantity": num_blocks,
            # staged on 5 mm dunnage so the bottom item clears the floor
            "base_pose": _pose(0.6, -0.5, bz + 0.005),
            "item_vertical_pitch": 2 * bz,
            "marker": {
                "offset": {"rotation": [1.0, 0.0, 0.0, 0.0], "translation": [0.05, 0.0, 0.02]}
            },
        }
    ]
    cell = _default_workcell(
        reach_envelope=[_box(0.5, 0.0, 0.5, 1.4, 1.2, 0.7)],
        speed_fraction=0.07,
        drop_height=0.002,
        safe_height=0.55,
        home_pose=_pose(1.1, -0.4, 0.6),
        clearance=clearance,
        jaw_axis="y",
        safety_curtain_ids=["laser-curtain"],
    )
    return {
        "format_version": 1,
        "name": f"blocks-gap-{round(gap * 1000, 3):g}mm",
        "objects": objects,
        "stacks": stacks,
        "noise_model": {"sigma_translation": 0.0, "sigma_rotation": 0.0, "seed": 0},
        "workcell": cell,
    }
