"""Adaptation math against matrix and interval-arithmetic oracles."""

import json
import math

import numpy as np
import pytest

from bimtwin.adaptation import (
    AdaptationConfig,
    DeviationKind,
    MissingScanError,
    UnsolvableOffsetError,
    adapt_parent_deviation,
    adapt_seat_deviation,
    analyze_target,
    apply_manual_replacement,
    check_nearby,
    design_built_deviation,
    suggest_offset,
)
from bimtwin.bim_repo import BimObject, Layer, Relationship, RepositoryError, load_scenario
from bimtwin.geometry import (
    Obb,
    Pose,
    RigidTransform,
    compose,
    invert,
    obb_intersects,
    quat_angle,
    quat_from_axis_angle,
    quat_to_matrix,
)
from bimtwin.scenarios import make_blocks_scenario, make_drywall_scenario


def mat4(t: RigidTransform) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = quat_to_matrix(t.rotation)
    m[:3, 3] = t.translation
    return m


def rand_transform(rng):
    return RigidTransform(
        quat_from_axis_angle(rng.normal(size=3), rng.uniform(-math.pi, math.pi)),
        rng.uniform(-2, 2, size=3),
    )


# ---------------------------------------------------------------------------
# deviation + parent adaptation
# ---------------------------------------------------------------------------


def test_deviation_identity_when_design_equals_built():
    rng = np.random.default_rng(3)
    t = rand_transform(rng)
    d = design_built_deviation(t, t)
    assert d.approx_eq(RigidTransform.identity(), tol=1e-9)


def test_deviation_pure_translation_case():
    d = design_built_deviation(RigidTransform.identity(), RigidTransform.translation_of(0, 0, 0.012))
    assert np.allclose(d.translation, [0, 0, 0.012], atol=1e-12)


def test_deviation_matches_matrix_oracle():
    design = RigidTransform.rotation_of([0, 0, 1], math.radians(10))
    built = compose(RigidTransform.translation_of(0.05, 0, 0), design)
    got = design_built_deviation(design, built)
    expected = np.linalg.inv(mat4(design)) @ mat4(built)
    assert np.allclose(mat4(got), expected, atol=1e-12)


def test_parent_adaptation_zero_deviation_fixed_point():
    rng = np.random.default_rng(5)
    parent = rand_transform(rng)
    target = rand_transform(rng)
    adapted = adapt_parent_deviation(target, parent, parent)
    assert adapted.approx_eq(target.as_pose(), tol=1e-9)


def test_parent_adaptation_commuting_translation_case():
    target = RigidTransform.translation_of(0.3, 0.0, 0.6)
    adapted = adapt_parent_deviation(
        target, RigidTransform.identity(), RigidTransform.translation_of(0, 0, 0.07)
    )
    assert np.allclose(adapted.position, [0.3, 0.0, 0.67], atol=1e-12)


def test_parent_adaptation_preserves_relative_pose():
    # a frame rotated 2 degrees and shifted; the panel must keep its
    # design-relative placement: built^-1 o adapted == design^-1 o design_target
    design = RigidTransform.translation_of(1.2, 0.04, 0.6)
    built = compose(
        RigidTransform.translation_of(1.21, 0.045, 0.6),
        RigidTransform.rotation_of([0, 0, 1], math.radians(2)),
    )
    target = RigidTransform.translation_of(0.3, -0.01, 0.6)
    adapted = adapt_parent_deviation(target, design, built)
    lhs = compose(invert(built), adapted.as_transform())
    rhs = compose(invert(design), target)
    assert lhs.approx_eq(rhs, tol=1e-9)


def test_parent_adaptation_identity_holds_for_1000_random_triples():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        design, built, target = (rand_transform(rng) for _ in range(3))
        adapted = adapt_parent_deviation(target, design, built)
        lhs = compose(invert(built), adapted.as_transform())
        rhs = compose(invert(design), target)
        assert float(np.max(np.abs(lhs.translation - rhs.translation))) < 1e-9
        assert quat_angle(lhs.rotation, rhs.rotation) < 1e-9


# ---------------------------------------------------------------------------
# seat adaptation
# ---------------------------------------------------------------------------


def test_seat_adaptation_z_only_and_bit_identical_rest():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        pose = Pose(
            rng.uniform(-2, 2, size=3),
            quat_from_axis_angle(rng.normal(size=3), rng.uniform(-math.pi, math.pi)),
        )
        s_dz, s_bz = rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)
        out = adapt_seat_deviation(pose, s_dz, s_bz)
        assert out.position[0] == pose.position[0]  # bit identical
        assert out.position[1] == pose.position[1]
        assert out.position[2] == pose.position[2] + (s_bz - s_dz)
        assert np.array_equal(out.orientation, pose.orientation)


def test_seat_adaptation_sign_cases():
    pose = Pose.from_xyz(0.1, 0.2, 0.3)
    assert adapt_seat_deviation(pose, 0.0, 0.0).position[2] == pytest.approx(0.3)
    assert adapt_seat_deviation(pose, 0.0, 0.012).position[2] == pytest.approx(0.312)
    assert adapt_seat_deviation(pose, 0.0, -0.005).position[2] == pytest.approx(0.295)


# ---------------------------------------------------------------------------
# nearby check + offset suggestion
# ---------------------------------------------------------------------------


def block_geometry():
    return [Obb.axis_aligned([0, 0, 0], [0.045, 0.045, 0.09])]


def stud_object(x, half=(0.02, 0.15, 0.025)):
    return BimObject(
        id="stud",
        name="stud",
        layer=Layer.AS_BUILT,
        geometry=[Obb.axis_aligned([0, 0, 0], half)],
        pose=Pose.from_xyz(x, 0.0, half[2]),
    )


def test_check_nearby_gap_and_overlap():
    target_pose = Pose.from_xyz(0.075, 0.0, 0.09)  # block left face at x=0.03
    scene_clear = [("stud", stud_object(0.0).world_boxes()[0])]  # right face at 0.02 -> 10mm gap
    assert check_nearby(target_pose, block_geometry(), scene_clear, clearance=0.0) == []
    intruding = [("stud", stud_object(0.018).world_boxes()[0])]  # 8 mm into the slot
    assert check_nearby(target_pose, block_geometry(), intruding, clearance=0.0) == ["stud"]
    outward = [("stud", stud_object(-0.02).world_boxes()[0])]
    assert check_nearby(target_pose, block_geometry(), outward, clearance=0.0) == []


def test_suggest_offset_matches_interval_oracle():
    # stud protrudes 8 mm into the block slot; clearance 1 mm -> offset 9 mm
    target_pose = Pose.from_xyz(0.075, 0.0, 0.09)
    stud = stud_object(0.018)  # stud right face at 0.038, block left face at 0.030
    sub = suggest_offset(target_pose, block_geometry(), stud, np.array([1.0, 0, 0]), clearance=0.001)
    penetration = (0.018 + 0.02) - (0.075 - 0.045)  # oracle: 1-D interval overlap
    assert penetration == pytest.approx(0.008)
    assert float(sub.offset_vector[0]) == pytest.approx(penetration + 0.001, abs=1e-9)
    assert sub.affects_subsequent
    # the suggested pose clears the stud at the configured clearance
    scene = [("stud", b) for b in stud.world_boxes()]
    assert check_nearby(sub.pose, block_geometry(), scene, clearance=0.001) == []


def test_suggest_offset_tangent_case_is_clearance_only():
    target_pose = Pose.from_xyz(0.095, 0.0, 0.09)  # block left face exactly at stud right face
    stud = stud_object(0.03)  # right face at 0.05 == block left face
    sub = suggest_offset(target_pose, block_geometry(), stud, np.array([1.0, 0, 0]), clearance=0.001)
    assert float(sub.offset_vector[0]) == pytest.approx(0.001, abs=1e-9)


def test_suggest_offset_unsolvable_when_budget_exceeded():
    target_pose = Pose.from_xyz(0.0, 0.0, 0.09)
    wall = BimObject(
        id="wall", name="wall", layer=Layer.AS_BUILT,
        geometry=[Obb.axis_aligned([0, 0, 0], [2.0, 0.2, 0.2])],
        pose=Pose.from_xyz(0.0, 0.0, 0.1),
    )
    with pytest.raises(UnsolvableOffsetError):
        suggest_offset(target_pose, block_geometry(), wall, np.array([1.0, 0, 0]), 0.001, max_offset=0.5)


def test_suggest_offset_minimality():
    # shrinking the suggested offset by more than the tolerance re-intersects
    target_pose = Pose.from_xyz(0.075, 0.0, 0.09)
    stud = stud_object(0.018)
    clearance = 0.001
    sub = suggest_offset(target_pose, block_geometry(), stud, np.array([1.0, 0, 0]), clearance)
    offset = float(sub.offset_vector[0])
    delta = 1e-6
    shrunk = target_pose.translated([offset - delta, 0, 0])
    inflated = [b.inflated(clearance).transformed(shrunk.as_transform()) for b in block_geometry()]
    assert any(obb_intersects(b, s) for b in inflated for s in stud.world_boxes())


def test_suggest_offset_rotated_intruder_against_sampled_oracle():
    # rotated stud: verify the slide distance by brute-force probing
    rng = np.random.default_rng(21)
    target_pose = Pose.from_xyz(0.07, 0.0, 0.09)
    stud = BimObject(
        id="stud", name="stud", layer=Layer.AS_BUILT,
        geometry=[Obb.axis_aligned([0, 0, 0], [0.02, 0.15, 0.025])],
        pose=Pose(np.array([0.02, 0.0, 0.025]), quat_from_axis_angle([0, 0, 1], math.radians(30))),
    )
    clearance = 0.002
    sub = suggest_offset(target_pose, block_geometry(), stud, np.array([1.0, 0, 0]), clearance)
    offset = float(sub.offset_vector[0])
    inflated = [b.inflated(clearance) for b in block_geometry()]
    stud_boxes = stud.world_boxes()

    def collides_at(s):
        t = target_pose.translated([s, 0, 0]).as_transform()
        return any(obb_intersects(b.transformed(t), sb) for b in inflated for sb in stud_boxes)

    assert collides_at(0.0)
    assert not collides_at(offset)
    assert collides_at(offset - 1e-5)  # minimal within probe resolution


# ---------------------------------------------------------------------------
# manual replacement + full analysis
# ---------------------------------------------------------------------------


def drywall_repo():
    return load_scenario(json.dumps(make_drywall_scenario()))


def test_manual_replacement_bookkeeping():
    repo = drywall_repo()
    target = repo.objects["panel-0"]
    trimmed = [Obb.axis_aligned([0, 0, 0], [0.26, 0.006, 0.6096])]
    twin = apply_manual_replacement(repo, "panel-0", trimmed, target.pose, note="trimmed panel")
    assert twin.layer == Layer.AS_BUILT
    assert repo.next_target().id == "panel-1"
    assert repo.as_built_records[-1].kind == "manual"
    with pytest.raises(RepositoryError):
        apply_manual_replacement(repo, "panel-0", trimmed, target.pose)


def test_analyze_target_no_deviation():
    repo = drywall_repo()
    repo.record_scan("frame", repo.objects["frame"].pose)
    cfg = AdaptationConfig.from_workcell(repo.workcell)
    report, suggestion = analyze_target(repo, "panel-0", cfg)
    assert report.kind == DeviationKind.NONE
    assert suggestion.pose.approx_eq(repo.objects["panel-0"].pose)


def test_analyze_target_parent_deviation_matches_direct_formula():
    repo = drywall_repo()
    frame = repo.objects["frame"]
    deviated = Pose(
        frame.pose.position + np.array([0.01, 0.005, 0.0]),
        quat_from_axis_angle([0, 0, 1], math.radians(2)),
    )
    repo.record_scan("frame", deviated)
    cfg = AdaptationConfig.from_workcell(repo.workcell)
    report, suggestion = analyze_target(repo, "panel-0", cfg)
    assert report.kind == DeviationKind.PARENT
    expected = adapt_parent_deviation(
        repo.objects["panel-0"].pose.as_transform(),
        frame.pose.as_transform(),
        deviated.as_transform(),
    )
    assert suggestion.pose.approx_eq(expected, tol=1e-9)


def test_analyze_target_requires_scanned_parent():
    repo = drywall_repo()
    cfg = AdaptationConfig.from_workcell(repo.workcell)
    with pytest.raises(MissingScanError):
        analyze_target(repo, "panel-0", cfg)


def test_analyze_target_nearby_stud_intrusion_and_outward():
    doc = make_blocks_scenario(gap=0.01)
    repo = load_scenario(doc)
    cfg = AdaptationConfig.from_workcell(repo.workcell)
    # stud deviated 18 mm toward the line: 8 mm into block 0's footprint
    repo.record_scan("stud", repo.objects["stud"].pose.translated([0.018, 0, 0]))
    report, suggestion = analyze_target(repo, "block-0", cfg)
    assert report.kind == DeviationKind.NEARBY_OBJECT
    assert report.reference_id == "stud"
    assert suggestion.affects_subsequent
    assert float(suggestion.offset_vector[0]) == pytest.approx(0.008 + cfg.clearance, abs=1e-9)
    # outward deviation: no suggestion
    repo2 = load_scenario(make_blocks_scenario(gap=0.01))
    repo2.record_scan("stud", repo2.objects["stud"].pose.translated([-0.003, 0, 0]))
    report2, suggestion2 = analyze_target(repo2, "block-0", cfg)
    assert report2.kind == DeviationKind.NONE
    assert suggestion2.pose.approx_eq(repo2.objects["block-0"].pose)


def test_analyze_target_seat_deviation_path():
    repo = load_scenario(make_blocks_scenario(gap=0.01))
    cfg = AdaptationConfig.from_workcell(repo.workcell)
    ground = repo.objects["ground-floor"]
    repo.record_scan("ground-floor", ground.pose.translated([0, 0, 0.012]))
    report, suggestion = analyze_target(repo, "block-0", cfg)
    assert report.kind == DeviationKind.SEAT
    assert suggestion.pose.position[2] == pytest.approx(repo.objects["block-0"].pose.position[2] + 0.012)
    assert suggestion.pose.position[0] == repo.objects["block-0"].pose.position[0]
