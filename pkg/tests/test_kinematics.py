import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contiplan.kinematics import (
    ArmGeometry,
    BackboneSampler,
    HybridConfig,
    JointSpec,
    Pose,
    RigidConfig,
    SoftConfig,
    actuation_to_soft,
    as_config,
    hybrid_backbone,
    rigid_forward,
    soft_to_actuation,
    soft_transform,
    tip_pose,
    wrap_angle,
)
from oracles import chain_fk_reverse, integrate_arc


def _random_rigid(geometry, rng):
    return RigidConfig(tuple(rng.uniform(geometry.lower, geometry.upper)))


# -- soft segment ------------------------------------------------------------


def test_straight_segment_is_pure_translation():
    t = soft_transform(SoftConfig(0.0, 0.7, 0.2))
    np.testing.assert_allclose(t.rotation, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(t.translation, [0.0, 0.0, 0.2], atol=1e-15)


@pytest.mark.parametrize("phi,expected", [(0.0, (-0.2, 0.0, 0.2)), (np.pi / 2, (0.0, -0.2, 0.2))])
def test_quarter_circle_bend(phi, expected):
    t = soft_transform(SoftConfig(5.0, phi, np.pi / 10))
    np.testing.assert_allclose(t.translation, expected, atol=1e-12)
    p, R = integrate_arc(5.0, phi, np.pi / 10)
    np.testing.assert_allclose(t.translation, p[0], atol=1e-9)
    np.testing.assert_allclose(t.rotation, R[0], atol=1e-9)


def test_tip_rotation_third_column_is_arc_tangent():
    s = SoftConfig(4.0, 1.1, 0.3)
    h = 1e-6
    a = soft_transform(SoftConfig(4.0, 1.1, 0.3 - h)).translation
    b = soft_transform(SoftConfig(4.0, 1.1, 0.3 + h)).translation
    tangent = (b - a) / (2 * h)
    np.testing.assert_allclose(soft_transform(s).rotation[:, 2], tangent, atol=1e-8)


@pytest.mark.parametrize("bad", [dict(kappa=-0.1, phi=0.0, arc_length=0.2), dict(kappa=1.0, phi=0.0, arc_length=0.0)])
def test_soft_config_rejects_invalid(bad):
    with pytest.raises(ValueError):
        SoftConfig(**bad)


@pytest.mark.parametrize("bend", [0.0, 1e-8, 1e-4])
def test_orthonormal_near_zero_bend(bend):
    R = soft_transform(SoftConfig(bend / 0.25, 0.3, 0.25)).rotation
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9


def test_continuous_across_series_switch():
    l = 1.0
    eps = 1e-9
    lo = soft_transform(SoftConfig((1e-6 - eps) / l, 0.4, l))
    hi = soft_transform(SoftConfig((1e-6 + eps) / l, 0.4, l))
    assert np.linalg.norm(lo.as_matrix() - hi.as_matrix()) < 1e-6


def test_soft_arc_chord_length_matches_arc_length():
    kappa, phi, l = 6.0, -0.8, 0.3
    pts = np.array([soft_transform(SoftConfig(kappa, phi, s)).translation for s in np.linspace(1e-9, l, 1000)])
    chords = np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()
    assert abs(chords - l) / l < 1e-3


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 3 * np.pi / 4), st.floats(-np.pi, np.pi), st.floats(0.05, 0.5))
def test_soft_rotation_always_orthonormal(theta, phi, l):
    R = soft_transform(SoftConfig(theta / l, phi, l)).rotation
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
    assert abs(np.linalg.det(R) - 1.0) < 1e-9


# -- actuation map -------------------------------------------------------------


@pytest.mark.parametrize("a", [0.0, 0.3, 1.0])
def test_equal_chambers_do_not_bend(a):
    s = actuation_to_soft([a, a, a])
    assert s.kappa == 0.0 and s.phi == 0.0


def test_single_chamber_values():
    # gain 12 gives 12*sqrt(2/3) = 9.8, above the default kappa_max of 8, so lift the clamp here
    g = 12.0
    s1 = actuation_to_soft([1, 0, 0], gain=g, kappa_max=20.0)
    assert s1.phi == pytest.approx(0.0, abs=1e-12)
    assert s1.kappa == pytest.approx(g * math.sqrt(2.0 / 3.0), rel=1e-12)
    s2 = actuation_to_soft([0, 1, 0], gain=g, kappa_max=20.0)
    assert s2.phi == pytest.approx(2 * np.pi / 3, abs=1e-12)
    assert s2.kappa == pytest.approx(s1.kappa, rel=1e-12)


def test_single_chamber_clamped_at_default_kappa_max():
    assert actuation_to_soft([1, 0, 0]).kappa == pytest.approx(8.0)


@pytest.mark.parametrize("bad", [[1.2, 0, 0], [-0.1, 0, 0], [0.5, 0.5], [np.nan, 0, 0]])
def test_actuation_out_of_range_rejected(bad):
    with pytest.raises(ValueError):
        actuation_to_soft(bad)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3))
def test_cyclic_permutation_rotates_phi(a):
    s = actuation_to_soft(a, kappa_max=50.0)
    shifted = actuation_to_soft([a[2], a[0], a[1]], kappa_max=50.0)
    assert shifted.kappa == pytest.approx(s.kappa, abs=1e-9)
    if s.kappa > 1e-6:
        assert abs(float(wrap_angle(shifted.phi - s.phi - 2 * np.pi / 3))) < 1e-6


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 8.0), st.floats(-np.pi, np.pi))
def test_soft_to_actuation_inverts(kappa, phi):
    a = soft_to_actuation(kappa, phi)
    s = actuation_to_soft(a, kappa_max=8.0)
    assert s.kappa == pytest.approx(kappa, abs=1e-9)
    if kappa > 1e-6:
        assert abs(float(wrap_angle(s.phi - phi))) < 1e-6


# -- rigid chain ---------------------------------------------------------------


def test_zero_joints_give_product_of_link_transforms(wide_geometry):
    frames = rigid_forward(wide_geometry, RigidConfig((0.0,) * 6))
    expected = np.eye(4)
    for j in wide_geometry.joints:
        expected = expected @ j.origin.as_matrix()
    expected = expected @ wide_geometry.flange.as_matrix()
    np.testing.assert_allclose(frames[-1].as_matrix(), expected, atol=1e-15)
    assert len(frames) == 7


def test_rotation_about_own_axis_keeps_translation():
    joints = tuple(
        JointSpec(f"j{i}", Pose.from_translation([0, 0, 0.1]), (0, 0, 1), -4.0, 4.0) for i in range(6)
    )
    geo = ArmGeometry(joints, Pose.from_translation([0, 0, 0.05]), Pose(), 0.2, 0.2)
    home = rigid_forward(geo, RigidConfig((0.0,) * 6))[-1]
    turned = rigid_forward(geo, RigidConfig((np.pi, 0, 0, 0, 0, 0)))[-1]
    np.testing.assert_allclose(turned.translation, home.translation, atol=1e-12)
    Rz = np.array([[-1.0, 0, 0], [0, -1.0, 0], [0, 0, 1.0]])
    np.testing.assert_allclose(turned.rotation, Rz, atol=1e-12)


def test_random_configs_match_reverse_chain(geometry):
    rng = np.random.default_rng(3)
    for _ in range(200):
        rigid = _random_rigid(geometry, rng)
        flange = rigid_forward(geometry, rigid)[-1].as_matrix()
        np.testing.assert_allclose(flange, chain_fk_reverse(geometry, rigid.joints), atol=1e-12)


def test_joint_limit_violation_rejected(geometry):
    q = list(geometry.home().rigid.joints)
    q[2] = geometry.upper[2] + 0.1
    with pytest.raises(ValueError, match="elbow"):
        rigid_forward(geometry, RigidConfig(tuple(q)))


def test_rigid_config_needs_six_joints():
    with pytest.raises(ValueError):
        RigidConfig((0.0,) * 5)


# -- backbone ------------------------------------------------------------------


def test_straight_arm_backbone_is_colinear_and_uniform(wide_geometry):
    cfg = HybridConfig(RigidConfig((0.0,) * 6), SoftConfig(0.0, 0.0, wide_geometry.soft_length))
    bb = hybrid_backbone(wide_geometry, cfg, 50)
    total = 0.87 + wide_geometry.soft_length
    np.testing.assert_allclose(bb.points[:, :2], 0.0, atol=1e-15)
    np.testing.assert_allclose(np.diff(bb.points[:, 2]), total / 49, atol=1e-12)


def test_two_point_backbone_is_base_and_tip(geometry):
    cfg = geometry.home()
    bb = hybrid_backbone(geometry, cfg, 2)
    np.testing.assert_allclose(bb.points[0], 0.0, atol=1e-15)
    np.testing.assert_allclose(bb.points[1], tip_pose(geometry, cfg).translation, atol=1e-12)
    assert bb.tags == ("rigid", "soft")


def test_soft_points_lie_on_bend_circle(geometry):
    kappa = (np.pi / 2) / geometry.soft_length
    cfg = HybridConfig(geometry.home().rigid, SoftConfig(kappa, 0.9, geometry.soft_length))
    bb = hybrid_backbone(geometry, cfg, 200)
    base = rigid_forward(geometry, cfg.rigid)[-1] @ geometry.soft_mount
    local = (bb.points[~bb.rigid_mask] - base.translation) @ base.rotation
    # circle centre sits 1/kappa from the base along the bending direction
    centre = -np.array([np.cos(0.9), np.sin(0.9), 0.0]) / kappa
    np.testing.assert_allclose(np.linalg.norm(local - centre, axis=1), 1 / kappa, atol=1e-9)
    normal = np.array([-np.sin(0.9), np.cos(0.9), 0.0])
    np.testing.assert_allclose(local @ normal, 0.0, atol=1e-9)


def test_thirty_rigid_twenty_soft_split(geometry):
    geo = replace(geometry, soft_length=0.575, rigid_only_substitute_length=0.575)
    bb = hybrid_backbone(geo, geo.home(), 50)
    assert bb.tags == ("rigid",) * 30 + ("soft",) * 20


def test_tip_pose_is_exact_composition(geometry):
    rng = np.random.default_rng(5)
    for _ in range(50):
        rigid = _random_rigid(geometry, rng)
        soft = SoftConfig(rng.uniform(0, geometry.kappa_limit), rng.uniform(-np.pi, np.pi), geometry.soft_length)
        cfg = HybridConfig(rigid, soft)
        expected = rigid_forward(geometry, rigid)[-1] @ geometry.soft_mount @ soft_transform(soft)
        got = hybrid_backbone(geometry, cfg).tip_pose
        assert np.array_equal(got.as_matrix(), expected.as_matrix())
        assert np.array_equal(tip_pose(geometry, cfg).as_matrix(), expected.as_matrix())


def test_sampler_batch_matches_scalar_path(geometry):
    rng = np.random.default_rng(9)
    lo, hi = geometry.config_bounds()
    Q = rng.uniform(lo, hi, size=(20, 8))
    pts, tips = BackboneSampler(geometry, 50).evaluate(Q)
    for q, p, T in zip(Q, pts, tips):
        bb = hybrid_backbone(geometry, as_config(q, geometry))
        np.testing.assert_allclose(p, bb.points, atol=1e-12)
        np.testing.assert_allclose(T, bb.tip_pose.as_matrix(), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 120))
def test_backbone_invariants(seed, n):
    from contiplan.kinematics import default_geometry

    geometry = default_geometry()
    rng = np.random.default_rng(seed)
    lo, hi = geometry.config_bounds()
    cfg = as_config(rng.uniform(lo, hi), geometry)
    bb = hybrid_backbone(geometry, cfg, n)
    nominal = (0.87 + geometry.soft_length) / (n - 1)
    gaps = np.linalg.norm(np.diff(bb.points, axis=0), axis=1)
    assert gaps.max() <= 1.5 * nominal + 1e-12
    k = bb.tags.count("rigid")
    assert bb.tags == ("rigid",) * k + ("soft",) * (n - k)


def test_rigid_only_variant_is_straight(geometry):
    ro = geometry.as_rigid_only()
    cfg = HybridConfig(geometry.home().rigid, SoftConfig(5.0, 0.3, geometry.soft_length))
    base = rigid_forward(ro, cfg.rigid)[-1]
    tip = tip_pose(ro, cfg)
    np.testing.assert_allclose(tip.translation, base.apply([0, 0, ro.rigid_only_substitute_length]), atol=1e-12)
    assert ro.kappa_limit == 0.0


def test_geometry_requires_equal_substitute_length(geometry):
    with pytest.raises(ValueError):
        replace(geometry, rigid_only_substitute_length=0.3)


def test_geometry_json_round_trip(geometry, tmp_path):
    path = tmp_path / "arm.json"
    geometry.save(path)
    back = ArmGeometry.load(path)
    assert json.loads(path.read_text())["soft_length"] == geometry.soft_length
    q = geometry.home()
    np.testing.assert_array_equal(tip_pose(back, q).as_matrix(), tip_pose(geometry, q).as_matrix())
