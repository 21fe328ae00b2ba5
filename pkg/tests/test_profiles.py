import numpy as np
import pytest

from egopose.errors import ProfileMismatch
from egopose.profiles import (PrimitiveSpec, SkeletonProfile,
                              anthropometric_capsules)
from egopose.synthetic import make_profile, make_skeleton


@pytest.fixture(scope="module")
def skeleton():
    return make_skeleton()


@pytest.fixture(scope="module")
def profile(skeleton):
    return make_profile(skeleton)


def test_resolve_maps_names_to_indices(skeleton, profile):
    res = profile.resolve(skeleton)
    assert res.head == skeleton.index("Head")
    assert res.left_wrist == skeleton.index("LeftWrist")
    assert skeleton.names[res.body_joints[0]] == "Hips"


def test_resolve_rejects_unknown_joint(skeleton):
    bad = SkeletonProfile(head="Nope", left_wrist="LeftWrist",
                          right_wrist="RightWrist", body_joints=[])
    with pytest.raises(ProfileMismatch):
        bad.resolve(skeleton)


def test_finger_joints_inherit_hand_group(skeleton, profile):
    res = profile.resolve(skeleton)
    hand_gi = res.group_index("left_hand")
    for j in res.left_fingers:
        assert res.joint_group[j] == hand_gi
    # and the wrist itself belongs to the hand group
    assert res.joint_group[res.left_wrist] == hand_gi


def test_group_count(profile):
    # head, torso, and six per-side groups
    assert len(profile.group_names) == 14


def test_json_round_trip(tmp_path, profile):
    path = tmp_path / "profile.json"
    profile.save(path)
    back = SkeletonProfile.load(path)
    assert back.to_dict() == profile.to_dict()
    assert back.group_names == profile.group_names
    assert len(back.primitives) == len(profile.primitives)


def test_primitive_spec_validation():
    with pytest.raises(ValueError):
        PrimitiveSpec(kind="sphere", joints=["a"], group="g")
    with pytest.raises(ValueError):
        PrimitiveSpec(kind="capsule", joints=["a"], group="g", radius=0.1)
    with pytest.raises(ValueError):
        PrimitiveSpec(kind="capsule", joints=["a", "b"], group="g", radius=0.0)
    with pytest.raises(ValueError):
        PrimitiveSpec(kind="box", joints=["a"], group="g", half_extents=(1, 1))


def test_anthropometric_radii_clamped(skeleton):
    specs = anthropometric_capsules(
        skeleton, [("LeftHip", "LeftKnee", "left_hip"),
                   ("LeftAnkle", "LeftToe", "left_foot")])
    # thigh: 0.18 * 0.40 = 0.072 clamps to the 0.07 ceiling
    assert np.isclose(specs[0].radius, 0.07)
    # foot bone is short: 0.18 * |(0, -0.04, 0.12)| clamps to the 0.03 floor
    assert np.isclose(specs[1].radius, 0.03)
