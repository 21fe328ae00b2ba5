import numpy as np
import pytest

from egopose.encoding import (FRAME_HEAD, TaskSpec, apply_fill, encode_task,
                              sliding_windows)
from egopose.errors import ProfileMismatch
from egopose.occlusion import simulate_sequence
from egopose.synthetic import generate_motion, make_profile, make_skeleton


@pytest.fixture(scope="module")
def setup():
    sk = make_skeleton()
    resolved = make_profile(sk).resolve(sk)
    seq = generate_motion(sk, duration_s=1.5, fps=30.0, seed=2)
    records = simulate_sequence(seq, resolved)
    return sk, resolved, seq, records


def test_apply_fill_holds_last_visible():
    enc = np.arange(9, dtype=np.float64).reshape(3, 1, 3)
    visible = np.array([[True], [False], [True]])
    rest = np.full((1, 3), -1.0)
    out = apply_fill(enc, visible, rest)
    np.testing.assert_array_equal(out[0], enc[0])
    np.testing.assert_array_equal(out[1], enc[0])  # held
    np.testing.assert_array_equal(out[2], enc[2])


def test_apply_fill_rest_before_first_visible():
    enc = np.ones((3, 2, 3))
    visible = np.array([[False, True]] * 3)
    rest = np.stack([np.full(3, 7.0), np.zeros(3)])
    out = apply_fill(enc, visible, rest)
    np.testing.assert_array_equal(out[:, 0], np.full((3, 3), 7.0))
    np.testing.assert_array_equal(out[:, 1], np.ones((3, 3)))


def test_inside_out_encoding(setup):
    sk, resolved, seq, records = setup
    enc = encode_task(seq, records, resolved, "inside-out")
    assert enc.n_out == len(resolved.body_joints) + len(resolved.left_fingers) \
        + len(resolved.right_fingers)
    assert enc.inputs.shape == (seq.n_frames, 3 * enc.n_out)
    # the head slot is the origin of its own frame
    head_slot = enc.out_names.index("Head")
    np.testing.assert_allclose(enc.targets[:, head_slot], 0.0, atol=1e-12)
    # visible slots feed their ground-truth encoding straight through
    flat = enc.inputs.reshape(seq.n_frames, enc.n_out, 3)
    vis = enc.target_visible
    np.testing.assert_allclose(flat[vis], enc.targets[vis], atol=1e-12)
    assert enc.labels.shape == (seq.n_frames, len(records.groups))
    assert set(np.unique(enc.labels)) <= {0.0, 1.0}


def test_inside_out_requires_records(setup):
    sk, resolved, seq, _ = setup
    with pytest.raises(ValueError):
        encode_task(seq, None, resolved, "inside-out")


def test_three_point_encoding(setup):
    sk, resolved, seq, records = setup
    enc = encode_task(seq, None, resolved, "three-point")
    assert enc.input_dim == 27  # 3 trackers x (position + forward + up)
    assert enc.labels is None
    assert enc.n_out == len(resolved.body_joints)
    assert np.all(enc.target_visible)
    # the head tracker position feature is identically zero (head-local)
    np.testing.assert_allclose(enc.inputs[:, :3], 0.0, atol=1e-12)


def test_finger_synthesis_encoding(setup):
    sk, resolved, seq, records = setup
    enc = encode_task(seq, None, resolved, "finger-synthesis")
    tips = [n for n in enc.out_names if n.endswith("__tip")]
    assert len(tips) == 4  # one locator per finger
    assert np.all(enc.out_is_finger)
    # finger chains hang off the wrist: at least one edge roots at the frame
    # origin, and tip edges are finger edges
    assert np.any(enc.edges[:, 0] == -1)
    tip_slots = np.flatnonzero(enc.out_is_tip)
    for s in tip_slots:
        row = np.flatnonzero(enc.edges[:, 1] == s)[0]
        assert enc.edge_is_finger[row]


def test_finger_synthesis_needs_fingers(setup):
    sk, resolved, seq, _ = setup
    from egopose.profiles import SkeletonProfile
    bare = SkeletonProfile(head="Head", left_wrist="LeftWrist",
                           right_wrist="RightWrist", body_joints=["Hips"])
    with pytest.raises(ProfileMismatch):
        encode_task(seq, None, bare.resolve(sk), "finger-synthesis")


def test_head_frame_edges_follow_skeleton(setup):
    sk, resolved, seq, records = setup
    enc = encode_task(seq, None, resolved, "three-point")
    for p, c in enc.edges:
        assert p >= 0
        assert sk.parents[enc.out_joint[c]] == enc.out_joint[p]
        assert enc.out_frame[c] == FRAME_HEAD


def test_task_spec_validation():
    with pytest.raises(ValueError):
        TaskSpec(task="nope")


def test_sliding_windows_view():
    arr = np.arange(20, dtype=np.float64).reshape(10, 2)
    w = sliding_windows(arr, 4)
    assert w.shape == (7, 4, 2)
    np.testing.assert_array_equal(w[3], arr[3:7])
