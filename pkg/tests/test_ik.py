import numpy as np
import pytest

from egopose import quat
from egopose.errors import TooShort
from egopose.ik import (IkConfig, IkProblem, IkTarget, MomentumSmoother,
                        acceleration_metric, smooth_stream, solve_frame,
                        solve_sequence)
from egopose.skeleton import Pose, Skeleton, forward_kinematics
from egopose.synthetic import generate_motion, make_skeleton


def two_link(l1=0.3, l2=0.25):
    return Skeleton(names=("base", "elbow", "tip"), parents=np.array([-1, 0, 1]),
                    offsets=np.array([[0.0, 0, 0], [l1, 0, 0], [l2, 0, 0]]))


def rest(skeleton):
    return skeleton.rest_pose()


def test_two_link_matches_law_of_cosines():
    l1, l2 = 0.3, 0.25
    sk = two_link(l1, l2)
    d = 0.45
    target = np.array([d * np.cos(0.4), d * np.sin(0.4), 0.0])
    problem = IkProblem(skeleton=sk, targets=[IkTarget(joint=2, position=target)],
                        initial=rest(sk))
    config = IkConfig(solve_root_translation=False, tol=1e-8)
    result = solve_frame(problem, config)
    assert result.residual < 1e-6
    # interior bend angle from the reach distance
    expected = np.arccos((d * d - l1 * l1 - l2 * l2) / (2 * l1 * l2))
    solved = 2.0 * np.arccos(np.clip(abs(result.pose.rotations[1, 0]), 0, 1))
    assert abs(solved - expected) < 1e-4


def test_two_link_unreachable_target_stretches_straight():
    sk = two_link()
    target = np.array([2.0, 0.5, 0.0])
    problem = IkProblem(skeleton=sk, targets=[IkTarget(joint=2, position=target)],
                        initial=rest(sk))
    result = solve_frame(problem, IkConfig(solve_root_translation=False))
    pos = forward_kinematics(sk, result.pose)
    # best reach: the arm fully extended toward the target
    reach = np.linalg.norm(pos[2])
    assert abs(reach - 0.55) < 1e-6
    assert abs(result.residual - (np.linalg.norm(target) - 0.55)) < 1e-3


def random_pose(skeleton, seed, scale=0.5):
    rng = np.random.Generator(np.random.PCG64(seed))
    rot = quat.exp_map(rng.normal(scale=scale, size=(skeleton.n_joints, 3)))
    return Pose(root_pos=rng.normal(scale=0.2, size=3) + [0, 0.9, 0],
                rotations=rot)


def end_effector_targets(skeleton, pose, names):
    pos = forward_kinematics(skeleton, pose)
    return [IkTarget(joint=skeleton.index(n), position=pos[skeleton.index(n)])
            for n in names]


EFFECTORS = ["Head", "LeftWrist", "RightWrist", "LeftAnkle", "RightAnkle"]


def test_recovers_fk_targets_from_rest():
    sk = make_skeleton()
    hits = 0
    for seed in range(5):
        goal = random_pose(sk, seed, scale=0.3)
        targets = end_effector_targets(sk, goal, EFFECTORS)
        problem = IkProblem(skeleton=sk, targets=targets, initial=rest(sk))
        result = solve_frame(problem, IkConfig())
        assert result.iterations <= 50
        if result.residual <= 1e-3:
            hits += 1
    assert hits == 5


def test_bone_lengths_structurally_preserved():
    sk = make_skeleton()
    goal = random_pose(sk, 9)
    targets = end_effector_targets(sk, goal, EFFECTORS)
    result = solve_frame(IkProblem(skeleton=sk, targets=targets, initial=rest(sk)),
                         IkConfig())
    pos = forward_kinematics(sk, result.pose)
    for j in range(1, sk.n_joints):
        length = np.linalg.norm(pos[j] - pos[sk.parents[j]])
        ref = np.linalg.norm(sk.offsets[j])
        assert abs(length - ref) <= 1e-9 * max(ref, 1.0)


def test_satisfied_problem_exits_immediately():
    sk = two_link()
    pose = rest(sk)
    pos = forward_kinematics(sk, pose)
    problem = IkProblem(skeleton=sk, targets=[IkTarget(joint=2, position=pos[2])],
                        initial=pose)
    result = solve_frame(problem, IkConfig(tol=1e-6))
    assert result.iterations == 0
    assert result.residual < 1e-12


def test_offset_target_reaches_locator():
    sk = two_link()
    offset = np.array([0.05, 0.0, 0.0])
    target = np.array([0.35, 0.3, 0.0])
    problem = IkProblem(
        skeleton=sk,
        targets=[IkTarget(joint=2, position=target, offset=offset)],
        initial=rest(sk))
    result = solve_frame(problem, IkConfig(solve_root_translation=False, tol=1e-8))
    pos, rot = forward_kinematics(sk, result.pose, with_rotations=True)
    locator = pos[2] + quat.rotate(rot[2], offset)
    assert np.linalg.norm(locator - target) < 1e-5


def test_solve_sequence_warm_starts():
    sk = make_skeleton()
    seq = generate_motion(sk, duration_s=0.5, fps=30.0, seed=1)
    pos = np.stack([forward_kinematics(sk, seq.pose(f))
                    for f in range(seq.n_frames)])
    frame_targets = [
        end_effector_targets(sk, seq.pose(f), EFFECTORS)
        for f in range(seq.n_frames)
    ]
    solved = solve_sequence(sk, frame_targets, IkConfig())
    residuals = [s.residual for s in solved]
    assert max(residuals) < 1e-3
    # warm starts: later frames converge in very few iterations
    assert np.mean([s.iterations for s in solved[1:]]) < solved[0].iterations


def test_problem_validation():
    sk = two_link()
    with pytest.raises(ValueError):
        IkProblem(skeleton=sk, targets=[], initial=rest(sk))
    with pytest.raises(ValueError):
        IkProblem(skeleton=sk,
                  targets=[IkTarget(joint=2, position=np.zeros(3), weight=0.0)],
                  initial=rest(sk))


# --- smoothing ---------------------------------------------------------------

def test_smoother_recurrence_hand_computed():
    sm = MomentumSmoother(beta=0.5)
    assert sm.step(np.array([0.0])) == 0.0
    # v = 0.5*0 + 0.5*(1 - 0) = 0.5; s = 0.5
    assert sm.step(np.array([1.0])) == 0.5
    # v = 0.5*0.5 + 0.5*(1 - 0.5) = 0.5; s = 1.0
    assert sm.step(np.array([1.0])) == 1.0


def test_smooth_stream_matches_stepping():
    rng = np.random.Generator(np.random.PCG64(2))
    x = rng.normal(size=(20, 4, 3))
    out = smooth_stream(x, beta=0.8)
    sm = MomentumSmoother(beta=0.8)
    manual = np.stack([sm.step(f) for f in x])
    np.testing.assert_array_equal(out, manual)
    assert out.shape == x.shape


def test_smoother_beta_validated():
    with pytest.raises(ValueError):
        MomentumSmoother(beta=1.0)
    with pytest.raises(ValueError):
        MomentumSmoother(beta=-0.1)


def test_smoothing_reduces_jitter():
    rng = np.random.Generator(np.random.PCG64(5))
    t = np.arange(120) / 30.0
    clean = np.stack([np.sin(t), np.cos(t), 0.2 * t], axis=-1)
    noisy = clean + rng.normal(scale=0.01, size=clean.shape)
    raw = acceleration_metric(noisy, fps=30.0)
    smoothed = acceleration_metric(smooth_stream(noisy, beta=0.8), fps=30.0)
    assert raw > 0.0
    assert smoothed < raw


# --- acceleration metric -----------------------------------------------------

def test_constant_velocity_has_zero_metric():
    pos = np.outer(np.arange(10), np.array([0.1, 0.0, 0.05]))
    assert acceleration_metric(pos, fps=30.0) == 0.0


def test_one_centimeter_snap_at_thirty_fps_sits_on_the_threshold():
    # second difference of 1 cm at 30 fps is exactly 9 m/s^2; the metric
    # counts only strict exceedances
    pos = np.array([[0.0, 0, 0], [0.0, 0, 0], [0.01, 0, 0]])
    assert acceleration_metric(pos, fps=30.0) == 0.0
    pos[2, 0] = 0.0101
    assert acceleration_metric(pos, fps=30.0) == 1.0


def test_acceleration_metric_needs_three_frames():
    with pytest.raises(TooShort):
        acceleration_metric(np.zeros((2, 3)), fps=30.0)
