"""Procedural humanoid corpus for tests and demos.

A small parametric skeleton (legs, torso, arms and optional articulated
hands), a matching profile with capsule/box primitives, and a seeded motion
generator producing smooth sinusoidal motion in which the arms periodically
swing behind the torso, so the simulated head camera produces a realistic mix
of visible, occluded and out-of-view frames.
"""

import numpy as np

from . import quat
from .profiles import PrimitiveSpec, SkeletonProfile
from .skeleton import MotionSequence, Skeleton


def make_skeleton(fingers_per_hand=2, joints_per_finger=2, palm=False):
    """Humanoid test skeleton, meters, Y-up, +Z forward, +X to the left."""
    names, parents, offsets = [], [], []

    def add(name, parent, offset):
        names.append(name)
        parents.append(-1 if parent is None else names.index(parent))
        offsets.append(offset)

    add("Hips", None, (0.0, 0.0, 0.0))
    add("Spine", "Hips", (0.0, 0.12, 0.0))
    add("Chest", "Spine", (0.0, 0.15, 0.0))
    add("Neck", "Chest", (0.0, 0.12, 0.0))
    # head center sits slightly forward of the neck so the nose camera clears
    # the chest when looking down
    add("Head", "Neck", (0.0, 0.10, 0.02))
    for side, sx in (("Left", 1.0), ("Right", -1.0)):
        add(f"{side}Shoulder", "Chest", (sx * 0.18, 0.05, 0.0))
        add(f"{side}Elbow", f"{side}Shoulder", (sx * 0.28, 0.0, 0.0))
        add(f"{side}Wrist", f"{side}Elbow", (sx * 0.25, 0.0, 0.0))
        hand_root = f"{side}Wrist"
        if palm:
            add(f"{side}Palm", hand_root, (sx * 0.05, 0.0, 0.0))
            hand_root = f"{side}Palm"
        for fi in range(fingers_per_hand):
            # hand spans 9 cm laterally regardless of finger count, so the
            # fingers clear the forearm's shadow cone from the head camera
            if fingers_per_hand > 1:
                z = (fi / (fingers_per_hand - 1) - 0.5) * 0.09
            else:
                z = 0.0
            add(f"{side}F{fi}_0", hand_root, (sx * 0.06, 0.0, z))
            for seg in range(1, joints_per_finger):
                add(f"{side}F{fi}_{seg}", f"{side}F{fi}_{seg - 1}",
                    (sx * 0.035, 0.0, 0.0))
    for side, sx in (("Left", 1.0), ("Right", -1.0)):
        add(f"{side}Hip", "Hips", (sx * 0.09, -0.05, 0.0))
        add(f"{side}Knee", f"{side}Hip", (0.0, -0.40, 0.0))
        add(f"{side}Ankle", f"{side}Knee", (0.0, -0.40, 0.0))
        add(f"{side}Toe", f"{side}Ankle", (0.0, -0.04, 0.12))
    return Skeleton(names=tuple(names), parents=np.array(parents),
                    offsets=np.array(offsets, dtype=np.float64))


def make_profile(skeleton, fingers_per_hand=2, joints_per_finger=2, palm=False):
    """Profile (groups, primitives, fingertips) matching make_skeleton."""
    body = ["Hips", "Spine", "Chest", "Neck", "Head"]
    for side in ("Left", "Right"):
        body += [f"{side}Shoulder", f"{side}Elbow", f"{side}Wrist",
                 f"{side}Hip", f"{side}Knee", f"{side}Ankle", f"{side}Toe"]

    fingers = {"Left": [], "Right": []}
    tips = []
    for side, sx in (("Left", 1.0), ("Right", -1.0)):
        if palm:
            fingers[side].append(f"{side}Palm")
        for fi in range(fingers_per_hand):
            for seg in range(joints_per_finger):
                fingers[side].append(f"{side}F{fi}_{seg}")
            tips.append((f"{side}F{fi}_{joints_per_finger - 1}",
                         (sx * 0.03, 0.0, 0.0)))

    groups = {
        "head": ["Head", "Neck"],
        "torso": ["Hips", "Spine", "Chest"],
    }
    for side in ("left", "right"):
        s = side.capitalize()
        groups[f"{side}_shoulder"] = [f"{s}Shoulder"]
        groups[f"{side}_elbow"] = [f"{s}Elbow"]
        groups[f"{side}_hand"] = [f"{s}Wrist"] + ([f"{s}Palm"] if palm else [])
        groups[f"{side}_hip"] = [f"{s}Hip"]
        groups[f"{side}_knee"] = [f"{s}Knee"]
        groups[f"{side}_foot"] = [f"{s}Ankle", f"{s}Toe"]

    prims = [
        PrimitiveSpec(kind="box", joints=["Hips", "Spine", "Chest"], group="torso",
                      half_extents=(0.15, 0.24, 0.05), orient_joint="Hips"),
        PrimitiveSpec(kind="box", joints=["Head", "Neck"], group="head",
                      half_extents=(0.09, 0.13, 0.11), orient_joint="Head"),
    ]
    for side in ("Left", "Right"):
        g = side.lower()
        prims += [
            PrimitiveSpec("capsule", [f"{side}Shoulder", f"{side}Elbow"],
                          f"{g}_shoulder", radius=0.045),
            PrimitiveSpec("capsule", [f"{side}Elbow", f"{side}Wrist"],
                          f"{g}_elbow", radius=0.032),
            PrimitiveSpec("capsule", [f"{side}Hip", f"{side}Knee"],
                          f"{g}_hip", radius=0.06),
            PrimitiveSpec("capsule", [f"{side}Knee", f"{side}Ankle"],
                          f"{g}_knee", radius=0.055),
            PrimitiveSpec("capsule", [f"{side}Ankle", f"{side}Toe"],
                          f"{g}_foot", radius=0.04),
        ]
        hand_root = f"{side}Palm" if palm else f"{side}Wrist"
        for fi in range(fingers_per_hand):
            prims.append(PrimitiveSpec("capsule", [hand_root, f"{side}F{fi}_0"],
                                       f"{g}_hand", radius=0.012))
            for seg in range(1, joints_per_finger):
                prims.append(PrimitiveSpec(
                    "capsule", [f"{side}F{fi}_{seg - 1}", f"{side}F{fi}_{seg}"],
                    f"{g}_hand", radius=0.012))

    return SkeletonProfile(
        head="Head", left_wrist="LeftWrist", right_wrist="RightWrist",
        body_joints=body, left_fingers=fingers["Left"], right_fingers=fingers["Right"],
        groups=groups, primitives=prims, fingertips=tips)


_X = np.array([1.0, 0.0, 0.0])
_Y = np.array([0.0, 1.0, 0.0])
_Z = np.array([0.0, 0.0, 1.0])


def _rotvec(axis, angles):
    """Per-frame quaternions rotating by angles (radians) about a fixed axis."""
    return quat.exp_map(np.asarray(angles)[:, None] * axis)


def generate_motion(skeleton, duration_s=60.0, fps=30.0, seed=0,
                    name="synthetic", subject="s0"):
    """Seeded sinusoidal full-body motion.

    The arms swing through a wide sagittal arc so the hands spend part of each
    cycle behind the torso (occluded or out of the camera view); legs march in
    place and the fingers curl slowly.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    f = int(round(duration_s * fps))
    t = np.arange(f) / fps
    j = skeleton.n_joints
    rot = np.tile(quat.IDENTITY, (f, j, 1))

    def freq(lo, hi):
        return 2.0 * np.pi * rng.uniform(lo, hi)

    def phase():
        return rng.uniform(0.0, 2.0 * np.pi)

    def set_rot(joint, q):
        rot[:, skeleton.index(joint)] = q

    deg = np.deg2rad
    set_rot("Spine", _rotvec(_Z, deg(4) * np.sin(freq(0.1, 0.2) * t + phase())))
    set_rot("Chest", _rotvec(_X, deg(3) * np.sin(freq(0.1, 0.2) * t + phase())))
    set_rot("Neck", _rotvec(_Y, deg(15) * np.sin(freq(0.08, 0.15) * t + phase())))
    set_rot("Head", _rotvec(_X, deg(8) * np.sin(freq(0.1, 0.2) * t + phase())))

    for side, sign in (("Left", 1.0), ("Right", -1.0)):
        # drop the arm from the lateral rest direction toward hanging down,
        # then swing it sagittally about +X; negative swing carries the hand
        # forward of the body, positive swing carries it behind the back
        drop = _rotvec(_Z, np.full(f, sign * -deg(65)))
        swing = -deg(20) - deg(50) * np.sin(freq(0.15, 0.35) * t + phase())
        set_rot(f"{side}Shoulder", quat.mul(_rotvec(_X, swing), drop))
        # elbow flexion brings the forearm forward of the upper arm
        bend = deg(30) + deg(20) * np.sin(freq(0.15, 0.35) * t + phase())
        set_rot(f"{side}Elbow", _rotvec(_X, -bend))
        lift = deg(8) * np.sin(freq(0.15, 0.3) * t + phase())
        set_rot(f"{side}Hip", _rotvec(_X, lift))
        flex = deg(4) * (1.0 + np.sin(freq(0.15, 0.3) * t + phase()))
        set_rot(f"{side}Knee", _rotvec(_X, flex))
        curl = deg(12) * (1.0 + np.sin(freq(0.1, 0.3) * t + phase()))
        for nm in skeleton.names:
            if nm.startswith(f"{side}F"):
                set_rot(nm, _rotvec(_Z, sign * curl))

    root = np.zeros((f, 3))
    root[:, 0] = 0.02 * np.sin(freq(0.05, 0.1) * t + phase())
    root[:, 1] = 0.95 + 0.01 * np.sin(freq(0.1, 0.2) * t + phase())
    root[:, 2] = 0.02 * np.sin(freq(0.05, 0.1) * t + phase())

    return MotionSequence(skeleton=skeleton, root_pos=root, rotations=rot,
                          fps=float(fps), name=name, subject=subject)


def make_corpus(n_sequences=12, duration_s=60.0, fps=30.0, seed=0,
                n_subjects=6, **skeleton_kwargs):
    """List of seeded sequences on a shared skeleton, subjects cycling."""
    skeleton = make_skeleton(**skeleton_kwargs)
    seqs = []
    for i in range(n_sequences):
        seqs.append(generate_motion(
            skeleton, duration_s=duration_s, fps=fps, seed=seed + i,
            name=f"seq{i:02d}", subject=f"s{i % n_subjects}"))
    return seqs
