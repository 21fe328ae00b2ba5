"""Skeleton profile: per-corpus mapping from joint names to landmarks,
visibility groups and primitive dimensions.

BVH joint naming varies between corpora, so everything the simulator and the
encoders need to know about a skeleton beyond its hierarchy lives here.
Group naming convention: ``head``, ``torso`` and ``{left,right}_{shoulder,
elbow,hand,hip,knee,foot}``; ``*_hand`` groups use the fractional-primitive
visibility rule, ``*_foot`` groups the any-joint rule.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ProfileMismatch


@dataclass
class PrimitiveSpec:
    """Declarative primitive attached to bones of the skeleton.

    Capsules span the runtime positions of ``joints[0]`` -> ``joints[1]``.
    Boxes are centered on the mean of ``joints`` and oriented by the global
    rotation of ``orient_joint``.
    """

    kind: str  # "capsule" | "box"
    joints: list
    group: str
    radius: float = 0.0
    half_extents: tuple = ()
    orient_joint: str = ""

    def __post_init__(self):
        if self.kind not in ("capsule", "box"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if self.kind == "capsule":
            if len(self.joints) != 2 or self.radius <= 0:
                raise ValueError("capsule needs two joints and a positive radius")
        else:
            if len(self.half_extents) != 3 or min(self.half_extents) <= 0:
                raise ValueError("box needs positive half extents")


@dataclass
class SkeletonProfile:
    head: str
    left_wrist: str
    right_wrist: str
    body_joints: list
    left_fingers: list = field(default_factory=list)
    right_fingers: list = field(default_factory=list)
    groups: dict = field(default_factory=dict)  # group name -> joint names, ordered
    primitives: list = field(default_factory=list)  # PrimitiveSpec
    fingertips: list = field(default_factory=list)  # (joint name, local offset 3-vector)

    @property
    def group_names(self):
        return list(self.groups.keys())

    @property
    def fingers(self):
        return list(self.left_fingers) + list(self.right_fingers)

    def resolve(self, skeleton):
        """Validate against a skeleton and return an index-level view."""
        return ResolvedProfile(self, skeleton)

    def to_dict(self):
        return {
            "head": self.head,
            "left_wrist": self.left_wrist,
            "right_wrist": self.right_wrist,
            "body_joints": list(self.body_joints),
            "left_fingers": list(self.left_fingers),
            "right_fingers": list(self.right_fingers),
            "groups": {g: list(js) for g, js in self.groups.items()},
            "primitives": [
                {
                    "kind": p.kind,
                    "joints": list(p.joints),
                    "group": p.group,
                    "radius": p.radius,
                    "half_extents": list(p.half_extents),
                    "orient_joint": p.orient_joint,
                }
                for p in self.primitives
            ],
            "fingertips": [[j, list(o)] for j, o in self.fingertips],
        }

    @classmethod
    def from_dict(cls, d):
        prims = [
            PrimitiveSpec(
                kind=p["kind"],
                joints=list(p["joints"]),
                group=p["group"],
                radius=p.get("radius", 0.0),
                half_extents=tuple(p.get("half_extents", ())),
                orient_joint=p.get("orient_joint", ""),
            )
            for p in d.get("primitives", [])
        ]
        return cls(
            head=d["head"],
            left_wrist=d["left_wrist"],
            right_wrist=d["right_wrist"],
            body_joints=list(d["body_joints"]),
            left_fingers=list(d.get("left_fingers", [])),
            right_fingers=list(d.get("right_fingers", [])),
            groups={g: list(js) for g, js in d.get("groups", {}).items()},
            primitives=prims,
            fingertips=[(j, tuple(o)) for j, o in d.get("fingertips", [])],
        )

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


class ResolvedProfile:
    """Profile with joint names resolved to indices of a concrete skeleton."""

    def __init__(self, profile, skeleton):
        self.profile = profile
        self.skeleton = skeleton

        def idx(name):
            try:
                return skeleton.index(name)
            except ValueError:
                raise ProfileMismatch(f"profile joint {name!r} not in skeleton") from None

        self.head = idx(profile.head)
        self.left_wrist = idx(profile.left_wrist)
        self.right_wrist = idx(profile.right_wrist)
        self.body_joints = np.array([idx(n) for n in profile.body_joints], dtype=np.int64)
        self.left_fingers = np.array([idx(n) for n in profile.left_fingers], dtype=np.int64)
        self.right_fingers = np.array([idx(n) for n in profile.right_fingers], dtype=np.int64)
        self.group_names = profile.group_names
        self.group_joints = [
            np.array([idx(n) for n in js], dtype=np.int64) for js in profile.groups.values()
        ]
        self.fingertips = [(idx(j), np.asarray(o, dtype=np.float64)) for j, o in profile.fingertips]
        # joint -> group index; finger joints inherit their hand's group
        self.joint_group = np.full(skeleton.n_joints, -1, dtype=np.int64)
        for gi, joints in enumerate(self.group_joints):
            self.joint_group[joints] = gi
        for side, fingers in (("left", self.left_fingers), ("right", self.right_fingers)):
            gname = f"{side}_hand"
            if gname in self.group_names and len(fingers):
                self.joint_group[fingers] = self.group_names.index(gname)

    @property
    def n_groups(self):
        return len(self.group_names)

    def group_index(self, name):
        return self.group_names.index(name)

    def wrist_index(self, side):
        return self.left_wrist if side == "left" else self.right_wrist

    def fingers_of(self, side):
        return self.left_fingers if side == "left" else self.right_fingers


def anthropometric_capsules(skeleton, bones, scale=0.18, r_min=0.03, r_max=0.07):
    """Capsule specs with radius proportional to rest bone length, clamped.

    ``bones`` is a list of (parent_name, child_name, group) triples.
    """
    specs = []
    for parent, child, group in bones:
        length = np.linalg.norm(skeleton.offsets[skeleton.index(child)])
        radius = float(np.clip(scale * length, r_min, r_max))
        specs.append(PrimitiveSpec(kind="capsule", joints=[parent, child],
                                   group=group, radius=radius))
    return specs
