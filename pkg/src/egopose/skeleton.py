"""Skeletal data model, forward kinematics, resampling and local-frame encodings.

All lengths are in meters, right-handed Y-up. Reported metrics elsewhere are
converted to centimeters.
"""

from dataclasses import dataclass, field

import numpy as np

from . import quat
from .errors import NonOrthonormalFrame, UpsampleUnsupported

WORLD_UP = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class Skeleton:
    """Joint hierarchy with rest offsets.

    Joints are topologically sorted: parent index < child index, root has
    parent -1. Offsets are rest-pose translations from the parent, meters.
    """

    names: tuple
    parents: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=np.int64)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)
        j = len(self.names)
        if parents.shape != (j,) or offsets.shape != (j, 3):
            raise ValueError("inconsistent skeleton arrays")
        roots = np.flatnonzero(parents < 0)
        if len(roots) != 1 or roots[0] != 0:
            raise ValueError("skeleton must have exactly one root at index 0")
        if np.any(parents[1:] >= np.arange(1, j)):
            raise ValueError("parents must precede children (topological order)")
        lengths = np.linalg.norm(offsets[1:], axis=-1)
        if np.any(lengths <= 0):
            raise ValueError("non-root rest offsets must have positive length")
        parents.setflags(write=False)
        offsets.setflags(write=False)

    @property
    def n_joints(self):
        return len(self.names)

    def index(self, name):
        return self.names.index(name)

    def children(self):
        """Children map ch(i), the exact inverse of the parent relation."""
        ch = [[] for _ in range(self.n_joints)]
        for i, p in enumerate(self.parents):
            if p >= 0:
                ch[p].append(i)
        return ch

    def bone_lengths(self):
        return np.linalg.norm(self.offsets, axis=-1)

    def rest_pose(self):
        rotations = np.tile(quat.IDENTITY, (self.n_joints, 1))
        return Pose(root_pos=np.zeros(3), rotations=rotations)


@dataclass(frozen=True)
class Pose:
    """Root translation plus per-joint local unit quaternions."""

    root_pos: np.ndarray
    rotations: np.ndarray

    def __post_init__(self):
        root = np.asarray(self.root_pos, dtype=np.float64)
        rots = np.asarray(self.rotations, dtype=np.float64)
        object.__setattr__(self, "root_pos", root)
        object.__setattr__(self, "rotations", rots)
        norms = np.linalg.norm(rots, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("pose quaternions must be unit length")


@dataclass
class MotionSequence:
    """A skeleton with stacked per-frame poses at a fixed frame rate."""

    skeleton: Skeleton
    root_pos: np.ndarray  # (F, 3)
    rotations: np.ndarray  # (F, J, 4)
    fps: float
    name: str = ""
    subject: str = ""

    def __post_init__(self):
        self.root_pos = np.asarray(self.root_pos, dtype=np.float64)
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.rotations.shape[1] != self.skeleton.n_joints:
            raise ValueError("frame joint count does not match skeleton")

    @property
    def n_frames(self):
        return self.root_pos.shape[0]

    def pose(self, i):
        return Pose(root_pos=self.root_pos[i], rotations=self.rotations[i])


def forward_kinematics(skeleton, pose, with_rotations=False):
    """World joint positions (J, 3) for one pose; optionally global rotations too."""
    parents = skeleton.parents
    positions = np.empty((skeleton.n_joints, 3))
    globals_ = np.empty((skeleton.n_joints, 4))
    positions[0] = pose.root_pos
    globals_[0] = pose.rotations[0]
    for i in range(1, skeleton.n_joints):
        p = parents[i]
        positions[i] = positions[p] + quat.rotate(globals_[p], skeleton.offsets[i])
        globals_[i] = quat.normalize(quat.mul(globals_[p], pose.rotations[i]))
    if with_rotations:
        return positions, globals_
    return positions


def fk_sequence(seq, with_rotations=False):
    """Batched FK over all frames: positions (F, J, 3) and optionally rotations."""
    parents = seq.skeleton.parents
    f, j = seq.n_frames, seq.skeleton.n_joints
    positions = np.empty((f, j, 3))
    globals_ = np.empty((f, j, 4))
    positions[:, 0] = seq.root_pos
    globals_[:, 0] = seq.rotations[:, 0]
    for i in range(1, j):
        p = parents[i]
        positions[:, i] = positions[:, p] + quat.rotate(globals_[:, p], seq.skeleton.offsets[i])
        globals_[:, i] = quat.normalize(quat.mul(globals_[:, p], seq.rotations[:, i]))
    if with_rotations:
        return positions, globals_
    return positions


def resample(seq, target_fps):
    """Decimate a sequence to a lower frame rate.

    Integer-stride decimation when the source rate is an integer multiple of
    the target; nearest-frame sampling on a uniform grid otherwise. Duration is
    preserved within one source-frame period.
    """
    if target_fps <= 0:
        raise ValueError("target_fps must be positive")
    if target_fps > seq.fps:
        raise UpsampleUnsupported(f"cannot resample {seq.fps} fps up to {target_fps} fps")
    ratio = seq.fps / target_fps
    if abs(ratio - round(ratio)) < 1e-9:
        idx = np.arange(0, seq.n_frames, int(round(ratio)))
    else:
        n = int(np.floor((seq.n_frames - 1) * target_fps / seq.fps)) + 1
        idx = np.rint(np.arange(n) * seq.fps / target_fps).astype(np.int64)
        idx = np.minimum(idx, seq.n_frames - 1)
    return MotionSequence(
        skeleton=seq.skeleton,
        root_pos=seq.root_pos[idx].copy(),
        rotations=seq.rotations[idx].copy(),
        fps=float(target_fps),
        name=seq.name,
        subject=seq.subject,
    )


def to_head_local(positions, head_index):
    """Offset every joint by the head position. Translation only."""
    positions = np.asarray(positions, dtype=np.float64)
    return positions - positions[..., head_index:head_index + 1, :]


def check_orthonormal(frame, tol=1e-6):
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (3, 3) or np.max(np.abs(frame.T @ frame - np.eye(3))) > tol:
        raise NonOrthonormalFrame("wrist frame must be orthonormal")
    return frame


def to_wrist_local(positions, wrist_origin, wrist_frame):
    """Express positions in an orthonormal wrist frame: fᵀ · (p − origin)."""
    frame = check_orthonormal(wrist_frame)
    positions = np.asarray(positions, dtype=np.float64)
    return (positions - np.asarray(wrist_origin)) @ frame


def build_wrist_frame(forearm_dir, world_up=WORLD_UP):
    """Orthonormal wrist frame from the forearm bone direction.

    Columns are (forward, up, side): forward along the bone, up from
    Gram-Schmidt of world-up against the bone axis, side completes the
    right-handed triad. Any fixed convention works as long as encoding and
    decoding share it.
    """
    fwd = np.asarray(forearm_dir, dtype=np.float64)
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        fwd = np.array([0.0, 1.0, 0.0])
    else:
        fwd = fwd / n
    up = world_up - np.dot(world_up, fwd) * fwd
    n = np.linalg.norm(up)
    if n < 1e-8:
        # bone parallel to world-up: pick a stable alternative reference
        alt = np.array([0.0, 0.0, 1.0])
        up = alt - np.dot(alt, fwd) * fwd
        n = np.linalg.norm(up)
    up = up / n
    side = np.cross(fwd, up)
    return np.stack([fwd, up, side], axis=1)
