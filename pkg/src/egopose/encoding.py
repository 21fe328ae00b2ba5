"""Task encoders: turn motion sequences plus visibility records into model
inputs and targets.

Three tasks share the machinery:

* ``inside-out`` — inputs are head-local body positions and wrist-local finger
  positions with the occlusion fill rule applied; targets are the ground-truth
  encodings of the same joints, plus per-group occlusion labels.
* ``three-point`` — inputs are head-local positions and forward/up orientation
  vectors of the head and both wrists (27 values per frame); targets are the
  body joints; no occlusion branch.
* ``finger-synthesis`` — inputs are head-local body positions plus wrist
  forward/up vectors; targets are the wrist-local finger joints and one
  fixed-offset fingertip locator per distal bone.

The occlusion fill rule: an untracked joint repeats its most recent visible
encoded value; a joint never yet visible carries its rest-pose encoding.
"""

from dataclasses import dataclass, field

import numpy as np

from . import quat
from .errors import ProfileMismatch
from .skeleton import build_wrist_frame, fk_sequence, forward_kinematics

TASKS = ("inside-out", "three-point", "finger-synthesis")

FRAME_HEAD = 0
FRAME_LEFT_WRIST = 1
FRAME_RIGHT_WRIST = 2


@dataclass
class TaskSpec:
    task: str
    window: int = 27
    fps: float = 30.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")


@dataclass
class EncodedSequence:
    """Per-frame feature encodings of one sequence, plus the metadata needed
    for loss weighting and decoding."""

    task: str
    inputs: np.ndarray  # (F, D)
    targets: np.ndarray  # (F, n_out, 3)
    labels: np.ndarray | None  # (F, G) float, 1.0 = occluded
    target_visible: np.ndarray  # (F, n_out) bool
    out_names: list
    out_joint: np.ndarray  # (n_out,) skeleton joint index (tips use distal joint)
    out_is_tip: np.ndarray  # (n_out,) bool
    out_is_finger: np.ndarray  # (n_out,) bool
    out_frame: np.ndarray  # (n_out,) FRAME_* code
    edges: np.ndarray  # (E, 2) slots; parent slot -1 = origin of the local frame
    edge_is_finger: np.ndarray  # (E,) bool
    head_positions: np.ndarray  # (F, 3)
    wrist_origins: np.ndarray  # (F, 2, 3) left/right
    wrist_frames: np.ndarray  # (F, 2, 3, 3)
    group_names: list = field(default_factory=list)

    @property
    def n_frames(self):
        return self.inputs.shape[0]

    @property
    def n_out(self):
        return self.targets.shape[1]

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    def flat_targets(self):
        return self.targets.reshape(self.n_frames, -1)

    def layout(self):
        """Encoding metadata that must match between training and inference."""
        return {
            "task": self.task,
            "input_dim": int(self.input_dim),
            "out_names": list(self.out_names),
            "groups": list(self.group_names),
        }


def _wrist_frames(resolved, positions):
    """Per-frame wrist origins and orthonormal frames from the FK result;
    forward axis follows the forearm bone (elbow -> wrist)."""
    f = positions.shape[0]
    origins = np.empty((f, 2, 3))
    frames = np.empty((f, 2, 3, 3))
    for side, wi in enumerate((resolved.left_wrist, resolved.right_wrist)):
        parent = resolved.skeleton.parents[wi]
        origins[:, side] = positions[:, wi]
        for t in range(f):
            frames[t, side] = build_wrist_frame(positions[t, wi] - positions[t, parent])
    return origins, frames


def _rest_encoding(resolved):
    """Rest-pose encodings used when a joint has never been visible."""
    skeleton = resolved.skeleton
    rest = forward_kinematics(skeleton, skeleton.rest_pose())
    head_local = rest - rest[resolved.head]
    origins, frames = _wrist_frames(resolved, rest[None])
    return rest, head_local, origins[0], frames[0]


def apply_fill(encoded, visible, rest_values):
    """Hold-last-visible fill in the encoding frame.

    ``encoded`` (F, n, 3) ground-truth encodings, ``visible`` (F, n) bool,
    ``rest_values`` (n, 3) used before the first visible frame.
    """
    out = np.empty_like(encoded)
    last = np.array(rest_values, dtype=np.float64, copy=True)
    for t in range(encoded.shape[0]):
        vis = visible[t]
        last[vis] = encoded[t, vis]
        out[t] = last
    return out


def _orientation_vectors(rotation):
    fwd = quat.rotate(rotation, np.array([0.0, 0.0, 1.0]))
    up = quat.rotate(rotation, np.array([0.0, 1.0, 0.0]))
    return fwd, up


def _build_output_layout(resolved, include_body, include_fingers, include_tips):
    skeleton = resolved.skeleton
    names, joints, is_tip, is_finger, frames = [], [], [], [], []
    if include_body:
        for j in resolved.body_joints:
            names.append(skeleton.names[j])
            joints.append(j)
            is_tip.append(False)
            is_finger.append(False)
            frames.append(FRAME_HEAD)
    if include_fingers:
        for side_code, fingers in ((FRAME_LEFT_WRIST, resolved.left_fingers),
                                   (FRAME_RIGHT_WRIST, resolved.right_fingers)):
            for j in fingers:
                names.append(skeleton.names[j])
                joints.append(j)
                is_tip.append(False)
                is_finger.append(True)
                frames.append(side_code)
            if include_tips:
                for j, _off in resolved.fingertips:
                    if j in fingers:
                        names.append(skeleton.names[j] + "__tip")
                        joints.append(j)
                        is_tip.append(True)
                        is_finger.append(True)
                        frames.append(side_code)
    return (names, np.array(joints, dtype=np.int64), np.array(is_tip, dtype=bool),
            np.array(is_finger, dtype=bool), np.array(frames, dtype=np.int8))


def _build_edges(resolved, out_joint, out_is_tip, out_frame):
    """Kinematic-tree edges between output slots that share an encoding frame.

    A finger joint whose parent is the wrist gets parent slot -1: the wrist is
    the origin of its own frame."""
    skeleton = resolved.skeleton
    slot_of = {}
    for s, (j, tip) in enumerate(zip(out_joint, out_is_tip)):
        if not tip:
            slot_of[int(j)] = s
    edges, is_finger = [], []
    wrists = {resolved.left_wrist, resolved.right_wrist}
    for s, (j, tip, fr) in enumerate(zip(out_joint, out_is_tip, out_frame)):
        if tip:
            edges.append((slot_of[int(j)], s))
            is_finger.append(True)
            continue
        p = int(skeleton.parents[j])
        if p < 0:
            continue
        if fr == FRAME_HEAD:
            if p in slot_of and out_frame[slot_of[p]] == FRAME_HEAD:
                edges.append((slot_of[p], s))
                is_finger.append(False)
        else:
            if p in wrists:
                edges.append((-1, s))
                is_finger.append(True)
            elif p in slot_of and out_frame[slot_of[p]] == fr:
                edges.append((slot_of[p], s))
                is_finger.append(True)
    if not edges:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=bool)
    return np.array(edges, dtype=np.int64), np.array(is_finger, dtype=bool)


def _encode_positions(resolved, positions, rotations, out_joint, out_is_tip, out_frame,
                      origins, frames):
    """Ground-truth encodings of the output slots for every frame."""
    f = positions.shape[0]
    n = len(out_joint)
    enc = np.empty((f, n, 3))
    tip_offset = dict()
    for j, off in resolved.fingertips:
        tip_offset[int(j)] = np.asarray(off, dtype=np.float64)
    head = positions[:, resolved.head]
    for s in range(n):
        j = int(out_joint[s])
        if out_is_tip[s]:
            world = positions[:, j] + quat.rotate(rotations[:, j], tip_offset[j])
        else:
            world = positions[:, j]
        if out_frame[s] == FRAME_HEAD:
            enc[:, s] = world - head
        else:
            side = 0 if out_frame[s] == FRAME_LEFT_WRIST else 1
            rel = world - origins[:, side]
            enc[:, s] = np.einsum("fi,fij->fj", rel, frames[:, side])
    return enc


def encode_task(seq, records, resolved, task):
    """Encode a sequence for one task. ``records`` may be None for tasks
    without an occlusion branch."""
    if isinstance(task, str):
        task = TaskSpec(task=task)
    positions, rotations = fk_sequence(seq, with_rotations=True)
    origins, frames = _wrist_frames(resolved, positions)
    rest, rest_head_local, rest_origins, rest_frames = _rest_encoding(resolved)
    head_positions = positions[:, resolved.head]

    if task.task == "inside-out":
        if records is None:
            raise ValueError("inside-out encoding needs occlusion records")
        layout = _build_output_layout(resolved, True, True, include_tips=False)
        names, out_joint, out_is_tip, out_is_finger, out_frame = layout
        targets = _encode_positions(resolved, positions, rotations, out_joint,
                                    out_is_tip, out_frame, origins, frames)
        visible = records.joint_visible[:, out_joint]
        rest_enc = _encode_positions(resolved, rest[None], np.tile(
            np.array([1.0, 0, 0, 0]), (1, resolved.skeleton.n_joints, 1)),
            out_joint, out_is_tip, out_frame, rest_origins[None], rest_frames[None])[0]
        inputs = apply_fill(targets, visible, rest_enc).reshape(seq.n_frames, -1)
        labels = (records.statuses != 0).astype(np.float64)
        group_names = list(records.groups)
    elif task.task == "three-point":
        layout = _build_output_layout(resolved, True, False, include_tips=False)
        names, out_joint, out_is_tip, out_is_finger, out_frame = layout
        targets = _encode_positions(resolved, positions, rotations, out_joint,
                                    out_is_tip, out_frame, origins, frames)
        feats = []
        for j in (resolved.head, resolved.left_wrist, resolved.right_wrist):
            fwd, up = _orientation_vectors(rotations[:, j])
            feats.extend([positions[:, j] - head_positions, fwd, up])
        inputs = np.concatenate(feats, axis=-1)
        visible = np.ones((seq.n_frames, len(out_joint)), dtype=bool)
        labels = None
        group_names = []
    elif task.task == "finger-synthesis":
        if not len(resolved.left_fingers) and not len(resolved.right_fingers):
            raise ProfileMismatch("profile declares no finger joints")
        layout = _build_output_layout(resolved, False, True, include_tips=True)
        names, out_joint, out_is_tip, out_is_finger, out_frame = layout
        targets = _encode_positions(resolved, positions, rotations, out_joint,
                                    out_is_tip, out_frame, origins, frames)
        feats = [(positions[:, j] - head_positions) for j in resolved.body_joints]
        for j in (resolved.left_wrist, resolved.right_wrist):
            fwd, up = _orientation_vectors(rotations[:, j])
            feats.extend([fwd, up])
        inputs = np.concatenate(feats, axis=-1)
        visible = np.ones((seq.n_frames, len(out_joint)), dtype=bool)
        labels = None
        group_names = []
    else:  # pragma: no cover - TaskSpec validates
        raise ValueError(task.task)

    edges, edge_is_finger = _build_edges(resolved, out_joint, out_is_tip, out_frame)
    return EncodedSequence(
        task=task.task,
        inputs=inputs,
        targets=targets,
        labels=labels,
        target_visible=visible,
        out_names=names,
        out_joint=out_joint,
        out_is_tip=out_is_tip,
        out_is_finger=out_is_finger,
        out_frame=out_frame,
        edges=edges,
        edge_is_finger=edge_is_finger,
        head_positions=head_positions,
        wrist_origins=origins,
        wrist_frames=frames,
        group_names=group_names,
    )


def sliding_windows(array, window):
    """Zero-copy (N, window, ...) view of consecutive frame windows."""
    from numpy.lib.stride_tricks import sliding_window_view
    view = sliding_window_view(array, window, axis=0)
    return np.moveaxis(view, -1, 1)
