"""BVH motion file ingestion and export.

Parses the de-facto HIERARCHY/MOTION grammar. Euler channels are converted to
quaternions at parse time using each joint's declared rotation order
(intrinsic composition). Offsets are scaled to meters with a configurable
unit scale, default 0.01 for centimeter-authored files.
"""

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ChannelMismatch, MalformedHierarchy, MissingSection, NonFiniteValue
from .skeleton import MotionSequence, Skeleton

_ROTATION_CHANNELS = {"Xrotation": "X", "Yrotation": "Y", "Zrotation": "Z"}
_POSITION_CHANNELS = {"Xposition": 0, "Yposition": 1, "Zposition": 2}


class _Tokens:
    def __init__(self, text):
        self.toks = text.split()
        self.pos = 0

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise MalformedHierarchy("unexpected end of hierarchy section")
        self.pos += 1
        return tok

    def expect(self, want):
        tok = self.next()
        if tok != want:
            raise MalformedHierarchy(f"expected {want!r}, found {tok!r}")
        return tok


def _parse_joint(tokens, parent, joints, unit_scale):
    name = tokens.next()
    index = len(joints)
    joints.append({"name": name, "parent": parent, "offset": None, "channels": []})
    tokens.expect("{")
    while True:
        tok = tokens.next()
        if tok == "OFFSET":
            off = np.array([float(tokens.next()) for _ in range(3)]) * unit_scale
            joints[index]["offset"] = off
        elif tok == "CHANNELS":
            n = int(tokens.next())
            joints[index]["channels"] = [tokens.next() for _ in range(n)]
        elif tok == "JOINT":
            _parse_joint(tokens, index, joints, unit_scale)
        elif tok == "End":
            tokens.expect("Site")
            tokens.expect("{")
            tokens.expect("OFFSET")
            for _ in range(3):
                float(tokens.next())  # end sites carry no animation; offsets dropped
            tokens.expect("}")
        elif tok == "}":
            return
        else:
            raise MalformedHierarchy(f"unexpected token {tok!r} in joint {name}")


def parse_bvh(text, unit_scale=0.01, name="", subject=""):
    """Parse a BVH document into a MotionSequence."""
    lines = text.splitlines()
    motion_line = None
    for i, line in enumerate(lines):
        if line.strip() == "MOTION":
            motion_line = i
            break
    if motion_line is None:
        raise MissingSection("no MOTION section")
    hierarchy_text = "\n".join(lines[:motion_line])
    tokens = _Tokens(hierarchy_text)
    if tokens.peek() != "HIERARCHY":
        raise MissingSection("no HIERARCHY section")
    tokens.next()
    tokens.expect("ROOT")
    joints = []
    _parse_joint(tokens, -1, joints, unit_scale)
    if tokens.peek() is not None:
        raise MalformedHierarchy(f"trailing token {tokens.peek()!r} after hierarchy")

    skeleton = Skeleton(
        names=[j["name"] for j in joints],
        parents=np.array([j["parent"] for j in joints], dtype=np.int64),
        offsets=np.stack([j["offset"] for j in joints]),
    )

    # MOTION section: frame count, frame time, then one line of values per frame
    body = [ln.strip() for ln in lines[motion_line + 1:] if ln.strip()]
    if len(body) < 2 or not body[0].startswith("Frames:") or not body[1].startswith("Frame Time:"):
        raise MissingSection("MOTION section must declare Frames and Frame Time")
    n_frames = int(body[0].split(":")[1])
    frame_time = float(body[1].split(":")[1])
    if frame_time <= 0:
        raise NonFiniteValue("frame time must be positive")
    frame_lines = body[2:]
    if len(frame_lines) != n_frames:
        raise ChannelMismatch(f"declared {n_frames} frames, found {len(frame_lines)} lines")

    n_channels = sum(len(j["channels"]) for j in joints)
    values = np.empty((n_frames, n_channels))
    for f, line in enumerate(frame_lines):
        parts = line.split()
        if len(parts) != n_channels:
            raise ChannelMismatch(
                f"frame {f}: {len(parts)} values for {n_channels} declared channels")
        values[f] = [float(p) for p in parts]
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue("non-finite value in MOTION data")

    root_pos = np.zeros((n_frames, 3))
    rotations = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n_frames, len(joints), 1))
    col = 0
    for ji, joint in enumerate(joints):
        order = ""
        angle_cols = []
        for ch in joint["channels"]:
            if ch in _ROTATION_CHANNELS:
                order += _ROTATION_CHANNELS[ch]
                angle_cols.append(col)
            elif ch in _POSITION_CHANNELS:
                if ji == 0:
                    root_pos[:, _POSITION_CHANNELS[ch]] = values[:, col] * unit_scale
                # non-root translation channels are read but not modeled
            else:
                raise MalformedHierarchy(f"unknown channel {ch!r}")
            col += 1
        if order:
            angles = values[:, angle_cols]
            q = Rotation.from_euler(order, angles, degrees=True).as_quat()
            rotations[:, ji] = q[:, [3, 0, 1, 2]]  # scipy xyzw -> wxyz

    return MotionSequence(
        skeleton=skeleton,
        root_pos=root_pos,
        rotations=rotations,
        fps=1.0 / frame_time,
        name=name,
        subject=subject,
    )


def write_bvh(seq, unit_scale=0.01, rotation_order="ZXY"):
    """Serialize a MotionSequence back to BVH text (inverse of the parser's
    conventions; end sites are written with zero offsets)."""
    skel = seq.skeleton
    children = skel.children()
    out = ["HIERARCHY"]

    def write_joint(i, depth):
        indent = "  " * depth
        kind = "ROOT" if i == 0 else "JOINT"
        out.append(f"{indent}{kind} {skel.names[i]}")
        out.append(indent + "{")
        off = skel.offsets[i] / unit_scale
        out.append(f"{indent}  OFFSET {off[0]:.6f} {off[1]:.6f} {off[2]:.6f}")
        rot_ch = " ".join(f"{a}rotation" for a in rotation_order)
        if i == 0:
            out.append(f"{indent}  CHANNELS 6 Xposition Yposition Zposition {rot_ch}")
        else:
            out.append(f"{indent}  CHANNELS 3 {rot_ch}")
        if children[i]:
            for c in children[i]:
                write_joint(c, depth + 1)
        else:
            out.append(f"{indent}  End Site")
            out.append(f"{indent}  {{")
            out.append(f"{indent}    OFFSET 0.000000 0.000000 0.000000")
            out.append(f"{indent}  }}")
        out.append(indent + "}")

    write_joint(0, 0)
    out.append("MOTION")
    out.append(f"Frames: {seq.n_frames}")
    out.append(f"Frame Time: {1.0 / seq.fps:.8f}")

    q = seq.rotations[:, :, [1, 2, 3, 0]]  # wxyz -> scipy xyzw
    eulers = np.empty((seq.n_frames, skel.n_joints, 3))
    for ji in range(skel.n_joints):
        eulers[:, ji] = Rotation.from_quat(q[:, ji]).as_euler(rotation_order, degrees=True)
    for f in range(seq.n_frames):
        vals = list(seq.root_pos[f] / unit_scale) + list(eulers[f].reshape(-1))
        out.append(" ".join(f"{v:.6f}" for v in vals))
    return "\n".join(out) + "\n"
