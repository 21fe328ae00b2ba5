"""Versioned binary container for ingested motion corpora.

Layout: magic, header length, JSON header (version, fps, skeleton definition,
sequence names / subjects / frame counts), then per sequence the frames as
row-major float64: root position (F, 3) followed by local rotations (F, J, 4).
"""

import json
import struct

import numpy as np

from .errors import EmptyCorpus, ParseError
from .skeleton import MotionSequence, Skeleton

_MAGIC = b"EGOC"
_VERSION = 1


def save_corpus(sequences, path):
    """Write sequences sharing one skeleton to a corpus file."""
    if not sequences:
        raise EmptyCorpus("nothing to save")
    skeleton = sequences[0].skeleton
    for s in sequences[1:]:
        if s.skeleton.names != skeleton.names:
            raise ValueError("all sequences in a corpus must share one skeleton")
    header = {
        "version": _VERSION,
        "fps": float(sequences[0].fps),
        "skeleton": {
            "names": list(skeleton.names),
            "parents": skeleton.parents.tolist(),
            "offsets": skeleton.offsets.tolist(),
        },
        "sequences": [
            {"name": s.name, "subject": s.subject, "frames": int(s.n_frames),
             "fps": float(s.fps)}
            for s in sequences
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for s in sequences:
            f.write(np.ascontiguousarray(s.root_pos, dtype=np.float64).tobytes())
            f.write(np.ascontiguousarray(s.rotations, dtype=np.float64).tobytes())


def load_corpus(path):
    """Read a corpus file back into MotionSequence objects."""
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ParseError(f"{path}: not a corpus file")
        (hlen,) = struct.unpack("<I", f.read(4))
        try:
            header = json.loads(f.read(hlen).decode())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ParseError(f"{path}: corrupt header") from exc
        if header.get("version") != _VERSION:
            raise ParseError(f"{path}: unsupported corpus version "
                             f"{header.get('version')!r}")
        sk = header["skeleton"]
        skeleton = Skeleton(names=tuple(sk["names"]),
                            parents=np.array(sk["parents"], dtype=np.int64),
                            offsets=np.array(sk["offsets"], dtype=np.float64))
        j = skeleton.n_joints
        out = []
        for meta in header["sequences"]:
            frames = meta["frames"]
            root_raw = f.read(frames * 3 * 8)
            rots_raw = f.read(frames * j * 4 * 8)
            if len(root_raw) != frames * 3 * 8 or len(rots_raw) != frames * j * 4 * 8:
                raise ParseError(f"{path}: truncated frame data for "
                                 f"{meta['name']!r}")
            root = np.frombuffer(root_raw, dtype=np.float64)
            rots = np.frombuffer(rots_raw, dtype=np.float64)
            out.append(MotionSequence(
                skeleton=skeleton,
                root_pos=root.reshape(frames, 3).copy(),
                rotations=rots.reshape(frames, j, 4).copy(),
                fps=float(meta["fps"]), name=meta["name"],
                subject=meta["subject"]))
    return out
