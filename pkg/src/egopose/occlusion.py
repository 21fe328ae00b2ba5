"""Egocentric visibility simulation.

A single wide-FOV camera proxy sits in front of the wearer's nose. Body parts
are approximated by capsules and oriented boxes attached to bones; a joint is
visible when it lies inside the viewing cone, the ray from the camera reaches
it before any non-attached primitive, and at least one attached primitive is
itself at least partially visible. Everything is deterministic: fixed surface
sample pattern, no randomness.
"""

import csv
import io
import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import quat
from .errors import EmptyInput, MissingProfileEntry
from .skeleton import fk_sequence

_EPS = 1e-6
N_CAPSULE_SAMPLES = 16  # 4 axial stations x 4 azimuths


class Status(IntEnum):
    VISIBLE = 0
    OCCLUDED = 1
    OUT_OF_VIEW = 2
    TOO_CLOSE = 3


@dataclass(frozen=True)
class CameraModel:
    """Head-mounted camera proxy parameters (meters / degrees)."""

    nose_offset: float = 0.04
    pitch_down_deg: float = 15.0
    fov_deg: float = 200.0
    near_exclusion: float = 0.12

    def __post_init__(self):
        if not 0.0 < self.fov_deg <= 360.0:
            raise ValueError("fov must be in (0, 360] degrees")
        if self.near_exclusion < 0:
            raise ValueError("near exclusion must be non-negative")


@dataclass(frozen=True)
class CameraFrame:
    origin: np.ndarray
    forward: np.ndarray
    fov_deg: float = 200.0
    near_exclusion: float = 0.12

    @property
    def half_angle_rad(self):
        return np.deg2rad(self.fov_deg) / 2.0


def camera_from_head(head_position, head_orientation, model=CameraModel()):
    """Camera frame from the head joint transform.

    Head-local axes: +Z forward, +Y up, +X lateral. The origin sits
    ``nose_offset`` along head-forward, and the view axis is pitched down by
    ``pitch_down_deg`` about the head's lateral axis.
    """
    head_position = np.asarray(head_position, dtype=np.float64)
    head_forward = quat.rotate(head_orientation, np.array([0.0, 0.0, 1.0]))
    lateral = quat.rotate(head_orientation, np.array([1.0, 0.0, 0.0]))
    origin = head_position + model.nose_offset * head_forward
    pitch = quat.from_axis_angle(lateral, np.deg2rad(model.pitch_down_deg))
    forward = quat.rotate(pitch, head_forward)
    return CameraFrame(origin=origin, forward=forward,
                       fov_deg=model.fov_deg, near_exclusion=model.near_exclusion)


def frustum_status(camera, point):
    """Partition space: TOO_CLOSE, OUT_OF_VIEW or VISIBLE (inside).

    Inside is closed on the cone boundary (angle <= fov/2).
    """
    v = np.asarray(point, dtype=np.float64) - camera.origin
    dist = np.linalg.norm(v)
    if dist < camera.near_exclusion:
        return Status.TOO_CLOSE
    if dist == 0.0:
        return Status.VISIBLE
    cos_angle = np.clip(np.dot(v / dist, camera.forward), -1.0, 1.0)
    if np.arccos(cos_angle) > camera.half_angle_rad + 1e-12:
        return Status.OUT_OF_VIEW
    return Status.VISIBLE


def _frustum_inside_many(camera, points):
    v = points - camera.origin
    dist = np.linalg.norm(v, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_angle = np.clip((v @ camera.forward) / np.where(dist == 0, 1.0, dist), -1.0, 1.0)
    ok = dist >= camera.near_exclusion
    ok &= np.arccos(cos_angle) <= camera.half_angle_rad + 1e-12
    ok |= dist == 0.0
    return ok


# --- primitives -------------------------------------------------------------

@dataclass
class Capsule:
    p0: np.ndarray
    p1: np.ndarray
    radius: float
    group: str = ""
    attached: tuple = ()

    def inflated(self, amount):
        return Capsule(self.p0, self.p1, self.radius + amount, self.group, self.attached)


@dataclass
class Box:
    center: np.ndarray
    half_extents: np.ndarray
    rot: np.ndarray  # world-from-box rotation matrix
    group: str = ""
    attached: tuple = ()

    def inflated(self, amount):
        return Box(self.center, np.asarray(self.half_extents) + amount,
                   self.rot, self.group, self.attached)


def _capsule_ray_ts(prim, origin, dirs):
    """Entry distances of rays (shared origin) into a capsule; inf for a miss."""
    dirs = np.atleast_2d(dirs)
    n = dirs.shape[0]
    ts = np.full(n, np.inf)
    ba = prim.p1 - prim.p0
    oa = origin - prim.p0
    baba = float(ba @ ba)
    r = prim.radius

    if baba > 1e-16:
        bard = dirs @ ba
        baoa = float(oa @ ba)
        rdoa = dirs @ oa
        oaoa = float(oa @ oa)
        a = baba - bard * bard
        b = baba * rdoa - baoa * bard
        c = baba * oaoa - baoa * baoa - r * r * baba
        h = b * b - a * c
        body = (h >= 0) & (a > 1e-14)
        if np.any(body):
            t = np.full(n, np.inf)
            t[body] = (-b[body] - np.sqrt(h[body])) / a[body]
            y = baoa + t * bard
            ok = body & (t > _EPS) & (y >= 0.0) & (y <= baba)
            ts[ok] = t[ok]

    # spherical caps (also covers zero-length capsules and axis-parallel rays)
    for cap in (prim.p0, prim.p1):
        oc = origin - cap
        b = dirs @ oc
        c = float(oc @ oc) - r * r
        h = b * b - c
        hit = h >= 0
        if np.any(hit):
            t = np.full(n, np.inf)
            t[hit] = -b[hit] - np.sqrt(h[hit])
            ok = hit & (t > _EPS)
            ts = np.minimum(ts, np.where(ok, t, np.inf))
    return ts


def _box_ray_ts(prim, origin, dirs):
    """Entry distances of rays into an oriented box via the slab test."""
    dirs = np.atleast_2d(dirs)
    o = (origin - prim.center) @ prim.rot  # into box frame
    d = dirs @ prim.rot
    h = np.asarray(prim.half_extents, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-h - o) * inv
        t2 = (h - o) * inv
    near = np.where(np.abs(d) < 1e-14, -np.inf, np.minimum(t1, t2))
    far = np.where(np.abs(d) < 1e-14, np.inf, np.maximum(t1, t2))
    # parallel rays outside their slab never hit
    outside = (np.abs(d) < 1e-14) & (np.abs(o) > h)
    tmin = np.max(near, axis=-1)
    tmax = np.min(far, axis=-1)
    hit = (tmin <= tmax) & (tmin > _EPS) & ~np.any(outside, axis=-1)
    return np.where(hit, tmin, np.inf)


def ray_ts(prim, origin, dirs):
    if isinstance(prim, Capsule):
        return _capsule_ray_ts(prim, origin, dirs)
    return _box_ray_ts(prim, origin, dirs)


def ray_hit(prim, origin, direction, max_t=np.inf):
    """Smallest t in (0, max_t) where the ray enters the primitive, else None."""
    t = float(ray_ts(prim, np.asarray(origin, dtype=np.float64),
                     np.asarray(direction, dtype=np.float64))[0])
    if t < max_t and np.isfinite(t):
        return t
    return None


def _perp_basis(axis):
    """Deterministic pair of unit vectors perpendicular to axis."""
    n = np.linalg.norm(axis)
    a = axis / n if n > 1e-12 else np.array([0.0, 1.0, 0.0])
    ref = np.array([0.0, 1.0, 0.0]) if abs(a[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(a, ref)
    u /= np.linalg.norm(u)
    v = np.cross(a, u)
    return u, v


def surface_samples(prim):
    """Deterministic surface sample points used for primitive visibility."""
    if isinstance(prim, Capsule):
        axis = prim.p1 - prim.p0
        u, v = _perp_basis(axis)
        pts = []
        for i in range(4):  # axial stations
            s = (i + 0.5) / 4.0
            c = prim.p0 + s * axis
            for k in range(4):  # azimuths
                ang = 2.0 * np.pi * k / 4.0
                pts.append(c + prim.radius * (np.cos(ang) * u + np.sin(ang) * v))
        return np.array(pts)
    h = np.asarray(prim.half_extents, dtype=np.float64)
    local = []
    for axis in range(3):  # face centers
        for sign in (-1.0, 1.0):
            p = np.zeros(3)
            p[axis] = sign * h[axis]
            local.append(p)
    for sx in (-1.0, 1.0):  # corners
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                local.append(h * np.array([sx, sy, sz]))
    return prim.center + np.array(local) @ prim.rot.T


# --- building and placing primitives ---------------------------------------

def build_primitives(skeleton, profile):
    """Compile a profile's primitive specs against a skeleton.

    Every tracked group except the head must be covered by at least one
    primitive; placement happens per frame from FK results.
    """
    if not profile.primitives:
        raise MissingProfileEntry("profile declares no primitives")
    covered = {spec.group for spec in profile.primitives}
    for group in profile.group_names:
        if group != "head" and group not in covered:
            raise MissingProfileEntry(f"no primitive covers group {group!r}")
    compiled = []
    for spec in profile.primitives:
        joints = tuple(skeleton.index(n) for n in spec.joints)
        orient = skeleton.index(spec.orient_joint) if spec.orient_joint else joints[0]
        compiled.append((spec, joints, orient))
    return compiled


def place_primitives(compiled, positions, global_rotations):
    """Instantiate primitives for one frame of FK output."""
    placed = []
    for spec, joints, orient in compiled:
        if spec.kind == "capsule":
            placed.append(Capsule(
                p0=positions[joints[0]], p1=positions[joints[1]],
                radius=spec.radius, group=spec.group, attached=joints))
        else:
            center = positions[list(joints)].mean(axis=0)
            placed.append(Box(
                center=center,
                half_extents=np.asarray(spec.half_extents, dtype=np.float64),
                rot=quat.to_matrix(global_rotations[orient]),
                group=spec.group, attached=joints))
    return placed


# --- per-frame simulation ---------------------------------------------------

@dataclass
class OcclusionRecord:
    """Per-frame visibility labels: one status per tracked group plus the
    derived per-joint visibility mask."""

    frame: int
    statuses: np.ndarray  # (G,) Status codes
    joint_visible: np.ndarray  # (J,) bool


class _RayCache:
    """Batch evaluation of camera-ray blocking for one frame.

    Capsule tests are evaluated for all capsules at once (same per-element
    arithmetic as ``_capsule_ray_ts``, stacked across primitives)."""

    def __init__(self, camera, primitives):
        self.camera = camera
        self.primitives = primitives
        self._samples = {}
        self._cap_ids = [pi for pi, p in enumerate(primitives)
                         if isinstance(p, Capsule)]
        self._box_ids = [pi for pi, p in enumerate(primitives)
                         if not isinstance(p, Capsule)]
        if self._cap_ids:
            caps = [primitives[pi] for pi in self._cap_ids]
            p0 = np.array([c.p0 for c in caps])
            self._ba = np.array([c.p1 for c in caps]) - p0  # (P, 3)
            self._oa = camera.origin - p0  # (P, 3)
            self._baba = np.einsum("pi,pi->p", self._ba, self._ba)
            self._baoa = np.einsum("pi,pi->p", self._oa, self._ba)
            self._oaoa = np.einsum("pi,pi->p", self._oa, self._oa)
            self._r = np.array([c.radius for c in caps])
            self._oc = camera.origin - np.concatenate([p0, p0 + self._ba])
            self._cq = (np.einsum("pi,pi->p", self._oc, self._oc)
                        - np.tile(self._r * self._r, 2))

    def samples(self, pi):
        """Surface samples of primitive ``pi``, computed once per frame."""
        if pi not in self._samples:
            self._samples[pi] = surface_samples(self.primitives[pi])
        return self._samples[pi]

    def _capsule_ts(self, dirs):
        """(N, P) entry distances of N rays into every capsule."""
        n = dirs.shape[0]
        ts = np.full((n, len(self._cap_ids)), np.inf)
        bard = dirs @ self._ba.T  # (N, P)
        rdoa = dirs @ self._oa.T
        a = self._baba - bard * bard
        b = self._baba * rdoa - self._baoa * bard
        c = (self._baba * self._oaoa - self._baoa * self._baoa
             - self._r * self._r * self._baba)
        h = b * b - a * c
        body = (h >= 0) & (a > 1e-14) & (self._baba > 1e-16)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(body, (-b - np.sqrt(np.where(body, h, 0.0))) / a, np.inf)
        y = self._baoa + t * bard
        ok = body & (t > _EPS) & (y >= 0.0) & (y <= self._baba)
        ts[ok] = t[ok]
        # spherical caps (also covers zero-length capsules and parallel rays)
        bq = dirs @ self._oc.T  # (N, 2P)
        hq = bq * bq - self._cq
        with np.errstate(invalid="ignore"):
            tq = np.where(hq >= 0, -bq - np.sqrt(np.where(hq >= 0, hq, 0.0)), np.inf)
        tq = np.where(tq > _EPS, tq, np.inf)
        p = len(self._cap_ids)
        return np.minimum(ts, np.minimum(tq[:, :p], tq[:, p:]))

    def blocked(self, points, exclude):
        """For each point: is the camera ray blocked before reaching it by any
        primitive whose index is not in ``exclude``?"""
        points = np.atleast_2d(points)
        v = points - self.camera.origin
        dist = np.linalg.norm(v, axis=-1)
        dirs = v / np.where(dist[:, None] == 0, 1.0, dist[:, None])
        blocked = np.zeros(len(points), dtype=bool)
        if self._cap_ids:
            ts = self._capsule_ts(dirs)
            keep = np.array([pi not in exclude for pi in self._cap_ids])
            hit = (ts < dist[:, None] - 1e-5) & keep
            blocked |= np.any(hit, axis=1)
        for pi in self._box_ids:
            if pi in exclude:
                continue
            t = ray_ts(self.primitives[pi], self.camera.origin, dirs)
            blocked |= t < dist - 1e-5
        return blocked


def _joint_passes(cache, camera, joint_pos, attached_prims):
    """Standard visibility test for one joint position."""
    fs = frustum_status(camera, joint_pos)
    if fs != Status.VISIBLE:
        return fs
    if cache.blocked(joint_pos[None], attached_prims)[0]:
        return Status.OCCLUDED
    # at least one attached primitive must itself be partially visible
    for pi in attached_prims:
        samples = cache.samples(pi)
        ok = _frustum_inside_many(camera, samples)
        if np.any(ok):
            ok[ok] &= ~cache.blocked(samples[ok], attached_prims)
            if np.any(ok):
                return Status.VISIBLE
    return Status.OCCLUDED


def simulate_frame(camera, primitives, joint_positions, resolved, frame=0):
    """Visibility statuses for all tracked groups of one frame."""
    cache = _RayCache(camera, primitives)
    attached_of_joint = {}
    for j in range(resolved.skeleton.n_joints):
        attached_of_joint[j] = frozenset(
            pi for pi, p in enumerate(primitives) if j in p.attached)

    statuses = np.zeros(resolved.n_groups, dtype=np.int8)
    for gi, gname in enumerate(resolved.group_names):
        joints = resolved.group_joints[gi]
        if gname == "head":
            statuses[gi] = Status.VISIBLE
            continue
        if gname.endswith("_hand"):
            wrist = resolved.wrist_index(gname.split("_")[0])
            fs = frustum_status(camera, joint_positions[wrist])
            if fs != Status.VISIBLE:
                statuses[gi] = fs
                continue
            hand_prims = [pi for pi, p in enumerate(primitives) if p.group == gname]
            visible_count = 0
            for pi in hand_prims:
                samples = cache.samples(pi)
                ok = _frustum_inside_many(camera, samples)
                if np.any(ok):
                    ok[ok] &= ~cache.blocked(samples[ok], {pi})
                if np.any(ok):
                    visible_count += 1
            ratio = visible_count / len(hand_prims) if hand_prims else 0.0
            statuses[gi] = Status.VISIBLE if ratio >= 0.65 else Status.OCCLUDED
            continue
        if gname.endswith("_foot"):
            member = [
                _joint_passes(cache, camera, joint_positions[j], attached_of_joint[j])
                for j in joints
            ]
            if Status.VISIBLE in member:
                statuses[gi] = Status.VISIBLE
            elif Status.OCCLUDED in member:
                statuses[gi] = Status.OCCLUDED
            elif Status.OUT_OF_VIEW in member:
                statuses[gi] = Status.OUT_OF_VIEW
            else:
                statuses[gi] = Status.TOO_CLOSE
            continue
        j = joints[0]
        statuses[gi] = _joint_passes(cache, camera, joint_positions[j], attached_of_joint[j])

    joint_visible = np.ones(resolved.skeleton.n_joints, dtype=bool)
    for j in range(resolved.skeleton.n_joints):
        gi = resolved.joint_group[j]
        if gi >= 0:
            joint_visible[j] = statuses[gi] == Status.VISIBLE
    return OcclusionRecord(frame=frame, statuses=statuses, joint_visible=joint_visible)


def simulate_sequence(seq, resolved, camera_model=CameraModel()):
    """Run the simulator over a whole sequence."""
    positions, rotations = fk_sequence(seq, with_rotations=True)
    compiled = build_primitives(seq.skeleton, resolved.profile)
    records = []
    for f in range(seq.n_frames):
        camera = camera_from_head(positions[f, resolved.head],
                                  rotations[f, resolved.head], camera_model)
        prims = place_primitives(compiled, positions[f], rotations[f])
        records.append(simulate_frame(camera, prims, positions[f], resolved, frame=f))
    return OcclusionRecords.from_records(resolved.group_names, records)


@dataclass
class OcclusionRecords:
    """Stacked per-frame records for one sequence."""

    groups: list
    statuses: np.ndarray  # (F, G)
    joint_visible: np.ndarray  # (F, J)

    @classmethod
    def from_records(cls, groups, records):
        return cls(groups=list(groups),
                   statuses=np.stack([r.statuses for r in records]),
                   joint_visible=np.stack([r.joint_visible for r in records]))

    @property
    def n_frames(self):
        return self.statuses.shape[0]

    def record(self, f):
        return OcclusionRecord(frame=f, statuses=self.statuses[f],
                               joint_visible=self.joint_visible[f])

    # CSV: one (frame, group, status) row per group per frame
    def to_csv(self, fileobj):
        writer = csv.writer(fileobj)
        writer.writerow(["frame", "group", "status"])
        for f in range(self.n_frames):
            for gi, g in enumerate(self.groups):
                writer.writerow([f, g, Status(self.statuses[f, gi]).name.lower()])

    @classmethod
    def from_csv(cls, fileobj, resolved):
        reader = csv.reader(fileobj)
        header = next(reader)
        if header != ["frame", "group", "status"]:
            raise ValueError("unexpected occlusion CSV header")
        rows = [(int(f), g, Status[s.upper()]) for f, g, s in reader]
        n_frames = max(f for f, _, _ in rows) + 1
        statuses = np.zeros((n_frames, resolved.n_groups), dtype=np.int8)
        for f, g, s in rows:
            statuses[f, resolved.group_index(g)] = s
        return cls._rebuild(resolved, statuses)

    @classmethod
    def _rebuild(cls, resolved, statuses):
        joint_visible = np.ones((statuses.shape[0], resolved.skeleton.n_joints), dtype=bool)
        for j in range(resolved.skeleton.n_joints):
            gi = resolved.joint_group[j]
            if gi >= 0:
                joint_visible[:, j] = statuses[:, gi] == Status.VISIBLE
        return cls(groups=list(resolved.group_names), statuses=statuses,
                   joint_visible=joint_visible)

    # compact binary: per-group run-length encoding of the status stream
    _MAGIC = b"EORL"

    def to_rle(self, fileobj):
        fileobj.write(self._MAGIC)
        fileobj.write(struct.pack("<III", 1, len(self.groups), self.n_frames))
        for g in self.groups:
            name = g.encode()
            fileobj.write(struct.pack("<H", len(name)) + name)
        for gi in range(len(self.groups)):
            col = self.statuses[:, gi]
            change = np.flatnonzero(np.diff(col)) + 1
            starts = np.concatenate([[0], change])
            ends = np.concatenate([change, [len(col)]])
            fileobj.write(struct.pack("<I", len(starts)))
            for s, e in zip(starts, ends):
                fileobj.write(struct.pack("<BI", int(col[s]), int(e - s)))

    @classmethod
    def from_rle(cls, fileobj, resolved):
        if fileobj.read(4) != cls._MAGIC:
            raise ValueError("not an occlusion RLE file")
        _, n_groups, n_frames = struct.unpack("<III", fileobj.read(12))
        groups = []
        for _ in range(n_groups):
            (ln,) = struct.unpack("<H", fileobj.read(2))
            groups.append(fileobj.read(ln).decode())
        if groups != list(resolved.group_names):
            raise ValueError("group list does not match profile")
        statuses = np.zeros((n_frames, n_groups), dtype=np.int8)
        for gi in range(n_groups):
            (n_runs,) = struct.unpack("<I", fileobj.read(4))
            f = 0
            for _ in range(n_runs):
                status, length = struct.unpack("<BI", fileobj.read(5))
                statuses[f:f + length, gi] = status
                f += length
        return cls._rebuild(resolved, statuses)


# --- statistics -------------------------------------------------------------

@dataclass
class OcclusionStats:
    ratios: dict  # group -> occluded-frame fraction
    avg_durations: dict  # group -> mean contiguous occluded run, seconds
    self_contact_ratio: float = 0.0
    hand_body_contact_ratio: float = 0.0


def occlusion_stats(records, fps):
    """Per-group occlusion ratio and mean contiguous occluded-run duration."""
    if records.n_frames == 0:
        raise EmptyInput("no occlusion records")
    ratios, durations = {}, {}
    for gi, g in enumerate(records.groups):
        occluded = records.statuses[:, gi] != Status.VISIBLE
        ratios[g] = float(np.mean(occluded))
        if not np.any(occluded):
            durations[g] = 0.0
            continue
        padded = np.concatenate([[False], occluded, [False]])
        starts = np.flatnonzero(padded[1:] & ~padded[:-1])
        ends = np.flatnonzero(~padded[1:] & padded[:-1])
        durations[g] = float(np.mean(ends - starts) / fps)
    return OcclusionStats(ratios=ratios, avg_durations=durations)


# --- contact detection ------------------------------------------------------

def _segment_segment_distance(p0, p1, q0, q1):
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    if a <= 1e-16 and e <= 1e-16:
        return float(np.linalg.norm(r))
    if a <= 1e-16:
        s, t = 0.0, np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e <= 1e-16:
            t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-16 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t, s = 1.0, np.clip((b - c) / a, 0.0, 1.0)
    return float(np.linalg.norm(p0 + s * d1 - (q0 + t * d2)))


def _point_box_distance(point, box):
    local = (point - box.center) @ box.rot
    h = np.asarray(box.half_extents)
    d = np.maximum(np.abs(local) - h, 0.0)
    return float(np.linalg.norm(d))


def _segment_box_distance(p0, p1, box):
    # distance along the segment to a convex set is convex: ternary search
    lo, hi = 0.0, 1.0
    for _ in range(60):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        d1 = _point_box_distance(p0 + m1 * (p1 - p0), box)
        d2 = _point_box_distance(p0 + m2 * (p1 - p0), box)
        if d1 < d2:
            hi = m2
        else:
            lo = m1
    return _point_box_distance(p0 + 0.5 * (lo + hi) * (p1 - p0), box)


def _boxes_intersect(a, b):
    """Oriented-box separating axis test (15 axes)."""
    ra = np.asarray(a.half_extents)
    rb = np.asarray(b.half_extents)
    rm = a.rot.T @ b.rot
    t = a.rot.T @ (b.center - a.center)
    abs_rm = np.abs(rm) + 1e-12
    for i in range(3):  # a's axes
        if abs(t[i]) > ra[i] + rb @ abs_rm[i]:
            return False
    for j in range(3):  # b's axes
        if abs(t @ rm[:, j]) > ra @ abs_rm[:, j] + rb[j]:
            return False
    for i in range(3):  # cross products
        for j in range(3):
            lhs = abs(t[(i + 2) % 3] * rm[(i + 1) % 3, j] - t[(i + 1) % 3] * rm[(i + 2) % 3, j])
            rhs = (ra[(i + 1) % 3] * abs_rm[(i + 2) % 3, j]
                   + ra[(i + 2) % 3] * abs_rm[(i + 1) % 3, j]
                   + rb[(j + 1) % 3] * abs_rm[i, (j + 2) % 3]
                   + rb[(j + 2) % 3] * abs_rm[i, (j + 1) % 3])
            if lhs > rhs:
                return False
    return True


def primitives_intersect(a, b):
    if isinstance(a, Capsule) and isinstance(b, Capsule):
        return _segment_segment_distance(a.p0, a.p1, b.p0, b.p1) < a.radius + b.radius
    if isinstance(a, Capsule) and isinstance(b, Box):
        return _segment_box_distance(a.p0, a.p1, b) < a.radius
    if isinstance(a, Box) and isinstance(b, Capsule):
        return primitives_intersect(b, a)
    return _boxes_intersect(a, b)


def _adjacent_attachments(skeleton, a, b):
    """Primitive pairs anchored on the same joint or on joints connected by a
    bone touch by construction; contact statistics skip them."""
    sa, sb = set(a), set(b)
    if sa & sb:
        return True
    for ja in sa:
        p = skeleton.parents[ja]
        if p >= 0 and p in sb:
            return True
    for jb in sb:
        p = skeleton.parents[jb]
        if p >= 0 and p in sa:
            return True
    return False


def detect_contacts(seq, resolved, inflation=0.01, stride=1):
    """Fraction of frames with any non-adjacent primitive pair interpenetrating
    (self-contact), and with a hand primitive in such a pair (hand-body).

    Adjacent means anchored on a shared joint or on joints connected by a
    bone. Primitives are inflated by ``inflation`` meters before testing.
    """
    if inflation < 0:
        raise ValueError("inflation must be non-negative")
    positions, rotations = fk_sequence(seq, with_rotations=True)
    compiled = build_primitives(seq.skeleton, resolved.profile)
    frames = range(0, seq.n_frames, stride)
    n_checked = 0
    self_contact = 0
    hand_body = 0
    for f in frames:
        prims = [p.inflated(inflation)
                 for p in place_primitives(compiled, positions[f], rotations[f])]
        any_contact = False
        any_hand = False
        for i in range(len(prims)):
            for j in range(i + 1, len(prims)):
                if _adjacent_attachments(seq.skeleton, prims[i].attached,
                                         prims[j].attached):
                    continue
                if primitives_intersect(prims[i], prims[j]):
                    any_contact = True
                    if prims[i].group.endswith("_hand") or prims[j].group.endswith("_hand"):
                        any_hand = True
            if any_contact and any_hand:
                break
        n_checked += 1
        self_contact += any_contact
        hand_body += any_hand
    return self_contact / n_checked, hand_body / n_checked
