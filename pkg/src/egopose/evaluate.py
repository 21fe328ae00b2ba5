"""Metrics, the last-known-position baseline, corpus splitting and the
evaluation harness.

Errors are reported as RMSJPE / MPJPE in centimeters. Body errors are measured
in the global frame, finger errors in the wrist-local frame; the combined
body-and-finger rows use the global frame for all joints.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .encoding import (FRAME_HEAD, FRAME_LEFT_WRIST, FRAME_RIGHT_WRIST,
                       TaskSpec, apply_fill, encode_task)
from .errors import EmptySubset, InsufficientData, LayoutHashMismatch
from .ik import IkConfig, IkTarget, acceleration_metric, smooth_stream, solve_sequence
from .model import forward_window, layout_hash
from .skeleton import build_wrist_frame, forward_kinematics
from .training import make_windows


@dataclass
class Metrics:
    rmsjpe_cm: float
    mpjpe_cm: float
    count: int

    def as_dict(self):
        return {"rmsjpe_cm": self.rmsjpe_cm, "mpjpe_cm": self.mpjpe_cm,
                "count": self.count}


def compute_metrics(pred, gt, select):
    """RMSJPE / MPJPE over the selected (frame, joint) pairs, in centimeters.

    ``pred`` and ``gt`` are (F, J, 3) in meters; ``select`` is a (F, J) bool
    mask choosing which pairs enter the statistics.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    select = np.asarray(select, dtype=bool)
    if not np.any(select):
        raise EmptySubset("no (frame, joint) pairs selected")
    d = np.linalg.norm(pred - gt, axis=-1)[select] * 100.0
    return Metrics(rmsjpe_cm=float(np.sqrt(np.mean(d * d))),
                   mpjpe_cm=float(np.mean(d)), count=int(d.size))


class _MetricAccumulator:
    """Streaming accumulation of per-pair distances across sequences."""

    def __init__(self):
        self.sum = 0.0
        self.sumsq = 0.0
        self.count = 0

    def add(self, pred, gt, select):
        if not np.any(select):
            return
        d = np.linalg.norm(np.asarray(pred) - np.asarray(gt), axis=-1)[select] * 100.0
        self.sum += float(np.sum(d))
        self.sumsq += float(np.sum(d * d))
        self.count += int(d.size)

    def metrics(self):
        if self.count == 0:
            raise EmptySubset("empty metric subset")
        return Metrics(rmsjpe_cm=float(np.sqrt(self.sumsq / self.count)),
                       mpjpe_cm=self.sum / self.count, count=self.count)


def baseline_predict(encoded, visible, rest_values):
    """Last-known-position baseline in the encoding frame: visible joints pass
    through the observations, untracked joints hold the most recent visible
    value (rest encoding before first visibility)."""
    return apply_fill(encoded, visible, rest_values)


def split_corpus(corpus, ratio=0.8, held_out_subjects=(), seed=0):
    """Sequence-granular train/test split.

    All sequences of held-out subjects land in test; the remainder is shuffled
    by seed to reach the ratio within one sequence. Returns (train, test,
    manifest).
    """
    if not corpus:
        raise InsufficientData("empty corpus")
    held = set(held_out_subjects)

    def subject_of(item):
        seq = item[0] if isinstance(item, tuple) else item
        return seq.subject

    def name_of(item):
        seq = item[0] if isinstance(item, tuple) else item
        return seq.name

    forced_test = [i for i, it in enumerate(corpus) if subject_of(it) in held]
    rest = [i for i, it in enumerate(corpus) if subject_of(it) not in held]
    rng = np.random.Generator(np.random.PCG64(seed))
    rest = [rest[k] for k in rng.permutation(len(rest))]
    n_test_target = int(round((1.0 - ratio) * len(corpus)))
    if ratio < 1.0:
        n_test_target = max(1, n_test_target)
    test_ids = list(forced_test)
    for i in rest:
        if len(test_ids) >= n_test_target:
            break
        test_ids.append(i)
    train_ids = [i for i in range(len(corpus)) if i not in set(test_ids)]
    if not test_ids or not train_ids:
        raise InsufficientData(
            f"split leaves {len(train_ids)} train / {len(test_ids)} test sequences")
    manifest = {
        "ratio": ratio,
        "held_out_subjects": sorted(held),
        "seed": seed,
        "train": [name_of(corpus[i]) for i in sorted(train_ids)],
        "test": [name_of(corpus[i]) for i in sorted(test_ids)],
    }
    return [corpus[i] for i in sorted(train_ids)], [corpus[i] for i in sorted(test_ids)], manifest


# --- decoding ---------------------------------------------------------------

def decode_global(enc, values, frames_idx):
    """Decode encoded positions (N, n_out, 3) at the given frames to global
    coordinates.

    Body slots add back the (tracked) head position. Finger slots are placed
    with the wrist frame rebuilt from the decoded wrist and elbow positions
    when those are part of the output set, and with the observed (input-side)
    wrist frames otherwise."""
    n = len(frames_idx)
    out = np.empty((n, enc.n_out, 3))
    body = enc.out_frame == FRAME_HEAD
    head = enc.head_positions[frames_idx]
    out[:, body] = values[:, body] + head[:, None, :]

    if np.all(body):
        return out
    for side, frame_code in ((0, FRAME_LEFT_WRIST), (1, FRAME_RIGHT_WRIST)):
        slots = np.flatnonzero((enc.out_frame == frame_code) & ~body)
        if not len(slots):
            continue
        origins = enc.wrist_origins[frames_idx, side]
        frames = enc.wrist_frames[frames_idx, side]
        for t in range(n):
            out[t, slots] = origins[t] + values[t, slots] @ frames[t].T
    return out


def decode_global_predicted(enc, values, frames_idx, resolved):
    """Like decode_global, but rebuilds wrist frames from the *decoded* body
    positions (no ground-truth leakage) when the wrist and its parent are part
    of the output set."""
    out = decode_global(enc, values, frames_idx)
    body = enc.out_frame == FRAME_HEAD
    slot_of_joint = {int(j): s for s, (j, tip) in enumerate(zip(enc.out_joint, enc.out_is_tip))
                     if not tip and body[s]}
    skeleton = resolved.skeleton
    for side, frame_code, wrist in ((0, FRAME_LEFT_WRIST, resolved.left_wrist),
                                    (1, 2, resolved.right_wrist)):
        slots = np.flatnonzero((enc.out_frame == frame_code))
        if not len(slots):
            continue
        parent = int(skeleton.parents[wrist])
        if int(wrist) not in slot_of_joint or parent not in slot_of_joint:
            continue  # wrist not predicted: observed frames already applied
        ws, ps = slot_of_joint[int(wrist)], slot_of_joint[parent]
        for t in range(len(frames_idx)):
            origin = out[t, ws]
            frame = build_wrist_frame(out[t, ws] - out[t, ps])
            out[t, slots] = origin + values[t, slots] @ frame.T
    return out


# --- the evaluation harness -------------------------------------------------

@dataclass
class EvalReport:
    task: str
    corpus_label: str
    rows: dict  # (part, subset) "body/occluded" -> {"model": .., "baseline": ..}
    acceleration: dict
    manifest: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "task": self.task,
            "corpus": self.corpus_label,
            "rows": {k: {m: v.as_dict() for m, v in row.items()}
                     for k, row in self.rows.items()},
            "acceleration": self.acceleration,
            "manifest": self.manifest,
        }

    def to_json(self, fileobj):
        json.dump(self.to_dict(), fileobj, indent=2, sort_keys=True)

    def to_csv(self, fileobj):
        writer = csv.writer(fileobj)
        writer.writerow(["row", "model_rmsjpe_cm", "model_mpjpe_cm",
                         "baseline_rmsjpe_cm", "baseline_mpjpe_cm", "count"])
        for key in sorted(self.rows):
            row = self.rows[key]
            m, b = row["model"], row["baseline"]
            writer.writerow([key, f"{m.rmsjpe_cm:.4f}", f"{m.mpjpe_cm:.4f}",
                             f"{b.rmsjpe_cm:.4f}", f"{b.mpjpe_cm:.4f}", m.count])


def predict_sequence(params, enc, batch_size=1024):
    """Windowed predictions for one encoded sequence.

    Returns (frames_idx, predictions (N, n_out, 3) in the encoding frames,
    logits or None)."""
    ws = make_windows(enc, params.window, stride=1)
    n = ws.n_windows
    preds = np.empty((n, enc.n_out, 3))
    logits = np.empty((n, params.n_groups)) if params.n_groups else None
    for start in range(0, n, batch_size):
        x = np.array(ws.inputs[start:start + batch_size])
        pos, lg = forward_window(params, x)
        preds[start:start + len(x)] = pos.reshape(len(x), enc.n_out, 3)
        if logits is not None:
            logits[start:start + len(x)] = lg
    return ws.end_frames, preds, logits


def run_evaluation(test_corpus, params, resolved, task, smooth_beta=0.8,
                   post_process=True, ik_config=None, ik_max_frames=240,
                   corpus_label="desk-scale", manifest=None):
    """Evaluate trained parameters against the last-known-position baseline.

    ``test_corpus`` is a list of (MotionSequence at model fps, records-or-None).
    """
    if isinstance(task, str):
        task = TaskSpec(task=task)
    encs = [encode_task(seq, rec, resolved, task.task) for seq, rec in test_corpus]
    if encs and layout_hash({"layout": encs[0].layout()}) != layout_hash(params.meta):
        raise LayoutHashMismatch("trained parameters do not match the task layout")

    has_fingers = any(np.any(e.out_is_finger) for e in encs)
    parts = ["body"] + (["finger", "body_finger"] if has_fingers else [])
    subsets = ["all", "occluded"]
    acc_rows = {(p, s): {"model": _MetricAccumulator(), "baseline": _MetricAccumulator()}
                for p in parts for s in subsets}
    accel = {"model_raw": [], "model_smoothed": [], "model_ik": [],
             "ground_truth": []}

    for (seq, _rec), enc in zip(test_corpus, encs):
        frames_idx, preds, _ = predict_sequence(params, enc)
        rest_enc = _rest_for_enc(enc, resolved)
        base_full = baseline_predict(enc.targets, enc.target_visible, rest_enc)
        base = base_full[frames_idx]
        gt = enc.targets[frames_idx]
        visible = enc.target_visible[frames_idx]
        occluded = ~visible
        body = enc.out_frame == FRAME_HEAD
        finger = enc.out_is_finger

        pred_global = decode_global_predicted(enc, preds, frames_idx, resolved)
        base_global = decode_global_predicted(enc, base, frames_idx, resolved)
        gt_global = decode_global(enc, gt, frames_idx)

        for part in parts:
            if part == "body":
                sel_joints, pp, bb, gg = body, pred_global, base_global, gt_global
            elif part == "finger":
                sel_joints, pp, bb, gg = finger, preds, base, gt  # wrist-local
            else:
                sel_joints = np.ones(enc.n_out, dtype=bool)
                pp, bb, gg = pred_global, base_global, gt_global
            for subset in subsets:
                sel = np.broadcast_to(sel_joints, visible.shape).copy()
                if subset == "occluded":
                    sel &= occluded
                acc_rows[(part, subset)]["model"].add(pp, gg, sel)
                acc_rows[(part, subset)]["baseline"].add(bb, gg, sel)

        fps = params.meta["fps"]
        if len(frames_idx) >= 3:
            accel["model_raw"].append(acceleration_metric(pred_global, fps))
            accel["ground_truth"].append(acceleration_metric(gt_global, fps))
            if post_process:
                smoothed = smooth_stream(pred_global, beta=smooth_beta)
                accel["model_smoothed"].append(acceleration_metric(smoothed, fps))
                solved = _ik_positions(resolved, enc, smoothed[:ik_max_frames],
                                       ik_config or IkConfig())
                if solved is not None and len(solved) >= 3:
                    accel["model_ik"].append(acceleration_metric(solved, fps))

    rows = {}
    for (part, subset), accs in acc_rows.items():
        try:
            rows[f"{part}/{subset}"] = {m: a.metrics() for m, a in accs.items()}
        except EmptySubset:
            continue
    acceleration = {k: (float(np.mean(v)) if v else None) for k, v in accel.items()}
    return EvalReport(task=task.task, corpus_label=corpus_label, rows=rows,
                      acceleration=acceleration, manifest=manifest or {})


def _rest_for_enc(enc, resolved):
    """Rest-pose values in the sequence's encoding layout."""
    from .encoding import _encode_positions, _wrist_frames
    skeleton = resolved.skeleton
    rest = forward_kinematics(skeleton, skeleton.rest_pose())
    origins, frames = _wrist_frames(resolved, rest[None])
    ident = np.tile(np.array([1.0, 0, 0, 0]), (1, skeleton.n_joints, 1))
    return _encode_positions(resolved, rest[None], ident, enc.out_joint,
                             enc.out_is_tip, enc.out_frame, origins, frames)[0]


def _ik_positions(resolved, enc, stream, config):
    """Solve IK on the decoded body-joint stream and return FK positions of
    the solved poses restricted to the encoded body slots."""
    body_slots = np.flatnonzero(enc.out_frame == FRAME_HEAD)
    if not len(body_slots):
        return None
    skeleton = resolved.skeleton
    frame_targets = []
    for t in range(stream.shape[0]):
        targets = [IkTarget(joint=int(enc.out_joint[s]), position=stream[t, s])
                   for s in body_slots]
        frame_targets.append(targets)
    solved = solve_sequence(skeleton, frame_targets, config)
    out = np.empty((len(solved), len(body_slots), 3))
    for t, s in enumerate(solved):
        pos = forward_kinematics(skeleton, s.pose)
        out[t] = pos[[int(enc.out_joint[k]) for k in body_slots]]
    return out
