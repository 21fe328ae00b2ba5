"""Operator command line.

Subcommands: ingest (BVH -> binary corpus), simulate (corpus -> occlusion
records), stats (occlusion/contact statistics CSV), train (corpus -> weights +
log), eval (held-out report), predict (single BVH -> per-frame positions) and
export (single BVH -> smoothed, IK-solved BVH).

Artifacts are written atomically (temp + rename) and every run drops a
manifest with the config hash, seed and code version; timestamps live only in
the manifest so re-runs are byte-identical otherwise.
"""

import csv
import hashlib
import io
import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bvh import parse_bvh, write_bvh
from .config import RunConfig, load_config
from .corpus import load_corpus, save_corpus
from .encoding import TaskSpec, encode_task
from .errors import ConfigError, EgoposeError
from .evaluate import (decode_global_predicted, predict_sequence,
                       run_evaluation, split_corpus)
from .ik import IkConfig, smooth_stream
from .model import load_params, save_params
from .occlusion import (CameraModel, OcclusionRecords, detect_contacts,
                        occlusion_stats, simulate_sequence)
from .profiles import SkeletonProfile
from .skeleton import resample
from .training import LossWeights, TrainConfig, train

_TASK_ALIASES = {"finger": "finger-synthesis"}


def thread_cap():
    """Parallelism cap from UNOC_THREADS (>= 1); the reference implementation
    is single-threaded, so the cap is recorded and trivially honored."""
    raw = os.environ.get("UNOC_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"UNOC_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"UNOC_THREADS must be >= 1, got {n}")
    return n


def _atomic_write(path, data):
    """Write bytes or text via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as f:
        f.write(data)
    os.replace(tmp, path)


class _Run:
    """Shared state for one CLI invocation."""

    def __init__(self, config_path, seed, out, task, threshold_cm, inflation):
        self.config = load_config(config_path) if config_path else RunConfig()
        self.config_blob = (Path(config_path).read_bytes() if config_path
                           else json.dumps(self.config.to_dict(),
                                           sort_keys=True).encode())
        if seed is not None:
            self.config.seed = seed
        if out is not None:
            self.config.out_dir = out
        if task is not None:
            self.config.task = _TASK_ALIASES.get(task, task)
        if threshold_cm is not None:
            self.config.threshold_cm = threshold_cm
        if inflation is not None:
            self.config.inflation = inflation
        self.threads = thread_cap()
        self.config_dir = Path(config_path).parent if config_path else Path(".")

    @property
    def out_dir(self):
        return Path(self.config.out_dir)

    def resolve_path(self, p):
        p = Path(p)
        if p.exists() or p.is_absolute():
            return p
        return self.config_dir / p

    def load_profile(self):
        if not self.config.profile:
            raise ConfigError("this subcommand needs 'profile' set in the config")
        return SkeletonProfile.load(self.resolve_path(self.config.profile))

    def camera(self):
        c = self.config.camera
        return CameraModel(nose_offset=c.nose_offset,
                           pitch_down_deg=c.pitch_down_deg, fov_deg=c.fov_deg,
                           near_exclusion=c.near_exclusion)

    def loss_weights(self):
        w = self.config.loss_weights
        return LossWeights(**{k: getattr(w, k) for k in vars(w)})

    def train_config(self):
        t = self.config.train
        return TrainConfig(learning_rate=t.learning_rate, epochs=t.epochs,
                           batch_schedule=tuple(t.batch_schedule),
                           seed=self.config.seed, window=t.window, fps=t.fps,
                           stride=t.stride, hidden=t.hidden,
                           mlp_hidden=tuple(t.mlp_hidden))

    def write_manifest(self, subcommand, artifacts):
        manifest = {
            "subcommand": subcommand,
            "config_sha256": hashlib.sha256(self.config_blob).hexdigest(),
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "version": __version__,
            "threads": self.threads,
            "created_unix": time.time(),
            "artifacts": sorted(str(a) for a in artifacts),
        }
        _atomic_write(self.out_dir / "manifest.json",
                      json.dumps(manifest, indent=2, sort_keys=True))


def _records_for(run, seq, resolved, records_dir):
    """Load occlusion records for a sequence, simulating when absent."""
    if records_dir is not None:
        path = Path(records_dir) / f"{seq.name}.occ.rle"
        if path.exists():
            with open(path, "rb") as f:
                return OcclusionRecords.from_rle(f, resolved)
    return simulate_sequence(seq, resolved, run.camera())


def _paired_corpus(run, corpus_path, records_dir):
    seqs = load_corpus(corpus_path)
    if run.config.task == "inside-out":
        resolved = run.load_profile().resolve(seqs[0].skeleton)
        return [(s, _records_for(run, s, resolved, records_dir)) for s in seqs], resolved
    resolved = run.load_profile().resolve(seqs[0].skeleton)
    return [(s, None) for s in seqs], resolved


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON run configuration.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(), default=None, help="Artifact directory.")
@click.option("--task", type=click.Choice(["inside-out", "three-point", "finger",
                                           "finger-synthesis"]), default=None)
@click.option("--threshold-cm", type=float, default=None,
              help="Occluded-body RMSJPE gate for eval.")
@click.option("--inflation", type=float, default=None,
              help="Primitive inflation in meters for contact statistics.")
@click.pass_context
def main(ctx, config_path, seed, out, task, threshold_cm, inflation):
    """Occlusion simulation, pose completion training and evaluation."""
    try:
        ctx.obj = _Run(config_path, seed, out, task, threshold_cm, inflation)
    except EgoposeError as exc:
        _fail(exc)


def _fail(exc):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)
    raise SystemExit(2)


def _guard(fn):
    """Convert package errors into machine-readable stderr JSON + exit 2."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EgoposeError as exc:
            _fail(exc)
    return wrapper


@main.command()
@click.argument("bvh_files", nargs=-1, required=True,
                type=click.Path(exists=True))
@click.pass_obj
@_guard
def ingest(run, bvh_files):
    """Parse and resample BVH files into the binary corpus format."""
    cfg = run.config
    seqs = []
    for path in bvh_files:
        p = Path(path)
        seq = parse_bvh(p.read_text(), unit_scale=cfg.unit_scale,
                        name=p.stem, subject=p.stem.split("_")[0])
        if seq.fps > cfg.train.fps:
            seq = resample(seq, cfg.train.fps)
        seqs.append(seq)
    out = run.out_dir / "corpus.egoc"
    tmp = out.with_name(out.name + ".tmp")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(seqs, tmp)
    os.replace(tmp, out)
    run.write_manifest("ingest", [out])
    click.echo(f"wrote {out} ({len(seqs)} sequences)")


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True))
@click.pass_obj
@_guard
def simulate(run, corpus_path):
    """Simulate head-camera occlusion and write per-sequence records."""
    seqs = load_corpus(corpus_path)
    resolved = run.load_profile().resolve(seqs[0].skeleton)
    artifacts = []
    for seq in seqs:
        records = simulate_sequence(seq, resolved, run.camera())
        csv_buf = io.StringIO()
        records.to_csv(csv_buf)
        rle_buf = io.BytesIO()
        records.to_rle(rle_buf)
        for suffix, data in ((".occ.csv", csv_buf.getvalue()),
                             (".occ.rle", rle_buf.getvalue())):
            path = run.out_dir / (seq.name + suffix)
            _atomic_write(path, data)
            artifacts.append(path)
    run.write_manifest("simulate", artifacts)
    click.echo(f"wrote records for {len(seqs)} sequences to {run.out_dir}")


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True))
@click.option("--records", "records_dir", type=click.Path(exists=True), default=None)
@click.pass_obj
@_guard
def stats(run, corpus_path, records_dir):
    """Occlusion ratios / durations per group, plus contact statistics."""
    seqs = load_corpus(corpus_path)
    resolved = run.load_profile().resolve(seqs[0].skeleton)
    per_group = {}
    contacts = []
    for seq in seqs:
        records = _records_for(run, seq, resolved, records_dir)
        st = occlusion_stats(records, seq.fps)
        for g in records.groups:
            per_group.setdefault(g, {"ratios": [], "durations": []})
            per_group[g]["ratios"].append(st.ratios[g])
            per_group[g]["durations"].append(st.avg_durations[g])
        contacts.append(detect_contacts(seq, resolved,
                                        inflation=run.config.inflation))
    self_c = float(np.mean([c[0] for c in contacts]))
    hand_c = float(np.mean([c[1] for c in contacts]))
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["group", "occluded_ratio", "avg_duration_s"])
    for g in sorted(per_group):
        writer.writerow([g, f"{np.mean(per_group[g]['ratios']):.4f}",
                         f"{np.mean(per_group[g]['durations']):.4f}"])
    writer.writerow(["self_contact", f"{self_c:.4f}", ""])
    writer.writerow(["hand_body_contact", f"{hand_c:.4f}", ""])
    path = run.out_dir / "stats.csv"
    _atomic_write(path, buf.getvalue())
    run.write_manifest("stats", [path])
    click.echo(buf.getvalue())


@main.command(name="train")
@click.argument("corpus_path", type=click.Path(exists=True))
@click.option("--records", "records_dir", type=click.Path(exists=True), default=None)
@click.pass_obj
@_guard
def train_cmd(run, corpus_path, records_dir):
    """Train the predictor and write the weight file and training log."""
    corpus, resolved = _paired_corpus(run, corpus_path, records_dir)
    train_set, _, split_manifest = _maybe_split(run, corpus)
    params, log = train(train_set, resolved, run.config.task,
                        config=run.train_config(), weights=run.loss_weights(),
                        log_fn=lambda e: click.echo(json.dumps(e, sort_keys=True)))
    weights_path = run.out_dir / "weights.epwt"
    weights_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = weights_path.with_name(weights_path.name + ".tmp")
    save_params(params, tmp)
    os.replace(tmp, weights_path)
    log_path = run.out_dir / "train_log.json"
    _atomic_write(log_path, json.dumps(
        {"log": log, "split": split_manifest}, indent=2, sort_keys=True))
    run.write_manifest("train", [weights_path, log_path])
    click.echo(f"wrote {weights_path}")


def _maybe_split(run, corpus):
    sp = run.config.split
    try:
        return split_corpus(corpus, ratio=sp.ratio,
                            held_out_subjects=sp.held_out_subjects,
                            seed=run.config.seed)
    except EgoposeError:
        if len(corpus) == 1:
            return corpus, corpus, {"note": "single-sequence corpus; no split"}
        raise


@main.command(name="eval")
@click.argument("corpus_path", type=click.Path(exists=True))
@click.option("--weights", "weights_path", type=click.Path(exists=True),
              required=True)
@click.option("--records", "records_dir", type=click.Path(exists=True), default=None)
@click.pass_obj
@_guard
def eval_cmd(run, corpus_path, weights_path, records_dir):
    """Evaluate weights on the held-out portion of a corpus."""
    corpus, resolved = _paired_corpus(run, corpus_path, records_dir)
    _, test_set, split_manifest = _maybe_split(run, corpus)
    params = load_params(weights_path)
    report = run_evaluation(test_set, params, resolved, run.config.task,
                            smooth_beta=run.config.smooth_beta,
                            manifest=split_manifest)
    json_path = run.out_dir / "report.json"
    buf = io.StringIO()
    report.to_json(buf)
    _atomic_write(json_path, buf.getvalue())
    csv_path = run.out_dir / "report.csv"
    buf = io.StringIO()
    report.to_csv(buf)
    _atomic_write(csv_path, buf.getvalue())
    run.write_manifest("eval", [json_path, csv_path])
    click.echo(buf.getvalue())
    gate = run.config.threshold_cm
    if gate is not None:
        row = report.rows.get("body/occluded") or report.rows.get("body/all")
        value = row["model"].rmsjpe_cm
        if value > gate:
            _fail(EgoposeError(
                f"occluded-body RMSJPE {value:.2f} cm exceeds gate {gate} cm"))
        click.echo(f"gate passed: {value:.2f} cm <= {gate} cm")


def _predict_file(run, bvh_file, weights_path):
    cfg = run.config
    p = Path(bvh_file)
    seq = parse_bvh(p.read_text(), unit_scale=cfg.unit_scale, name=p.stem,
                    subject=p.stem.split("_")[0])
    if seq.fps > cfg.train.fps:
        seq = resample(seq, cfg.train.fps)
    resolved = run.load_profile().resolve(seq.skeleton)
    params = load_params(weights_path)
    records = (simulate_sequence(seq, resolved, run.camera())
               if cfg.task == "inside-out" else None)
    enc = encode_task(seq, records, resolved,
                      TaskSpec(task=cfg.task, window=params.window))
    frames_idx, preds, _ = predict_sequence(params, enc)
    glob = decode_global_predicted(enc, preds, frames_idx, resolved)
    return seq, resolved, enc, frames_idx, glob


@main.command()
@click.argument("bvh_file", type=click.Path(exists=True))
@click.option("--weights", "weights_path", type=click.Path(exists=True),
              required=True)
@click.pass_obj
@_guard
def predict(run, bvh_file, weights_path):
    """Stream per-frame predicted global positions for one BVH file."""
    seq, _, enc, frames_idx, glob = _predict_file(run, bvh_file, weights_path)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["frame", "joint", "x", "y", "z"])
    for i, f in enumerate(frames_idx):
        for s, name in enumerate(enc.out_names):
            writer.writerow([int(f), name] + [f"{v:.6f}" for v in glob[i, s]])
    path = run.out_dir / (Path(bvh_file).stem + ".pred.csv")
    _atomic_write(path, buf.getvalue())
    run.write_manifest("predict", [path])
    click.echo(f"wrote {path}")


@main.command()
@click.argument("bvh_file", type=click.Path(exists=True))
@click.option("--weights", "weights_path", type=click.Path(exists=True),
              required=True)
@click.option("--max-frames", type=int, default=300,
              help="IK budget: number of frames to solve.")
@click.pass_obj
@_guard
def export(run, bvh_file, weights_path, max_frames):
    """Predict, smooth, IK-solve and write the solved poses back to BVH."""
    from .encoding import FRAME_HEAD
    from .ik import IkTarget, solve_sequence
    from .skeleton import MotionSequence

    seq, resolved, enc, frames_idx, glob = _predict_file(run, bvh_file, weights_path)
    smoothed = smooth_stream(glob, beta=run.config.smooth_beta)[:max_frames]
    body_slots = np.flatnonzero(enc.out_frame == FRAME_HEAD)
    frame_targets = [
        [IkTarget(joint=int(enc.out_joint[s]), position=smoothed[t, s])
         for s in body_slots]
        for t in range(smoothed.shape[0])
    ]
    solved = solve_sequence(seq.skeleton, frame_targets, IkConfig())
    out_seq = MotionSequence(
        skeleton=seq.skeleton,
        root_pos=np.stack([s.pose.root_pos for s in solved]),
        rotations=np.stack([s.pose.rotations for s in solved]),
        fps=seq.fps, name=seq.name + "_solved", subject=seq.subject)
    path = run.out_dir / (Path(bvh_file).stem + ".solved.bvh")
    _atomic_write(path, write_bvh(out_seq, unit_scale=run.config.unit_scale))
    run.write_manifest("export", [path])
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
