"""Window construction, the composite loss, Adam, and the training loop.

Loss structure, per window (all distances Euclidean, meters):

* position term — weighted mean over output joints of the distance between
  predicted and target positions in their local encodings: weight 10 for body
  joints, 100 for fingers, times 1.2 when the joint is untracked.
* kinematic term — sum over tree edges of the parent-local position distance
  (weight 3, times 1.2 when the child is untracked) plus the bone-length
  distance (weight 7 body, 10 fingers). Summed, not averaged, over edges.
* occlusion term — 0.025 times the summed binary cross entropy of the
  predicted logits against the simulator's labels.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod
from .encoding import encode_task, sliding_windows
from .errors import EmptyCorpus, SequenceTooShort
from .model import backward_window, flatten_params, forward_window, init_params

_SAFE = 1e-12


@dataclass(frozen=True)
class LossWeights:
    body_pos: float = 10.0
    finger_pos: float = 100.0
    occluded_multiplier: float = 1.2
    parent_local: float = 3.0
    bone_length_body: float = 7.0
    bone_length_finger: float = 10.0
    occlusion_mask: float = 0.025

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 5
    batch_schedule: tuple = (256, 512, 1024, 1024, 1024)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    window: int = 27
    fps: float = 30.0
    stride: int = 1
    hidden: int = 512
    mlp_hidden: tuple = (512, 512)

    def __post_init__(self):
        if len(self.batch_schedule) != self.epochs:
            raise ValueError("batch schedule length must equal epoch count")
        if self.window < 1 or self.stride < 1:
            raise ValueError("window and stride must be >= 1")


@dataclass
class WindowSet:
    """Sliding windows over one encoded sequence (stride-1 views; batches are
    materialized on gather)."""

    enc: object
    inputs: np.ndarray  # (N, T, D) view
    end_frames: np.ndarray  # (N,) frame index of the final window frame

    @property
    def n_windows(self):
        return len(self.end_frames)


def make_windows(enc, window, stride=1):
    """Sliding windows of length ``window`` over an encoded sequence."""
    if enc.n_frames < window:
        raise SequenceTooShort(
            f"{enc.n_frames} frames < window {window}")
    views = sliding_windows(enc.inputs, window)
    end_frames = np.arange(window - 1, enc.n_frames, dtype=np.int64)
    if stride > 1:
        views = views[::stride]
        end_frames = end_frames[::stride]
    return WindowSet(enc=enc, inputs=views, end_frames=end_frames)


@dataclass
class Batch:
    """One training batch: final-frame targets aligned with window inputs."""

    x: np.ndarray  # (B, T, D)
    targets: np.ndarray  # (B, n_out, 3)
    labels: np.ndarray | None  # (B, G)
    visible: np.ndarray  # (B, n_out)
    edges: np.ndarray
    edge_is_finger: np.ndarray
    out_is_finger: np.ndarray


def gather_batch(window_sets, seq_ids, local_ids):
    """Materialize a batch from (sequence, window) index pairs. All sequences
    must share one encoding layout."""
    ws0 = window_sets[0]
    xs, tg, lb, vis = [], [], [], []
    has_labels = ws0.enc.labels is not None
    for s, i in zip(seq_ids, local_ids):
        ws = window_sets[s]
        f = ws.end_frames[i]
        xs.append(ws.inputs[i])
        tg.append(ws.enc.targets[f])
        vis.append(ws.enc.target_visible[f])
        if has_labels:
            lb.append(ws.enc.labels[f])
    return Batch(
        x=np.array(xs), targets=np.array(tg),
        labels=np.array(lb) if has_labels else None,
        visible=np.array(vis),
        edges=ws0.enc.edges, edge_is_finger=ws0.enc.edge_is_finger,
        out_is_finger=ws0.enc.out_is_finger,
    )


def _softplus(x):
    return np.logaddexp(0.0, x)


def composite_loss(pred_pos, pred_logits, batch, w=LossWeights(), with_grads=False):
    """Composite loss averaged over the batch.

    ``pred_pos`` is (B, 3*n_out); returns (total, breakdown) and, with
    ``with_grads``, the gradients at the head outputs.
    """
    b, n_out = batch.targets.shape[:2]
    pred = pred_pos.reshape(b, n_out, 3)
    diff = pred - batch.targets

    # position term: weighted mean over output joints
    base = np.where(batch.out_is_finger, w.finger_pos, w.body_pos)
    jw = base * np.where(batch.visible, 1.0, w.occluded_multiplier)
    dist = np.linalg.norm(diff, axis=-1)
    l_pos = float(np.mean(np.sum(jw * dist, axis=-1) / n_out))

    d_pred = np.zeros_like(pred)
    if with_grads:
        unit = diff / np.maximum(dist, _SAFE)[..., None]
        d_pred += (jw / n_out)[..., None] * unit * (dist > 0)[..., None] / b

    # kinematic term: parent-local bones and bone lengths, summed over edges
    l_kin = 0.0
    if len(batch.edges):
        pslots = batch.edges[:, 0]
        cslots = batch.edges[:, 1]
        child_pred = pred[:, cslots]
        child_tgt = batch.targets[:, cslots]
        parent_pred = np.where((pslots >= 0)[None, :, None],
                               pred[:, np.maximum(pslots, 0)], 0.0)
        parent_tgt = np.where((pslots >= 0)[None, :, None],
                              batch.targets[:, np.maximum(pslots, 0)], 0.0)
        bone = child_pred - parent_pred
        bone_t = child_tgt - parent_tgt
        pl_w = w.parent_local * np.where(batch.visible[:, cslots], 1.0,
                                         w.occluded_multiplier)
        bl_w = np.where(batch.edge_is_finger, w.bone_length_finger, w.bone_length_body)
        db = bone - bone_t
        db_n = np.linalg.norm(db, axis=-1)
        len_p = np.linalg.norm(bone, axis=-1)
        len_t = np.linalg.norm(bone_t, axis=-1)
        dlen = len_p - len_t
        l_kin = float(np.mean(np.sum(pl_w * db_n + bl_w * np.abs(dlen), axis=-1)))
        if with_grads:
            d_bone = pl_w[..., None] * db / np.maximum(db_n, _SAFE)[..., None] \
                * (db_n > 0)[..., None]
            d_bone += (bl_w * np.sign(dlen))[..., None] * bone \
                / np.maximum(len_p, _SAFE)[..., None] * (len_p > 0)[..., None]
            d_bone /= b
            np.add.at(d_pred, (slice(None), cslots), d_bone)
            keep = pslots >= 0
            np.add.at(d_pred, (slice(None), pslots[keep]), -d_bone[:, keep])

    # occlusion term: summed binary cross entropy of logits vs labels
    l_occ = 0.0
    d_logits = None
    if pred_logits is not None and batch.labels is not None:
        bce = _softplus(pred_logits) - batch.labels * pred_logits
        l_occ = float(np.mean(np.sum(w.occlusion_mask * bce, axis=-1)))
        if with_grads:
            sig = 1.0 / (1.0 + np.exp(-np.clip(pred_logits, -500, 500)))
            d_logits = w.occlusion_mask * (sig - batch.labels) / b

    total = l_pos + l_kin + l_occ
    breakdown = {"pos": l_pos, "kin": l_kin, "occ": l_occ, "total": total}
    if with_grads:
        return total, breakdown, d_pred.reshape(b, -1), d_logits
    return total, breakdown


def gradients(params, batch, weights=LossWeights()):
    """Exact reverse-mode gradients of the composite loss for one batch."""
    pos, logits, cache = forward_window(params, batch.x, with_cache=True)
    total, breakdown, d_pos, d_logits = composite_loss(
        pos, logits, batch, weights, with_grads=True)
    grads = backward_window(params, cache, d_pos, d_logits)
    return grads, total, breakdown


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def for_params(cls, params):
        flat = flatten_params(params)
        return cls(m={k: np.zeros_like(a) for k, a in flat.items()},
                   v={k: np.zeros_like(a) for k, a in flat.items()})


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Standard bias-corrected Adam update, applied in place."""
    state.t += 1
    t = state.t
    flat = flatten_params(params)
    for k, p in flat.items():
        g = grads[k]
        state.m[k] = beta1 * state.m[k] + (1 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1 - beta2) * g * g
        m_hat = state.m[k] / (1 - beta1 ** t)
        v_hat = state.v[k] / (1 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def train(corpus, resolved, task, config=TrainConfig(), weights=LossWeights(),
          log_fn=None):
    """Train a predictor on encoded (sequence, records) pairs.

    ``corpus`` is a list of (MotionSequence at model fps, OcclusionRecords or
    None). Deterministic per seed: shuffling uses a dedicated generator, and
    accumulation order is fixed.
    """
    if not corpus:
        raise EmptyCorpus("no sequences to train on")
    encoded = [encode_task(seq, rec, resolved, task) for seq, rec in corpus]
    window_sets = []
    for enc in encoded:
        try:
            window_sets.append(make_windows(enc, config.window, config.stride))
        except SequenceTooShort:
            continue
    if not window_sets:
        raise EmptyCorpus("no sequence long enough for one window")

    enc0 = window_sets[0].enc
    n_groups = len(enc0.group_names) if enc0.labels is not None else 0
    params = init_params(
        input_dim=enc0.input_dim, output_dim=3 * enc0.n_out, n_groups=n_groups,
        hidden=config.hidden, mlp_hidden=config.mlp_hidden, window=config.window,
        fps=config.fps, seed=config.seed, layout=enc0.layout())
    state = AdamState.for_params(params)

    seq_ids = np.concatenate([np.full(ws.n_windows, s, dtype=np.int64)
                              for s, ws in enumerate(window_sets)])
    local_ids = np.concatenate([np.arange(ws.n_windows, dtype=np.int64)
                                for ws in window_sets])
    n_windows = len(seq_ids)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    log = []
    step = 0
    t0 = time.monotonic()
    for epoch in range(config.epochs):
        batch_size = config.batch_schedule[epoch]
        order = rng.permutation(n_windows)
        sums = {"pos": 0.0, "kin": 0.0, "occ": 0.0, "total": 0.0}
        n_batches = 0
        for start in range(0, n_windows, batch_size):
            pick = order[start:start + batch_size]
            batch = gather_batch(window_sets, seq_ids[pick], local_ids[pick])
            grads, total, breakdown = gradients(params, batch, weights)
            adam_step(params, grads, state, lr=config.learning_rate,
                      beta1=config.beta1, beta2=config.beta2, eps=config.eps)
            for k in sums:
                sums[k] += breakdown[k]
            n_batches += 1
            step += 1
        entry = {"epoch": epoch, "step": step, "batch_size": batch_size,
                 "wall_s": round(time.monotonic() - t0, 3)}
        entry.update({f"loss_{k}": sums[k] / n_batches for k in sums})
        log.append(entry)
        if log_fn is not None:
            log_fn(entry)
    return params, log


# --- gradient verification ---------------------------------------------------

def _random_check_problem(rng, hidden=8, window=3, n_out=4, n_groups=3,
                          mlp_hidden=(8, 8)):
    input_dim = 3 * n_out
    params = init_params(input_dim=input_dim, output_dim=3 * n_out,
                         n_groups=n_groups, hidden=hidden, mlp_hidden=mlp_hidden,
                         window=window, seed=int(rng.integers(1 << 31)))
    # random small kinematic chain over the output slots
    edges = np.array([[i - 1, i] for i in range(1, n_out)], dtype=np.int64)
    batch = Batch(
        x=rng.normal(scale=0.3, size=(2, window, input_dim)),
        targets=rng.normal(scale=0.3, size=(2, n_out, 3)),
        labels=rng.integers(0, 2, size=(2, n_groups)).astype(np.float64),
        visible=rng.integers(0, 2, size=(2, n_out)).astype(bool),
        edges=edges,
        edge_is_finger=rng.integers(0, 2, size=len(edges)).astype(bool),
        out_is_finger=rng.integers(0, 2, size=n_out).astype(bool),
    )
    return params, batch


def gradient_check(trials=100, eps=1e-5, tol=1e-4, seed=0, hidden=8, window=3,
                   weights=LossWeights()):
    """Compare analytic gradients against central finite differences on small
    random instances. Returns a report with the max relative error."""
    rng = np.random.Generator(np.random.PCG64(seed))
    max_rel = 0.0
    worst = None
    for trial in range(trials):
        params, batch = _random_check_problem(rng, hidden=hidden, window=window)
        grads, _, _ = gradients(params, batch, weights)

        def loss_at():
            pos, logits = forward_window(
                params, batch.x, with_cache=False)
            total, _ = composite_loss(pos, logits, batch, weights)
            return total

        flat = flatten_params(params)
        for name, arr in flat.items():
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + eps
                lp = loss_at()
                arr[idx] = orig - eps
                lm = loss_at()
                arr[idx] = orig
                fd = (lp - lm) / (2 * eps)
                g = grads[name][idx]
                rel = abs(g - fd) / max(1.0, abs(g), abs(fd))
                if rel > max_rel:
                    max_rel = rel
                    worst = (trial, name, idx)
    return {"max_rel_err": max_rel, "tol": tol, "passed": max_rel <= tol,
            "worst": worst, "trials": trials}
