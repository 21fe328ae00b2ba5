"""Windowed recurrent predictor: GRU backbone, skip connection, and two MLP
heads (joint positions and occlusion logits).

Forward and reverse passes are explicit numpy; no autograd. All math is
float64 so gradients can be checked against central finite differences.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import LayoutHashMismatch


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class GruParams:
    Wz: np.ndarray
    Wr: np.ndarray
    Wy: np.ndarray
    Uz: np.ndarray
    Ur: np.ndarray
    Uy: np.ndarray
    bz: np.ndarray
    br: np.ndarray
    by: np.ndarray


@dataclass
class MlpParams:
    """Two tanh hidden layers followed by a linear output layer."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray


@dataclass
class PredictorParams:
    gru: GruParams
    pos_head: MlpParams
    occ_head: MlpParams | None
    meta: dict = field(default_factory=dict)

    @property
    def window(self):
        return self.meta["window"]

    @property
    def input_dim(self):
        return self.gru.Wz.shape[1]

    @property
    def hidden(self):
        return self.gru.Wz.shape[0]

    @property
    def output_dim(self):
        return self.pos_head.W3.shape[0]

    @property
    def n_groups(self):
        return self.occ_head.W3.shape[0] if self.occ_head is not None else 0


_GRU_KEYS = ["Wz", "Wr", "Wy", "Uz", "Ur", "Uy", "bz", "br", "by"]
_MLP_KEYS = ["W1", "b1", "W2", "b2", "W3", "b3"]


def flatten_params(params):
    """Ordered name -> array view of the parameter tree."""
    out = {}
    for k in _GRU_KEYS:
        out[f"gru.{k}"] = getattr(params.gru, k)
    for k in _MLP_KEYS:
        out[f"pos.{k}"] = getattr(params.pos_head, k)
    if params.occ_head is not None:
        for k in _MLP_KEYS:
            out[f"occ.{k}"] = getattr(params.occ_head, k)
    return out


def zeros_like_grads(params):
    return {k: np.zeros_like(v) for k, v in flatten_params(params).items()}


def layout_hash(meta):
    """Stable hash of the encoding metadata; guards weight-file compatibility."""
    layout = meta.get("layout", {})
    blob = json.dumps(layout, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def init_params(input_dim, output_dim, n_groups=0, hidden=512, mlp_hidden=(512, 512),
                window=27, fps=30.0, seed=0, layout=None):
    """Deterministic initialization: weights uniform in ±1/sqrt(fan_in),
    biases zero."""
    rng = np.random.Generator(np.random.PCG64(seed))

    def mat(rows, cols, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(rows, cols))

    gru = GruParams(
        Wz=mat(hidden, input_dim, input_dim),
        Wr=mat(hidden, input_dim, input_dim),
        Wy=mat(hidden, input_dim, input_dim),
        Uz=mat(hidden, hidden, hidden),
        Ur=mat(hidden, hidden, hidden),
        Uy=mat(hidden, hidden, hidden),
        bz=np.zeros(hidden), br=np.zeros(hidden), by=np.zeros(hidden),
    )
    h1, h2 = mlp_hidden
    skip = hidden + input_dim

    def mlp(out_dim):
        return MlpParams(
            W1=mat(h1, skip, skip), b1=np.zeros(h1),
            W2=mat(h2, h1, h1), b2=np.zeros(h2),
            W3=mat(out_dim, h2, h2), b3=np.zeros(out_dim),
        )

    meta = {
        "version": 1,
        "window": int(window),
        "fps": float(fps),
        "hidden": int(hidden),
        "mlp_hidden": [int(h1), int(h2)],
        "input_dim": int(input_dim),
        "output_dim": int(output_dim),
        "n_groups": int(n_groups),
        "seed": int(seed),
        "layout": layout or {},
    }
    return PredictorParams(
        gru=gru,
        pos_head=mlp(output_dim),
        occ_head=mlp(n_groups) if n_groups > 0 else None,
        meta=meta,
    )


def gru_step(gru, x, y_prev):
    """One recurrence step; broadcasts over a leading batch dimension."""
    z = _sigmoid(x @ gru.Wz.T + y_prev @ gru.Uz.T + gru.bz)
    r = _sigmoid(x @ gru.Wr.T + y_prev @ gru.Ur.T + gru.br)
    y_hat = np.tanh(x @ gru.Wy.T + (r * y_prev) @ gru.Uy.T + gru.by)
    return (1.0 - z) * y_prev + z * y_hat


def _mlp_forward(mlp, inp):
    h1 = np.tanh(inp @ mlp.W1.T + mlp.b1)
    h2 = np.tanh(h1 @ mlp.W2.T + mlp.b2)
    out = h2 @ mlp.W3.T + mlp.b3
    return out, (inp, h1, h2)


def _mlp_backward(mlp, cache, d_out, grads, prefix):
    inp, h1, h2 = cache
    grads[f"{prefix}.W3"] += d_out.T @ h2
    grads[f"{prefix}.b3"] += d_out.sum(axis=0)
    dh2 = (d_out @ mlp.W3) * (1.0 - h2 * h2)
    grads[f"{prefix}.W2"] += dh2.T @ h1
    grads[f"{prefix}.b2"] += dh2.sum(axis=0)
    dh1 = (dh2 @ mlp.W2) * (1.0 - h1 * h1)
    grads[f"{prefix}.W1"] += dh1.T @ inp
    grads[f"{prefix}.b1"] += dh1.sum(axis=0)
    return dh1 @ mlp.W1  # gradient w.r.t. the concatenated input


def forward_window(params, window, with_cache=False):
    """Run the window through the GRU and both heads.

    ``window`` is (T, D) or batched (B, T, D). Returns (positions, logits);
    logits is None when the model has no occlusion head. The hidden state
    starts at zero for every window.
    """
    x = np.asarray(window, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    b, t, d = x.shape
    if t != params.window or d != params.input_dim:
        raise ValueError(f"window shape {(t, d)} does not match model "
                         f"({params.window}, {params.input_dim})")
    gru = params.gru
    y = np.zeros((b, params.hidden))
    steps = []
    for ti in range(t):
        xt = x[:, ti]
        z = _sigmoid(xt @ gru.Wz.T + y @ gru.Uz.T + gru.bz)
        r = _sigmoid(xt @ gru.Wr.T + y @ gru.Ur.T + gru.br)
        y_hat = np.tanh(xt @ gru.Wy.T + (r * y) @ gru.Uy.T + gru.by)
        y_new = (1.0 - z) * y + z * y_hat
        steps.append((y, z, r, y_hat))
        y = y_new
    skip = np.concatenate([y, x[:, -1]], axis=-1)
    pos, pos_cache = _mlp_forward(params.pos_head, skip)
    logits, occ_cache = (None, None)
    if params.occ_head is not None:
        logits, occ_cache = _mlp_forward(params.occ_head, skip)
    if with_cache:
        cache = (x, steps, pos_cache, occ_cache)
        return pos, logits, cache
    if single:
        return pos[0], (logits[0] if logits is not None else None)
    return pos, logits


def backward_window(params, cache, d_pos, d_logits=None):
    """Reverse-mode gradients of a scalar loss given gradients at the head
    outputs. Returns a flat name -> array gradient dict."""
    x, steps, pos_cache, occ_cache = cache
    grads = zeros_like_grads(params)
    d_skip = _mlp_backward(params.pos_head, pos_cache, d_pos, grads, "pos")
    if params.occ_head is not None and d_logits is not None:
        d_skip = d_skip + _mlp_backward(params.occ_head, occ_cache, d_logits, grads, "occ")
    h = params.hidden
    dy = d_skip[:, :h]
    gru = params.gru
    for ti in range(len(steps) - 1, -1, -1):
        y_prev, z, r, y_hat = steps[ti]
        xt = x[:, ti]
        dz = dy * (y_hat - y_prev)
        d_yhat = dy * z
        dy_prev = dy * (1.0 - z)
        da_y = d_yhat * (1.0 - y_hat * y_hat)
        grads["gru.Wy"] += da_y.T @ xt
        grads["gru.Uy"] += da_y.T @ (r * y_prev)
        grads["gru.by"] += da_y.sum(axis=0)
        back_y = da_y @ gru.Uy
        dr = back_y * y_prev
        dy_prev = dy_prev + back_y * r
        da_z = dz * z * (1.0 - z)
        grads["gru.Wz"] += da_z.T @ xt
        grads["gru.Uz"] += da_z.T @ y_prev
        grads["gru.bz"] += da_z.sum(axis=0)
        dy_prev = dy_prev + da_z @ gru.Uz
        da_r = dr * r * (1.0 - r)
        grads["gru.Wr"] += da_r.T @ xt
        grads["gru.Ur"] += da_r.T @ y_prev
        grads["gru.br"] += da_r.sum(axis=0)
        dy_prev = dy_prev + da_r @ gru.Ur
        dy = dy_prev
    return grads


def apply_grads(params, update):
    """In-place parameter update: p += update[name]."""
    for name, arr in flatten_params(params).items():
        arr += update[name]


# --- weight file ------------------------------------------------------------

_MAGIC = b"EPWT"


def save_params(params, path):
    """Versioned container: header (dims, layout hash, seed) then the arrays
    row-major as 64-bit floats, in fixed key order."""
    meta = dict(params.meta)
    meta["layout_hash"] = layout_hash(params.meta)
    header = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for _, arr in flatten_params(params).items():
            f.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def load_params(path, expect_layout=None):
    """Load a weight file; refuses files whose layout hash does not match the
    expected encoding layout."""
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError("not a predictor weight file")
        (hlen,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(hlen).decode())
        stored_hash = meta.pop("layout_hash")
        if layout_hash(meta) != stored_hash:
            raise LayoutHashMismatch("weight file layout hash is corrupt")
        if expect_layout is not None:
            if layout_hash({"layout": expect_layout}) != stored_hash:
                raise LayoutHashMismatch(
                    "weight file layout does not match the active profile")
        params = init_params(
            input_dim=meta["input_dim"], output_dim=meta["output_dim"],
            n_groups=meta["n_groups"], hidden=meta["hidden"],
            mlp_hidden=tuple(meta["mlp_hidden"]), window=meta["window"],
            fps=meta["fps"], seed=meta["seed"], layout=meta["layout"])
        params.meta = meta
        for _, arr in flatten_params(params).items():
            data = f.read(arr.size * 8)
            arr[...] = np.frombuffer(data, dtype=np.float64).reshape(arr.shape)
    return params
