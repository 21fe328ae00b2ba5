"""Estimator-style wrapper around the windowed predictor.

Mirrors the scikit-learn conventions: constructor stores hyperparameters
verbatim, ``fit`` learns state on a corpus, ``predict`` maps sequences to
per-frame joint positions, and ``get_params`` / ``set_params`` expose the
hyperparameters for grid search and cloning.
"""

import inspect

from .encoding import TaskSpec, encode_task
from .errors import EmptyCorpus
from .evaluate import decode_global_predicted, predict_sequence
from .training import LossWeights, TrainConfig, train


class PoseCompletionRegressor:
    """Windowed GRU regressor from partially tracked joint streams to full
    per-frame joint positions."""

    def __init__(self, task="inside-out", window=27, fps=30.0, hidden=512,
                 mlp_hidden=(512, 512), learning_rate=1e-3, epochs=5,
                 batch_schedule=(256, 512, 1024, 1024, 1024), stride=1, seed=0,
                 loss_weights=None):
        self.task = task
        self.window = window
        self.fps = fps
        self.hidden = hidden
        self.mlp_hidden = mlp_hidden
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_schedule = batch_schedule
        self.stride = stride
        self.seed = seed
        self.loss_weights = loss_weights

    # -- scikit-learn parameter protocol --

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(f"invalid parameter {name!r} for "
                                 f"{type(self).__name__}")
            setattr(self, name, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"

    # -- fitting and prediction --

    def fit(self, corpus, resolved, log_fn=None):
        """Train on a list of (MotionSequence, OcclusionRecords-or-None) pairs.

        Sequences must already be at the model frame rate. Returns self.
        """
        if not corpus:
            raise EmptyCorpus("cannot fit on an empty corpus")
        config = TrainConfig(
            learning_rate=self.learning_rate, epochs=self.epochs,
            batch_schedule=tuple(self.batch_schedule), seed=self.seed,
            window=self.window, fps=self.fps, stride=self.stride,
            hidden=self.hidden, mlp_hidden=tuple(self.mlp_hidden))
        weights = self.loss_weights or LossWeights()
        self.params_, self.log_ = train(corpus, resolved, self.task,
                                        config=config, weights=weights,
                                        log_fn=log_fn)
        self.resolved_ = resolved
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise AttributeError(
                f"{type(self).__name__} instance is not fitted yet; call fit first")

    def predict(self, seq, records=None, frame="encoded"):
        """Per-frame predictions for one sequence.

        Returns (frame_indices, positions (N, n_out, 3)). ``frame`` selects the
        coordinate frame: "encoded" (head/wrist-local) or "global".
        """
        self._check_fitted()
        enc = encode_task(seq, records, self.resolved_,
                          TaskSpec(task=self.task, window=self.window, fps=self.fps))
        frames_idx, preds, _ = predict_sequence(self.params_, enc)
        if frame == "global":
            preds = decode_global_predicted(enc, preds, frames_idx, self.resolved_)
        elif frame != "encoded":
            raise ValueError(f"unknown frame {frame!r}")
        return frames_idx, preds
