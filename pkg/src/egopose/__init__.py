"""Egocentric pose completion: occlusion simulation on skeletal motion,
a windowed recurrent reconstruction model, and IK post-processing."""

__version__ = "0.1.0"

from .bvh import parse_bvh, write_bvh
from .encoding import TaskSpec, encode_task
from .errors import EgoposeError
from .estimator import PoseCompletionRegressor
from .evaluate import (EvalReport, Metrics, baseline_predict, compute_metrics,
                       run_evaluation, split_corpus)
from .ik import (IkConfig, IkProblem, IkTarget, MomentumSmoother, SolvedPose,
                 acceleration_metric, smooth_stream, solve_frame, solve_sequence)
from .model import (PredictorParams, forward_window, init_params, load_params,
                    save_params)
from .occlusion import (CameraModel, OcclusionRecords, Status, detect_contacts,
                        occlusion_stats, simulate_sequence)
from .profiles import PrimitiveSpec, SkeletonProfile
from .skeleton import (MotionSequence, Pose, Skeleton, forward_kinematics,
                       resample)
from .training import LossWeights, TrainConfig, gradient_check, train

__all__ = [
    "__version__", "parse_bvh", "write_bvh", "TaskSpec", "encode_task",
    "EgoposeError", "PoseCompletionRegressor", "EvalReport", "Metrics",
    "baseline_predict", "compute_metrics", "run_evaluation", "split_corpus",
    "IkConfig", "IkProblem", "IkTarget", "MomentumSmoother", "SolvedPose",
    "acceleration_metric", "smooth_stream", "solve_frame", "solve_sequence",
    "PredictorParams", "forward_window", "init_params", "load_params",
    "save_params", "CameraModel", "OcclusionRecords", "Status",
    "detect_contacts", "occlusion_stats", "simulate_sequence", "PrimitiveSpec",
    "SkeletonProfile", "MotionSequence", "Pose", "Skeleton",
    "forward_kinematics", "resample", "LossWeights", "TrainConfig",
    "gradient_check", "train",
]
