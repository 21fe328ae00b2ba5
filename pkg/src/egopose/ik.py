"""Inverse-kinematics post-processing.

Damped Gauss-Newton over joint rotations (and optionally root translation)
with bone lengths structurally fixed by the FK parameterization. Rotation
updates are exponential-map increments composed onto the local quaternions,
so no Euler singularities arise. Steps are accepted only when the residual
decreases (Levenberg adaptation of the damping factor); pure Gauss-Newton is
available behind a flag.
"""

from dataclasses import dataclass, field

import numpy as np

from . import quat
from .errors import NonFiniteJacobian, TooShort
from .skeleton import Pose, forward_kinematics


@dataclass
class IkTarget:
    joint: int
    position: np.ndarray
    weight: float = 1.0
    offset: np.ndarray | None = None  # fixed offset in the joint's local frame


@dataclass
class IkProblem:
    skeleton: object
    targets: list  # IkTarget; offset targets act as auxiliary end-effector locators
    initial: Pose

    def __post_init__(self):
        if not self.targets:
            raise ValueError("IK problem needs at least one target")
        if any(t.weight <= 0 for t in self.targets):
            raise ValueError("target weights must be positive")


@dataclass
class IkConfig:
    max_iterations: int = 50
    tol: float = 1e-6  # accept convergence when the residual decrease stalls
    damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 10.0
    step_clamp: float = 0.5  # radians per joint per iteration
    solve_root_translation: bool = True
    pure_gauss_newton: bool = False


@dataclass
class SolvedPose:
    pose: Pose
    residual: float  # RMS weighted target error, meters
    iterations: int


def _target_positions(skeleton, pose, targets):
    positions, rotations = forward_kinematics(skeleton, pose, with_rotations=True)
    out = np.empty((len(targets), 3))
    for i, t in enumerate(targets):
        p = positions[t.joint]
        if t.offset is not None:
            p = p + quat.rotate(rotations[t.joint], np.asarray(t.offset))
        out[i] = p
    return out, positions, rotations


def _residual(targets, reached):
    r = np.empty(3 * len(targets))
    for i, t in enumerate(targets):
        r[3 * i:3 * i + 3] = np.sqrt(t.weight) * (reached[i] - np.asarray(t.position))
    return r


def _ancestors_mask(skeleton):
    """mask[i, k] = rotating joint i moves point attached to joint k."""
    j = skeleton.n_joints
    mask = np.zeros((j, j), dtype=bool)
    for k in range(j):
        p = skeleton.parents[k]
        anc = k
        while anc >= 0:
            mask[anc, k] = True  # joint k's own rotation moves offset locators
            anc = skeleton.parents[anc]
    return mask


def _jacobian(skeleton, pose, targets, reached, positions, rotations, config, mask):
    """Geometric Jacobian: rotation columns by the cross-product rule, applied
    as perturbations in each joint's parent-global frame."""
    j = skeleton.n_joints
    n_rot_params = 3 * j
    n_params = n_rot_params + (3 if config.solve_root_translation else 0)
    jac = np.zeros((3 * len(targets), n_params))
    parent_rot = np.empty((j, 4))
    parent_rot[0] = quat.IDENTITY
    for i in range(1, j):
        parent_rot[i] = rotations[skeleton.parents[i]]
    axes = np.stack([quat.to_matrix(parent_rot[i]) for i in range(j)])  # (J,3,3) columns

    for ti, t in enumerate(targets):
        w = np.sqrt(t.weight)
        row = slice(3 * ti, 3 * ti + 3)
        moved_point = reached[ti]
        for i in range(j):
            if not mask[i, t.joint]:
                continue
            if i == t.joint and t.offset is None:
                continue  # a joint's own rotation does not move the joint itself
            arm = moved_point - positions[i]
            for a in range(3):
                axis = axes[i][:, a]
                jac[row, 3 * i + a] = w * np.cross(axis, arm)
        if config.solve_root_translation:
            jac[row, n_rot_params:] = w * np.eye(3)
    if not np.all(np.isfinite(jac)):
        raise NonFiniteJacobian("non-finite entries in the IK Jacobian")
    return jac


def _apply_step(skeleton, pose, delta, config):
    j = skeleton.n_joints
    rot = np.array(pose.rotations)
    for i in range(j):
        d = delta[3 * i:3 * i + 3]
        n = np.linalg.norm(d)
        if n > config.step_clamp:
            d = d * (config.step_clamp / n)
        if n == 0.0:
            continue
        # the Jacobian parameterizes joint i in its parent's global basis, so
        # the increment composes as a local pre-multiplication
        rot[i] = quat.normalize(quat.mul(quat.exp_map(d), rot[i]))
    root = np.array(pose.root_pos)
    if config.solve_root_translation:
        root = root + delta[3 * j:3 * j + 3]
    return Pose(root_pos=root, rotations=rot)


def solve_frame(problem, config=IkConfig()):
    """Damped Gauss-Newton solve of one frame."""
    skeleton = problem.skeleton
    pose = problem.initial
    mask = _ancestors_mask(skeleton)
    reached, positions, rotations = _target_positions(skeleton, pose, problem.targets)
    r = _residual(problem.targets, reached)
    cost = 0.5 * float(r @ r)
    lam = config.damping
    iterations = 0
    for _ in range(config.max_iterations):
        if np.sqrt(2 * cost / len(problem.targets)) < config.tol:
            break
        jac = _jacobian(skeleton, pose, problem.targets, reached, positions,
                        rotations, config, mask)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        if config.pure_gauss_newton:
            delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
        else:
            delta = np.linalg.solve(jtj + lam * np.eye(jtj.shape[0]), -jtr)
        candidate = _apply_step(skeleton, pose, delta, config)
        new_reached, new_positions, new_rotations = _target_positions(
            skeleton, candidate, problem.targets)
        new_r = _residual(problem.targets, new_reached)
        new_cost = 0.5 * float(new_r @ new_r)
        iterations += 1
        if new_cost < cost or config.pure_gauss_newton:
            improvement = cost - new_cost
            pose, r, cost = candidate, new_r, new_cost
            reached, positions, rotations = new_reached, new_positions, new_rotations
            lam = max(lam / config.damping_down, 1e-12)
            if improvement < config.tol ** 2:
                break
        else:
            lam *= config.damping_up
            if lam > 1e8:
                break
    rms = float(np.sqrt(np.mean(np.sum(
        (reached - np.stack([np.asarray(t.position) for t in problem.targets])) ** 2,
        axis=-1))))
    return SolvedPose(pose=pose, residual=rms, iterations=iterations)


def solve_sequence(skeleton, frame_targets, config=IkConfig(), initial=None):
    """Per-frame solves warm-started from the previous frame's solution."""
    solved = []
    pose = initial if initial is not None else skeleton.rest_pose()
    for f, targets in enumerate(frame_targets):
        problem = IkProblem(skeleton=skeleton, targets=targets, initial=pose)
        try:
            result = solve_frame(problem, config)
        except NonFiniteJacobian as exc:
            raise NonFiniteJacobian(f"frame {f}: {exc}") from exc
        solved.append(result)
        pose = result.pose
    return solved


# --- smoothing and the acceleration diagnostic ------------------------------

@dataclass
class MomentumSmoother:
    """Double-accumulator momentum filter:
    v <- beta*v + (1-beta)*(x - s); s <- s + v."""

    beta: float = 0.8
    s: np.ndarray | None = None
    v: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must be in [0, 1)")

    def step(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.s is None:
            self.s = x.copy()
            self.v = np.zeros_like(x)
            return self.s.copy()
        self.v = self.beta * self.v + (1.0 - self.beta) * (x - self.s)
        self.s = self.s + self.v
        return self.s.copy()


def smooth_stream(positions, beta=0.8):
    """Apply the momentum smoother along the frame axis of (F, ...) data."""
    smoother = MomentumSmoother(beta=beta)
    return np.stack([smoother.step(x) for x in positions])


def acceleration_metric(positions, fps, threshold=9.0):
    """Fraction of (joint, frame) samples whose second central difference
    exceeds ``threshold`` m/s^2 (strictly)."""
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape[0] < 3:
        raise TooShort("need at least 3 frames for the acceleration metric")
    acc = (positions[2:] - 2.0 * positions[1:-1] + positions[:-2]) * fps * fps
    mag = np.linalg.norm(acc, axis=-1)
    return float(np.mean(mag > threshold))
