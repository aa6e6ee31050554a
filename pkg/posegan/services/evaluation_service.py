"""Trajectory evaluation: KITTI odometry metric, Umeyama alignment, trajectory files"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from posegan.core.config import settings
from posegan.core.exceptions import AlignmentError, DatasetError, InvalidPoseError
from posegan.schemas.evaluation import LengthError, MetricReport
from posegan.services.geometry import Pose
from posegan.services.kitti_io import read_poses, write_poses

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SEGMENT_LENGTHS = (100, 200, 300, 400, 500, 600, 700, 800)
DEVKIT_SEGMENT_STRIDE = 10

# (t_rel %, r_rel deg/100m) per KITTI sequence; None where the method lost track
REFERENCE_RESULTS: Dict[str, Dict[str, Optional[Tuple[float, float]]]] = {
    "semi_supervised": {
        "00": (10.54, 3.22), "01": (24.94, 3.54), "02": (18.28, 2.74), "03": (8.96, 5.70),
        "04": (14.14, 3.24), "05": (7.01, 3.85), "06": (7.87, 2.19), "07": (7.71, 3.79),
        "08": (9.04, 3.85), "09": (10.49, 4.91), "10": (10.89, 5.03),
    },
    "only_vo": {
        "00": (24.04, 4.84), "01": (26.34, 4.07), "02": (14.50, 3.89), "03": (7.68, 3.14),
        "04": (14.81, 3.67), "05": (9.18, 2.51), "06": (11.26, 2.97), "07": (6.52, 3.74),
        "08": (9.94, 3.59), "09": (13.65, 2.85), "10": (12.91, 5.54),
    },
    "simultaneous": {
        "00": (12.03, 3.03), "01": (45.29, 3.21), "02": (32.70, 4.45), "03": (10.89, 3.97),
        "04": (17.04, 2.54), "05": (9.22, 2.64), "06": (30.16, 6.68), "07": (18.10, 4.78),
        "08": (15.14, 3.81), "09": (36.46, 4.83), "10": (17.44, 6.64),
    },
    "semi_supervised_reprojection": {
        "00": (11.01, 4.41), "01": (23.31, 3.27), "02": (16.11, 2.88), "03": (9.68, 3.41),
        "04": (14.91, 3.71), "05": (7.18, 3.91), "06": (7.56, 2.37), "07": (7.82, 3.74),
        "08": (9.41, 3.19), "09": (10.5, 3.85), "10": (10.97, 5.41),
    },
    "orb_slam2_mono": {
        "00": (23.01, 0.30), "01": None, "02": (6.63, 0.24), "03": (1.12, 0.19),
        "04": (0.70, 0.22), "05": (12.34, 0.22), "06": (17.71, 0.27), "07": (11.10, 0.36),
        "08": (12.69, 0.30), "09": None, "10": (3.90, 0.30),
    },
    "orb_slam2_stereo": {
        "00": (0.88, 0.30), "01": (1.39, 0.23), "02": (0.81, 0.28), "03": (0.73, 0.17),
        "04": (0.48, 0.15), "05": (0.61, 0.25), "06": (0.76, 0.23), "07": (0.88, 0.47),
        "08": (1.05, 0.32), "09": (0.83, 0.26), "10": (0.57, 0.26),
    },
}


@dataclass(frozen=True)
class Trajectory:
    """Ordered camera poses (KITTI ``T_wk``) with optional timestamps"""

    poses: Tuple[Pose, ...]
    timestamps: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise DatasetError("A trajectory needs at least one pose")
        for k, pose in enumerate(poses):
            try:
                pose.check(settings.GROUND_TRUTH_TOLERANCE)
            except InvalidPoseError as e:
                raise InvalidPoseError(f"Pose {k}: {e.message}", index=k, **e.details)
        if self.timestamps is not None and len(self.timestamps) != len(poses):
            raise DatasetError(f"{len(self.timestamps)} timestamps for {len(poses)} poses")
        object.__setattr__(self, "poses", poses)

    def __len__(self) -> int:
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses])

    def matrices(self) -> np.ndarray:
        return np.array([p.matrix() for p in self.poses])

    def path_length(self) -> float:
        return float(trajectory_distances(self.positions())[-1])

    def transformed(self, scale: float, rotation: np.ndarray, translation: np.ndarray) -> "Trajectory":
        """Apply ``p -> s R p + t`` to every camera center, ``R`` to every orientation"""
        return Trajectory(
            tuple(Pose(rotation @ p.rotation, scale * rotation @ p.translation + translation) for p in self.poses),
            self.timestamps,
        )


def _as_trajectory(value) -> Trajectory:
    return value if isinstance(value, Trajectory) else Trajectory(tuple(value))


def trajectory_distances(positions: np.ndarray) -> np.ndarray:
    """Cumulative path length at every frame"""
    steps = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _rigid_inverse(m: np.ndarray) -> np.ndarray:
    inv = np.zeros_like(m)
    rt = np.swapaxes(m[:, :3, :3], 1, 2)
    inv[:, :3, :3] = rt
    inv[:, :3, 3] = -np.einsum("nij,nj->ni", rt, m[:, :3, 3])
    inv[:, 3, 3] = 1.0
    return inv


def _rotation_angles(r: np.ndarray) -> np.ndarray:
    cos_angle = 0.5 * (np.trace(r, axis1=1, axis2=2) - 1.0)
    return np.arccos(np.clip(cos_angle, -1.0, 1.0))


def segment_errors(
    estimate: Trajectory,
    ground_truth: Trajectory,
    length: float,
    segment_stride: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Translational (m) and rotational (rad) errors of every subsequence of ``length``"""
    dist = trajectory_distances(ground_truth.positions())
    starts = np.arange(0, len(ground_truth), segment_stride)
    ends = np.searchsorted(dist, dist[starts] + length, side="left")
    valid = ends < len(dist)
    starts, ends = starts[valid], ends[valid]
    if len(starts) == 0:
        return np.zeros(0), np.zeros(0)

    gt = ground_truth.matrices()
    est = estimate.matrices()
    gt_rel = _rigid_inverse(gt[starts]) @ gt[ends]
    est_rel = _rigid_inverse(est[starts]) @ est[ends]
    error = _rigid_inverse(gt_rel) @ est_rel
    t_err = np.linalg.norm(error[:, :3, 3], axis=1)
    r_err = _rotation_angles(error[:, :3, :3])
    exact = np.all(gt_rel == est_rel, axis=(1, 2))
    t_err[exact] = 0.0
    r_err[exact] = 0.0
    return t_err, r_err


def kitti_metric(
    estimate: Union[Trajectory, Sequence[Pose]],
    ground_truth: Union[Trajectory, Sequence[Pose]],
    segment_stride: int = 1,
    lengths: Sequence[float] = SEGMENT_LENGTHS,
) -> MetricReport:
    """Average relative error over all subsequences of 100..800 m.

    Each subsequence error is divided by its length; the percentages are then
    averaged over all subsequences of all lengths. A ground truth shorter
    than the smallest length yields an empty report.
    """
    estimate, ground_truth = _as_trajectory(estimate), _as_trajectory(ground_truth)
    if len(estimate) != len(ground_truth):
        raise DatasetError(f"Estimate has {len(estimate)} poses, ground truth {len(ground_truth)}")
    if segment_stride < 1:
        raise DatasetError(f"segment_stride must be >= 1, got {segment_stride}")

    t_all: List[np.ndarray] = []
    r_all: List[np.ndarray] = []
    per_length: Dict[int, LengthError] = {}
    for length in lengths:
        t_err, r_err = segment_errors(estimate, ground_truth, length, segment_stride)
        if len(t_err) == 0:
            continue
        t_norm = t_err / length
        r_norm = r_err / length
        t_all.append(t_norm)
        r_all.append(r_norm)
        per_length[int(length)] = LengthError(
            length=length,
            t_err=float(np.mean(t_norm) * 100.0),
            r_err=float(np.degrees(np.mean(r_norm)) * 100.0),
            segments=len(t_err),
        )
    if not t_all:
        logger.warning(
            f"Ground truth path of {ground_truth.path_length():.1f} m is shorter than {min(lengths)} m; "
            "metric is undefined"
        )
        return MetricReport()
    t = np.concatenate(t_all)
    r = np.concatenate(r_all)
    return MetricReport(
        t_rel=float(np.mean(t) * 100.0),
        r_rel=float(np.degrees(np.mean(r)) * 100.0),
        segments=len(t),
        per_length=per_length,
    )


@dataclass
class Alignment:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray
    aligned: Optional[Trajectory]

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation


def umeyama(source: np.ndarray, target: np.ndarray, with_scale: bool = True) -> Tuple[float, np.ndarray, np.ndarray]:
    """Least-squares ``(s, R, t)`` with ``target ~ s R source + t``; never returns a reflection"""
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if source.shape != target.shape or source.ndim != 2 or source.shape[1] != 3:
        raise AlignmentError(f"Point sets must both be (N, 3), got {source.shape} and {target.shape}")
    n = source.shape[0]
    if n < 3:
        raise AlignmentError(f"Need at least 3 points, got {n}")
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    s0 = source - mu_s
    t0 = target - mu_t
    for name, centered in (("estimate", s0), ("ground truth", t0)):
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[0] == 0.0 or sv[1] <= 1e-10 * sv[0]:
            raise AlignmentError(f"{name} positions are collinear or coincident")

    cov = t0.T @ s0 / n
    u, d, vt = np.linalg.svd(cov)
    sign = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2, 2] = -1.0
    rotation = u @ sign @ vt
    if with_scale:
        var_s = np.sum(s0 ** 2) / n
        scale = float(np.trace(np.diag(d) @ sign) / var_s)
    else:
        scale = 1.0
    translation = mu_t - scale * rotation @ mu_s
    return scale, rotation, translation


def umeyama_align(
    estimate: Union[Trajectory, Sequence[Pose]],
    ground_truth: Union[Trajectory, Sequence[Pose]],
    with_scale: bool = True,
) -> Alignment:
    """Sim(3) (or SE(3) with ``with_scale=False``) alignment of camera centers"""
    estimate, ground_truth = _as_trajectory(estimate), _as_trajectory(ground_truth)
    if len(estimate) != len(ground_truth):
        raise AlignmentError(f"Estimate has {len(estimate)} poses, ground truth {len(ground_truth)}")
    scale, rotation, translation = umeyama(estimate.positions(), ground_truth.positions(), with_scale)
    logger.debug(f"Umeyama alignment: scale={scale:.6f}")
    return Alignment(scale, rotation, translation, estimate.transformed(scale, rotation, translation))


def evaluate_sequence(
    estimate: Union[Trajectory, Sequence[Pose]],
    ground_truth: Union[Trajectory, Sequence[Pose]],
    align: Optional[str] = None,
    segment_stride: int = 1,
) -> MetricReport:
    """KITTI metric, optionally after ``sim3`` or ``se3`` alignment"""
    estimate, ground_truth = _as_trajectory(estimate), _as_trajectory(ground_truth)
    scale = None
    if align in ("sim3", "se3"):
        alignment = umeyama_align(estimate, ground_truth, with_scale=align == "sim3")
        estimate, scale = alignment.aligned, alignment.scale
    elif align not in (None, "none"):
        raise AlignmentError(f"Unknown alignment {align!r}; use sim3, se3 or none")
    report = kitti_metric(estimate, ground_truth, segment_stride)
    return report.model_copy(update={"aligned": align if align not in (None, "none") else None, "scale": scale})


def export_trajectory(trajectory: Union[Trajectory, Sequence[Pose]], path: PathLike) -> Path:
    """KITTI pose format: 12 row-major values of the 3x4 matrix per line"""
    return write_poses(_as_trajectory(trajectory).poses, path)


def load_trajectory(path: PathLike) -> Trajectory:
    return Trajectory(tuple(read_poses(path)))


def reference_row(method: str, sequence: str) -> Optional[Tuple[float, float]]:
    """Published (t_rel, r_rel) of ``method`` on a KITTI sequence"""
    if method not in REFERENCE_RESULTS:
        raise KeyError(f"Unknown method {method!r}; known: {', '.join(sorted(REFERENCE_RESULTS))}")
    return REFERENCE_RESULTS[method].get(sequence)
