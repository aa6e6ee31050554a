"""KITTI odometry file formats: pose files, calibration, image layout"""
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from posegan.core.config import settings
from posegan.core.exceptions import DatasetError, InvalidPoseError
from posegan.schemas.dataset import CameraIntrinsics
from posegan.services.geometry import Pose, orthonormalize

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

LEFT_CAMERA_DIR = "image_0"


def parse_pose_line(line: str, line_no: int = 0) -> Pose:
    values = line.split()
    if len(values) != 12:
        raise DatasetError(f"Line {line_no}: expected 12 values, got {len(values)}")
    try:
        matrix = np.array([float(v) for v in values]).reshape(3, 4)
    except ValueError as e:
        raise DatasetError(f"Line {line_no}: {e}")
    return Pose.from_matrix(matrix)


def read_poses(path: PathLike, tol: float = None) -> List[Pose]:
    """Read a KITTI pose file (row-major 3x4 per line).

    Rotations are checked at the ground-truth tolerance and then projected
    onto SO(3) so downstream math can work at the tight internal tolerance.
    """
    tol = settings.GROUND_TRUTH_TOLERANCE if tol is None else tol
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"Pose file not found: {path}", path=str(path))
    poses = []
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            pose = parse_pose_line(line, line_no)
            try:
                pose.check(tol)
            except InvalidPoseError as e:
                raise InvalidPoseError(f"{path}:{line_no}: {e.message}", **e.details)
            poses.append(Pose(orthonormalize(pose.rotation), pose.translation))
    if not poses:
        raise DatasetError(f"Pose file is empty: {path}", path=str(path))
    return poses


def format_pose(pose: Pose) -> str:
    """One KITTI line; ``%.17g`` keeps floats exact and prints 1.0 as ``1``"""
    values = pose.matrix()[:3, :].reshape(-1) + 0.0  # + 0.0 turns -0.0 into 0.0
    return " ".join(f"{v:.17g}" for v in values)


def write_poses(poses: Sequence[Pose], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for pose in poses:
            f.write(format_pose(pose) + "\n")
    return path


def read_calibration(path: PathLike) -> CameraIntrinsics:
    """Intrinsics of camera 0 and the stereo baseline from ``calib.txt``"""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"Calibration file not found: {path}", path=str(path))
    projections: Dict[str, np.ndarray] = {}
    with open(path) as f:
        for line in f:
            if ":" not in line:
                continue
            key, _, rest = line.partition(":")
            values = rest.split()
            if len(values) == 12:
                projections[key.strip()] = np.array([float(v) for v in values]).reshape(3, 4)
    if "P0" not in projections:
        raise DatasetError(f"No P0 projection matrix in {path}", path=str(path))
    p0 = projections["P0"]
    baseline = None
    if "P1" in projections:
        p1 = projections["P1"]
        baseline = float(-p1[0, 3] / p1[0, 0])
        if baseline <= 0:
            logger.warning(f"{path}: non-positive stereo baseline {baseline}, ignoring it")
            baseline = None
    return CameraIntrinsics(
        fx=float(p0[0, 0]), fy=float(p0[1, 1]), cx=float(p0[0, 2]), cy=float(p0[1, 2]), baseline=baseline
    )


class KittiOdometry:
    """Read access to a KITTI odometry root (``sequences/`` and ``poses/``)"""

    def __init__(self, root: PathLike):
        self.root = Path(root)
        if not (self.root / "sequences").is_dir():
            raise DatasetError(f"Not a KITTI odometry root (missing sequences/): {self.root}")

    def sequence_dir(self, seq: str) -> Path:
        return self.root / "sequences" / seq

    def image_paths(self, seq: str) -> List[Path]:
        image_dir = self.sequence_dir(seq) / LEFT_CAMERA_DIR
        if not image_dir.is_dir():
            raise DatasetError(f"Sequence {seq}: missing {image_dir}", sequence=seq)
        paths = sorted(image_dir.glob("*.png"))
        if not paths:
            raise DatasetError(f"Sequence {seq}: no images in {image_dir}", sequence=seq)
        return paths

    def poses(self, seq: str) -> List[Pose]:
        path = self.root / "poses" / f"{seq}.txt"
        if not path.exists():
            raise DatasetError(f"Sequence {seq}: missing ground truth {path}", sequence=seq)
        return read_poses(path)

    def intrinsics(self, seq: str) -> CameraIntrinsics:
        return read_calibration(self.sequence_dir(seq) / "calib.txt")
