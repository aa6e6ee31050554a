"""Point sets for the reprojection loss: stereo correspondences and DLT triangulation"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from posegan.core.exceptions import DatasetError, EmptyPointSetError, TriangulationError
from posegan.schemas.dataset import CameraIntrinsics

logger = logging.getLogger(__name__)

# Rectified pairs keep matches on the same row up to this many pixels
MAX_ROW_OFFSET = 2.0
# Ratio of the two smallest singular values below which the system is rank deficient
MIN_SINGULAR_RATIO = 1e-12


@dataclass(frozen=True)
class Correspondence:
    """Same scene point seen in the left and right rectified images"""

    left_px: Tuple[float, float]
    right_px: Tuple[float, float]

    @property
    def disparity(self) -> float:
        return self.left_px[0] - self.right_px[0]

    @classmethod
    def from_row(cls, row: Sequence[float]) -> "Correspondence":
        lx, ly, rx, ry = (float(v) for v in row)
        return cls((lx, ly), (rx, ry))


class CorrespondenceProvider(Protocol):
    def correspondences(self, frame: int) -> List[Correspondence]:
        ...


def stereo_projections(K: CameraIntrinsics, baseline: float) -> Tuple[np.ndarray, np.ndarray]:
    """Left ``K[I|0]`` and right ``K[I|(-b,0,0)]`` projection matrices"""
    k = K.matrix()
    left = k @ np.hstack([np.eye(3), np.zeros((3, 1))])
    right = k @ np.hstack([np.eye(3), np.array([[-baseline], [0.0], [0.0]])])
    return left, right


def project_stereo(point, K: CameraIntrinsics, baseline: float) -> Correspondence:
    """Pixels of a left-camera point in both rectified views"""
    p = np.append(np.asarray(point, dtype=np.float64).reshape(3), 1.0)
    if p[2] <= 0:
        raise TriangulationError(f"Point {p[:3].tolist()} is behind the camera")
    pixels = []
    for proj in stereo_projections(K, baseline):
        h = proj @ p
        pixels.append((float(h[0] / h[2]), float(h[1] / h[2])))
    return Correspondence(pixels[0], pixels[1])


def triangulate_dlt(c: Correspondence, K: CameraIntrinsics, baseline: float) -> np.ndarray:
    """Linear triangulation of one rectified stereo match.

    Each view contributes ``u p3 - p1`` and ``v p3 - p2``; the homogeneous
    point is the right singular vector of the smallest singular value.
    """
    if baseline is None or baseline <= 0:
        raise TriangulationError(f"Invalid stereo baseline {baseline}")
    if c.disparity <= 0:
        raise TriangulationError(f"Non-positive disparity {c.disparity:.4f}", disparity=c.disparity)
    row_offset = abs(c.left_px[1] - c.right_px[1])
    if row_offset > MAX_ROW_OFFSET:
        raise TriangulationError(f"Match is {row_offset:.2f} px off the epipolar line", row_offset=row_offset)

    rows = []
    for proj, (u, v) in zip(stereo_projections(K, baseline), (c.left_px, c.right_px)):
        rows.append(u * proj[2] - proj[0])
        rows.append(v * proj[2] - proj[1])
    a = np.array(rows)
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    _, s, vt = np.linalg.svd(a)
    if s[-2] < MIN_SINGULAR_RATIO * s[0]:
        raise TriangulationError("Degenerate DLT system")
    x = vt[-1]
    if abs(x[3]) < MIN_SINGULAR_RATIO * np.linalg.norm(x):
        raise TriangulationError("Triangulated point lies at infinity")
    point = x[:3] / x[3]
    if point[2] <= 0:
        raise TriangulationError(f"Triangulated depth {point[2]:.4f} is not positive")
    return point


def build_point_set(
    correspondences: Sequence[Correspondence],
    K: CameraIntrinsics,
    baseline: float,
    max_points: int = 200,
    seed: int = 0,
) -> np.ndarray:
    """Triangulate every match, drop failures, subsample uniformly to ``max_points``"""
    if not correspondences:
        raise EmptyPointSetError("No correspondences given")
    points = []
    failures = 0
    for c in correspondences:
        try:
            points.append(triangulate_dlt(c, K, baseline))
        except TriangulationError:
            failures += 1
    if failures:
        logger.debug(f"Dropped {failures}/{len(correspondences)} correspondences")
    if not points:
        raise EmptyPointSetError(f"All {len(correspondences)} correspondences failed triangulation")
    points = np.array(points)
    if len(points) > max_points:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(points), size=max_points, replace=False))
        points = points[keep]
    return points


class FileCorrespondenceProvider:
    """Precomputed matches, one JSON line per frame: ``{"frame": int, "matches": [[lx, ly, rx, ry], ...]}``"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        if not self.path.exists():
            raise DatasetError(f"Correspondence file not found: {self.path}", path=str(self.path))
        self._matches: Dict[int, List[Correspondence]] = {}
        with open(self.path) as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    matches = [Correspondence.from_row(row) for row in record["matches"]]
                    self._matches[int(record["frame"])] = matches
                except (KeyError, ValueError, TypeError) as e:
                    raise DatasetError(f"{self.path}:{line_no}: malformed correspondence record ({e})")

    def correspondences(self, frame: int) -> List[Correspondence]:
        return self._matches.get(frame, [])


class SyntheticCorrespondenceProvider:
    """Random scene points projected into both rectified cameras"""

    def __init__(
        self,
        K: CameraIntrinsics,
        baseline: float,
        n_points: int = 300,
        depth_range: Tuple[float, float] = (2.0, 80.0),
        seed: int = 0,
        noise_px: float = 0.0,
    ):
        self.K = K
        self.baseline = baseline
        self.n_points = n_points
        self.depth_range = depth_range
        self.seed = seed
        self.noise_px = noise_px

    def points(self, frame: int) -> np.ndarray:
        """Ground-truth points of ``frame`` (left camera coordinates)"""
        rng = np.random.default_rng([self.seed, frame])
        z = rng.uniform(*self.depth_range, size=self.n_points)
        u = rng.uniform(0.0, 2.0 * self.K.cx, size=self.n_points)
        v = rng.uniform(0.0, 2.0 * self.K.cy, size=self.n_points)
        x = (u - self.K.cx) * z / self.K.fx
        y = (v - self.K.cy) * z / self.K.fy
        return np.stack([x, y, z], axis=1)

    def correspondences(self, frame: int) -> List[Correspondence]:
        rng: Optional[np.random.Generator] = None
        if self.noise_px > 0:
            rng = np.random.default_rng([self.seed, frame, 1])
        matches = []
        for point in self.points(frame):
            c = project_stereo(point, self.K, self.baseline)
            if rng is not None:
                dl, dr = rng.normal(0.0, self.noise_px, size=(2, 2))
                c = Correspondence(
                    (c.left_px[0] + dl[0], c.left_px[1] + dl[1]),
                    (c.right_px[0] + dr[0], c.right_px[1] + dr[1]),
                )
            matches.append(c)
        return matches
