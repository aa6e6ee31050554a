"""Rigid-body and quaternion math.

Conventions:
    * ``Pose`` maps points of its own frame into the parent frame, the way KITTI
      stores ``T_wk``; composition is ``(a @ b).apply(p) == a.apply(b.apply(p))``.
    * Quaternions are stored ``(w, x, y, z)`` with canonical sign ``w >= 0``;
      when ``w`` vanishes the first nonzero vector component is made positive.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from posegan.core.config import settings
from posegan.core.exceptions import InvalidPoseError

logger = logging.getLogger(__name__)

# Reflection across the camera's y-z plane (horizontal image flip)
MIRROR_MATRIX = np.diag([-1.0, 1.0, 1.0])
MIRROR_MATRIX.setflags(write=False)

_SIGN_EPS = 1e-12


def _frozen(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=np.float64).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pose:
    """Element of SE(3): rotation (3x3) and translation (meters)"""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix) -> "Pose":
        """Build from a 4x4 homogeneous or 3x4 KITTI matrix"""
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape not in ((4, 4), (3, 4)):
            raise InvalidPoseError(f"Expected 3x4 or 4x4 matrix, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -(rt @ self.translation))

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    __matmul__ = compose

    def apply(self, points) -> np.ndarray:
        """Transform (3,) or (N, 3) points"""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def orthogonality_error(self) -> float:
        return float(np.max(np.abs(self.rotation.T @ self.rotation - np.eye(3))))

    def check(self, tol: Optional[float] = None) -> "Pose":
        """Raise InvalidPoseError unless R^T R = I and det R = 1 within ``tol``"""
        tol = settings.POSE_TOLERANCE if tol is None else tol
        if not (np.all(np.isfinite(self.rotation)) and np.all(np.isfinite(self.translation))):
            raise InvalidPoseError("Pose contains non-finite values")
        ortho = self.orthogonality_error()
        det = float(np.linalg.det(self.rotation))
        if ortho > tol or abs(det - 1.0) > tol:
            raise InvalidPoseError(
                f"Rotation is not in SO(3): |R^T R - I| = {ortho:.3e}, det = {det:.12f}",
                orthogonality_error=ortho,
                determinant=det,
                tolerance=tol,
            )
        return self

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0.0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class MotionLabel:
    """Relative motion as translation ``x`` (meters) and quaternion ``q`` (w, x, y, z).

    Labels produced by ``pose_to_label`` are unit-norm and canonical; network
    estimates wrapped in this type may carry a raw quaternion, which
    ``compose_trajectory`` normalizes.
    """

    x: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x, (3,)))
        object.__setattr__(self, "q", _frozen(self.q, (4,)))

    @classmethod
    def identity(cls) -> "MotionLabel":
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    def as_vector(self) -> np.ndarray:
        """7-vector ``[x, q]`` in the pose head's output order"""
        return np.concatenate([self.x, self.q])

    def quaternion_norm(self) -> float:
        return float(np.linalg.norm(self.q))


# ── Rotations ────────────────────────────────────────────────────────


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def orthonormalize(rotation) -> np.ndarray:
    """Closest rotation matrix in the Frobenius sense"""
    u, _, vt = np.linalg.svd(np.asarray(rotation, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rotation_angle(rotation) -> float:
    """Rotation angle in [0, pi] from the trace, with the acos argument clamped"""
    r = np.asarray(rotation, dtype=np.float64)
    cos_angle = 0.5 * (r[0, 0] + r[1, 1] + r[2, 2] - 1.0)
    return float(np.arccos(min(1.0, max(-1.0, cos_angle))))


def canonicalize_quaternion(q) -> np.ndarray:
    """Unit quaternion with w >= 0; ties broken by the first nonzero component"""
    q = np.asarray(q, dtype=np.float64).reshape(4)
    norm = np.linalg.norm(q)
    if norm == 0.0 or not np.isfinite(norm):
        raise InvalidPoseError(f"Cannot normalize quaternion {q.tolist()}")
    q = q / norm
    for component in q:
        if abs(component) > _SIGN_EPS:
            return -q if component < 0 else q
    return q


def matrix_to_quaternion(rotation) -> np.ndarray:
    """Rotation matrix to canonical (w, x, y, z).

    scipy branches on the largest of trace and diagonal entries, which stays
    accurate close to 180 degrees.
    """
    xyzw = Rotation.from_matrix(np.asarray(rotation, dtype=np.float64)).as_quat()
    return canonicalize_quaternion([xyzw[3], xyzw[0], xyzw[1], xyzw[2]])


def quaternion_to_matrix(q) -> np.ndarray:
    """(w, x, y, z) quaternion to rotation matrix; input is normalized first"""
    w, x, y, z = canonicalize_quaternion(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


# ── Pipeline operations ──────────────────────────────────────────────


def relative_transform(a: Pose, b: Pose, tol: Optional[float] = None) -> Pose:
    """Motion from frame i (pose ``a``) to frame i+1 (pose ``b``): ``a^-1 @ b``"""
    a.check(tol)
    b.check(tol)
    return a.inverse() @ b


def pose_to_label(pose: Pose) -> MotionLabel:
    return MotionLabel(pose.translation, matrix_to_quaternion(pose.rotation))


def label_to_pose(label: MotionLabel) -> Pose:
    return Pose(quaternion_to_matrix(label.q), label.x)


def mirror_transform(pose: Pose) -> Pose:
    """Relative motion seen in horizontally mirrored images.

    The rotation is conjugated by the mirror matrix, ``M R M``; the translation
    is kept as is.
    """
    return Pose(MIRROR_MATRIX @ pose.rotation @ MIRROR_MATRIX, pose.translation)


def mirror_label(label: MotionLabel) -> MotionLabel:
    return pose_to_label(mirror_transform(label_to_pose(label)))


def _motion_parts(step):
    """(x, q) of a MotionLabel or of a raw PosePrediction"""
    if isinstance(step, MotionLabel):
        return step.x, step.q
    return np.asarray(step.x_hat, dtype=np.float64), np.asarray(step.q_hat, dtype=np.float64)


def compose_trajectory(relative: Iterable) -> List[Pose]:
    """Chain relative motions into absolute poses starting at the identity"""
    warn_tol = settings.QUATERNION_WARN_TOLERANCE
    poses = [Pose.identity()]
    renormalized = 0
    for k, step in enumerate(relative):
        x, q = _motion_parts(step)
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > warn_tol:
            renormalized += 1
            logger.warning(f"Step {k}: quaternion norm {norm:.6f} deviates from 1, renormalizing")
        poses.append(poses[-1] @ Pose(quaternion_to_matrix(q), x))
    if renormalized:
        logger.info(f"Renormalized {renormalized} quaternions while composing trajectory")
    return poses


def relative_labels(poses: Sequence[Pose], stride: int = 1, tol: Optional[float] = None) -> List[MotionLabel]:
    """Labels between poses ``i`` and ``i + stride``"""
    return [
        pose_to_label(relative_transform(poses[i], poses[i + stride], tol))
        for i in range(len(poses) - stride)
    ]
