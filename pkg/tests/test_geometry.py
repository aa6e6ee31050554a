"""Rigid-body and quaternion math."""
import math

import numpy as np
import pytest


def test_mirror_is_exact_involution(random_pose):
    """Mirroring twice returns the identical transform."""
    from posegan.services.geometry import mirror_transform
    for _ in range(100):
        p = random_pose()
        twice = mirror_transform(mirror_transform(p))
        assert np.array_equal(twice.rotation, p.rotation)
        assert np.array_equal(twice.translation, p.translation)


def test_mirror_preserves_rotation_group(random_pose):
    """M R M stays orthonormal with determinant one."""
    from posegan.services.geometry import mirror_transform
    for _ in range(100):
        mirror_transform(random_pose()).check(1e-12)


def test_mirror_flips_yaw_and_keeps_translation():
    """A left turn becomes a right turn; translation is untouched."""
    from posegan.services.geometry import Pose, mirror_transform, rot_y
    p = Pose(rot_y(0.1), [0.3, 0.0, 1.0])
    m = mirror_transform(p)
    assert np.allclose(m.rotation, rot_y(-0.1), atol=1e-15)
    assert np.array_equal(m.translation, p.translation)


def test_pose_label_round_trip(random_pose):
    """Pose -> label -> pose within 1e-9, labels canonical."""
    from posegan.services.geometry import label_to_pose, pose_to_label
    for _ in range(200):
        p = random_pose(scale=5.0)
        label = pose_to_label(p)
        assert label.q[0] >= 0
        assert abs(label.quaternion_norm() - 1.0) < 1e-12
        assert label_to_pose(label).allclose(p, atol=1e-9)


def test_relative_chain_recovers_absolute_poses(random_pose):
    """Composing relative labels of a 1000-pose chain restores the poses."""
    from posegan.services.geometry import Pose, compose_trajectory, relative_labels
    poses = [Pose.identity()]
    for _ in range(999):
        poses.append(poses[-1] @ random_pose(scale=1.0))
    rebuilt = compose_trajectory(relative_labels(poses))
    assert len(rebuilt) == len(poses)
    for a, b in zip(rebuilt, poses):
        assert a.allclose(b, atol=1e-6)


def test_relative_transform_is_left_inverse_product(random_pose):
    """relative_transform(a, b) = a^-1 b, so a @ rel == b."""
    from posegan.services.geometry import relative_transform
    a, b = random_pose(), random_pose()
    assert (a @ relative_transform(a, b)).allclose(b, atol=1e-12)


def test_invalid_rotation_rejected():
    """Non-orthonormal or reflected rotations raise InvalidPoseError."""
    from posegan.core.exceptions import InvalidPoseError
    from posegan.services.geometry import MIRROR_MATRIX, Pose, relative_transform
    stretched = Pose(np.diag([1.0, 1.0, 2.0]), np.zeros(3))
    with pytest.raises(InvalidPoseError):
        relative_transform(Pose.identity(), stretched)
    with pytest.raises(InvalidPoseError):
        Pose(MIRROR_MATRIX, np.zeros(3)).check()
    with pytest.raises(InvalidPoseError):
        Pose.from_matrix(np.eye(3))


def test_quaternion_sign_convention():
    """q and -q canonicalize to the same quaternion with w >= 0."""
    from posegan.services.geometry import canonicalize_quaternion
    q = np.array([0.5, -0.5, 0.5, 0.5])
    assert np.allclose(canonicalize_quaternion(q), canonicalize_quaternion(-q))
    assert canonicalize_quaternion(-q)[0] > 0
    assert np.array_equal(canonicalize_quaternion([0.0, -1.0, 0.0, 0.0]), [0.0, 1.0, 0.0, 0.0])


def test_zero_quaternion_rejected():
    from posegan.core.exceptions import InvalidPoseError
    from posegan.services.geometry import canonicalize_quaternion
    with pytest.raises(InvalidPoseError):
        canonicalize_quaternion([0.0, 0.0, 0.0, 0.0])


def test_half_turn_quaternion():
    """Rotations of 180 degrees convert accurately in both directions."""
    from posegan.services.geometry import matrix_to_quaternion, quaternion_to_matrix, rot_y
    r = rot_y(math.pi)
    q = matrix_to_quaternion(r)
    assert np.allclose(q, [0.0, 0.0, 1.0, 0.0], atol=1e-12)
    assert np.allclose(quaternion_to_matrix(q), r, atol=1e-12)


def test_rotation_angle_clamps():
    """Trace round-off slightly above 3 still yields angle 0."""
    from posegan.services.geometry import rot_x, rotation_angle
    assert rotation_angle(np.eye(3) * (1.0 + 1e-12)) == 0.0
    assert rotation_angle(rot_x(0.3)) == pytest.approx(0.3, abs=1e-12)


def test_orthonormalize_projects_onto_rotations():
    from posegan.services.geometry import orthonormalize, rot_z
    noisy = rot_z(0.2) + 1e-7 * np.ones((3, 3))
    r = orthonormalize(noisy)
    assert np.allclose(r.T @ r, np.eye(3), atol=1e-14)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-14)


def test_compose_trajectory_renormalizes_raw_quaternions(caplog):
    """Estimates with non-unit quaternions are normalized with a warning."""
    from posegan.services.geometry import MotionLabel, compose_trajectory
    steps = [MotionLabel([0.0, 0.0, 1.0], [2.0, 0.0, 0.0, 0.0]) for _ in range(3)]
    with caplog.at_level("WARNING"):
        poses = compose_trajectory(steps)
    assert "renormalizing" in caplog.text
    assert np.allclose(poses[-1].translation, [0.0, 0.0, 3.0])
    assert np.allclose(poses[-1].rotation, np.eye(3))


def test_compose_trajectory_accepts_predictions():
    """Raw network predictions (x_hat, q_hat tensors) compose like labels."""
    import torch

    from posegan.models.networks import PosePrediction
    from posegan.services.geometry import compose_trajectory
    pred = PosePrediction(torch.tensor([0.0, 0.0, 2.0]), torch.tensor([1.0, 0.0, 0.0, 0.0]))
    poses = compose_trajectory([pred, pred])
    assert np.allclose(poses[2].translation, [0.0, 0.0, 4.0])


def test_mirror_label_matches_mirror_transform(random_pose):
    from posegan.services.geometry import label_to_pose, mirror_label, mirror_transform, pose_to_label
    p = random_pose()
    assert label_to_pose(mirror_label(pose_to_label(p))).allclose(mirror_transform(p), atol=1e-9)
