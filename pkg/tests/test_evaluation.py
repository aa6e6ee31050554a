"""KITTI odometry metric, Umeyama alignment and trajectory files."""
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation


def _scaled(poses, factor):
    from posegan.services.geometry import Pose
    return [Pose(p.rotation, factor * p.translation) for p in poses]


def test_ground_truth_scores_exactly_zero():
    """gt against itself gives exactly (0, 0)."""
    from posegan.services.evaluation_service import kitti_metric
    from posegan.services.synthetic import synthetic_trajectory
    gt = synthetic_trajectory(400, seed=3)
    report = kitti_metric(gt, gt)
    assert report.segments > 0
    assert report.t_rel == 0.0
    assert report.r_rel == 0.0
    assert report.table_row() == "0.00 0.00"


def test_scale_drift_on_straight_line(straight_drive):
    """10% too long steps on a straight drive is a 10% translational error."""
    from posegan.services.evaluation_service import kitti_metric
    report = kitti_metric(_scaled(straight_drive, 1.1), straight_drive)
    assert report.t_rel == pytest.approx(10.0, abs=1e-9)
    assert report.r_rel == pytest.approx(0.0, abs=1e-9)


def test_segment_counts(straight_drive):
    """300 m drive: 201 + 101 + 1 subsequences, or 21 + 11 + 1 with the devkit stride."""
    from posegan.services.evaluation_service import DEVKIT_SEGMENT_STRIDE, kitti_metric
    report = kitti_metric(straight_drive, straight_drive)
    assert report.segments == 303
    assert {k: v.segments for k, v in report.per_length.items()} == {100: 201, 200: 101, 300: 1}
    assert kitti_metric(straight_drive, straight_drive, segment_stride=DEVKIT_SEGMENT_STRIDE).segments == 33


def test_rotation_error_units(straight_drive):
    """A steady yaw drift of a rad/m reads as degrees(a) * 100 per 100 m."""
    from posegan.services.evaluation_service import kitti_metric
    from posegan.services.geometry import Pose, rot_y
    a = 1e-4
    estimate = [Pose(rot_y(k * a), p.translation) for k, p in enumerate(straight_drive)]
    report = kitti_metric(estimate, straight_drive)
    assert report.r_rel == pytest.approx(math.degrees(a) * 100.0, rel=1e-6)


def test_metric_invariant_under_rigid_transform():
    """Moving both trajectories by the same rigid transform keeps the errors."""
    from posegan.services.evaluation_service import kitti_metric
    from posegan.services.geometry import Pose
    from posegan.services.synthetic import synthetic_trajectory
    gt = synthetic_trajectory(350, seed=1)
    est = synthetic_trajectory(350, seed=2)
    g = Pose(Rotation.from_rotvec([0.3, -1.2, 0.5]).as_matrix(), [10.0, -4.0, 7.0])
    base = kitti_metric(est, gt)
    moved = kitti_metric([g @ p for p in est], [g @ p for p in gt])
    assert moved.t_rel == pytest.approx(base.t_rel, abs=1e-9)
    assert moved.r_rel == pytest.approx(base.r_rel, abs=1e-9)


def test_short_ground_truth_gives_empty_report(caplog):
    from posegan.services.evaluation_service import kitti_metric
    from posegan.services.synthetic import synthetic_trajectory
    gt = synthetic_trajectory(50)
    with caplog.at_level("WARNING"):
        report = kitti_metric(gt, gt)
    assert report.is_empty
    assert report.t_rel is None
    assert report.table_row() == "n/a n/a"
    assert "shorter than 100" in caplog.text


def test_length_mismatch():
    from posegan.core.exceptions import DatasetError
    from posegan.services.evaluation_service import kitti_metric
    from posegan.services.synthetic import synthetic_trajectory
    with pytest.raises(DatasetError):
        kitti_metric(synthetic_trajectory(10), synthetic_trajectory(11))


def test_umeyama_recovers_similarity(rng):
    """Known (s, R, t) on 50 noiseless points comes back within 1e-9."""
    from posegan.services.evaluation_service import umeyama
    for scale in (0.1, 1.0, 3.7, 10.0):
        rotation = Rotation.random(random_state=int(rng.integers(0, 1000))).as_matrix()
        translation = rng.normal(0, 5, 3)
        source = rng.normal(0, 10, (50, 3))
        target = scale * source @ rotation.T + translation
        s, r, t = umeyama(source, target)
        assert s == pytest.approx(scale, rel=1e-9)
        assert np.allclose(r, rotation, atol=1e-9)
        assert np.allclose(t, translation, atol=1e-8)


def test_umeyama_is_least_squares_optimal(rng):
    """On noisy targets no other similarity, the generating one included, has a smaller residual."""
    from posegan.services.evaluation_service import umeyama

    def residual(s, r, t, source, target):
        return float(np.sum((target - (s * source @ r.T + t)) ** 2))

    for trial in range(100):
        scale = float(rng.uniform(0.1, 10.0))
        rotation = Rotation.random(random_state=trial).as_matrix()
        translation = rng.normal(0, 5, 3)
        source = rng.normal(0, 10, (40, 3))
        target = scale * source @ rotation.T + translation + rng.normal(0, 0.5, (40, 3))
        s, r, t = umeyama(source, target)
        best = residual(s, r, t, source, target)
        assert best <= residual(scale, rotation, translation, source, target) * (1 + 1e-12) + 1e-12
        nudge = Rotation.from_rotvec(rng.normal(0, 1e-3, 3)).as_matrix()
        assert best <= residual(s * 1.001, nudge @ r, t + 1e-3, source, target)


def test_umeyama_never_reflects(rng):
    """Mirrored clouds still yield a proper rotation."""
    from posegan.services.evaluation_service import umeyama
    source = rng.normal(0, 1, (30, 3))
    target = source * [-1.0, 1.0, 1.0]
    _, r, _ = umeyama(source, target)
    assert np.linalg.det(r) == pytest.approx(1.0)


def test_umeyama_align_trajectory():
    """Half-scale square loop maps back onto gt; SE(3) keeps unit scale."""
    from posegan.core.exceptions import AlignmentError
    from posegan.services.evaluation_service import Trajectory, umeyama_align
    from posegan.services.synthetic import synthetic_square_loop
    gt = Trajectory(tuple(synthetic_square_loop(side=8)))
    alignment = umeyama_align(_scaled(gt.poses, 0.5), gt)
    assert alignment.scale == pytest.approx(2.0, rel=1e-9)
    assert np.allclose(alignment.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(alignment.aligned.positions(), gt.positions(), atol=1e-9)
    assert np.allclose(alignment.apply(gt.positions() * 0.5), gt.positions(), atol=1e-9)
    assert umeyama_align(gt, gt, with_scale=False).scale == 1.0
    with pytest.raises(AlignmentError):
        umeyama_align(gt.poses[:-1], gt)


def test_umeyama_degenerate_inputs():
    from posegan.core.exceptions import AlignmentError
    from posegan.services.evaluation_service import umeyama
    with pytest.raises(AlignmentError):
        umeyama(np.zeros((2, 3)), np.zeros((2, 3)))
    line = np.outer(np.arange(10.0), [1.0, 2.0, 3.0])
    with pytest.raises(AlignmentError):
        umeyama(line, line)
    with pytest.raises(AlignmentError):
        umeyama(np.zeros((5, 3)), np.zeros((4, 3)))


def test_evaluate_with_sim3_alignment():
    """A half-scale estimate is perfect after Sim(3) alignment."""
    from posegan.services.evaluation_service import evaluate_sequence
    from posegan.services.synthetic import synthetic_square_loop
    gt = synthetic_square_loop(side=60)
    report = evaluate_sequence(_scaled(gt, 0.5), gt, align="sim3")
    assert report.aligned == "sim3"
    assert report.scale == pytest.approx(2.0)
    assert report.t_rel == pytest.approx(0.0, abs=1e-6)
    unaligned = evaluate_sequence(_scaled(gt, 0.5), gt)
    assert unaligned.aligned is None
    assert unaligned.t_rel > 10.0


def test_unknown_alignment():
    from posegan.core.exceptions import AlignmentError
    from posegan.services.evaluation_service import evaluate_sequence
    from posegan.services.synthetic import synthetic_trajectory
    gt = synthetic_trajectory(5)
    with pytest.raises(AlignmentError):
        evaluate_sequence(gt, gt, align="affine")


def test_trajectory_file_round_trip(tmp_path):
    from posegan.services.evaluation_service import export_trajectory, load_trajectory
    from posegan.services.synthetic import synthetic_square_loop
    poses = synthetic_square_loop(side=5)
    loaded = load_trajectory(export_trajectory(poses, tmp_path / "traj.txt"))
    assert len(loaded) == len(poses)
    assert all(a.allclose(b, atol=1e-12) for a, b in zip(loaded.poses, poses))


def test_trajectory_rejects_bad_pose():
    from posegan.core.exceptions import InvalidPoseError
    from posegan.services.evaluation_service import Trajectory
    from posegan.services.geometry import Pose
    with pytest.raises(InvalidPoseError):
        Trajectory((Pose.identity(), Pose(np.diag([1.0, 1.0, 1.1]), np.zeros(3))))


def test_reference_results():
    from posegan.services.evaluation_service import reference_row
    assert reference_row("semi_supervised", "00") == (10.54, 3.22)
    assert reference_row("orb_slam2_mono", "01") is None
    with pytest.raises(KeyError):
        reference_row("nonexistent", "00")
