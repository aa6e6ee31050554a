"""Synthetic trajectories and image data with a learnable motion cue.

The second frame of every synthetic pair is the first frame rolled
horizontally by a yaw-dependent number of pixels and brightened by a
speed-dependent amount, so a network can recover the label from pixels.
"""
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from PIL import Image

from posegan.schemas.dataset import CameraIntrinsics
from posegan.services.dataset_service import (
    FRAME_HEIGHT,
    FRAME_WIDTH,
    DatasetWriter,
    Frame,
    TrainingSample,
    mirror_image,
)
from posegan.services.geometry import MotionLabel, Pose, mirror_label, pose_to_label, rot_y
from posegan.services.kitti_io import format_pose

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SYNTHETIC_INTRINSICS = CameraIntrinsics(fx=718.856, fy=718.856, cx=607.1928, cy=185.2157, baseline=0.537)

# Cue gains: pixels of horizontal shift per radian of yaw, intensity per meter
SHIFT_PER_RADIAN = 200.0
BRIGHTNESS_PER_METER = 40.0

SPEED_RANGE = (0.5, 1.5)
YAW_RANGE = (-0.05, 0.05)


def synthetic_trajectory(
    n_frames: int, speed: float = 1.0, yaw_rate: float = 0.01, seed: Optional[int] = None
) -> List[Pose]:
    """Planar drive along the camera z axis, turning about y.

    With a seed, speed and yaw rate get a small per-frame jitter.
    """
    rng = np.random.default_rng(seed) if seed is not None else None
    poses = [Pose.identity()]
    for _ in range(n_frames - 1):
        step_speed, step_yaw = speed, yaw_rate
        if rng is not None:
            step_speed += rng.normal(0.0, 0.05 * speed)
            step_yaw += rng.normal(0.0, 0.002)
        poses.append(poses[-1] @ Pose(rot_y(step_yaw), [0.0, 0.0, step_speed]))
    return poses


def synthetic_square_loop(side: int = 10, step: float = 1.0) -> List[Pose]:
    """Closed square drive: ``side`` forward steps per edge, 90 degree turns at the corners"""
    forward = Pose(np.eye(3), [0.0, 0.0, step])
    turn = Pose(rot_y(math.pi / 2), [0.0, 0.0, 0.0])
    poses = [Pose.identity()]
    for _ in range(4):
        for k in range(side):
            poses.append(poses[-1] @ (forward @ turn if k == side - 1 else forward))
    return poses


def random_texture(rng: np.random.Generator, height: int = FRAME_HEIGHT, width: int = FRAME_WIDTH) -> np.ndarray:
    """Smooth random intensity field in [40, 180]"""
    coarse = rng.uniform(40, 180, size=(height // 8, width // 8)).astype(np.uint8)
    return np.asarray(Image.fromarray(coarse).resize((width, height), Image.BILINEAR), dtype=np.uint8)


def apply_motion_cue(pixels: np.ndarray, label: MotionLabel) -> np.ndarray:
    """Second frame of a synthetic pair"""
    yaw = 2.0 * math.atan2(label.q[2], label.q[0])
    speed = float(np.linalg.norm(label.x))
    shifted = np.roll(pixels, int(round(yaw * SHIFT_PER_RADIAN)), axis=1).astype(np.float64)
    return np.clip(shifted + speed * BRIGHTNESS_PER_METER, 0, 255).astype(np.uint8)


def random_label(rng: np.random.Generator) -> MotionLabel:
    speed = rng.uniform(*SPEED_RANGE)
    yaw = rng.uniform(*YAW_RANGE)
    return pose_to_label(Pose(rot_y(yaw), [0.0, 0.0, speed]))


def synthetic_training_samples(
    n_pairs: int, seed: int = 0, sequence: str = "synthetic", first_index: int = 0
) -> List[TrainingSample]:
    """Independent pairs, each on its own random texture"""
    rng = np.random.default_rng(seed)
    samples = []
    for k in range(n_pairs):
        label = random_label(rng)
        texture = random_texture(rng)
        a = Frame(texture, sequence, first_index + 2 * k)
        b = Frame(apply_motion_cue(texture, label), sequence, first_index + 2 * k + 1)
        samples.append(TrainingSample((a, b), label))
    return samples


def mirror_sample(sample: TrainingSample) -> TrainingSample:
    a, b = sample.pair
    return TrainingSample((mirror_image(a), mirror_image(b)), mirror_label(sample.label))


def synthetic_points(rng: np.random.Generator, n_points: int, depth_range=(2.0, 80.0)) -> np.ndarray:
    """Points in front of the camera inside the KITTI field of view"""
    z = rng.uniform(*depth_range, size=n_points)
    x = rng.uniform(-0.8, 0.8, size=n_points) * z
    y = rng.uniform(-0.25, 0.25, size=n_points) * z
    return np.stack([x, y, z], axis=1)


def write_synthetic_dataset(
    out: PathLike,
    n_pairs: int = 200,
    seed: int = 0,
    sequences: Sequence[str] = ("synthetic",),
    mirror: bool = False,
    points_per_frame: int = 0,
) -> Path:
    """Write synthetic pairs in the preprocessed dataset format.

    ``n_pairs`` pairs are generated per sequence; with ``mirror`` each
    sequence also gets its mirrored twin.
    """
    out = Path(out)
    rng = np.random.default_rng(seed + 1)
    with DatasetWriter(out) as writer:
        for s, seq in enumerate(sequences):
            samples = synthetic_training_samples(n_pairs, seed=seed + 1000 * s, sequence=seq)
            twins = [mirror_sample(x) for x in samples] if mirror else []
            writer.calib[seq] = SYNTHETIC_INTRINSICS
            writer.write_samples(samples)
            writer.write_samples(twins)
            if points_per_frame:
                # a mirrored twin sees the same scene, reflected by the writer
                for k, sample in enumerate(samples):
                    points = synthetic_points(rng, points_per_frame)
                    writer.write_points(sample.pair[1], points)
                    if mirror:
                        writer.write_points(twins[k].pair[1], points)
    logger.info(f"Synthetic dataset written to {out}: {writer.pairs_written} pairs")
    return out


def write_synthetic_kitti(
    root: PathLike,
    sequence: str = "00",
    n_frames: int = 6,
    seed: int = 0,
    size=(1241, 376),
    poses: Optional[List[Pose]] = None,
) -> Path:
    """Minimal KITTI odometry layout: images, ground truth and calib.txt"""
    root = Path(root)
    rng = np.random.default_rng(seed)
    image_dir = root / "sequences" / sequence / "image_0"
    image_dir.mkdir(parents=True, exist_ok=True)
    width, height = size
    for i in range(n_frames):
        pixels = random_texture(rng, height, width)
        Image.fromarray(pixels).save(image_dir / f"{i:06d}.png")
    poses = poses if poses is not None else synthetic_trajectory(n_frames, seed=seed)
    (root / "poses").mkdir(parents=True, exist_ok=True)
    with open(root / "poses" / f"{sequence}.txt", "w") as f:
        for pose in poses:
            f.write(format_pose(pose) + "\n")
    k = SYNTHETIC_INTRINSICS
    p0 = [k.fx, 0, k.cx, 0, 0, k.fy, k.cy, 0, 0, 0, 1, 0]
    p1 = [k.fx, 0, k.cx, -k.fx * k.baseline, 0, k.fy, k.cy, 0, 0, 0, 1, 0]
    with open(root / "sequences" / sequence / "calib.txt", "w") as f:
        f.write("P0: " + " ".join(f"{v:.12e}" for v in p0) + "\n")
        f.write("P1: " + " ".join(f"{v:.12e}" for v in p1) + "\n")
    return root


def write_synthetic_correspondences(
    root: PathLike, sequence: str = "00", n_frames: int = 6, n_points: int = 300, seed: int = 0, noise_px: float = 0.0
) -> Path:
    """``<root>/<sequence>.jsonl`` stereo matches readable by FileCorrespondenceProvider"""
    import json

    from posegan.services.triangulation import SyntheticCorrespondenceProvider

    k = SYNTHETIC_INTRINSICS
    provider = SyntheticCorrespondenceProvider(k, k.baseline, n_points=n_points, seed=seed, noise_px=noise_px)
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    path = root / f"{sequence}.jsonl"
    with open(path, "w") as f:
        for frame in range(n_frames):
            matches = [[*c.left_px, *c.right_px] for c in provider.correspondences(frame)]
            f.write(json.dumps({"frame": frame, "matches": matches}) + "\n")
    return path
