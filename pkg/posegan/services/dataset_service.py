"""Frames, labeled pairs, the preprocessed on-disk dataset and batching.

On-disk layout of a preprocessed dataset::

    <root>/frames/<seq>_<index>_<m|o>.png   8-bit grayscale, 96x128
    <root>/index.jsonl                      one PairRecord per line
    <root>/calib.json                       per-sequence CameraIntrinsics
    <root>/points.jsonl                     optional PointSetRecords
"""
import json
import logging
import queue
import re
import shutil
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from PIL import Image
from tqdm import tqdm

from posegan.core.config import settings
from posegan.core.exceptions import DatasetError, DimensionError
from posegan.schemas.dataset import CameraIntrinsics, PairRecord, PointSetRecord
from posegan.services.geometry import (
    MIRROR_MATRIX,
    MotionLabel,
    Pose,
    mirror_transform,
    pose_to_label,
    relative_transform,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FRAME_HEIGHT = 96
FRAME_WIDTH = 128
CROP_WIDTH = 500
CROP_HEIGHT = 375

_FRAME_NAME = re.compile(r"^(?P<seq>.+)_(?P<index>\d+)_(?P<flag>[mo])\.png$")


@dataclass(frozen=True, eq=False)
class Frame:
    """Preprocessed grayscale frame with its provenance"""

    pixels: np.ndarray
    source_sequence: str
    source_index: int
    mirrored: bool = False

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.shape != (FRAME_HEIGHT, FRAME_WIDTH):
            raise DimensionError(
                f"Frame must be {FRAME_HEIGHT}x{FRAME_WIDTH}, got {pixels.shape}",
                axis="height" if pixels.shape[:1] != (FRAME_HEIGHT,) else "width",
            )
        if pixels.dtype != np.uint8:
            raise DatasetError(f"Frame pixels must be uint8, got {pixels.dtype}")
        pixels = pixels.copy()
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def file_name(self) -> str:
        return frame_file_name(self.source_sequence, self.source_index, self.mirrored)


@dataclass(frozen=True)
class TrainingSample:
    """Two consecutive frames and the motion between them"""

    pair: Tuple[Frame, Frame]
    label: MotionLabel

    @property
    def sequence(self) -> str:
        return self.pair[0].source_sequence

    @property
    def mirrored(self) -> bool:
        return self.pair[0].mirrored


def frame_file_name(seq: str, index: int, mirrored: bool) -> str:
    return f"{seq}_{index:06d}_{'m' if mirrored else 'o'}.png"


def parse_frame_file_name(name: str) -> Tuple[str, int, bool]:
    match = _FRAME_NAME.match(Path(name).name)
    if not match:
        raise DatasetError(f"Unrecognized frame file name: {name}")
    return match.group("seq"), int(match.group("index")), match.group("flag") == "m"


# ── Image operations ─────────────────────────────────────────────────


def preprocess_image(
    raw: np.ndarray, source_sequence: str = "", source_index: int = 0
) -> Frame:
    """Central 500x375 crop followed by a bilinear resize to 128x96"""
    raw = np.asarray(raw)
    if raw.dtype != np.uint8:
        raise DatasetError(f"Expected 8-bit intensities, got dtype {raw.dtype}")
    if raw.ndim == 3:
        raw = np.asarray(Image.fromarray(raw).convert("L"))
    if raw.ndim != 2:
        raise DimensionError(f"Expected a 2-D intensity image, got shape {raw.shape}", axis="channels")
    height, width = raw.shape
    if width < CROP_WIDTH:
        raise DimensionError(f"Image width {width} is below the {CROP_WIDTH} px crop", axis="width")
    if height < CROP_HEIGHT:
        raise DimensionError(f"Image height {height} is below the {CROP_HEIGHT} px crop", axis="height")
    left = (width - CROP_WIDTH) // 2
    top = (height - CROP_HEIGHT) // 2
    crop = np.ascontiguousarray(raw[top:top + CROP_HEIGHT, left:left + CROP_WIDTH])
    resized = Image.fromarray(crop).resize((FRAME_WIDTH, FRAME_HEIGHT), Image.BILINEAR)
    return Frame(np.asarray(resized, dtype=np.uint8), source_sequence, source_index, False)


def mirror_image(frame: Frame) -> Frame:
    """Horizontal flip; toggles the mirrored flag"""
    return replace(frame, pixels=frame.pixels[:, ::-1], mirrored=not frame.mirrored)


def load_raw_image(path: PathLike) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8)


# ── Pairs and batches ────────────────────────────────────────────────


def build_pairs(
    sequence: Sequence[Frame], poses: Sequence[Pose], stride: int = 1, tol: Optional[float] = None
) -> List[TrainingSample]:
    """Sliding-window pairs ``(i, i + stride)`` labeled with the relative motion.

    Mirrored sequences get their labels passed through ``mirror_transform``.
    """
    if len(sequence) != len(poses):
        raise DatasetError(f"{len(sequence)} frames but {len(poses)} poses")
    if len(sequence) < 2:
        raise DatasetError("At least two frames are needed to build pairs")
    if stride < 1:
        raise DatasetError(f"stride must be >= 1, got {stride}")
    samples = []
    for i in range(len(sequence) - stride):
        a, b = sequence[i], sequence[i + stride]
        if a.mirrored != b.mirrored or a.source_sequence != b.source_sequence:
            raise DatasetError(f"Frames {i} and {i + stride} come from different sources")
        motion = relative_transform(poses[i], poses[i + stride], tol)
        if a.mirrored:
            motion = mirror_transform(motion)
        samples.append(TrainingSample((a, b), pose_to_label(motion)))
    return samples


def epoch_permutations(n: int, batch_size: int, seed: int) -> Iterator[np.ndarray]:
    """Index batches, reshuffled every epoch; the short tail batch is dropped"""
    if n == 0:
        raise DatasetError("Cannot batch an empty dataset")
    if batch_size < 1:
        raise DatasetError(f"batch_size must be >= 1, got {batch_size}")
    if batch_size > n:
        raise DatasetError(f"batch_size {batch_size} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    per_epoch = n // batch_size
    while True:
        order = rng.permutation(n)
        for k in range(per_epoch):
            yield order[k * batch_size:(k + 1) * batch_size]


def batch_iterator(samples: Sequence, batch_size: int, seed: int) -> Iterator[List]:
    """Endless stream of shuffled batches, deterministic for a fixed seed"""
    for indices in epoch_permutations(len(samples), batch_size, seed):
        yield [samples[i] for i in indices]


def to_network_range(pixels: np.ndarray) -> np.ndarray:
    """uint8 [0, 255] to float32 [-1, 1]"""
    return pixels.astype(np.float32) / 127.5 - 1.0


def pair_tensor(a: Frame, b: Frame) -> torch.Tensor:
    """2x96x128 network input"""
    return torch.from_numpy(np.stack([to_network_range(a.pixels), to_network_range(b.pixels)]))


def collate(samples: Sequence[TrainingSample]) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack samples into (pairs B x 2 x 96 x 128, x B x 3, q B x 4)"""
    pairs = torch.stack([pair_tensor(*s.pair) for s in samples])
    x = torch.from_numpy(np.stack([s.label.x for s in samples]).astype(np.float32))
    q = torch.from_numpy(np.stack([s.label.q for s in samples]).astype(np.float32))
    return pairs, x, q


_END = object()


def prefetch(iterator: Iterable, depth: Optional[int] = None) -> Iterator:
    """Run ``iterator`` on a daemon thread behind a bounded queue"""
    depth = settings.PREFETCH_DEPTH if depth is None else depth
    if depth <= 0:
        yield from iterator
        return
    buffer: "queue.Queue" = queue.Queue(maxsize=depth)
    stop = threading.Event()

    def producer():
        try:
            for item in iterator:
                while not stop.is_set():
                    try:
                        buffer.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
            buffer.put(_END)
        except BaseException as e:  # re-raised on the consumer side
            buffer.put(e)

    thread = threading.Thread(target=producer, name="batch-prefetch", daemon=True)
    thread.start()
    try:
        while True:
            item = buffer.get()
            if item is _END:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()


# ── Preprocessed dataset on disk ─────────────────────────────────────


class PreprocessedDataset:
    """Random access to a preprocessed dataset directory"""

    def __init__(
        self,
        root: PathLike,
        records: Optional[List[PairRecord]] = None,
        calib: Optional[Dict[str, CameraIntrinsics]] = None,
        points: Optional[Dict[str, np.ndarray]] = None,
        cache: Optional[Dict[str, np.ndarray]] = None,
    ):
        self.root = Path(root)
        if records is None:
            index_path = self.root / "index.jsonl"
            if not index_path.exists():
                raise DatasetError(f"No index.jsonl in {self.root}", path=str(self.root))
            records = self._read_index(index_path)
        self.records = records
        self._calib = calib if calib is not None else self._read_calib()
        self._points = points if points is not None else self._read_points()
        self._cache: Dict[str, np.ndarray] = cache if cache is not None else {}
        self._lock = threading.Lock()

    @staticmethod
    def _read_index(path: Path) -> List[PairRecord]:
        records = []
        with open(path) as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(PairRecord.model_validate_json(line))
                except ValueError as e:
                    raise DatasetError(f"{path}:{line_no}: invalid record ({e})")
        return records

    def _read_calib(self) -> Dict[str, CameraIntrinsics]:
        path = self.root / "calib.json"
        if not path.exists():
            return {}
        with open(path) as f:
            return {seq: CameraIntrinsics(**values) for seq, values in json.load(f).items()}

    def _read_points(self) -> Dict[str, np.ndarray]:
        path = self.root / "points.jsonl"
        if not path.exists():
            return {}
        points = {}
        with open(path) as f:
            for line in f:
                if line.strip():
                    record = PointSetRecord.model_validate_json(line)
                    points[record.frame] = np.asarray(record.points, dtype=np.float64).reshape(-1, 3)
        return points

    def _subset(self, records: List[PairRecord]) -> "PreprocessedDataset":
        return PreprocessedDataset(self.root, records, self._calib, self._points, self._cache)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> TrainingSample:
        return self.sample(self.records[i])

    @property
    def sequences(self) -> List[str]:
        return sorted({r.seq for r in self.records})

    @property
    def has_points(self) -> bool:
        return bool(self._points)

    def contains_sequence(self, seq: str) -> bool:
        """True if ``seq`` or its mirrored twin appears in the records"""
        return any(r.seq == seq for r in self.records)

    def holdout(self, test_sequence: str) -> Tuple["PreprocessedDataset", "PreprocessedDataset"]:
        """(train, test): the test sequence and its mirror leave the training split"""
        train = [r for r in self.records if r.seq != test_sequence]
        test = [r for r in self.records if r.seq == test_sequence and not r.mirrored]
        logger.info(
            f"Hold-out {test_sequence}: {len(train)} training pairs, {len(test)} test pairs"
        )
        return self._subset(train), self._subset(test)

    def filter(self, sequences: Optional[Iterable[str]] = None, mirrored: Optional[bool] = None) -> "PreprocessedDataset":
        keep = set(sequences) if sequences is not None else None
        records = [
            r for r in self.records
            if (keep is None or r.seq in keep) and (mirrored is None or r.mirrored == mirrored)
        ]
        return self._subset(records)

    def pairs_for(self, seq: str, mirrored: Optional[bool] = None) -> "PreprocessedDataset":
        return self.filter([seq], mirrored)

    def with_points(self) -> "PreprocessedDataset":
        """Only the pairs whose second frame has a point set"""
        return self._subset([r for r in self.records if r.b in self._points])

    def frame_pixels(self, rel_path: str) -> np.ndarray:
        with self._lock:
            cached = self._cache.get(rel_path)
        if cached is not None:
            return cached
        path = self.root / rel_path
        if not path.exists():
            raise DatasetError(f"Missing frame {path}", path=str(path))
        pixels = load_raw_image(path)
        with self._lock:
            self._cache[rel_path] = pixels
        return pixels

    def sample(self, record: PairRecord) -> TrainingSample:
        frames = []
        for rel_path in (record.a, record.b):
            seq, index, mirrored = parse_frame_file_name(rel_path)
            frames.append(Frame(self.frame_pixels(rel_path), seq, index, mirrored))
        return TrainingSample((frames[0], frames[1]), MotionLabel(record.x, record.q))

    def intrinsics(self, seq: str) -> CameraIntrinsics:
        if seq not in self._calib:
            raise DatasetError(f"No calibration stored for sequence {seq}", sequence=seq)
        return self._calib[seq]

    def point_set(self, record: PairRecord) -> np.ndarray:
        """3D points observed from the pair's second frame"""
        if record.b not in self._points:
            raise DatasetError(f"No point set for frame {record.b}", frame=record.b)
        return self._points[record.b]


# ── Writing ──────────────────────────────────────────────────────────


class DatasetWriter:
    """Incrementally writes frames and pair records into a dataset directory"""

    def __init__(self, root: PathLike):
        self.root = Path(root)
        self.frames_dir = self.root / "frames"
        self.frames_dir.mkdir(parents=True, exist_ok=True)
        self._index = open(self.root / "index.jsonl", "w")
        self._points = None
        self.calib: Dict[str, CameraIntrinsics] = {}
        self.pairs_written = 0

    def write_frame(self, frame: Frame) -> str:
        rel_path = f"frames/{frame.file_name}"
        target = self.root / rel_path
        if not target.exists():
            Image.fromarray(np.ascontiguousarray(frame.pixels)).save(target)
        return rel_path

    def write_samples(self, samples: Iterable[TrainingSample]) -> int:
        count = 0
        for sample in samples:
            a, b = sample.pair
            record = PairRecord(
                a=self.write_frame(a),
                b=self.write_frame(b),
                x=[float(v) for v in sample.label.x],
                q=[float(v) for v in sample.label.q],
                seq=a.source_sequence,
                mirrored=a.mirrored,
            )
            self._index.write(record.model_dump_json() + "\n")
            count += 1
        self.pairs_written += count
        return count

    def write_points(self, frame: Frame, points: np.ndarray) -> None:
        if self._points is None:
            self._points = open(self.root / "points.jsonl", "w")
        if frame.mirrored:
            points = points @ MIRROR_MATRIX
        record = PointSetRecord(
            frame=f"frames/{frame.file_name}",
            seq=frame.source_sequence,
            mirrored=frame.mirrored,
            points=np.asarray(points, dtype=np.float64).tolist(),
        )
        self._points.write(record.model_dump_json() + "\n")

    def close(self) -> None:
        self._index.close()
        if self._points is not None:
            self._points.close()
        if self.calib:
            with open(self.root / "calib.json", "w") as f:
                json.dump({seq: c.model_dump() for seq, c in sorted(self.calib.items())}, f, indent=2, sort_keys=True)

    def __enter__(self) -> "DatasetWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class DatasetBuilder:
    """Turns a KITTI odometry root into a preprocessed dataset directory"""

    def __init__(self, workers: Optional[int] = None, show_progress: bool = False):
        self.workers = settings.PREPROCESS_WORKERS if workers is None else workers
        self.show_progress = show_progress

    def _load_frames(self, paths: Sequence[Path], seq: str) -> List[Frame]:
        def job(item):
            index, path = item
            return preprocess_image(load_raw_image(path), seq, index)

        items = list(enumerate(paths))
        if self.workers <= 1:
            return [job(item) for item in tqdm(items, desc=seq, disable=not self.show_progress)]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(tqdm(pool.map(job, items), total=len(items), desc=seq, disable=not self.show_progress))

    def build(
        self,
        kitti_root: PathLike,
        out: PathLike,
        sequences: Sequence[str],
        mirror: bool = False,
        stride: int = 1,
        correspondences_dir: Optional[PathLike] = None,
        max_points: int = 200,
        seed: int = 0,
    ) -> Path:
        """Preprocess ``sequences``; output appears atomically at ``out``"""
        from posegan.services.kitti_io import KittiOdometry
        from posegan.services.triangulation import FileCorrespondenceProvider

        if not sequences:
            raise DatasetError("No sequences selected")
        kitti = KittiOdometry(kitti_root)
        out = Path(out)
        staging = out.with_name(out.name + ".partial")
        if staging.exists():
            shutil.rmtree(staging)
        try:
            with DatasetWriter(staging) as writer:
                for seq in sequences:
                    poses = kitti.poses(seq)
                    paths = kitti.image_paths(seq)
                    if len(paths) != len(poses):
                        raise DatasetError(
                            f"Sequence {seq}: {len(paths)} images but {len(poses)} poses", sequence=seq
                        )
                    intrinsics = kitti.intrinsics(seq)
                    writer.calib[seq] = intrinsics
                    frames = self._load_frames(paths, seq)
                    variants = [frames, [mirror_image(f) for f in frames]] if mirror else [frames]
                    provider = None
                    if correspondences_dir is not None:
                        provider = FileCorrespondenceProvider(Path(correspondences_dir) / f"{seq}.jsonl")
                    for variant in variants:
                        count = writer.write_samples(build_pairs(variant, poses, stride))
                        logger.info(
                            f"Sequence {seq}{' (mirrored)' if variant[0].mirrored else ''}: {count} pairs"
                        )
                        if provider is not None:
                            self._write_point_sets(writer, provider, variant, stride, intrinsics, max_points, seed)
            if out.exists():
                shutil.rmtree(out)
            staging.rename(out)
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            raise
        logger.info(f"Dataset written to {out}: {writer.pairs_written} pairs")
        return out

    @staticmethod
    def _write_point_sets(writer, provider, frames, stride, intrinsics, max_points, seed):
        from posegan.core.exceptions import TriangulationError
        from posegan.services.triangulation import build_point_set

        if intrinsics.baseline is None:
            raise DatasetError("Triangulation needs a stereo baseline in calib.txt")
        skipped = 0
        for frame in frames[stride:]:
            matches = provider.correspondences(frame.source_index)
            if not matches:
                skipped += 1
                continue
            try:
                points = build_point_set(matches, intrinsics, intrinsics.baseline, max_points, seed)
            except TriangulationError:
                skipped += 1
                continue
            writer.write_points(frame, points)
        if skipped:
            logger.warning(f"{skipped} frames have no usable correspondences; their pairs lack point sets")
