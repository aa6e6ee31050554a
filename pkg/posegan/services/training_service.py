"""Training regimes, inference and generated-pair sampling"""
import csv
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
import torch
from PIL import Image
from tqdm import tqdm

from posegan.core.config import settings
from posegan.core.exceptions import (
    CheckpointError,
    ConfigError,
    DatasetError,
    HoldOutViolationError,
    NonFiniteLossError,
)
from posegan.core.init import resolve_device, seed_everything
from posegan.models.networks import Generator, PoseCritic, PosePrediction, sample_latent
from posegan.schemas.training import LossKind, Phase, Regime, TrainConfig
from posegan.services.checkpoint_service import (
    build_models,
    load_checkpoint,
    restore_models,
    save_checkpoint,
)
from posegan.services.dataset_service import (
    PreprocessedDataset,
    TrainingSample,
    collate,
    epoch_permutations,
    pair_tensor,
    prefetch,
)
from posegan.services.loss_functions import (
    critic_loss,
    generator_loss,
    gradient_penalty,
    supervised_loss,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

LOG_COLUMNS = [
    "iteration",
    "phase",
    "critic_loss",
    "gradient_penalty",
    "wasserstein_distance",
    "generator_loss",
    "pose_loss",
    "translation_loss",
    "rotation_loss",
    "reprojection_loss",
    "wall_time",
]


@dataclass
class Batch:
    pairs: torch.Tensor
    x: torch.Tensor
    q: torch.Tensor
    intrinsics: Optional[List[Any]] = None
    points: Optional[List[np.ndarray]] = None


@dataclass
class TrainResult:
    checkpoint: Path
    log: Path
    rows: int
    iteration: int
    last_row: Dict[str, Any] = field(default_factory=dict)


@dataclass
class InferenceResult:
    predictions: List[PosePrediction]
    timings: List[float]  # seconds per pair


class TrainingLog:
    """CSV log streamed row by row"""

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "w", newline="")
        self._writer = csv.DictWriter(self._file, fieldnames=LOG_COLUMNS, restval="")
        self._writer.writeheader()
        self.rows = 0

    def write(self, row: Dict[str, Any]) -> None:
        self._writer.writerow({k: row[k] for k in LOG_COLUMNS if k in row})
        self.rows += 1

    def flush(self) -> None:
        self._file.flush()

    def close(self) -> None:
        self._file.close()


def read_training_log(path: PathLike) -> List[Dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _sequence_of(dataset) -> List[str]:
    if isinstance(dataset, PreprocessedDataset):
        return dataset.sequences
    return sorted({s.sequence for s in dataset})


def check_holdout(dataset, test_sequence: Optional[str]) -> None:
    """Refuse to train when the test sequence (or its mirror) is in the data"""
    if test_sequence is None:
        return
    if test_sequence in _sequence_of(dataset):
        raise HoldOutViolationError(
            f"Test sequence {test_sequence} is present in the training data",
            test_sequence=test_sequence,
        )


class Trainer:
    """Runs one TrainConfig on a dataset and writes checkpoint and log into ``out_dir``"""

    def __init__(
        self,
        config: TrainConfig,
        dataset: Union[PreprocessedDataset, Sequence[TrainingSample]],
        out_dir: PathLike,
        device: Optional[torch.device] = None,
        show_progress: bool = False,
        init_checkpoint: Optional[PathLike] = None,
    ):
        self.config = config
        self.losses = config.loss_config
        self.dataset = dataset
        self.out_dir = Path(out_dir)
        self.device = device or resolve_device()
        self.show_progress = show_progress and sys.stderr.isatty()
        self.init_checkpoint = init_checkpoint

        self.critic: Optional[PoseCritic] = None
        self.generator: Optional[Generator] = None
        self.iteration = 0
        self.phase: Optional[Phase] = None
        self._start = 0.0

    # ── setup ──

    def _validate(self) -> None:
        if len(self.dataset) == 0:
            raise DatasetError("Training dataset is empty")
        check_holdout(self.dataset, self.config.test_sequence)
        if self.config.loss == LossKind.REPROJECTION:
            if not isinstance(self.dataset, PreprocessedDataset) or not self.dataset.has_points:
                raise ConfigError("The reprojection loss needs a dataset with points.jsonl")
            usable = self.dataset.with_points()
            if len(usable) < len(self.dataset):
                logger.warning(f"Skipping {len(self.dataset) - len(usable)} pairs without a point set")
            self.dataset = usable
        if self.config.iterations and self.config.batch_size > len(self.dataset):
            raise ConfigError(
                f"batch_size {self.config.batch_size} exceeds dataset size {len(self.dataset)}"
            )

    def _build(self) -> None:
        seed_everything(self.config.seed)
        if self.init_checkpoint is not None:
            self.critic, self.generator = restore_models(load_checkpoint(self.init_checkpoint))
            if self.critic.adversarial != self.config.adversarial:
                raise CheckpointError("Initial checkpoint does not match the configured regime")
        else:
            self.critic, self.generator = build_models(self.config)
        self.critic.to(self.device)
        if self.generator is not None:
            self.generator.to(self.device)
        self.latent_rng = torch.Generator().manual_seed(self.config.seed + 1)
        self.penalty_rng = torch.Generator().manual_seed(self.config.seed + 2)

    def _adam(self, params) -> torch.optim.Adam:
        return torch.optim.Adam(
            params,
            lr=self.config.learning_rate,
            betas=(self.config.adam_beta1, self.config.adam_beta2),
        )

    def _batches(self) -> Iterator[Batch]:
        ds = self.dataset
        with_points = self.config.loss == LossKind.REPROJECTION
        for indices in epoch_permutations(len(ds), self.config.batch_size, self.config.seed):
            samples = [ds[int(i)] for i in indices]
            pairs, x, q = collate(samples)
            batch = Batch(pairs, x, q)
            if with_points:
                records = [ds.records[int(i)] for i in indices]
                batch.intrinsics = [ds.intrinsics(r.seq) for r in records]
                batch.points = [ds.point_set(r)[: self.config.max_points] for r in records]
            yield batch

    def _to_device(self, batch: Batch) -> Batch:
        batch.pairs = batch.pairs.to(self.device)
        batch.x = batch.x.to(self.device)
        batch.q = batch.q.to(self.device)
        return batch

    def _latent(self, n: int) -> torch.Tensor:
        return sample_latent(
            n,
            latent_dim=self.config.model.latent_dim,
            distribution=self.config.model.latent_distribution,
            generator=self.latent_rng,
            device=self.device,
        )

    # ── steps ──

    def _check_finite(self, row: Dict[str, Any]) -> None:
        for key, value in row.items():
            if isinstance(value, float) and not np.isfinite(value):
                path = save_checkpoint(
                    self.out_dir / settings.DIAGNOSTIC_CHECKPOINT_FILENAME,
                    self.critic,
                    self.generator,
                    self.config,
                    self.iteration,
                    self.phase.value if self.phase else None,
                    extra={"failed_term": key, "failed_row": {k: str(v) for k, v in row.items()}},
                )
                raise NonFiniteLossError(
                    f"{key} became {value} at iteration {self.iteration}",
                    iteration=self.iteration,
                    phase=self.phase.value if self.phase else None,
                    term=key,
                    diagnostic_checkpoint=str(path),
                )

    def _supervised(self, batch: Batch, prediction: PosePrediction):
        return supervised_loss(
            self.config.loss,
            batch.x,
            batch.q,
            prediction.x_hat,
            prediction.q_hat,
            self.losses.beta,
            K=batch.intrinsics,
            points=batch.points,
        )

    def _adversarial_step(self, batches: Iterator[Batch], opt_d, opt_g, with_pose: bool) -> Dict[str, Any]:
        """critic_steps critic updates followed by one generator update"""
        row: Dict[str, Any] = {}
        for _ in range(self.losses.critic_steps):
            batch = self._to_device(next(batches))
            # Fakes are constants for the critic update
            with torch.no_grad():
                fake = self.generator(self._latent(batch.pairs.shape[0]))
            real_out = self.critic(batch.pairs)
            fake_scores = self.critic.score(fake)
            gp = gradient_penalty(batch.pairs, fake, self.critic.score, generator=self.penalty_rng)
            d_loss = critic_loss(real_out.score, fake_scores, gp, self.losses.gp_lambda)
            row.update(
                critic_loss=d_loss.item(),
                gradient_penalty=gp.item(),
                wasserstein_distance=(real_out.score.mean() - fake_scores.mean()).item(),
            )
            if with_pose:
                pose_loss, components = self._supervised(batch, real_out.pose)
                d_loss = d_loss + pose_loss
                row.update(components)
            self._check_finite(row)
            opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            opt_d.step()

        # Generator update; stale critic gradients are cleared by the next zero_grad
        g_loss = generator_loss(self.critic.score(self.generator(self._latent(self.config.batch_size))))
        row["generator_loss"] = g_loss.item()
        self._check_finite(row)
        opt_g.zero_grad(set_to_none=True)
        g_loss.backward()
        opt_g.step()
        return row

    def _pose_step(self, batches: Iterator[Batch], opt_p) -> Dict[str, Any]:
        batch = self._to_device(next(batches))
        loss, row = self._supervised(batch, self.critic.pose(batch.pairs))
        self._check_finite(row)
        opt_p.zero_grad(set_to_none=True)
        loss.backward()
        opt_p.step()
        return row

    def _freeze_adversarial(self) -> None:
        if self.generator is not None:
            self.generator.requires_grad_(False)
            self.generator.eval()
        if self.critic.score_head is not None:
            self.critic.score_head.requires_grad_(False)

    # ── main loop ──

    def run(self) -> TrainResult:
        self._validate()
        self._build()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = self.out_dir / settings.CHECKPOINT_FILENAME
        log = TrainingLog(self.out_dir / settings.TRAINING_LOG_FILENAME)
        plan = self.config.phase_plan()
        logger.info(
            f"Training {self.config.regime.value} on {len(self.dataset)} pairs: "
            + ", ".join(f"{phase.value}={n}" for phase, n in plan)
        )

        row: Dict[str, Any] = {}
        self._start = time.perf_counter()
        stream = prefetch(self._batches()) if self.config.iterations else iter(())
        try:
            self.critic.train()
            if self.generator is not None:
                self.generator.train()
            with tqdm(total=self.config.iterations, disable=not self.show_progress, desc="train") as bar:
                for phase, n_iters in plan:
                    if n_iters == 0:
                        continue
                    self.phase = phase
                    step = self._phase_step(phase, stream)
                    for _ in range(n_iters):
                        self.iteration += 1
                        row = step()
                        row.update(
                            iteration=self.iteration,
                            phase=phase.value,
                            wall_time=round(time.perf_counter() - self._start, 6),
                        )
                        log.write(row)
                        bar.update(1)
                        # Periodic progress and checkpoints
                        if self.iteration % self.config.log_interval == 0:
                            log.flush()
                            logger.info(self._progress_message(row))
                        if self.config.checkpoint_interval and self.iteration % self.config.checkpoint_interval == 0:
                            save_checkpoint(
                                checkpoint_path, self.critic, self.generator, self.config, self.iteration, phase.value
                            )
        finally:
            log.close()
            if hasattr(stream, "close"):
                stream.close()

        save_checkpoint(
            checkpoint_path,
            self.critic,
            self.generator,
            self.config,
            self.iteration,
            self.phase.value if self.phase else None,
        )
        logger.info(f"Finished after {self.iteration} iterations; checkpoint at {checkpoint_path}")
        return TrainResult(checkpoint_path, log.path, log.rows, self.iteration, row)

    def _phase_step(self, phase: Phase, stream: Iterator[Batch]):
        if phase == Phase.POSE:
            if self.config.regime == Regime.SEMI_SUPERVISED:
                self._freeze_adversarial()
            opt_p = self._adam([p for p in self.critic.regression_parameters() if p.requires_grad])
            return lambda: self._pose_step(stream, opt_p)
        opt_g = self._adam(self.generator.parameters())
        if phase == Phase.SIMULTANEOUS:
            opt_d = self._adam(self.critic.parameters())
            return lambda: self._adversarial_step(stream, opt_d, opt_g, with_pose=True)
        opt_d = self._adam(self.critic.adversarial_parameters())
        return lambda: self._adversarial_step(stream, opt_d, opt_g, with_pose=False)

    @staticmethod
    def _progress_message(row: Dict[str, Any]) -> str:
        parts = [f"iter {row['iteration']} [{row['phase']}]"]
        for key in ("critic_loss", "generator_loss", "pose_loss"):
            if key in row:
                parts.append(f"{key}={row[key]:.4f}")
        return " ".join(parts)


def train(
    config: TrainConfig,
    dataset: Union[PreprocessedDataset, Sequence[TrainingSample]],
    out_dir: PathLike,
    device: Optional[torch.device] = None,
    show_progress: bool = False,
    init_checkpoint: Optional[PathLike] = None,
) -> TrainResult:
    return Trainer(config, dataset, out_dir, device, show_progress, init_checkpoint).run()


# ── Inference ────────────────────────────────────────────────────────


def _pair_input(item) -> torch.Tensor:
    if isinstance(item, TrainingSample):
        return pair_tensor(*item.pair)
    if isinstance(item, tuple) and len(item) == 2:
        return pair_tensor(*item)
    return item


@torch.no_grad()
def infer(
    model: Union[PathLike, PoseCritic],
    pairs,
    device: Optional[torch.device] = None,
) -> InferenceResult:
    """Per-pair pose predictions with wall-clock time of each forward pass"""
    device = device or resolve_device()
    if isinstance(model, PoseCritic):
        critic = model.to(device)
    else:
        critic, _ = restore_models(load_checkpoint(model), device)
    was_training = critic.training
    critic.eval()
    predictions, timings = [], []
    try:
        for item in pairs:
            tensor = _pair_input(item).to(device)
            start = time.perf_counter()
            pred = critic.pose(tensor)
            if device.type == "cuda":
                torch.cuda.synchronize(device)
            timings.append(time.perf_counter() - start)
            predictions.append(PosePrediction(pred.x_hat[0].cpu(), pred.q_hat[0].cpu()))
    finally:
        critic.train(was_training)
    if timings:
        logger.info(f"Inferred {len(timings)} pairs, mean {1000 * np.mean(timings):.2f} ms/pair")
    return InferenceResult(predictions, timings)


def to_uint8(image: torch.Tensor) -> np.ndarray:
    """[-1, 1] to 8-bit"""
    return np.clip(np.rint((image.cpu().numpy() + 1.0) * 127.5), 0, 255).astype(np.uint8)


@torch.no_grad()
def sample_pairs(
    checkpoint: PathLike, n: int, seed: int, out_dir: PathLike, device: Optional[torch.device] = None
) -> List[Path]:
    """Render ``n`` generated pairs as ``pair_<k>_a.png`` / ``pair_<k>_b.png``"""
    device = device or resolve_device()
    ckpt = load_checkpoint(checkpoint)
    _, generator = restore_models(ckpt, device)
    if generator is None:
        raise CheckpointError("Checkpoint has no generator (trained with only_vo)")
    generator.eval()
    z = sample_latent(
        n,
        seed=seed,
        latent_dim=ckpt.config.model.latent_dim,
        distribution=ckpt.config.model.latent_distribution,
        device=device,
    )
    images = generator(z)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, pair in enumerate(images):
        for channel, suffix in enumerate("ab"):
            path = out_dir / f"pair_{k:04d}_{suffix}.png"
            Image.fromarray(to_uint8(pair[channel])).save(path)
            paths.append(path)
    logger.info(f"Wrote {n} generated pairs to {out_dir}")
    return paths
