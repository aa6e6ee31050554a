"""Checkpoint archives: named parameter tensors plus a JSON metadata block"""
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import torch

from posegan import __version__
from posegan.core.exceptions import CheckpointError
from posegan.models.networks import Generator, PoseCritic, architecture_hash
from posegan.schemas.training import TrainConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    critic_state: Dict[str, torch.Tensor]
    generator_state: Optional[Dict[str, torch.Tensor]]
    metadata: Dict[str, Any]

    @property
    def config(self) -> TrainConfig:
        return TrainConfig.model_validate(self.metadata["config"])

    @property
    def iteration(self) -> int:
        return int(self.metadata["iteration"])

    @property
    def phase(self) -> Optional[str]:
        return self.metadata.get("phase")


def config_payload(config: TrainConfig) -> Dict[str, Any]:
    """TrainConfig as stored in metadata.

    Only explicitly set fields are kept so the regime check accepts the
    config again on load; the network block is stored in full.
    """
    payload = config.model_dump(mode="json", exclude_unset=True)
    payload["model"] = config.model.model_dump(mode="json")
    return payload


def save_checkpoint(
    path: PathLike,
    critic: PoseCritic,
    generator: Optional[Generator],
    config: TrainConfig,
    iteration: int,
    phase: Optional[str] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write atomically: a reader never sees a half-written archive"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {
        "version": __version__,
        "architecture": {
            "critic": architecture_hash(critic),
            "generator": architecture_hash(generator) if generator is not None else None,
        },
        "adversarial": critic.adversarial,
        "iteration": iteration,
        "phase": phase,
        "config": config_payload(config),
    }
    if extra:
        metadata.update(extra)
    archive = {
        "critic": {k: v.detach().cpu() for k, v in critic.state_dict().items()},
        "generator": (
            {k: v.detach().cpu() for k, v in generator.state_dict().items()} if generator is not None else None
        ),
        "metadata": json.dumps(metadata, sort_keys=True),
    }
    tmp = path.with_name(path.name + ".tmp")
    torch.save(archive, tmp)
    os.replace(tmp, path)
    logger.debug(f"Checkpoint written to {path} (iteration {iteration})")
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}", path=str(path))
    try:
        archive = torch.load(path, map_location="cpu", weights_only=True)
        metadata = json.loads(archive["metadata"])
        return Checkpoint(archive["critic"], archive.get("generator"), metadata)
    except CheckpointError:
        raise
    except Exception as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}", path=str(path))


def build_models(config: TrainConfig) -> Tuple[PoseCritic, Optional[Generator]]:
    critic = PoseCritic(config.model, adversarial=config.adversarial)
    generator = Generator(config.model) if config.adversarial else None
    return critic, generator


def restore_models(
    checkpoint: Checkpoint, device: Optional[torch.device] = None
) -> Tuple[PoseCritic, Optional[Generator]]:
    """Rebuild the networks described by the metadata and load their weights"""
    try:
        config = checkpoint.config
    except Exception as e:
        raise CheckpointError(f"Checkpoint metadata holds an invalid config: {e}")
    critic, generator = build_models(config)
    expected = checkpoint.metadata.get("architecture", {})
    _load(critic, checkpoint.critic_state, expected.get("critic"), "critic")
    if generator is not None:
        if checkpoint.generator_state is None:
            raise CheckpointError("Checkpoint lacks generator weights")
        _load(generator, checkpoint.generator_state, expected.get("generator"), "generator")
    if device is not None:
        critic.to(device)
        if generator is not None:
            generator.to(device)
    return critic, generator


def _load(module: torch.nn.Module, state: Dict[str, torch.Tensor], expected_hash: Optional[str], name: str) -> None:
    actual = architecture_hash(module)
    if expected_hash != actual:
        raise CheckpointError(
            f"{name} architecture mismatch",
            expected=expected_hash,
            actual=actual,
        )
    try:
        module.load_state_dict(state, strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"Cannot load {name} weights: {e}")
