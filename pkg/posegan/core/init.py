"""Runtime initialization: torch threads, device selection, seeding"""
import logging
import random

import numpy as np
import torch

from posegan.core.config import settings

logger = logging.getLogger(__name__)


def resolve_device(name: str = None) -> torch.device:
    """Map DEVICE setting (cpu|cuda|auto) to a torch device"""
    name = name or settings.DEVICE
    if name == "auto":
        name = "cuda" if torch.cuda.is_available() else "cpu"
    if name == "cuda" and not torch.cuda.is_available():
        logger.warning("CUDA requested but not available, falling back to CPU")
        name = "cpu"
    return torch.device(name)


def seed_everything(seed: int) -> None:
    """Seed every RNG the pipeline touches"""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def init_runtime(seed: int = None, device: str = None) -> torch.device:
    """Apply thread/determinism settings and return the working device"""
    if settings.TORCH_NUM_THREADS > 0:
        torch.set_num_threads(settings.TORCH_NUM_THREADS)
    torch.backends.cudnn.benchmark = False
    torch.backends.cudnn.deterministic = True
    seed_everything(settings.DEFAULT_SEED if seed is None else seed)
    device = resolve_device(device)
    logger.debug(f"Runtime ready on {device} (threads={torch.get_num_threads()})")
    return device
