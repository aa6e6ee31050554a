"""Torch networks"""
from posegan.models.networks import (
    CriticOutput,
    Generator,
    PoseCritic,
    PosePrediction,
    architecture_hash,
    discriminate,
    generate,
    sample_latent,
)

__all__ = [
    "CriticOutput",
    "Generator",
    "PoseCritic",
    "PosePrediction",
    "architecture_hash",
    "discriminate",
    "generate",
    "sample_latent",
]
