"""Pydantic schemas"""
from posegan.schemas.dataset import CameraIntrinsics, PairRecord, PointSetRecord
from posegan.schemas.evaluation import LengthError, MetricReport
from posegan.schemas.training import (
    LatentDistribution,
    LossConfig,
    LossKind,
    ModelConfig,
    Phase,
    Regime,
    TrainConfig,
)

__all__ = [
    "CameraIntrinsics",
    "PairRecord",
    "PointSetRecord",
    "LengthError",
    "MetricReport",
    "LatentDistribution",
    "LossConfig",
    "LossKind",
    "ModelConfig",
    "Phase",
    "Regime",
    "TrainConfig",
]
