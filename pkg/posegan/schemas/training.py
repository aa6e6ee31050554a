"""Training configuration schemas"""
from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class Regime(str, Enum):
    """Training regime"""
    SEMI_SUPERVISED = "semi_supervised"
    ONLY_VO = "only_vo"
    SIMULTANEOUS = "simultaneous"
    ADVERSARIAL_ONLY = "adversarial_only"


class LossKind(str, Enum):
    """Supervised pose objective"""
    BETA = "beta"
    REPROJECTION = "reprojection"


class LatentDistribution(str, Enum):
    UNIFORM = "uniform"
    NORMAL = "normal"


class Phase(str, Enum):
    """Training phase recorded in every log row"""
    ADVERSARIAL = "adversarial"
    POSE = "pose"
    SIMULTANEOUS = "simultaneous"


class ModelConfig(BaseModel):
    """Network widths; defaults are the documented DCGAN-style topology"""
    latent_dim: int = Field(default=128, ge=1, description="Length of the generator input vector")
    base_channels: int = Field(default=64, ge=1, description="Width of the first critic conv stage")
    pose_hidden: Tuple[int, int] = Field(default=(1024, 128))
    leaky_slope: float = Field(default=0.2, ge=0, lt=1)
    latent_distribution: LatentDistribution = LatentDistribution.UNIFORM


class LossConfig(BaseModel):
    """Weights of the adversarial and supervised objectives"""
    beta: float = Field(default=100.0, gt=0)
    gp_lambda: float = Field(default=10.0, ge=0)
    critic_steps: int = Field(default=5, ge=1)


class TrainConfig(BaseModel):
    """Everything a training run needs besides the data"""
    regime: Regime = Regime.SEMI_SUPERVISED
    adversarial_iters: int = Field(default=10000, ge=0)
    pose_iters: int = Field(default=40000, ge=0)
    total_iters: int = Field(default=50000, ge=0)
    batch_size: int = Field(default=100, ge=1)
    learning_rate: float = Field(default=1e-4, gt=0)
    beta: float = Field(default=100.0, gt=0)
    seed: int = 0
    test_sequence: Optional[str] = None

    loss: LossKind = LossKind.BETA
    gp_lambda: float = Field(default=10.0, ge=0)
    critic_steps: int = Field(default=5, ge=1)
    adam_beta1: float = Field(default=0.5, ge=0, lt=1)
    adam_beta2: float = Field(default=0.9, ge=0, lt=1)
    checkpoint_interval: int = Field(default=5000, ge=0, description="0 writes only the final checkpoint")
    log_interval: int = Field(default=100, ge=1)
    max_points: int = Field(default=200, ge=1, description="Points per pair used by the reprojection loss")
    model: ModelConfig = Field(default_factory=ModelConfig)

    model_config = {"extra": "forbid", "protected_namespaces": ()}

    @model_validator(mode="after")
    def check_regime_fields(self):
        explicit = self.model_fields_set
        if self.regime == Regime.SEMI_SUPERVISED:
            if "total_iters" in explicit and self.total_iters != self.adversarial_iters + self.pose_iters:
                raise ValueError(
                    "semi_supervised uses adversarial_iters + pose_iters; "
                    f"total_iters={self.total_iters} disagrees"
                )
        else:
            stray = sorted({"adversarial_iters", "pose_iters"} & explicit)
            if stray:
                raise ValueError(f"{', '.join(stray)} only apply to the semi_supervised regime")
        return self

    @property
    def loss_config(self) -> LossConfig:
        return LossConfig(beta=self.beta, gp_lambda=self.gp_lambda, critic_steps=self.critic_steps)

    @property
    def adversarial(self) -> bool:
        """Whether the critic carries a score head"""
        return self.regime != Regime.ONLY_VO

    def phase_plan(self) -> List[Tuple[Phase, int]]:
        """Ordered (phase, iterations) for this regime"""
        if self.regime == Regime.SEMI_SUPERVISED:
            return [(Phase.ADVERSARIAL, self.adversarial_iters), (Phase.POSE, self.pose_iters)]
        if self.regime == Regime.ONLY_VO:
            return [(Phase.POSE, self.total_iters)]
        if self.regime == Regime.SIMULTANEOUS:
            return [(Phase.SIMULTANEOUS, self.total_iters)]
        return [(Phase.ADVERSARIAL, self.total_iters)]

    @property
    def iterations(self) -> int:
        return sum(n for _, n in self.phase_plan())
