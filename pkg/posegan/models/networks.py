"""Generator and two-headed critic/pose regressor"""
import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from posegan.core.exceptions import ShapeError
from posegan.schemas.training import LatentDistribution, ModelConfig

logger = logging.getLogger(__name__)

PAIR_SHAPE = (2, 96, 128)
# Spatial size after four stride-2 stages
FEATURE_HEIGHT = 6
FEATURE_WIDTH = 8
POSE_OUTPUTS = 7


@dataclass
class PosePrediction:
    """Raw pose head output; ``q_hat`` is not normalized"""

    x_hat: torch.Tensor
    q_hat: torch.Tensor

    def as_vector(self) -> torch.Tensor:
        return torch.cat([self.x_hat, self.q_hat], dim=-1)


@dataclass
class CriticOutput:
    score: Optional[torch.Tensor]
    pose: PosePrediction


def check_pair_batch(pairs: torch.Tensor) -> torch.Tensor:
    """Accept 2x96x128 or Bx2x96x128, return the batched form"""
    if pairs.dim() == 3:
        pairs = pairs.unsqueeze(0)
    if pairs.dim() != 4 or tuple(pairs.shape[1:]) != PAIR_SHAPE:
        raise ShapeError(
            f"Expected pair tensor of shape (B, {', '.join(map(str, PAIR_SHAPE))}), got {tuple(pairs.shape)}"
        )
    return pairs


def init_weights(module: nn.Module) -> None:
    """Conv N(0, 0.02); fully-connected uniform in +-1/sqrt(fan_in)"""
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Linear):
        bound = 1.0 / math.sqrt(module.in_features)
        nn.init.uniform_(module.weight, -bound, bound)
        nn.init.uniform_(module.bias, -bound, bound)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


class Generator(nn.Module):
    """Latent vector to a 2x96x128 frame pair in [-1, 1]"""

    def __init__(self, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = config or ModelConfig()
        c = self.config.base_channels
        self.latent_dim = self.config.latent_dim
        self.top_channels = 8 * c
        self.project = nn.Linear(self.latent_dim, self.top_channels * FEATURE_HEIGHT * FEATURE_WIDTH)
        self.project_norm = nn.BatchNorm2d(self.top_channels)

        layers = []
        widths = [8 * c, 4 * c, 2 * c, c]
        for c_in, c_out in zip(widths, widths[1:]):
            layers += [
                nn.ConvTranspose2d(c_in, c_out, 4, stride=2, padding=1, bias=False),
                nn.BatchNorm2d(c_out),
                nn.ReLU(inplace=True),
            ]
        layers += [nn.ConvTranspose2d(c, PAIR_SHAPE[0], 4, stride=2, padding=1), nn.Tanh()]
        self.upsample = nn.Sequential(*layers)
        self.apply(init_weights)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.dim() != 2 or z.shape[1] != self.latent_dim:
            raise ShapeError(f"Expected latent batch (B, {self.latent_dim}), got {tuple(z.shape)}")
        h = self.project(z).view(-1, self.top_channels, FEATURE_HEIGHT, FEATURE_WIDTH)
        h = torch.relu(self.project_norm(h))
        return self.upsample(h)


class PoseCritic(nn.Module):
    """Shared convolutional trunk with a Wasserstein score head and a pose head.

    No batch normalization: the gradient penalty is taken per sample, so the
    trunk uses a per-sample layer norm (GroupNorm with one group) instead.
    With ``adversarial=False`` the score head is not built (Only-VO network).
    """

    def __init__(self, config: Optional[ModelConfig] = None, adversarial: bool = True):
        super().__init__()
        self.config = config or ModelConfig()
        self.adversarial = adversarial
        c = self.config.base_channels
        slope = self.config.leaky_slope

        widths = [PAIR_SHAPE[0], c, 2 * c, 4 * c, 8 * c]
        layers = []
        for i, (c_in, c_out) in enumerate(zip(widths, widths[1:])):
            layers.append(nn.Conv2d(c_in, c_out, 4, stride=2, padding=1))
            if i > 0:
                layers.append(nn.GroupNorm(1, c_out))
            layers.append(nn.LeakyReLU(slope, inplace=True))
        self.trunk = nn.Sequential(*layers)

        features = 8 * c * FEATURE_HEIGHT * FEATURE_WIDTH
        hidden1, hidden2 = self.config.pose_hidden
        self.score_head = nn.Linear(features, 1) if adversarial else None
        self.pose_head = nn.Sequential(
            nn.Linear(features, hidden1),
            nn.LeakyReLU(slope, inplace=True),
            nn.Linear(hidden1, hidden2),
            nn.LeakyReLU(slope, inplace=True),
            nn.Linear(hidden2, POSE_OUTPUTS),
        )
        self.apply(init_weights)
        # untrained predictions start at zero translation and the identity rotation
        with torch.no_grad():
            self.pose_head[-1].bias.copy_(torch.tensor([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]))

    def features(self, pairs: torch.Tensor) -> torch.Tensor:
        return torch.flatten(self.trunk(check_pair_batch(pairs)), 1)

    def score(self, pairs: torch.Tensor) -> torch.Tensor:
        """Unbounded critic score, shape (B,)"""
        if self.score_head is None:
            raise ShapeError("This network was built without a score head")
        return self.score_head(self.features(pairs)).squeeze(1)

    def pose(self, pairs: torch.Tensor) -> PosePrediction:
        out = self.pose_head(self.features(pairs))
        return PosePrediction(out[:, :3], out[:, 3:])

    def forward(self, pairs: torch.Tensor) -> CriticOutput:
        h = self.features(pairs)
        out = self.pose_head(h)
        score = self.score_head(h).squeeze(1) if self.score_head is not None else None
        return CriticOutput(score, PosePrediction(out[:, :3], out[:, 3:]))

    def adversarial_parameters(self):
        """Parameters updated by the critic objective: trunk and score head"""
        params = list(self.trunk.parameters())
        if self.score_head is not None:
            params += list(self.score_head.parameters())
        return params

    def regression_parameters(self):
        """Trunk and pose head"""
        return list(self.trunk.parameters()) + list(self.pose_head.parameters())


def generate(z: torch.Tensor, generator: Generator) -> torch.Tensor:
    return generator(z)


def discriminate(pairs: torch.Tensor, critic: PoseCritic) -> CriticOutput:
    return critic(pairs)


def sample_latent(
    batch: int,
    seed: Optional[int] = None,
    latent_dim: int = 128,
    distribution: LatentDistribution = LatentDistribution.UNIFORM,
    generator: Optional[torch.Generator] = None,
    device: Optional[torch.device] = None,
) -> torch.Tensor:
    """Latent batch; uniform on [-1, 1] or standard normal"""
    if batch < 1:
        raise ShapeError(f"batch must be >= 1, got {batch}")
    if generator is None:
        generator = torch.Generator()
        if seed is not None:
            generator.manual_seed(seed)
        else:
            generator.seed()
    if LatentDistribution(distribution) == LatentDistribution.NORMAL:
        z = torch.randn(batch, latent_dim, generator=generator)
    else:
        z = torch.rand(batch, latent_dim, generator=generator) * 2.0 - 1.0
    return z.to(device) if device is not None else z


def architecture_hash(module: nn.Module) -> str:
    """sha256 over the ordered parameter and buffer names and shapes"""
    digest = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        digest.update(f"{name}:{tuple(tensor.shape)};".encode())
    return digest.hexdigest()
