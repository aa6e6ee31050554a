"""Supervised pose losses, reprojection loss and the WGAN-GP objectives.

Per-sample terms are computed on batched tensors and reduced with a batch
mean. Everything is differentiable and dtype-agnostic so gradient checks
can run in float64.
"""
import logging
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from posegan.core.exceptions import DegenerateLossError, PointBehindCameraError, ShapeError
from posegan.schemas.dataset import CameraIntrinsics
from posegan.schemas.training import LossKind

logger = logging.getLogger(__name__)

TensorLike = Union[torch.Tensor, np.ndarray, Sequence[float]]


def _as_tensor(value, like: Optional[torch.Tensor] = None) -> torch.Tensor:
    if isinstance(value, CameraIntrinsics):
        value = value.matrix()
    if isinstance(value, torch.Tensor):
        return value if like is None else value.to(like.dtype)
    dtype = like.dtype if like is not None else torch.float64
    return torch.as_tensor(np.asarray(value, dtype=np.float64), dtype=dtype)


# ── Supervised pose losses ───────────────────────────────────────────


def translation_error(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Per-sample ``||x - x_hat||``"""
    return torch.linalg.vector_norm(x - x_hat, dim=-1)


def rotation_error(q: torch.Tensor, q_hat: torch.Tensor) -> torch.Tensor:
    """Per-sample ``||q - q_hat||`` on the raw (unnormalized) estimate"""
    return torch.linalg.vector_norm(q - q_hat, dim=-1)


def loss_translation(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    return translation_error(x, x_hat).mean()


def loss_rotation(q: torch.Tensor, q_hat: torch.Tensor) -> torch.Tensor:
    return rotation_error(q, q_hat).mean()


def loss_beta(
    x: torch.Tensor, q: torch.Tensor, x_hat: torch.Tensor, q_hat: torch.Tensor, beta: float
) -> torch.Tensor:
    """``L_x + beta * L_q``"""
    return loss_translation(x, x_hat) + beta * loss_rotation(q, q_hat)


# ── Reprojection ─────────────────────────────────────────────────────


def quaternion_to_rotation_matrix(q: torch.Tensor) -> torch.Tensor:
    """(..., 4) quaternions (w, x, y, z), normalized first, to (..., 3, 3)"""
    q = q / torch.linalg.vector_norm(q, dim=-1, keepdim=True).clamp_min(1e-12)
    w, x, y, z = q.unbind(-1)
    rows = [
        1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
        2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
        2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y),
    ]
    return torch.stack(rows, dim=-1).reshape(q.shape[:-1] + (3, 3))


def _transform(A: torch.Tensor, points: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return points @ A.transpose(-1, -2) + b.unsqueeze(-2)


def _perspective(K: torch.Tensor, camera_points: torch.Tensor) -> torch.Tensor:
    h = camera_points @ K.transpose(-1, -2)
    return h[..., :2] / h[..., 2:3]


def project(A: TensorLike, x: TensorLike, b: TensorLike, K: Union[CameraIntrinsics, TensorLike]) -> torch.Tensor:
    """``pi(K (A x + b))`` for a (3,) point or (N, 3) points"""
    A = _as_tensor(A)
    x = _as_tensor(x, A)
    b = _as_tensor(b, A)
    K = _as_tensor(K, A)
    single = x.dim() == 1
    points = _transform(A, x.reshape(-1, 3), b)
    if torch.any(points[:, 2] <= 0):
        raise PointBehindCameraError(
            f"{int((points[:, 2] <= 0).sum())} point(s) have non-positive depth"
        )
    pixels = _perspective(K, points)
    return pixels[0] if single else pixels


def reprojection_errors(
    x: torch.Tensor,
    q: torch.Tensor,
    x_hat: torch.Tensor,
    q_hat: torch.Tensor,
    K: torch.Tensor,
    points: torch.Tensor,
) -> Tuple[torch.Tensor, int]:
    """Pixel distances of one pair's points under the true and the estimated motion.

    Returns the per-point errors of points in front of both cameras and the
    number of excluded points.
    """
    R = quaternion_to_rotation_matrix(q)
    R_hat = quaternion_to_rotation_matrix(q_hat)
    true_cam = _transform(R, points, x)
    pred_cam = _transform(R_hat, points, x_hat)
    keep = (true_cam[:, 2] > 0) & (pred_cam[:, 2] > 0)
    excluded = int((~keep).sum())
    if excluded:
        true_cam, pred_cam = true_cam[keep], pred_cam[keep]
    errors = torch.linalg.vector_norm(_perspective(K, true_cam) - _perspective(K, pred_cam), dim=-1)
    return errors, excluded


def loss_reprojection(
    x: torch.Tensor,
    q: torch.Tensor,
    x_hat: torch.Tensor,
    q_hat: torch.Tensor,
    K: Union[CameraIntrinsics, TensorLike, Sequence],
    points: Union[TensorLike, Sequence[TensorLike]],
) -> torch.Tensor:
    """Mean pixel reprojection error, averaged per pair then over the batch.

    ``points`` is one (N, 3) set per pair (or a single set for unbatched
    input); ``K`` is shared or given per pair.
    """
    if x.dim() == 1:
        x, q, x_hat, q_hat = x[None], q[None], x_hat[None], q_hat[None]
        points = [points]
    batch = x.shape[0]
    if len(points) != batch:
        raise DegenerateLossError(f"{len(points)} point sets for a batch of {batch}")
    per_pair_K = not _is_single_matrix(K)

    per_pair = []
    excluded = 0
    for i in range(batch):
        K_i = _as_tensor(K[i] if per_pair_K else K, x_hat)
        G = _as_tensor(points[i], x_hat).reshape(-1, 3)
        if G.shape[0] == 0:
            continue
        errors, dropped = reprojection_errors(x[i], q[i], x_hat[i], q_hat[i], K_i, G)
        excluded += dropped
        if errors.numel():
            per_pair.append(errors.mean())
    if excluded:
        logger.warning(f"Reprojection loss: excluded {excluded} point(s) behind a camera")
    if not per_pair:
        raise DegenerateLossError("No point survived the depth checks of the reprojection loss")
    if len(per_pair) < batch:
        logger.warning(f"Reprojection loss: {batch - len(per_pair)} pair(s) without usable points")
    return torch.stack(per_pair).mean()


def _is_single_matrix(K) -> bool:
    if isinstance(K, CameraIntrinsics):
        return True
    shape = np.shape(K) if not isinstance(K, torch.Tensor) else tuple(K.shape)
    return shape == (3, 3)


# ── Adversarial objectives ───────────────────────────────────────────


def gradient_penalty(
    real: torch.Tensor,
    fake: torch.Tensor,
    critic: Callable[[torch.Tensor], torch.Tensor],
    seed: Optional[int] = None,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Mean of ``(||grad critic(interp)|| - 1)^2`` at per-sample convex interpolates"""
    if real.shape != fake.shape:
        raise ShapeError(f"real {tuple(real.shape)} and fake {tuple(fake.shape)} differ in shape")
    if generator is None and seed is not None:
        generator = torch.Generator().manual_seed(seed)
    batch = real.shape[0]
    eps = torch.rand(batch, generator=generator, dtype=real.dtype).to(real.device)
    eps = eps.view(batch, *([1] * (real.dim() - 1)))
    interp = (eps * real.detach() + (1 - eps) * fake.detach()).requires_grad_(True)
    scores = critic(interp)
    if scores.requires_grad:
        grads = torch.autograd.grad(
            outputs=scores,
            inputs=interp,
            grad_outputs=torch.ones_like(scores),
            create_graph=True,
            retain_graph=True,
            allow_unused=True,
        )[0]
    else:
        grads = None
    if grads is None:
        grads = torch.zeros_like(interp)
    norms = torch.linalg.vector_norm(grads.reshape(batch, -1), dim=1)
    return ((norms - 1.0) ** 2).mean()


def critic_loss(
    real_scores: torch.Tensor, fake_scores: torch.Tensor, gp: torch.Tensor, gp_lambda: float
) -> torch.Tensor:
    """Wasserstein critic objective with gradient penalty (minimized)"""
    return fake_scores.mean() - real_scores.mean() + gp_lambda * gp


def generator_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    return -fake_scores.mean()


# ── Selection ────────────────────────────────────────────────────────


def supervised_loss(
    kind: LossKind,
    x: torch.Tensor,
    q: torch.Tensor,
    x_hat: torch.Tensor,
    q_hat: torch.Tensor,
    beta: float,
    K=None,
    points=None,
) -> Tuple[torch.Tensor, Dict[str, float]]:
    """The configured supervised objective and its logged components"""
    l_x = loss_translation(x, x_hat)
    l_q = loss_rotation(q, q_hat)
    components = {"translation_loss": l_x.item(), "rotation_loss": l_q.item()}
    if LossKind(kind) == LossKind.REPROJECTION:
        if K is None or points is None:
            raise DegenerateLossError("Reprojection loss needs intrinsics and point sets")
        loss = loss_reprojection(x, q, x_hat, q_hat, K, points)
        components["reprojection_loss"] = loss.item()
    else:
        loss = l_x + beta * l_q
    components["pose_loss"] = loss.item()
    return loss, components
