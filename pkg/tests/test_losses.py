"""Pose losses, reprojection loss and WGAN-GP objectives."""
import numpy as np
import pytest
import torch
from torch.autograd import gradcheck

K = np.array([[100.0, 0.0, 50.0], [0.0, 100.0, 40.0], [0.0, 0.0, 1.0]])
IDENTITY_Q = [1.0, 0.0, 0.0, 0.0]


def _double(*shape, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=g, dtype=torch.float64)


def test_loss_beta_values():
    """L_beta = mean ||x - x_hat|| + beta * mean ||q - q_hat|| on the raw estimate."""
    from posegan.services.loss_functions import loss_beta, loss_rotation, loss_translation
    x = torch.zeros(2, 3)
    x_hat = torch.tensor([[3.0, 4.0, 0.0], [0.0, 0.0, 0.0]])
    q = torch.tensor([IDENTITY_Q, IDENTITY_Q])
    q_hat = torch.tensor([[2.0, 0.0, 0.0, 0.0], IDENTITY_Q])
    assert loss_translation(x, x_hat).item() == pytest.approx(2.5)
    assert loss_rotation(q, q_hat).item() == pytest.approx(0.5)
    assert loss_beta(x, q, x_hat, q_hat, 100.0).item() == pytest.approx(52.5)
    assert loss_beta(x, q, x, q, 100.0).item() == 0.0


def test_pose_loss_gradients():
    """L_x, L_q and L_beta match central differences in float64 at 20 random points."""
    from posegan.services.loss_functions import loss_beta, loss_rotation, loss_translation
    for seed in range(0, 80, 4):
        x, q = _double(4, 3, seed=seed), _double(4, 4, seed=seed + 1)
        x_hat = _double(4, 3, seed=seed + 2).requires_grad_(True)
        q_hat = _double(4, 4, seed=seed + 3).requires_grad_(True)
        assert gradcheck(lambda a: loss_translation(x, a), (x_hat,), eps=1e-5, atol=1e-6, rtol=1e-4)
        assert gradcheck(lambda b: loss_rotation(q, b), (q_hat,), eps=1e-5, atol=1e-6, rtol=1e-4)
        assert gradcheck(
            lambda a, b: loss_beta(x, q, a, b, 100.0), (x_hat, q_hat), eps=1e-5, atol=1e-5, rtol=1e-4
        )


def test_project_known_point():
    from posegan.services.loss_functions import project
    pixel = project(np.eye(3), [1.0, 2.0, 10.0], np.zeros(3), K)
    assert torch.allclose(pixel, torch.tensor([60.0, 60.0], dtype=torch.float64))


def test_project_behind_camera():
    from posegan.core.exceptions import PointBehindCameraError
    from posegan.services.loss_functions import project
    with pytest.raises(PointBehindCameraError):
        project(np.eye(3), [[0.0, 0.0, 5.0], [0.0, 0.0, -1.0]], np.zeros(3), K)


def test_reprojection_known_offset():
    """A 1 m lateral error at 10 m depth is fx/10 = 10 pixels."""
    from posegan.services.loss_functions import loss_reprojection
    x = torch.zeros(3, dtype=torch.float64)
    q = torch.tensor(IDENTITY_Q, dtype=torch.float64)
    x_hat = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    points = [[0.0, 0.0, 10.0], [2.0, -1.0, 10.0]]
    assert loss_reprojection(x, q, x_hat, q, K, points).item() == pytest.approx(10.0)
    assert loss_reprojection(x, q, x, q, K, points).item() == 0.0


def test_reprojection_excludes_points_behind(caplog):
    from posegan.services.loss_functions import loss_reprojection
    x = torch.zeros(3, dtype=torch.float64)
    q = torch.tensor(IDENTITY_Q, dtype=torch.float64)
    x_hat = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    with caplog.at_level("WARNING"):
        loss = loss_reprojection(x, q, x_hat, q, K, [[0.0, 0.0, 10.0], [0.0, 0.0, -5.0]])
    assert loss.item() == pytest.approx(10.0)
    assert "excluded 1 point" in caplog.text


def test_reprojection_degenerate():
    from posegan.core.exceptions import DegenerateLossError
    from posegan.services.loss_functions import loss_reprojection
    x = torch.zeros(3, dtype=torch.float64)
    q = torch.tensor(IDENTITY_Q, dtype=torch.float64)
    with pytest.raises(DegenerateLossError):
        loss_reprojection(x, q, x, q, K, [[0.0, 0.0, -1.0]])


def test_reprojection_batched_with_per_pair_intrinsics():
    """Batch mean of per-pair means; K given once per pair."""
    from posegan.schemas.dataset import CameraIntrinsics
    from posegan.services.loss_functions import loss_reprojection
    x = torch.zeros(2, 3, dtype=torch.float64)
    q = torch.tensor([IDENTITY_Q, IDENTITY_Q], dtype=torch.float64)
    x_hat = torch.tensor([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]], dtype=torch.float64)
    intrinsics = [CameraIntrinsics(fx=100, fy=100, cx=50, cy=40)] * 2
    points = [np.array([[0.0, 0.0, 10.0]]), np.array([[1.0, 1.0, 20.0], [0.0, 0.0, 5.0]])]
    assert loss_reprojection(x, q, x_hat, q, intrinsics, points).item() == pytest.approx(5.0)


def test_reprojection_gradients():
    """L_p matches central differences in float64 at 20 random points."""
    from posegan.services.loss_functions import loss_reprojection
    x = torch.tensor([[0.1, 0.0, 1.0], [0.0, 0.05, 0.9]], dtype=torch.float64)
    q = torch.tensor([[0.999, 0.0, 0.04, 0.0], [0.998, 0.01, -0.05, 0.0]], dtype=torch.float64)
    points = [
        torch.tensor([[1.0, 0.5, 12.0], [-2.0, 0.2, 20.0], [0.3, -0.4, 8.0]], dtype=torch.float64),
        torch.tensor([[0.5, 0.5, 15.0], [-1.0, 1.0, 30.0]], dtype=torch.float64),
    ]
    for seed in range(0, 40, 2):
        x_hat = (x + 0.05 * _double(2, 3, seed=seed)).requires_grad_(True)
        q_hat = (q + 0.01 * _double(2, 4, seed=seed + 1)).requires_grad_(True)
        assert gradcheck(
            lambda a, b: loss_reprojection(x, q, a, b, K, points), (x_hat, q_hat), eps=1e-5, atol=1e-5, rtol=1e-3
        )


def test_reprojection_ignores_point_order():
    from posegan.services.loss_functions import loss_reprojection
    x = torch.tensor([0.1, 0.0, 1.0], dtype=torch.float64)
    q = torch.tensor([0.999, 0.0, 0.04, 0.0], dtype=torch.float64)
    x_hat = x + 0.05 * _double(3, seed=21)
    q_hat = q + 0.01 * _double(4, seed=22)
    rng = np.random.default_rng(0)
    points = np.column_stack([rng.uniform(-3, 3, (12, 2)), rng.uniform(5, 40, 12)])
    loss = loss_reprojection(x, q, x_hat, q_hat, K, points).item()
    for _ in range(5):
        shuffled = points[rng.permutation(len(points))]
        assert loss_reprojection(x, q, x_hat, q_hat, K, shuffled).item() == pytest.approx(loss, rel=1e-12)


def test_quaternion_matrix_matches_numpy():
    from posegan.services.geometry import quaternion_to_matrix
    from posegan.services.loss_functions import quaternion_to_rotation_matrix
    q = np.array([0.9, 0.1, -0.3, 0.2])
    expected = quaternion_to_matrix(q)
    got = quaternion_to_rotation_matrix(torch.tensor(q)).numpy()
    assert np.allclose(got, expected, atol=1e-12)


def test_gradient_penalty_unit_slope():
    """A critic with unit gradient everywhere has zero penalty; slope 2 gives 1."""
    from posegan.services.loss_functions import gradient_penalty
    real, fake = _double(6, 5, seed=7), _double(6, 5, seed=8)
    w = _double(5, seed=9)
    w = w / w.norm()
    assert gradient_penalty(real, fake, lambda t: t @ w, seed=0).item() == pytest.approx(0.0, abs=1e-12)
    assert gradient_penalty(real, fake, lambda t: t @ (2 * w), seed=0).item() == pytest.approx(1.0)


def test_gradient_penalty_constant_critic():
    """A constant critic has zero gradient, penalty (0 - 1)^2 = 1."""
    from posegan.services.loss_functions import gradient_penalty
    real, fake = _double(3, 4, seed=1), _double(3, 4, seed=2)
    assert gradient_penalty(real, fake, lambda t: torch.zeros(t.shape[0]), seed=0).item() == 1.0


def test_gradient_penalty_shape_mismatch():
    from posegan.core.exceptions import ShapeError
    from posegan.services.loss_functions import gradient_penalty
    with pytest.raises(ShapeError):
        gradient_penalty(torch.zeros(2, 3), torch.zeros(3, 3), lambda t: t.sum(1))


def test_gradient_penalty_gradients():
    """The penalty is differentiable in the critic parameters (double backprop)."""
    from posegan.services.loss_functions import gradient_penalty
    for seed in range(0, 60, 3):
        real, fake = _double(4, 3, seed=seed), _double(4, 3, seed=seed + 1)
        w = _double(3, seed=seed + 2).requires_grad_(True)

        def penalty(weights):
            return gradient_penalty(real, fake, lambda t: torch.tanh(t @ weights), seed=11)

        assert gradcheck(penalty, (w,), eps=1e-5, atol=1e-5, rtol=1e-4)


def test_critic_and_generator_losses():
    from posegan.services.loss_functions import critic_loss, generator_loss
    real = torch.tensor([1.0, 3.0])
    fake = torch.tensor([0.0, -2.0])
    assert critic_loss(real, fake, torch.tensor(0.5), 10.0).item() == pytest.approx(-1.0 - 2.0 + 5.0)
    assert generator_loss(fake).item() == pytest.approx(1.0)


def test_critic_loss_gradients():
    from posegan.services.loss_functions import critic_loss
    for seed in range(0, 60, 3):
        real = _double(5, seed=seed).requires_grad_(True)
        fake = _double(5, seed=seed + 1).requires_grad_(True)
        gp = _double(1, seed=seed + 2).abs().squeeze().requires_grad_(True)
        assert gradcheck(lambda r, f, g: critic_loss(r, f, g, 10.0), (real, fake, gp), eps=1e-5)


def test_supervised_loss_selection():
    """Components are reported for logging; L_p needs intrinsics and points."""
    from posegan.core.exceptions import DegenerateLossError
    from posegan.services.loss_functions import supervised_loss
    x = torch.zeros(1, 3, dtype=torch.float64)
    q = torch.tensor([IDENTITY_Q], dtype=torch.float64)
    x_hat = torch.tensor([[1.0, 0.0, 0.0]], dtype=torch.float64)
    loss, parts = supervised_loss("beta", x, q, x_hat, q, 100.0)
    assert loss.item() == pytest.approx(1.0)
    assert set(parts) == {"translation_loss", "rotation_loss", "pose_loss"}
    loss, parts = supervised_loss("reprojection", x, q, x_hat, q, 100.0, K=K, points=[[[0.0, 0.0, 10.0]]])
    assert loss.item() == pytest.approx(10.0)
    assert parts["reprojection_loss"] == pytest.approx(10.0)
    with pytest.raises(DegenerateLossError):
        supervised_loss("reprojection", x, q, x_hat, q, 100.0)
