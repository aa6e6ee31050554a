"""Exception hierarchy shared by every posegan module"""
from typing import Any, Dict


class PoseganError(Exception):
    """Base error. ``user_error`` selects CLI exit code 1 (user) or 2 (internal)."""

    user_error: bool = True

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"error": type(self).__name__, "message": self.message}
        if self.details:
            payload["details"] = self.details
        return payload


class ConfigError(PoseganError):
    """Invalid or inconsistent configuration"""


class UsageError(PoseganError):
    """Bad command line invocation"""


class InvalidPoseError(PoseganError):
    """Rotation part is not a proper rotation within tolerance"""


class DimensionError(PoseganError):
    """Image too small for the preprocessing crop"""

    def __init__(self, message: str, axis: str, **details: Any):
        super().__init__(message, axis=axis, **details)
        self.axis = axis


class ShapeError(PoseganError):
    """Tensor shape does not match the network contract"""


class DatasetError(PoseganError):
    """Missing, empty or malformed dataset"""


class HoldOutViolationError(DatasetError):
    """The held-out test sequence leaked into the training data"""


class PointBehindCameraError(PoseganError):
    """Projection of a point with non-positive depth"""


class DegenerateLossError(PoseganError):
    """No point survived the depth checks of the reprojection loss"""


class TriangulationError(PoseganError):
    """Correspondence cannot be triangulated"""


class EmptyPointSetError(TriangulationError):
    """Every correspondence of a frame failed triangulation"""


class AlignmentError(PoseganError):
    """Degenerate point configuration for similarity alignment"""


class CheckpointError(PoseganError):
    """Checkpoint missing, corrupt or built for another architecture"""


class NonFiniteLossError(PoseganError):
    """A loss became NaN or Inf during training"""

    user_error = False
