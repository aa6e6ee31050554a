"""Trajectory evaluation schemas"""
from typing import Dict, Optional

from pydantic import BaseModel, Field


class LengthError(BaseModel):
    """Errors of all subsequences of one length"""
    length: float
    t_err: float = Field(..., ge=0, description="Translational error (%)")
    r_err: float = Field(..., ge=0, description="Rotational error (deg / 100 m)")
    segments: int = Field(..., ge=0)


class MetricReport(BaseModel):
    """KITTI odometry metric for one sequence.

    ``t_rel``/``r_rel`` are None when the ground truth is shorter than the
    smallest subsequence length.
    """
    t_rel: Optional[float] = Field(default=None, ge=0, description="Translational error (%)")
    r_rel: Optional[float] = Field(default=None, ge=0, description="Rotational error (deg / 100 m)")
    segments: int = Field(default=0, ge=0)
    per_length: Dict[int, LengthError] = Field(default_factory=dict)
    aligned: Optional[str] = None
    scale: Optional[float] = None

    @property
    def is_empty(self) -> bool:
        return self.segments == 0

    def table_row(self) -> str:
        """``t_rel r_rel`` with two decimals"""
        if self.is_empty:
            return "n/a n/a"
        return f"{self.t_rel:.2f} {self.r_rel:.2f}"
