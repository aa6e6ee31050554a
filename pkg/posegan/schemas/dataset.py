"""Dataset schemas: calibration and on-disk index records"""
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator


class CameraIntrinsics(BaseModel):
    """Pinhole calibration of the (rectified) left camera"""
    fx: float = Field(..., gt=0, description="Focal length along x (pixels)")
    fy: float = Field(..., gt=0, description="Focal length along y (pixels)")
    cx: float = Field(..., description="Principal point x (pixels)")
    cy: float = Field(..., description="Principal point y (pixels)")
    baseline: Optional[float] = Field(
        default=None, gt=0, description="Stereo baseline (meters), needed for triangulation"
    )

    model_config = {"frozen": True}

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


class PairRecord(BaseModel):
    """One line of ``index.jsonl``"""
    a: str
    b: str
    x: List[float] = Field(..., min_length=3, max_length=3)
    q: List[float] = Field(..., min_length=4, max_length=4)
    seq: str
    mirrored: bool


class PointSetRecord(BaseModel):
    """One line of ``points.jsonl``: 3D points seen from frame ``frame``"""
    frame: str
    seq: str
    mirrored: bool
    points: List[List[float]]

    @field_validator("points")
    @classmethod
    def check_points(cls, v):
        for p in v:
            if len(p) != 3:
                raise ValueError("points must be 3-vectors")
        return v
