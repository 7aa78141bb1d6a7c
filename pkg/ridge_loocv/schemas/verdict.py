from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class MinimumRecord(BaseModel):
    """A surviving local minimum; lambda is null at infinity"""
    model_config = ConfigDict(populate_by_name=True)

    lam: Optional[float] = Field(None, alias="lambda")
    loss: float
    kind: str = Field("interior", pattern="^(interior|boundary|tail)$")


class GridRecord(BaseModel):
    min: float = Field(..., gt=0)
    max: float = Field(..., gt=0)
    points: int = Field(..., ge=3)


class VerdictRecord(BaseModel):
    """Quasiconvexity verdict for one regression problem"""
    is_qvx: bool
    minima: List[MinimumRecord]
    tail_limit: float = Field(..., ge=0)
    grid: GridRecord
    sign_pattern: str = ""
    includes_tail: bool = False
    near_threshold: bool = False

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "is_qvx": False,
                "minima": [
                    {"lambda": 0.42, "loss": 31.7, "kind": "interior"},
                    {"lambda": None, "loss": 33.0, "kind": "tail"},
                ],
                "tail_limit": 33.0,
                "grid": {"min": 1e-6, "max": 1e6, "points": 400},
                "sign_pattern": "-+-",
                "includes_tail": False,
                "near_threshold": False,
            }
        }
    )
