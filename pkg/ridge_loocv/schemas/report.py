from typing import List, Optional

from pydantic import BaseModel, Field


class SlopeRecord(BaseModel):
    """log-log fit of nu_max against N"""
    slope: float
    intercept: float
    stderr: float
    rvalue: float
    points: int = Field(..., ge=2)


class CertificateRecord(BaseModel):
    """L'' > 0 check on [0, lambda_range]"""
    holds: bool
    margin: float
    lambda_range: float = Field(..., gt=0)
    lambda_at_margin: float


class AssumptionReportRecord(BaseModel):
    """Assumption quantities of one regression problem"""
    n: int = Field(..., ge=3)
    d: int = Field(..., ge=1)
    a1_value: float = Field(..., ge=0)
    a2_value: float = Field(..., ge=0)
    theta_hat_norm: float = Field(..., ge=0)
    a3_numax: float = Field(..., ge=0, le=1)
    a3_slope: Optional[SlopeRecord] = None
    a4_value: float
    cross_term: float
    delta0: float = Field(..., le=0)
    delta0_bound: float = Field(..., le=0)
    xi_sums: List[float] = Field(..., min_length=3, max_length=3)
    abc_sums: List[float] = Field(..., min_length=3, max_length=3)
    lambda_Q: Optional[float] = None
    lambda_Q2: Optional[float] = None
    root_bound: Optional[float] = None
    flat_spectrum: bool
    spectral_ratio: float = Field(..., ge=1)
    certificate: Optional[CertificateRecord] = None
    notes: List[str] = []
