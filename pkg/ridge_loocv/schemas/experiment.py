from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ridge_loocv.core.config import settings


class ExperimentKind(str, Enum):
    ATLAS = "atlas"
    DELTA_SWEEP = "delta_sweep"
    COHERENCE = "coherence"
    RESIDUAL_NORM = "residual_norm"
    COHERENCE_DECAY = "coherence_decay"
    SUBGAUSSIAN = "subgaussian"
    REALDATA = "realdata"


# Desk-scale defaults per kind; FULL_SCALE overrides restore the published counts.
DESK_SCALE: Dict[ExperimentKind, Dict[str, Any]] = {
    ExperimentKind.ATLAS: {
        "n_values": [3], "d": 2, "grid_size": 100, "atlas_spectra": [0.2, 0.5, 0.9],
    },
    ExperimentKind.DELTA_SWEEP: {
        "n_values": [20], "d": 5, "u_reps": 20, "y_reps": 20, "sigma2": 0.5,
        "alphas": [round(a, 10) for a in np.linspace(0.0, 1.0, 11).tolist()],
    },
    ExperimentKind.COHERENCE: {
        "n_values": [10, 20, 30, 50, 75, 100, 150, 200, 250, 300], "d": 5, "n0": 8,
        "u_reps": 50, "y_reps": 40, "nu_reps": 50, "sigma2": 0.5,
    },
    ExperimentKind.RESIDUAL_NORM: {
        "n_values": [10, 20, 30], "d": 5, "u_reps": 50, "y_reps": 50,
        "nu_values": [round(v, 12) for v in np.linspace(0.0, 2.0, 60).tolist()],
    },
    ExperimentKind.COHERENCE_DECAY: {
        "n_values": [int(n) for n in np.linspace(2500, 20500, 10)], "d": 5, "u_reps": 50,
    },
    ExperimentKind.SUBGAUSSIAN: {
        "n_values": [50, 100, 200, 500, 1000, 2000], "d": 5, "u_reps": 20, "y_reps": 20,
        "sigma2": 0.1, "families": ["gaussian", "rademacher"],
    },
    ExperimentKind.REALDATA: {
        "subset_size": 50, "subset_count": 400,
    },
}

FULL_SCALE: Dict[ExperimentKind, Dict[str, Any]] = {
    ExperimentKind.DELTA_SWEEP: {"u_reps": 100, "y_reps": 100},
    ExperimentKind.COHERENCE: {"u_reps": 100, "y_reps": 100, "nu_reps": 500},
    ExperimentKind.RESIDUAL_NORM: {"u_reps": 4000, "y_reps": 250},
    ExperimentKind.COHERENCE_DECAY: {
        "n_values": [int(n) for n in np.linspace(2500, 20500, 50)], "u_reps": 750,
    },
    ExperimentKind.SUBGAUSSIAN: {"u_reps": 100, "y_reps": 100},
}


REQUIRED_LISTS = {
    ExperimentKind.ATLAS: ("atlas_spectra",),
    ExperimentKind.DELTA_SWEEP: ("alphas",),
    ExperimentKind.RESIDUAL_NORM: ("nu_values",),
    ExperimentKind.SUBGAUSSIAN: ("families",),
}


class ExperimentConfig(BaseModel):
    """Configuration of one experiment run"""
    model_config = ConfigDict(use_enum_values=False, extra="forbid")

    kind: ExperimentKind
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0, lt=2 ** 64)
    full_scale: bool = False

    n_values: List[int] = []
    d: int = Field(5, ge=1)
    n0: int = Field(8, ge=3)
    u_reps: int = Field(20, ge=1)
    y_reps: int = Field(20, ge=1)
    nu_reps: int = Field(50, ge=1)
    sigma2: float = Field(0.5, ge=0)
    alphas: List[float] = []
    nu_values: List[float] = []
    grid_size: int = Field(100, ge=1)
    atlas_spectra: List[float] = []
    families: List[str] = []
    grid_points: int = Field(default_factory=lambda: settings.GRID_POINTS, ge=3)
    strict_rise: Optional[float] = Field(None, gt=0)
    threads: int = Field(default_factory=lambda: settings.THREADS, ge=1)
    replications: int = Field(1, ge=1)
    share_seed: bool = False

    # real data
    data_path: Optional[str] = None
    target: Optional[str] = None
    categorical: List[str] = []
    pcr_ranks: List[int] = []
    subset_size: int = Field(50, ge=3)
    subset_count: int = Field(400, ge=0)
    max_curves: int = Field(20, ge=0)

    @field_validator("n_values", "pcr_ranks")
    @classmethod
    def positive_ints(cls, v: List[int]) -> List[int]:
        if any(x < 1 for x in v):
            raise ValueError("entries must be at least 1")
        return v

    @field_validator("alphas", "nu_values", "atlas_spectra")
    @classmethod
    def non_negative(cls, v: List[float]) -> List[float]:
        if any(not np.isfinite(x) or x < 0 for x in v):
            raise ValueError("entries must be finite and non-negative")
        return v

    @model_validator(mode="after")
    def check_kind(self) -> "ExperimentConfig":
        if self.kind is ExperimentKind.REALDATA:
            if not self.data_path or not self.target:
                raise ValueError("realdata needs data_path and target")
        elif not self.n_values:
            raise ValueError(f"{self.kind.value} needs n_values")
        for name in REQUIRED_LISTS.get(self.kind, ()):
            if not getattr(self, name):
                raise ValueError(f"{self.kind.value} needs {name}")
        if self.kind is ExperimentKind.COHERENCE and any(n < self.n0 for n in self.n_values):
            raise ValueError("every N must be at least n0")
        if self.kind is ExperimentKind.COHERENCE and self.d >= self.n0 - 1:
            raise ValueError("d must be below n0 - 1")
        return self

    @property
    def scale_label(self) -> str:
        return "full" if self.full_scale else "desk"

    @classmethod
    def defaults(cls, kind: ExperimentKind, full_scale: bool = False, **overrides) -> "ExperimentConfig":
        """Config with the documented defaults for `kind`, then `overrides`."""
        kind = ExperimentKind(kind)
        values: Dict[str, Any] = {"kind": kind, "full_scale": full_scale}
        values.update(DESK_SCALE.get(kind, {}))
        if full_scale:
            values.update(FULL_SCALE.get(kind, {}))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)
