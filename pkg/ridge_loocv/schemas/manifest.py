import hashlib
import json
from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from ridge_loocv.core.config import settings


def config_hash(flags: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON of the run flags."""
    canonical = json.dumps(flags, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class RunManifest(BaseModel):
    """Provenance written next to every CLI artifact"""
    command: str
    flags: Dict[str, Any]
    config_hash: str
    version: str = Field(default_factory=lambda: settings.VERSION)
    spec_version: str = Field(default_factory=lambda: settings.SPEC_VERSION)
    seed: Optional[int] = None
    started_at: datetime = Field(default_factory=datetime.now)
    wall_time_s: float = 0.0
    outputs: List[str] = []
    summary: Dict[str, Any] = {}

    @classmethod
    def start(cls, command: str, flags: Dict[str, Any], seed: Optional[int] = None) -> "RunManifest":
        return cls(command=command, flags=flags, config_hash=config_hash(flags), seed=seed)
