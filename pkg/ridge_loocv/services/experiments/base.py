"""Shared plumbing for experiment runners: task pools, cell counters, results."""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from ridge_loocv.core.errors import AppError
from ridge_loocv.core.logging import get_logger
from ridge_loocv.schemas.experiment import ExperimentConfig
from ridge_loocv.services.dataset import SvdForm
from ridge_loocv.services.loocv import GridConfig, LoocvCurve
from ridge_loocv.services.quasiconvexity import QvxVerdict, classify, classify_batch

logger = get_logger(__name__)

CONFIDENCE = 0.99


def clopper_pearson_lower(successes: int, trials: int, confidence: float = CONFIDENCE) -> float:
    """One-sided Clopper-Pearson lower bound on a binomial proportion."""
    if trials <= 0 or successes <= 0:
        return 0.0
    return float(stats.beta.ppf(1.0 - confidence, successes, trials - successes + 1))


@dataclass
class CellCounts:
    """Counters of one experiment cell; merging is plain addition."""

    trials: int = 0
    non_qvx: int = 0
    failures: int = 0
    near_threshold: int = 0

    def add(self, other: "CellCounts") -> "CellCounts":
        return CellCounts(
            self.trials + other.trials,
            self.non_qvx + other.non_qvx,
            self.failures + other.failures,
            self.near_threshold + other.near_threshold,
        )

    @property
    def evaluated(self) -> int:
        return self.trials - self.failures

    @property
    def fraction(self) -> float:
        return self.non_qvx / self.evaluated if self.evaluated else math.nan

    @property
    def stderr(self) -> float:
        n = self.evaluated
        if not n:
            return math.nan
        p = self.non_qvx / n
        return math.sqrt(p * (1.0 - p) / n)

    def as_row(self) -> Dict[str, Any]:
        return {
            "trials": self.trials,
            "non_qvx": self.non_qvx,
            "failures": self.failures,
            "near_threshold": self.near_threshold,
            "fraction_non_qvx": self.fraction,
            "stderr": self.stderr,
            "cp_lower_99": clopper_pearson_lower(self.non_qvx, self.evaluated),
        }


@dataclass
class ExperimentResult:
    kind: str
    rows: pd.DataFrame
    metadata: Dict[str, Any] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    curves: List[Tuple[str, LoocvCurve]] = field(default_factory=list)

    def to_csv(self, target: Union[str, Path, TextIO, None] = None) -> Optional[str]:
        return self.rows.to_csv(target, index=False, float_format="%.17g", lineterminator="\n")


def grid_for(config: ExperimentConfig) -> GridConfig:
    return GridConfig(points=config.grid_points)


def count_verdicts(svd: SvdForm, Ys: np.ndarray, config: ExperimentConfig,
                   label: str = "") -> Tuple[CellCounts, List[Optional[QvxVerdict]]]:
    """Classify the columns of Ys; numerical failures are counted, never dropped."""
    K = Ys.shape[1]
    grid = grid_for(config)
    try:
        verdicts: List[Optional[QvxVerdict]] = list(
            classify_batch(svd, Ys, grid, strict_rise_rel=config.strict_rise)
        )
    except AppError as exc:
        logger.warning(f"{label}: batch of {K} failed ({exc.error_code}); classifying one by one")
        verdicts = []
        for k in range(K):
            try:
                verdicts.append(classify(svd, Ys[:, k], grid, strict_rise_rel=config.strict_rise))
            except AppError as trial_exc:
                logger.warning(f"{label}: trial {k} failed ({trial_exc.error_code})")
                verdicts.append(None)

    done = [v for v in verdicts if v is not None]
    return CellCounts(
        trials=K,
        non_qvx=sum(1 for v in done if not v.is_quasiconvex),
        failures=K - len(done),
        near_threshold=sum(1 for v in done if v.near_threshold),
    ), verdicts


def run_tasks(fn: Callable, tasks: Sequence[Any], threads: int) -> List[Any]:
    """Apply fn to every task, results in task order."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def merge_cells(keys: Iterable[Any], counts: Iterable[CellCounts]) -> Dict[Any, CellCounts]:
    merged: Dict[Any, CellCounts] = {}
    for key, count in zip(keys, counts):
        merged[key] = merged.get(key, CellCounts()).add(count)
    return merged


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False
