"""Repeat an experiment under derived seeds and report mean +/- 2 std per cell."""

from typing import Callable, List, Optional

import numpy as np
import pandas as pd

from ridge_loocv.core.errors import ExperimentConfigError
from ridge_loocv.core.logging import get_logger
from ridge_loocv.schemas.experiment import ExperimentConfig
from ridge_loocv.services.experiments.base import ExperimentResult
from ridge_loocv.services.samplers import RngStream

logger = get_logger(__name__)

DEFAULT_REPS = 5
REPLICATION_STREAM = 0x5EED

# metrics averaged across replications when present
VALUE_COLUMNS = ("fraction_non_qvx", "nu_max_stat", "mean_nu_max", "spectral_ratio", "is_qvx")


def replicate_seeds(seed: int, reps: int, share_seed: bool = False) -> List[int]:
    if share_seed:
        return [seed] * reps
    return [
        int(RngStream(seed, (REPLICATION_STREAM, r)).generator().integers(0, 2 ** 63))
        for r in range(reps)
    ]


def replicate_with_errorbars(config: ExperimentConfig, reps: Optional[int] = None,
                             runner: Optional[Callable[[ExperimentConfig], ExperimentResult]] = None
                             ) -> ExperimentResult:
    """Run `reps` replicates; error bars are two standard deviations."""
    from ridge_loocv.services.experiments import run_single

    reps = reps or (config.replications if config.replications > 1 else DEFAULT_REPS)
    if reps < 1:
        raise ExperimentConfigError("reps must be at least 1", {"reps": reps})
    runner = runner or run_single

    seeds = replicate_seeds(config.seed, reps, config.share_seed)
    results = []
    for r, seed in enumerate(seeds):
        logger.info(f"{config.kind.value}: replication {r + 1}/{reps} (seed {seed})")
        results.append(runner(config.model_copy(update={"seed": seed, "replications": 1})))

    keys = results[0].metadata.get("key_columns", [])
    values = [c for c in VALUE_COLUMNS if c in results[0].rows.columns]
    if not keys or not values:
        raise ExperimentConfigError(f"{config.kind.value} results cannot be replicated")

    stacked = pd.concat(
        [res.rows[keys + values].assign(replication=r) for r, res in enumerate(results)],
        ignore_index=True,
    )
    grouped = stacked.groupby(keys, sort=False)[values]
    means = grouped.mean()
    spreads = grouped.std(ddof=1 if reps > 1 else 0).fillna(0.0) * 2.0
    rows = means.add_suffix("_mean").join(spreads.add_suffix("_err")).reset_index()
    rows["reps"] = reps

    return ExperimentResult(
        kind=config.kind.value,
        rows=rows,
        metadata={"key_columns": keys, "seeds": seeds},
        summary={"replications": reps, "max_err": {v: float(np.nanmax(spreads[v])) for v in values}},
    )
