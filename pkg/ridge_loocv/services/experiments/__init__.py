"""Experiment runners keyed by ExperimentKind."""

from typing import Callable, Dict

from ridge_loocv.core.logging import get_logger
from ridge_loocv.schemas.experiment import ExperimentConfig, ExperimentKind
from ridge_loocv.services.experiments.base import ExperimentResult, Timer
from ridge_loocv.services.experiments.realdata import run_realdata
from ridge_loocv.services.experiments.replication import replicate_with_errorbars
from ridge_loocv.services.experiments.simulations import (
    run_atlas,
    run_coherence,
    run_coherence_decay,
    run_delta_sweep,
    run_residual_norm,
    run_subgaussian,
)

logger = get_logger(__name__)

RUNNERS: Dict[ExperimentKind, Callable[[ExperimentConfig], ExperimentResult]] = {
    ExperimentKind.ATLAS: run_atlas,
    ExperimentKind.DELTA_SWEEP: run_delta_sweep,
    ExperimentKind.COHERENCE: run_coherence,
    ExperimentKind.RESIDUAL_NORM: run_residual_norm,
    ExperimentKind.COHERENCE_DECAY: run_coherence_decay,
    ExperimentKind.SUBGAUSSIAN: run_subgaussian,
    ExperimentKind.REALDATA: run_realdata,
}


def run_single(config: ExperimentConfig) -> ExperimentResult:
    with Timer() as timer:
        result = RUNNERS[config.kind](config)
    result.metadata.update({
        "seed": config.seed,
        "scale": config.scale_label,
        "runtime_s": timer.elapsed,
    })
    logger.info(f"{config.kind.value} finished in {timer.elapsed:.1f}s ({config.scale_label} scale)")
    return result


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    if config.replications > 1:
        return replicate_with_errorbars(config, config.replications)
    return run_single(config)


__all__ = [
    "ExperimentResult",
    "RUNNERS",
    "replicate_with_errorbars",
    "run_atlas",
    "run_coherence",
    "run_coherence_decay",
    "run_delta_sweep",
    "run_experiment",
    "run_realdata",
    "run_residual_norm",
    "run_single",
    "run_subgaussian",
]
