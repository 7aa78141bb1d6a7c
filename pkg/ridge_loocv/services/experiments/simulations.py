"""Synthetic experiment runners.

Each runner expands its config into independent tasks, one per
(cell, U replicate). A task rebuilds its own RNG stream from
(seed, kind, cell, replicate) so results do not depend on the worker count.
"""

import math
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from ridge_loocv.core.errors import AppError
from ridge_loocv.core.logging import get_logger
from ridge_loocv.schemas.experiment import ExperimentConfig, ExperimentKind
from ridge_loocv.services.dataset import RawDataset, SvdForm, standardize
from ridge_loocv.services.diagnostics import coherence_slope
from ridge_loocv.services.experiments.base import (
    CellCounts,
    ExperimentResult,
    count_verdicts,
    merge_cells,
    run_tasks,
)
from ridge_loocv.services.samplers import (
    LinearModelSpec,
    RngStream,
    degenerate_U,
    generate_responses,
    sample_null_residual,
    sample_orthonormal,
    sample_subgaussian_X,
    sample_zero_mean_orthonormal,
    spectrum_family,
)

logger = get_logger(__name__)

# atlas basis of {v in R^3 : 1^T v = 0}
ATLAS_B1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
ATLAS_B2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6.0)

SATISFYING = "satisfying"
VIOLATING = "violating"
ZERO_MEAN = "zero_mean"
UNCONSTRAINED = "unconstrained"


def kind_stream(config: ExperimentConfig) -> RngStream:
    return RngStream(config.seed, (list(ExperimentKind).index(config.kind),))


def _theta_spec(config: ExperimentConfig) -> LinearModelSpec:
    return LinearModelSpec.from_seed(config.d, config.sigma2, config.seed)


def _response_matrix(U: np.ndarray, S: np.ndarray, spec: LinearModelSpec,
                     gen: np.random.Generator, reps: int) -> np.ndarray:
    return np.column_stack([generate_responses(U, S, spec, gen) for _ in range(reps)])


def _rows(records: List[Dict], key_columns: List[str]) -> pd.DataFrame:
    return pd.DataFrame.from_records(records).sort_values(key_columns, kind="stable").reset_index(drop=True)


def _log_cell(kind: str, key, counts: CellCounts) -> None:
    logger.info(f"{kind} cell {key}: {counts.non_qvx}/{counts.evaluated} non-quasiconvex, "
                f"{counts.failures} failures")


# atlas

def atlas_U(psi: float) -> np.ndarray:
    col1 = math.cos(psi) * ATLAS_B1 + math.sin(psi) * ATLAS_B2
    col2 = -math.sin(psi) * ATLAS_B1 + math.cos(psi) * ATLAS_B2
    return np.column_stack([col1, col2])


def atlas_Y(phi: np.ndarray) -> np.ndarray:
    """Unit responses cos(phi) b1 + sin(phi) b2 as columns."""
    phi = np.atleast_1d(phi)
    return np.outer(ATLAS_B1, np.cos(phi)) + np.outer(ATLAS_B2, np.sin(phi))


def _atlas_task(task: Tuple[ExperimentConfig, int, int]) -> List[Dict]:
    config, s_i, psi_i = task
    s2 = config.atlas_spectra[s_i]
    angles = 2.0 * math.pi * np.arange(config.grid_size) / config.grid_size
    svd = SvdForm.from_factors(atlas_U(angles[psi_i]), np.array([1.0, s2]))
    _, verdicts = count_verdicts(svd, atlas_Y(angles), config, f"atlas s2={s2} psi={psi_i}")
    return [
        {
            "s2": s2,
            "psi_index": psi_i,
            "phi_index": phi_i,
            "psi": float(angles[psi_i]),
            "phi": float(angles[phi_i]),
            "is_qvx": math.nan if v is None else float(v.is_quasiconvex),
            "near_threshold": math.nan if v is None else float(v.near_threshold),
        }
        for phi_i, v in enumerate(verdicts)
    ]


def run_atlas(config: ExperimentConfig) -> ExperimentResult:
    tasks = [(config, s_i, psi_i)
             for s_i in range(len(config.atlas_spectra)) for psi_i in range(config.grid_size)]
    records = [r for rows in run_tasks(_atlas_task, tasks, config.threads) for r in rows]
    rows = _rows(records, ["s2", "psi_index", "phi_index"])

    fractions = {}
    for s2, group in rows.groupby("s2", sort=False):
        valid = group["is_qvx"].dropna()
        fractions[repr(float(s2))] = float(1.0 - valid.mean()) if len(valid) else math.nan
        logger.info(f"atlas s2={s2}: non-quasiconvex fraction {fractions[repr(float(s2))]:.4f}")
    return ExperimentResult(kind=config.kind.value, rows=rows,
                            metadata={"key_columns": ["s2", "psi_index", "phi_index"]},
                            summary={"non_qvx_fraction": fractions})


# delta sweep

def _delta_task(task: Tuple[ExperimentConfig, int, int, int]) -> CellCounts:
    config, n_i, a_i, u = task
    N, alpha = config.n_values[n_i], config.alphas[a_i]
    gen = kind_stream(config).child(n_i, a_i, u).generator()
    try:
        U = sample_zero_mean_orthonormal(N, config.d, gen)
    except AppError as exc:
        logger.warning(f"delta_sweep N={N} alpha={alpha} U{u}: {exc.error_code}")
        return CellCounts(trials=config.y_reps, failures=config.y_reps)
    S = spectrum_family(alpha, config.d)
    Ys = _response_matrix(U, S, _theta_spec(config), gen, config.y_reps)
    counts, _ = count_verdicts(SvdForm.from_factors(U, S), Ys, config, f"delta_sweep N={N} alpha={alpha}")
    return counts


def run_delta_sweep(config: ExperimentConfig) -> ExperimentResult:
    keys = [(n_i, a_i) for n_i in range(len(config.n_values)) for a_i in range(len(config.alphas))]
    tasks = [(config, n_i, a_i, u) for n_i, a_i in keys for u in range(config.u_reps)]
    counts = run_tasks(_delta_task, tasks, config.threads)
    cells = merge_cells([(t[1], t[2]) for t in tasks], counts)

    records = []
    for n_i, a_i in keys:
        N, alpha = config.n_values[n_i], config.alphas[a_i]
        S = spectrum_family(alpha, config.d)
        _log_cell("delta_sweep", (N, alpha), cells[(n_i, a_i)])
        records.append({"N": N, "alpha": alpha, "s_minus_one_l1": float(np.sum(np.abs(S - 1.0))),
                        **cells[(n_i, a_i)].as_row()})
    return ExperimentResult(kind=config.kind.value, rows=_rows(records, ["N", "alpha"]),
                            metadata={"key_columns": ["N", "alpha", "s_minus_one_l1"]})


# coherence

def _coherence_task(task: Tuple[ExperimentConfig, str, int, int]) -> Tuple[float, CellCounts]:
    """nu_max of one U draw and, for the first u_reps draws, its verdict counts."""
    config, family, n_i, r = task
    N = config.n_values[n_i]
    base = kind_stream(config)
    if family == SATISFYING:
        gen = base.child(0, n_i, r).generator()
        U = sample_zero_mean_orthonormal(N, config.d, gen)
    else:
        # the same top blocks are reused at every N
        U = degenerate_U(N, config.n0, config.d, base.child(1, r))
        gen = base.child(2, n_i, r).generator()
    nu_max = float(np.max(np.sum(U ** 2, axis=1)))
    if r >= config.u_reps:
        return nu_max, CellCounts()

    S = np.ones(config.d)
    Ys = _response_matrix(U, S, _theta_spec(config), gen, config.y_reps)
    counts, _ = count_verdicts(SvdForm.from_factors(U, S), Ys, config, f"coherence {family} N={N}")
    return nu_max, counts


def run_coherence(config: ExperimentConfig) -> ExperimentResult:
    draws = max(config.u_reps, config.nu_reps)
    keys = [(family, n_i) for family in (SATISFYING, VIOLATING) for n_i in range(len(config.n_values))]
    tasks = [(config, family, n_i, r) for family, n_i in keys for r in range(draws)]
    results = run_tasks(_coherence_task, tasks, config.threads)

    nu_stats: Dict[Tuple[str, int], List[float]] = {}
    for task, (nu_max, _) in zip(tasks, results):
        if task[3] < config.nu_reps:
            nu_stats.setdefault((task[1], task[2]), []).append(nu_max)
    cells = merge_cells([(t[1], t[2]) for t in tasks], [c for _, c in results])

    records = []
    for family, n_i in keys:
        values = nu_stats[(family, n_i)]
        # max over draws for the satisfying family, min for the violating one
        stat = max(values) if family == SATISFYING else min(values)
        _log_cell("coherence", (family, config.n_values[n_i]), cells[(family, n_i)])
        records.append({"N": config.n_values[n_i], "family": family, "nu_max_stat": stat,
                        **cells[(family, n_i)].as_row()})
    rows = _rows(records, ["family", "N"])

    summary = {}
    if len(set(config.n_values)) > 1:
        for family in (SATISFYING, VIOLATING):
            sub = rows[rows["family"] == family]
            fit = coherence_slope(sub["N"].to_numpy(), sub["nu_max_stat"].to_numpy())
            summary[f"{family}_slope"] = fit.slope
            summary[f"{family}_slope_stderr"] = fit.stderr
    return ExperimentResult(kind=config.kind.value, rows=rows,
                            metadata={"key_columns": ["family", "N"]}, summary=summary)


# residual norm

def _residual_task(task: Tuple[ExperimentConfig, int, int]) -> List[CellCounts]:
    config, n_i, u = task
    N = config.n_values[n_i]
    gen = kind_stream(config).child(n_i, u).generator()
    nus = config.nu_values
    try:
        U = sample_zero_mean_orthonormal(N, config.d, gen)
        R = np.column_stack([sample_null_residual(U, gen, zero_mean=True) for _ in range(config.y_reps)])
    except AppError as exc:
        logger.warning(f"residual_norm N={N} U{u}: {exc.error_code}")
        return [CellCounts(trials=config.y_reps, failures=config.y_reps) for _ in nus]

    svd = SvdForm.from_factors(U)
    signal = U @ _theta_spec(config).theta_star
    return [
        count_verdicts(svd, signal[:, None] + nu * R, config, f"residual_norm N={N} nu={nu:.4g}")[0]
        for nu in nus
    ]


def residual_boundary(nu_values: List[float], non_qvx: List[int]) -> Tuple[float, bool]:
    """First nu with any non-quasiconvex problem; censored when none fails."""
    for nu, count in zip(nu_values, non_qvx):
        if count > 0:
            return float(nu), False
    return float(nu_values[-1]), True


def run_residual_norm(config: ExperimentConfig) -> ExperimentResult:
    tasks = [(config, n_i, u) for n_i in range(len(config.n_values)) for u in range(config.u_reps)]
    per_task = run_tasks(_residual_task, tasks, config.threads)

    records, boundary = [], {}
    for n_i, N in enumerate(config.n_values):
        cells = [CellCounts() for _ in config.nu_values]
        for task, counts in zip(tasks, per_task):
            if task[1] == n_i:
                cells = [c.add(x) for c, x in zip(cells, counts)]
        nu_max, censored = residual_boundary(config.nu_values, [c.non_qvx for c in cells])
        boundary[str(N)] = {"nu_max": nu_max, "censored": censored}
        logger.info(f"residual_norm N={N}: boundary nu_max={nu_max:.4g}{' (censored)' if censored else ''}")
        for nu, cell in zip(config.nu_values, cells):
            records.append({"N": N, "nu": nu, **cell.as_row()})
    return ExperimentResult(kind=config.kind.value, rows=_rows(records, ["N", "nu"]),
                            metadata={"key_columns": ["N", "nu"]}, summary={"boundary": boundary})


# coherence decay

def _decay_task(task: Tuple[ExperimentConfig, str, int]) -> np.ndarray:
    config, family, n_i = task
    N = config.n_values[n_i]
    sampler = sample_zero_mean_orthonormal if family == ZERO_MEAN else sample_orthonormal
    base = kind_stream(config).child(0 if family == ZERO_MEAN else 1, n_i)
    return np.array([
        float(np.max(np.sum(sampler(N, config.d, base.child(r)) ** 2, axis=1)))
        for r in range(config.u_reps)
    ])


def run_coherence_decay(config: ExperimentConfig) -> ExperimentResult:
    tasks = [(config, family, n_i) for family in (ZERO_MEAN, UNCONSTRAINED)
             for n_i in range(len(config.n_values))]
    draws = run_tasks(_decay_task, tasks, config.threads)

    records = []
    for (_, family, n_i), values in zip(tasks, draws):
        sem = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else math.nan
        records.append({"N": config.n_values[n_i], "family": family, "reps": int(values.size),
                        "mean_nu_max": float(values.mean()), "sem_nu_max": sem})
    rows = _rows(records, ["family", "N"])

    summary = {}
    if len(set(config.n_values)) > 1:
        for family in (ZERO_MEAN, UNCONSTRAINED):
            sub = rows[rows["family"] == family]
            summary[f"{family}_slope"] = coherence_slope(sub["N"].to_numpy(), sub["mean_nu_max"].to_numpy()).slope
    return ExperimentResult(kind=config.kind.value, rows=rows,
                            metadata={"key_columns": ["family", "N"]}, summary=summary)


# sub-Gaussian covariates

def _subgaussian_task(task: Tuple[ExperimentConfig, int, int, int]) -> Tuple[float, CellCounts]:
    config, f_i, n_i, u = task
    family, N = config.families[f_i], config.n_values[n_i]
    gen = kind_stream(config).child(f_i, n_i, u).generator()
    spec = _theta_spec(config)
    X = sample_subgaussian_X(N, config.d, family, gen)
    Ys = _response_matrix(X, np.ones(config.d), spec, gen, config.y_reps)
    try:
        ds = standardize(RawDataset(X, Ys[:, 0]))
    except AppError as exc:
        logger.warning(f"subgaussian {family} N={N} X{u}: {exc.error_code}")
        return math.nan, CellCounts(trials=config.y_reps, failures=config.y_reps)
    Ys = Ys - Ys.mean(axis=0)
    counts, _ = count_verdicts(ds.svd, Ys, config, f"subgaussian {family} N={N}")
    return ds.svd.spectral_ratio(), counts


def run_subgaussian(config: ExperimentConfig) -> ExperimentResult:
    keys = [(f_i, n_i) for f_i in range(len(config.families)) for n_i in range(len(config.n_values))]
    tasks = [(config, f_i, n_i, u) for f_i, n_i in keys for u in range(config.u_reps)]
    results = run_tasks(_subgaussian_task, tasks, config.threads)
    cells = merge_cells([(t[1], t[2]) for t in tasks], [c for _, c in results])

    ratios: Dict[Tuple[int, int], List[float]] = {}
    for task, (ratio, _) in zip(tasks, results):
        ratios.setdefault((task[1], task[2]), []).append(ratio)

    records = []
    for f_i, n_i in keys:
        family, N = config.families[f_i], config.n_values[n_i]
        _log_cell("subgaussian", (family, N), cells[(f_i, n_i)])
        records.append({"N": N, "family": family, "sigma2": config.sigma2,
                        "spectral_ratio": float(np.nanmean(ratios[(f_i, n_i)])),
                        **cells[(f_i, n_i)].as_row()})
    return ExperimentResult(kind=config.kind.value, rows=_rows(records, ["family", "N"]),
                            metadata={"key_columns": ["family", "N", "sigma2"]})
