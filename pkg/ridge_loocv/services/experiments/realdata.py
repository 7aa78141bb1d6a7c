"""Real-data runner: full dataset, PCR truncations and random subsets."""

import math
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ridge_loocv.core.errors import AppError
from ridge_loocv.core.logging import get_logger
from ridge_loocv.schemas.experiment import ExperimentConfig
from ridge_loocv.services.dataset import RawDataset, StandardizedDataset, load_csv, pcr_truncate, standardize
from ridge_loocv.services.experiments.base import CellCounts, ExperimentResult, grid_for, run_tasks
from ridge_loocv.services.experiments.simulations import kind_stream
from ridge_loocv.services.loocv import LoocvCurve, compute_curve
from ridge_loocv.services.quasiconvexity import QvxVerdict, classify, minima_census

logger = get_logger(__name__)


def _row(scope: str, rank: int, subset: int, n: int, verdict: Optional[QvxVerdict],
         error_code: str = "") -> Dict:
    census = minima_census(verdict) if verdict is not None else None
    return {
        "scope": scope,
        "rank": rank,
        "subset": subset,
        "n": n,
        "is_qvx": math.nan if verdict is None else float(verdict.is_quasiconvex),
        "minima_count": math.nan if census is None else census.count,
        "loss_gap": math.nan if census is None else census.gap,
        "near_threshold": math.nan if verdict is None else float(verdict.near_threshold),
        "error_code": error_code,
    }


def _classify_ds(ds: StandardizedDataset, config: ExperimentConfig) -> QvxVerdict:
    return classify(ds.svd, ds.Y, grid_for(config), strict_rise_rel=config.strict_rise)


def _subset_task(task: Tuple[ExperimentConfig, np.ndarray, np.ndarray, int]) -> Tuple[Dict, Optional[LoocvCurve]]:
    config, X, Y, i = task
    gen = kind_stream(config).child(i).generator()
    idx = np.sort(gen.choice(X.shape[0], size=config.subset_size, replace=False))
    try:
        ds = standardize(RawDataset(X[idx], Y[idx]))
        verdict = _classify_ds(ds, config)
    except AppError as exc:
        logger.warning(f"realdata subset {i}: {exc.error_code}")
        return _row("subset", X.shape[1], i, config.subset_size, None, exc.error_code), None

    curve = None
    if not verdict.is_quasiconvex:
        curve = compute_curve(ds.svd, ds.Y, grid_for(config))
    return _row("subset", ds.D, i, ds.N, verdict), curve


def run_realdata(config: ExperimentConfig) -> ExperimentResult:
    raw = load_csv(config.data_path, config.target, config.categorical or None)
    ds = standardize(raw)
    logger.info(f"realdata: {config.data_path} N={ds.N} D={ds.D} spectral ratio={ds.svd.spectral_ratio():.3g}")

    records: List[Dict] = []
    curves: List[Tuple[str, LoocvCurve]] = []
    full = _classify_ds(ds, config)
    records.append(_row("full", ds.D, -1, ds.N, full))
    if not full.is_quasiconvex:
        curves.append(("full", compute_curve(ds.svd, ds.Y, grid_for(config))))

    for R in config.pcr_ranks or range(1, ds.D + 1):
        try:
            reduced = pcr_truncate(ds, R)
            verdict = _classify_ds(reduced, config)
            records.append(_row("pcr", R, -1, ds.N, verdict))
        except AppError as exc:
            logger.warning(f"realdata PCR rank {R}: {exc.error_code}")
            records.append(_row("pcr", R, -1, ds.N, None, exc.error_code))
            continue
        if not verdict.is_quasiconvex:
            curves.append((f"pcr{R}", compute_curve(reduced.svd, reduced.Y, grid_for(config))))

    subsets = CellCounts()
    if config.subset_count and config.subset_size <= raw.N:
        tasks = [(config, raw.X, raw.Y, i) for i in range(config.subset_count)]
        for row, curve in run_tasks(_subset_task, tasks, config.threads):
            records.append(row)
            failed = math.isnan(row["is_qvx"])
            subsets = subsets.add(CellCounts(trials=1, failures=int(failed),
                                             non_qvx=int(not failed and row["is_qvx"] == 0.0),
                                             near_threshold=int(not failed and row["near_threshold"] == 1.0)))
            if curve is not None and len(curves) < config.max_curves:
                curves.append((f"subset{row['subset']}", curve))
        logger.info(f"realdata subsets: {subsets.non_qvx}/{subsets.evaluated} non-quasiconvex, "
                    f"{subsets.failures} failures")
    elif config.subset_count:
        logger.warning(f"subset size {config.subset_size} exceeds N={raw.N}; skipping subsets")

    summary = {
        "full_is_qvx": full.is_quasiconvex,
        "pcr_non_qvx_ranks": [int(r["rank"]) for r in records if r["scope"] == "pcr" and r["is_qvx"] == 0.0],
        "subsets": subsets.as_row(),
    }
    return ExperimentResult(kind=config.kind.value, rows=pd.DataFrame.from_records(records),
                            metadata={"key_columns": ["scope", "rank", "subset", "n"]},
                            summary=summary, curves=curves)
