"""
ridge-loocv command-line interface

Commands:
    preprocess      Standardize a CSV dataset (optionally PCR-truncate or reduce)
    curve           Write the LOOCV curve L, L', L'' on a lambda grid
    classify        Quasiconvexity verdict as JSON
    diagnose        Assumption report as JSON
    experiment      Run a seeded simulation or real-data experiment

Examples:
    ridge-loocv classify --input wine.csv --target quality
    ridge-loocv curve --input wine.csv --target quality --points 800 --out wine_curve.csv
    ridge-loocv experiment --kind delta_sweep --seed 7 --out delta.csv
"""

import functools
import json
import sys
import time
from pathlib import Path
from typing import Any, Dict, Optional

import click
import pandas as pd
from pydantic import ValidationError

from ridge_loocv.core.config import settings
from ridge_loocv.core.errors import AppError, ExperimentConfigError, error_payload, exit_code_for
from ridge_loocv.core.logging import get_logger, setup_logging
from ridge_loocv.schemas.experiment import ExperimentConfig, ExperimentKind
from ridge_loocv.schemas.manifest import RunManifest
from ridge_loocv.services import diagnostics, quasiconvexity
from ridge_loocv.services.dataset import StandardizedDataset, load_csv, pcr_truncate, reduce_frame, standardize
from ridge_loocv.services.experiments import run_experiment
from ridge_loocv.services.loocv import GridConfig, compute_curve, write_curve_csv

logger = get_logger(__name__)


def handle_errors(fn):
    """Render AppErrors as the JSON error envelope on stderr and exit with their code."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.exceptions.Exit:
            raise
        except click.ClickException:
            raise
        except KeyboardInterrupt:
            click.echo("Operation cancelled by user.", err=True)
            sys.exit(1)
        except Exception as exc:
            if not isinstance(exc, AppError):
                logger.exception("Unexpected failure")
            click.echo(json.dumps(error_payload(exc), indent=2, default=str), err=True)
            sys.exit(exit_code_for(exc))
    return wrapper


def dataset_options(fn):
    for option in reversed([
        click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False),
                     help="CSV dataset"),
        click.option("--target", required=True, help="Response column"),
        click.option("--categorical", multiple=True, help="Categorical column (repeatable)"),
        click.option("--pcr-rank", type=int, default=None, help="Keep the top R principal directions"),
    ]):
        fn = option(fn)
    return fn


def grid_options(fn):
    for option in reversed([
        click.option("--lambda-min", type=float, default=None, help="Grid start (default 1e-6 * mean s^2)"),
        click.option("--lambda-max", type=float, default=None, help="Grid end (default 1e6 * mean s^2)"),
        click.option("--points", type=int, default=None, help=f"Grid size (default {settings.GRID_POINTS})"),
    ]):
        fn = option(fn)
    return fn


def out_option(fn):
    return click.option("--out", type=click.Path(dir_okay=False), default=None,
                        help="Output file (stdout when omitted)")(fn)


def _load(input_path: str, target: str, categorical, pcr_rank: Optional[int]) -> StandardizedDataset:
    ds = standardize(load_csv(input_path, target, list(categorical) or None))
    if pcr_rank is not None:
        ds = pcr_truncate(ds, pcr_rank)
    logger.info(f"Loaded {input_path}: N={ds.N} D={ds.D}")
    return ds


def _grid(lambda_min, lambda_max, points) -> GridConfig:
    return GridConfig(
        points=points or settings.GRID_POINTS,
        lambda_min=lambda_min,
        lambda_max=lambda_max,
    )


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=not text.endswith("\n"))


def _manifest_path(command: str, out: Optional[str]) -> Path:
    return Path(f"{out}.manifest.json") if out else Path(f"{command}.manifest.json")


def _write_manifest(ctx: click.Context, out: Optional[str], started: float, seed: Optional[int] = None,
                    outputs=(), summary: Optional[Dict[str, Any]] = None) -> None:
    flags = {"command": ctx.info_name, **{k: v for k, v in ctx.params.items()}}
    manifest = RunManifest.start(ctx.info_name, flags, seed=seed)
    manifest.wall_time_s = time.perf_counter() - started
    manifest.outputs = [str(p) for p in outputs] or ([out] if out else ["<stdout>"])
    manifest.summary = summary or {}
    path = _manifest_path(ctx.info_name, out)
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Wrote manifest {path}")


@click.group()
@click.version_option(version=f"{settings.VERSION} (records {settings.SPEC_VERSION})",
                      prog_name=settings.PROJECT_NAME)
@click.option("--log-level", default=None, help="Logging level (default from LOG_LEVEL)")
@click.option("--log-file", default=None, type=click.Path(dir_okay=False), help="Also log to this file")
@click.option("--log-json/--no-log-json", default=None, help="Structured JSON log lines")
def cli(log_level, log_file, log_json):
    """Exact LOOCV curves and quasiconvexity checks for ridge regression."""
    setup_logging(level=log_level, log_file=log_file, json_format=log_json)


@cli.command()
@dataset_options
@click.option("--reduce", "reduce_", is_flag=True, help="Rewrite as the V = I, ||Y|| = 1 problem")
@out_option
@click.pass_context
@handle_errors
def preprocess(ctx, input_path, target, categorical, pcr_rank, reduce_, out):
    """Standardize covariates (zero mean, sum x^2 = N) and center the response."""
    started = time.perf_counter()
    ds = _load(input_path, target, categorical, pcr_rank)
    if reduce_:
        ds = reduce_frame(ds)
    frame = pd.DataFrame(ds.X, columns=ds.feature_names)
    frame[target] = ds.Y
    _emit(frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"), out)
    _write_manifest(ctx, out, started)


@cli.command()
@dataset_options
@grid_options
@out_option
@click.pass_context
@handle_errors
def curve(ctx, input_path, target, categorical, pcr_rank, lambda_min, lambda_max, points, out):
    """Write lambda, loss, grad, hess as CSV."""
    started = time.perf_counter()
    ds = _load(input_path, target, categorical, pcr_rank)
    result = compute_curve(ds.svd, ds.Y, _grid(lambda_min, lambda_max, points))
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        write_curve_csv(result, out)
    else:
        write_curve_csv(result, click.get_text_stream("stdout"))
    _write_manifest(ctx, out, started, summary={"tail_limit": result.tail_limit,
                                                "problem_hash": result.problem_hash})


@cli.command()
@dataset_options
@grid_options
@click.option("--strict-rise", type=float, default=None,
              help=f"Relative rise for a strict minimum (default {settings.STRICT_RISE_REL})")
@out_option
@click.pass_context
@handle_errors
def classify(ctx, input_path, target, categorical, pcr_rank, lambda_min, lambda_max, points, strict_rise, out):
    """Quasiconvexity verdict as JSON."""
    started = time.perf_counter()
    ds = _load(input_path, target, categorical, pcr_rank)
    verdict = quasiconvexity.classify(ds.svd, ds.Y, _grid(lambda_min, lambda_max, points),
                                      strict_rise_rel=strict_rise)
    record = quasiconvexity.to_record(verdict)
    _emit(record.model_dump_json(by_alias=True, indent=2) + "\n", out)
    _write_manifest(ctx, out, started, summary={"is_qvx": verdict.is_quasiconvex,
                                                "minima": verdict.minima_count})


@cli.command()
@dataset_options
@click.option("--certificate", is_flag=True, help="Also check L'' > 0 on [0, lambda_Q + 1] (flat spectrum)")
@out_option
@click.pass_context
@handle_errors
def diagnose(ctx, input_path, target, categorical, pcr_rank, certificate, out):
    """Assumption report as JSON."""
    started = time.perf_counter()
    ds = _load(input_path, target, categorical, pcr_rank)
    report = diagnostics.assumption_report(ds.svd, ds.Y)
    cert = None
    if certificate:
        unit = ds.svd if report.flat_spectrum else ds.svd.with_spectrum([1.0] * ds.D)
        cert = diagnostics.second_deriv_certificate(unit, ds.Y)
    record = diagnostics.to_record(report, cert)
    _emit(record.model_dump_json(indent=2) + "\n", out)
    _write_manifest(ctx, out, started, summary={"lambda_Q": report.lambda_Q})


@cli.command()
@click.option("--kind", required=True, type=click.Choice([k.value for k in ExperimentKind]))
@click.option("--seed", type=int, default=None, help=f"Master seed (default {settings.DEFAULT_SEED})")
@click.option("--paper-scale", "--full-scale", "full_scale", is_flag=True,
              help="Use the published replicate counts")
@click.option("--reps", type=int, default=None, help="Replications for error bars")
@click.option("--share-seed", is_flag=True, help="Replications reuse the master seed")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with ExperimentConfig fields")
@click.option("--threads", type=int, default=None, help="Worker processes")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="CSV dataset (realdata)")
@click.option("--target", default=None, help="Response column (realdata)")
@click.option("--categorical", multiple=True, help="Categorical column (realdata, repeatable)")
@click.option("--pcr-rank", "pcr_ranks", type=int, multiple=True, help="PCR rank to check (realdata, repeatable)")
@click.option("--subset-size", type=int, default=None)
@click.option("--subset-count", type=int, default=None)
@click.option("--curves-dir", type=click.Path(file_okay=False), default=None,
              help="Directory for curves of flagged non-quasiconvex instances")
@out_option
@click.pass_context
@handle_errors
def experiment(ctx, kind, seed, full_scale, reps, share_seed, config_path, threads, input_path, target,
               categorical, pcr_ranks, subset_size, subset_count, curves_dir, out):
    """Run an experiment and write its rows as CSV."""
    started = time.perf_counter()
    values: Dict[str, Any] = {}
    if config_path:
        try:
            values.update(json.loads(Path(config_path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ExperimentConfigError(f"Config file is not valid JSON: {exc}")
    values.pop("kind", None)
    overrides = {
        "seed": seed,
        "threads": threads,
        "replications": reps,
        "share_seed": share_seed or None,
        "data_path": input_path,
        "target": target,
        "categorical": list(categorical) or None,
        "pcr_ranks": list(pcr_ranks) or None,
        "subset_size": subset_size,
        "subset_count": subset_count,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    full_scale = full_scale or bool(values.pop("full_scale", False))
    try:
        config = ExperimentConfig.defaults(ExperimentKind(kind), full_scale=full_scale, **values)
    except ValidationError as exc:
        raise ExperimentConfigError("Invalid experiment configuration",
                                    {"errors": json.loads(exc.json())})

    result = run_experiment(config)
    _emit(result.to_csv(), out)

    outputs = [out] if out else []
    if curves_dir and result.curves:
        Path(curves_dir).mkdir(parents=True, exist_ok=True)
        for label, flagged in result.curves:
            path = Path(curves_dir) / f"{kind}_{label}.csv"
            write_curve_csv(flagged, path)
            outputs.append(str(path))
    summary = {**result.summary, "runtime_s": result.metadata.get("runtime_s"),
               "scale": config.scale_label, "config": config.model_dump(mode="json")}
    _write_manifest(ctx, out, started, seed=config.seed, outputs=outputs, summary=summary)


def main():
    cli(prog_name=settings.PROJECT_NAME)


if __name__ == "__main__":
    main()
