"""Quasiconvexity verdicts for LOOCV curves.

A curve on [grid_min, inf] is reduced to the alternating sequence of its
extrema: the left grid end, every refined root of L', and the tail at
lambda = inf whose value is ||Y||^2. Adjacent extrema whose losses differ by
no more than STRICT_RISE_REL * tail_limit are cancelled in pairs; the curve
is quasiconvex when at most one minimum survives.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from ridge_loocv.core.config import settings
from ridge_loocv.core.errors import GridTooCoarseError, InvalidInputError
from ridge_loocv.core.logging import get_logger
from ridge_loocv.schemas.verdict import GridRecord, MinimumRecord, VerdictRecord
from ridge_loocv.services.dataset import SvdForm
from ridge_loocv.services.loocv import GridConfig, evaluate, loocv_grad

logger = get_logger(__name__)

MIN = "min"
MAX = "max"


@dataclass(frozen=True)
class Minimum:
    lam: float  # math.inf for the tail
    loss: float
    where: str  # "interior", "boundary" or "tail"


@dataclass(frozen=True)
class StationaryPoint:
    lam: float
    loss: float
    hess: float
    kind: str


@dataclass(frozen=True)
class QvxVerdict:
    is_quasiconvex: bool
    minima: List[Minimum]
    sign_pattern: str
    includes_tail: bool
    tail_limit: float
    grid: Tuple[float, float, int]
    near_threshold: bool = False
    stationary: List[StationaryPoint] = field(default_factory=list)

    @property
    def minima_count(self) -> int:
        return len(self.minima)


@dataclass(frozen=True)
class MinimaCensus:
    count: int
    locations: List[float]
    values: List[float]
    gap: float


@dataclass
class _Extremum:
    lam: float
    loss: float
    kind: str
    where: str


def _sign_pattern(signs: np.ndarray) -> str:
    chars = ["+" if s > 0 else "-" for s in signs]
    out = []
    for c in chars:
        if not out or out[-1] != c:
            out.append(c)
    return "".join(out)


def _grad_signs(grad: np.ndarray) -> np.ndarray:
    """Signs of L' with exact zeros carried over from the left neighbour."""
    signs = np.sign(grad)
    nonzero = np.flatnonzero(signs)
    if nonzero.size == 0:
        return np.ones_like(signs)
    signs[: nonzero[0]] = signs[nonzero[0]]
    for i in range(nonzero[0] + 1, signs.shape[0]):
        if signs[i] == 0:
            signs[i] = signs[i - 1]
    return signs


def _simplify(seq: List[_Extremum], threshold: float,
              near_factor: float) -> Tuple[List[_Extremum], bool]:
    """Cancel adjacent extrema pairs whose loss gap is below `threshold`.

    Returns the surviving sequence and whether any compared gap fell within
    a factor `near_factor` of the threshold.
    """
    seq = list(seq)
    near = False
    while len(seq) > 1:
        gaps = [abs(seq[i + 1].loss - seq[i].loss) for i in range(len(seq) - 1)]
        i = int(np.argmin(gaps))
        gap = gaps[i]
        if threshold / near_factor < gap <= threshold * near_factor:
            near = True
        if gap > threshold:
            break
        if len(seq) == 2:
            keep = min(seq, key=lambda e: e.loss)
            seq = [_Extremum(keep.lam, keep.loss, MIN, keep.where)]
            break
        del seq[i:i + 2]
    if len(seq) == 1 and seq[0].kind != MIN:
        only = seq[0]
        seq = [_Extremum(only.lam, only.loss, MIN, only.where)]
    return seq, near


def _finish(seq: List[_Extremum], tail_limit: float, pattern: str,
            grid: Tuple[float, float, int], stationary: List[StationaryPoint],
            strict_rise_rel: float) -> QvxVerdict:
    threshold = strict_rise_rel * tail_limit
    survivors, near = _simplify(seq, threshold, settings.NEAR_THRESHOLD_FACTOR)
    minima = [Minimum(e.lam, e.loss, e.where) for e in survivors if e.kind == MIN]
    best = min((m.loss for m in minima), default=math.inf)
    includes_tail = any(m.where == "tail" and m.loss <= best for m in minima)
    return QvxVerdict(
        is_quasiconvex=len(minima) <= 1,
        minima=minima,
        sign_pattern=pattern,
        includes_tail=includes_tail,
        tail_limit=tail_limit,
        grid=grid,
        near_threshold=near,
        stationary=stationary,
    )


def _refine_root(svd: SvdForm, Y: np.ndarray, lo: float, hi: float, rtol: float) -> float:
    return optimize.bisect(
        lambda lam: loocv_grad(svd, Y, lam), lo, hi,
        xtol=np.finfo(float).tiny, rtol=rtol, maxiter=200,
    )


def _grid_verdict(svd: SvdForm, Y: np.ndarray, lambdas: np.ndarray, loss: np.ndarray,
                  grad: np.ndarray, strict_rise_rel: float, rtol: float,
                  hess_tol: float) -> QvxVerdict:
    tail_limit = float(Y @ Y)
    signs = _grad_signs(grad)
    pattern = _sign_pattern(signs)
    grid = (float(lambdas[0]), float(lambdas[-1]), int(lambdas.shape[0]))

    seq = [_Extremum(float(lambdas[0]), float(loss[0]), MIN if signs[0] > 0 else MAX, "boundary")]
    stationary: List[StationaryPoint] = []
    for i in np.flatnonzero(signs[:-1] != signs[1:]):
        lo, hi = float(lambdas[i]), float(lambdas[i + 1])
        root = _refine_root(svd, Y, lo, hi, rtol)
        root_loss, _, root_hess = (float(v[0]) for v in evaluate(svd, Y, [root], order=2))
        kind = MIN if signs[i] < 0 else MAX
        scale = tail_limit / (root * root) if root > 0 else tail_limit

        if abs(root_hess) < hess_tol * scale:
            # flat curvature: fall back to the bracketing grid values
            neighbours = (float(loss[i]), float(loss[i + 1]))
            if root_loss < min(neighbours):
                curvature_kind = MIN
            elif root_loss > max(neighbours):
                curvature_kind = MAX
            else:
                curvature_kind = kind
        else:
            curvature_kind = MIN if root_hess > 0 else MAX
        if curvature_kind != kind:
            raise GridTooCoarseError(grid[2], {"lambda": root, "cell": [lo, hi]})
        if stationary and abs(root - stationary[-1].lam) <= 2 * rtol * root:
            raise GridTooCoarseError(grid[2], {"lambda": root, "previous": stationary[-1].lam})

        stationary.append(StationaryPoint(root, root_loss, root_hess, kind))
        seq.append(_Extremum(root, root_loss, kind, "interior"))

    seq.append(_Extremum(math.inf, tail_limit, MIN if signs[-1] < 0 else MAX, "tail"))
    return _finish(seq, tail_limit, pattern, grid, stationary, strict_rise_rel)


def _with_retries(svd: SvdForm, Y: np.ndarray, grid: GridConfig, run) -> QvxVerdict:
    current = grid
    for attempt in range(settings.GRID_RETRIES + 1):
        try:
            return run(current)
        except GridTooCoarseError as exc:
            if attempt == settings.GRID_RETRIES:
                raise
            logger.warning(
                f"Grid with {current.points} points too coarse ({exc.details}); "
                f"densifying x{settings.GRID_DENSIFY_FACTOR}"
            )
            current = current.densified(settings.GRID_DENSIFY_FACTOR)
    raise AssertionError("unreachable")


def classify(svd: SvdForm, Y: np.ndarray, grid: Optional[GridConfig] = None,
             strict_rise_rel: Optional[float] = None, rtol: Optional[float] = None,
             hess_tol: Optional[float] = None) -> QvxVerdict:
    """Classify L as quasiconvex on [grid_min, inf]."""
    grid = grid or GridConfig()
    strict_rise_rel = settings.STRICT_RISE_REL if strict_rise_rel is None else strict_rise_rel
    rtol = settings.ROOT_RTOL if rtol is None else rtol
    hess_tol = settings.HESS_FLAT_TOL if hess_tol is None else hess_tol
    Y = np.asarray(Y, dtype=float)

    def run(current: GridConfig) -> QvxVerdict:
        lambdas = current.lambdas(svd)
        loss, grad = evaluate(svd, Y, lambdas, order=1)
        return _grid_verdict(svd, Y, lambdas, loss, grad, strict_rise_rel, rtol, hess_tol)

    verdict = _with_retries(svd, Y, grid, run)
    logger.debug(f"classify: pattern={verdict.sign_pattern} minima={verdict.minima_count}")
    return verdict


# L' sign patterns with at most one candidate minimum
SINGLE_MINIMUM_PATTERNS = ("+", "-", "-+")


def _single_minimum_verdict(Y: np.ndarray, lambdas: np.ndarray, loss: np.ndarray,
                            signs: np.ndarray, pattern: str, strict_rise_rel: float) -> QvxVerdict:
    """Verdict without root refinement; an interior minimum sits at the best grid point."""
    tail_limit = float(Y @ Y)
    grid = (float(lambdas[0]), float(lambdas[-1]), int(lambdas.shape[0]))
    seq = [_Extremum(grid[0], float(loss[0]), MIN if signs[0] > 0 else MAX, "boundary")]
    if pattern == "-+":
        j = int(np.argmin(loss))
        seq.append(_Extremum(float(lambdas[j]), float(loss[j]), MIN, "interior"))
    seq.append(_Extremum(math.inf, tail_limit, MIN if signs[-1] < 0 else MAX, "tail"))
    return _finish(seq, tail_limit, pattern, grid, [], strict_rise_rel)


def classify_batch(svd: SvdForm, Ys: np.ndarray, grid: Optional[GridConfig] = None,
                   strict_rise_rel: Optional[float] = None) -> List[QvxVerdict]:
    """Classify many responses sharing one (U, S).

    Ys is N x K. L and L' are evaluated for all responses at once. Root
    refinement runs only for responses whose L' sign pattern admits two or
    more candidate minima; the rest keep their best grid point.
    """
    grid = grid or GridConfig()
    strict_rise_rel = settings.STRICT_RISE_REL if strict_rise_rel is None else strict_rise_rel
    Ys = np.asarray(Ys, dtype=float)
    if Ys.ndim != 2 or Ys.shape[0] != svd.N:
        raise InvalidInputError("Ys must be an N x K matrix", {"shape": list(Ys.shape)})

    lambdas = grid.lambdas(svd)
    loss, grad = evaluate(svd, Ys, lambdas, order=1)
    verdicts = []
    for k in range(Ys.shape[1]):
        Y = np.ascontiguousarray(Ys[:, k])
        signs = _grad_signs(grad[:, k])
        pattern = _sign_pattern(signs)
        if pattern in SINGLE_MINIMUM_PATTERNS:
            verdicts.append(_single_minimum_verdict(Y, lambdas, loss[:, k], signs, pattern,
                                                    strict_rise_rel))
            continue
        try:
            verdicts.append(_grid_verdict(svd, Y, lambdas, loss[:, k], grad[:, k], strict_rise_rel,
                                          settings.ROOT_RTOL, settings.HESS_FLAT_TOL))
        except GridTooCoarseError:
            # classify owns the retry budget, so it starts again from the base grid
            verdicts.append(classify(svd, Y, grid, strict_rise_rel=strict_rise_rel))
    return verdicts


def _discrete_extrema(lambdas: np.ndarray, values: np.ndarray) -> List[_Extremum]:
    """Extrema of the sampled sequence with the tail appended as last sample."""
    lam_ext = np.append(lambdas, math.inf)
    diffs = np.sign(np.diff(values))
    steps = np.flatnonzero(diffs)
    if steps.size == 0:
        return [_Extremum(float(lam_ext[-1]), float(values[-1]), MIN, "tail")]

    seq = [_Extremum(float(lam_ext[0]), float(values[0]), MIN if diffs[steps[0]] > 0 else MAX, "boundary")]
    for prev, nxt in zip(steps[:-1], steps[1:]):
        if diffs[prev] != diffs[nxt]:
            j = nxt  # first sample after the turn
            seq.append(_Extremum(float(lam_ext[j]), float(values[j]),
                                 MIN if diffs[nxt] > 0 else MAX, "interior"))
    seq.append(_Extremum(math.inf, float(values[-1]), MIN if diffs[steps[-1]] < 0 else MAX, "tail"))
    return seq


def dense_grid_verdict(svd: SvdForm, Y: np.ndarray, points: Optional[int] = None,
                       grid: Optional[GridConfig] = None,
                       strict_rise_rel: Optional[float] = None) -> QvxVerdict:
    """Verdict from L sampled on a dense log grid, with no root refinement."""
    points = settings.DENSE_ORACLE_POINTS if points is None else int(points)
    strict_rise_rel = settings.STRICT_RISE_REL if strict_rise_rel is None else strict_rise_rel
    base = grid or GridConfig()
    lo, hi = base.bounds(svd)
    dense = GridConfig(points=points, lambda_min=lo, lambda_max=hi)
    lambdas = dense.lambdas(svd)
    Y = np.asarray(Y, dtype=float)
    (loss,) = evaluate(svd, Y, lambdas, order=0)
    tail_limit = float(Y @ Y)

    seq = _discrete_extrema(lambdas, np.append(loss, tail_limit))
    steps = np.sign(np.diff(loss))
    pattern = _sign_pattern(steps[steps != 0]) if np.any(steps) else "+"
    return _finish(seq, tail_limit, pattern, (lo, hi, points), [], strict_rise_rel)


def minima_census(verdict: QvxVerdict) -> MinimaCensus:
    values = [m.loss for m in verdict.minima]
    gap = 0.0
    if len(values) > 1:
        low, high = min(values), max(values)
        gap = high / low - 1.0 if low > 0 else math.inf
    return MinimaCensus(
        count=len(values),
        locations=[m.lam for m in verdict.minima],
        values=values,
        gap=gap,
    )


def all_roots_convex(verdict: QvxVerdict) -> bool:
    """True when every refined root of L' has positive curvature."""
    return all(p.hess > 0 for p in verdict.stationary)


def to_record(verdict: QvxVerdict) -> VerdictRecord:
    return VerdictRecord(
        is_qvx=verdict.is_quasiconvex,
        minima=[
            MinimumRecord(
                **{"lambda": None if math.isinf(m.lam) else m.lam},
                loss=m.loss,
                kind=m.where,
            )
            for m in verdict.minima
        ],
        tail_limit=verdict.tail_limit,
        grid=GridRecord(min=verdict.grid[0], max=verdict.grid[1], points=verdict.grid[2]),
        sign_pattern=verdict.sign_pattern,
        includes_tail=verdict.includes_tail,
        near_threshold=verdict.near_threshold,
    )


def verdict_flags(verdicts: Sequence[QvxVerdict]) -> Tuple[int, int]:
    """(non-quasiconvex count, near-threshold count)."""
    return (
        sum(1 for v in verdicts if not v.is_quasiconvex),
        sum(1 for v in verdicts if v.near_threshold),
    )
