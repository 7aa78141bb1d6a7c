"""Finite-sample numbers behind the quasiconvexity assumptions.

The theory perturbs around the unit spectrum S = 1, so the assumption
quantities are evaluated on the unit-spectrum surrogate of a problem (same U
and Y, S replaced by ones). The actual spectrum's flatness and s1/sD ratio
are reported next to them. Asymptotic assumptions are only assessed through
fitted log-log slopes when a family of problems indexed by N is supplied.
"""

import math
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from ridge_loocv.core.config import settings
from ridge_loocv.core.errors import FlatSpectrumRequiredError, InvalidInputError, NoPositiveRootError
from ridge_loocv.core.logging import get_logger
from ridge_loocv.schemas.report import AssumptionReportRecord, CertificateRecord, SlopeRecord
from ridge_loocv.services.dataset import SvdForm, least_squares
from ridge_loocv.services.loocv import XiCoefficients, evaluate, xi_coefficients

logger = get_logger(__name__)

CERTIFICATE_POINTS = 2001


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    rvalue: float
    points: int


@dataclass(frozen=True)
class Certificate:
    holds: bool
    margin: float
    lambda_range: float
    lambda_at_margin: float


@dataclass(frozen=True)
class AssumptionReport:
    n: int
    d: int
    a1_value: float
    a2_value: float
    theta_hat_norm: float
    a3_numax: float
    a4_value: float
    cross_term: float
    cross_identity: float
    delta0: float
    delta0_bound: float
    xi_sums: Tuple[float, float, float]
    abc_sums: Tuple[float, float, float]
    lambda_Q: Optional[float]
    lambda_Q2: Optional[float]
    root_bound: Optional[float]
    flat_spectrum: bool
    spectral_ratio: float
    a3_slope: Optional[SlopeFit] = None
    notes: List[str] = field(default_factory=list)


def _sums(xi: Union[XiCoefficients, Sequence[float]]) -> Tuple[float, float, float]:
    values = xi.xi_sums if isinstance(xi, XiCoefficients) else np.asarray(xi, dtype=float)
    if len(values) != 3:
        raise InvalidInputError("expected three quadratic coefficients")
    return float(values[0]), float(values[1]), float(values[2])


def _positive_root(a: float, b: float, c: float) -> Optional[float]:
    """Largest positive root of a x^2 + b x + c, or None."""
    if a == 0.0:
        if b == 0.0:
            return None
        root = -c / b
        return root if root > 0 else None
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return None
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    roots = [q / a] + ([c / q] if q != 0.0 else [])
    positive = [r for r in roots if r > 0]
    return max(positive) if positive else None


def lambda_Q(xi: Union[XiCoefficients, Sequence[float]]) -> float:
    """Positive root of xi_1 l^2 + xi_2 l + xi_3 over the summed coefficients."""
    x1, x2, x3 = _sums(xi)
    if x3 >= 0 and x2 >= 0:
        raise NoPositiveRootError((x1, x2, x3), "L' >= 0; minimum at lambda = 0")
    if x1 <= 0:
        raise NoPositiveRootError((x1, x2, x3), "non-positive leading coefficient")
    root = _positive_root(x1, x2, x3)
    if root is None:
        raise NoPositiveRootError((x1, x2, x3), "negative discriminant")
    return root


def lambda_Q2(xi: XiCoefficients) -> Optional[float]:
    """Positive root of the second-derivative quadratic a l^2 + b l + c."""
    a, b, c = (float(v) for v in xi.abc_sums)
    return _positive_root(a, b, c)


def delta0(svd: SvdForm, Y: np.ndarray) -> Tuple[float, float]:
    """(direct sum, nu_max bound); the direct value is never below the bound."""
    e = least_squares(svd, Y).residuals
    nu = svd.nu
    direct = -float(np.sum((1.0 / (1.0 - nu) ** 3 - 1.0) * nu * e ** 2))
    nu_max = svd.nu_max
    bound = -(1.0 / (1.0 - nu_max) ** 3 - 1.0) * nu_max * float(e @ e)
    return direct, bound


def root_bound(xi: XiCoefficients, delta_zero: float) -> Optional[float]:
    """Right end of the interval that must contain every root of L'.

    Valid when xi_1, xi_2 > 0 > xi_3; then roots of L' lie in
    [0, lambda_Q - delta(0) / g_Q'(lambda_Q)].
    """
    x1, x2, x3 = _sums(xi)
    if not (x1 > 0 and x2 > 0 and x3 < 0):
        return None
    lq = lambda_Q(xi)
    return lq - delta_zero / (2.0 * x1 * lq + x2)


def second_deriv_certificate(svd: SvdForm, Y: np.ndarray, lambda_range: Optional[float] = None,
                             points: int = CERTIFICATE_POINTS) -> Certificate:
    """Check L'' > 0 on a uniform grid over [0, lambda_range].

    The default range is lambda_Q + 1, or [0, 1] when the quadratic has no
    positive root.
    """
    if not svd.is_flat(settings.FLAT_SPECTRUM_TOL):
        raise FlatSpectrumRequiredError(svd.flat_deviation())
    if lambda_range is None:
        try:
            lambda_range = lambda_Q(xi_coefficients(svd, Y)) + 1.0
        except NoPositiveRootError:
            lambda_range = 1.0
    if lambda_range <= 0:
        raise InvalidInputError("lambda_range must be positive", {"lambda_range": lambda_range})

    lambdas = np.linspace(0.0, lambda_range, points)
    _, _, hess = evaluate(svd, Y, lambdas, order=2)
    i = int(np.argmin(hess))
    return Certificate(
        holds=bool(hess[i] > 0),
        margin=float(hess[i]),
        lambda_range=float(lambda_range),
        lambda_at_margin=float(lambdas[i]),
    )


def coherence_slope(N_values: Sequence[float], nu_max: Sequence[float]) -> SlopeFit:
    """Least-squares slope of log nu_max against log N."""
    N_values = np.asarray(N_values, dtype=float)
    nu_max = np.asarray(nu_max, dtype=float)
    if N_values.shape != nu_max.shape or np.unique(N_values).size < 2:
        raise InvalidInputError("need nu_max at two or more distinct N")
    if np.any(N_values <= 0) or np.any(nu_max <= 0):
        raise InvalidInputError("N and nu_max must be positive")
    fit = stats.linregress(np.log(N_values), np.log(nu_max))
    return SlopeFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        stderr=float(fit.stderr),
        rvalue=float(fit.rvalue),
        points=int(N_values.size),
    )


def assumption_report(svd: SvdForm, Y: np.ndarray,
                      family: Optional[Mapping[int, float]] = None) -> AssumptionReport:
    """Assumption quantities of (U, Y) on the unit-spectrum surrogate.

    `family` maps N to a nu_max statistic for a problem family; when given, the
    decay slope is fitted.
    """
    Y = np.asarray(Y, dtype=float)
    flat = svd.is_flat(settings.FLAT_SPECTRUM_TOL)
    unit = svd if flat else svd.with_spectrum(np.ones(svd.D))
    notes = []
    if not flat:
        notes.append("spectrum is not flat; quantities use the unit-spectrum surrogate")

    fit = least_squares(unit, Y)
    nu, a, e = unit.nu, fit.projections, fit.residuals
    theta_norm_sq = float(fit.theta_hat @ fit.theta_hat)
    xi = xi_coefficients(unit, Y)
    direct, bound = delta0(unit, Y)

    try:
        lq = lambda_Q(xi)
    except NoPositiveRootError as exc:
        lq = None
        notes.append(f"lambda_Q undefined: {exc.details['reason']}")
    bound_right = root_bound(xi, direct) if lq is not None else None

    slope = None
    if family:
        ns = sorted(family)
        slope = coherence_slope(ns, [family[n] for n in ns])
    else:
        notes.append("single instance; asymptotic assumptions are not assessed")

    report = AssumptionReport(
        n=svd.N,
        d=svd.D,
        a1_value=float(e @ e) / svd.N,
        a2_value=math.sqrt(theta_norm_sq),
        theta_hat_norm=float(np.linalg.norm(least_squares(svd, Y).theta_hat)),
        a3_numax=svd.nu_max,
        a4_value=theta_norm_sq - float(np.sum(nu * (a ** 2 + 2.0 * e ** 2))),
        cross_term=float(np.sum((1.0 - nu) * e * a)),
        cross_identity=float(e @ a),
        delta0=direct,
        delta0_bound=bound,
        xi_sums=tuple(float(v) for v in xi.xi_sums),
        abc_sums=tuple(float(v) for v in xi.abc_sums),
        lambda_Q=lq,
        lambda_Q2=lambda_Q2(xi),
        root_bound=bound_right,
        flat_spectrum=flat,
        spectral_ratio=svd.spectral_ratio(),
        a3_slope=slope,
        notes=notes,
    )
    logger.debug(f"assumption report: N={report.n} lambda_Q={report.lambda_Q} delta0={report.delta0:.3g}")
    return report


def to_record(report: AssumptionReport, certificate: Optional[Certificate] = None) -> AssumptionReportRecord:
    slope = report.a3_slope
    return AssumptionReportRecord(
        n=report.n,
        d=report.d,
        a1_value=report.a1_value,
        a2_value=report.a2_value,
        theta_hat_norm=report.theta_hat_norm,
        a3_numax=report.a3_numax,
        a3_slope=None if slope is None else SlopeRecord(
            slope=slope.slope, intercept=slope.intercept, stderr=slope.stderr,
            rvalue=slope.rvalue, points=slope.points,
        ),
        a4_value=report.a4_value,
        cross_term=report.cross_term,
        delta0=report.delta0,
        delta0_bound=report.delta0_bound,
        xi_sums=list(report.xi_sums),
        abc_sums=list(report.abc_sums),
        lambda_Q=report.lambda_Q,
        lambda_Q2=report.lambda_Q2,
        root_bound=report.root_bound,
        flat_spectrum=report.flat_spectrum,
        spectral_ratio=report.spectral_ratio,
        certificate=None if certificate is None else CertificateRecord(
            holds=certificate.holds, margin=certificate.margin,
            lambda_range=certificate.lambda_range, lambda_at_margin=certificate.lambda_at_margin,
        ),
        notes=report.notes,
    )
