"""Closed-form leave-one-out loss for ridge regression.

With theta_lambda = (X^T X + lambda I)^-1 X^T Y, the hat values are
Q_n = sum_d U_nd^2 S_d^2 / (S_d^2 + lambda) and

    L(lambda) = sum_n (x_n^T theta_lambda - y_n)^2 / (1 - Q_n)^2.

Everything is evaluated in the SVD frame, so V never enters. Derivatives are
assembled analytically from the derivatives of the shrinkage factors.
"""

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, TextIO, Tuple, Union

import numpy as np
import pandas as pd

from ridge_loocv.core.config import settings
from ridge_loocv.core.errors import (
    DatasetFormatError,
    FlatSpectrumRequiredError,
    InvalidInputError,
    LeverageOneError,
    RankDeficientError,
)
from ridge_loocv.core.logging import get_logger
from ridge_loocv.services.dataset import SvdForm, least_squares, problem_hash

logger = get_logger(__name__)

# elements per evaluation block (lambda x N x responses)
_BLOCK_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class GridConfig:
    """Log-spaced lambda grid.

    Without explicit bounds the grid spans
    [low_factor * s2, high_factor * s2] where s2 is the mean squared
    singular value.
    """

    points: int = field(default_factory=lambda: settings.GRID_POINTS)
    lambda_min: Optional[float] = None
    lambda_max: Optional[float] = None
    low_factor: float = field(default_factory=lambda: settings.GRID_LOW_FACTOR)
    high_factor: float = field(default_factory=lambda: settings.GRID_HIGH_FACTOR)

    def __post_init__(self):
        if self.points < 3:
            raise InvalidInputError("grid needs at least 3 points", {"points": self.points})
        lo, hi = self.lambda_min, self.lambda_max
        if (lo is not None and lo <= 0) or (hi is not None and hi <= 0):
            raise InvalidInputError("grid bounds must be positive")
        if lo is not None and hi is not None and lo >= hi:
            raise InvalidInputError("lambda_min must be below lambda_max",
                                    {"lambda_min": lo, "lambda_max": hi})

    def bounds(self, svd: SvdForm) -> Tuple[float, float]:
        s2 = svd.mean_sq_singular
        lo = self.lambda_min if self.lambda_min is not None else self.low_factor * s2
        hi = self.lambda_max if self.lambda_max is not None else self.high_factor * s2
        return lo, hi

    def lambdas(self, svd: SvdForm) -> np.ndarray:
        lo, hi = self.bounds(svd)
        return np.logspace(np.log10(lo), np.log10(hi), self.points)

    def densified(self, factor: int) -> "GridConfig":
        return GridConfig(
            points=(self.points - 1) * factor + 1,
            lambda_min=self.lambda_min,
            lambda_max=self.lambda_max,
            low_factor=self.low_factor,
            high_factor=self.high_factor,
        )


@dataclass(frozen=True)
class LoocvCurve:
    lambdas: np.ndarray
    loss: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    tail_limit: float
    problem_hash: str = ""

    @property
    def points(self) -> int:
        return int(self.lambdas.shape[0])

    def grid_argmin(self) -> int:
        return int(np.argmin(self.loss))


@dataclass(frozen=True)
class XiCoefficients:
    """Per-point coefficients of the unit-spectrum derivative quadratics.

    xi[:, i] are the coefficients of lambda^2, lambda, 1 in
    (1 + lambda)^4 L'(lambda) / 2 (up to the (1+lambda)^3/(1+lambda-nu)^3
    weights); abc[:, i] the same for the second-derivative display.
    """

    xi: np.ndarray
    abc: np.ndarray
    nu: np.ndarray

    @property
    def xi_sums(self) -> np.ndarray:
        return self.xi.sum(axis=0)

    @property
    def abc_sums(self) -> np.ndarray:
        return self.abc.sum(axis=0)

    def grad_form(self, lam: float) -> float:
        """sum_n (1+l)^3/(1+l-nu_n)^3 (xi_n1 l^2 + xi_n2 l + xi_n3)."""
        t = 1.0 + lam
        poly = self.xi @ np.array([lam * lam, lam, 1.0])
        return float(np.sum((t / (t - self.nu)) ** 3 * poly))

    def hess_form(self, lam: float) -> float:
        """sum_n (1+l)^4/(1+l-nu_n)^4 (a_n l^2 + b_n l + c_n)."""
        t = 1.0 + lam
        poly = self.abc @ np.array([lam * lam, lam, 1.0])
        return float(np.sum((t / (t - self.nu)) ** 4 * poly))

    def grad_from_form(self, lam: float) -> float:
        return 2.0 * self.grad_form(lam) / (1.0 + lam) ** 4

    def hess_from_form(self, lam: float) -> float:
        """2/(1+l)^5 times hess_form.

        Equals L''(l) + L'(l)/(1+l), hence L'' wherever L' vanishes.
        """
        return 2.0 * self.hess_form(lam) / (1.0 + lam) ** 5


def _check_lambdas(lambdas: np.ndarray) -> np.ndarray:
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if not np.all(np.isfinite(lambdas)) or np.any(lambdas < 0):
        raise InvalidInputError("lambda must be finite and non-negative")
    return lambdas


def _evaluate_block(svd: SvdForm, Y2: np.ndarray, lambdas: np.ndarray, order: int,
                    leverage_tol: float) -> Tuple[np.ndarray, ...]:
    """Loss (and derivatives up to `order`) for responses Y2 (N x K) on lambdas."""
    s2 = svd.S ** 2
    denom = s2[None, :] + lambdas[:, None]  # G x D
    f0 = s2 / denom
    U, U2 = svd.U, svd.U ** 2
    Z = U.T @ Y2  # D x K

    Q = f0 @ U2.T  # G x N
    gap = 1.0 - Q
    worst = np.unravel_index(np.argmin(gap), gap.shape)
    if gap[worst] <= leverage_tol:
        raise LeverageOneError(int(worst[1]), float(lambdas[worst[0]]), float(gap[worst]))

    P = np.matmul(U[None, :, :], f0[:, :, None] * Z[None, :, :])  # G x N x K
    a = P - Y2[None, :, :]
    b = gap[:, :, None]
    r = a / b
    loss = np.sum(r * r, axis=1)
    if order == 0:
        return (loss,)

    f1 = -s2 / denom ** 2
    Q1 = (f1 @ U2.T)[:, :, None]
    P1 = np.matmul(U[None, :, :], f1[:, :, None] * Z[None, :, :])
    r1 = (P1 * b + a * Q1) / (b * b)
    grad = 2.0 * np.sum(r * r1, axis=1)
    if order == 1:
        return loss, grad

    f2 = 2.0 * s2 / denom ** 3
    Q2 = (f2 @ U2.T)[:, :, None]
    P2 = np.matmul(U[None, :, :], f2[:, :, None] * Z[None, :, :])
    r2 = P2 / b + 2.0 * P1 * Q1 / b ** 2 + a * Q2 / b ** 2 + 2.0 * a * Q1 ** 2 / b ** 3
    hess = 2.0 * np.sum(r1 * r1 + r * r2, axis=1)
    return loss, grad, hess


def evaluate(svd: SvdForm, Y: np.ndarray, lambdas: np.ndarray, order: int = 2,
             leverage_tol: Optional[float] = None) -> Tuple[np.ndarray, ...]:
    """Evaluate L and its first `order` derivatives on a lambda array.

    Y may be a vector (N,) or a stack of responses (N, K); outputs are
    (G,) or (G, K) arrays respectively. Lambdas are processed in fixed-size
    blocks and assembled in order.
    """
    leverage_tol = settings.LEVERAGE_TOL if leverage_tol is None else leverage_tol
    lambdas = _check_lambdas(lambdas)
    Y = np.asarray(Y, dtype=float)
    single = Y.ndim == 1
    Y2 = Y[:, None] if single else Y
    if Y2.shape[0] != svd.N:
        raise InvalidInputError("Y length does not match U", {"n": svd.N, "len_y": Y2.shape[0]})

    block = max(1, _BLOCK_ELEMENTS // max(1, svd.N * Y2.shape[1]))
    pieces = [
        _evaluate_block(svd, Y2, lambdas[i:i + block], order, leverage_tol)
        for i in range(0, lambdas.shape[0], block)
    ]
    out = tuple(np.concatenate([p[j] for p in pieces], axis=0) for j in range(order + 1))
    if single:
        out = tuple(o[:, 0] for o in out)
    return out


def hat_values(svd: SvdForm, lam: float) -> np.ndarray:
    """Q_n(lambda) = u_n^T S (S^2 + lambda I)^-1 S u_n."""
    lam = float(_check_lambdas(lam)[0])
    f0 = svd.S ** 2 / (svd.S ** 2 + lam)
    return (svd.U ** 2) @ f0


def ridge_predictions(svd: SvdForm, Y: np.ndarray, lam: float) -> np.ndarray:
    """x_n^T theta_lambda for every n, computed as U f(lambda) U^T Y."""
    lam = float(_check_lambdas(lam)[0])
    f0 = svd.S ** 2 / (svd.S ** 2 + lam)
    return svd.U @ (f0 * (svd.U.T @ np.asarray(Y, dtype=float)))


def loocv_loss(svd: SvdForm, Y: np.ndarray, lam: float) -> float:
    return float(evaluate(svd, Y, [lam], order=0)[0][0])


def loocv_grad(svd: SvdForm, Y: np.ndarray, lam: float) -> float:
    return float(evaluate(svd, Y, [lam], order=1)[1][0])


def loocv_hess(svd: SvdForm, Y: np.ndarray, lam: float) -> float:
    return float(evaluate(svd, Y, [lam], order=2)[2][0])


def brute_force_loocv(ds, lam: float) -> float:
    """Sum of squared held-out errors from N explicit (N-1)-point ridge fits.

    `ds` is anything with `X` and `Y` arrays. No re-centering is done on the
    held-out fits.
    """
    lam = float(_check_lambdas(lam)[0])
    X = np.asarray(ds.X, dtype=float)
    Y = np.asarray(ds.Y, dtype=float)
    N, D = X.shape
    total = 0.0
    for n in range(N):
        keep = np.arange(N) != n
        Xn, Yn = X[keep], Y[keep]
        if lam == 0.0 and np.linalg.matrix_rank(Xn) < D:
            raise RankDeficientError(f"Leave-one-out subproblem {n} is rank deficient",
                                     details={"index": n})
        theta = np.linalg.solve(Xn.T @ Xn + lam * np.eye(D), Xn.T @ Yn)
        total += float(X[n] @ theta - Y[n]) ** 2
    return total


def xi_coefficients(svd: SvdForm, Y: np.ndarray, flat_tol: Optional[float] = None) -> XiCoefficients:
    flat_tol = settings.FLAT_SPECTRUM_TOL if flat_tol is None else flat_tol
    if not svd.is_flat(flat_tol):
        raise FlatSpectrumRequiredError(svd.flat_deviation())

    fit = least_squares(svd, Y)
    nu, a, e = svd.nu, fit.projections, fit.residuals
    xi1 = (1 - nu) * a ** 2 - nu * e ** 2 + (1 - 2 * nu) * e * a
    xi2 = (1 - nu) * a ** 2 - 2 * nu * e ** 2 + (2 - 3 * nu) * e * a
    xi3 = -nu * e ** 2 + (1 - nu) * e * a
    a_n = -xi1
    b_n = 2 * (1 - nu) * xi1 - 2 * xi2
    c_n = (1 - nu) * xi2 - 3 * xi3
    return XiCoefficients(
        xi=np.column_stack([xi1, xi2, xi3]),
        abc=np.column_stack([a_n, b_n, c_n]),
        nu=np.array(nu),
    )


def compute_curve(svd: SvdForm, Y: np.ndarray, grid: Optional[GridConfig] = None) -> LoocvCurve:
    grid = grid or GridConfig()
    lambdas = grid.lambdas(svd)
    loss, grad, hess = evaluate(svd, Y, lambdas, order=2)
    Y = np.asarray(Y, dtype=float)
    return LoocvCurve(
        lambdas=lambdas,
        loss=loss,
        grad=grad,
        hess=hess,
        tail_limit=float(Y @ Y),
        problem_hash=problem_hash(svd, Y),
    )


def write_curve_csv(curve: LoocvCurve, target: Union[str, Path, TextIO],
                    metadata: Optional[Dict[str, str]] = None) -> None:
    """CSV with columns lambda, loss, grad, hess and '#' header comments."""
    header = {
        "tail_limit": repr(float(curve.tail_limit)),
        "problem_hash": curve.problem_hash,
        "grid": f"{curve.lambdas[0]!r},{curve.lambdas[-1]!r},{curve.points}",
    }
    header.update(metadata or {})
    frame = pd.DataFrame({
        "lambda": curve.lambdas,
        "loss": curve.loss,
        "grad": curve.grad,
        "hess": curve.hess,
    })
    buf = io.StringIO()
    for key, value in header.items():
        buf.write(f"# {key}={value}\n")
    frame.to_csv(buf, index=False, float_format="%.17g", lineterminator="\n")

    if hasattr(target, "write"):
        target.write(buf.getvalue())
    else:
        Path(target).write_text(buf.getvalue(), encoding="utf-8")


def read_curve_csv(source: Union[str, Path, TextIO]) -> LoocvCurve:
    text = source.read() if hasattr(source, "read") else Path(source).read_text(encoding="utf-8")
    header = {}
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        key, _, value = line[1:].strip().partition("=")
        header[key.strip()] = value.strip()
    if "tail_limit" not in header:
        raise DatasetFormatError("Curve file is missing the tail_limit header")

    frame = pd.read_csv(io.StringIO(text), comment="#", float_precision="round_trip")
    missing = {"lambda", "loss", "grad", "hess"} - set(frame.columns)
    if missing:
        raise DatasetFormatError(f"Curve file lacks columns {sorted(missing)}",
                                 column=sorted(missing)[0])
    return LoocvCurve(
        lambdas=frame["lambda"].to_numpy(dtype=float),
        loss=frame["loss"].to_numpy(dtype=float),
        grad=frame["grad"].to_numpy(dtype=float),
        hess=frame["hess"].to_numpy(dtype=float),
        tail_limit=float(header["tail_limit"]),
        problem_hash=header.get("problem_hash", ""),
    )
