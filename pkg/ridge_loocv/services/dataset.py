"""Regression problem representation and standardization.

A problem is a covariate matrix X (N x D, D < N, full column rank) and a
response vector Y. Everything downstream works from the thin SVD
X = U diag(S) V^T, cached on the standardized dataset.
"""

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ridge_loocv.core.config import settings
from ridge_loocv.core.errors import (
    BadRankError,
    ConstantColumnError,
    DatasetFormatError,
    InvalidInputError,
    RankDeficientError,
    ZeroResponseError,
)
from ridge_loocv.core.logging import get_logger

logger = get_logger(__name__)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RawDataset:
    X: np.ndarray
    Y: np.ndarray
    feature_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        X = _frozen(self.X)
        Y = _frozen(self.Y).ravel()
        if X.ndim != 2:
            raise InvalidInputError("X must be a matrix", {"shape": list(X.shape)})
        N, D = X.shape
        if Y.shape[0] != N:
            raise InvalidInputError("X and Y disagree on N", {"n_x": N, "n_y": Y.shape[0]})
        if N < 3 or D < 1 or D >= N:
            raise InvalidInputError("need N >= 3 and 1 <= D < N", {"n": N, "d": D})
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InvalidInputError("X and Y must be finite")
        names = list(self.feature_names) or [f"x{d}" for d in range(D)]
        if len(names) != D:
            raise InvalidInputError("feature_names must have one entry per column")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "feature_names", names)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def D(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SvdForm:
    """Thin SVD X = U diag(S) V^T with the row leverages nu_n = ||u_n||^2."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    nu: np.ndarray

    @classmethod
    def from_matrix(cls, X: np.ndarray) -> "SvdForm":
        U, S, Vt = np.linalg.svd(np.asarray(X, dtype=float), full_matrices=False)
        return cls.from_factors(U, S, Vt.T)

    @classmethod
    def from_factors(cls, U: np.ndarray, S: Optional[np.ndarray] = None,
                     V: Optional[np.ndarray] = None) -> "SvdForm":
        U = np.asarray(U, dtype=float)
        D = U.shape[1]
        S = np.ones(D) if S is None else np.asarray(S, dtype=float).ravel()
        V = np.eye(D) if V is None else np.asarray(V, dtype=float)
        if S.shape[0] != D or V.shape != (D, D):
            raise InvalidInputError("SVD factor shapes disagree",
                                    {"U": list(U.shape), "S": list(S.shape), "V": list(V.shape)})
        if np.any(S <= 0):
            raise RankDeficientError("singular values must be positive")
        return cls(U=_frozen(U), S=_frozen(S), V=_frozen(V), nu=_frozen(np.sum(U ** 2, axis=1)))

    @property
    def N(self) -> int:
        return self.U.shape[0]

    @property
    def D(self) -> int:
        return self.U.shape[1]

    @property
    def nu_max(self) -> float:
        return float(np.max(self.nu))

    @property
    def mean_sq_singular(self) -> float:
        return float(np.mean(self.S ** 2))

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T

    def spectral_ratio(self) -> float:
        return float(np.max(self.S) / np.min(self.S))

    def flat_deviation(self) -> float:
        """max_d |S_d - 1|."""
        return float(np.max(np.abs(self.S - 1.0)))

    def is_flat(self, tol: Optional[float] = None) -> bool:
        tol = settings.FLAT_SPECTRUM_TOL if tol is None else tol
        return self.flat_deviation() <= tol

    def with_spectrum(self, S: np.ndarray) -> "SvdForm":
        return SvdForm.from_factors(self.U, S, self.V)

    def check(self, X: Optional[np.ndarray] = None, tol_abs: Optional[float] = None,
              tol_rel: Optional[float] = None) -> None:
        """Orthonormality and leverage checks; with X, also ||X - U diag(S) V^T|| <= tol_rel ||X||."""
        tol_abs = settings.TOL_ABS if tol_abs is None else tol_abs
        tol_rel = settings.TOL_REL if tol_rel is None else tol_rel
        eye = np.eye(self.D)
        if np.max(np.abs(self.U.T @ self.U - eye)) > tol_abs:
            raise InvalidInputError("U columns are not orthonormal")
        if np.max(np.abs(self.V.T @ self.V - eye)) > tol_abs:
            raise InvalidInputError("V is not orthonormal")
        if abs(float(np.sum(self.nu)) - self.D) > tol_abs:
            raise InvalidInputError("leverages do not sum to D")
        if X is not None:
            X = np.asarray(X, dtype=float)
            if X.shape != (self.N, self.D):
                raise InvalidInputError("X does not match the factors", {"shape": list(X.shape)})
            err = float(np.linalg.norm(X - self.reconstruct()))
            if err > tol_rel * float(np.linalg.norm(X)):
                raise InvalidInputError("factors do not reconstruct X", {"error": err})


@dataclass(frozen=True)
class StandardizedDataset:
    X: np.ndarray
    Y: np.ndarray
    svd: SvdForm
    feature_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        X = _frozen(self.X)
        Y = _frozen(self.Y).ravel()
        tol = settings.TOL_ABS * max(1.0, float(np.sqrt(X.shape[0])))
        if abs(float(np.sum(Y))) > tol * max(1.0, float(np.linalg.norm(Y))):
            raise InvalidInputError("responses are not centered")
        col_norms = np.maximum(1.0, np.linalg.norm(X, axis=0))
        if np.any(np.abs(X.sum(axis=0)) > tol * col_norms):
            raise InvalidInputError("covariate columns are not centered")
        if self.svd.S[-1] <= settings.RANK_TOL * self.svd.S[0]:
            raise RankDeficientError(details={"s_min": float(self.svd.S[-1]),
                                              "s_max": float(self.svd.S[0])})
        names = list(self.feature_names) or [f"x{d}" for d in range(X.shape[1])]
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "feature_names", names)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def D(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class LeastSquaresFit:
    theta_hat: np.ndarray
    residuals: np.ndarray
    projections: np.ndarray  # fitted values X theta_hat = U U^T Y


def least_squares(svd: SvdForm, Y: np.ndarray) -> LeastSquaresFit:
    Y = np.asarray(Y, dtype=float)
    z = svd.U.T @ Y
    fitted = svd.U @ z
    theta = svd.V @ (z / svd.S)
    return LeastSquaresFit(theta_hat=theta, residuals=Y - fitted, projections=fitted)


def problem_hash(svd: SvdForm, Y: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in (svd.U, svd.S, svd.V, np.asarray(Y, dtype=float)):
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def standardize(raw: RawDataset, rank_tol: Optional[float] = None) -> StandardizedDataset:
    """Center every column and the responses; scale columns to sum(x^2) = N.

    Population variance (divide by N) is used so the column norm condition
    holds literally.
    """
    rank_tol = settings.RANK_TOL if rank_tol is None else rank_tol
    X = np.array(raw.X, dtype=float)
    N, D = X.shape

    X -= X.mean(axis=0)
    scale = np.sqrt(np.mean(X ** 2, axis=0))
    for d in range(D):
        ref = max(1.0, float(np.max(np.abs(raw.X[:, d]))))
        if scale[d] <= 1e-12 * ref:
            raise ConstantColumnError(d, raw.feature_names[d])
    X /= scale
    Y = raw.Y - raw.Y.mean()

    svd = SvdForm.from_matrix(X)
    if svd.S[-1] <= rank_tol * svd.S[0]:
        raise RankDeficientError(details={"s_min": float(svd.S[-1]), "s_max": float(svd.S[0])})
    svd.check(X)

    logger.debug(f"Standardized dataset N={N} D={D} spectral ratio={svd.spectral_ratio():.3g}")
    return StandardizedDataset(X=X, Y=Y, svd=svd, feature_names=list(raw.feature_names))


def reduce_frame(ds: StandardizedDataset) -> StandardizedDataset:
    """Equivalent problem with V = I and unit-norm Y.

    L of the returned problem is L of the input divided by ||Y||^2.
    """
    norm = float(np.linalg.norm(ds.Y))
    if norm == 0.0:
        raise ZeroResponseError()
    svd = SvdForm.from_factors(ds.svd.U, ds.svd.S, np.eye(ds.D))
    return StandardizedDataset(
        X=ds.svd.U * ds.svd.S,
        Y=ds.Y / norm,
        svd=svd,
        feature_names=[f"pc{d + 1}" for d in range(ds.D)],
    )


def pcr_truncate(ds: StandardizedDataset, R: int) -> StandardizedDataset:
    """Keep the top-R principal directions, X' = U[:, :R] diag(S[:R]).

    Columns are not re-standardized; they stay centered because U's are.
    """
    if not 1 <= R <= ds.D:
        raise BadRankError(R, ds.D)
    U, S = ds.svd.U[:, :R], ds.svd.S[:R]
    return StandardizedDataset(
        X=U * S,
        Y=ds.Y,
        svd=SvdForm.from_factors(U, S, np.eye(R)),
        feature_names=[f"pc{d + 1}" for d in range(R)],
    )


def load_csv(
    path: Union[str, Path],
    target: str,
    categorical: Optional[Sequence[str]] = None,
) -> RawDataset:
    """Read a CSV with a header row into a RawDataset.

    Column order: numeric covariates in file order, then for each categorical
    column (file order) its one-hot columns for every level but the first,
    levels sorted. Rows with any missing value are dropped.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, sep=None, engine="python")
    except FileNotFoundError:
        raise DatasetFormatError(f"Dataset not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        match = re.search(r"line (\d+)", str(e))
        raise DatasetFormatError(f"Could not parse {path.name}: {e}",
                                 row=int(match.group(1)) if match else None,
                                 details={"path": str(path)})

    frame.columns = [str(c).strip() for c in frame.columns]
    if target not in frame.columns:
        raise DatasetFormatError(f"Target column '{target}' not in header", column=target,
                                 details={"columns": list(frame.columns)})

    n_before = len(frame)
    frame = frame.dropna(axis=0, how="any").reset_index(drop=True)
    if len(frame) < n_before:
        logger.info(f"Dropped {n_before - len(frame)} rows with missing values from {path.name}")

    y_col = pd.to_numeric(frame[target], errors="coerce")
    if y_col.isna().any():
        bad = int(np.flatnonzero(y_col.isna().to_numpy())[0])
        raise DatasetFormatError(f"Non-numeric target value '{frame[target].iloc[bad]}'",
                                 row=bad, column=target)

    covariates = [c for c in frame.columns if c != target]
    categorical = set(categorical or [])
    unknown = categorical - set(covariates)
    if unknown:
        raise DatasetFormatError(f"Unknown categorical columns {sorted(unknown)}",
                                 column=sorted(unknown)[0])
    numeric_cols, cat_cols = [], []
    for c in covariates:
        if c in categorical or not pd.api.types.is_numeric_dtype(frame[c]):
            cat_cols.append(c)
        else:
            numeric_cols.append(c)

    parts = [frame[numeric_cols].astype(float)]
    for c in cat_cols:
        levels = sorted(frame[c].astype(str).unique())
        dummies = pd.get_dummies(
            pd.Categorical(frame[c].astype(str), categories=levels),
            prefix=c, drop_first=True, dtype=float,
        )
        parts.append(dummies)
    X = pd.concat(parts, axis=1)
    if X.shape[1] == 0:
        raise DatasetFormatError("No covariate columns", details={"path": str(path)})

    logger.info(f"Loaded {path.name}: N={len(frame)} D={X.shape[1]} "
                f"({len(cat_cols)} categorical columns one-hot encoded)")
    try:
        return RawDataset(X=X.to_numpy(), Y=y_col.to_numpy(dtype=float),
                          feature_names=[str(c) for c in X.columns])
    except InvalidInputError as e:
        raise DatasetFormatError(e.message, details=e.details)
