"""Random generators for the simulation studies.

All samplers accept either an `RngStream` or a numpy Generator. Streams are
derived from (master_seed, path) through numpy's SeedSequence spawn keys and
the counter-based Philox bit generator, so any worker can rebuild the stream
of any trial without shared state.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from ridge_loocv.core.errors import DegenerateDrawError, InvalidInputError
from ridge_loocv.core.logging import get_logger

logger = get_logger(__name__)

MAX_ATTEMPTS = 10
DEGENERATE_NORM = 1e-8
THETA_STREAM = 0x7E7A  # path label of the fixed theta* draw


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    path: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise InvalidInputError("master_seed must be a 64-bit unsigned integer",
                                    {"master_seed": self.master_seed})
        if any(int(p) < 0 for p in self.path):
            raise InvalidInputError("stream path entries must be non-negative", {"path": list(self.path)})

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.master_seed, tuple(self.path) + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=tuple(int(p) for p in self.path))
        return np.random.Generator(np.random.Philox(seq))


RngLike = Union[RngStream, np.random.Generator]


def _generator(rng: RngLike) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngStream) else rng


@dataclass(frozen=True)
class LinearModelSpec:
    """Well-specified model y_n = <x_n, theta*> + eps_n, eps_n ~ N(0, sigma2)."""

    theta_star: np.ndarray
    sigma2: float
    spectrum: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float)
        spectrum = np.asarray(self.spectrum, dtype=float)
        if theta.ndim != 1 or abs(np.linalg.norm(theta) - 1.0) > 1e-12:
            raise InvalidInputError("theta_star must be a unit vector")
        if self.sigma2 < 0:
            raise InvalidInputError("sigma2 must be non-negative", {"sigma2": self.sigma2})
        if spectrum.shape != theta.shape or np.any(spectrum <= 0):
            raise InvalidInputError("spectrum must be positive with one entry per dimension")
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "spectrum", spectrum)

    @property
    def D(self) -> int:
        return int(self.theta_star.shape[0])

    @classmethod
    def from_seed(cls, D: int, sigma2: float, master_seed: int,
                  spectrum: Optional[np.ndarray] = None) -> "LinearModelSpec":
        """Fixed random unit theta* derived from the seed alone."""
        theta = RngStream(master_seed, (THETA_STREAM,)).generator().standard_normal(D)
        theta /= np.linalg.norm(theta)
        spectrum = np.ones(D) if spectrum is None else spectrum
        return cls(theta_star=theta, sigma2=float(sigma2), spectrum=spectrum)

    def with_spectrum(self, spectrum: np.ndarray) -> "LinearModelSpec":
        return LinearModelSpec(self.theta_star, self.sigma2, spectrum)


class _Degenerate(Exception):
    pass


def _orthonormalize(A: np.ndarray) -> np.ndarray:
    """Gram-Schmidt over the columns of A, each projection applied twice."""
    N, K = A.shape
    Q = np.empty((N, K))
    for j in range(K):
        v = A[:, j].copy()
        scale = np.linalg.norm(v)
        for _ in range(2):
            v -= Q[:, :j] @ (Q[:, :j].T @ v)
        norm = np.linalg.norm(v)
        if norm < DEGENERATE_NORM * max(scale, 1.0):
            raise _Degenerate()
        Q[:, j] = v / norm
    return Q


def _draw_orthonormal(N: int, D: int, rng: np.random.Generator, zero_mean: bool,
                      sampler: str) -> np.ndarray:
    for attempt in range(MAX_ATTEMPTS):
        A = rng.standard_normal((N, D))
        if zero_mean:
            A = np.column_stack([np.ones(N), A])
        try:
            Q = _orthonormalize(A)
        except _Degenerate:
            logger.debug(f"{sampler}: near-dependent draw on attempt {attempt + 1}, redrawing")
            continue
        return Q[:, 1:] if zero_mean else Q
    raise DegenerateDrawError(sampler, MAX_ATTEMPTS)


def sample_zero_mean_orthonormal(N: int, D: int, rng: RngLike) -> np.ndarray:
    """Orthonormal N x D matrix with zero column means.

    Gram-Schmidt on {1, a_1, ..., a_D} with Gaussian a_d; the 1-vector is
    dropped from the output.
    """
    if not 1 <= D < N - 1:
        raise InvalidInputError("need 1 <= D < N - 1", {"n": N, "d": D})
    return _draw_orthonormal(N, D, _generator(rng), True, "sample_zero_mean_orthonormal")


def sample_orthonormal(N: int, D: int, rng: RngLike) -> np.ndarray:
    """Same Gram-Schmidt pathway without the 1-vector."""
    if not 1 <= D < N:
        raise InvalidInputError("need 1 <= D < N", {"n": N, "d": D})
    return _draw_orthonormal(N, D, _generator(rng), False, "sample_orthonormal")


def sample_null_residual(U: np.ndarray, rng: RngLike, zero_mean: bool = False) -> np.ndarray:
    """Unit vector R with U^T R = 0 (and 1^T R = 0 when `zero_mean`)."""
    U = np.asarray(U, dtype=float)
    N, D = U.shape
    basis = U
    if zero_mean:
        basis, _ = np.linalg.qr(np.column_stack([np.ones(N), U]))
    if basis.shape[1] >= N:
        raise InvalidInputError("null space of U is empty", {"n": N, "d": D, "zero_mean": zero_mean})

    gen = _generator(rng)
    for _ in range(MAX_ATTEMPTS):
        b = gen.standard_normal(N)
        for _ in range(2):
            b -= basis @ (basis.T @ b)
        norm = np.linalg.norm(b)
        if norm >= DEGENERATE_NORM:
            return b / norm
    raise DegenerateDrawError("sample_null_residual", MAX_ATTEMPTS)


def degenerate_U(N: int, N0: int, D: int, rng: RngLike) -> np.ndarray:
    """Zero-mean orthonormal N0 x D block padded with N - N0 zero rows."""
    if not (D < N0 - 1 and N0 <= N):
        raise InvalidInputError("need D < N0 - 1 and N0 <= N", {"n": N, "n0": N0, "d": D})
    U = np.zeros((N, D))
    U[:N0] = sample_zero_mean_orthonormal(N0, D, rng)
    return U


def spectrum_family(alpha: float, D: int) -> np.ndarray:
    """S_d = exp(alpha d) / exp(alpha D), d = 1..D."""
    if alpha < 0 or not np.isfinite(alpha):
        raise InvalidInputError("alpha must be finite and non-negative", {"alpha": alpha})
    d = np.arange(1, D + 1)
    return np.exp(alpha * (d - D))


def generate_responses(U: np.ndarray, S: np.ndarray, spec: LinearModelSpec, rng: RngLike,
                       recenter: bool = False) -> np.ndarray:
    """Y = U diag(S) theta* + E with E ~ N(0, sigma2 I)."""
    U = np.asarray(U, dtype=float)
    S = np.asarray(S, dtype=float)
    if U.shape[1] != spec.D or S.shape != (spec.D,):
        raise InvalidInputError("U, S and theta* dimensions disagree",
                                {"u": list(U.shape), "s": list(S.shape), "d": spec.D})
    noise = np.sqrt(spec.sigma2) * _generator(rng).standard_normal(U.shape[0])
    Y = U @ (S * spec.theta_star) + noise
    if recenter:
        Y = Y - Y.mean()
    return Y


class SubgaussianFamily(str, Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"


def sample_subgaussian_X(N: int, D: int, family: Union[SubgaussianFamily, str],
                         rng: RngLike) -> np.ndarray:
    """N x D matrix of i.i.d. unit-variance entries."""
    try:
        family = SubgaussianFamily(family)
    except ValueError:
        raise InvalidInputError(f"Unknown sub-Gaussian family: {family}")
    gen = _generator(rng)
    if family is SubgaussianFamily.GAUSSIAN:
        return gen.standard_normal((N, D))
    if family is SubgaussianFamily.RADEMACHER:
        return gen.integers(0, 2, size=(N, D)).astype(float) * 2.0 - 1.0
    return gen.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(N, D))
