from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from ridge_loocv.services.dataset import SvdForm
from tests.factories import helmert, make_problem


@pytest.fixture
def rng():
    """Seeded numpy generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def random_problem():
    """Moderately non-flat problem with N = 30, D = 3."""
    return make_problem(seed=7, N=30, D=3, alpha=0.5)


@pytest.fixture
def flat_problem():
    """Unit-spectrum problem with N = 40, D = 3."""
    return make_problem(seed=11, N=40, D=3, alpha=0.0)


@pytest.fixture
def raw_problem(rng):
    """Unstandardized covariates and responses wrapped for brute-force LOOCV."""
    X = rng.standard_normal((25, 4)) * np.array([1.0, 2.0, 0.5, 3.0])
    Y = X @ np.array([0.5, -1.0, 2.0, 0.1]) + rng.standard_normal(25)
    return SimpleNamespace(X=X, Y=Y)


@pytest.fixture
def two_minima_problem():
    """Six-point problem whose LOOCV curve has an interior minimum and a tail minimum.

    The weak direction (s = 0.01) carries signal and gives a minimum near
    lambda = 8e-5; the strong direction carries none, so after a maximum
    near lambda = 0.02 the curve falls to its tail limit ||Y||^2 = 1.75.
    """
    H = helmert(6)
    U = np.column_stack([H[:, 4], H[:, 0]])
    S = np.array([1.0, 0.01])
    Y = H[:, 0] + 0.5 * H[:, 1] + 0.5 * H[:, 2] + 0.5 * H[:, 3]
    return SvdForm.from_factors(U, S), Y


@pytest.fixture
def noise_only_problem():
    """Responses orthogonal to U: L decreases monotonically to its tail."""
    H = helmert(8)
    U = H[:, :3]
    Y = 0.8 * H[:, 3] - 0.3 * H[:, 5] + 0.5 * H[:, 6]
    return SvdForm.from_factors(U), Y


@pytest.fixture
def signal_only_problem():
    """Unit spectrum with responses in the column space: L increases from L(0) = 0."""
    H = helmert(8)
    U = H[:, 2:5]
    Y = U @ np.array([1.0, -0.5, 0.25])
    return SvdForm.from_factors(U), Y


@pytest.fixture
def csv_dataset(tmp_path, rng):
    """CSV file with three numeric covariates, one categorical column and a target."""
    N = 40
    frame = pd.DataFrame({
        "alcohol": rng.normal(10.0, 1.0, N),
        "acidity": rng.normal(3.0, 0.3, N),
        "sugar": rng.gamma(2.0, 1.0, N),
        "colour": rng.choice(["red", "rose", "white"], N),
    })
    frame["quality"] = 0.4 * frame["alcohol"] - frame["acidity"] + rng.normal(0.0, 0.5, N)
    # every level present regardless of the draw
    frame.loc[:2, "colour"] = ["red", "rose", "white"]
    path = tmp_path / "wine.csv"
    frame.to_csv(path, index=False)
    return path
